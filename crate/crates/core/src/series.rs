//! Truncated power series over the coefficient field, the component
//! decomposition of (k' ⊗ F)[[u]], the Frobenius and Galois twists, and
//! Smith-type elementary divisors over F[[u]] at finite precision.

use crate::context::ArithmeticContext;
use crate::error::{BkError, Result};
use crate::field::{Field, FqElem};

/// A polynomial truncated at u^N: exactly `prec` coefficients, low first.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TruncPoly {
    pub coeffs: Vec<FqElem>,
}

impl std::fmt::Debug for TruncPoly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Poly{:?}", self.coeffs)
    }
}

impl TruncPoly {
    pub fn zero(f: &Field, prec: usize) -> TruncPoly {
        TruncPoly {
            coeffs: vec![f.zero(); prec],
        }
    }

    pub fn constant(f: &Field, c: FqElem, prec: usize) -> TruncPoly {
        let mut coeffs = vec![f.zero(); prec];
        coeffs[0] = c;
        TruncPoly { coeffs }
    }

    /// c * u^k truncated at the precision.
    pub fn monomial(f: &Field, c: FqElem, k: usize, prec: usize) -> TruncPoly {
        let mut coeffs = vec![f.zero(); prec];
        if k < prec {
            coeffs[k] = c;
        }
        TruncPoly { coeffs }
    }

    pub fn prec(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self, f: &Field) -> bool {
        self.coeffs.iter().all(|c| f.is_zero(c))
    }

    /// u-adic valuation, or None when zero at this precision.
    pub fn valuation(&self, f: &Field) -> Option<usize> {
        self.coeffs.iter().position(|c| !f.is_zero(c))
    }

    pub fn is_unit(&self, f: &Field) -> bool {
        !f.is_zero(&self.coeffs[0])
    }

    pub fn add(&self, f: &Field, other: &TruncPoly) -> TruncPoly {
        debug_assert_eq!(self.prec(), other.prec());
        TruncPoly {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| f.add(a, b))
                .collect(),
        }
    }

    pub fn sub(&self, f: &Field, other: &TruncPoly) -> TruncPoly {
        debug_assert_eq!(self.prec(), other.prec());
        TruncPoly {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| f.sub(a, b))
                .collect(),
        }
    }

    pub fn neg(&self, f: &Field) -> TruncPoly {
        TruncPoly {
            coeffs: self.coeffs.iter().map(|a| f.neg(a)).collect(),
        }
    }

    pub fn mul(&self, f: &Field, other: &TruncPoly) -> TruncPoly {
        let n = self.prec();
        let mut coeffs = vec![f.zero(); n];
        for (i, a) in self.coeffs.iter().enumerate() {
            if f.is_zero(a) {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                if i + j >= n {
                    break;
                }
                let t = f.mul(a, b);
                coeffs[i + j] = f.add(&coeffs[i + j], &t);
            }
        }
        TruncPoly { coeffs }
    }

    pub fn scale(&self, f: &Field, s: &FqElem) -> TruncPoly {
        TruncPoly {
            coeffs: self.coeffs.iter().map(|a| f.mul(a, s)).collect(),
        }
    }

    /// Multiplication by u^k (shifts up, truncating).
    pub fn shift_up(&self, f: &Field, k: usize) -> TruncPoly {
        let n = self.prec();
        let mut coeffs = vec![f.zero(); n];
        for i in 0..n.saturating_sub(k) {
            coeffs[i + k] = self.coeffs[i].clone();
        }
        TruncPoly { coeffs }
    }

    /// Exact division by u^k; errors if any low coefficient is nonzero.
    pub fn shift_down_exact(&self, f: &Field, k: usize) -> Result<TruncPoly> {
        if self.coeffs[..k.min(self.prec())].iter().any(|c| !f.is_zero(c)) {
            return Err(BkError::Precondition(format!(
                "series is not divisible by u^{k}"
            )));
        }
        let n = self.prec();
        let mut coeffs = vec![f.zero(); n];
        for i in k..n {
            coeffs[i - k] = self.coeffs[i].clone();
        }
        Ok(TruncPoly { coeffs })
    }

    /// Inverse of a unit at the working precision.
    pub fn invert_unit(&self, f: &Field) -> Result<TruncPoly> {
        if !self.is_unit(f) {
            return Err(BkError::Precondition("series is not a unit".into()));
        }
        let n = self.prec();
        let c0inv = f.inv(&self.coeffs[0])?;
        let mut out = vec![f.zero(); n];
        out[0] = c0inv.clone();
        for k in 1..n {
            // coefficient k of self * out must vanish
            let mut acc = f.zero();
            for i in 1..=k {
                acc = f.add(&acc, &f.mul(&self.coeffs[i], &out[k - i]));
            }
            out[k] = f.neg(&f.mul(&c0inv, &acc));
        }
        Ok(TruncPoly { coeffs: out })
    }

    /// Substitution u -> u^p (Frobenius on the variable), same precision.
    pub fn subst_power(&self, f: &Field, power: usize) -> TruncPoly {
        let n = self.prec();
        let mut coeffs = vec![f.zero(); n];
        for (i, c) in self.coeffs.iter().enumerate() {
            if f.is_zero(c) {
                continue;
            }
            let j = i.checked_mul(power).unwrap_or(n);
            if j < n {
                coeffs[j] = c.clone();
            }
        }
        TruncPoly { coeffs }
    }

    /// Substitution u -> s*u for a scalar s.
    pub fn subst_scale(&self, f: &Field, s: &FqElem) -> TruncPoly {
        let mut coeffs = Vec::with_capacity(self.prec());
        let mut pw = f.one();
        for c in &self.coeffs {
            coeffs.push(f.mul(c, &pw));
            pw = f.mul(&pw, s);
        }
        TruncPoly { coeffs }
    }

    pub fn with_prec(&self, f: &Field, prec: usize) -> TruncPoly {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(prec, f.zero());
        TruncPoly { coeffs }
    }

    pub fn eval_zero(&self) -> FqElem {
        self.coeffs[0].clone()
    }

    pub fn map_coeffs(&self, map: impl Fn(&FqElem) -> FqElem) -> TruncPoly {
        TruncPoly {
            coeffs: self.coeffs.iter().map(map).collect(),
        }
    }
}

/// An element of (k' ⊗ F)[[u]] / u^N in component form: one truncated
/// polynomial per embedding component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeriesElement {
    pub prec: usize,
    pub components: Vec<TruncPoly>,
}

impl SeriesElement {
    pub fn zero(ctx: &ArithmeticContext, prec: usize) -> SeriesElement {
        SeriesElement {
            prec,
            components: vec![TruncPoly::zero(&ctx.field, prec); ctx.f_prime],
        }
    }

    pub fn one(ctx: &ArithmeticContext, prec: usize) -> SeriesElement {
        SeriesElement {
            prec,
            components: vec![
                TruncPoly::constant(&ctx.field, ctx.field.one(), prec);
                ctx.f_prime
            ],
        }
    }

    /// The variable u (in every component).
    pub fn u(ctx: &ArithmeticContext, prec: usize) -> SeriesElement {
        SeriesElement {
            prec,
            components: vec![
                TruncPoly::monomial(&ctx.field, ctx.field.one(), 1, prec);
                ctx.f_prime
            ],
        }
    }

    pub fn add(&self, ctx: &ArithmeticContext, other: &SeriesElement) -> SeriesElement {
        SeriesElement {
            prec: self.prec,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.add(&ctx.field, b))
                .collect(),
        }
    }

    pub fn mul(&self, ctx: &ArithmeticContext, other: &SeriesElement) -> SeriesElement {
        SeriesElement {
            prec: self.prec,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.mul(&ctx.field, b))
                .collect(),
        }
    }

    pub fn is_unit(&self, ctx: &ArithmeticContext) -> bool {
        self.components.iter().all(|c| c.is_unit(&ctx.field))
    }
}

/// phi = phi_{W(k')} ⊗ id: components shift by one, u goes to u^p.
pub fn frobenius_twist(ctx: &ArithmeticContext, x: &SeriesElement) -> SeriesElement {
    let fp = ctx.f_prime;
    let components = (0..fp)
        .map(|i| {
            let src = &x.components[(i + fp - 1) % fp];
            src.subst_power(&ctx.field, ctx.p as usize)
        })
        .collect();
    SeriesElement {
        prec: x.prec,
        components,
    }
}

/// The inertia generator: component i picks up zeta_i^m on the u^m
/// coefficient, no component shift.
pub fn gamma_twist(ctx: &ArithmeticContext, x: &SeriesElement) -> SeriesElement {
    let components = x
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| c.subst_scale(&ctx.field, &ctx.zeta_comp[i]))
        .collect();
    SeriesElement {
        prec: x.prec,
        components,
    }
}

/// The cuspidal element c = phi^f: components shift by f, u fixed.
pub fn c_twist(ctx: &ArithmeticContext, x: &SeriesElement) -> Result<SeriesElement> {
    if ctx.flavor != crate::context::Flavor::Cuspidal {
        return Err(BkError::Precondition(
            "c-twist requires a cuspidal context".into(),
        ));
    }
    let fp = ctx.f_prime;
    let components = (0..fp)
        .map(|i| x.components[(i + fp - ctx.f) % fp].clone())
        .collect();
    Ok(SeriesElement {
        prec: x.prec,
        components,
    })
}

/// A d x d matrix of truncated polynomials attached to one component index.
#[derive(Clone, PartialEq, Eq)]
pub struct SeriesMatrix {
    pub dim: usize,
    pub prec: usize,
    /// Row-major entries; columns are images of basis vectors.
    pub entries: Vec<TruncPoly>,
}

impl std::fmt::Debug for SeriesMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "SeriesMatrix(dim={}, prec={})", self.dim, self.prec)?;
        for r in 0..self.dim {
            writeln!(f, "  {:?}", &self.entries[r * self.dim..(r + 1) * self.dim])?;
        }
        Ok(())
    }
}

impl SeriesMatrix {
    pub fn zero(f: &Field, dim: usize, prec: usize) -> SeriesMatrix {
        SeriesMatrix {
            dim,
            prec,
            entries: vec![TruncPoly::zero(f, prec); dim * dim],
        }
    }

    pub fn identity(f: &Field, dim: usize, prec: usize) -> SeriesMatrix {
        let mut m = SeriesMatrix::zero(f, dim, prec);
        for i in 0..dim {
            *m.at_mut(i, i) = TruncPoly::constant(f, f.one(), prec);
        }
        m
    }

    pub fn from_entries(dim: usize, prec: usize, entries: Vec<TruncPoly>) -> SeriesMatrix {
        assert_eq!(entries.len(), dim * dim);
        SeriesMatrix { dim, prec, entries }
    }

    pub fn at(&self, r: usize, c: usize) -> &TruncPoly {
        &self.entries[r * self.dim + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut TruncPoly {
        &mut self.entries[r * self.dim + c]
    }

    pub fn mul(&self, f: &Field, other: &SeriesMatrix) -> SeriesMatrix {
        debug_assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut out = SeriesMatrix::zero(f, d, self.prec);
        for i in 0..d {
            for k in 0..d {
                let a = self.at(i, k);
                if a.is_zero(f) {
                    continue;
                }
                for j in 0..d {
                    let t = a.mul(f, other.at(k, j));
                    *out.at_mut(i, j) = out.at(i, j).add(f, &t);
                }
            }
        }
        out
    }

    pub fn add(&self, f: &Field, other: &SeriesMatrix) -> SeriesMatrix {
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.add(f, b))
            .collect();
        SeriesMatrix {
            dim: self.dim,
            prec: self.prec,
            entries,
        }
    }

    pub fn sub(&self, f: &Field, other: &SeriesMatrix) -> SeriesMatrix {
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.sub(f, b))
            .collect();
        SeriesMatrix {
            dim: self.dim,
            prec: self.prec,
            entries,
        }
    }

    pub fn is_zero(&self, f: &Field) -> bool {
        self.entries.iter().all(|e| e.is_zero(f))
    }

    /// Entry-wise substitution u -> u^p.
    pub fn subst_power(&self, f: &Field, power: usize) -> SeriesMatrix {
        self.map(|e| e.subst_power(f, power))
    }

    /// Entry-wise substitution u -> s*u.
    pub fn subst_scale(&self, f: &Field, s: &FqElem) -> SeriesMatrix {
        self.map(|e| e.subst_scale(f, s))
    }

    pub fn map(&self, map: impl Fn(&TruncPoly) -> TruncPoly) -> SeriesMatrix {
        SeriesMatrix {
            dim: self.dim,
            prec: self.prec,
            entries: self.entries.iter().map(map).collect(),
        }
    }

    pub fn with_prec(&self, f: &Field, prec: usize) -> SeriesMatrix {
        let m = self.map(|e| e.with_prec(f, prec));
        SeriesMatrix { prec, ..m }
    }

    /// Constant term as a plain matrix over F.
    pub fn eval_zero(&self, f: &Field) -> crate::linalg::FMatrix {
        let mut out = crate::linalg::FMatrix::zero(f, self.dim, self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                *out.at_mut(r, c) = self.at(r, c).eval_zero();
            }
        }
        out
    }

    /// Determinant at the working precision (Laplace over the small dims used here).
    pub fn det(&self, f: &Field) -> TruncPoly {
        match self.dim {
            0 => TruncPoly::constant(f, f.one(), self.prec),
            1 => self.at(0, 0).clone(),
            2 => {
                let ad = self.at(0, 0).mul(f, self.at(1, 1));
                let bc = self.at(0, 1).mul(f, self.at(1, 0));
                ad.sub(f, &bc)
            }
            _ => {
                // cofactor expansion along the first row
                let mut acc = TruncPoly::zero(f, self.prec);
                for c in 0..self.dim {
                    let minor = self.minor(f, 0, c);
                    let term = self.at(0, c).mul(f, &minor.det(f));
                    if c % 2 == 0 {
                        acc = acc.add(f, &term);
                    } else {
                        acc = acc.sub(f, &term);
                    }
                }
                acc
            }
        }
    }

    fn minor(&self, _f: &Field, row: usize, col: usize) -> SeriesMatrix {
        let d = self.dim;
        let mut entries = Vec::with_capacity((d - 1) * (d - 1));
        for r in 0..d {
            if r == row {
                continue;
            }
            for c in 0..d {
                if c == col {
                    continue;
                }
                entries.push(self.at(r, c).clone());
            }
        }
        SeriesMatrix {
            dim: d - 1,
            prec: self.prec,
            entries,
        }
    }

    /// Whether the matrix is invertible over F[[u]] at this precision.
    pub fn is_unit(&self, f: &Field) -> bool {
        self.eval_zero(f).inverse(f).is_some()
    }

    /// Inverse of a unit matrix at the working precision.
    pub fn invert_unit(&self, f: &Field) -> Result<SeriesMatrix> {
        let det = self.det(f);
        let det_inv = det.invert_unit(f)?;
        Ok(self.adjugate(f).map(|e| e.mul(f, &det_inv)))
    }

    /// Solves self * X = u^k * Id exactly; errors when any entry of the
    /// solution would have a pole (i.e. u^k Id is not in the column span).
    pub fn solve_u_power(&self, f: &Field, k: usize) -> Result<SeriesMatrix> {
        let det = self.det(f);
        let v = det.valuation(f).ok_or_else(|| {
            BkError::Precondition("matrix is singular at this precision".into())
        })?;
        let unit = det.shift_down_exact(f, v)?;
        let unit_inv = unit.invert_unit(f)?;
        // X = adj(self) * u^k / (u^v * unit), entry by entry
        let adj = self.adjugate(f);
        let mut out = SeriesMatrix::zero(f, self.dim, self.prec);
        for (i, e) in adj.entries.iter().enumerate() {
            let scaled = e.mul(f, &unit_inv);
            out.entries[i] = if v <= k {
                scaled.shift_up(f, k - v)
            } else {
                scaled.shift_down_exact(f, v - k).map_err(|_| {
                    BkError::Precondition(format!(
                        "pole detected solving M*X = u^{k}: cokernel not killed by u^{k}"
                    ))
                })?
            };
        }
        Ok(out)
    }

    fn adjugate(&self, f: &Field) -> SeriesMatrix {
        let d = self.dim;
        let mut out = SeriesMatrix::zero(f, d, self.prec);
        for r in 0..d {
            for c in 0..d {
                let m = self.minor(f, r, c).det(f);
                let m = if (r + c) % 2 == 0 { m } else { m.neg(f) };
                *out.at_mut(c, r) = m; // transpose of cofactors
            }
        }
        out
    }
}

/// Result of elementary-divisor computation over F[[u]] at finite precision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ElementaryDivisors {
    /// Sorted valuations v_1 <= ... <= v_d.
    Divisors(Vec<usize>),
    /// det == 0 at the working precision: singular or insufficient precision.
    SingularAtPrecision,
}

/// Smith reduction over the DVR F[[u]] at precision N. Pivots on the entry of
/// minimal valuation, lexicographic (row, col) tie-break.
pub fn elementary_divisors(f: &Field, m: &SeriesMatrix) -> ElementaryDivisors {
    let d = m.dim;
    let mut a = m.clone();
    let mut divisors = Vec::with_capacity(d);
    let mut start = 0usize;
    while start < d {
        // locate minimal-valuation entry in the trailing block
        let mut best: Option<(usize, usize, usize)> = None;
        for r in start..d {
            for c in start..d {
                if let Some(v) = a.at(r, c).valuation(f) {
                    let better = match best {
                        None => true,
                        Some((bv, _, _)) => v < bv,
                    };
                    if better {
                        best = Some((v, r, c));
                    }
                }
            }
        }
        let Some((v, pr, pc)) = best else {
            return ElementaryDivisors::SingularAtPrecision;
        };
        // move pivot to (start, start)
        if pr != start {
            for c in 0..d {
                let tmp = a.at(start, c).clone();
                *a.at_mut(start, c) = a.at(pr, c).clone();
                *a.at_mut(pr, c) = tmp;
            }
        }
        if pc != start {
            for r in 0..d {
                let tmp = a.at(r, start).clone();
                *a.at_mut(r, start) = a.at(r, pc).clone();
                *a.at_mut(r, pc) = tmp;
            }
        }
        // pivot = u^v * unit; clear the row and column
        let unit = a
            .at(start, start)
            .shift_down_exact(f, v)
            .expect("pivot valuation");
        let unit_inv = unit.invert_unit(f).expect("pivot unit");
        for r in start + 1..d {
            let e = a.at(r, start).clone();
            if e.is_zero(f) {
                continue;
            }
            // e = u^(ve) * unit_e with ve >= v; ratio = e / pivot
            let ratio = e
                .shift_down_exact(f, v)
                .expect("minimal pivot divides")
                .mul(f, &unit_inv);
            for c in start..d {
                let t = ratio.mul(f, a.at(start, c));
                *a.at_mut(r, c) = a.at(r, c).sub(f, &t);
            }
        }
        for c in start + 1..d {
            let e = a.at(start, c).clone();
            if e.is_zero(f) {
                continue;
            }
            let ratio = e
                .shift_down_exact(f, v)
                .expect("minimal pivot divides")
                .mul(f, &unit_inv);
            for r in start..d {
                let t = ratio.mul(f, a.at(r, start));
                *a.at_mut(r, c) = a.at(r, c).sub(f, &t);
            }
        }
        divisors.push(v);
        start += 1;
    }
    divisors.sort_unstable();
    ElementaryDivisors::Divisors(divisors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{build_context, FieldSpec, Flavor};
    use proptest::prelude::*;

    fn c1() -> crate::context::Ctx {
        build_context(3, 1, 1, Flavor::PrincipalSeries, FieldSpec::degree(1), None, None).unwrap()
    }

    fn c2() -> crate::context::Ctx {
        build_context(3, 2, 1, Flavor::PrincipalSeries, FieldSpec::degree(2), None, None).unwrap()
    }

    fn c3() -> crate::context::Ctx {
        build_context(3, 1, 1, Flavor::Cuspidal, FieldSpec::degree(2), None, None).unwrap()
    }

    #[test]
    fn frobenius_examples() {
        let ctx = c1();
        let u = SeriesElement::u(&ctx, 6);
        let fu = frobenius_twist(&ctx, &u);
        assert_eq!(
            fu.components[0],
            TruncPoly::monomial(&ctx.field, ctx.field.one(), 3, 6)
        );

        let ctx = c2();
        let mut x = SeriesElement::zero(&ctx, 6);
        x.components[0] = TruncPoly::monomial(&ctx.field, ctx.field.one(), 1, 6);
        let fx = frobenius_twist(&ctx, &x);
        assert!(fx.components[0].is_zero(&ctx.field));
        assert_eq!(
            fx.components[1],
            TruncPoly::monomial(&ctx.field, ctx.field.one(), 3, 6)
        );

        let one = SeriesElement::one(&ctx, 6);
        assert_eq!(frobenius_twist(&ctx, &one), one);
    }

    #[test]
    fn gamma_examples() {
        let ctx = c1();
        let u = SeriesElement::u(&ctx, 6);
        let gu = gamma_twist(&ctx, &u);
        assert_eq!(
            gu.components[0],
            TruncPoly::monomial(&ctx.field, ctx.field.from_int(-1), 1, 6)
        );
        let u2 = u.mul(&ctx, &u);
        assert_eq!(gamma_twist(&ctx, &u2), u2);
    }

    #[test]
    fn c_twist_examples() {
        let ctx = c3();
        let mut x = SeriesElement::zero(&ctx, 6);
        x.components[0] = TruncPoly::constant(&ctx.field, ctx.field.one(), 6);
        let cx = c_twist(&ctx, &x).unwrap();
        assert!(cx.components[0].is_zero(&ctx.field));
        assert_eq!(
            cx.components[1],
            TruncPoly::constant(&ctx.field, ctx.field.one(), 6)
        );
        // non-cuspidal contexts reject the twist
        assert!(c_twist(&c1(), &SeriesElement::one(&c1(), 6)).is_err());
    }

    #[test]
    fn gamma_order_and_c_relations() {
        let ctx = c3();
        let mut x = SeriesElement::zero(&ctx, 8);
        x.components[0] = TruncPoly {
            coeffs: (0..8).map(|i| ctx.field.from_int(i as i64 % 3)).collect(),
        };
        x.components[1] = TruncPoly::monomial(&ctx.field, ctx.field.gen(), 2, 8);
        // gamma^e_k = id
        let mut y = x.clone();
        for _ in 0..ctx.e_k {
            y = gamma_twist(&ctx, &y);
        }
        assert_eq!(y, x);
        // c^2 = id
        let cc = c_twist(&ctx, &c_twist(&ctx, &x).unwrap()).unwrap();
        assert_eq!(cc, x);
        // c . gamma . c = gamma^(p^f)
        let lhs = c_twist(&ctx, &gamma_twist(&ctx, &c_twist(&ctx, &x).unwrap())).unwrap();
        let mut rhs = x.clone();
        for _ in 0..ctx.p.pow(ctx.f as u32) {
            rhs = gamma_twist(&ctx, &rhs);
        }
        assert_eq!(lhs, rhs);
    }

    fn poly(ctx: &crate::context::Ctx, coeffs: &[i64], prec: usize) -> TruncPoly {
        let mut c: Vec<FqElem> = coeffs.iter().map(|&x| ctx.field.from_int(x)).collect();
        c.resize(prec, ctx.field.zero());
        TruncPoly { coeffs: c }
    }

    #[test]
    fn elementary_divisor_examples() {
        let ctx = c1();
        let f = &ctx.field;
        let diag = SeriesMatrix::from_entries(
            2,
            4,
            vec![
                poly(&ctx, &[1], 4),
                poly(&ctx, &[], 4),
                poly(&ctx, &[], 4),
                poly(&ctx, &[0, 0, 1], 4),
            ],
        );
        assert_eq!(
            elementary_divisors(f, &diag),
            ElementaryDivisors::Divisors(vec![0, 2])
        );

        let tri = SeriesMatrix::from_entries(
            2,
            4,
            vec![
                poly(&ctx, &[0, 1], 4),
                poly(&ctx, &[1], 4),
                poly(&ctx, &[], 4),
                poly(&ctx, &[0, 1], 4),
            ],
        );
        assert_eq!(
            elementary_divisors(f, &tri),
            ElementaryDivisors::Divisors(vec![0, 2])
        );

        let zero = SeriesMatrix::zero(f, 2, 4);
        assert_eq!(
            elementary_divisors(f, &zero),
            ElementaryDivisors::SingularAtPrecision
        );
    }

    /// Independent oracle: determinantal divisors. v_k = min valuation over
    /// all k x k minors; divisor_k = v_k - v_(k-1).
    fn divisors_by_minors(f: &Field, m: &SeriesMatrix) -> Option<Vec<usize>> {
        let d = m.dim;
        let mut prev = 0usize;
        let mut out = Vec::new();
        for k in 1..=d {
            let mut best: Option<usize> = None;
            // all k-subsets of rows and columns
            let rows = subsets(d, k);
            for rs in &rows {
                for cs in &rows {
                    let mut sub = SeriesMatrix::zero(f, k, m.prec);
                    for (i, &r) in rs.iter().enumerate() {
                        for (j, &c) in cs.iter().enumerate() {
                            *sub.at_mut(i, j) = m.at(r, c).clone();
                        }
                    }
                    if let Some(v) = sub.det(f).valuation(f) {
                        best = Some(best.map_or(v, |b: usize| b.min(v)));
                    }
                }
            }
            let vk = best?;
            out.push(vk - prev);
            prev = vk;
        }
        out.sort_unstable();
        Some(out)
    }

    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                rec(i + 1, n, k, cur, out);
                cur.pop();
            }
        }
        rec(0, n, k, &mut cur, &mut out);
        out
    }

    proptest! {
        #[test]
        fn twists_are_ring_homs(a in prop::collection::vec(0i64..3, 6),
                                b in prop::collection::vec(0i64..3, 6)) {
            let ctx = c2();
            let mut x = SeriesElement::zero(&ctx, 6);
            let mut y = SeriesElement::zero(&ctx, 6);
            x.components[0] = poly(&ctx, &a, 6);
            x.components[1] = poly(&ctx, &b, 6);
            y.components[0] = poly(&ctx, &b, 6);
            y.components[1] = poly(&ctx, &a, 6);
            for twist in [frobenius_twist, gamma_twist] {
                let lhs = twist(&ctx, &x.mul(&ctx, &y));
                let rhs = twist(&ctx, &x).mul(&ctx, &twist(&ctx, &y));
                prop_assert_eq!(lhs, rhs);
                let lhs = twist(&ctx, &x.add(&ctx, &y));
                let rhs = twist(&ctx, &x).add(&ctx, &twist(&ctx, &y));
                prop_assert_eq!(lhs, rhs);
            }
        }

        #[test]
        fn divisors_match_minor_oracle(entries in prop::collection::vec(0i64..3, 4 * 5)) {
            let ctx = c1();
            let f = &ctx.field;
            let mut m = SeriesMatrix::zero(f, 2, 5);
            for r in 0..2 {
                for c in 0..2 {
                    let coeffs = &entries[(r * 2 + c) * 5..(r * 2 + c + 1) * 5];
                    *m.at_mut(r, c) = poly(&ctx, coeffs, 5);
                }
            }
            let by_minors = divisors_by_minors(f, &m);
            match elementary_divisors(f, &m) {
                ElementaryDivisors::Divisors(v) => {
                    prop_assert_eq!(Some(v.clone()), by_minors);
                    // sum of divisors = det valuation
                    let dv = m.det(f).valuation(f).unwrap();
                    prop_assert_eq!(v.iter().sum::<usize>(), dv);
                }
                ElementaryDivisors::SingularAtPrecision => {
                    prop_assert!(by_minors.is_none() || m.det(f).valuation(f).is_none());
                }
            }
        }

        #[test]
        fn unit_inversion(c0 in 1i64..3, rest in prop::collection::vec(0i64..3, 5)) {
            let ctx = c1();
            let f = &ctx.field;
            let mut coeffs = vec![c0];
            coeffs.extend(&rest);
            let p = poly(&ctx, &coeffs, 6);
            let inv = p.invert_unit(f).unwrap();
            let prod = p.mul(f, &inv);
            prop_assert_eq!(prod, TruncPoly::constant(f, f.one(), 6));
        }
    }

    #[test]
    fn solve_u_power_works() {
        let ctx = c1();
        let f = &ctx.field;
        // diag(1, u^2): X with M X = u^2 Id is diag(u^2, 1)
        let m = SeriesMatrix::from_entries(
            2,
            6,
            vec![
                poly(&ctx, &[1], 6),
                poly(&ctx, &[], 6),
                poly(&ctx, &[], 6),
                poly(&ctx, &[0, 0, 1], 6),
            ],
        );
        let x = m.solve_u_power(f, 2).unwrap();
        let prod = m.mul(f, &x);
        let mut expect = SeriesMatrix::zero(f, 2, 6);
        *expect.at_mut(0, 0) = poly(&ctx, &[0, 0, 1], 6);
        *expect.at_mut(1, 1) = poly(&ctx, &[0, 0, 1], 6);
        assert_eq!(prod, expect);
        // height violation: diag(1, u^3) cannot divide u^2
        let m3 = SeriesMatrix::from_entries(
            2,
            6,
            vec![
                poly(&ctx, &[1], 6),
                poly(&ctx, &[], 6),
                poly(&ctx, &[], 6),
                poly(&ctx, &[0, 0, 0, 1], 6),
            ],
        );
        assert!(m3.solve_u_power(f, 2).is_err());
    }
}
