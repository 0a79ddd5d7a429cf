//! Dieudonne modules of height-1 Breuil-Kisin modules: D = M/uM with F
//! induced by Frobenius and V from factoring multiplication by E(u), the
//! eta-isotypic line coordinates (X_j, Y_j), and the cuspidal holonomy alpha.

use crate::bk::BKModule;
use crate::context::{dlog_zeta, Ctx, Flavor};
use crate::error::{BkError, Result};
use crate::field::{Field, FqElem};
use crate::linalg::{self, FMatrix};

/// Component-indexed Dieudonne module with Galois action.
#[derive(Clone, Debug)]
pub struct DieudonneModule {
    pub ctx: Ctx,
    pub d: usize,
    /// F_j : D_j -> D_{j+1}.
    pub f_mats: Vec<FMatrix>,
    /// V_j : D_{j+1} -> D_j.
    pub v_mats: Vec<FMatrix>,
    /// Action of the inertia generator on D_j.
    pub g_mats: Vec<FMatrix>,
    /// Cuspidal action of phi^f: C_j : D_j -> D_{j+f}.
    pub c_mats: Option<Vec<FMatrix>>,
}

/// Scalars of F and V on the eta-lines in canonical bases, with the
/// cuspidal holonomy alpha when it is determined.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DieudonneCoordinates {
    pub eta: u64,
    pub x: Vec<FqElem>,
    pub y: Vec<FqElem>,
    pub alpha: Option<Alpha>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Alpha {
    Unit(FqElem),
    /// Some transport leg had X_j = Y_j = 0; no canonical value mod p.
    Indeterminate,
}

/// sigma_j applied to an element of the subfield k': repeated Frobenius,
/// sigma_j = sigma_0 . (x -> x^(p^(f'-j))).
fn sigma_embed(ctx: &crate::context::ArithmeticContext, j: usize, a: &FqElem) -> FqElem {
    let f = &ctx.field;
    let steps = (ctx.f_prime - (j % ctx.f_prime)) % ctx.f_prime;
    let mut out = a.clone();
    for _ in 0..steps {
        out = f.frobenius(&out);
    }
    out
}

/// Extracts the Dieudonne module of a validated height-1 module:
/// F_j = Phi_{j+1}(0), V_j = sigma_{j+1}(cbar)^{-1} X(0) for the unique X
/// with Phi_{j+1} X = u^e' Id, G_j = Gamma_j(0).
pub fn dieudonne_of(m: &BKModule) -> Result<DieudonneModule> {
    let ctx = &m.ctx;
    let f = &ctx.field;
    let fp = ctx.f_prime;
    let mut f_mats = Vec::with_capacity(fp);
    let mut v_mats = Vec::with_capacity(fp);
    for j in 0..fp {
        let jn = (j + 1) % fp;
        f_mats.push(m.phi[jn].eval_zero(f));
        let x = m.phi[jn].solve_u_power(f, ctx.e_prime).map_err(|e| {
            BkError::Precondition(format!("pole in V at component {jn} (height violation): {e}"))
        })?;
        let scale = f.inv(&sigma_embed(ctx, jn, &ctx.cbar))?;
        v_mats.push(x.eval_zero(f).scale(f, &scale));
    }
    let g_mats = m.gamma.iter().map(|g| g.eval_zero(f)).collect();
    let c_mats = m
        .c_mats
        .as_ref()
        .map(|cs| cs.iter().map(|c| c.eval_zero(f)).collect());
    Ok(DieudonneModule {
        ctx: m.ctx.clone(),
        d: m.d,
        f_mats,
        v_mats,
        g_mats,
        c_mats,
    })
}

impl DieudonneModule {
    /// (rank F_j, rank V_j) per component; a phi-conjugacy invariant.
    pub fn rank_profile(&self, f: &Field) -> Vec<(usize, usize)> {
        self.f_mats
            .iter()
            .zip(&self.v_mats)
            .map(|(fm, vm)| {
                (
                    rank_of(f, fm),
                    rank_of(f, vm),
                )
            })
            .collect()
    }

    /// Checks FV = VF = 0, the index-shifted commutation with the Galois
    /// action, and that G_j has order dividing e_k.
    pub fn check_relations(&self) -> Result<()> {
        let ctx = &self.ctx;
        let f = &ctx.field;
        let fp = ctx.f_prime;
        for j in 0..fp {
            let fv = self.f_mats[j].mul(f, &self.v_mats[j]);
            let vf = self.v_mats[j].mul(f, &self.f_mats[j]);
            if !is_zero_mat(f, &fv) || !is_zero_mat(f, &vf) {
                return Err(BkError::Precondition(format!(
                    "FV or VF nonzero at component {j}"
                )));
            }
            // F_j G_j = G_{j+1} F_j and V_j G_{j+1} = G_j V_j
            let lhs = self.f_mats[j].mul(f, &self.g_mats[j]);
            let rhs = self.g_mats[(j + 1) % fp].mul(f, &self.f_mats[j]);
            if lhs != rhs {
                return Err(BkError::Precondition(format!(
                    "F-G commutation fails at component {j}"
                )));
            }
            let lhs = self.v_mats[j].mul(f, &self.g_mats[(j + 1) % fp]);
            let rhs = self.g_mats[j].mul(f, &self.v_mats[j]);
            if lhs != rhs {
                return Err(BkError::Precondition(format!(
                    "V-G commutation fails at component {j}"
                )));
            }
            let mut acc = FMatrix::identity(f, self.d);
            for _ in 0..ctx.e_k {
                acc = acc.mul(f, &self.g_mats[j]);
            }
            if acc != FMatrix::identity(f, self.d) {
                return Err(BkError::Precondition(format!(
                    "G order does not divide e_k at component {j}"
                )));
            }
        }
        Ok(())
    }

    /// Eigenvalue multiset of G_j as character exponents, per component.
    pub fn type_exponents(&self) -> Result<Vec<Vec<u64>>> {
        let ctx = &self.ctx;
        let f = &ctx.field;
        let mut out = Vec::with_capacity(self.g_mats.len());
        for g in &self.g_mats {
            let mut exps = Vec::new();
            for n in 0..ctx.e_k {
                let dim = crate::bk::eigenspace_dim(f, g, &f.pow(&ctx.zeta, n));
                for _ in 0..dim {
                    exps.push(n);
                }
            }
            if exps.len() != self.d {
                return Err(BkError::Precondition(
                    "Galois action not semisimple with eigenvalues in mu_(e_k)".into(),
                ));
            }
            out.push(exps);
        }
        Ok(out)
    }
}

fn rank_of(f: &Field, m: &FMatrix) -> usize {
    let rows: Vec<Vec<FqElem>> = (0..m.rows).map(|r| m.row(r).to_vec()).collect();
    linalg::rank(f, rows)
}

fn is_zero_mat(f: &Field, m: &FMatrix) -> bool {
    m.data.iter().all(|c| f.is_zero(c))
}

/// The echelon-normalized eta-eigenvector of G_j (first nonzero coordinate 1).
fn eta_line(f: &Field, g: &FMatrix, lambda: &FqElem) -> Result<Vec<FqElem>> {
    let mut shifted = g.clone();
    for r in 0..g.rows {
        *shifted.at_mut(r, r) = f.sub(shifted.at(r, r), lambda);
    }
    let ker = linalg::kernel_basis(f, &shifted);
    if ker.len() != 1 {
        return Err(BkError::Precondition(format!(
            "eta-eigenspace has dimension {} (expected a line)",
            ker.len()
        )));
    }
    let v = &ker[0];
    let lead = v.iter().position(|c| !f.is_zero(c)).expect("nonzero");
    let inv = f.inv(&v[lead])?;
    Ok(v.iter().map(|c| f.mul(c, &inv)).collect())
}

/// Scalar s with m * v = s * w, where w is echelon-normalized; errors when
/// m * v is not proportional to w.
fn scalar_between(f: &Field, m: &FMatrix, v: &[FqElem], w: &[FqElem]) -> Result<FqElem> {
    let img = m.mul_vec(f, v);
    if img.iter().all(|c| f.is_zero(c)) {
        return Ok(f.zero());
    }
    let lead = w.iter().position(|c| !f.is_zero(c)).expect("nonzero gauge");
    let s = f.mul(&img[lead], &f.inv(&w[lead])?);
    for (a, b) in img.iter().zip(w) {
        if *a != f.mul(&s, b) {
            return Err(BkError::Precondition(
                "image not proportional to the eta-line (input invalid)".into(),
            ));
        }
    }
    Ok(s)
}

/// Extracts the (X_j, Y_j) scalars on the eta-lines, and alpha in the
/// cuspidal case. Requires rank 2 and unmixed non-scalar type containing
/// eta; cuspidal contexts additionally require eta' = eta^(p^f).
pub fn eta_coordinates(dm: &DieudonneModule, eta: u64) -> Result<DieudonneCoordinates> {
    let ctx = &dm.ctx;
    let f = &ctx.field;
    let fp = ctx.f_prime;
    if dm.d != 2 {
        return Err(BkError::Precondition("eta-coordinates require rank 2".into()));
    }
    let eta = eta % ctx.e_k;
    let texps = dm.type_exponents()?;
    let first = &texps[0];
    if texps.iter().any(|t| t != first) {
        return Err(BkError::Precondition("type is mixed".into()));
    }
    if first[0] == first[1] {
        return Err(BkError::Precondition("type is scalar".into()));
    }
    if !first.contains(&eta) {
        return Err(BkError::Precondition(format!(
            "eta = {eta} does not occur in the type {first:?}"
        )));
    }
    let eta_prime = if first[0] == eta { first[1] } else { first[0] };
    if ctx.flavor == Flavor::Cuspidal {
        let pf = {
            let mut acc = 1u64;
            for _ in 0..ctx.f {
                acc = acc * (ctx.p % ctx.e_k) % ctx.e_k;
            }
            acc
        };
        if eta * pf % ctx.e_k != eta_prime {
            return Err(BkError::Precondition(
                "cuspidal coordinates require eta' = eta^(p^f)".into(),
            ));
        }
    }

    let lambda = f.pow(&ctx.zeta, eta);
    let lines: Vec<Vec<FqElem>> = dm
        .g_mats
        .iter()
        .map(|g| eta_line(f, g, &lambda))
        .collect::<Result<_>>()?;

    let coords_len = ctx.f.min(fp);
    let mut x = Vec::with_capacity(coords_len);
    let mut y = Vec::with_capacity(coords_len);
    for j in 0..coords_len {
        let jn = (j + 1) % fp;
        x.push(scalar_between(f, &dm.f_mats[j], &lines[j], &lines[jn])?);
        y.push(scalar_between(f, &dm.v_mats[j], &lines[jn], &lines[j])?);
    }
    for j in 0..coords_len {
        let prod = f.mul(&x[j], &y[j]);
        if !f.is_zero(&prod) {
            return Err(BkError::Precondition(format!(
                "X_{j} Y_{j} != 0 (input not height 1?)"
            )));
        }
    }

    let alpha = if ctx.flavor == Flavor::Cuspidal {
        Some(cuspidal_alpha(dm, &lines, &x, &y)?)
    } else {
        None
    };
    Ok(DieudonneCoordinates { eta, x, y, alpha })
}

/// The holonomy recursion: transport trivializations w_{f+j} of the second
/// half of the eta-lines so that F is given by Y_j and V by X_j; each leg
/// needs X_j != 0 or Y_j != 0 (and a nonzero transporting map), otherwise
/// alpha is indeterminate.
fn cuspidal_alpha(
    dm: &DieudonneModule,
    lines: &[Vec<FqElem>],
    x: &[FqElem],
    y: &[FqElem],
) -> Result<Alpha> {
    let ctx = &dm.ctx;
    let f = &ctx.field;
    let half = ctx.f;
    let fp = ctx.f_prime;
    // w_{f+j} = c_{f+j} * v_{f+j}; start at c_f = 1
    let mut c = f.one();
    for j in 0..half - 1 {
        let at = half + j;
        if !f.is_zero(&y[j]) {
            // F(w_at) = Y_j w_{at+1}
            let s = scalar_between(f, &dm.f_mats[at], &lines[at], &lines[at + 1])?;
            if f.is_zero(&s) {
                return Ok(Alpha::Indeterminate);
            }
            c = f.mul(&c, &f.mul(&s, &f.inv(&y[j])?));
        } else if !f.is_zero(&x[j]) {
            // V(w_{at+1}) = X_j w_at
            let s = scalar_between(f, &dm.v_mats[at], &lines[at + 1], &lines[at])?;
            if f.is_zero(&s) {
                return Ok(Alpha::Indeterminate);
            }
            c = f.mul(&c, &f.mul(&x[j], &f.inv(&s)?));
        } else {
            return Ok(Alpha::Indeterminate);
        }
    }
    // wrap: F : D_{eta,2f-1} -> D_{eta,0} is alpha * Y_{f-1};
    //       V : D_{eta,0} -> D_{eta,2f-1} is alpha^{-1} * X_{f-1}
    let last = fp - 1;
    let yl = &y[half - 1];
    let xl = &x[half - 1];
    if !f.is_zero(yl) {
        let s = scalar_between(f, &dm.f_mats[last], &lines[last], &lines[0])?;
        if f.is_zero(&s) {
            return Ok(Alpha::Indeterminate);
        }
        Ok(Alpha::Unit(f.mul(&c, &f.mul(&s, &f.inv(yl)?))))
    } else if !f.is_zero(xl) {
        let s = scalar_between(f, &dm.v_mats[last], &lines[0], &lines[last])?;
        if f.is_zero(&s) {
            return Ok(Alpha::Indeterminate);
        }
        // s / c = alpha^{-1} X_{f-1}
        Ok(Alpha::Unit(f.mul(xl, &f.mul(&c, &f.inv(&s)?))))
    } else {
        Ok(Alpha::Indeterminate)
    }
}

/// Whether two coordinate vectors lie in one orbit of the torus action
/// (X_j, Y_j) -> (u_j u_{j+1}^{-1} X_j, u_{j+1} u_j^{-1} Y_j), indices mod f.
pub fn torus_transport_exists(
    ctx: &crate::context::ArithmeticContext,
    a: &DieudonneCoordinates,
    b: &DieudonneCoordinates,
) -> bool {
    let f = &ctx.field;
    let n = a.x.len();
    if n != b.x.len() || a.eta != b.eta {
        return false;
    }
    if let (Some(Alpha::Unit(ua)), Some(Alpha::Unit(ub))) = (&a.alpha, &b.alpha) {
        if ua != ub {
            return false; // the torus fixes alpha
        }
    }
    // propagate u_{j+1} from u_j; branch on free legs
    fn go(
        f: &Field,
        a: &DieudonneCoordinates,
        b: &DieudonneCoordinates,
        us: &mut Vec<FqElem>,
        j: usize,
    ) -> bool {
        let n = a.x.len();
        if j == n {
            // wrap constraints at j = n-1 link u_{n-1} with u_0; re-check all
            for i in 0..n {
                let ui = &us[i];
                let un = &us[(i + 1) % n];
                let xi = f.mul(&f.mul(ui, &f.inv(un).unwrap()), &a.x[i]);
                let yi = f.mul(&f.mul(un, &f.inv(ui).unwrap()), &a.y[i]);
                if xi != b.x[i] || yi != b.y[i] {
                    return false;
                }
            }
            return true;
        }
        let candidates: Vec<FqElem> = if !f.is_zero(&a.x[j]) {
            if f.is_zero(&b.x[j]) {
                return false;
            }
            // u_{j+1} = u_j X_j / X'_j
            vec![f.mul(&us[j], &f.mul(&a.x[j], &f.inv(&b.x[j]).unwrap()))]
        } else if !f.is_zero(&a.y[j]) {
            if f.is_zero(&b.y[j]) {
                return false;
            }
            // u_{j+1} = u_j Y'_j / Y_j
            vec![f.mul(&us[j], &f.mul(&b.y[j], &f.inv(&a.y[j]).unwrap()))]
        } else {
            if !f.is_zero(&b.x[j]) || !f.is_zero(&b.y[j]) {
                return false;
            }
            (1..f.order()).map(|i| f.element_from_index(i)).collect()
        };
        for cand in candidates {
            if j + 1 < n {
                us.push(cand);
                if go(f, a, b, us, j + 1) {
                    return true;
                }
                us.pop();
            } else {
                // the candidate constrains u_n = u_0; consistency is checked in the wrap
                us.push(cand.clone());
                us.pop();
                if go(f, a, b, us, j + 1) {
                    return true;
                }
            }
        }
        false
    }
    for i in 1..f.order() {
        let mut us = vec![f.element_from_index(i)];
        if go(f, a, b, &mut us, 0) {
            return true;
        }
    }
    n == 0
}

/// Cross-check linking the Dieudonne module with the local model pair:
/// D must be L/uL with matching Galois action, and the reduction of L+
/// mod u must equal the image of F.
pub fn dieudonne_consistency(m: &BKModule) -> Result<bool> {
    let ctx = &m.ctx;
    let f = &ctx.field;
    let dm = dieudonne_of(m)?;
    let pair = crate::locmodel::psi(m)?;
    let fp = ctx.f_prime;
    for j in 0..fp {
        if pair.gamma[j].eval_zero(f) != dm.g_mats[j] {
            return Ok(false);
        }
        // reduction of L+_{j+1} mod u == column span of F_j
        let jn = (j + 1) % fp;
        let reduced: Vec<Vec<FqElem>> = pair.lplus[jn]
            .iter()
            .map(|v| v.iter().map(|poly| poly.eval_zero()).collect())
            .collect();
        let lhs = linalg::row_basis(f, reduced);
        let cols: Vec<Vec<FqElem>> = (0..m.d)
            .map(|cidx| (0..m.d).map(|r| dm.f_mats[j].at(r, cidx).clone()).collect())
            .collect();
        let rhs = linalg::row_basis(f, cols);
        if lhs != rhs {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The character exponent of an eigenvalue, for reporting.
pub fn exponent_of_eigenvalue(ctx: &crate::context::ArithmeticContext, v: &FqElem) -> Result<u64> {
    dlog_zeta(ctx, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bk::fixtures::*;
    use crate::bk::BKModule;
    use crate::series::{SeriesMatrix, TruncPoly};

    #[test]
    fn dieudonne_of_m_star() {
        let m = m_star();
        let f = &m.ctx.field;
        let dm = dieudonne_of(&m).unwrap();
        // F_0 = diag(1, 0), V_0 = cbar^{-1} diag(0, 1) = diag(0, 2) over F_3
        let mut f0 = FMatrix::zero(f, 2, 2);
        *f0.at_mut(0, 0) = f.one();
        assert_eq!(dm.f_mats[0], f0);
        let mut v0 = FMatrix::zero(f, 2, 2);
        *v0.at_mut(1, 1) = f.from_int(2);
        assert_eq!(dm.v_mats[0], v0);
        dm.check_relations().unwrap();
    }

    #[test]
    fn multiplication_and_etale_modules() {
        let ctx = c1();
        let prec = 6;
        let f = &ctx.field;
        // Phi = u^e' Id: F = 0, V = cbar^{-1} Id
        let mut phi = SeriesMatrix::zero(f, 2, prec);
        *phi.at_mut(0, 0) = TruncPoly::monomial(f, f.one(), 2, prec);
        *phi.at_mut(1, 1) = TruncPoly::monomial(f, f.one(), 2, prec);
        let m = BKModule::new(
            ctx.clone(),
            2,
            prec,
            vec![phi],
            vec![SeriesMatrix::identity(f, 2, prec)],
            None,
        );
        let dm = dieudonne_of(&m).unwrap();
        assert!(is_zero_mat(f, &dm.f_mats[0]));
        assert_eq!(dm.v_mats[0], FMatrix::identity(f, 2).scale(f, &f.from_int(-1)));

        // Phi = Id: F = Id, V = 0
        let m = BKModule::new(
            ctx.clone(),
            2,
            prec,
            vec![SeriesMatrix::identity(f, 2, prec)],
            vec![SeriesMatrix::identity(f, 2, prec)],
            None,
        );
        let dm = dieudonne_of(&m).unwrap();
        assert_eq!(dm.f_mats[0], FMatrix::identity(f, 2));
        assert!(is_zero_mat(f, &dm.v_mats[0]));
    }

    #[test]
    fn eta_coordinates_m_star() {
        let m = m_star();
        let f = &m.ctx.field;
        let dm = dieudonne_of(&m).unwrap();
        let c0 = eta_coordinates(&dm, 0).unwrap();
        assert_eq!(c0.x, vec![f.one()]);
        assert_eq!(c0.y, vec![f.zero()]);
        assert_eq!(c0.alpha, None);
        let c1 = eta_coordinates(&dm, 1).unwrap();
        assert_eq!(c1.x, vec![f.zero()]);
        assert_eq!(c1.y, vec![f.from_int(2)]);
        for c in [&c0, &c1] {
            for (xj, yj) in c.x.iter().zip(&c.y) {
                assert!(f.is_zero(&f.mul(xj, yj)));
            }
        }
    }

    #[test]
    fn eta_coordinates_rejects_scalar_and_missing() {
        let ctx = c1();
        let prec = 6;
        let f = &ctx.field;
        let m = BKModule::new(
            ctx.clone(),
            2,
            prec,
            vec![SeriesMatrix::identity(f, 2, prec)],
            vec![SeriesMatrix::identity(f, 2, prec)],
            None,
        );
        let dm = dieudonne_of(&m).unwrap();
        assert!(eta_coordinates(&dm, 0).is_err()); // scalar type
        let dm2 = dieudonne_of(&m_star()).unwrap();
        assert!(eta_coordinates(&dm2, 1).is_ok());
    }

    #[test]
    fn consistency_on_m_star() {
        assert!(dieudonne_consistency(&m_star()).unwrap());
    }

    #[test]
    fn torus_transport_basic() {
        let ctx = c1();
        let f = &ctx.field;
        let a = DieudonneCoordinates {
            eta: 0,
            x: vec![f.one()],
            y: vec![f.zero()],
            alpha: None,
        };
        // with f = 1 the torus acts trivially on (X_0, Y_0)
        let b = a.clone();
        assert!(torus_transport_exists(&ctx, &a, &b));
        let c = DieudonneCoordinates {
            eta: 0,
            x: vec![f.from_int(2)],
            y: vec![f.zero()],
            alpha: None,
        };
        assert!(!torus_transport_exists(&ctx, &a, &c));
    }
}
