//! Breuil-Kisin modules with descent data over finite-field coefficients:
//! validation, tame type, the strong determinant condition, base change,
//! and the passage to etale phi-modules.

use crate::context::{Ctx, Flavor, TameType};
use crate::error::{BkError, Result};
use crate::field::{Field, FqElem};
use crate::linalg::{self, FMatrix};
use crate::series::{ElementaryDivisors, SeriesMatrix, TruncPoly};

/// A free rank-d Breuil-Kisin module with descent data, presented by its
/// Frobenius matrices Phi_i : phi*(M_{i-1}) -> M_i and the matrices of the
/// inertia generator (and, in cuspidal contexts, of c = phi^f).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BKModule {
    pub ctx: Ctx,
    pub d: usize,
    pub prec: usize,
    /// phi[i] is the matrix of Phi_i, entries in component i; indices mod f'.
    pub phi: Vec<SeriesMatrix>,
    /// gamma[i] is the matrix of the inertia generator on M_i.
    pub gamma: Vec<SeriesMatrix>,
    /// Cuspidal only: c_mats[i] is the matrix of c : M_i -> M_{i+f}.
    pub c_mats: Option<Vec<SeriesMatrix>>,
}

/// Outcome of one validation check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    /// Offending component index and a short description of the residual.
    pub witness: Option<String>,
}

/// Per-invariant diagnostic report; `pass` iff every check passed.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub divisors: Vec<Vec<usize>>,
    pub pass: bool,
}

impl BKModule {
    pub fn new(
        ctx: Ctx,
        d: usize,
        prec: usize,
        phi: Vec<SeriesMatrix>,
        gamma: Vec<SeriesMatrix>,
        c_mats: Option<Vec<SeriesMatrix>>,
    ) -> BKModule {
        BKModule {
            ctx,
            d,
            prec,
            phi,
            gamma,
            c_mats,
        }
    }

    fn field(&self) -> &Field {
        &self.ctx.field
    }

    /// Structural well-formedness (dimensions, precision, flavor/c match).
    pub fn check_shape(&self) -> Result<()> {
        let fp = self.ctx.f_prime;
        if self.phi.len() != fp {
            return Err(BkError::malformed("/phi", format!("expected {fp} components")));
        }
        if self.gamma.len() != fp {
            return Err(BkError::malformed("/gamma", format!("expected {fp} components")));
        }
        for (i, m) in self.phi.iter().chain(self.gamma.iter()).enumerate() {
            if m.dim != self.d || m.prec != self.prec {
                return Err(BkError::malformed(
                    format!("/matrix/{i}"),
                    format!(
                        "expected dim {} at precision {}, got dim {} prec {}",
                        self.d, self.prec, m.dim, m.prec
                    ),
                ));
            }
        }
        match (&self.c_mats, self.ctx.flavor) {
            (Some(c), Flavor::Cuspidal) => {
                if c.len() != fp {
                    return Err(BkError::malformed("/c", format!("expected {fp} components")));
                }
                for (i, m) in c.iter().enumerate() {
                    if m.dim != self.d || m.prec != self.prec {
                        return Err(BkError::malformed(
                            format!("/c/{i}"),
                            "dimension or precision mismatch".to_string(),
                        ));
                    }
                }
            }
            (None, Flavor::Cuspidal) => {
                return Err(BkError::malformed("/c", "cuspidal context requires c matrices"));
            }
            (Some(_), _) => {
                return Err(BkError::malformed("/c", "c matrices on a non-cuspidal context"));
            }
            (None, _) => {}
        }
        Ok(())
    }

    /// The matrix of gamma-hat^k on M_i: Gamma_i(u) Gamma_i(z u) ... with the
    /// twist argument advancing by zeta_i each factor.
    pub fn gamma_power_matrix(&self, i: usize, k: u64) -> SeriesMatrix {
        let f = self.field();
        let zi = &self.ctx.zeta_comp[i % self.ctx.f_prime];
        let g = &self.gamma[i % self.ctx.f_prime];
        let mut acc = SeriesMatrix::identity(f, self.d, self.prec);
        let mut twist = f.one();
        for _ in 0..k {
            acc = acc.mul(f, &g.subst_scale(f, &twist));
            twist = f.mul(&twist, zi);
        }
        acc
    }

    /// Raises the working precision (entries are exact polynomials, so this
    /// is zero padding).
    pub fn with_prec(&self, prec: usize) -> BKModule {
        let f = self.field();
        BKModule {
            ctx: self.ctx.clone(),
            d: self.d,
            prec,
            phi: self.phi.iter().map(|m| m.with_prec(f, prec)).collect(),
            gamma: self.gamma.iter().map(|m| m.with_prec(f, prec)).collect(),
            c_mats: self
                .c_mats
                .as_ref()
                .map(|cs| cs.iter().map(|m| m.with_prec(f, prec)).collect()),
        }
    }
}

/// Checks every Breuil-Kisin module invariant at height bound `h` and
/// reports pass/fail per invariant with a witness on failure.
pub fn validate(m: &BKModule, h: usize) -> Result<ValidationReport> {
    m.check_shape()?;
    let ctx = &m.ctx;
    let f = &ctx.field;
    if m.prec < ctx.e_prime * h + 1 {
        return Err(BkError::Precondition(format!(
            "precision {} below e'*h + 1 = {}",
            m.prec,
            ctx.e_prime * h + 1
        )));
    }
    let mut checks = Vec::new();
    let mut divisors = Vec::new();

    // height: elementary divisors exist and are bounded by h*e'
    let mut height_pass = true;
    let mut height_witness = None;
    for i in 0..ctx.f_prime {
        match crate::series::elementary_divisors(f, &m.phi[i]) {
            ElementaryDivisors::Divisors(vs) => {
                if vs.iter().any(|&v| v > h * ctx.e_prime) {
                    height_pass = false;
                    height_witness
                        .get_or_insert_with(|| format!("component {i}: divisors {vs:?}"));
                }
                divisors.push(vs);
            }
            ElementaryDivisors::SingularAtPrecision => {
                height_pass = false;
                height_witness
                    .get_or_insert_with(|| format!("component {i}: Phi singular at precision"));
                divisors.push(Vec::new());
            }
        }
    }
    checks.push(CheckResult {
        name: "height".into(),
        pass: height_pass,
        witness: height_witness,
    });

    // descent commutation: Gamma_i(u) Phi_i(z_i u) == Phi_i(u) Gamma_{i-1}(u^p)
    let fp = ctx.f_prime;
    let mut pass = true;
    let mut witness = None;
    for i in 0..fp {
        let lhs = m.gamma[i].mul(f, &m.phi[i].subst_scale(f, &ctx.zeta_comp[i]));
        let rhs = m.phi[i].mul(f, &m.gamma[(i + fp - 1) % fp].subst_power(f, ctx.p as usize));
        let res = lhs.sub(f, &rhs);
        if !res.is_zero(f) {
            pass = false;
            witness.get_or_insert_with(|| format!("component {i}: residual {res:?}"));
        }
    }
    checks.push(CheckResult {
        name: "descent_commutation".into(),
        pass,
        witness,
    });

    // gamma matrices are units
    let mut pass = true;
    let mut witness = None;
    for i in 0..fp {
        if !m.gamma[i].is_unit(f) {
            pass = false;
            witness.get_or_insert_with(|| format!("component {i}: Gamma not a unit"));
        }
    }
    checks.push(CheckResult {
        name: "gamma_unit".into(),
        pass,
        witness,
    });

    // cocycle: the e_k-fold semilinear composite of gamma is the identity
    let mut pass = true;
    let mut witness = None;
    for i in 0..fp {
        let acc = m.gamma_power_matrix(i, ctx.e_k);
        let res = acc.sub(f, &SeriesMatrix::identity(f, m.d, m.prec));
        if !res.is_zero(f) {
            pass = false;
            witness.get_or_insert_with(|| format!("component {i}: gamma^e_k != id"));
        }
    }
    checks.push(CheckResult {
        name: "gamma_order".into(),
        pass,
        witness,
    });

    if let Some(c) = &m.c_mats {
        let half = ctx.f;
        // c matrices are units
        let mut pass = true;
        let mut witness = None;
        for (i, ci) in c.iter().enumerate() {
            if !ci.is_unit(f) {
                pass = false;
                witness.get_or_insert_with(|| format!("component {i}: C not a unit"));
            }
        }
        checks.push(CheckResult {
            name: "c_unit".into(),
            pass,
            witness,
        });

        // c-hat^2 = id:  C_{i+f}(u) C_i(u) == Id
        let mut pass = true;
        let mut witness = None;
        for i in 0..fp {
            let prod = c[(i + half) % fp].mul(f, &c[i]);
            if !prod.sub(f, &SeriesMatrix::identity(f, m.d, m.prec)).is_zero(f) {
                pass = false;
                witness.get_or_insert_with(|| format!("component {i}: C^2 != id"));
            }
        }
        checks.push(CheckResult {
            name: "c_involution".into(),
            pass,
            witness,
        });

        // c commutes with phi:  C_i(u) Phi_i(u) == Phi_{i+f}(u) C_{i-1}(u^p)
        let mut pass = true;
        let mut witness = None;
        for i in 0..fp {
            let lhs = c[i].mul(f, &m.phi[i]);
            let rhs = m.phi[(i + half) % fp]
                .mul(f, &c[(i + fp - 1) % fp].subst_power(f, ctx.p as usize));
            if !lhs.sub(f, &rhs).is_zero(f) {
                pass = false;
                witness.get_or_insert_with(|| format!("component {i}: C-Phi commutation fails"));
            }
        }
        checks.push(CheckResult {
            name: "c_phi_commutation".into(),
            pass,
            witness,
        });

        // conjugation of gamma by c is gamma^(p^f):
        // C_{i+f}(u) Gamma_{i+f}(u) C_i(z_{i+f} u) == gamma-hat^(p^f) matrix on M_i
        let mut pass = true;
        let mut witness = None;
        let pf = ctx.p.pow(ctx.f as u32);
        for i in 0..fp {
            let ifh = (i + half) % fp;
            let lhs = c[ifh]
                .mul(f, &m.gamma[ifh])
                .mul(f, &c[i].subst_scale(f, &ctx.zeta_comp[ifh]));
            let rhs = m.gamma_power_matrix(i, pf);
            if !lhs.sub(f, &rhs).is_zero(f) {
                pass = false;
                witness.get_or_insert_with(|| format!("component {i}: C-Gamma relation fails"));
            }
        }
        checks.push(CheckResult {
            name: "c_gamma_relation".into(),
            pass,
            witness,
        });
    }

    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidationReport {
        checks,
        divisors,
        pass,
    })
}

/// The tame type: per component, the eigenvalue multiset of the inertia
/// action on M_i/uM_i converted to character exponents.
pub fn type_of(m: &BKModule) -> Result<(TameType, bool)> {
    let ctx = &m.ctx;
    let f = &ctx.field;
    let mut comps = Vec::with_capacity(ctx.f_prime);
    for i in 0..ctx.f_prime {
        let g0 = m.gamma[i].eval_zero(f);
        let mut exps = Vec::new();
        let mut total = 0usize;
        for n in 0..ctx.e_k {
            let lambda = f.pow(&ctx.zeta, n);
            let mut shifted = g0.clone();
            for r in 0..m.d {
                *shifted.at_mut(r, r) = f.sub(shifted.at(r, r), &lambda);
            }
            let dim = linalg::kernel_basis(f, &shifted).len();
            total += dim;
            for _ in 0..dim {
                exps.push(n);
            }
        }
        if total != m.d {
            return Err(BkError::Precondition(format!(
                "component {i}: Gamma(0) not semisimple with eigenvalues in mu_{} (invalid input)",
                ctx.e_k
            )));
        }
        comps.push(exps);
    }
    let t = TameType::new(comps);
    let unmixed = t.is_unmixed();
    Ok((t, unmixed))
}

/// Vector layout for M_i / u^k M_i: index = m * d + row for u^m basis row.
pub(crate) fn vectorize(f: &Field, cols: &[TruncPoly], k: usize, d: usize) -> Vec<FqElem> {
    let mut v = vec![f.zero(); k * d];
    for (row, poly) in cols.iter().enumerate() {
        for m in 0..k.min(poly.prec()) {
            v[m * d + row] = poly.coeffs[m].clone();
        }
    }
    v
}

/// F-basis (echelonized) of (im Phi_i + u^k M_i) / u^k M_i inside F^(k*d).
pub(crate) fn image_basis_mod_uk(
    f: &Field,
    phi: &SeriesMatrix,
    k: usize,
) -> Vec<Vec<FqElem>> {
    let d = phi.dim;
    let mut rows = Vec::with_capacity(d * k);
    for j in 0..d {
        let col: Vec<TruncPoly> = (0..d).map(|r| phi.at(r, j).clone()).collect();
        for m in 0..k {
            let shifted: Vec<TruncPoly> = col.iter().map(|p| p.shift_up(f, m)).collect();
            rows.push(vectorize(f, &shifted, k, d));
        }
    }
    linalg::row_basis(f, rows)
}

/// The gamma-hat action on M_i / u^k M_i as an F-linear matrix in the
/// `vectorize` layout.
pub(crate) fn gamma_action_mod_uk(
    f: &Field,
    gamma: &SeriesMatrix,
    zeta_i: &FqElem,
    k: usize,
) -> FMatrix {
    let d = gamma.dim;
    let n = k * d;
    let mut out = FMatrix::zero(f, n, n);
    // image of u^m e_row: zeta_i^m u^m * (column `row` of Gamma)
    for row in 0..d {
        let col: Vec<TruncPoly> = (0..d).map(|r| gamma.at(r, row).clone()).collect();
        let mut zpow = f.one();
        for m in 0..k {
            let scaled: Vec<TruncPoly> = col
                .iter()
                .map(|p| p.shift_up(f, m).scale(f, &zpow))
                .collect();
            let v = vectorize(f, &scaled, k, d);
            for (idx, val) in v.into_iter().enumerate() {
                *out.at_mut(idx, m * d + row) = val;
            }
            zpow = f.mul(&zpow, zeta_i);
        }
    }
    out
}

/// Restricts an F-linear map to a subspace given by an echelonized basis;
/// errors when the subspace is not stable.
pub(crate) fn restrict_to_span(
    f: &Field,
    action: &FMatrix,
    basis: &[Vec<FqElem>],
) -> Result<FMatrix> {
    let n = basis.len();
    if n == 0 {
        return Ok(FMatrix::zero(f, 0, 0));
    }
    let dim = basis[0].len();
    let mut bmat = FMatrix::zero(f, dim, n);
    for (j, b) in basis.iter().enumerate() {
        for (i, c) in b.iter().enumerate() {
            *bmat.at_mut(i, j) = c.clone();
        }
    }
    let mut out = FMatrix::zero(f, n, n);
    for (j, b) in basis.iter().enumerate() {
        let img = action.mul_vec(f, b);
        let coords = linalg::solve(f, &bmat, &img).ok_or_else(|| {
            BkError::Precondition("subspace is not stable under the action".into())
        })?;
        for i in 0..n {
            *out.at_mut(i, j) = coords[i].clone();
        }
    }
    Ok(out)
}

/// Eigenspace dimension of `mat` for eigenvalue `lambda`.
pub(crate) fn eigenspace_dim(f: &Field, mat: &FMatrix, lambda: &FqElem) -> usize {
    let mut shifted = mat.clone();
    for r in 0..mat.rows {
        *shifted.at_mut(r, r) = f.sub(shifted.at(r, r), lambda);
    }
    linalg::kernel_basis(f, &shifted).len()
}

/// Report of the strong determinant condition for d = 2, h = 1.
#[derive(Clone, Debug)]
pub struct StrongDetReport {
    /// dims[i][n] = dim of the chi_0^n eigenspace of (im Phi_i / u^e' M_i).
    pub dims: Vec<Vec<usize>>,
    pub det_valuations: Vec<usize>,
    /// Whether det Phi_i = u^e' * unit for each i.
    pub exact_divisibility: Vec<bool>,
    pub pass: bool,
}

/// The finite-field strong determinant criterion: every inertia eigenspace
/// of im Phi_i / E(u) M_i has dimension e; also reports det valuations and
/// the exact-divisibility flag (for d = 2 the determinant is wedge-square).
pub fn strong_det_check(m: &BKModule) -> Result<StrongDetReport> {
    let ctx = &m.ctx;
    let f = &ctx.field;
    if m.d != 2 {
        return Err(BkError::Precondition(format!(
            "strong determinant condition requires rank 2 (got {})",
            m.d
        )));
    }
    let ep = ctx.e_prime;
    if m.prec < ep + 1 {
        return Err(BkError::Precondition("precision below e' + 1".to_string()));
    }
    let mut dims = Vec::new();
    let mut det_valuations = Vec::new();
    let mut exact = Vec::new();
    let mut pass = true;
    for i in 0..ctx.f_prime {
        // height <= 1 precondition, component-wise
        match crate::series::elementary_divisors(f, &m.phi[i]) {
            ElementaryDivisors::Divisors(vs) => {
                if vs.iter().any(|&v| v > ep) {
                    return Err(BkError::Precondition(format!(
                        "component {i} has height > 1 (divisors {vs:?})"
                    )));
                }
            }
            ElementaryDivisors::SingularAtPrecision => {
                return Err(BkError::Precondition(format!(
                    "component {i}: Phi singular at working precision"
                )));
            }
        }
        let basis = image_basis_mod_uk(f, &m.phi[i], ep);
        let action = gamma_action_mod_uk(f, &m.gamma[i], &ctx.zeta_comp[i], ep);
        let restricted = restrict_to_span(f, &action, &basis)?;
        let mut comp_dims = Vec::with_capacity(ctx.e_k as usize);
        for n in 0..ctx.e_k {
            let lambda = f.pow(&ctx.zeta, n);
            let dim = eigenspace_dim(f, &restricted, &lambda);
            if dim != ctx.e {
                pass = false;
            }
            comp_dims.push(dim);
        }
        dims.push(comp_dims);
        let dv = m.phi[i]
            .det(f)
            .valuation(f)
            .expect("nonsingular by height check");
        exact.push(dv == ep);
        det_valuations.push(dv);
    }
    Ok(StrongDetReport {
        dims,
        det_valuations,
        exact_divisibility: exact,
        pass,
    })
}

/// Coefficient-wise base change along an embedding of coefficient fields.
pub fn base_change(m: &BKModule, big_field: &Field) -> Result<BKModule> {
    let ctx = &m.ctx;
    let emb = ctx.field.embedding_into(big_field)?;
    let new_ctx = crate::context::build_context(
        ctx.p,
        ctx.f,
        ctx.e,
        ctx.flavor,
        crate::context::FieldSpec {
            degree: big_field.degree,
            modulus: Some(big_field.modulus.clone()),
        },
        Some(emb.map(&ctx.zeta)),
        Some(emb.map(&ctx.cbar)),
    )?;
    let map_mat = |mat: &SeriesMatrix| -> SeriesMatrix {
        SeriesMatrix {
            dim: mat.dim,
            prec: mat.prec,
            entries: mat
                .entries
                .iter()
                .map(|e| e.map_coeffs(|c| emb.map(c)))
                .collect(),
        }
    };
    Ok(BKModule {
        ctx: new_ctx,
        d: m.d,
        prec: m.prec,
        phi: m.phi.iter().map(map_mat).collect(),
        gamma: m.gamma.iter().map(map_mat).collect(),
        c_mats: m.c_mats.as_ref().map(|cs| cs.iter().map(map_mat).collect()),
    })
}

/// A matrix of truncated Laurent series: u^(-pole) * mat.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LaurentMatrix {
    pub pole: usize,
    pub mat: SeriesMatrix,
}

impl LaurentMatrix {
    /// Strips common powers of u into the pole order.
    pub fn normalized(&self, f: &Field) -> LaurentMatrix {
        let minval = self
            .entries_min_valuation(f)
            .unwrap_or(0)
            .min(self.pole);
        if minval == 0 {
            return self.clone();
        }
        LaurentMatrix {
            pole: self.pole - minval,
            mat: self
                .mat
                .map(|e| e.shift_down_exact(f, minval).expect("min valuation")),
        }
    }

    fn entries_min_valuation(&self, f: &Field) -> Option<usize> {
        self.mat
            .entries
            .iter()
            .filter_map(|e| e.valuation(f))
            .min()
    }
}

/// An etale phi-module: the localization M[1/u], with Laurent matrices.
#[derive(Clone, Debug)]
pub struct EtalePhiModule {
    pub ctx: Ctx,
    pub d: usize,
    pub prec: usize,
    pub phi: Vec<LaurentMatrix>,
    /// Phi_i^{-1}, pole order at most h*e'.
    pub phi_inv: Vec<LaurentMatrix>,
    pub gamma: Vec<LaurentMatrix>,
    pub c_mats: Option<Vec<LaurentMatrix>>,
}

/// Reinterprets a validated Breuil-Kisin module as an etale phi-module,
/// computing the Frobenius inverses (poles bounded by the height).
pub fn etale_of(m: &BKModule, h: usize) -> Result<EtalePhiModule> {
    let f = &m.ctx.field;
    let he = h * m.ctx.e_prime;
    let mut phi_inv = Vec::with_capacity(m.phi.len());
    for (i, p) in m.phi.iter().enumerate() {
        let x = p.solve_u_power(f, he).map_err(|_| {
            BkError::Precondition(format!("component {i}: Phi not invertible within pole {he}"))
        })?;
        phi_inv.push(
            LaurentMatrix {
                pole: he,
                mat: x,
            }
            .normalized(f),
        );
    }
    let plain = |mat: &SeriesMatrix| LaurentMatrix {
        pole: 0,
        mat: mat.clone(),
    };
    Ok(EtalePhiModule {
        ctx: m.ctx.clone(),
        d: m.d,
        prec: m.prec,
        phi: m.phi.iter().map(plain).collect(),
        phi_inv,
        gamma: m.gamma.iter().map(plain).collect(),
        c_mats: m
            .c_mats
            .as_ref()
            .map(|cs| cs.iter().map(plain).collect()),
    })
}

/// Conjugates a module by g = (g_i): Phi_i -> g_i^{-1} Phi_i phi(g_{i-1}),
/// Gamma_i -> g_i^{-1} Gamma_i g_i(z_i u), C_i -> g_{i+f}^{-1} C_i g_i.
pub fn conjugate(m: &BKModule, g: &[SeriesMatrix]) -> Result<BKModule> {
    let ctx = &m.ctx;
    let f = &ctx.field;
    let fp = ctx.f_prime;
    if g.len() != fp {
        return Err(BkError::Precondition("conjugator has wrong length".into()));
    }
    let g_inv: Vec<SeriesMatrix> = g
        .iter()
        .map(|gi| gi.invert_unit(f))
        .collect::<Result<_>>()?;
    let phi = (0..fp)
        .map(|i| {
            g_inv[i]
                .mul(f, &m.phi[i])
                .mul(f, &g[(i + fp - 1) % fp].subst_power(f, ctx.p as usize))
        })
        .collect();
    let gamma = (0..fp)
        .map(|i| {
            g_inv[i]
                .mul(f, &m.gamma[i])
                .mul(f, &g[i].subst_scale(f, &ctx.zeta_comp[i]))
        })
        .collect();
    let c_mats = m.c_mats.as_ref().map(|cs| {
        (0..fp)
            .map(|i| {
                g_inv[(i + ctx.f) % fp]
                    .mul(f, &cs[i])
                    .mul(f, &g[i])
            })
            .collect()
    });
    Ok(BKModule {
        ctx: m.ctx.clone(),
        d: m.d,
        prec: m.prec,
        phi,
        gamma,
        c_mats,
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::context::{build_context, FieldSpec};
    use crate::series::TruncPoly;

    pub fn c1() -> Ctx {
        build_context(3, 1, 1, Flavor::PrincipalSeries, FieldSpec::degree(1), None, None).unwrap()
    }

    pub fn c2() -> Ctx {
        build_context(3, 2, 1, Flavor::PrincipalSeries, FieldSpec::degree(2), None, None).unwrap()
    }

    pub fn c3() -> Ctx {
        build_context(3, 1, 1, Flavor::Cuspidal, FieldSpec::degree(2), None, None).unwrap()
    }

    pub fn poly(ctx: &Ctx, coeffs: &[i64], prec: usize) -> TruncPoly {
        let mut c: Vec<FqElem> = coeffs.iter().map(|&x| ctx.field.from_int(x)).collect();
        c.resize(prec, ctx.field.zero());
        TruncPoly { coeffs: c }
    }

    pub fn mat2(ctx: &Ctx, entries: [&[i64]; 4], prec: usize) -> SeriesMatrix {
        SeriesMatrix::from_entries(
            2,
            prec,
            entries.iter().map(|e| poly(ctx, e, prec)).collect(),
        )
    }

    /// The running example: Phi = diag(1, u^2), Gamma = diag(1, -1) in C1.
    pub fn m_star() -> BKModule {
        let ctx = c1();
        let prec = 2 * ctx.e_prime + 2;
        let phi = vec![mat2(&ctx, [&[1], &[], &[], &[0, 0, 1]], prec)];
        let gamma = vec![mat2(&ctx, [&[1], &[], &[], &[-1]], prec)];
        BKModule::new(ctx, 2, prec, phi, gamma, None)
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn m_star_validates_at_height_one() {
        let m = m_star();
        let report = validate(&m, 1).unwrap();
        assert!(report.pass, "{report:?}");
        assert_eq!(report.divisors, vec![vec![0, 2]]);
    }

    #[test]
    fn nonunit_gamma_fails() {
        let ctx = c1();
        let prec = 6;
        let m = BKModule::new(
            ctx.clone(),
            2,
            prec,
            vec![mat2(&ctx, [&[1], &[], &[], &[0, 0, 1]], prec)],
            vec![mat2(&ctx, [&[1], &[], &[], &[0, 1]], prec)],
            None,
        );
        let report = validate(&m, 1).unwrap();
        assert!(!report.pass);
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "gamma_unit" && !c.pass));
    }

    #[test]
    fn rank1_odd_exponent_fails_commutation() {
        // Phi = u, Gamma = -1: (-1)(-u) = u != u*(-1)
        let ctx = c1();
        let prec = 6;
        let phi = vec![SeriesMatrix::from_entries(1, prec, vec![poly(&ctx, &[0, 1], prec)])];
        let gamma = vec![SeriesMatrix::from_entries(1, prec, vec![poly(&ctx, &[-1], prec)])];
        let m = BKModule::new(ctx, 1, prec, phi, gamma, None);
        let report = validate(&m, 1).unwrap();
        assert!(!report.pass);
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "descent_commutation" && !c.pass));
    }

    #[test]
    fn m_star_type() {
        let (t, unmixed) = type_of(&m_star()).unwrap();
        assert_eq!(t.components, vec![vec![0, 1]]);
        assert!(unmixed);
    }

    #[test]
    fn rank1_c2_types() {
        // (r0, r1, c0, c1) = (5, 1, zeta^3, 1): mixed
        let ctx = c2();
        let prec = 2 * ctx.e_prime + 2;
        let z = &ctx.zeta;
        let f = &ctx.field;
        let mono = |c: &FqElem, r: usize| {
            SeriesMatrix::from_entries(1, prec, vec![TruncPoly::monomial(f, c.clone(), r, prec)])
        };
        let cnst = |c: &FqElem| {
            SeriesMatrix::from_entries(1, prec, vec![TruncPoly::constant(f, c.clone(), prec)])
        };
        let m = BKModule::new(
            ctx.clone(),
            1,
            prec,
            vec![mono(&f.one(), 5), mono(&f.one(), 1)],
            vec![cnst(&f.pow(z, 3)), cnst(&f.one())],
            None,
        );
        assert!(validate(&m, 1).unwrap().pass);
        let (t, unmixed) = type_of(&m).unwrap();
        assert_eq!(t.components, vec![vec![3], vec![0]]);
        assert!(!unmixed);

        // (r0, r1) = (8, 0), constants (1, 1): unmixed
        let m = BKModule::new(
            ctx.clone(),
            1,
            prec,
            vec![mono(&f.one(), 8), mono(&f.one(), 0)],
            vec![cnst(&f.one()), cnst(&f.one())],
            None,
        );
        assert!(validate(&m, 1).unwrap().pass);
        let (t, unmixed) = type_of(&m).unwrap();
        assert_eq!(t.components, vec![vec![0], vec![0]]);
        assert!(unmixed);
    }

    #[test]
    fn strong_det_m_star() {
        let report = strong_det_check(&m_star()).unwrap();
        assert_eq!(report.dims, vec![vec![1, 1]]);
        assert_eq!(report.det_valuations, vec![2]);
        assert_eq!(report.exact_divisibility, vec![true]);
        assert!(report.pass);
    }

    #[test]
    fn strong_det_identity_phi_fails() {
        let ctx = c1();
        let prec = 6;
        let m = BKModule::new(
            ctx.clone(),
            2,
            prec,
            vec![SeriesMatrix::identity(&ctx.field, 2, prec)],
            vec![mat2(&ctx, [&[1], &[], &[], &[-1]], prec)],
            None,
        );
        let report = strong_det_check(&m).unwrap();
        assert_eq!(report.dims, vec![vec![2, 2]]);
        assert!(!report.pass);
    }

    #[test]
    fn strong_det_u2_scalar_fails_with_valuation_4() {
        let ctx = c1();
        let prec = 6;
        let m = BKModule::new(
            ctx.clone(),
            2,
            prec,
            vec![mat2(&ctx, [&[0, 0, 1], &[], &[], &[0, 0, 1]], prec)],
            vec![mat2(&ctx, [&[1], &[], &[], &[-1]], prec)],
            None,
        );
        let report = strong_det_check(&m).unwrap();
        assert_eq!(report.det_valuations, vec![4]);
        assert_eq!(report.exact_divisibility, vec![false]);
        assert_eq!(report.dims, vec![vec![0, 0]]);
        assert!(!report.pass);
    }

    #[test]
    fn base_change_preserves_reports() {
        let m = m_star();
        let f9 = Field::new(3, 2, None).unwrap();
        let big = base_change(&m, &f9).unwrap();
        assert!(validate(&big, 1).unwrap().pass);
        let (t, _) = type_of(&big).unwrap();
        assert_eq!(t.components, vec![vec![0, 1]]);
        let r = strong_det_check(&big).unwrap();
        assert!(r.pass);
        assert_eq!(r.det_valuations, vec![2]);
        // incompatible target
        let f27 = Field::new(3, 3, None).unwrap();
        let c2m = {
            let ctx = c2();
            let prec = 6;
            BKModule::new(
                ctx.clone(),
                2,
                prec,
                vec![
                    SeriesMatrix::identity(&ctx.field, 2, prec),
                    SeriesMatrix::identity(&ctx.field, 2, prec),
                ],
                vec![
                    SeriesMatrix::identity(&ctx.field, 2, prec),
                    SeriesMatrix::identity(&ctx.field, 2, prec),
                ],
                None,
            )
        };
        assert!(base_change(&c2m, &f27).is_err());
    }

    #[test]
    fn etale_of_m_star_inverse() {
        let m = m_star();
        let et = etale_of(&m, 1).unwrap();
        // Phi^{-1} = diag(1, u^{-2}): normalized pole 2, mat = diag(u^2, 1)
        assert_eq!(et.phi_inv[0].pole, 2);
        let f = &m.ctx.field;
        let expect = mat2(&m.ctx, [&[0, 0, 1], &[], &[], &[1]], m.prec);
        assert_eq!(et.phi_inv[0].mat.sub(f, &expect).is_zero(f), true);
    }

    #[test]
    fn conjugation_preserves_invariants() {
        let m = m_star();
        let ctx = &m.ctx;
        let g = vec![mat2(ctx, [&[1], &[0, 1], &[], &[1]], m.prec)];
        let mc = conjugate(&m, &g).unwrap();
        assert!(validate(&mc, 1).unwrap().pass);
        let (t, _) = type_of(&mc).unwrap();
        assert_eq!(t.components, vec![vec![0, 1]]);
        let r = strong_det_check(&mc).unwrap();
        assert!(r.pass);
        assert_eq!(r.det_valuations, vec![2]);
    }
}
