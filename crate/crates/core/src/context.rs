//! The arithmetic universe: base-field invariants (p, e, f), the tame
//! extension selected by a flavor, the coefficient field with its fixed
//! character value zeta, and the uniformizer constant cbar.

use std::sync::Arc;

use crate::error::{BkError, Result};
use crate::field::{is_prime, Field, FqElem};

/// Which tame extension K'/K the descent data lives over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Flavor {
    /// K' = K: trivial descent data.
    Trivial,
    /// K' = K(pi^(1/(p^f - 1))): totally ramified, e(K'/K) = p^f - 1.
    PrincipalSeries,
    /// K' = L(pi^(1/(p^(2f) - 1))) with L/K unramified quadratic.
    Cuspidal,
}

impl Flavor {
    pub fn as_str(&self) -> &'static str {
        match self {
            Flavor::Trivial => "trivial",
            Flavor::PrincipalSeries => "principal-series",
            Flavor::Cuspidal => "cuspidal",
        }
    }

    pub fn parse(s: &str) -> Result<Flavor> {
        match s {
            "trivial" => Ok(Flavor::Trivial),
            "principal-series" => Ok(Flavor::PrincipalSeries),
            "cuspidal" => Ok(Flavor::Cuspidal),
            other => Err(BkError::Context(format!("unknown flavor '{other}'"))),
        }
    }
}

/// Immutable description of the arithmetic setting. Shared by reference
/// everywhere; all derived quantities are fixed at construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArithmeticContext {
    pub p: u64,
    /// Inertial degree of K over Q_p.
    pub f: usize,
    /// Ramification degree of K over Q_p.
    pub e: usize,
    pub flavor: Flavor,
    /// e(K'/K) = order of the inertia group I(K'/K).
    pub e_k: u64,
    /// Inertial degree of K' (f or 2f).
    pub f_prime: usize,
    /// Absolute ramification of K': e * e_k.
    pub e_prime: usize,
    pub field: Field,
    /// chi_0(gamma): a fixed element of exact order e_k.
    pub zeta: FqElem,
    /// Image of the Eisenstein constant: E(0) = cbar * p mod p^2, as an
    /// element of the subfield of order p^f'.
    pub cbar: FqElem,
    /// zeta_i = zeta^(p^(f'-i) mod e_k) per component, cached.
    pub zeta_comp: Vec<FqElem>,
}

pub type Ctx = Arc<ArithmeticContext>;

fn pow_mod(base: u64, exp: u32, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    let mut b = base % m;
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    acc
}

/// Specification of the coefficient field: degree plus optional explicit
/// modulus (little-endian); the shipped table supplies the default modulus.
#[derive(Clone, Debug)]
pub struct FieldSpec {
    pub degree: usize,
    pub modulus: Option<Vec<u64>>,
}

impl FieldSpec {
    pub fn degree(degree: usize) -> FieldSpec {
        FieldSpec { degree, modulus: None }
    }
}

/// Fixes the arithmetic universe. `zeta` defaults to the first element of
/// exact order e_k in counting order, `cbar` to -1 (E(u) = u^e' - p).
pub fn build_context(
    p: u64,
    f: usize,
    e: usize,
    flavor: Flavor,
    field_spec: FieldSpec,
    zeta: Option<FqElem>,
    cbar: Option<FqElem>,
) -> Result<Ctx> {
    if !is_prime(p) {
        return Err(BkError::Context(format!("p = {p} is not prime")));
    }
    if f == 0 || e == 0 {
        return Err(BkError::Context("e and f must be positive".into()));
    }
    let (e_k, f_prime) = match flavor {
        Flavor::Trivial => (1u64, f),
        Flavor::PrincipalSeries => (p.pow(f as u32) - 1, f),
        Flavor::Cuspidal => (p.pow(2 * f as u32) - 1, 2 * f),
    };
    let e_prime = e * e_k as usize;
    let field = Field::new(p, field_spec.degree, field_spec.modulus)?;
    if field.degree % f_prime != 0 {
        return Err(BkError::Context(format!(
            "field F_{{{p}^{}}} has no subfield of order {p}^{f_prime}",
            field.degree
        )));
    }
    // e_k | p^f' - 1 holds for every flavor, hence mu_{e_k} lies in the
    // subfield of order p^f'.
    debug_assert!(e_k == 1 || (pow_mod(p, f_prime as u32, e_k) == 1));
    let zeta = match zeta {
        Some(z) => {
            if field.mult_order(&z)? != e_k {
                return Err(BkError::Context(format!(
                    "zeta must have exact order {e_k}"
                )));
            }
            z
        }
        None => field.element_of_order(e_k)?,
    };
    let cbar = match cbar {
        Some(c) => c,
        None => field.from_int(-1),
    };
    if field.is_zero(&cbar) {
        return Err(BkError::Context("cbar must be nonzero".into()));
    }
    if !field.in_subfield(&cbar, f_prime) {
        return Err(BkError::Context(format!(
            "cbar must lie in the subfield of order {p}^{f_prime}"
        )));
    }
    let mut ctx = ArithmeticContext {
        p,
        f,
        e,
        flavor,
        e_k,
        f_prime,
        e_prime,
        field,
        zeta,
        cbar,
        zeta_comp: Vec::new(),
    };
    ctx.zeta_comp = (0..f_prime)
        .map(|i| ctx.field.pow(&ctx.zeta, chi_exponent(&ctx, i)))
        .collect();
    Ok(Arc::new(ctx))
}

/// Exponent of chi_i as a power of chi_0: p^(f'-i) mod e_k. The component
/// index wraps mod f'.
pub fn chi_exponent(ctx: &ArithmeticContext, i: usize) -> u64 {
    let i = i % ctx.f_prime;
    pow_mod(ctx.p, (ctx.f_prime - i) as u32, ctx.e_k)
}

/// The character chi_i = chi_0^(p^(f'-i) mod e_k).
pub fn chi(ctx: &ArithmeticContext, i: usize) -> InertialCharacter {
    InertialCharacter::new(ctx, chi_exponent(ctx, i))
}

/// A character of I(K'/K) as an exponent of chi_0, normalized to [0, e_k).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InertialCharacter {
    pub n: u64,
}

impl InertialCharacter {
    pub fn new(ctx: &ArithmeticContext, n: u64) -> InertialCharacter {
        InertialCharacter { n: n % ctx.e_k }
    }

    pub fn trivial() -> InertialCharacter {
        InertialCharacter { n: 0 }
    }

    pub fn mul(&self, ctx: &ArithmeticContext, other: &InertialCharacter) -> InertialCharacter {
        InertialCharacter::new(ctx, self.n + other.n)
    }

    pub fn inverse(&self, ctx: &ArithmeticContext) -> InertialCharacter {
        InertialCharacter::new(ctx, ctx.e_k - self.n % ctx.e_k)
    }

    pub fn pow(&self, ctx: &ArithmeticContext, k: u64) -> InertialCharacter {
        InertialCharacter::new(ctx, (self.n % ctx.e_k) * (k % ctx.e_k) % ctx.e_k)
    }

    /// Value at the fixed inertia generator: zeta^n.
    pub fn eval(&self, ctx: &ArithmeticContext) -> FqElem {
        ctx.field.pow(&ctx.zeta, self.n)
    }

    /// The Frobenius-twisted character xi^(p^f), used for the cuspidal pairing.
    pub fn frobenius_f(&self, ctx: &ArithmeticContext) -> InertialCharacter {
        self.pow(ctx, pow_mod(ctx.p, ctx.f as u32, ctx.e_k))
    }
}

/// Discrete log base zeta by exhaustive search; errors when the element is
/// not an e_k-th root of unity.
pub fn dlog_zeta(ctx: &ArithmeticContext, a: &FqElem) -> Result<u64> {
    let mut acc = ctx.field.one();
    for n in 0..ctx.e_k {
        if acc == *a {
            return Ok(n);
        }
        acc = ctx.field.mul(&acc, &ctx.zeta);
    }
    Err(BkError::Precondition(format!(
        "element {a:?} is not a power of zeta (eigenvalue outside mu_{})",
        ctx.e_k
    )))
}

/// A tame type: per component, a multiset of characters (sorted exponents).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TameType {
    pub components: Vec<Vec<u64>>,
}

impl TameType {
    pub fn new(mut components: Vec<Vec<u64>>) -> TameType {
        for c in components.iter_mut() {
            c.sort_unstable();
        }
        TameType { components }
    }

    pub fn is_unmixed(&self) -> bool {
        self.components.windows(2).all(|w| w[0] == w[1])
    }

    pub fn rank(&self) -> usize {
        self.components.first().map(|c| c.len()).unwrap_or(0)
    }

    /// For rank 2 unmixed types, the two character exponents.
    pub fn unmixed_pair(&self) -> Option<(u64, u64)> {
        if !self.is_unmixed() || self.rank() != 2 {
            return None;
        }
        let c = &self.components[0];
        Some((c[0], c[1]))
    }

    /// Inflation along a context refinement: exponents scale by the
    /// ramification ratio and components repeat with period f'.
    pub fn inflate(&self, ratio: u64, f_prime_big: usize) -> TameType {
        let small = self.components.len();
        TameType::new(
            (0..f_prime_big)
                .map(|i| {
                    self.components[i % small]
                        .iter()
                        .map(|n| n * ratio)
                        .collect()
                })
                .collect(),
        )
    }
}

/// For eta != eta', the per-component exponents (a_i, b_i) with
/// 0 < a_i, b_i < e_k, a_i + b_i = e_k and eta'/eta = chi_i^(a_i).
pub fn ab_exponents(
    ctx: &ArithmeticContext,
    eta: &InertialCharacter,
    eta_prime: &InertialCharacter,
) -> Result<Vec<(u64, u64)>> {
    if eta.n % ctx.e_k == eta_prime.n % ctx.e_k {
        return Err(BkError::Precondition(
            "ab_exponents requires eta != eta'".into(),
        ));
    }
    let delta = (eta_prime.n + ctx.e_k - eta.n % ctx.e_k) % ctx.e_k;
    let mut out = Vec::with_capacity(ctx.f_prime);
    for i in 0..ctx.f_prime {
        let c = chi_exponent(ctx, i);
        // exhaustive discrete log: a with c*a = delta mod e_k
        let a = (1..ctx.e_k)
            .find(|a| c * a % ctx.e_k == delta)
            .ok_or_else(|| {
                BkError::Precondition(format!("no exponent a with chi_{i}^a = eta'/eta"))
            })?;
        out.push((a, ctx.e_k - a));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn c1() -> Ctx {
        build_context(3, 1, 1, Flavor::PrincipalSeries, FieldSpec::degree(1), None, None).unwrap()
    }

    pub fn c2() -> Ctx {
        build_context(3, 2, 1, Flavor::PrincipalSeries, FieldSpec::degree(2), None, None).unwrap()
    }

    pub fn c3() -> Ctx {
        build_context(3, 1, 1, Flavor::Cuspidal, FieldSpec::degree(2), None, None).unwrap()
    }

    #[test]
    fn c1_invariants() {
        let ctx = c1();
        assert_eq!(ctx.e_k, 2);
        assert_eq!(ctx.f_prime, 1);
        assert_eq!(ctx.e_prime, 2);
        assert_eq!(ctx.zeta, ctx.field.from_int(-1));
        assert_eq!(ctx.cbar, ctx.field.from_int(-1));
    }

    #[test]
    fn c2_invariants() {
        let ctx = c2();
        assert_eq!(ctx.e_k, 8);
        assert_eq!(ctx.f_prime, 2);
        assert_eq!(ctx.e_prime, 8);
        assert_eq!(ctx.field.mult_order(&ctx.zeta).unwrap(), 8);
        // deterministic default: the generator x of F_9
        assert_eq!(ctx.zeta, ctx.field.gen());
    }

    #[test]
    fn c3_invariants() {
        let ctx = c3();
        assert_eq!(ctx.e_k, 8);
        assert_eq!(ctx.f_prime, 2);
        assert_eq!(ctx.e_prime, 8);
    }

    #[test]
    fn zeta_has_exact_order() {
        for ctx in [c1(), c2(), c3()] {
            let ord = ctx.field.mult_order(&ctx.zeta).unwrap();
            assert_eq!(ord, ctx.e_k);
        }
    }

    #[test]
    fn chi_examples() {
        assert_eq!(chi(&c1(), 0).n, 1);
        assert_eq!(chi(&c2(), 1).n, 3);
        // indices wrap mod f'
        assert_eq!(chi(&c2(), 2).n, 1);
    }

    #[test]
    fn chi_frobenius_relation() {
        // chi_{i+1}^p = chi_i as exponents mod e_k
        for ctx in [c1(), c2(), c3()] {
            for i in 0..ctx.f_prime {
                let lhs = chi_exponent(&ctx, i + 1) * ctx.p % ctx.e_k;
                assert_eq!(lhs, chi_exponent(&ctx, i) % ctx.e_k);
            }
        }
    }

    #[test]
    fn ab_exponents_examples() {
        let ctx = c1();
        let eta = InertialCharacter::new(&ctx, 0);
        let eta_p = InertialCharacter::new(&ctx, 1);
        assert_eq!(ab_exponents(&ctx, &eta, &eta_p).unwrap(), vec![(1, 1)]);

        let ctx = c2();
        let eta = InertialCharacter::new(&ctx, 0);
        let eta_p = InertialCharacter::new(&ctx, 2);
        assert_eq!(
            ab_exponents(&ctx, &eta, &eta_p).unwrap(),
            vec![(2, 6), (6, 2)]
        );

        let ctx = c1();
        let eta = InertialCharacter::new(&ctx, 1);
        assert!(ab_exponents(&ctx, &eta, &eta).is_err());
    }

    #[test]
    fn ab_exponents_defining_identity() {
        // verify eta'/eta = chi_i^(a_i) by evaluation at the generator
        let ctx = c2();
        let eta = InertialCharacter::new(&ctx, 1);
        let eta_p = InertialCharacter::new(&ctx, 6);
        for (i, (a, b)) in ab_exponents(&ctx, &eta, &eta_p).unwrap().iter().enumerate() {
            assert_eq!(a + b, ctx.e_k);
            let chi_i = chi(&ctx, i);
            let lhs = ctx.field.mul(
                &eta_p.eval(&ctx),
                &ctx.field.inv(&eta.eval(&ctx)).unwrap(),
            );
            assert_eq!(lhs, chi_i.pow(&ctx, *a).eval(&ctx));
        }
    }

    #[test]
    fn cuspidal_forces_ek() {
        // cuspidal with p=3, f=1 forces e_k = p^(2f) - 1 = 8
        let ctx = c3();
        assert_eq!(ctx.e_k, 8);
        // field too small to contain mu_8 / F_9
        assert!(build_context(
            3,
            1,
            1,
            Flavor::Cuspidal,
            FieldSpec::degree(1),
            None,
            None
        )
        .is_err());
    }

    #[test]
    fn rejects_wrong_zeta_order() {
        let f9 = Field::new(3, 2, None).unwrap();
        let bad = f9.from_int(-1); // order 2, not 8
        assert!(build_context(
            3,
            2,
            1,
            Flavor::PrincipalSeries,
            FieldSpec::degree(2),
            Some(bad),
            None
        )
        .is_err());
    }

    #[test]
    fn rejects_nonprime() {
        assert!(build_context(
            6,
            1,
            1,
            Flavor::Trivial,
            FieldSpec::degree(1),
            None,
            None
        )
        .is_err());
    }
}
