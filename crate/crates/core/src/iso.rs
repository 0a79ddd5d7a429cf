//! phi-conjugacy testing: cheap invariant comparison first, then an
//! exhaustive constant-term-first search for a conjugating tuple with
//! entries of bounded degree. The intertwining relations are linear in the
//! conjugator, so for each tuple of constant terms the higher coefficients
//! are resolved by exact linear algebra rather than enumeration; the search
//! remains exhaustive over the stated degree window.

use crate::bk::{conjugate, strong_det_check, type_of, BKModule, EtalePhiModule};
use crate::context::Ctx;
use crate::error::{BkError, Result};
use crate::field::{Field, FqElem};
use crate::linalg::{self, FMatrix};
use crate::series::{ElementaryDivisors, SeriesMatrix};

/// Outcome of an isomorphism test.
#[derive(Clone, Debug)]
pub enum IsoVerdict {
    /// Conjugating tuple found; the intertwining identities hold exactly at
    /// the working precision.
    Iso { witness: Vec<SeriesMatrix> },
    /// Definitely distinct by an invariant, or no conjugator exists within
    /// the stated degree bound (complete search).
    NonIso { reason: NonIsoReason },
    /// Node budget exhausted before the search space was covered.
    Unknown { nodes: u64 },
}

#[derive(Clone, Debug)]
pub enum NonIsoReason {
    Invariant {
        name: String,
        left: String,
        right: String,
    },
    SearchExhausted {
        degree_bound: usize,
        nodes: u64,
    },
}

impl IsoVerdict {
    pub fn is_iso(&self) -> bool {
        matches!(self, IsoVerdict::Iso { .. })
    }
}

/// Search options; the degree bound defaults to n(1) = floor(e'h/(p-1)) + 1.
#[derive(Clone, Copy, Debug)]
pub struct IsoOptions {
    pub degree_bound: Option<usize>,
    pub node_budget: u64,
}

impl Default for IsoOptions {
    fn default() -> Self {
        IsoOptions {
            degree_bound: None,
            node_budget: 1_000_000,
        }
    }
}

/// The truncation bound n(1) for height h; conjugator entries are searched
/// up to this degree inclusive.
pub fn truncation_bound(ctx: &crate::context::ArithmeticContext, h: usize) -> usize {
    (ctx.e_prime * h) / (ctx.p as usize - 1) + 1
}

fn divisor_profile(m: &BKModule) -> Result<Vec<Vec<usize>>> {
    let f = &m.ctx.field;
    m.phi
        .iter()
        .map(|p| match crate::series::elementary_divisors(f, p) {
            ElementaryDivisors::Divisors(v) => Ok(v),
            ElementaryDivisors::SingularAtPrecision => Err(BkError::Precondition(
                "Phi singular at working precision".into(),
            )),
        })
        .collect()
}

pub fn contexts_match(a: &Ctx, b: &Ctx) -> bool {
    a.p == b.p
        && a.f == b.f
        && a.e == b.e
        && a.flavor == b.flavor
        && a.field == b.field
        && a.zeta == b.zeta
        && a.cbar == b.cbar
}

/// Tests phi-conjugacy of two validated modules. Invariants are compared
/// first; otherwise the bounded-degree search decides (complete search at
/// the bound reports non-isomorphy witnessed by exhaustion).
pub fn is_isomorphic(m1: &BKModule, m2: &BKModule, opts: IsoOptions) -> Result<IsoVerdict> {
    if !contexts_match(&m1.ctx, &m2.ctx) {
        return Err(BkError::Precondition("mismatched contexts".into()));
    }
    if m1.d != m2.d {
        return Err(BkError::Precondition("mismatched ranks".into()));
    }
    if m1.prec != m2.prec {
        return Err(BkError::Precondition("mismatched precisions".into()));
    }

    let div1 = divisor_profile(m1)?;
    let div2 = divisor_profile(m2)?;
    if div1 != div2 {
        return Ok(IsoVerdict::NonIso {
            reason: NonIsoReason::Invariant {
                name: "elementary_divisors".into(),
                left: format!("{div1:?}"),
                right: format!("{div2:?}"),
            },
        });
    }
    let t1 = type_of(m1)?;
    let t2 = type_of(m2)?;
    if t1.0 != t2.0 {
        return Ok(IsoVerdict::NonIso {
            reason: NonIsoReason::Invariant {
                name: "tame_type".into(),
                left: format!("{:?}", t1.0.components),
                right: format!("{:?}", t2.0.components),
            },
        });
    }
    let ep = m1.ctx.e_prime;
    let height1 = div1.iter().flat_map(|v| v.iter()).all(|&v| v <= ep);
    if m1.d == 2 && height1 {
        let s1 = strong_det_check(m1)?;
        let s2 = strong_det_check(m2)?;
        if s1.dims != s2.dims || s1.det_valuations != s2.det_valuations {
            return Ok(IsoVerdict::NonIso {
                reason: NonIsoReason::Invariant {
                    name: "strong_det_table".into(),
                    left: format!("{:?}/{:?}", s1.dims, s1.det_valuations),
                    right: format!("{:?}/{:?}", s2.dims, s2.det_valuations),
                },
            });
        }
    }
    if height1 {
        let d1 = crate::dieudonne::dieudonne_of(m1)?;
        let d2 = crate::dieudonne::dieudonne_of(m2)?;
        let p1 = d1.rank_profile(&m1.ctx.field);
        let p2 = d2.rank_profile(&m2.ctx.field);
        if p1 != p2 {
            return Ok(IsoVerdict::NonIso {
                reason: NonIsoReason::Invariant {
                    name: "dieudonne_rank_profile".into(),
                    left: format!("{p1:?}"),
                    right: format!("{p2:?}"),
                },
            });
        }
    }

    let h = div1
        .iter()
        .flat_map(|v| v.iter())
        .max()
        .map(|&v| v.div_ceil(ep).max(1))
        .unwrap_or(1);
    let max_deg = opts
        .degree_bound
        .unwrap_or_else(|| truncation_bound(&m1.ctx, h));
    let rel = Relations::for_bk(m1, m2);
    match search(&rel, max_deg, opts.node_budget, true, 0) {
        SearchOutcome::Found(g) => {
            let conj = conjugate(m1, &g)?;
            assert!(modules_equal(&conj, m2), "witness failed re-verification");
            Ok(IsoVerdict::Iso { witness: g })
        }
        SearchOutcome::Exhausted { nodes } => Ok(IsoVerdict::NonIso {
            reason: NonIsoReason::SearchExhausted {
                degree_bound: max_deg,
                nodes,
            },
        }),
        SearchOutcome::BudgetExceeded { nodes } => Ok(IsoVerdict::Unknown { nodes }),
    }
}

pub fn modules_equal(a: &BKModule, b: &BKModule) -> bool {
    a.phi == b.phi && a.gamma == b.gamma && a.c_mats == b.c_mats
}

pub enum SearchOutcome {
    Found(Vec<SeriesMatrix>),
    Exhausted { nodes: u64 },
    BudgetExceeded { nodes: u64 },
}

/// One intertwining relation P * twist(g_a) == scale * u^shift * g_b * Q.
struct Relation {
    p_mat: SeriesMatrix,
    q_mat: SeriesMatrix,
    a: usize,
    b: usize,
    twist: Twist,
    scale: FqElem,
    shift: usize,
}

#[derive(Clone, Copy)]
enum Twist {
    /// u -> u^p with component shift handled by the relation indices.
    Power(usize),
    /// u -> z*u.
    Scale,
    Id,
}

struct Relations<'a> {
    f: &'a Field,
    fp: usize,
    d: usize,
    prec: usize,
    zeta_comp: &'a [FqElem],
    rels: Vec<Relation>,
}

impl<'a> Relations<'a> {
    fn for_bk(m1: &'a BKModule, m2: &'a BKModule) -> Relations<'a> {
        let ctx = &m1.ctx;
        let fp = ctx.f_prime;
        let mut rels = Vec::new();
        for i in 0..fp {
            rels.push(Relation {
                p_mat: m1.phi[i].clone(),
                q_mat: m2.phi[i].clone(),
                a: (i + fp - 1) % fp,
                b: i,
                twist: Twist::Power(ctx.p as usize),
                scale: ctx.field.one(),
                shift: 0,
            });
            rels.push(Relation {
                p_mat: m1.gamma[i].clone(),
                q_mat: m2.gamma[i].clone(),
                a: i,
                b: i,
                twist: Twist::Scale,
                scale: ctx.field.one(),
                shift: 0,
            });
        }
        if let (Some(c1), Some(c2)) = (&m1.c_mats, &m2.c_mats) {
            for i in 0..fp {
                rels.push(Relation {
                    p_mat: c1[i].clone(),
                    q_mat: c2[i].clone(),
                    a: i,
                    b: (i + ctx.f) % fp,
                    twist: Twist::Id,
                    scale: ctx.field.one(),
                    shift: 0,
                });
            }
        }
        Relations {
            f: &ctx.field,
            fp,
            d: m1.d,
            prec: m1.prec,
            zeta_comp: &ctx.zeta_comp,
            rels,
        }
    }

    /// Residual of relation `rel` given the full candidate tuple.
    fn residual(&self, rel: &Relation, g: &[SeriesMatrix]) -> SeriesMatrix {
        let f = self.f;
        let ga = &g[rel.a];
        let twisted = match rel.twist {
            Twist::Power(p) => ga.subst_power(f, p),
            Twist::Scale => ga.subst_scale(f, &self.zeta_comp[rel.a]),
            Twist::Id => ga.clone(),
        };
        let lhs = rel.p_mat.mul(f, &twisted);
        let rhs = g[rel.b]
            .mul(f, &rel.q_mat)
            .map(|e| e.shift_up(f, rel.shift).scale(f, &rel.scale));
        lhs.sub(f, &rhs)
    }

    fn all_hold(&self, g: &[SeriesMatrix]) -> bool {
        self.rels.iter().all(|r| self.residual(r, g).is_zero(self.f))
    }
}

/// Exhaustive search over conjugating tuples with entries of degree
/// <= max_deg: constant terms are enumerated first (in base-q counting
/// order per component), and for each constant tuple the higher
/// coefficients are the solution set of a linear system. `require_unit`
/// restricts constant terms to invertible matrices (the Breuil-Kisin case,
/// where it is also sufficient for invertibility of the witness).
fn search(
    rel: &Relations,
    max_deg: usize,
    budget: u64,
    require_unit: bool,
    kernel_cap: u32,
) -> SearchOutcome {
    let f = rel.f;
    let d = rel.d;
    let fp = rel.fp;
    let q = f.order();
    let per_comp = q.pow((d * d) as u32);
    let mut nodes = 0u64;
    // iterate over tuples of constant matrices, component 0 least significant
    let mut counter = vec![0u64; fp];
    loop {
        nodes += 1;
        if nodes > budget {
            return SearchOutcome::BudgetExceeded { nodes };
        }
        let g0: Vec<FMatrix> = counter
            .iter()
            .map(|&idx| const_matrix(f, d, idx))
            .collect();
        let admissible = if require_unit {
            g0.iter().all(|m| m.inverse(f).is_some())
        } else {
            // pole-normalized Laurent case: not all constant terms zero
            g0.iter().any(|m| m.data.iter().any(|c| !f.is_zero(c)))
        };
        if admissible && constant_rows_hold(rel, &g0) {
            match solve_tail(rel, &g0, max_deg, require_unit, kernel_cap, budget, &mut nodes) {
                TailOutcome::Found(g) => return SearchOutcome::Found(g),
                TailOutcome::None => {}
                TailOutcome::Budget => return SearchOutcome::BudgetExceeded { nodes },
            }
        }
        // advance the tuple counter
        let mut i = 0;
        loop {
            if i == fp {
                return SearchOutcome::Exhausted { nodes };
            }
            counter[i] += 1;
            if counter[i] < per_comp {
                break;
            }
            counter[i] = 0;
            i += 1;
        }
    }
}

fn const_matrix(f: &Field, d: usize, idx: u64) -> FMatrix {
    let q = f.order();
    let mut rem = idx;
    let mut m = FMatrix::zero(f, d, d);
    for pos in 0..d * d {
        let digit = rem % q;
        rem /= q;
        *m.at_mut(pos / d, pos % d) = f.element_from_index(digit);
    }
    m
}

/// The mod-u rows of every relation for a candidate constant tuple.
fn constant_rows_hold(rel: &Relations, g0: &[FMatrix]) -> bool {
    let f = rel.f;
    for r in &rel.rels {
        if r.shift > 0 {
            // constant coefficient of the right side vanishes; left must too
            let lhs = r.p_mat.eval_zero(f).mul(f, &g0[r.a]);
            if lhs.data.iter().any(|c| !f.is_zero(c)) {
                return false;
            }
            continue;
        }
        let lhs = r.p_mat.eval_zero(f).mul(f, &g0[r.a]);
        let rhs = g0[r.b].mul(f, &r.q_mat.eval_zero(f)).scale(f, &r.scale);
        if lhs.sub(f, &rhs).data.iter().any(|c| !f.is_zero(c)) {
            return false;
        }
    }
    true
}

enum TailOutcome {
    Found(Vec<SeriesMatrix>),
    None,
    Budget,
}

/// Solves the linear system for coefficients 1..=max_deg given the constant
/// terms. In the unit case any solution is a witness; otherwise the
/// affine solution space is enumerated (up to q^kernel_cap cosets) looking
/// for a tuple with nonzero determinants.
fn solve_tail(
    rel: &Relations,
    g0: &[FMatrix],
    max_deg: usize,
    require_unit: bool,
    kernel_cap: u32,
    budget: u64,
    nodes: &mut u64,
) -> TailOutcome {
    let f = rel.f;
    let d = rel.d;
    let fp = rel.fp;
    let prec = rel.prec;
    let nvna = d * d * max_deg; // unknowns per component
    let nvars = nvna * fp;
    // var index: ((comp * max_deg + (level-1)) * d + r) * d + c
    let var = |comp: usize, level: usize, r: usize, c: usize| -> usize {
        ((comp * max_deg + (level - 1)) * d + r) * d + c
    };

    let mut rows: Vec<Vec<FqElem>> = Vec::new();
    let mut rhs: Vec<FqElem> = Vec::new();
    for relation in &rel.rels {
        // coefficient k of: P * twist(g_a) - scale * u^shift * g_b * Q == 0
        for k in 0..prec {
            for rr in 0..d {
                for cc in 0..d {
                    let mut row = vec![f.zero(); nvars];
                    let mut constant = f.zero();
                    // LHS: sum over inner index m and u-levels
                    for mm in 0..d {
                        // P[rr][mm] (coeff k - j') * twist(g_a)[mm][cc] (coeff j')
                        for jp in 0..=k {
                            let pcoef = &relation.p_mat.at(rr, mm).coeffs[k - jp];
                            if f.is_zero(pcoef) {
                                continue;
                            }
                            // twist(g)^(jp) in terms of g coefficients
                            let (lvl, factor) = match relation.twist {
                                Twist::Power(p) => {
                                    if jp % p != 0 {
                                        continue;
                                    }
                                    (jp / p, f.one())
                                }
                                Twist::Scale => {
                                    (jp, f.pow(&rel.zeta_comp[relation.a], jp as u64))
                                }
                                Twist::Id => (jp, f.one()),
                            };
                            if lvl > max_deg {
                                continue;
                            }
                            let coef = f.mul(pcoef, &factor);
                            if lvl == 0 {
                                let t = f.mul(&coef, g0[relation.a].at(mm, cc));
                                constant = f.add(&constant, &t);
                            } else {
                                let v = var(relation.a, lvl, mm, cc);
                                row[v] = f.add(&row[v], &coef);
                            }
                        }
                    }
                    // RHS: scale * u^shift * g_b * Q, negated into the row
                    if k >= relation.shift {
                        let kk = k - relation.shift;
                        for mm in 0..d {
                            for j in 0..=kk {
                                if j > max_deg {
                                    break;
                                }
                                let qcoef = &relation.q_mat.at(mm, cc).coeffs[kk - j];
                                if f.is_zero(qcoef) {
                                    continue;
                                }
                                let coef = f.mul(&relation.scale, qcoef);
                                if j == 0 {
                                    let t = f.mul(&coef, g0[relation.b].at(rr, mm));
                                    constant = f.sub(&constant, &t);
                                } else {
                                    let v = var(relation.b, j, rr, mm);
                                    row[v] = f.sub(&row[v], &coef);
                                }
                            }
                        }
                    }
                    if row.iter().all(|c| f.is_zero(c)) {
                        if !f.is_zero(&constant) {
                            return TailOutcome::None;
                        }
                        continue;
                    }
                    row.push(f.neg(&constant)); // augmented column: A x = -const
                    rows.push(row);
                    rhs.push(f.zero());
                }
            }
        }
    }
    let _ = rhs;

    // solve the augmented system
    let ncols = nvars + 1;
    let mut aug = FMatrix {
        rows: rows.len(),
        cols: ncols,
        data: rows.into_iter().flatten().collect(),
    };
    if aug.rows == 0 {
        aug = FMatrix::zero(f, 0, ncols);
    }
    let pivots = linalg::rref(f, &mut aug);
    if pivots.contains(&nvars) {
        return TailOutcome::None; // inconsistent
    }
    let mut particular = vec![f.zero(); nvars];
    for (r, &pc) in pivots.iter().enumerate() {
        particular[pc] = aug.at(r, nvars).clone();
    }
    let assemble = |x: &[FqElem]| -> Vec<SeriesMatrix> {
        (0..fp)
            .map(|comp| {
                let mut m = SeriesMatrix::zero(f, d, prec);
                for r in 0..d {
                    for c in 0..d {
                        m.at_mut(r, c).coeffs[0] = g0[comp].at(r, c).clone();
                        for lvl in 1..=max_deg {
                            m.at_mut(r, c).coeffs[lvl] = x[var(comp, lvl, r, c)].clone();
                        }
                    }
                }
                m
            })
            .collect()
    };

    if require_unit {
        let g = assemble(&particular);
        debug_assert!(rel.all_hold(&g));
        return TailOutcome::Found(g);
    }

    // Laurent case: search the affine solution space for nonsingular tuples
    let pivot_set: std::collections::HashSet<usize> = pivots.iter().copied().collect();
    let free: Vec<usize> = (0..nvars).filter(|v| !pivot_set.contains(v)).collect();
    let dim = free.len() as u32;
    if dim > kernel_cap {
        return TailOutcome::Budget;
    }
    let kernel: Vec<Vec<FqElem>> = free
        .iter()
        .map(|&fv| {
            let mut v = vec![f.zero(); nvars];
            v[fv] = f.one();
            for (r, &pc) in pivots.iter().enumerate() {
                v[pc] = f.neg(aug.at(r, fv));
            }
            v
        })
        .collect();
    let q = f.order();
    let combos = q.pow(dim);
    for combo in 0..combos {
        *nodes += 1;
        if *nodes > budget {
            return TailOutcome::Budget;
        }
        let mut x = particular.clone();
        let mut rem = combo;
        for kvec in &kernel {
            let lambda = f.element_from_index(rem % q);
            rem /= q;
            if f.is_zero(&lambda) {
                continue;
            }
            for (xi, ki) in x.iter_mut().zip(kvec) {
                *xi = f.add(xi, &f.mul(&lambda, ki));
            }
        }
        let g = assemble(&x);
        debug_assert!(rel.all_hold(&g));
        if g.iter().all(|gi| gi.det(f).valuation(f).is_some()) {
            return TailOutcome::Found(g);
        }
    }
    TailOutcome::None
}

/// Isomorphism testing for etale phi-modules: conjugators are u^(-B) h with
/// h polynomial, for each pole order B up to the budget. A complete search
/// at every pole order certifies non-isomorphy at the stated budget.
pub fn etale_is_isomorphic(
    e1: &EtalePhiModule,
    e2: &EtalePhiModule,
    pole_budget: usize,
    opts: IsoOptions,
) -> Result<IsoVerdict> {
    if !contexts_match(&e1.ctx, &e2.ctx) {
        return Err(BkError::Precondition("mismatched contexts".into()));
    }
    if e1.d != e2.d || e1.prec != e2.prec {
        return Err(BkError::Precondition(
            "mismatched ranks or precisions".into(),
        ));
    }
    let f = &e1.ctx.field;
    let p = e1.ctx.p as usize;
    for lm in e1.phi.iter().chain(e2.phi.iter()) {
        if lm.pole != 0 {
            return Err(BkError::Precondition(
                "etale search expects pole-0 Frobenius matrices (as produced by etale_of)".into(),
            ));
        }
    }
    // total det valuation mod (p-1) is a phi-conjugacy invariant over F((u))
    let class = |e: &EtalePhiModule| -> i64 {
        let mut total = 0i64;
        for lm in &e.phi {
            let v = lm.mat.det(f).valuation(f).map(|v| v as i64).unwrap_or(0);
            total += v - (e.d as i64) * lm.pole as i64;
        }
        total.rem_euclid((p - 1).max(1) as i64)
    };
    if p > 2 && class(e1) != class(e2) {
        return Ok(IsoVerdict::NonIso {
            reason: NonIsoReason::Invariant {
                name: "det_valuation_mod_p_minus_1".into(),
                left: format!("{}", class(e1)),
                right: format!("{}", class(e2)),
            },
        });
    }
    let base_bound = opts
        .degree_bound
        .unwrap_or_else(|| truncation_bound(&e1.ctx, 1));
    let mut total_nodes = 0u64;
    for pole in 0..=pole_budget {
        let max_deg = base_bound + (p - 1) * pole;
        let rel = Relations::for_etale(e1, e2, pole);
        let budget = opts.node_budget.saturating_sub(total_nodes);
        // Laurent conjugators need not have unit constant term even at pole
        // zero (det h may be a positive power of u times a unit).
        match search(&rel, max_deg, budget, false, 16) {
            SearchOutcome::Found(g) => return Ok(IsoVerdict::Iso { witness: g }),
            SearchOutcome::Exhausted { nodes } => total_nodes += nodes,
            SearchOutcome::BudgetExceeded { nodes } => {
                return Ok(IsoVerdict::Unknown {
                    nodes: total_nodes + nodes,
                })
            }
        }
    }
    Ok(IsoVerdict::NonIso {
        reason: NonIsoReason::SearchExhausted {
            degree_bound: base_bound + (p - 1) * pole_budget,
            nodes: total_nodes,
        },
    })
}

impl<'a> Relations<'a> {
    /// Relations for g = u^(-B) h with h polynomial:
    ///   Phi_i phi(h_{i-1}) == u^((p-1)B) h_i Phi'_i
    ///   zeta_i^(-B) Gamma_i h_i(z u) == h_i Gamma'_i
    ///   C_i h_i == h_{i+f} C'_i
    fn for_etale(e1: &'a EtalePhiModule, e2: &'a EtalePhiModule, pole: usize) -> Relations<'a> {
        let ctx = &e1.ctx;
        let f = &ctx.field;
        let fp = ctx.f_prime;
        let p = ctx.p as usize;
        let mut rels = Vec::new();
        for i in 0..fp {
            rels.push(Relation {
                p_mat: e1.phi[i].mat.clone(),
                q_mat: e2.phi[i].mat.clone(),
                a: (i + fp - 1) % fp,
                b: i,
                twist: Twist::Power(p),
                scale: f.one(),
                shift: (p - 1) * pole,
            });
            let zinv = f.inv(&ctx.zeta_comp[i]).expect("zeta is a unit");
            let scale = f.pow(&zinv, pole as u64);
            // move the zeta^(-B) factor onto P
            rels.push(Relation {
                p_mat: e1.gamma[i].mat.map(|e| e.scale(f, &scale)),
                q_mat: e2.gamma[i].mat.clone(),
                a: i,
                b: i,
                twist: Twist::Scale,
                scale: f.one(),
                shift: 0,
            });
        }
        if let (Some(c1), Some(c2)) = (&e1.c_mats, &e2.c_mats) {
            for i in 0..fp {
                rels.push(Relation {
                    p_mat: c1[i].mat.clone(),
                    q_mat: c2[i].mat.clone(),
                    a: i,
                    b: (i + ctx.f) % fp,
                    twist: Twist::Id,
                    scale: f.one(),
                    shift: 0,
                });
            }
        }
        Relations {
            f,
            fp,
            d: e1.d,
            prec: e1.prec,
            zeta_comp: &ctx.zeta_comp,
            rels,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bk::fixtures::*;
    use crate::bk::{etale_of, validate, BKModule};
    use crate::series::SeriesMatrix;

    #[test]
    fn iso_of_rebased_module() {
        let m = m_star();
        let g = vec![mat2(&m.ctx, [&[1], &[0, 1], &[], &[1]], m.prec)];
        let mc = conjugate(&m, &g).unwrap();
        let verdict = is_isomorphic(&m, &mc, IsoOptions::default()).unwrap();
        let IsoVerdict::Iso { witness } = verdict else {
            panic!("expected iso");
        };
        let re = conjugate(&m, &witness).unwrap();
        assert!(modules_equal(&re, &mc));
    }

    #[test]
    fn noniso_by_divisors() {
        let m = m_star();
        let ctx = &m.ctx;
        let ident = BKModule::new(
            ctx.clone(),
            2,
            m.prec,
            vec![SeriesMatrix::identity(&ctx.field, 2, m.prec)],
            vec![mat2(ctx, [&[1], &[], &[], &[-1]], m.prec)],
            None,
        );
        let verdict = is_isomorphic(&m, &ident, IsoOptions::default()).unwrap();
        match verdict {
            IsoVerdict::NonIso {
                reason: NonIsoReason::Invariant { name, .. },
            } => assert_eq!(name, "elementary_divisors"),
            other => panic!("expected invariant non-iso, got {other:?}"),
        }
    }

    #[test]
    fn zero_budget_gives_unknown() {
        let m = m_star();
        let m2 = m.clone();
        let verdict = is_isomorphic(
            &m,
            &m2,
            IsoOptions {
                degree_bound: None,
                node_budget: 0,
            },
        )
        .unwrap();
        assert!(matches!(verdict, IsoVerdict::Unknown { .. }));
    }

    #[test]
    fn etale_example_noniso_at_pole_budget() {
        // Phi = Id vs Phi = diag(1, u^2), both with trivial gamma: these are
        // isomorphic as etale phi-modules without descent data, but the
        // gamma intertwining obstructs it.
        let ctx = c1();
        let prec = 8;
        let ident = BKModule::new(
            ctx.clone(),
            2,
            prec,
            vec![SeriesMatrix::identity(&ctx.field, 2, prec)],
            vec![SeriesMatrix::identity(&ctx.field, 2, prec)],
            None,
        );
        let diag = BKModule::new(
            ctx.clone(),
            2,
            prec,
            vec![mat2(&ctx, [&[1], &[], &[], &[0, 0, 1]], prec)],
            vec![SeriesMatrix::identity(&ctx.field, 2, prec)],
            None,
        );
        assert!(validate(&ident, 1).unwrap().pass);
        assert!(validate(&diag, 1).unwrap().pass);
        let e1 = etale_of(&ident, 1).unwrap();
        let e2 = etale_of(&diag, 1).unwrap();
        let verdict = etale_is_isomorphic(
            &e1,
            &e2,
            2,
            IsoOptions {
                degree_bound: None,
                node_budget: 10_000_000,
            },
        )
        .unwrap();
        match verdict {
            IsoVerdict::NonIso {
                reason: NonIsoReason::SearchExhausted { .. },
            } => {}
            other => panic!("expected exhausted non-iso, got {other:?}"),
        }
    }

    #[test]
    fn etale_iso_of_conjugate() {
        let m = m_star();
        let g = vec![mat2(&m.ctx, [&[1], &[0, 1], &[], &[1]], m.prec)];
        let mc = conjugate(&m, &g).unwrap();
        let e1 = etale_of(&m, 1).unwrap();
        let e2 = etale_of(&mc, 1).unwrap();
        let verdict = etale_is_isomorphic(&e1, &e2, 1, IsoOptions::default()).unwrap();
        assert!(verdict.is_iso());
    }
}
