//! Deterministic enumeration grids over monomial-dominated Frobenius
//! patterns with constant descent data; candidates are validated and
//! invalid ones are counted by rejection reason.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::bk::{validate, BKModule};
use crate::context::{Ctx, Flavor};
use crate::error::{BkError, Result};
use crate::field::FqElem;
use crate::series::{SeriesMatrix, TruncPoly};

/// Frobenius pattern classes; exponents are drawn from the grid range and
/// coefficients from the nonzero field elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PhiClass {
    DiagonalMonomial,
    AntidiagonalMonomial,
    /// Monomial base (both kinds) plus one extra monomial entry of degree
    /// at most the bound.
    Perturbed { degree_bound: usize },
}

/// Descent pattern classes; constant matrices with entries in mu_(e_k).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DescentClass {
    ConstantDiagonal,
    ConstantAntidiagonal,
    /// Explicit list of constant matrices (row-major field elements).
    ConstantGeneral(Vec<Vec<FqElem>>),
}

/// Cuspidal c-matrix pattern classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CClass {
    Identity,
    ConstantDiagonal,
    ConstantAntidiagonal,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GridMode {
    Exhaustive,
    /// Draw candidates with the seeded generator until `valid` validated
    /// modules are collected or `max_draws` candidates were tried.
    Sample { valid: usize, max_draws: u64 },
}

#[derive(Clone, Debug)]
pub struct EnumerationGrid {
    pub ctx: Ctx,
    pub d: usize,
    pub h: usize,
    pub phi_classes: Vec<PhiClass>,
    /// Inclusive exponent range for the monomials.
    pub exp_lo: usize,
    pub exp_hi: usize,
    pub descent_classes: Vec<DescentClass>,
    pub c_classes: Vec<CClass>,
    pub seed: u64,
    pub mode: GridMode,
    pub cap: u64,
    pub prec: Option<usize>,
    /// Restrict monomial coefficients to 1 (smaller grids; types and
    /// validity patterns are coefficient-insensitive for monomials).
    pub monic: bool,
}

impl EnumerationGrid {
    /// The default desk-scale grid for a context: all pattern classes,
    /// exponents up to h*e', perturbation degree 2.
    pub fn default_for(ctx: &Ctx, d: usize, h: usize, mode: GridMode, seed: u64) -> Self {
        EnumerationGrid {
            ctx: ctx.clone(),
            d,
            h,
            phi_classes: vec![
                PhiClass::DiagonalMonomial,
                PhiClass::AntidiagonalMonomial,
                PhiClass::Perturbed { degree_bound: 2 },
            ],
            exp_lo: 0,
            exp_hi: h * ctx.e_prime,
            descent_classes: vec![
                DescentClass::ConstantDiagonal,
                DescentClass::ConstantAntidiagonal,
            ],
            c_classes: vec![CClass::Identity, CClass::ConstantDiagonal, CClass::ConstantAntidiagonal],
            seed,
            mode,
            cap: 1_000_000,
            prec: None,
            monic: false,
        }
    }

    pub fn precision(&self) -> usize {
        self.prec.unwrap_or(2 * self.ctx.e_prime + 2)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RejectStats {
    pub by_reason: BTreeMap<String, u64>,
    pub candidates: u64,
}

/// Per-component choice of a monomial matrix pattern.
#[derive(Clone, Debug)]
struct PhiChoice {
    /// entries as (row, col, coeff_index (nonzero), exponent)
    entries: Vec<(usize, usize, u64, usize)>,
}

fn mu_elements(ctx: &Ctx) -> Vec<FqElem> {
    let f = &ctx.field;
    (0..ctx.e_k).map(|n| f.pow(&ctx.zeta, n)).collect()
}

fn nonzero_elements(ctx: &Ctx) -> Vec<FqElem> {
    let f = &ctx.field;
    (1..f.order()).map(|i| f.element_from_index(i)).collect()
}

fn phi_choice_to_matrix(grid: &EnumerationGrid, choice: &PhiChoice) -> SeriesMatrix {
    let f = &grid.ctx.field;
    let prec = grid.precision();
    let nz = nonzero_elements(&grid.ctx);
    let mut m = SeriesMatrix::zero(f, grid.d, prec);
    for &(r, c, ci, e) in &choice.entries {
        let coeff = nz[ci as usize].clone();
        *m.at_mut(r, c) = m.at(r, c).add(f, &TruncPoly::monomial(f, coeff, e, prec));
    }
    m
}

/// All per-component phi patterns of one class, in lexicographic order.
fn phi_patterns(grid: &EnumerationGrid, class: &PhiClass) -> Vec<PhiChoice> {
    let nz = if grid.monic {
        1
    } else {
        nonzero_elements(&grid.ctx).len() as u64
    };
    let exps: Vec<usize> = (grid.exp_lo..=grid.exp_hi).collect();
    let d = grid.d;
    let mut out = Vec::new();
    if exps.is_empty() {
        return out;
    }
    let positions_diag: Vec<(usize, usize)> = (0..d).map(|i| (i, i)).collect();
    let positions_anti: Vec<(usize, usize)> = (0..d).map(|i| (i, d - 1 - i)).collect();
    let base_positions = |class: &PhiClass| -> Vec<Vec<(usize, usize)>> {
        match class {
            PhiClass::DiagonalMonomial => vec![positions_diag.clone()],
            PhiClass::AntidiagonalMonomial => {
                if d == 1 {
                    Vec::new() // same as diagonal for rank 1
                } else {
                    vec![positions_anti.clone()]
                }
            }
            PhiClass::Perturbed { .. } => {
                if d == 1 {
                    Vec::new()
                } else {
                    vec![positions_diag.clone(), positions_anti.clone()]
                }
            }
        }
    };
    for base in base_positions(class) {
        // enumerate coefficient indices and exponents per base entry
        let n = base.len();
        let mut counters = vec![0u64; 2 * n]; // coeff index, exponent index alternating
        'outer: loop {
            let entries: Vec<(usize, usize, u64, usize)> = (0..n)
                .map(|k| {
                    let (r, c) = base[k];
                    (r, c, counters[2 * k], exps[counters[2 * k + 1] as usize])
                })
                .collect();
            match class {
                PhiClass::Perturbed { degree_bound } => {
                    // add one extra entry at each off-pattern position
                    let used: Vec<(usize, usize)> = base.clone();
                    for pr in 0..d {
                        for pc in 0..d {
                            if used.contains(&(pr, pc)) {
                                continue;
                            }
                            for ci in 0..nz {
                                for pe in 0..=*degree_bound {
                                    let mut e2 = entries.clone();
                                    e2.push((pr, pc, ci, pe));
                                    out.push(PhiChoice { entries: e2 });
                                }
                            }
                        }
                    }
                }
                _ => out.push(PhiChoice {
                    entries: entries.clone(),
                }),
            }
            // advance counters
            let mut k = 0;
            loop {
                if k == 2 * n {
                    break 'outer;
                }
                counters[k] += 1;
                let limit = if k % 2 == 0 { nz } else { exps.len() as u64 };
                if counters[k] < limit {
                    break;
                }
                counters[k] = 0;
                k += 1;
            }
        }
    }
    out
}

/// All constant descent matrices of one class.
fn descent_patterns(grid: &EnumerationGrid, class: &DescentClass) -> Vec<Vec<FqElem>> {
    let mu = mu_elements(&grid.ctx);
    let d = grid.d;
    let f = &grid.ctx.field;
    let mut out = Vec::new();
    match class {
        DescentClass::ConstantDiagonal => {
            let mut idx = vec![0usize; d];
            loop {
                let mut m = vec![f.zero(); d * d];
                for r in 0..d {
                    m[r * d + r] = mu[idx[r]].clone();
                }
                out.push(m);
                let mut k = 0;
                loop {
                    if k == d {
                        return out;
                    }
                    idx[k] += 1;
                    if idx[k] < mu.len() {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
            }
        }
        DescentClass::ConstantAntidiagonal => {
            if d == 1 {
                return Vec::new();
            }
            let mut idx = vec![0usize; d];
            loop {
                let mut m = vec![f.zero(); d * d];
                for r in 0..d {
                    m[r * d + (d - 1 - r)] = mu[idx[r]].clone();
                }
                out.push(m);
                let mut k = 0;
                loop {
                    if k == d {
                        return out;
                    }
                    idx[k] += 1;
                    if idx[k] < mu.len() {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
            }
        }
        DescentClass::ConstantGeneral(mats) => mats.clone(),
    }
}

fn c_patterns(grid: &EnumerationGrid, class: &CClass) -> Vec<Vec<FqElem>> {
    let f = &grid.ctx.field;
    let d = grid.d;
    match class {
        CClass::Identity => {
            let mut m = vec![f.zero(); d * d];
            for r in 0..d {
                m[r * d + r] = f.one();
            }
            vec![m]
        }
        CClass::ConstantDiagonal => descent_patterns(grid, &DescentClass::ConstantDiagonal),
        CClass::ConstantAntidiagonal => {
            descent_patterns(grid, &DescentClass::ConstantAntidiagonal)
        }
    }
}

fn const_matrix_of(grid: &EnumerationGrid, data: &[FqElem]) -> SeriesMatrix {
    let f = &grid.ctx.field;
    let prec = grid.precision();
    let d = grid.d;
    let mut m = SeriesMatrix::zero(f, d, prec);
    for r in 0..d {
        for c in 0..d {
            *m.at_mut(r, c) = TruncPoly::constant(f, data[r * d + c].clone(), prec);
        }
    }
    m
}

/// Deterministic enumeration: validated modules plus rejection statistics.
pub fn enumerate(grid: &EnumerationGrid) -> Result<(Vec<BKModule>, RejectStats)> {
    let ctx = &grid.ctx;
    let fp = ctx.f_prime;
    let cuspidal = ctx.flavor == Flavor::Cuspidal;
    let mut stats = RejectStats::default();
    let mut modules = Vec::new();

    let mut all_phi: Vec<PhiChoice> = Vec::new();
    for class in &grid.phi_classes {
        all_phi.extend(phi_patterns(grid, class));
    }
    let mut all_descent: Vec<Vec<FqElem>> = Vec::new();
    for class in &grid.descent_classes {
        all_descent.extend(descent_patterns(grid, class));
    }
    let mut all_c: Vec<Vec<FqElem>> = Vec::new();
    if cuspidal {
        for class in &grid.c_classes {
            all_c.extend(c_patterns(grid, class));
        }
    }
    if all_phi.is_empty() || all_descent.is_empty() || (cuspidal && all_c.is_empty()) {
        return Ok((modules, stats));
    }

    match &grid.mode {
        GridMode::Exhaustive => {
            // candidate count: (phi * descent)^(f') * c^(f' if cuspidal)
            let per_comp = (all_phi.len() as u64)
                .checked_mul(all_descent.len() as u64)
                .and_then(|x| {
                    if cuspidal {
                        x.checked_mul(all_c.len() as u64)
                    } else {
                        Some(x)
                    }
                })
                .ok_or(BkError::CapExceeded {
                    candidates: u64::MAX,
                    cap: grid.cap,
                })?;
            let total = per_comp
                .checked_pow(fp as u32)
                .ok_or(BkError::CapExceeded {
                    candidates: u64::MAX,
                    cap: grid.cap,
                })?;
            if total > grid.cap {
                return Err(BkError::CapExceeded {
                    candidates: total,
                    cap: grid.cap,
                });
            }
            let mut counter = vec![0u64; fp];
            loop {
                let mut phi = Vec::with_capacity(fp);
                let mut gamma = Vec::with_capacity(fp);
                let mut cm = Vec::with_capacity(fp);
                for &sel in counter.iter() {
                    let pi = (sel % all_phi.len() as u64) as usize;
                    let rest = sel / all_phi.len() as u64;
                    let di = (rest % all_descent.len() as u64) as usize;
                    phi.push(phi_choice_to_matrix(grid, &all_phi[pi]));
                    gamma.push(const_matrix_of(grid, &all_descent[di]));
                    if cuspidal {
                        let ci = (rest / all_descent.len() as u64) as usize;
                        cm.push(const_matrix_of(grid, &all_c[ci]));
                    }
                }
                let m = BKModule::new(
                    ctx.clone(),
                    grid.d,
                    grid.precision(),
                    phi,
                    gamma,
                    if cuspidal { Some(cm) } else { None },
                );
                consider(grid, m, &mut modules, &mut stats);
                // advance
                let mut k = 0;
                loop {
                    if k == fp {
                        return Ok((modules, stats));
                    }
                    counter[k] += 1;
                    if counter[k] < per_comp {
                        break;
                    }
                    counter[k] = 0;
                    k += 1;
                }
            }
        }
        GridMode::Sample { valid, max_draws } => {
            // the sampler draws the Frobenius tuple and the descent data on
            // component 0, then solves the commutation chain for the other
            // components (blind draws almost never satisfy the chain);
            // validate still gates every emitted candidate
            let mut rng = ChaCha20Rng::seed_from_u64(grid.seed);
            let mut draws = 0u64;
            while modules.len() < *valid && draws < *max_draws {
                draws += 1;
                stats.candidates += 1;
                let mut phi = Vec::with_capacity(fp);
                for _ in 0..fp {
                    let pi = rng.random_range(0..all_phi.len());
                    phi.push(phi_choice_to_matrix(grid, &all_phi[pi]));
                }
                let d0 = const_matrix_of(grid, &all_descent[rng.random_range(0..all_descent.len())]);
                let Some(gamma) = propagate_descent_chain(grid, &phi, d0) else {
                    *stats.by_reason.entry("chain_unsolvable".into()).or_insert(0) += 1;
                    continue;
                };
                let c_mats = if cuspidal {
                    let c0 = const_matrix_of(grid, &all_c[rng.random_range(0..all_c.len())]);
                    match propagate_c_chain(grid, &phi, c0) {
                        Some(cm) => Some(cm),
                        None => {
                            *stats
                                .by_reason
                                .entry("c_chain_unsolvable".into())
                                .or_insert(0) += 1;
                            continue;
                        }
                    }
                } else {
                    None
                };
                let m = BKModule::new(ctx.clone(), grid.d, grid.precision(), phi, gamma, c_mats);
                stats.candidates -= 1; // consider() recounts
                consider(grid, m, &mut modules, &mut stats);
            }
            Ok((modules, stats))
        }
    }
}

fn consider(
    grid: &EnumerationGrid,
    m: BKModule,
    modules: &mut Vec<BKModule>,
    stats: &mut RejectStats,
) {
    stats.candidates += 1;
    match validate(&m, grid.h) {
        Ok(report) if report.pass => modules.push(m),
        Ok(report) => {
            for check in report.checks.iter().filter(|c| !c.pass) {
                *stats.by_reason.entry(check.name.clone()).or_insert(0) += 1;
            }
        }
        Err(e) => {
            *stats
                .by_reason
                .entry(format!("error: {e}"))
                .or_insert(0) += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bk::fixtures::{c1, c2, m_star};
    use crate::iso::modules_equal;

    #[test]
    fn c1_diagonal_grid_contains_m_star() {
        let ctx = c1();
        let grid = EnumerationGrid {
            ctx: ctx.clone(),
            d: 2,
            h: 1,
            phi_classes: vec![PhiClass::DiagonalMonomial],
            exp_lo: 0,
            exp_hi: 2,
            descent_classes: vec![DescentClass::ConstantDiagonal],
            c_classes: vec![],
            seed: 0,
            mode: GridMode::Exhaustive,
            cap: 1_000_000,
            prec: None,
            monic: false,
        };
        let (mods, stats) = enumerate(&grid).unwrap();
        assert!(stats.candidates > 0);
        let target = m_star();
        assert!(mods.iter().any(|m| modules_equal(m, &target)));
    }

    #[test]
    fn empty_exponent_range_gives_empty_stream() {
        let ctx = c1();
        let mut grid = EnumerationGrid::default_for(&ctx, 2, 1, GridMode::Exhaustive, 0);
        grid.exp_lo = 1;
        grid.exp_hi = 0;
        let (mods, stats) = enumerate(&grid).unwrap();
        assert!(mods.is_empty());
        assert_eq!(stats.candidates, 0);
    }

    #[test]
    fn c2_rank1_grid_contains_mixed_instance() {
        let ctx = c2();
        let grid = EnumerationGrid {
            ctx: ctx.clone(),
            d: 1,
            h: 1,
            phi_classes: vec![PhiClass::DiagonalMonomial],
            exp_lo: 0,
            exp_hi: 8,
            descent_classes: vec![DescentClass::ConstantDiagonal],
            c_classes: vec![],
            seed: 0,
            mode: GridMode::Exhaustive,
            cap: 10_000_000,
            prec: None,
            monic: true,
        };
        let (mods, _) = enumerate(&grid).unwrap();
        let mut found_mixed = false;
        let mut found_unmixed = false;
        let mut found_instance = false;
        let f = &ctx.field;
        for m in &mods {
            let (t, unmixed) = crate::bk::type_of(m).unwrap();
            if unmixed {
                found_unmixed = true;
            } else {
                found_mixed = true;
            }
            // the specific instance (r0, r1, c0, c1) = (5, 1, zeta^3, 1)
            let is_instance = m.phi[0].at(0, 0).valuation(f) == Some(5)
                && m.phi[1].at(0, 0).valuation(f) == Some(1)
                && m.phi[0].at(0, 0).coeffs[5] == f.one()
                && m.phi[1].at(0, 0).coeffs[1] == f.one()
                && m.gamma[0].at(0, 0).eval_zero() == f.pow(&ctx.zeta, 3)
                && m.gamma[1].at(0, 0).eval_zero() == f.one();
            if is_instance {
                found_instance = true;
                assert_eq!(t.components, vec![vec![3], vec![0]]);
                assert!(!unmixed);
            }
        }
        assert!(found_mixed && found_unmixed && found_instance);
    }

    #[test]
    fn exhaustive_enumeration_is_deterministic() {
        let ctx = c1();
        let g1 = EnumerationGrid::default_for(&ctx, 2, 1, GridMode::Exhaustive, 1);
        let g2 = EnumerationGrid::default_for(&ctx, 2, 1, GridMode::Exhaustive, 2);
        let (m1, _) = enumerate(&g1).unwrap();
        let (m2, _) = enumerate(&g2).unwrap();
        assert_eq!(m1.len(), m2.len());
        for (a, b) in m1.iter().zip(&m2) {
            assert!(modules_equal(a, b));
        }
    }

    #[test]
    fn cap_exceeded_is_reported() {
        let ctx = c1();
        let mut grid = EnumerationGrid::default_for(&ctx, 2, 1, GridMode::Exhaustive, 0);
        grid.cap = 10;
        assert!(matches!(
            enumerate(&grid),
            Err(BkError::CapExceeded { .. })
        ));
    }
}
