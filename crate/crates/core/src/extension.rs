//! Change of extension: inflation of a module along a refinement L'/K' of
//! the tame extension (substituting u -> u^m and spreading components along
//! k' in l'), and the inverse descent by Galois averaging.

use std::collections::HashMap;

use crate::bk::BKModule;
use crate::context::Ctx;
use crate::error::{BkError, Result};
use crate::field::{Field, FieldEmbedding, FqElem};
use crate::linalg::{self, FMatrix};
use crate::series::{SeriesMatrix, TruncPoly};

/// Ramification and inertia ratios of a context refinement, after checking
/// compatibility (same K, compatible uniformizer data and zeta).
pub struct Refinement {
    /// e(L'/K'): the u-substitution exponent.
    pub m: usize,
    /// [l' : k'].
    pub t: usize,
    pub emb: FieldEmbedding,
}

pub fn refinement_of(small: &Ctx, big: &Ctx) -> Result<Refinement> {
    if small.p != big.p || small.f != big.f || small.e != big.e {
        return Err(BkError::Precondition(
            "refinement must keep the base field K (same p, e, f)".into(),
        ));
    }
    if big.e_prime % small.e_prime != 0 || big.f_prime % small.f_prime != 0 {
        return Err(BkError::Precondition(
            "refinement ratios are not integral".into(),
        ));
    }
    let m = big.e_prime / small.e_prime;
    let t = big.f_prime / small.f_prime;
    if big.e_k != small.e_k * m as u64 {
        return Err(BkError::Precondition("inertia orders are incompatible".into()));
    }
    if (m * t) as u64 % small.p == 0 {
        return Err(BkError::Precondition("[L':K'] must be prime to p".into()));
    }
    let emb = small.field.embedding_into(&big.field)?;
    if emb.map(&small.zeta) != big.field.pow(&big.zeta, m as u64) {
        return Err(BkError::Precondition(
            "zeta values are incompatible (need zeta_L^m = zeta)".into(),
        ));
    }
    if emb.map(&small.cbar) != big.cbar {
        return Err(BkError::Precondition(
            "cbar values are incompatible under the embedding".into(),
        ));
    }
    Ok(Refinement { m, t, emb })
}

/// Inflates a module along a refinement: coefficients embed, u -> u^m,
/// component i' carries the data of component i' mod f'; when the
/// refinement adds an unramified quadratic layer the c-action of the
/// inflated module restricts trivially to K' and is the identity matrix.
pub fn inflate(module: &BKModule, ctx_big: &Ctx) -> Result<BKModule> {
    let r = refinement_of(&module.ctx, ctx_big)?;
    let fb = &ctx_big.field;
    let fp_small = module.ctx.f_prime;
    let fp_big = ctx_big.f_prime;
    let prec_big = module.prec * r.m;
    let map_mat = |mat: &SeriesMatrix| -> SeriesMatrix {
        let mut out = SeriesMatrix::zero(fb, mat.dim, prec_big);
        for rr in 0..mat.dim {
            for cc in 0..mat.dim {
                let src = mat.at(rr, cc);
                for (k, coef) in src.coeffs.iter().enumerate() {
                    if k * r.m < prec_big {
                        out.at_mut(rr, cc).coeffs[k * r.m] = r.emb.map(coef);
                    }
                }
            }
        }
        out
    };
    let phi: Vec<SeriesMatrix> = (0..fp_big)
        .map(|i| map_mat(&module.phi[i % fp_small]))
        .collect();
    let gamma: Vec<SeriesMatrix> = (0..fp_big)
        .map(|i| map_mat(&module.gamma[i % fp_small]))
        .collect();
    let c_mats = if ctx_big.flavor == crate::context::Flavor::Cuspidal {
        let cs = match (&module.c_mats, r.t) {
            (Some(cs), 1) => (0..fp_big).map(|i| map_mat(&cs[i % fp_small])).collect(),
            (None, 2) => vec![SeriesMatrix::identity(fb, module.d, prec_big); fp_big],
            _ => {
                return Err(BkError::Precondition(
                    "unsupported flavor combination for inflation".into(),
                ))
            }
        };
        Some(cs)
    } else {
        if module.c_mats.is_some() {
            return Err(BkError::Precondition(
                "cannot inflate a cuspidal module into a non-cuspidal context".into(),
            ));
        }
        None
    };
    Ok(BKModule {
        ctx: ctx_big.clone(),
        d: module.d,
        prec: prec_big,
        phi,
        gamma,
        c_mats,
    })
}

/// Coordinate layout for the descent: one class of components (congruent
/// mod f'_small), index = (power * d + row) * t + block.
struct ClassSpace {
    d: usize,
    t: usize,
    prec: usize,
}

impl ClassSpace {
    fn dim(&self) -> usize {
        self.prec * self.d * self.t
    }
    fn idx(&self, power: usize, row: usize, block: usize) -> usize {
        (power * self.d + row) * self.t + block
    }
    fn shift(&self, f: &Field, v: &[FqElem], s: usize) -> Vec<FqElem> {
        let mut out = vec![f.zero(); self.dim()];
        for power in 0..self.prec.saturating_sub(s) {
            for row in 0..self.d {
                for b in 0..self.t {
                    out[self.idx(power + s, row, b)] = v[self.idx(power, row, b)].clone();
                }
            }
        }
        out
    }
}

/// Applies a per-block polynomial matrix with an optional argument twist to
/// a class vector: block b gets M_b(u) x_b(s_b u).
fn apply_blockwise(
    f: &Field,
    cs: &ClassSpace,
    mats: &[&SeriesMatrix],
    twists: &[FqElem],
    v: &[FqElem],
    out_block_of: impl Fn(usize) -> usize,
) -> Vec<FqElem> {
    let mut out = vec![f.zero(); cs.dim()];
    for b in 0..cs.t {
        // extract block polynomial vector
        let mut polys = vec![TruncPoly::zero(f, cs.prec); cs.d];
        for row in 0..cs.d {
            for power in 0..cs.prec {
                polys[row].coeffs[power] = v[cs.idx(power, row, b)].clone();
            }
        }
        let twisted: Vec<TruncPoly> = polys
            .iter()
            .map(|q| q.subst_scale(f, &twists[b]))
            .collect();
        let target = out_block_of(b);
        for row in 0..cs.d {
            let mut acc = TruncPoly::zero(f, cs.prec);
            for c in 0..cs.d {
                acc = acc.add(f, &mats[b].at(row, c).mul(f, &twisted[c]));
            }
            for power in 0..cs.prec {
                out[cs.idx(power, row, target)] =
                    f.add(&out[cs.idx(power, row, target)], &acc.coeffs[power]);
            }
        }
    }
    out
}

/// Substitution u -> u^p on a class vector (blockwise, coefficients fixed).
fn frobenius_subst(f: &Field, cs: &ClassSpace, v: &[FqElem], p: usize) -> Vec<FqElem> {
    let mut out = vec![f.zero(); cs.dim()];
    for power in 0..cs.prec {
        if power * p >= cs.prec {
            break;
        }
        for row in 0..cs.d {
            for b in 0..cs.t {
                out[cs.idx(power * p, row, b)] = v[cs.idx(power, row, b)].clone();
            }
        }
    }
    out
}

/// Descends a module along a refinement by taking Galois invariants via the
/// averaging idempotent. Errors when the invariants are not free of the
/// expected rank (the type is not inflated from the smaller extension) or
/// when the result does not lie over the smaller coefficient field.
pub fn descend(module: &BKModule, ctx_small: &Ctx) -> Result<BKModule> {
    let ctx_big = &module.ctx;
    let r = refinement_of(ctx_small, ctx_big)?;
    let fb = &ctx_big.field;
    let d = module.d;
    if module.prec % r.m != 0 {
        return Err(BkError::Precondition(format!(
            "precision {} is not divisible by the ramification ratio {}",
            module.prec, r.m
        )));
    }
    let prec_small = module.prec / r.m;
    let fp_small = ctx_small.f_prime;
    let cs = ClassSpace {
        d,
        t: r.t,
        prec: module.prec,
    };

    // the subgroup Gal(L'/K') is generated by gamma^e_k (order m) and, when
    // t = 2, by c (which restricts trivially to K')
    let inv_order = fb.inv(&fb.from_int((r.m * r.t) as i64))?;

    // per class: projector image, greedy module generators, and matrices
    let mut gens_per_class: Vec<Vec<Vec<FqElem>>> = Vec::with_capacity(fp_small);
    for class in 0..fp_small {
        let blocks: Vec<usize> = (0..r.t).map(|b| class + b * fp_small).collect();
        // gamma^e_k as a blockwise operator (stays within each block)
        let comp_mats: Vec<SeriesMatrix> = blocks
            .iter()
            .map(|&i| module.gamma_power_matrix(i, ctx_small.e_k))
            .collect();
        let comp_twists: Vec<FqElem> = blocks
            .iter()
            .map(|&i| fb.pow(&ctx_big.zeta_comp[i], ctx_small.e_k))
            .collect();
        // sum over the group of the orbit of each standard basis vector
        let dim = cs.dim();
        let mut proj = FMatrix::zero(fb, dim, dim);
        for col in 0..dim {
            let mut basis_vec = vec![fb.zero(); dim];
            basis_vec[col] = fb.one();
            let mut acc = vec![fb.zero(); dim];
            // orbit under <gamma^e_k> x <c>
            let mut ga = basis_vec.clone();
            for _ in 0..r.m {
                // add ga and (if t = 2) c(ga)
                for (a, g) in acc.iter_mut().zip(&ga) {
                    *a = fb.add(a, g);
                }
                if r.t == 2 {
                    let cls = module.c_mats.as_ref().expect("cuspidal big context");
                    let cmats: Vec<&SeriesMatrix> =
                        blocks.iter().map(|&i| &cls[i]).collect();
                    let cga = apply_blockwise(
                        fb,
                        &cs,
                        &cmats,
                        &vec![fb.one(); r.t],
                        &ga,
                        |b| (b + 1) % 2,
                    );
                    for (a, g) in acc.iter_mut().zip(&cga) {
                        *a = fb.add(a, g);
                    }
                }
                let refs: Vec<&SeriesMatrix> = comp_mats.iter().collect();
                ga = apply_blockwise(fb, &cs, &refs, &comp_twists, &ga, |b| b);
            }
            for (ridx, a) in acc.iter().enumerate() {
                *proj.at_mut(ridx, col) = fb.mul(a, &inv_order);
            }
        }
        // image basis, echelonized in the (power, row, block) order
        let cols: Vec<Vec<FqElem>> = (0..dim)
            .map(|c| (0..dim).map(|rr| proj.at(rr, c).clone()).collect())
            .collect();
        let image = linalg::row_basis(fb, cols);
        if image.len() != d * prec_small {
            return Err(BkError::Precondition(format!(
                "invariants have dimension {} (expected {}): type is not inflated",
                image.len(),
                d * prec_small
            )));
        }
        // greedy module generators over F[v], v = u^m
        let mut chosen: Vec<Vec<FqElem>> = Vec::new();
        let mut span: Vec<Vec<FqElem>> = Vec::new();
        for v in &image {
            if chosen.len() == d {
                break;
            }
            if linalg::in_span(fb, &linalg::row_basis(fb, span.clone()), v) {
                continue;
            }
            for c in 0..prec_small {
                span.push(cs.shift(fb, v, r.m * c));
            }
            chosen.push(v.clone());
        }
        if chosen.len() != d || linalg::rank(fb, span) != d * prec_small {
            return Err(BkError::Precondition(
                "invariants are not free of the expected rank".into(),
            ));
        }
        // the tensoring-up map S' (x) invariants -> N must be surjective:
        // block projections of the generators under all u-shifts span the
        // whole class space (fails exactly when the type is not inflated)
        let mut full_span: Vec<Vec<FqElem>> = Vec::new();
        for w in &chosen {
            for b in 0..r.t {
                let mut proj = vec![fb.zero(); cs.dim()];
                for power in 0..cs.prec {
                    for row in 0..d {
                        proj[cs.idx(power, row, b)] = w[cs.idx(power, row, b)].clone();
                    }
                }
                for j in 0..cs.prec {
                    full_span.push(cs.shift(fb, &proj, j));
                }
            }
        }
        if linalg::rank(fb, full_span) != cs.dim() {
            return Err(BkError::Precondition(
                "invariants do not generate the module over the larger ring (type not inflated)"
                    .into(),
            ));
        }
        gens_per_class.push(chosen);
    }

    // express a class vector in module coordinates over the generators
    let express = |class: usize, v: &[FqElem]| -> Result<Vec<TruncPoly>> {
        let gens = &gens_per_class[class];
        let dim = cs.dim();
        let mut mat = FMatrix::zero(fb, dim, d * prec_small);
        for (b, w) in gens.iter().enumerate() {
            for c in 0..prec_small {
                let col = cs.shift(fb, w, r.m * c);
                for (ridx, val) in col.into_iter().enumerate() {
                    *mat.at_mut(ridx, b * prec_small + c) = val;
                }
            }
        }
        let x = linalg::solve(fb, &mat, v).ok_or_else(|| {
            BkError::Precondition("image does not lie in the invariant module".into())
        })?;
        Ok((0..d)
            .map(|b| TruncPoly {
                coeffs: (0..prec_small).map(|c| x[b * prec_small + c].clone()).collect(),
            })
            .collect())
    };

    // coefficient pull-back through the field embedding
    let mut back: HashMap<FqElem, FqElem> = HashMap::new();
    for idx in 0..ctx_small.field.order() {
        let a = ctx_small.field.element_from_index(idx);
        back.insert(r.emb.map(&a), a);
    }
    let pull = |q: &TruncPoly| -> Result<TruncPoly> {
        let coeffs: Option<Vec<FqElem>> = q.coeffs.iter().map(|c| back.get(c).cloned()).collect();
        coeffs
            .map(|c| TruncPoly { coeffs: c })
            .ok_or_else(|| {
                BkError::Precondition(
                    "descended matrix has coefficients outside the smaller field".into(),
                )
            })
    };

    let mut phi_small = Vec::with_capacity(fp_small);
    let mut gamma_small = Vec::with_capacity(fp_small);
    let mut c_small: Option<Vec<SeriesMatrix>> = if ctx_small.flavor
        == crate::context::Flavor::Cuspidal
    {
        Some(Vec::with_capacity(fp_small))
    } else {
        None
    };
    for class in 0..fp_small {
        let prev = (class + fp_small - 1) % fp_small;
        let blocks: Vec<usize> = (0..r.t).map(|b| class + b * fp_small).collect();
        // Frobenius: z_{i'} = Phi_{i'} (w_{i'-1})(u^p) blockwise; the source
        // class is `prev` and block b of the source feeds block b of the
        // target (components i'-1 and i' share the residue b).
        let phi_mats: Vec<&SeriesMatrix> = blocks.iter().map(|&i| &module.phi[i]).collect();
        let mut phi_out = SeriesMatrix::zero(&ctx_small.field, d, prec_small);
        for (k, w) in gens_per_class[prev].iter().enumerate() {
            let tw = frobenius_subst(fb, &cs, w, ctx_big.p as usize);
            let z = apply_blockwise(fb, &cs, &phi_mats, &vec![fb.one(); r.t], &tw, |b| b);
            let coords = express(class, &z)?;
            for (ridx, q) in coords.into_iter().enumerate() {
                *phi_out.at_mut(ridx, k) = pull(&q)?;
            }
        }
        phi_small.push(phi_out);

        let gam_mats: Vec<&SeriesMatrix> = blocks.iter().map(|&i| &module.gamma[i]).collect();
        let gam_twists: Vec<FqElem> = blocks
            .iter()
            .map(|&i| ctx_big.zeta_comp[i].clone())
            .collect();
        let mut gam_out = SeriesMatrix::zero(&ctx_small.field, d, prec_small);
        for (k, w) in gens_per_class[class].iter().enumerate() {
            let z = apply_blockwise(fb, &cs, &gam_mats, &gam_twists, w, |b| b);
            let coords = express(class, &z)?;
            for (ridx, q) in coords.into_iter().enumerate() {
                *gam_out.at_mut(ridx, k) = pull(&q)?;
            }
        }
        gamma_small.push(gam_out);

        if let Some(cvec) = c_small.as_mut() {
            // t = 1 here: c maps class i to class i + f
            let cls = module
                .c_mats
                .as_ref()
                .ok_or_else(|| BkError::Precondition("missing c matrices".into()))?;
            let target_class = (class + ctx_small.f) % fp_small;
            let cmats: Vec<&SeriesMatrix> = blocks.iter().map(|&i| &cls[i]).collect();
            let mut c_out = SeriesMatrix::zero(&ctx_small.field, d, prec_small);
            for (k, w) in gens_per_class[class].iter().enumerate() {
                let z = apply_blockwise(fb, &cs, &cmats, &vec![fb.one(); r.t], w, |b| b);
                let coords = express(target_class, &z)?;
                for (ridx, q) in coords.into_iter().enumerate() {
                    *c_out.at_mut(ridx, k) = pull(&q)?;
                }
            }
            cvec.push(c_out);
        }
    }

    Ok(BKModule {
        ctx: ctx_small.clone(),
        d,
        prec: prec_small,
        phi: phi_small,
        gamma: gamma_small,
        c_mats: c_small,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bk::fixtures::*;
    use crate::bk::{strong_det_check, type_of, validate};
    use crate::context::{build_context, FieldSpec, Flavor};
    use crate::series::ElementaryDivisors;

    fn c3() -> Ctx {
        build_context(3, 1, 1, Flavor::Cuspidal, FieldSpec::degree(2), None, None).unwrap()
    }

    #[test]
    fn inflate_m_star_to_ek8() {
        let m = m_star();
        let big = c3();
        let infl = inflate(&m, &big).unwrap();
        assert!(validate(&infl, 1).unwrap().pass);
        let f = &big.field;
        for i in 0..big.f_prime {
            match crate::series::elementary_divisors(f, &infl.phi[i]) {
                ElementaryDivisors::Divisors(v) => assert_eq!(v, vec![0, 8]),
                _ => panic!("singular"),
            }
        }
        // strong determinant condition preserved
        assert!(strong_det_check(&m).unwrap().pass);
        assert!(strong_det_check(&infl).unwrap().pass);
        // type inflates: exponents scale by m = 4
        let (t, _) = type_of(&m).unwrap();
        let (ti, _) = type_of(&infl).unwrap();
        assert_eq!(ti, t.inflate(4, big.f_prime));
    }

    #[test]
    fn descend_inflate_roundtrip() {
        let m = m_star();
        let big = c3();
        let infl = inflate(&m, &big).unwrap();
        let back = descend(&infl, &m.ctx).unwrap();
        assert!(crate::iso::modules_equal(&back, &m));
        assert_eq!(back.prec, m.prec);
    }

    #[test]
    fn descend_rejects_non_inflated_type() {
        // valid rank-1 cuspidal module of non-inflated type: phi = (u^2, u^2),
        // gamma = (zeta, zeta^3), c = (1, 1); exponents are not multiples of
        // m = 4, so the Galois invariants drop rank
        let big = c3();
        let f = &big.field;
        let prec = 12;
        let mono = |k: usize| {
            SeriesMatrix::from_entries(1, prec, vec![TruncPoly::monomial(f, f.one(), k, prec)])
        };
        let cnst = |c: FqElem| {
            SeriesMatrix::from_entries(1, prec, vec![TruncPoly::constant(f, c, prec)])
        };
        let m = BKModule::new(
            big.clone(),
            1,
            prec,
            vec![mono(2), mono(2)],
            vec![cnst(f.pow(&big.zeta, 1)), cnst(f.pow(&big.zeta, 3))],
            Some(vec![cnst(f.one()), cnst(f.one())]),
        );
        assert!(validate(&m, 1).unwrap().pass);
        let small = c1();
        assert!(descend(&m, &small).is_err());
    }
}
