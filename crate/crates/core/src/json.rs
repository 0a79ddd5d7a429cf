//! JSON wire formats. Field elements are little-endian base-p coefficient
//! arrays; every serialized object embeds its context block. Semantic
//! schema violations are reported with JSON-pointer style paths.

use serde_json::{json, Map, Value};

use crate::bk::{BKModule, StrongDetReport, ValidationReport};
use crate::context::{build_context, Ctx, FieldSpec, Flavor};
use crate::dieudonne::{Alpha, DieudonneCoordinates, DieudonneModule};
use crate::error::{BkError, Result};
use crate::field::{Field, FqElem};
use crate::grid::{CClass, DescentClass, EnumerationGrid, GridMode, PhiClass};
use crate::locmodel::{HyperspecialPair, IwahoriDatum, LocalModelPair, PairVector};
use crate::series::{SeriesElement, SeriesMatrix, TruncPoly};

fn elem_to_json(a: &FqElem) -> Value {
    json!(a.0)
}

fn elem_from_json(f: &Field, v: &Value, path: &str) -> Result<FqElem> {
    let arr = v
        .as_array()
        .ok_or_else(|| BkError::malformed(path, "expected field element array"))?;
    let mut coeffs = Vec::with_capacity(f.degree);
    for (i, c) in arr.iter().enumerate() {
        let n = c
            .as_u64()
            .ok_or_else(|| BkError::malformed(format!("{path}/{i}"), "expected integer"))?;
        if n >= f.p {
            return Err(BkError::malformed(
                format!("{path}/{i}"),
                format!("coefficient {n} not reduced mod {}", f.p),
            ));
        }
        coeffs.push(n);
    }
    if coeffs.len() != f.degree {
        return Err(BkError::malformed(
            path,
            format!("expected {} coefficients, got {}", f.degree, coeffs.len()),
        ));
    }
    Ok(FqElem(coeffs))
}

fn poly_to_json(p: &TruncPoly) -> Value {
    Value::Array(p.coeffs.iter().map(elem_to_json).collect())
}

fn poly_from_json(f: &Field, v: &Value, prec: usize, path: &str) -> Result<TruncPoly> {
    let arr = v
        .as_array()
        .ok_or_else(|| BkError::malformed(path, "expected coefficient array"))?;
    if arr.len() > prec {
        return Err(BkError::malformed(
            path,
            format!("polynomial has {} coefficients, precision is {prec}", arr.len()),
        ));
    }
    let mut coeffs = Vec::with_capacity(prec);
    for (i, c) in arr.iter().enumerate() {
        coeffs.push(elem_from_json(f, c, &format!("{path}/{i}"))?);
    }
    coeffs.resize(prec, f.zero());
    Ok(TruncPoly { coeffs })
}

fn matrix_to_json(m: &SeriesMatrix) -> Value {
    let rows: Vec<Value> = (0..m.dim)
        .map(|r| {
            Value::Array(
                (0..m.dim)
                    .map(|c| poly_to_json(m.at(r, c)))
                    .collect(),
            )
        })
        .collect();
    Value::Array(rows)
}

fn matrix_from_json(
    f: &Field,
    v: &Value,
    dim: usize,
    prec: usize,
    path: &str,
) -> Result<SeriesMatrix> {
    let rows = v
        .as_array()
        .ok_or_else(|| BkError::malformed(path, "expected matrix rows"))?;
    if rows.len() != dim {
        return Err(BkError::malformed(path, format!("expected {dim} rows")));
    }
    let mut out = SeriesMatrix::zero(f, dim, prec);
    for (r, row) in rows.iter().enumerate() {
        let cols = row
            .as_array()
            .ok_or_else(|| BkError::malformed(format!("{path}/{r}"), "expected row array"))?;
        if cols.len() != dim {
            return Err(BkError::malformed(
                format!("{path}/{r}"),
                format!("expected {dim} entries"),
            ));
        }
        for (c, entry) in cols.iter().enumerate() {
            *out.at_mut(r, c) = poly_from_json(f, entry, prec, &format!("{path}/{r}/{c}"))?;
        }
    }
    Ok(out)
}

pub fn context_to_json(ctx: &Ctx) -> Value {
    json!({
        "p": ctx.p,
        "f": ctx.f,
        "e": ctx.e,
        "flavor": ctx.flavor.as_str(),
        "eK": ctx.e_k,
        "f_prime": ctx.f_prime,
        "e_prime": ctx.e_prime,
        "field": {
            "degree": ctx.field.degree,
            "modulus": ctx.field.modulus,
        },
        "zeta": elem_to_json(&ctx.zeta),
        "cbar": elem_to_json(&ctx.cbar),
    })
}

fn get<'a>(v: &'a Value, key: &str, path: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| BkError::malformed(format!("{path}/{key}"), "missing field"))
}

fn get_u64(v: &Value, key: &str, path: &str) -> Result<u64> {
    get(v, key, path)?
        .as_u64()
        .ok_or_else(|| BkError::malformed(format!("{path}/{key}"), "expected integer"))
}

pub fn context_from_json(v: &Value) -> Result<Ctx> {
    let path = "/context";
    let p = get_u64(v, "p", path)?;
    let f = get_u64(v, "f", path)? as usize;
    let e = get_u64(v, "e", path)? as usize;
    let flavor = Flavor::parse(
        get(v, "flavor", path)?
            .as_str()
            .ok_or_else(|| BkError::malformed(format!("{path}/flavor"), "expected string"))?,
    )?;
    let field_v = get(v, "field", path)?;
    let degree = get_u64(field_v, "degree", &format!("{path}/field"))? as usize;
    let modulus: Vec<u64> = get(field_v, "modulus", &format!("{path}/field"))?
        .as_array()
        .ok_or_else(|| BkError::malformed(format!("{path}/field/modulus"), "expected array"))?
        .iter()
        .map(|c| {
            c.as_u64()
                .ok_or_else(|| BkError::malformed(format!("{path}/field/modulus"), "expected integer"))
        })
        .collect::<Result<_>>()?;
    let field = Field::new(p, degree, Some(modulus))?;
    let zeta = elem_from_json(&field, get(v, "zeta", path)?, &format!("{path}/zeta"))?;
    let cbar = elem_from_json(&field, get(v, "cbar", path)?, &format!("{path}/cbar"))?;
    let ctx = build_context(
        p,
        f,
        e,
        flavor,
        FieldSpec {
            degree,
            modulus: Some(field.modulus.clone()),
        },
        Some(zeta),
        Some(cbar),
    )?;
    // redundant derived fields must agree when present
    for (key, expect) in [
        ("eK", ctx.e_k),
        ("f_prime", ctx.f_prime as u64),
        ("e_prime", ctx.e_prime as u64),
    ] {
        if let Some(val) = v.get(key) {
            if val.as_u64() != Some(expect) {
                return Err(BkError::malformed(
                    format!("{path}/{key}"),
                    format!("inconsistent derived value (expected {expect})"),
                ));
            }
        }
    }
    Ok(ctx)
}

pub fn series_element_to_json(x: &SeriesElement) -> Value {
    json!({
        "precision": x.prec,
        "components": x.components.iter().map(poly_to_json).collect::<Vec<_>>(),
    })
}

pub fn series_element_from_json(ctx: &Ctx, v: &Value) -> Result<SeriesElement> {
    let prec = get_u64(v, "precision", "")? as usize;
    let comps = get(v, "components", "")?
        .as_array()
        .ok_or_else(|| BkError::malformed("/components", "expected array"))?;
    if comps.len() != ctx.f_prime {
        return Err(BkError::malformed(
            "/components",
            format!("expected {} components", ctx.f_prime),
        ));
    }
    let components = comps
        .iter()
        .enumerate()
        .map(|(i, c)| poly_from_json(&ctx.field, c, prec, &format!("/components/{i}")))
        .collect::<Result<_>>()?;
    Ok(SeriesElement {
        prec,
        components,
    })
}

pub fn module_to_json(m: &BKModule) -> Value {
    let mut obj = Map::new();
    obj.insert("context".into(), context_to_json(&m.ctx));
    obj.insert("rank".into(), json!(m.d));
    obj.insert("precision".into(), json!(m.prec));
    obj.insert(
        "phi".into(),
        Value::Array(m.phi.iter().map(matrix_to_json).collect()),
    );
    obj.insert(
        "gamma".into(),
        Value::Array(m.gamma.iter().map(matrix_to_json).collect()),
    );
    if let Some(cs) = &m.c_mats {
        obj.insert(
            "c".into(),
            Value::Array(cs.iter().map(matrix_to_json).collect()),
        );
    }
    Value::Object(obj)
}

pub fn module_from_json(v: &Value) -> Result<BKModule> {
    let ctx = context_from_json(get(v, "context", "")?)?;
    let d = get_u64(v, "rank", "")? as usize;
    let prec = get_u64(v, "precision", "")? as usize;
    if d == 0 || prec == 0 {
        return Err(BkError::malformed("/rank", "rank and precision must be positive"));
    }
    let read_mats = |key: &str| -> Result<Vec<SeriesMatrix>> {
        let arr = get(v, key, "")?
            .as_array()
            .ok_or_else(|| BkError::malformed(format!("/{key}"), "expected array"))?;
        if arr.len() != ctx.f_prime {
            return Err(BkError::malformed(
                format!("/{key}"),
                format!("expected {} components", ctx.f_prime),
            ));
        }
        arr.iter()
            .enumerate()
            .map(|(i, m)| matrix_from_json(&ctx.field, m, d, prec, &format!("/{key}/{i}")))
            .collect()
    };
    let phi = read_mats("phi")?;
    let gamma = read_mats("gamma")?;
    let c_mats = if v.get("c").is_some() {
        Some(read_mats("c")?)
    } else {
        None
    };
    let m = BKModule::new(ctx, d, prec, phi, gamma, c_mats);
    m.check_shape()?;
    Ok(m)
}

fn pairvec_to_json(v: &PairVector) -> Value {
    Value::Array(v.iter().map(poly_to_json).collect())
}

fn pairvec_from_json(f: &Field, v: &Value, prec: usize, path: &str) -> Result<PairVector> {
    let arr = v
        .as_array()
        .ok_or_else(|| BkError::malformed(path, "expected vector of 2 polynomials"))?;
    if arr.len() != 2 {
        return Err(BkError::malformed(path, "expected 2 entries"));
    }
    arr.iter()
        .enumerate()
        .map(|(i, q)| poly_from_json(f, q, prec, &format!("{path}/{i}")))
        .collect()
}

fn lplus_to_json(l: &[Vec<PairVector>]) -> Value {
    Value::Array(
        l.iter()
            .map(|comp| Value::Array(comp.iter().map(pairvec_to_json).collect()))
            .collect(),
    )
}

fn lplus_from_json(
    f: &Field,
    v: &Value,
    comps: usize,
    prec: usize,
    path: &str,
) -> Result<Vec<Vec<PairVector>>> {
    let arr = v
        .as_array()
        .ok_or_else(|| BkError::malformed(path, "expected per-component arrays"))?;
    if arr.len() != comps {
        return Err(BkError::malformed(path, format!("expected {comps} components")));
    }
    arr.iter()
        .enumerate()
        .map(|(i, comp)| {
            let vecs = comp.as_array().ok_or_else(|| {
                BkError::malformed(format!("{path}/{i}"), "expected array of vectors")
            })?;
            vecs.iter()
                .enumerate()
                .map(|(j, pv)| pairvec_from_json(f, pv, prec, &format!("{path}/{i}/{j}")))
                .collect()
        })
        .collect()
}

pub fn pair_to_json(p: &LocalModelPair) -> Value {
    let mut obj = Map::new();
    obj.insert("context".into(), context_to_json(&p.ctx));
    obj.insert(
        "gamma".into(),
        Value::Array(p.gamma.iter().map(matrix_to_json).collect()),
    );
    if let Some(cs) = &p.c_mats {
        obj.insert(
            "c".into(),
            Value::Array(cs.iter().map(matrix_to_json).collect()),
        );
    }
    obj.insert("lplus".into(), lplus_to_json(&p.lplus));
    Value::Object(obj)
}

pub fn pair_from_json(v: &Value) -> Result<LocalModelPair> {
    let ctx = context_from_json(get(v, "context", "")?)?;
    let ep = ctx.e_prime;
    let arr = get(v, "gamma", "")?
        .as_array()
        .ok_or_else(|| BkError::malformed("/gamma", "expected array"))?;
    if arr.len() != ctx.f_prime {
        return Err(BkError::malformed(
            "/gamma",
            format!("expected {} components", ctx.f_prime),
        ));
    }
    let gamma = arr
        .iter()
        .enumerate()
        .map(|(i, m)| matrix_from_json(&ctx.field, m, 2, ep, &format!("/gamma/{i}")))
        .collect::<Result<_>>()?;
    let c_mats = if let Some(cv) = v.get("c") {
        let arr = cv
            .as_array()
            .ok_or_else(|| BkError::malformed("/c", "expected array"))?;
        Some(
            arr.iter()
                .enumerate()
                .map(|(i, m)| matrix_from_json(&ctx.field, m, 2, ep, &format!("/c/{i}")))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    let lplus = lplus_from_json(&ctx.field, get(v, "lplus", "")?, ctx.f_prime, ep, "/lplus")?;
    Ok(LocalModelPair {
        ctx,
        gamma,
        c_mats,
        lplus,
    })
}

pub fn iwahori_to_json(iw: &IwahoriDatum) -> Value {
    json!({
        "context": context_to_json(&iw.ctx),
        "f1": iw.f1.iter().map(matrix_to_json).collect::<Vec<_>>(),
        "f2": iw.f2.iter().map(matrix_to_json).collect::<Vec<_>>(),
        "l1plus": lplus_to_json(&iw.l1plus),
        "l2plus": lplus_to_json(&iw.l2plus),
    })
}

pub fn iwahori_from_json(v: &Value) -> Result<IwahoriDatum> {
    let ctx = context_from_json(get(v, "context", "")?)?;
    let e = ctx.e;
    let comps = ctx.f;
    let read = |key: &str| -> Result<Vec<SeriesMatrix>> {
        let arr = get(v, key, "")?
            .as_array()
            .ok_or_else(|| BkError::malformed(format!("/{key}"), "expected array"))?;
        if arr.len() != comps {
            return Err(BkError::malformed(
                format!("/{key}"),
                format!("expected {comps} components"),
            ));
        }
        arr.iter()
            .enumerate()
            .map(|(i, m)| matrix_from_json(&ctx.field, m, 2, e, &format!("/{key}/{i}")))
            .collect()
    };
    let f1 = read("f1")?;
    let f2 = read("f2")?;
    let l1plus = lplus_from_json(&ctx.field, get(v, "l1plus", "")?, comps, e, "/l1plus")?;
    let l2plus = lplus_from_json(&ctx.field, get(v, "l2plus", "")?, comps, e, "/l2plus")?;
    Ok(IwahoriDatum {
        ctx,
        f1,
        f2,
        l1plus,
        l2plus,
    })
}

pub fn hyperspecial_to_json(h: &HyperspecialPair) -> Value {
    json!({
        "context": context_to_json(&h.ctx),
        "lplus": lplus_to_json(&h.lplus),
    })
}

pub fn hyperspecial_from_json(v: &Value) -> Result<HyperspecialPair> {
    let ctx = context_from_json(get(v, "context", "")?)?;
    let lplus = lplus_from_json(&ctx.field, get(v, "lplus", "")?, ctx.f, ctx.e, "/lplus")?;
    Ok(HyperspecialPair { ctx, lplus })
}

fn const_matrix_to_json(m: &crate::linalg::FMatrix) -> Value {
    Value::Array(
        (0..m.rows)
            .map(|r| Value::Array((0..m.cols).map(|c| elem_to_json(m.at(r, c))).collect()))
            .collect(),
    )
}

pub fn dieudonne_to_json(dm: &DieudonneModule) -> Value {
    let mats = |v: &Vec<crate::linalg::FMatrix>| -> Value {
        Value::Array(v.iter().map(const_matrix_to_json).collect())
    };
    let mut obj = Map::new();
    obj.insert("context".into(), context_to_json(&dm.ctx));
    obj.insert("rank".into(), json!(dm.d));
    obj.insert("f".into(), mats(&dm.f_mats));
    obj.insert("v".into(), mats(&dm.v_mats));
    obj.insert("g".into(), mats(&dm.g_mats));
    if let Some(cs) = &dm.c_mats {
        obj.insert("c".into(), mats(cs));
    }
    Value::Object(obj)
}

pub fn coordinates_to_json(c: &DieudonneCoordinates) -> Value {
    let alpha = match &c.alpha {
        None => Value::Null,
        Some(Alpha::Indeterminate) => json!("indeterminate"),
        Some(Alpha::Unit(a)) => elem_to_json(a),
    };
    json!({
        "eta": c.eta,
        "x": c.x.iter().map(elem_to_json).collect::<Vec<_>>(),
        "y": c.y.iter().map(elem_to_json).collect::<Vec<_>>(),
        "alpha": alpha,
    })
}

pub fn validation_report_to_json(r: &ValidationReport) -> Value {
    json!({
        "pass": r.pass,
        "divisors": r.divisors,
        "checks": r.checks.iter().map(|c| json!({
            "name": c.name,
            "pass": c.pass,
            "witness": c.witness,
        })).collect::<Vec<_>>(),
    })
}

pub fn strong_det_report_to_json(r: &StrongDetReport) -> Value {
    json!({
        "pass": r.pass,
        "dims": r.dims,
        "det_valuations": r.det_valuations,
        "exact_divisibility": r.exact_divisibility,
    })
}

pub fn grid_to_json(g: &EnumerationGrid) -> Value {
    let phi: Vec<Value> = g
        .phi_classes
        .iter()
        .map(|c| match c {
            PhiClass::DiagonalMonomial => json!("diagonal-monomial"),
            PhiClass::AntidiagonalMonomial => json!("antidiagonal-monomial"),
            PhiClass::Perturbed { degree_bound } => {
                json!({"perturbed": {"degree_bound": degree_bound}})
            }
        })
        .collect();
    let descent: Vec<Value> = g
        .descent_classes
        .iter()
        .map(|c| match c {
            DescentClass::ConstantDiagonal => json!("constant-diagonal"),
            DescentClass::ConstantAntidiagonal => json!("constant-antidiagonal"),
            DescentClass::ConstantGeneral(mats) => json!({
                "constant-general": mats.iter().map(|m| {
                    Value::Array(m.iter().map(elem_to_json).collect())
                }).collect::<Vec<_>>()
            }),
        })
        .collect();
    let c_classes: Vec<Value> = g
        .c_classes
        .iter()
        .map(|c| match c {
            CClass::Identity => json!("identity"),
            CClass::ConstantDiagonal => json!("constant-diagonal"),
            CClass::ConstantAntidiagonal => json!("constant-antidiagonal"),
        })
        .collect();
    let mode = match g.mode {
        GridMode::Exhaustive => json!("exhaustive"),
        GridMode::Sample { valid, max_draws } => json!({
            "sample": {"valid": valid, "max_draws": max_draws}
        }),
    };
    json!({
        "context": context_to_json(&g.ctx),
        "rank": g.d,
        "height": g.h,
        "phi_classes": phi,
        "exponent_range": [g.exp_lo, g.exp_hi],
        "descent_classes": descent,
        "c_classes": c_classes,
        "seed": g.seed,
        "mode": mode,
        "cap": g.cap,
        "precision": g.prec,
        "monic": g.monic,
    })
}

pub fn grid_from_json(v: &Value) -> Result<EnumerationGrid> {
    let ctx = context_from_json(get(v, "context", "")?)?;
    let d = get_u64(v, "rank", "")? as usize;
    let h = get_u64(v, "height", "")? as usize;
    let range = get(v, "exponent_range", "")?
        .as_array()
        .ok_or_else(|| BkError::malformed("/exponent_range", "expected [lo, hi]"))?;
    if range.len() != 2 {
        return Err(BkError::malformed("/exponent_range", "expected [lo, hi]"));
    }
    let exp_lo = range[0]
        .as_u64()
        .ok_or_else(|| BkError::malformed("/exponent_range/0", "expected integer"))? as usize;
    let exp_hi = range[1]
        .as_u64()
        .ok_or_else(|| BkError::malformed("/exponent_range/1", "expected integer"))? as usize;
    let phi_classes = get(v, "phi_classes", "")?
        .as_array()
        .ok_or_else(|| BkError::malformed("/phi_classes", "expected array"))?
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let path = format!("/phi_classes/{i}");
            if let Some(s) = c.as_str() {
                match s {
                    "diagonal-monomial" => Ok(PhiClass::DiagonalMonomial),
                    "antidiagonal-monomial" => Ok(PhiClass::AntidiagonalMonomial),
                    other => Err(BkError::malformed(path, format!("unknown class '{other}'"))),
                }
            } else if let Some(p) = c.get("perturbed") {
                Ok(PhiClass::Perturbed {
                    degree_bound: get_u64(p, "degree_bound", &path)? as usize,
                })
            } else {
                Err(BkError::malformed(path, "unknown phi class"))
            }
        })
        .collect::<Result<_>>()?;
    let descent_classes = get(v, "descent_classes", "")?
        .as_array()
        .ok_or_else(|| BkError::malformed("/descent_classes", "expected array"))?
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let path = format!("/descent_classes/{i}");
            if let Some(s) = c.as_str() {
                match s {
                    "constant-diagonal" => Ok(DescentClass::ConstantDiagonal),
                    "constant-antidiagonal" => Ok(DescentClass::ConstantAntidiagonal),
                    other => Err(BkError::malformed(path, format!("unknown class '{other}'"))),
                }
            } else if let Some(g) = c.get("constant-general") {
                let mats = g
                    .as_array()
                    .ok_or_else(|| BkError::malformed(&path, "expected matrix list"))?
                    .iter()
                    .enumerate()
                    .map(|(j, m)| {
                        m.as_array()
                            .ok_or_else(|| {
                                BkError::malformed(format!("{path}/{j}"), "expected entries")
                            })?
                            .iter()
                            .enumerate()
                            .map(|(k, e)| {
                                elem_from_json(&ctx.field, e, &format!("{path}/{j}/{k}"))
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<_>>()?;
                Ok(DescentClass::ConstantGeneral(mats))
            } else {
                Err(BkError::malformed(path, "unknown descent class"))
            }
        })
        .collect::<Result<_>>()?;
    let c_classes = match v.get("c_classes") {
        None => Vec::new(),
        Some(arr) => arr
            .as_array()
            .ok_or_else(|| BkError::malformed("/c_classes", "expected array"))?
            .iter()
            .enumerate()
            .map(|(i, c)| match c.as_str() {
                Some("identity") => Ok(CClass::Identity),
                Some("constant-diagonal") => Ok(CClass::ConstantDiagonal),
                Some("constant-antidiagonal") => Ok(CClass::ConstantAntidiagonal),
                _ => Err(BkError::malformed(
                    format!("/c_classes/{i}"),
                    "unknown c class",
                )),
            })
            .collect::<Result<_>>()?,
    };
    let mode = match get(v, "mode", "")? {
        Value::String(s) if s == "exhaustive" => GridMode::Exhaustive,
        m => {
            if let Some(s) = m.get("sample") {
                GridMode::Sample {
                    valid: get_u64(s, "valid", "/mode/sample")? as usize,
                    max_draws: get_u64(s, "max_draws", "/mode/sample")?,
                }
            } else {
                return Err(BkError::malformed("/mode", "expected exhaustive or sample"));
            }
        }
    };
    Ok(EnumerationGrid {
        ctx,
        d,
        h,
        phi_classes,
        exp_lo,
        exp_hi,
        descent_classes,
        c_classes,
        seed: get_u64(v, "seed", "")?,
        mode,
        cap: get_u64(v, "cap", "")?,
        prec: v.get("precision").and_then(|p| p.as_u64()).map(|p| p as usize),
        monic: v.get("monic").and_then(|m| m.as_bool()).unwrap_or(false),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bk::fixtures::m_star;
    use crate::grid::GridMode;

    #[test]
    fn module_roundtrip() {
        let m = m_star();
        let v = module_to_json(&m);
        let back = module_from_json(&v).unwrap();
        assert!(crate::iso::modules_equal(&back, &m));
        assert_eq!(back.ctx.e_k, m.ctx.e_k);
    }

    #[test]
    fn pair_roundtrip() {
        let p = crate::locmodel::psi(&m_star()).unwrap();
        let v = pair_to_json(&p);
        let back = pair_from_json(&v).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn malformed_reports_path() {
        let m = m_star();
        let mut v = module_to_json(&m);
        v["phi"][0][0][1] = serde_json::json!([9]);
        match module_from_json(&v) {
            Err(BkError::Malformed { path, .. }) => {
                assert!(path.starts_with("/phi/0/0/1"), "path = {path}");
            }
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn grid_roundtrip() {
        let ctx = crate::bk::fixtures::c1();
        let g = crate::grid::EnumerationGrid::default_for(&ctx, 2, 1, GridMode::Exhaustive, 7);
        let v = grid_to_json(&g);
        let back = grid_from_json(&v).unwrap();
        assert_eq!(back.phi_classes, g.phi_classes);
        assert_eq!(back.seed, 7);
    }
}
