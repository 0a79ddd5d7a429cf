//! Exact arithmetic in finite fields F_{p^r}, with elements stored as
//! little-endian coefficient vectors over a fixed monic irreducible modulus.

use once_cell::sync::Lazy;
use serde::Deserialize;

use crate::error::{BkError, Result};

/// An element of a finite field: little-endian coefficients in the modulus
/// basis, always of length equal to the field degree.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FqElem(pub Vec<u64>);

impl std::fmt::Debug for FqElem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fq{:?}", self.0)
    }
}

/// A finite field F_{p^r} presented by an explicit monic modulus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Field {
    pub p: u64,
    pub degree: usize,
    /// Monic modulus, little-endian, length `degree + 1`, last coefficient 1.
    pub modulus: Vec<u64>,
}

#[derive(Deserialize)]
struct ModulusEntry {
    p: u64,
    degree: usize,
    modulus: Vec<u64>,
}

#[derive(Deserialize)]
struct ModulusTable {
    moduli: Vec<ModulusEntry>,
}

static MODULUS_TABLE: Lazy<Vec<(u64, usize, Vec<u64>)>> = Lazy::new(|| {
    let raw = include_str!("../data/moduli.json");
    let table: ModulusTable = serde_json::from_str(raw).expect("embedded moduli.json is valid");
    table
        .moduli
        .into_iter()
        .map(|e| (e.p, e.degree, e.modulus))
        .collect()
});

/// Looks up the shipped modulus for (p, degree), if present.
pub fn shipped_modulus(p: u64, degree: usize) -> Option<Vec<u64>> {
    MODULUS_TABLE
        .iter()
        .find(|(tp, td, _)| *tp == p && *td == degree)
        .map(|(_, _, m)| m.clone())
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

impl Field {
    /// Builds the field, taking the shipped modulus when none is supplied.
    pub fn new(p: u64, degree: usize, modulus: Option<Vec<u64>>) -> Result<Field> {
        if !is_prime(p) {
            return Err(BkError::Context(format!("p = {p} is not prime")));
        }
        if p >= 1 << 31 {
            return Err(BkError::Context(format!("p = {p} too large")));
        }
        if degree == 0 {
            return Err(BkError::Context("field degree must be positive".into()));
        }
        let modulus = match modulus {
            Some(m) => m,
            None => shipped_modulus(p, degree).ok_or_else(|| {
                BkError::Context(format!("no shipped modulus for (p, degree) = ({p}, {degree})"))
            })?,
        };
        if modulus.len() != degree + 1 || modulus[degree] != 1 {
            return Err(BkError::Context(format!(
                "modulus must be monic of degree {degree}"
            )));
        }
        if modulus.iter().any(|&c| c >= p) {
            return Err(BkError::Context("modulus coefficients not reduced mod p".into()));
        }
        let field = Field { p, degree, modulus };
        if !field.modulus_is_irreducible() {
            return Err(BkError::Context("modulus is reducible".into()));
        }
        Ok(field)
    }

    /// Field order p^r.
    pub fn order(&self) -> u64 {
        self.p.pow(self.degree as u32)
    }

    pub fn zero(&self) -> FqElem {
        FqElem(vec![0; self.degree])
    }

    pub fn one(&self) -> FqElem {
        self.from_int(1)
    }

    pub fn from_int(&self, n: i64) -> FqElem {
        let mut v = vec![0; self.degree];
        v[0] = n.rem_euclid(self.p as i64) as u64;
        FqElem(v)
    }

    /// The class of the variable x (a multiplicative generator for shipped
    /// moduli); for degree 1 this is the reduction of the modulus root.
    pub fn gen(&self) -> FqElem {
        if self.degree == 1 {
            // x == -modulus[0]
            self.from_int(-(self.modulus[0] as i64))
        } else {
            let mut v = vec![0; self.degree];
            v[1] = 1;
            FqElem(v)
        }
    }

    /// Element with the given index in base-p counting order; inverse of `index_of`.
    pub fn element_from_index(&self, mut idx: u64) -> FqElem {
        let mut v = vec![0; self.degree];
        for c in v.iter_mut() {
            *c = idx % self.p;
            idx /= self.p;
        }
        FqElem(v)
    }

    pub fn index_of(&self, a: &FqElem) -> u64 {
        let mut idx = 0u64;
        for &c in a.0.iter().rev() {
            idx = idx * self.p + c;
        }
        idx
    }

    pub fn is_zero(&self, a: &FqElem) -> bool {
        a.0.iter().all(|&c| c == 0)
    }

    pub fn add(&self, a: &FqElem, b: &FqElem) -> FqElem {
        FqElem(
            a.0.iter()
                .zip(&b.0)
                .map(|(x, y)| (x + y) % self.p)
                .collect(),
        )
    }

    pub fn sub(&self, a: &FqElem, b: &FqElem) -> FqElem {
        FqElem(
            a.0.iter()
                .zip(&b.0)
                .map(|(x, y)| (x + self.p - y) % self.p)
                .collect(),
        )
    }

    pub fn neg(&self, a: &FqElem) -> FqElem {
        FqElem(a.0.iter().map(|x| (self.p - x) % self.p).collect())
    }

    pub fn mul(&self, a: &FqElem, b: &FqElem) -> FqElem {
        let n = self.degree;
        let mut res = vec![0u64; 2 * n - 1];
        for (i, &x) in a.0.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.0.iter().enumerate() {
                res[i + j] = (res[i + j] + x * y) % self.p;
            }
        }
        // reduce by the monic modulus
        for k in (n..res.len()).rev() {
            let c = res[k];
            if c != 0 {
                res[k] = 0;
                for i in 0..n {
                    let t = (c * self.modulus[i]) % self.p;
                    res[k - n + i] = (res[k - n + i] + self.p - t) % self.p;
                }
            }
        }
        res.truncate(n);
        FqElem(res)
    }

    pub fn pow(&self, a: &FqElem, mut e: u64) -> FqElem {
        let mut base = a.clone();
        let mut acc = self.one();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        acc
    }

    pub fn inv(&self, a: &FqElem) -> Result<FqElem> {
        if self.is_zero(a) {
            return Err(BkError::Context("division by zero in field".into()));
        }
        // a^(q-2)
        Ok(self.pow(a, self.order() - 2))
    }

    /// The p-power Frobenius x -> x^p.
    pub fn frobenius(&self, a: &FqElem) -> FqElem {
        self.pow(a, self.p)
    }

    /// Exact multiplicative order; zero input is an error.
    pub fn mult_order(&self, a: &FqElem) -> Result<u64> {
        if self.is_zero(a) {
            return Err(BkError::Context("zero has no multiplicative order".into()));
        }
        let q1 = self.order() - 1;
        let mut ord = q1;
        for l in prime_factors(q1) {
            while ord % l == 0 && self.pow(a, ord / l) == self.one() {
                ord /= l;
            }
        }
        Ok(ord)
    }

    /// True when the element lies in the subfield of order p^d (requires d | r).
    pub fn in_subfield(&self, a: &FqElem, d: usize) -> bool {
        self.degree % d == 0 && self.pow(a, self.p.pow(d as u32)) == *a
    }

    /// First element of exact multiplicative order `n` in base-p counting
    /// order; deterministic for a fixed modulus.
    pub fn element_of_order(&self, n: u64) -> Result<FqElem> {
        if n == 0 || (self.order() - 1) % n != 0 {
            return Err(BkError::Context(format!(
                "field of order {} has no element of order {n}",
                self.order()
            )));
        }
        for idx in 1..self.order() {
            let a = self.element_from_index(idx);
            if self.mult_order(&a)? == n {
                return Ok(a);
            }
        }
        unreachable!("multiplicative group is cyclic")
    }

    fn modulus_is_irreducible(&self) -> bool {
        // x^(p^r) == x, and x^(p^(r/l)) != x for prime l | r
        let x = self.gen_raw();
        let mut pow = x.clone();
        let mut frob_steps: Vec<FqElem> = Vec::with_capacity(self.degree);
        for _ in 0..self.degree {
            pow = self.frobenius(&pow);
            frob_steps.push(pow.clone());
        }
        if frob_steps[self.degree - 1] != x {
            return false;
        }
        for l in prime_factors(self.degree as u64) {
            let d = self.degree / l as usize;
            if frob_steps[d - 1] == x {
                return false;
            }
        }
        true
    }

    fn gen_raw(&self) -> FqElem {
        if self.degree == 1 {
            self.from_int(-(self.modulus[0] as i64))
        } else {
            let mut v = vec![0; self.degree];
            v[1] = 1;
            FqElem(v)
        }
    }

    /// Embedding into a larger field determined by the least root of this
    /// modulus there; errors when the modulus has no root.
    pub fn embedding_into(&self, big: &Field) -> Result<FieldEmbedding> {
        if big.p != self.p {
            return Err(BkError::Context("field embedding requires equal characteristic".into()));
        }
        for idx in 0..big.order() {
            let cand = big.element_from_index(idx);
            // evaluate modulus at cand
            let mut acc = big.zero();
            for &c in self.modulus.iter().rev() {
                acc = big.mul(&acc, &cand);
                acc = big.add(&acc, &big.from_int(c as i64));
            }
            if big.is_zero(&acc) {
                return Ok(FieldEmbedding {
                    small: self.clone(),
                    big: big.clone(),
                    root: cand,
                });
            }
        }
        Err(BkError::Context(
            "modulus has no root in the target field (incompatible extension)".into(),
        ))
    }
}

/// An embedding F_{p^r} -> F_{p^s} given by a root of the source modulus.
#[derive(Clone, Debug)]
pub struct FieldEmbedding {
    pub small: Field,
    pub big: Field,
    pub root: FqElem,
}

impl FieldEmbedding {
    pub fn map(&self, a: &FqElem) -> FqElem {
        let mut acc = self.big.zero();
        for &c in a.0.iter().rev() {
            acc = self.big.mul(&acc, &self.root);
            acc = self.big.add(&acc, &self.big.from_int(c as i64));
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_moduli_are_primitive() {
        // oracle: the class of x must have full multiplicative order
        for &(p, d) in &[(2u64, 1usize), (2, 4), (3, 1), (3, 2), (3, 4), (5, 2), (7, 3)] {
            let f = Field::new(p, d, None).unwrap();
            let g = f.gen();
            assert_eq!(f.mult_order(&g).unwrap(), f.order() - 1, "p={p} d={d}");
        }
    }

    #[test]
    fn f9_arithmetic() {
        let f = Field::new(3, 2, None).unwrap();
        let x = f.gen();
        // modulus x^2 + x + 2 = 0, so x^2 = -x - 2 = 2x + 1
        let x2 = f.mul(&x, &x);
        assert_eq!(x2, FqElem(vec![1, 2]));
        let inv = f.inv(&x).unwrap();
        assert_eq!(f.mul(&inv, &x), f.one());
        assert_eq!(f.pow(&x, 8), f.one());
        assert_ne!(f.pow(&x, 4), f.one());
    }

    #[test]
    fn subfield_membership() {
        let f = Field::new(3, 2, None).unwrap();
        let x = f.gen();
        assert!(f.in_subfield(&f.from_int(2), 1));
        assert!(!f.in_subfield(&x, 1));
        // x^4 has order 2, lies in F_3
        assert!(f.in_subfield(&f.pow(&x, 4), 1));
    }

    #[test]
    fn deterministic_element_of_order() {
        let f3 = Field::new(3, 1, None).unwrap();
        assert_eq!(f3.element_of_order(2).unwrap(), f3.from_int(-1));
        let f9 = Field::new(3, 2, None).unwrap();
        // first element of order 8 in counting order is x itself (index 3)
        assert_eq!(f9.element_of_order(8).unwrap(), f9.gen());
        assert_eq!(f9.element_of_order(2).unwrap(), f9.from_int(2));
    }

    #[test]
    fn embedding_f3_into_f9() {
        let f3 = Field::new(3, 1, None).unwrap();
        let f9 = Field::new(3, 2, None).unwrap();
        let emb = f3.embedding_into(&f9).unwrap();
        assert_eq!(emb.map(&f3.from_int(2)), f9.from_int(2));
        // no embedding of F_9 into F_27
        let f27 = Field::new(3, 3, None).unwrap();
        assert!(f9.embedding_into(&f27).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Field::new(4, 1, None).is_err());
        assert!(Field::new(3, 2, Some(vec![0, 0, 1])).is_err()); // x^2 reducible
        assert!(Field::new(3, 2, Some(vec![1, 0])).is_err()); // wrong degree
    }
}
