//! Benchmark instances and equivalence reports.
//!
//! The GF(2^n) multiplier `c = a·b mod f` is a sum of trilinear monomials
//! `a_i b_j c_k`; each one is a CCZ on three wires and contributes the seven
//! nonzero parities of those wires.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gf2::BitVector;
use crate::parity::{ParityMatrix, SignatureTensor};

/// Standard irreducible polynomials for n = 2..=16, `x^n` bit included.
pub const DEFAULT_MODULI: [(usize, u64); 15] = [
    (2, 0b111),
    (3, 0b1011),
    (4, 0b10011),
    (5, 0b100101),
    (6, 0b1000011),
    (7, 0b10000011),
    (8, 0x11B),
    (9, 0x203),
    (10, 0x409),
    (11, 0x805),
    (12, 0x1009),
    (13, 0x201B),
    (14, 0x4021),
    (15, 0x8003),
    (16, 0x1002B),
];

pub fn default_modulus(n: usize) -> Option<u64> {
    DEFAULT_MODULI.iter().find(|e| e.0 == n).map(|e| e.1)
}

fn degree(p: u64) -> Option<usize> {
    (p != 0).then(|| 63 - p.leading_zeros() as usize)
}

/// Remainder of `a` divided by `b` over F2.
fn poly_rem(mut a: u64, b: u64) -> u64 {
    let db = degree(b).expect("nonzero divisor");
    while let Some(da) = degree(a) {
        if da < db {
            break;
        }
        a ^= b << (da - db);
    }
    a
}

/// Trial division by every polynomial of degree 1..=deg/2.
pub fn is_irreducible(p: u64) -> bool {
    let Some(d) = degree(p) else { return false };
    if d == 0 {
        return false;
    }
    (2u64..(1u64 << (d / 2 + 1))).all(|q| poly_rem(p, q) != 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MultiplicationSpec {
    n: usize,
    modulus: u64,
}

impl MultiplicationSpec {
    pub fn new(n: usize, modulus: u64) -> Result<Self> {
        if !(1..=31).contains(&n) || degree(modulus) != Some(n) {
            return Err(Error::ReducibleModulus(format!(
                "{modulus:b} does not have degree {n}"
            )));
        }
        if !is_irreducible(modulus) {
            return Err(Error::ReducibleModulus(format!("{modulus:b}")));
        }
        Ok(Self { n, modulus })
    }

    /// The shipped modulus for `n`.
    pub fn standard(n: usize) -> Result<Self> {
        let m = default_modulus(n)
            .ok_or_else(|| Error::Config(format!("no default modulus for n = {n}")))?;
        Self::new(n, m)
    }

    /// Parses a most-significant-first bit string such as `111` for
    /// `x^2 + x + 1`.
    pub fn from_bit_string(n: usize, s: &str) -> Result<Self> {
        let s = s.strip_prefix("0b").unwrap_or(s);
        let m = u64::from_str_radix(s, 2)
            .map_err(|_| Error::Config(format!("modulus {s:?} is not a bit string")))?;
        Self::new(n, m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn modulus_bits(&self) -> String {
        format!("{:b}", self.modulus)
    }

    /// Terms `(i, j, k)` such that `a_i b_j` feeds output bit `c_k`, in
    /// `(i, j, k)` lexicographic order.
    pub fn terms(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                let r = poly_rem(1u64 << (i + j), self.modulus);
                for k in 0..self.n {
                    if (r >> k) & 1 == 1 {
                        out.push((i, j, k));
                    }
                }
            }
        }
        out
    }
}

/// The naive CCZ network before simplification: seven columns per term on
/// wires `a_i = i`, `b_j = n + j`, `c_k = 2n + k`.
pub fn gf2n_network(spec: &MultiplicationSpec) -> ParityMatrix {
    let n = spec.n;
    let q = 3 * n;
    let mut p = ParityMatrix::empty(q);
    for (i, j, k) in spec.terms() {
        let wires = [i, n + j, 2 * n + k];
        for mask in 1u32..8 {
            let mut c = BitVector::zeros(q);
            for (b, &w) in wires.iter().enumerate() {
                if (mask >> b) & 1 == 1 {
                    c.set(w, true);
                }
            }
            p.push_column(c).expect("column has the right length");
        }
    }
    p
}

/// Simplified multiplier matrix and its tensor.
pub fn gen_gf2n(spec: &MultiplicationSpec) -> (ParityMatrix, SignatureTensor) {
    let p = gf2n_network(spec).simplify();
    let t = p.signature_tensor();
    (p, t)
}

/// `m` uniform nonzero columns on `n` qubits, simplified.
pub fn gen_random(n: usize, m: usize, seed: u64) -> ParityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParityMatrix::empty(n);
    for _ in 0..m {
        let c = loop {
            let mut c = BitVector::zeros(n);
            for i in 0..n {
                c.set(i, rng.gen());
            }
            if !c.is_zero() || n == 0 {
                break c;
            }
        };
        p.push_column(c).expect("column has the right length");
    }
    p.simplify()
}

/// `ρ + ones / (n·ρ)`; the density term is zero for an empty matrix.
pub fn official_score(p: &ParityMatrix) -> f64 {
    p.column_count() as f64 + p.density()
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub equivalent: bool,
    pub rho_a: usize,
    pub rho_b: usize,
    pub density_a: f64,
    pub density_b: f64,
    /// Score of `b` minus score of `a`; negative means `b` is better.
    pub fitness_diff: f64,
}

impl std::fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "equivalent: {}",
            if self.equivalent { "yes" } else { "no" }
        )?;
        writeln!(f, "rho: {} -> {}", self.rho_a, self.rho_b)?;
        writeln!(f, "density: {:.6} -> {:.6}", self.density_a, self.density_b)?;
        write!(f, "fitness difference: {:+.6}", self.fitness_diff)
    }
}

/// Compares the tensors of two matrices on the same qubits. Column counts
/// and densities refer to the simplified forms.
pub fn verify(a: &ParityMatrix, b: &ParityMatrix) -> Result<VerifyReport> {
    if a.qubits() != b.qubits() {
        return Err(Error::DimensionMismatch {
            expected: a.qubits(),
            found: b.qubits(),
        });
    }
    let (sa, sb) = (a.simplify(), b.simplify());
    Ok(VerifyReport {
        equivalent: a.signature_tensor() == b.signature_tensor(),
        rho_a: sa.column_count(),
        rho_b: sb.column_count(),
        density_a: sa.density(),
        density_b: sb.density(),
        fitness_diff: official_score(&sb) - official_score(&sa),
    })
}
