//! Parity matrices and the third-order signature tensor.
//!
//! A parity matrix stores the odd-coefficient parities of a phase polynomial
//! as columns; its column count is the T-count. Two parity matrices are
//! equivalent up to a diagonal Clifford exactly when their signature tensors
//! agree, so [`SignatureTensor`] is the ground truth every rewrite is
//! checked against.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gf2::{BitMatrix, BitVector};

/// An `n x m` matrix over GF(2) stored column by column.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ParityMatrix {
    n: usize,
    columns: Vec<BitVector>,
}

impl ParityMatrix {
    pub fn new(n: usize, columns: Vec<BitVector>) -> Result<Self> {
        if let Some(bad) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        Ok(Self { n, columns })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            columns: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            columns: (0..n).map(|i| BitVector::unit(n, i)).collect(),
        }
    }

    /// Columns given as bit strings, bit `i` of each string being row `i`.
    pub fn from_column_strs(cols: &[&str]) -> Result<Self> {
        let n = cols.first().map_or(0, |c| c.len());
        let columns = cols
            .iter()
            .map(|c| BitVector::parse(c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, columns)
    }

    /// Builds the matrix from its row-major form.
    pub fn from_bit_matrix(m: &BitMatrix) -> Self {
        let t = m.transpose();
        Self {
            n: m.rows(),
            columns: t.row_vectors().to_vec(),
        }
    }

    pub fn to_bit_matrix(&self) -> BitMatrix {
        BitMatrix::from_rows(self.columns.len(), self.rows()).expect("row lengths agree")
    }

    #[inline]
    pub fn qubits(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn columns(&self) -> &[BitVector] {
        &self.columns
    }

    #[inline]
    pub fn column(&self, j: usize) -> &BitVector {
        &self.columns[j]
    }

    pub fn push_column(&mut self, c: BitVector) -> Result<()> {
        if c.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: c.len(),
            });
        }
        self.columns.push(c);
        Ok(())
    }

    pub(crate) fn columns_mut(&mut self) -> &mut Vec<BitVector> {
        &mut self.columns
    }

    /// Row `α` of the matrix, a vector of length `m`.
    pub fn row(&self, alpha: usize) -> BitVector {
        let mut r = BitVector::zeros(self.columns.len());
        for (j, c) in self.columns.iter().enumerate() {
            if c.get(alpha) {
                r.set(j, true);
            }
        }
        r
    }

    pub fn rows(&self) -> Vec<BitVector> {
        let m = self.columns.len();
        let mut rows = vec![BitVector::zeros(m); self.n];
        for (j, c) in self.columns.iter().enumerate() {
            for a in c.iter_ones() {
                rows[a].set(j, true);
            }
        }
        rows
    }

    pub fn ones(&self) -> usize {
        self.columns.iter().map(BitVector::count_ones).sum()
    }

    /// Fraction of one-bits, `ones / (n * m)`; 0 for a matrix without entries.
    pub fn density(&self) -> f64 {
        let cells = self.n * self.columns.len();
        if cells == 0 {
            0.0
        } else {
            self.ones() as f64 / cells as f64
        }
    }

    /// The `odd()` map: drops zero columns and cancels duplicate columns in
    /// pairs.
    ///
    /// The first occurrence of each surviving parity is kept and survivors
    /// stay in their original relative order.
    pub fn simplify(&self) -> ParityMatrix {
        let mut order: Vec<usize> = (0..self.columns.len()).collect();
        order.sort_by(|&a, &b| self.columns[a].cmp(&self.columns[b]).then(a.cmp(&b)));
        let mut keep = Vec::with_capacity(order.len());
        let mut i = 0;
        while i < order.len() {
            let first = order[i];
            let mut j = i + 1;
            while j < order.len() && self.columns[order[j]] == self.columns[first] {
                j += 1;
            }
            if (j - i) % 2 == 1 && !self.columns[first].is_zero() {
                keep.push(first);
            }
            i = j;
        }
        keep.sort_unstable();
        ParityMatrix {
            n: self.n,
            columns: keep.into_iter().map(|k| self.columns[k].clone()).collect(),
        }
    }

    pub fn is_simplified(&self) -> bool {
        let mut sorted: Vec<&BitVector> = self.columns.iter().collect();
        sorted.sort();
        sorted.windows(2).all(|w| w[0] != w[1]) && self.columns.iter().all(|c| !c.is_zero())
    }

    pub fn signature_tensor(&self) -> SignatureTensor {
        SignatureTensor::from_rows(self.n, &self.rows())
    }

    /// Writes the interchange text format, with optional `#` comment lines
    /// before the header.
    pub fn to_text_with_comments(&self, comments: &[String]) -> String {
        let m = self.columns.len();
        let mut out = String::with_capacity((m + 1) * (self.n + 1) + 16);
        for c in comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(&format!("{} {}\n", self.n, m));
        for alpha in 0..self.n {
            for c in &self.columns {
                out.push(if c.get(alpha) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    /// Parses one matrix block from a stream of numbered lines, consuming the
    /// header and exactly `n` row lines. Comment lines are skipped.
    pub(crate) fn read_block<'a, I>(lines: &mut I) -> Result<ParityMatrix>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        let (hline, header) = loop {
            match lines.next() {
                None => return Err(Error::parse(0, "missing \"n m\" header")),
                Some((no, l)) if is_comment(l) => {
                    check_trailing(no, l)?;
                }
                Some((no, l)) => break (no, l),
            }
        };
        check_trailing(hline, header)?;
        let mut parts = header.split(' ');
        let (n, m) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (
                a.parse::<usize>()
                    .map_err(|_| Error::parse(hline, format!("bad qubit count {a:?}")))?,
                b.parse::<usize>()
                    .map_err(|_| Error::parse(hline, format!("bad column count {b:?}")))?,
            ),
            _ => return Err(Error::parse(hline, format!("expected \"n m\", found {header:?}"))),
        };
        let mut columns = vec![BitVector::zeros(n); m];
        let mut alpha = 0;
        while alpha < n {
            let (no, l) = lines
                .next()
                .ok_or_else(|| Error::parse(hline, format!("expected {n} rows, found {alpha}")))?;
            if is_comment(l) {
                check_trailing(no, l)?;
                continue;
            }
            check_trailing(no, l)?;
            if l.len() != m {
                return Err(Error::parse(
                    no,
                    format!("row has {} characters, expected {m}", l.len()),
                ));
            }
            for (j, ch) in l.bytes().enumerate() {
                match ch {
                    b'0' => {}
                    b'1' => columns[j].set(alpha, true),
                    other => {
                        return Err(Error::parse(
                            no,
                            format!("unexpected character {:?}", other as char),
                        ))
                    }
                }
            }
            alpha += 1;
        }
        Ok(ParityMatrix { n, columns })
    }
}

fn is_comment(line: &str) -> bool {
    line.starts_with('#')
}

fn check_trailing(no: usize, line: &str) -> Result<()> {
    if line.len() != line.trim_end().len() {
        return Err(Error::parse(no, "trailing whitespace"));
    }
    Ok(())
}

impl fmt::Display for ParityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text_with_comments(&[]))
    }
}

impl fmt::Debug for ParityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols: Vec<String> = self.columns.iter().map(|c| c.to_bit_string()).collect();
        write!(f, "ParityMatrix(n={}, [{}])", self.n, cols.join(", "))
    }
}

impl FromStr for ParityMatrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().enumerate().map(|(i, l)| (i + 1, l));
        let p = ParityMatrix::read_block(&mut lines)?;
        for (no, l) in lines {
            check_trailing(no, l)?;
            if !l.is_empty() && !is_comment(l) {
                return Err(Error::parse(no, "unexpected content after matrix"));
            }
        }
        Ok(p)
    }
}

/// Number of sorted index triples `α ≤ β ≤ γ < n`.
#[inline]
fn triple_count(n: usize) -> usize {
    n * (n + 1) * (n + 2) / 6
}

#[inline]
fn triple_index(a: usize, b: usize, c: usize) -> usize {
    debug_assert!(a <= b && b <= c);
    c * (c + 1) * (c + 2) / 6 + b * (b + 1) / 2 + a
}

/// The symmetric third-order tensor `A(α,β,γ) = Σ_j P(α,j)P(β,j)P(γ,j) mod 2`,
/// packed over sorted triples.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SignatureTensor {
    n: usize,
    bits: BitVector,
}

impl SignatureTensor {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            bits: BitVector::zeros(triple_count(n)),
        }
    }

    /// Computes the tensor from the rows `P_α` of a parity matrix.
    pub fn from_rows(n: usize, rows: &[BitVector]) -> Self {
        let mut t = Self::zero(n);
        for c in 0..n {
            for b in 0..=c {
                let bc = rows[b].and_unchecked(&rows[c]);
                for a in 0..=b {
                    if rows[a].dot_unchecked(&bc) {
                        t.bits.set(triple_index(a, b, c), true);
                    }
                }
            }
        }
        t
    }

    /// Symmetric tensor with a one on every permutation of each listed triple.
    pub fn from_triples(n: usize, triples: impl IntoIterator<Item = [usize; 3]>) -> Self {
        let mut t = Self::zero(n);
        for tr in triples {
            let mut s = tr;
            s.sort_unstable();
            t.bits.flip(triple_index(s[0], s[1], s[2]));
        }
        t
    }

    #[inline]
    pub fn qubits(&self) -> usize {
        self.n
    }

    /// Entry at any index order; the tensor is symmetric.
    pub fn entry(&self, a: usize, b: usize, c: usize) -> bool {
        let mut s = [a, b, c];
        s.sort_unstable();
        self.bits.get(triple_index(s[0], s[1], s[2]))
    }

    pub fn weight(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn packed(&self) -> &BitVector {
        &self.bits
    }
}

impl fmt::Debug for SignatureTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SignatureTensor(n={}, weight={})", self.n, self.weight())
    }
}

pub fn signature_tensor(p: &ParityMatrix) -> SignatureTensor {
    p.signature_tensor()
}

pub fn simplify(p: &ParityMatrix) -> ParityMatrix {
    p.simplify()
}

pub fn density(p: &ParityMatrix) -> f64 {
    p.density()
}

/// Exact comparison of two tensors over the same number of qubits.
pub fn tensors_equal(a: &SignatureTensor, b: &SignatureTensor) -> Result<bool> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch {
            expected: a.n,
            found: b.n,
        });
    }
    Ok(a.bits == b.bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// All seven nonzero vectors of F2^3, the CCZ expansion.
    pub(crate) fn ccz7() -> ParityMatrix {
        let cols: Vec<BitVector> = (1u64..8).map(|x| BitVector::from_words(3, vec![x])).collect();
        ParityMatrix::new(3, cols).unwrap()
    }

    /// Oracle: the tensor straight from the column sum.
    fn tensor_by_columns(p: &ParityMatrix, a: usize, b: usize, c: usize) -> bool {
        p.columns()
            .iter()
            .filter(|col| col.get(a) && col.get(b) && col.get(c))
            .count()
            % 2
            == 1
    }

    #[test]
    fn triple_index_is_a_bijection() {
        let n = 7;
        let mut seen = vec![false; triple_count(n)];
        for c in 0..n {
            for b in 0..=c {
                for a in 0..=b {
                    let i = triple_index(a, b, c);
                    assert!(!seen[i]);
                    seen[i] = true;
                }
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn identity_tensor_is_diagonal() {
        let t = ParityMatrix::identity(3).signature_tensor();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    assert_eq!(t.entry(a, b, c), a == b && b == c);
                }
            }
        }
    }

    #[test]
    fn ccz_tensor_is_the_distinct_triple() {
        let t = ccz7().signature_tensor();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let distinct = a != b && b != c && a != c;
                    assert_eq!(t.entry(a, b, c), distinct, "({a},{b},{c})");
                }
            }
        }
        assert_eq!(t, SignatureTensor::from_triples(3, [[0, 1, 2]]));
    }

    #[test]
    fn zero_columns_give_zero_tensor() {
        let p = ParityMatrix::from_column_strs(&["000", "000"]).unwrap();
        assert_eq!(p.signature_tensor(), SignatureTensor::zero(3));
        assert_eq!(ParityMatrix::empty(4).signature_tensor(), SignatureTensor::zero(4));
    }

    #[test]
    fn simplify_examples() {
        let p = ParityMatrix::from_column_strs(&["101", "101"]).unwrap();
        assert_eq!(p.simplify().column_count(), 0);

        let p = ParityMatrix::from_column_strs(&["101", "101", "101"]).unwrap();
        assert_eq!(p.simplify(), ParityMatrix::from_column_strs(&["101"]).unwrap());

        let p = ParityMatrix::from_column_strs(&["000", "110", "011"]).unwrap();
        assert_eq!(p.simplify(), ParityMatrix::from_column_strs(&["110", "011"]).unwrap());
    }

    #[test]
    fn simplify_keeps_first_occurrence_in_order() {
        let p = ParityMatrix::from_column_strs(&["011", "100", "011", "110", "011"]).unwrap();
        let s = p.simplify();
        assert_eq!(s, ParityMatrix::from_column_strs(&["011", "100", "110"]).unwrap());
    }

    #[test]
    fn tensor_equality_examples() {
        let a = ccz7().signature_tensor();
        assert!(tensors_equal(&a, &a).unwrap());
        let cc = ParityMatrix::from_column_strs(&["110", "110"]).unwrap();
        assert!(tensors_equal(&cc.signature_tensor(), &ParityMatrix::empty(3).signature_tensor()).unwrap());
        assert!(!tensors_equal(&ParityMatrix::identity(3).signature_tensor(), &a).unwrap());
        assert!(tensors_equal(&a, &ParityMatrix::identity(2).signature_tensor()).is_err());
    }

    #[test]
    fn density_examples() {
        assert!((ParityMatrix::identity(3).density() - 1.0 / 3.0).abs() < 1e-15);
        let ones = ParityMatrix::from_column_strs(&["11", "11"]).unwrap();
        assert_eq!(ones.density(), 1.0);
        assert!((ccz7().density() - 12.0 / 21.0).abs() < 1e-15);
        assert_eq!(ParityMatrix::empty(5).density(), 0.0);
    }

    #[test]
    fn text_format_round_trip_and_errors() {
        let p = ccz7();
        let text = p.to_text_with_comments(&["ccz".into()]);
        assert!(text.starts_with("# ccz\n3 7\n"));
        assert_eq!(text.parse::<ParityMatrix>().unwrap(), p);

        assert!("3 2\n10\n01\n".parse::<ParityMatrix>().is_err()); // too few rows
        assert!("1 2\n10 \n".parse::<ParityMatrix>().is_err()); // trailing whitespace
        assert!("1 2\n1x\n".parse::<ParityMatrix>().is_err());
        assert!("1 2\n101\n".parse::<ParityMatrix>().is_err());
        assert!("1 2\n10\n11\n".parse::<ParityMatrix>().is_err());
        let with_comments = "# a\n2 1\n# mid\n1\n0\n# tail\n";
        assert_eq!(
            with_comments.parse::<ParityMatrix>().unwrap(),
            ParityMatrix::from_column_strs(&["10"]).unwrap()
        );
        let empty = ParityMatrix::empty(2);
        assert_eq!(empty.to_string().parse::<ParityMatrix>().unwrap(), empty);
    }

    fn arb_parity(max_n: usize, max_m: usize) -> impl Strategy<Value = ParityMatrix> {
        (1..=max_n, 0..=max_m).prop_flat_map(|(n, m)| {
            proptest::collection::vec(0u64..(1 << n), m).prop_map(move |cols| {
                ParityMatrix::new(
                    n,
                    cols.into_iter().map(|c| BitVector::from_words(n, vec![c])).collect(),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn tensor_matches_column_sum(p in arb_parity(6, 20)) {
            let t = p.signature_tensor();
            let n = p.qubits();
            for a in 0..n { for b in 0..n { for c in 0..n {
                prop_assert_eq!(t.entry(a, b, c), tensor_by_columns(&p, a, b, c));
            }}}
        }

        #[test]
        fn simplify_laws(p in arb_parity(4, 24)) {
            let s = p.simplify();
            prop_assert!(s.is_simplified());
            prop_assert_eq!(s.simplify(), s.clone());
            prop_assert_eq!(s.signature_tensor(), p.signature_tensor());
        }

        #[test]
        fn tensor_ignores_column_order(p in arb_parity(6, 16), rot in 0usize..16) {
            let mut cols = p.columns().to_vec();
            if !cols.is_empty() {
                let k = rot % cols.len();
                cols.rotate_left(k);
                cols.reverse();
            }
            let q = ParityMatrix::new(p.qubits(), cols).unwrap();
            prop_assert_eq!(q.signature_tensor(), p.signature_tensor());
        }

        #[test]
        fn text_round_trip(p in arb_parity(8, 30)) {
            prop_assert_eq!(p.to_string().parse::<ParityMatrix>().unwrap(), p);
        }
    }
}
