//! Packed linear algebra over GF(2).
//!
//! Bit `i` of a [`BitVector`] lives in word `i / 64` at position `i % 64`
//! (little-endian within words). This layout is also what the trajectory
//! cache hashes and orders columns by, so it must not change.

use std::fmt;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

/// A dense vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector {
    len: usize,
    words: Vec<u64>,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self {
            len,
            words: vec![u64::MAX; words_for(len)],
        };
        v.clear_tail();
        v
    }

    /// Unit vector `e_i`.
    pub fn unit(len: usize, i: usize) -> Self {
        let mut v = Self::zeros(len);
        v.set(i, true);
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    /// Builds a vector from packed words. Bits past `len` are dropped.
    pub fn from_words(len: usize, mut words: Vec<u64>) -> Self {
        words.resize(words_for(len), 0);
        let mut v = Self { len, words };
        v.clear_tail();
        v
    }

    /// Parses a string of `0`/`1` characters; character `i` is bit `i`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut v = Self::zeros(s.len());
        for (i, c) in s.bytes().enumerate() {
            match c {
                b'0' => {}
                b'1' => v.set(i, true),
                other => {
                    return Err(Error::Parse {
                        line: 0,
                        message: format!("unexpected character {:?} in bit string", other as char),
                    })
                }
            }
        }
        Ok(v)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / WORD_BITS] ^= 1u64 << (i % WORD_BITS);
    }

    fn clear_tail(&mut self) {
        let rem = self.len % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    fn check_len(&self, other: &Self) -> Result<()> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                left: self.len,
                right: other.len,
            });
        }
        Ok(())
    }

    /// `self ^= other`.
    pub fn xor_in_place(&mut self, other: &Self) -> Result<()> {
        self.check_len(other)?;
        self.xor_assign_unchecked(other);
        Ok(())
    }

    #[inline]
    pub(crate) fn xor_assign_unchecked(&mut self, other: &Self) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn xor(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.xor_in_place(other)?;
        Ok(out)
    }

    pub fn and(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        Ok(self.and_unchecked(other))
    }

    #[inline]
    pub(crate) fn and_unchecked(&self, other: &Self) -> Self {
        Self {
            len: self.len,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        }
    }

    /// Inner product over GF(2): `popcount(self & other) mod 2`.
    pub fn and_popcount_parity(&self, other: &Self) -> Result<bool> {
        self.check_len(other)?;
        Ok(self.dot_unchecked(other))
    }

    #[inline]
    pub(crate) fn dot_unchecked(&self, other: &Self) -> bool {
        let mut acc = 0u64;
        for (a, b) in self.words.iter().zip(&other.words) {
            acc ^= a & b;
        }
        acc.count_ones() & 1 == 1
    }

    #[inline]
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Index of the lowest set bit.
    pub fn first_one(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(i, w)| i * WORD_BITS + w.trailing_zeros() as usize)
    }

    /// Iterates over the indices of set bits in increasing order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let t = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * WORD_BITS + t)
                }
            })
        })
    }

    /// Appends one bit, growing the vector.
    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(WORD_BITS) {
            self.words.push(0);
        }
        self.len += 1;
        if bit {
            self.set(self.len - 1, true);
        }
    }

    pub fn to_bit_string(&self) -> String {
        (0..self.len).map(|i| if self.get(i) { '1' } else { '0' }).collect()
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({})", self.to_bit_string())
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

/// A dense row-major matrix over GF(2).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BitVector>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![BitVector::zeros(cols); rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            data: (0..n).map(|i| BitVector::unit(n, i)).collect(),
        }
    }

    /// Builds a matrix from rows. Every row must have length `cols`.
    pub fn from_rows(cols: usize, rows: Vec<BitVector>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::LengthMismatch {
                left: cols,
                right: bad.len(),
            });
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows,
        })
    }

    /// Parses rows written as bit strings, e.g. `["110", "011"]`.
    pub fn from_strs(rows: &[&str]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let rows = rows
            .iter()
            .map(|r| BitVector::parse(r))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(cols, rows)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &BitVector {
        &self.data[i]
    }

    pub fn row_vectors(&self) -> &[BitVector] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r].get(c)
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        self.data[r].set(c, value)
    }

    /// Materializes column `j` as a vector of length `rows`.
    pub fn column(&self, j: usize) -> BitVector {
        let mut v = BitVector::zeros(self.rows);
        for (i, row) in self.data.iter().enumerate() {
            if row.get(j) {
                v.set(i, true);
            }
        }
        v
    }

    pub fn set_column(&mut self, j: usize, col: &BitVector) -> Result<()> {
        if col.len() != self.rows {
            return Err(Error::LengthMismatch {
                left: self.rows,
                right: col.len(),
            });
        }
        for (i, row) in self.data.iter_mut().enumerate() {
            row.set(j, col.get(i));
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for (i, row) in self.data.iter().enumerate() {
            for j in row.iter_ones() {
                t.data[j].set(i, true);
            }
        }
        t
    }

    /// Matrix-vector product `self · v`.
    pub fn mul_vec(&self, v: &BitVector) -> Result<BitVector> {
        if v.len() != self.cols {
            return Err(Error::LengthMismatch {
                left: self.cols,
                right: v.len(),
            });
        }
        let mut out = BitVector::zeros(self.rows);
        for (i, row) in self.data.iter().enumerate() {
            if row.dot_unchecked(v) {
                out.set(i, true);
            }
        }
        Ok(out)
    }

    pub fn rank(&self) -> usize {
        let mut reducer = RowReducer::new(self.cols);
        for row in &self.data {
            reducer.insert(row.clone());
        }
        reducer.rank()
    }

    /// Basis of `{y : self · y = 0}`, one vector per free column, in
    /// increasing free-column order.
    pub fn nullspace_basis(&self) -> Vec<BitVector> {
        let mut reducer = RowReducer::new(self.cols);
        for row in &self.data {
            reducer.insert(row.clone());
        }
        reducer.kernel_basis()
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{} [", self.rows, self.cols)?;
        for row in &self.data {
            writeln!(f, "  {row}")?;
        }
        write!(f, "]")
    }
}

/// Incremental Gaussian elimination.
///
/// Rows are streamed in and kept in echelon form keyed by their pivot (the
/// lowest set bit). Pivots are scanned left to right, so the reduced row
/// echelon form, and with it the kernel basis, is independent of the order
/// the rows arrive in.
#[derive(Clone, Debug)]
pub struct RowReducer {
    cols: usize,
    /// `pivot_of[c]` is the index in `rows` whose pivot is column `c`.
    pivot_of: Vec<Option<usize>>,
    rows: Vec<BitVector>,
}

impl RowReducer {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            pivot_of: vec![None; cols],
            rows: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.cols
    }

    /// Reduces `v` against the stored rows in place.
    fn reduce(&self, v: &mut BitVector) {
        // Stored rows have distinct pivots and every row only has bits at or
        // after its pivot, so one left-to-right sweep suffices.
        let mut start = 0;
        while let Some(p) = first_one_from(v, start) {
            if let Some(r) = self.pivot_of[p] {
                v.xor_assign_unchecked(&self.rows[r]);
            }
            start = p + 1;
        }
    }

    /// Inserts a row; returns `true` if it increased the rank.
    pub fn insert(&mut self, mut v: BitVector) -> bool {
        debug_assert_eq!(v.len(), self.cols);
        if self.is_full() {
            return false;
        }
        self.reduce(&mut v);
        match v.first_one() {
            None => false,
            Some(p) => {
                self.pivot_of[p] = Some(self.rows.len());
                self.rows.push(v);
                true
            }
        }
    }

    /// Whether `v` lies in the row space.
    pub fn contains(&self, v: &BitVector) -> bool {
        let mut v = v.clone();
        self.reduce(&mut v);
        v.is_zero()
    }

    /// Kernel basis of the row space, in increasing free-column order.
    pub fn kernel_basis(&self) -> Vec<BitVector> {
        // Back-substitute to reduced row echelon form: process pivots right
        // to left so each row is cleared of every later pivot column.
        let mut rref: Vec<Option<BitVector>> = vec![None; self.cols];
        for c in (0..self.cols).rev() {
            let Some(r) = self.pivot_of[c] else { continue };
            let mut row = self.rows[r].clone();
            let later: Vec<usize> = row.iter_ones().filter(|&j| j > c).collect();
            for j in later {
                if let Some(other) = &rref[j] {
                    if row.get(j) {
                        row.xor_assign_unchecked(other);
                    }
                }
            }
            rref[c] = Some(row);
        }
        let mut basis = Vec::with_capacity(self.cols - self.rank());
        for f in 0..self.cols {
            if self.pivot_of[f].is_some() {
                continue;
            }
            let mut v = BitVector::unit(self.cols, f);
            for (c, row) in rref.iter().enumerate() {
                if let Some(row) = row {
                    if row.get(f) {
                        v.set(c, true);
                    }
                }
            }
            basis.push(v);
        }
        basis
    }
}

fn first_one_from(v: &BitVector, start: usize) -> Option<usize> {
    let words = v.words();
    let mut wi = start / WORD_BITS;
    if wi >= words.len() {
        return None;
    }
    let mut w = words[wi] & (u64::MAX << (start % WORD_BITS));
    loop {
        if w != 0 {
            return Some(wi * WORD_BITS + w.trailing_zeros() as usize);
        }
        wi += 1;
        if wi >= words.len() {
            return None;
        }
        w = words[wi];
    }
}

/// Whether `v` lies in the span of `basis`.
pub fn in_span(basis: &[BitVector], v: &BitVector) -> bool {
    let mut reducer = RowReducer::new(v.len());
    for b in basis {
        reducer.insert(b.clone());
    }
    reducer.contains(v)
}

/// Free-function form of [`BitVector::xor_in_place`].
pub fn xor_in_place(a: &mut BitVector, b: &BitVector) -> Result<()> {
    a.xor_in_place(b)
}

pub fn and_popcount_parity(a: &BitVector, b: &BitVector) -> Result<bool> {
    a.and_popcount_parity(b)
}

pub fn nullspace_basis(m: &BitMatrix) -> Vec<BitVector> {
    m.nullspace_basis()
}

pub fn rank(m: &BitMatrix) -> usize {
    m.rank()
}
