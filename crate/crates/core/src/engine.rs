//! Admissible rewrites of a parity matrix.
//!
//! An action `(z, y)` maps `P` to `odd(P ⊕ z·yᵀ)`: every column `j` with
//! `y_j = 1` is shifted by `z`. For fixed `z` the vectors `y` that leave the
//! signature tensor unchanged form a linear space `N_z`. Expanding the
//! tensor of the shifted matrix gives, for every index triple,
//!
//! ```text
//! ΔA(α,β,γ) = Σ_j y_j [ z_α P_βj P_γj + z_β P_αj P_γj + z_γ P_αj P_βj
//!                     + z_α z_β P_γj + z_α z_γ P_βj + z_β z_γ P_αj
//!                     + z_α z_β z_γ ]            (mod 2)
//! ```
//!
//! so `N_z` is the kernel of one row per sorted triple. Triples that avoid
//! the support of `z` give zero rows and are skipped.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::gf2::{BitMatrix, BitVector, RowReducer};
use crate::parity::ParityMatrix;

/// Which stage produced an action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Origin {
    Tohpe,
    FastTodd,
}

/// The nullspace an action's `y` was drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NullspaceId {
    /// The common subspace shared by every `z`.
    Tohpe,
    /// `N_z` for the z at this position in the iteration's exploration order.
    Z(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Action {
    pub z: BitVector,
    pub y: BitVector,
    /// `column_count(P) - column_count(apply_action(P, a))`.
    pub predicted_reduction: i64,
    pub origin: Origin,
    pub nullspace_id: NullspaceId,
    /// Odd-weight `y` drawn from the relaxed system; `z` is appended as a
    /// column after the shift to restore the cubic term.
    pub append_z: bool,
}

impl Action {
    /// An action with its reduction measured against `p`.
    pub fn measured(
        p: &ParityMatrix,
        z: BitVector,
        y: BitVector,
        origin: Origin,
        nullspace_id: NullspaceId,
    ) -> Result<Self> {
        let mut a = Action {
            z,
            y,
            predicted_reduction: 0,
            origin,
            nullspace_id,
            append_z: false,
        };
        let next = apply_action(p, &a)?;
        a.predicted_reduction = p.column_count() as i64 - next.column_count() as i64;
        Ok(a)
    }
}

/// Row products of one parity matrix, shared by every `z` explored against it.
#[derive(Clone, Debug)]
pub struct RowProducts {
    n: usize,
    m: usize,
    rows: Vec<BitVector>,
    /// `P_a ∧ P_b` for `a < b`, packed by `b * (b - 1) / 2 + a`.
    pairs: Vec<BitVector>,
    ones: BitVector,
}

impl RowProducts {
    pub fn new(p: &ParityMatrix) -> Self {
        let rows = p.rows();
        let n = p.qubits();
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for b in 0..n {
            for a in 0..b {
                pairs.push(rows[a].and_unchecked(&rows[b]));
            }
        }
        Self {
            n,
            m: p.column_count(),
            rows,
            pairs,
            ones: BitVector::ones(p.column_count()),
        }
    }

    #[inline]
    fn pair(&self, a: usize, b: usize) -> &BitVector {
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => &self.rows[a],
            std::cmp::Ordering::Less => &self.pairs[b * (b - 1) / 2 + a],
            std::cmp::Ordering::Greater => &self.pairs[a * (a - 1) / 2 + b],
        }
    }

    /// Calls `f` with the constraint row of every triple touching `supp(z)`.
    /// With `relaxed` the all-ones term is left out.
    fn for_each_constraint(&self, z: &BitVector, relaxed: bool, mut f: impl FnMut(BitVector)) {
        let n = self.n;
        for g in 0..n {
            for b in 0..=g {
                for a in 0..=b {
                    let (za, zb, zg) = (z.get(a), z.get(b), z.get(g));
                    if !(za || zb || zg) {
                        continue;
                    }
                    let mut r = BitVector::zeros(self.m);
                    if za {
                        r.xor_assign_unchecked(self.pair(b, g));
                    }
                    if zb {
                        r.xor_assign_unchecked(self.pair(a, g));
                    }
                    if zg {
                        r.xor_assign_unchecked(self.pair(a, b));
                    }
                    if za && zb {
                        r.xor_assign_unchecked(&self.rows[g]);
                    }
                    if za && zg {
                        r.xor_assign_unchecked(&self.rows[b]);
                    }
                    if zb && zg {
                        r.xor_assign_unchecked(&self.rows[a]);
                    }
                    if za && zb && zg && !relaxed {
                        r.xor_assign_unchecked(&self.ones);
                    }
                    if !r.is_zero() {
                        f(r);
                    }
                }
            }
        }
    }

    /// Basis of `N_z` (or of the relaxed space when `relaxed`).
    pub fn nullspace_for_z(&self, z: &BitVector, relaxed: bool) -> Vec<BitVector> {
        let mut red = RowReducer::new(self.m);
        self.for_each_constraint(z, relaxed, |r| {
            red.insert(r);
        });
        red.kernel_basis()
    }

    /// Basis of the common subspace: kernel of every `P_α`, every
    /// `P_β ∧ P_γ`, and the all-ones row.
    pub fn tohpe_subspace(&self) -> Vec<BitVector> {
        let mut red = RowReducer::new(self.m);
        red.insert(self.ones.clone());
        for r in self.rows.iter().chain(&self.pairs) {
            if red.is_full() {
                break;
            }
            red.insert(r.clone());
        }
        red.kernel_basis()
    }
}

/// The explicit linear system whose kernel is `N_z`.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    pub rows: BitMatrix,
    pub source_z: BitVector,
}

impl ConstraintSystem {
    pub fn new(p: &ParityMatrix, z: &BitVector) -> Result<Self> {
        check_z(p, z)?;
        let ctx = RowProducts::new(p);
        let mut rows = Vec::new();
        ctx.for_each_constraint(z, false, |r| rows.push(r));
        Ok(Self {
            rows: BitMatrix::from_rows(p.column_count(), rows)?,
            source_z: z.clone(),
        })
    }

    pub fn nullspace(&self) -> Vec<BitVector> {
        self.rows.nullspace_basis()
    }
}

fn check_z(p: &ParityMatrix, z: &BitVector) -> Result<()> {
    if z.len() != p.qubits() {
        return Err(Error::DimensionMismatch {
            expected: p.qubits(),
            found: z.len(),
        });
    }
    Ok(())
}

/// Candidate shifts: every nonzero column, then every nonzero pairwise sum
/// in lexicographic `(i, j)` order, with duplicates dropped.
pub fn z_candidates(p: &ParityMatrix) -> Vec<BitVector> {
    let cols = p.columns();
    let mut seen = std::collections::HashSet::with_capacity(cols.len() * (cols.len() + 1) / 2);
    let mut out = Vec::new();
    let mut offer = |v: BitVector, out: &mut Vec<BitVector>| {
        if !v.is_zero() && seen.insert(v.clone()) {
            out.push(v);
        }
    };
    for c in cols {
        offer(c.clone(), &mut out);
    }
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            let mut v = cols[i].clone();
            v.xor_assign_unchecked(&cols[j]);
            offer(v, &mut out);
        }
    }
    out
}

pub fn nullspace_for_z(p: &ParityMatrix, z: &BitVector) -> Result<Vec<BitVector>> {
    check_z(p, z)?;
    Ok(RowProducts::new(p).nullspace_for_z(z, false))
}

pub fn tohpe_subspace(p: &ParityMatrix) -> Vec<BitVector> {
    RowProducts::new(p).tohpe_subspace()
}

/// `P ⊕ z·yᵀ` without simplification.
pub fn shift(p: &ParityMatrix, z: &BitVector, y: &BitVector) -> Result<ParityMatrix> {
    check_z(p, z)?;
    if y.len() != p.column_count() {
        return Err(Error::LengthMismatch {
            left: p.column_count(),
            right: y.len(),
        });
    }
    let mut out = p.clone();
    let cols = out.columns_mut();
    for j in y.iter_ones() {
        cols[j].xor_assign_unchecked(z);
    }
    Ok(out)
}

/// `odd(P ⊕ z·yᵀ)`, appending `z` first when the action asks for it.
pub fn apply_action(p: &ParityMatrix, a: &Action) -> Result<ParityMatrix> {
    let mut shifted = shift(p, &a.z, &a.y)?;
    if a.append_z && a.y.count_ones() % 2 == 1 {
        shifted.push_column(a.z.clone())?;
    }
    Ok(shifted.simplify())
}

/// `2·#{i<j : col_i ⊕ col_j = z} + #{i : col_i = z}`.
pub fn reduction_upper_bound(p: &ParityMatrix, z: &BitVector) -> usize {
    let mut counts: HashMap<&BitVector, usize> = HashMap::with_capacity(p.column_count());
    for c in p.columns() {
        *counts.entry(c).or_default() += 1;
    }
    let mut pairs = 0usize;
    let mut singles = 0usize;
    for (&c, &k) in &counts {
        if c == z {
            singles += k;
        }
        let partner = c.xor(z).expect("lengths agree");
        if let Some(&l) = counts.get(&partner) {
            // Each unordered value pair is visited from both sides.
            if c < &partner {
                pairs += k * l;
            }
        }
    }
    2 * pairs + singles
}

/// Upper bounds for every z at once, keyed by z; zero is omitted.
pub fn all_upper_bounds(p: &ParityMatrix) -> HashMap<BitVector, usize> {
    let cols = p.columns();
    let mut out: HashMap<BitVector, usize> = HashMap::with_capacity(cols.len() * cols.len() / 2);
    for (i, c) in cols.iter().enumerate() {
        if !c.is_zero() {
            *out.entry(c.clone()).or_default() += 1;
        }
        for d in &cols[i + 1..] {
            let mut v = c.clone();
            v.xor_assign_unchecked(d);
            if !v.is_zero() {
                *out.entry(v).or_default() += 2;
            }
        }
    }
    out
}

/// Which columns of a simplified matrix a given `z` can cancel.
///
/// On a simplified matrix the columns are distinct, so the pairs
/// `col_i ⊕ col_j = z` form a matching and the exact reduction of `(z, y)`
/// is `2·#{pairs split by y} + #{columns equal to z hit by y}`.
#[derive(Clone, Debug)]
pub struct ZStructure {
    pub pairs: Vec<(usize, usize)>,
    pub singles: Vec<usize>,
}

impl ZStructure {
    pub fn new(index: &ColumnIndex, p: &ParityMatrix, z: &BitVector) -> Self {
        let mut pairs = Vec::new();
        let mut singles = Vec::new();
        for (i, c) in p.columns().iter().enumerate() {
            if c == z {
                singles.push(i);
                continue;
            }
            let mut partner = c.clone();
            partner.xor_assign_unchecked(z);
            if let Some(j) = index.get(&partner) {
                if i < j {
                    pairs.push((i, j));
                }
            }
        }
        Self { pairs, singles }
    }

    pub fn upper_bound(&self) -> usize {
        2 * self.pairs.len() + self.singles.len()
    }

    pub fn targets(&self) -> usize {
        self.pairs.len() + self.singles.len()
    }

    /// Projects `y` onto the target functionals: bit `t < pairs.len()` is
    /// `y_i ⊕ y_j` for pair `t`, later bits are `y_i` for each single.
    pub fn project(&self, y: &BitVector) -> BitVector {
        let mut out = BitVector::zeros(self.targets());
        for (t, &(i, j)) in self.pairs.iter().enumerate() {
            if y.get(i) != y.get(j) {
                out.set(t, true);
            }
        }
        let off = self.pairs.len();
        for (t, &i) in self.singles.iter().enumerate() {
            if y.get(i) {
                out.set(off + t, true);
            }
        }
        out
    }

    /// Exact reduction from a projected vector.
    /// Coordinates past [`targets`](Self::targets) are ignored.
    pub fn reduction_of_projection(&self, proj: &BitVector) -> usize {
        let np = self.pairs.len();
        let nt = self.targets();
        let mut red = 0;
        for t in proj.iter_ones().take_while(|&t| t < nt) {
            red += if t < np { 2 } else { 1 };
        }
        red
    }

    pub fn reduction(&self, y: &BitVector) -> usize {
        self.reduction_of_projection(&self.project(y))
    }
}

/// Column value to index lookup for a simplified matrix.
#[derive(Clone, Debug, Default)]
pub struct ColumnIndex {
    map: HashMap<BitVector, usize>,
}

impl ColumnIndex {
    pub fn new(p: &ParityMatrix) -> Self {
        let mut map = HashMap::with_capacity(p.column_count());
        for (i, c) in p.columns().iter().enumerate() {
            map.entry(c.clone()).or_insert(i);
        }
        Self { map }
    }

    pub fn get(&self, v: &BitVector) -> Option<usize> {
        self.map.get(v).copied()
    }
}

/// True when shifting by `(z, y)` only permutes the columns: every shifted
/// column lands on another shifted column, so the matrix is unchanged as a
/// set. Such zero-reduction moves never help a plateau walk.
pub fn is_permutation(index: &ColumnIndex, p: &ParityMatrix, z: &BitVector, y: &BitVector) -> bool {
    let cols = p.columns();
    y.iter_ones().all(|i| {
        let mut t = cols[i].clone();
        t.xor_assign_unchecked(z);
        index.get(&t).is_some_and(|j| y.get(j))
    })
}

/// For a `y` from the common subspace, the `z` with the largest exact
/// reduction: the most frequent value among `col_i ⊕ col_j` (`i` shifted,
/// `j` not, weight 2) and `col_i` (`i` shifted, weight 1). Ties go to the
/// smallest vector. Returns `None` when nothing cancels.
pub fn best_z_for(p: &ParityMatrix, y: &BitVector) -> Option<(BitVector, usize)> {
    let cols = p.columns();
    let mut score: HashMap<BitVector, usize> = HashMap::new();
    let unshifted: Vec<usize> = (0..cols.len()).filter(|&j| !y.get(j)).collect();
    for i in y.iter_ones() {
        if !cols[i].is_zero() {
            *score.entry(cols[i].clone()).or_default() += 1;
        }
        for &j in &unshifted {
            let mut v = cols[i].clone();
            v.xor_assign_unchecked(&cols[j]);
            if !v.is_zero() {
                *score.entry(v).or_default() += 2;
            }
        }
    }
    score
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parity::tensors_equal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bv(s: &str) -> BitVector {
        BitVector::parse(s).unwrap()
    }

    fn ccz7() -> ParityMatrix {
        let cols = (1u64..8).map(|x| BitVector::from_words(3, vec![x])).collect();
        ParityMatrix::new(3, cols).unwrap()
    }

    fn random_matrix(rng: &mut impl Rng, n: usize, m: usize) -> ParityMatrix {
        let cols = (0..m)
            .map(|_| BitVector::from_words(n, vec![rng.gen::<u64>()]))
            .collect();
        ParityMatrix::new(n, cols).unwrap()
    }

    /// Oracle: `y` preserves the tensor under the raw shift.
    fn preserves(p: &ParityMatrix, z: &BitVector, y: &BitVector) -> bool {
        let q = shift(p, z, y).unwrap();
        tensors_equal(&p.signature_tensor(), &q.signature_tensor()).unwrap()
    }

    #[test]
    fn z_candidate_examples() {
        let a = bv("101");
        let p = ParityMatrix::new(3, vec![a.clone()]).unwrap();
        assert_eq!(z_candidates(&p), vec![a.clone()]);
        let p = ParityMatrix::new(3, vec![a.clone(), a.clone()]).unwrap();
        assert_eq!(z_candidates(&p), vec![a]);
        let p = ParityMatrix::identity(2);
        assert_eq!(z_candidates(&p), vec![bv("10"), bv("01"), bv("11")]);
    }

    #[test]
    fn zero_z_gives_full_space() {
        let p = ccz7();
        let basis = nullspace_for_z(&p, &BitVector::zeros(3)).unwrap();
        assert_eq!(basis.len(), 7);
    }

    #[test]
    fn ccz_kernel_vectors_preserve_tensor() {
        let p = ccz7();
        for z in p.columns() {
            for y in nullspace_for_z(&p, z).unwrap() {
                assert!(preserves(&p, z, &y));
            }
        }
    }

    #[test]
    fn constraint_system_matches_streamed_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = random_matrix(&mut rng, 5, 11);
            let z = BitVector::from_words(5, vec![rng.gen()]);
            let sys = ConstraintSystem::new(&p, &z).unwrap();
            assert_eq!(sys.nullspace(), nullspace_for_z(&p, &z).unwrap());
            for y in sys.nullspace() {
                assert!(sys.rows.mul_vec(&y).unwrap().is_zero());
            }
        }
    }

    #[test]
    fn tohpe_identity_is_trivial() {
        assert!(tohpe_subspace(&ParityMatrix::identity(3)).is_empty());
        // Oracle: only y = 0 among all 8 vectors satisfies every row.
        let p = ParityMatrix::identity(3);
        let rows = p.rows();
        for x in 1u64..8 {
            let y = BitVector::from_words(3, vec![x]);
            let ok = rows.iter().all(|r| !r.dot_unchecked(&y)) && y.count_ones().is_multiple_of(2);
            assert!(!ok);
        }
    }

    #[test]
    fn tohpe_duplicate_pair_contains_11() {
        let c = bv("110");
        let p = ParityMatrix::new(3, vec![c.clone(), c]).unwrap();
        let basis = tohpe_subspace(&p);
        assert!(crate::gf2::in_span(&basis, &bv("11")));
    }

    #[test]
    fn apply_action_examples() {
        let p = ccz7();
        let z = bv("111");
        let noop = Action {
            z: z.clone(),
            y: BitVector::zeros(7),
            predicted_reduction: 0,
            origin: Origin::FastTodd,
            nullspace_id: NullspaceId::Z(0),
            append_z: false,
        };
        assert_eq!(apply_action(&p, &noop).unwrap(), p.simplify());
        let zero_z = Action {
            z: BitVector::zeros(3),
            y: BitVector::ones(7),
            ..noop.clone()
        };
        assert_eq!(apply_action(&p, &zero_z).unwrap(), p.simplify());
        let bad = Action {
            z: bv("11"),
            ..noop
        };
        assert!(apply_action(&p, &bad).is_err());
    }

    /// Every nonzero vector at n = 4 has a zero tensor, so it is very far
    /// from optimal. Returns the first `(z, y)` in candidate order whose
    /// measured reduction is at least two, found by enumerating `N_z`.
    pub(crate) fn two_reduction_instance() -> (ParityMatrix, BitVector, BitVector) {
        let p = ParityMatrix::new(
            4,
            (1u64..16).map(|x| BitVector::from_words(4, vec![x])).collect(),
        )
        .unwrap();
        for z in z_candidates(&p) {
            let basis = nullspace_for_z(&p, &z).unwrap();
            assert!(basis.len() < 20);
            for k in 1u64..(1 << basis.len()) {
                let mut y = BitVector::zeros(p.column_count());
                for (i, b) in basis.iter().enumerate() {
                    if (k >> i) & 1 == 1 {
                        y.xor_in_place(b).unwrap();
                    }
                }
                if p.column_count() - shift(&p, &z, &y).unwrap().simplify().column_count() >= 2 {
                    return (p, z, y);
                }
            }
        }
        panic!("no instance with reduction two");
    }

    #[test]
    fn lone_pair_cannot_be_split() {
        let c = bv("10");
        let z = bv("01");
        let p = ParityMatrix::new(2, vec![c.clone(), c.xor(&z).unwrap()]).unwrap();
        let y = bv("10");
        assert!(!preserves(&p, &z, &y));
        assert!(!crate::gf2::in_span(&nullspace_for_z(&p, &z).unwrap(), &y));
    }

    #[test]
    fn split_pair_reduces_by_at_least_two() {
        let (p, z, y) = two_reduction_instance();
        assert!(crate::gf2::in_span(&nullspace_for_z(&p, &z).unwrap(), &y));
        let a = Action::measured(&p, z, y, Origin::FastTodd, NullspaceId::Z(0)).unwrap();
        assert!(a.predicted_reduction >= 2);
        let q = apply_action(&p, &a).unwrap();
        assert_eq!(q.signature_tensor(), p.signature_tensor());
        assert_eq!(p.column_count() as i64 - q.column_count() as i64, a.predicted_reduction);
    }

    #[test]
    fn upper_bound_examples() {
        let a = bv("100");
        let z = bv("011");
        let b = bv("010");
        let p = ParityMatrix::new(3, vec![a.clone(), a.xor(&z).unwrap(), b]).unwrap();
        assert_eq!(reduction_upper_bound(&p, &z), 2);
        let p = ParityMatrix::new(3, vec![z.clone()]).unwrap();
        assert_eq!(reduction_upper_bound(&p, &z), 1);
        assert_eq!(reduction_upper_bound(&ccz7(), &bv("111")), 7);
        let all = all_upper_bounds(&ccz7());
        assert_eq!(all[&bv("111")], 7);
    }

    #[test]
    fn closed_form_reduction_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = random_matrix(&mut rng, 5, 14).simplify();
            if p.column_count() < 2 {
                continue;
            }
            let idx = ColumnIndex::new(&p);
            let z = BitVector::from_words(5, vec![rng.gen()]);
            if z.is_zero() {
                continue;
            }
            let zs = ZStructure::new(&idx, &p, &z);
            assert_eq!(zs.upper_bound(), reduction_upper_bound(&p, &z));
            let y = BitVector::from_words(p.column_count(), vec![rng.gen()]);
            let next = shift(&p, &z, &y).unwrap().simplify();
            assert_eq!(
                zs.reduction(&y),
                p.column_count() - next.column_count(),
                "{p:?} z={z} y={y}"
            );
        }
    }

    #[test]
    fn best_z_matches_exhaustive_choice() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = random_matrix(&mut rng, 4, 10).simplify();
            let m = p.column_count();
            if m < 2 {
                continue;
            }
            let y = BitVector::from_words(m, vec![rng.gen()]);
            let idx = ColumnIndex::new(&p);
            let best = (1u64..16)
                .map(|x| ZStructure::new(&idx, &p, &BitVector::from_words(4, vec![x])).reduction(&y))
                .max()
                .unwrap();
            let got = best_z_for(&p, &y).map_or(0, |(_, r)| r);
            assert_eq!(got, best);
        }
    }

    #[test]
    fn relaxed_odd_weight_with_appended_z_preserves_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut odd_seen = 0;
        for _ in 0..100 {
            let p = random_matrix(&mut rng, 4, 10);
            let z = BitVector::from_words(4, vec![rng.gen::<u64>() | 1]);
            let ctx = RowProducts::new(&p);
            for y in ctx.nullspace_for_z(&z, true) {
                let a = Action {
                    z: z.clone(),
                    y: y.clone(),
                    predicted_reduction: 0,
                    origin: Origin::FastTodd,
                    nullspace_id: NullspaceId::Z(0),
                    append_z: true,
                };
                odd_seen += y.count_ones() % 2;
                let q = apply_action(&p, &a).unwrap();
                assert_eq!(q.signature_tensor(), p.signature_tensor());
            }
        }
        assert!(odd_seen > 0);
    }
}
