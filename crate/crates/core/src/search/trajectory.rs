use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::engine::{apply_action, Action, NullspaceId, Origin};
use crate::error::{Error, Result};
use crate::gf2::BitVector;
use crate::parity::ParityMatrix;

const MAGIC: &str = "vartodd-trajectory v1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StopReason {
    /// No candidate action in the admissible reduction range.
    #[default]
    NoAction,
    BudgetExhausted,
    /// Too many consecutive iterations without a smaller matrix.
    Patience,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::NoAction => "converged",
            StopReason::BudgetExhausted => "budget",
            StopReason::Patience => "patience",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StopReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "converged" => Ok(StopReason::NoAction),
            "budget" => Ok(StopReason::BudgetExhausted),
            "patience" => Ok(StopReason::Patience),
            other => Err(Error::parse(0, format!("unknown stop reason {other:?}"))),
        }
    }
}

/// The sequence of states visited by one run. `states[0]` is the simplified
/// input and `states[i + 1] = apply_action(states[i], actions[i])`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<ParityMatrix>,
    pub actions: Vec<Action>,
    pub column_counts: Vec<usize>,
    /// Cumulative matrix evaluations when each state was reached.
    pub matrix_evals: Vec<u64>,
    pub seed: u64,
    pub policy_digest: String,
    pub stop_reason: StopReason,
    pub iterations: u64,
    pub total_evals: u64,
}

impl Trajectory {
    pub fn start(initial: ParityMatrix, seed: u64, policy_digest: String) -> Self {
        Self {
            column_counts: vec![initial.column_count()],
            states: vec![initial],
            actions: Vec::new(),
            matrix_evals: vec![0],
            seed,
            policy_digest,
            stop_reason: StopReason::default(),
            iterations: 0,
            total_evals: 0,
        }
    }

    pub fn push(&mut self, action: Action, next: ParityMatrix, evals: u64) {
        self.column_counts.push(next.column_count());
        self.states.push(next);
        self.actions.push(action);
        self.matrix_evals.push(evals);
    }

    pub fn initial(&self) -> &ParityMatrix {
        &self.states[0]
    }

    pub fn last(&self) -> &ParityMatrix {
        self.states.last().expect("trajectory has an initial state")
    }

    pub fn initial_rho(&self) -> usize {
        self.column_counts[0]
    }

    pub fn final_rho(&self) -> usize {
        *self.column_counts.last().expect("trajectory has an initial state")
    }

    /// Index of the first state with the fewest columns.
    pub fn best_index(&self) -> usize {
        let min = *self.column_counts.iter().min().expect("nonempty");
        self.column_counts.iter().position(|&c| c == min).unwrap()
    }

    pub fn best(&self) -> &ParityMatrix {
        &self.states[self.best_index()]
    }

    pub fn best_rho(&self) -> usize {
        self.column_counts[self.best_index()]
    }

    /// The state at position `k` in the index, used to restart searches.
    pub fn state(&self, k: usize) -> Option<&ParityMatrix> {
        self.states.get(k)
    }

    /// The first `k + 1` states with their actions.
    pub fn prefix(&self, k: usize) -> Trajectory {
        let k = k.min(self.states.len() - 1);
        Trajectory {
            states: self.states[..=k].to_vec(),
            actions: self.actions[..k].to_vec(),
            column_counts: self.column_counts[..=k].to_vec(),
            matrix_evals: self.matrix_evals[..=k].to_vec(),
            iterations: k as u64,
            total_evals: self.matrix_evals[k],
            ..self.clone()
        }
    }

    /// Continues this path with `next`, which must start at this path's
    /// last state. Evaluation counts of `next` are offset by ours.
    pub fn extend_with(&mut self, next: &Trajectory) -> Result<()> {
        if next.initial() != self.last() {
            return Err(Error::InvalidTrajectory(
                "continuation does not start at the last state".into(),
            ));
        }
        let base = *self.matrix_evals.last().expect("nonempty");
        for i in 0..next.actions.len() {
            self.push(
                next.actions[i].clone(),
                next.states[i + 1].clone(),
                base + next.matrix_evals[i + 1],
            );
        }
        self.iterations += next.iterations;
        self.total_evals = base + next.total_evals;
        self.stop_reason = next.stop_reason;
        self.seed = next.seed;
        self.policy_digest = next.policy_digest.clone();
        Ok(())
    }

    /// Running minimum of ρ against evaluation count, one row per state.
    pub fn best_so_far_csv(&self) -> String {
        let mut out = String::from("iteration,matrix_evals,best_rho\n");
        let mut best = usize::MAX;
        for (i, (&rho, &evals)) in self.column_counts.iter().zip(&self.matrix_evals).enumerate() {
            best = best.min(rho);
            out.push_str(&format!("{i},{evals},{best}\n"));
        }
        out
    }

    /// Re-applies every action and checks that it reproduces the stored
    /// states and that the tensor never changes.
    pub fn verify(&self) -> Result<()> {
        let t0 = self.states[0].signature_tensor();
        for (i, a) in self.actions.iter().enumerate() {
            let next = apply_action(&self.states[i], a)?;
            if next != self.states[i + 1] {
                return Err(Error::InvalidTrajectory(format!(
                    "state {} does not follow from its action",
                    i + 1
                )));
            }
            if next.signature_tensor() != t0 {
                return Err(Error::TensorMismatch(i + 1));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{MAGIC}\npolicy_digest {}\nseed {}\nstop {}\n",
            self.policy_digest, self.seed, self.stop_reason
        );
        out.push_str(&self.states[0].to_string());
        for (i, a) in self.actions.iter().enumerate() {
            out.push_str(&format!(
                "---\naction {} {} evals {}\n",
                a.z.to_bit_string(),
                a.y.to_bit_string(),
                self.matrix_evals[i + 1]
            ));
            out.push_str(&self.states[i + 1].to_string());
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }
}

fn header_value<'a>(line: Option<(usize, &'a str)>, key: &str) -> Result<&'a str> {
    let (no, l) = line.ok_or_else(|| Error::parse(0, format!("missing {key}")))?;
    l.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::parse(no, format!("expected \"{key} ...\"")))
}

impl FromStr for Trajectory {
    type Err = Error;

    /// Parses the text format and checks each state against its action.
    /// Odd-weight `y` marks an action that appended `z`.
    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(Error::parse(1, format!("expected {MAGIC:?}"))),
        }
        let digest = header_value(lines.next(), "policy_digest")?.to_string();
        let seed_line = lines.peek().map(|x| x.0).unwrap_or(0);
        let seed = header_value(lines.next(), "seed")?
            .parse::<u64>()
            .map_err(|e| Error::parse(seed_line, e.to_string()))?;
        let stop = header_value(lines.next(), "stop")?.parse::<StopReason>()?;
        let first = ParityMatrix::read_block(&mut lines)?;
        let mut traj = Trajectory::start(first, seed, digest);
        traj.stop_reason = stop;
        loop {
            let Some((no, l)) = lines.next() else { break };
            if l.is_empty() {
                continue;
            }
            if l != "---" {
                return Err(Error::parse(no, "expected \"---\""));
            }
            let (no, l) = lines
                .next()
                .ok_or_else(|| Error::parse(no, "missing action line"))?;
            let parts: Vec<&str> = l.split(' ').collect();
            let ["action", z, y, "evals", evals] = parts[..] else {
                return Err(Error::parse(no, "expected \"action <z> <y> evals <N>\""));
            };
            let z = BitVector::parse(z).map_err(|_| Error::parse(no, "bad z"))?;
            let y = BitVector::parse(y).map_err(|_| Error::parse(no, "bad y"))?;
            let evals: u64 = evals.parse().map_err(|_| Error::parse(no, "bad evals"))?;
            let prev = traj.last();
            if z.len() != prev.qubits() || y.len() != prev.column_count() {
                return Err(Error::parse(no, "action does not fit the previous state"));
            }
            let mut action = Action {
                append_z: y.count_ones() % 2 == 1,
                z,
                y,
                predicted_reduction: 0,
                origin: Origin::FastTodd,
                nullspace_id: NullspaceId::Z(0),
            };
            let next = ParityMatrix::read_block(&mut lines)?;
            action.predicted_reduction = prev.column_count() as i64 - next.column_count() as i64;
            traj.push(action, next, evals);
        }
        traj.total_evals = *traj.matrix_evals.last().unwrap();
        traj.iterations = traj.actions.len() as u64;
        traj.verify()?;
        Ok(traj)
    }
}
