//! Persistent collection of trajectories used as restart points.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parity::{ParityMatrix, SignatureTensor};
use crate::search::Trajectory;

const INDEX_FILE: &str = "index.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    id: usize,
    file: String,
    rhos: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Index {
    paths: Vec<IndexEntry>,
}

/// Numbered trajectories that all share the benchmark's tensor. On disk it
/// is a directory of trajectory files plus `index.json` listing each path's
/// column counts.
#[derive(Clone, Debug)]
pub struct PathStore {
    dir: Option<PathBuf>,
    tensor: SignatureTensor,
    paths: Vec<Trajectory>,
}

impl PathStore {
    /// A store that lives only in memory.
    pub fn in_memory(tensor: SignatureTensor) -> Self {
        Self {
            dir: None,
            tensor,
            paths: Vec::new(),
        }
    }

    /// Opens `dir`, creating it if needed, and loads every indexed path.
    /// Paths whose tensor differs from `tensor` are rejected.
    pub fn open(dir: &Path, tensor: SignatureTensor) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut store = Self {
            dir: Some(dir.to_path_buf()),
            tensor,
            paths: Vec::new(),
        };
        let index_path = dir.join(INDEX_FILE);
        if index_path.exists() {
            let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
            let index: Index = serde_json::from_str(&text)?;
            for (k, e) in index.paths.iter().enumerate() {
                if e.id != k {
                    return Err(Error::Config(format!(
                        "{}: path ids must be 0, 1, 2, …",
                        index_path.display()
                    )));
                }
                let t = Trajectory::read(&dir.join(&e.file))?;
                if t.column_counts != e.rhos {
                    return Err(Error::Config(format!(
                        "{}: column counts of path {k} disagree with its file",
                        index_path.display()
                    )));
                }
                store.check(&t)?;
                store.paths.push(t);
            }
        }
        Ok(store)
    }

    pub fn tensor(&self) -> &SignatureTensor {
        &self.tensor
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn get(&self, id: usize) -> Result<&Trajectory> {
        self.paths.get(id).ok_or(Error::UnknownPath(id))
    }

    pub fn paths(&self) -> &[Trajectory] {
        &self.paths
    }

    /// Per-state column counts of path `id`.
    pub fn rhos(&self, id: usize) -> Result<&[usize]> {
        Ok(&self.get(id)?.column_counts)
    }

    /// The path reaching the lowest `(ρ, density)`; ties go to the lower id.
    pub fn best_path(&self) -> Option<usize> {
        (0..self.paths.len()).min_by(|&a, &b| {
            let (pa, pb) = (self.paths[a].best(), self.paths[b].best());
            pa.column_count()
                .cmp(&pb.column_count())
                .then(pa.density().total_cmp(&pb.density()))
        })
    }

    fn check(&self, t: &Trajectory) -> Result<()> {
        for (i, s) in t.states.iter().enumerate() {
            if s.signature_tensor() != self.tensor {
                return Err(Error::TensorMismatch(i));
            }
        }
        Ok(())
    }

    /// Adds a path after checking every state against the benchmark tensor,
    /// persisting it when the store has a directory. Returns its id.
    pub fn insert(&mut self, t: Trajectory) -> Result<usize> {
        self.check(&t)?;
        let id = self.paths.len();
        if let Some(dir) = &self.dir {
            let file = format!("path-{id:04}.traj");
            t.write(&dir.join(&file))?;
            self.paths.push(t);
            self.write_index()?;
        } else {
            self.paths.push(t);
        }
        Ok(id)
    }

    fn write_index(&self) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let index = Index {
            paths: self
                .paths
                .iter()
                .enumerate()
                .map(|(id, t)| IndexEntry {
                    id,
                    file: format!("path-{id:04}.traj"),
                    rhos: t.column_counts.clone(),
                })
                .collect(),
        };
        let path = dir.join(INDEX_FILE);
        let text = serde_json::to_string_pretty(&index)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Index of the last state on `rhos` with `ρ > rank_thr`, or 0 when none
/// qualifies.
pub fn restart_index(rhos: &[usize], rank_thr: usize) -> usize {
    rhos.iter().rposition(|&r| r > rank_thr).unwrap_or(0)
}

/// The last state on path `path_num` whose column count is still above
/// `rank_thr`; the path's first state when none is.
pub fn set_up_new_init(store: &PathStore, path_num: usize, rank_thr: usize) -> Result<ParityMatrix> {
    let t = store.get(path_num)?;
    Ok(t.states[restart_index(&t.column_counts, rank_thr)].clone())
}
