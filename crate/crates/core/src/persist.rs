//! Versioned JSON index files.
//!
//! An index file stores the tree's node array together with the kernel, the
//! base and a content hash of the dataset it was built from. Loading refuses
//! a dataset whose hash differs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cover_tree::{CoverNode, CoverTree, NodeId};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{EvalCounter, Kernel};

pub const INDEX_FORMAT: &str = "fastmks-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IndexFile {
    pub format: String,
    pub version: u32,
    pub kernel: String,
    pub base: f64,
    pub fingerprint: String,
    pub n: usize,
    pub root: NodeId,
    pub construction_evals: u64,
    pub nodes: Vec<CoverNode>,
}

impl IndexFile {
    pub fn from_tree(tree: &CoverTree) -> Self {
        IndexFile {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            kernel: tree.kernel().to_string(),
            base: tree.base(),
            fingerprint: tree.dataset().fingerprint(),
            n: tree.dataset().len(),
            root: tree.root(),
            construction_evals: tree.construction_evals(),
            nodes: tree.nodes().to_vec(),
        }
    }

    /// Rebuilds the tree over `dataset`, filling its self-kernel cache if
    /// needed (`n` evaluations on `counter`).
    pub fn into_tree(self, dataset: Dataset, counter: &mut EvalCounter) -> Result<CoverTree> {
        if self.format != INDEX_FORMAT {
            return Err(Error::IndexMismatch(format!("not an index file (format `{}`)", self.format)));
        }
        if self.version != INDEX_VERSION {
            return Err(Error::IndexMismatch(format!("unsupported index version {}", self.version)));
        }
        let fingerprint = dataset.fingerprint();
        if fingerprint != self.fingerprint || dataset.len() != self.n {
            return Err(Error::IndexMismatch(format!(
                "index was built for dataset {} (n = {}), got {} (n = {})",
                self.fingerprint,
                self.n,
                fingerprint,
                dataset.len()
            )));
        }
        let kernel: Kernel = self.kernel.parse()?;
        let dataset = dataset.with_self_kernels(&kernel, counter)?;
        CoverTree::from_parts(Arc::new(dataset), kernel, self.base, self.nodes, self.root, self.construction_evals)
    }
}

pub fn save_index(tree: &CoverTree, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ctx = || format!("writing index {}", path.display());
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(ctx(), e))?);
    serde_json::to_writer(&mut out, &IndexFile::from_tree(tree))?;
    out.flush().map_err(|e| Error::io(ctx(), e))
}

pub fn read_index(path: impl AsRef<Path>) -> Result<IndexFile> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(format!("reading index {}", path.display()), e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Reads an index and attaches it to `dataset`, which must be the dataset
/// the index was built from.
pub fn load_index(path: impl AsRef<Path>, dataset: Dataset, counter: &mut EvalCounter) -> Result<CoverTree> {
    read_index(path)?.into_tree(dataset, counter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(rows: Vec<Vec<f64>>) -> CoverTree {
        let mut c = EvalCounter::new();
        let ds = Dataset::from_vectors(rows).unwrap().with_self_kernels(&Kernel::Linear, &mut c).unwrap();
        CoverTree::construct(Arc::new(ds), Kernel::Linear, 1.3, &mut c).unwrap()
    }

    #[test]
    fn round_trip_preserves_nodes() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let t = tree(rows.clone());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        save_index(&t, &path).unwrap();
        let loaded = load_index(&path, Dataset::from_vectors(rows).unwrap(), &mut EvalCounter::new()).unwrap();
        assert_eq!(loaded.nodes(), t.nodes());
        assert_eq!(loaded.root(), t.root());
        assert_eq!(loaded.construction_evals(), t.construction_evals());
        assert!(loaded.validate_invariants().passed());
    }

    #[test]
    fn refuses_other_dataset() {
        let t = tree(vec![vec![1.0], vec![2.0]]);
        let file = IndexFile::from_tree(&t);
        let other = Dataset::from_vectors(vec![vec![1.0], vec![2.5]]).unwrap();
        let err = file.into_tree(other, &mut EvalCounter::new()).unwrap_err();
        assert!(matches!(err, Error::IndexMismatch(_)), "{err}");
    }

    #[test]
    fn refuses_unknown_version() {
        let t = tree(vec![vec![1.0], vec![2.0]]);
        let mut file = IndexFile::from_tree(&t);
        file.version = 99;
        let ds = Dataset::from_vectors(vec![vec![1.0], vec![2.0]]).unwrap();
        assert!(file.into_tree(ds, &mut EvalCounter::new()).is_err());
    }
}
