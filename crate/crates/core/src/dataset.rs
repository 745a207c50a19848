use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::{EvalCounter, GramCounts, Kernel, Point};

/// Radicands this far below zero (relative to the self-kernel magnitudes of
/// the pair) are treated as rounding noise and clamped to 0.
pub const NEGATIVE_RADICAND_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Points {
    /// Row-major `n x dim` matrix.
    Vectors { dim: usize, values: Vec<f64> },
    Sequences(Vec<Vec<u8>>),
}

#[derive(Debug, Clone)]
struct SelfKernels {
    kernel: Kernel,
    values: Vec<f64>,
    max: f64,
}

/// An immutable, indexed collection of points, optionally carrying the
/// per-kernel caches (p-gram counts and self-kernel values).
#[derive(Debug, Clone)]
pub struct Dataset {
    points: Points,
    grams: Option<Vec<GramCounts>>,
    self_kernels: Option<SelfKernels>,
}

impl Dataset {
    pub fn from_vectors(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
            }
            values.extend_from_slice(row);
        }
        Ok(Self::from_points(Points::Vectors { dim, values }))
    }

    pub fn from_flat(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: values.len() % dim });
        }
        Ok(Self::from_points(Points::Vectors { dim, values }))
    }

    pub fn from_sequences(seqs: Vec<Vec<u8>>) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self::from_points(Points::Sequences(seqs)))
    }

    fn from_points(points: Points) -> Self {
        Dataset { points, grams: None, self_kernels: None }
    }

    pub fn len(&self) -> usize {
        match &self.points {
            Points::Vectors { dim, values } => values.len() / dim,
            Points::Sequences(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Vector dimension, `None` for string datasets.
    pub fn dim(&self) -> Option<usize> {
        match &self.points {
            Points::Vectors { dim, .. } => Some(*dim),
            Points::Sequences(_) => None,
        }
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn is_sequences(&self) -> bool {
        matches!(self.points, Points::Sequences(_))
    }

    pub fn vector(&self, i: usize) -> Option<&[f64]> {
        match &self.points {
            Points::Vectors { dim, values } => Some(&values[i * dim..(i + 1) * dim]),
            Points::Sequences(_) => None,
        }
    }

    pub fn sequence(&self, i: usize) -> Option<&[u8]> {
        match &self.points {
            Points::Sequences(s) => Some(&s[i]),
            Points::Vectors { .. } => None,
        }
    }

    /// The point at `i`, using cached p-grams when present.
    pub fn point(&self, i: usize) -> Point<'_> {
        match (&self.points, &self.grams) {
            (Points::Vectors { dim, values }, _) => Point::Vector(&values[i * dim..(i + 1) * dim]),
            (Points::Sequences(_), Some(g)) => Point::Grams(&g[i]),
            (Points::Sequences(s), None) => Point::Sequence(&s[i]),
        }
    }

    /// Builds the per-kernel point representation (p-gram counts for the
    /// p-spectrum kernel). No kernel evaluations are spent.
    pub fn prepare_for(mut self, kernel: &Kernel) -> Result<Self> {
        match (&self.points, kernel) {
            (Points::Sequences(seqs), Kernel::PSpectrum { p }) => {
                let stale = self.grams.as_ref().and_then(|g| g.first()).is_none_or(|g| g.p() != *p);
                if stale {
                    self.grams = Some(seqs.iter().map(|s| GramCounts::new(s, *p)).collect());
                }
            }
            (Points::Sequences(_), _) => {
                return Err(Error::DomainMismatch { kernel: kernel.to_string(), found: "string" })
            }
            (Points::Vectors { .. }, Kernel::PSpectrum { .. }) => {
                return Err(Error::DomainMismatch { kernel: kernel.to_string(), found: "vector" })
            }
            (Points::Vectors { .. }, _) => {}
        }
        if self.self_kernels.as_ref().is_some_and(|c| c.kernel != *kernel) {
            self.self_kernels = None;
        }
        Ok(self)
    }

    /// Fills the self-kernel cache: exactly one evaluation per point.
    pub fn with_self_kernels(self, kernel: &Kernel, counter: &mut EvalCounter) -> Result<Self> {
        let mut ds = self.prepare_for(kernel)?;
        if ds.self_kernels.is_some() {
            return Ok(ds);
        }
        let values = (0..ds.len())
            .map(|i| kernel.eval(ds.point(i), ds.point(i), counter))
            .collect::<Result<Vec<_>>>()?;
        let max = values.iter().copied().fold(0.0_f64, f64::max);
        ds.self_kernels = Some(SelfKernels { kernel: *kernel, values, max });
        Ok(ds)
    }

    /// Kernel the caches were built for.
    pub fn kernel(&self) -> Option<&Kernel> {
        self.self_kernels.as_ref().map(|c| &c.kernel)
    }

    pub fn self_kernels(&self) -> Option<&[f64]> {
        self.self_kernels.as_ref().map(|c| c.values.as_slice())
    }

    pub fn self_kernel(&self, i: usize) -> Result<f64> {
        self.self_kernels.as_ref().map(|c| c.values[i]).ok_or(Error::MissingSelfKernels)
    }

    /// Largest cached self-kernel value (0 if none are positive).
    pub fn max_self_kernel(&self) -> Result<f64> {
        self.self_kernels.as_ref().map(|c| c.max).ok_or(Error::MissingSelfKernels)
    }

    /// Distance between two dataset points in the kernel's feature space,
    /// `sqrt(K(x,x) + K(y,y) - 2 K(x,y))`, costing one kernel evaluation.
    pub fn induced_distance(&self, x: usize, y: usize, counter: &mut EvalCounter) -> Result<f64> {
        let cache = self.self_kernels.as_ref().ok_or(Error::MissingSelfKernels)?;
        let kxy = cache.kernel.eval(self.point(x), self.point(y), counter)?;
        let (kxx, kyy) = (cache.values[x], cache.values[y]);
        let radicand = kxx + kyy - 2.0 * kxy;
        if radicand >= 0.0 {
            return Ok(radicand.sqrt());
        }
        let tolerance = NEGATIVE_RADICAND_TOLERANCE * (kxx.abs() + kyy.abs()).max(1.0);
        if radicand >= -tolerance {
            Ok(0.0)
        } else {
            Err(Error::NonPsd { x, y, radicand })
        }
    }

    /// New dataset holding the listed points in order. Caches are dropped.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let points = match &self.points {
            Points::Vectors { dim, values } => {
                let mut out = Vec::with_capacity(indices.len() * dim);
                for &i in indices {
                    out.extend_from_slice(&values[i * dim..(i + 1) * dim]);
                }
                Points::Vectors { dim: *dim, values: out }
            }
            Points::Sequences(s) => Points::Sequences(indices.iter().map(|&i| s[i].clone()).collect()),
        };
        Dataset::from_points(points)
    }

    /// SHA-256 over the point content (not the caches), hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        match &self.points {
            Points::Vectors { dim, values } => {
                h.update(b"vectors\0");
                h.update((*dim as u64).to_le_bytes());
                h.update((values.len() as u64).to_le_bytes());
                for v in values {
                    h.update(v.to_bits().to_le_bytes());
                }
            }
            Points::Sequences(seqs) => {
                h.update(b"sequences\0");
                h.update((seqs.len() as u64).to_le_bytes());
                for s in seqs {
                    h.update((s.len() as u64).to_le_bytes());
                    h.update(s);
                }
            }
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vectors(rows: &[&[f64]]) -> Dataset {
        Dataset::from_vectors(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn self_kernel_cache_costs_n_evals() {
        let mut c = EvalCounter::new();
        let ds = vectors(&[&[3.0, 4.0], &[1.0, 0.0], &[0.0, 2.0]]).with_self_kernels(&Kernel::Linear, &mut c).unwrap();
        assert_eq!(c.count(), 3);
        assert_eq!(ds.self_kernels().unwrap(), &[25.0, 1.0, 4.0]);
    }

    #[test]
    fn cosine_self_kernels_are_one() {
        let ds = vectors(&[&[3.0, 4.0], &[-7.5, 0.1]]).with_self_kernels(&Kernel::Cosine, &mut EvalCounter::new()).unwrap();
        for v in ds.self_kernels().unwrap() {
            assert!((v - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn induced_distance_examples() {
        let mut c = EvalCounter::new();
        let ds = vectors(&[&[1.0, 0.0], &[0.0, 1.0]]).with_self_kernels(&Kernel::Linear, &mut c).unwrap();
        let before = c.count();
        assert_eq!(ds.induced_distance(0, 1, &mut c).unwrap(), 2f64.sqrt());
        assert_eq!(ds.induced_distance(1, 1, &mut c).unwrap(), 0.0);
        assert_eq!(c.count() - before, 2);

        let ds = vectors(&[&[2.0, 0.0], &[5.0, 0.0]]).with_self_kernels(&Kernel::Cosine, &mut c).unwrap();
        assert_eq!(ds.induced_distance(0, 1, &mut c).unwrap(), 0.0);
    }

    #[test]
    fn tanh_can_be_non_psd() {
        // tanh(0.25) + tanh(9) < 2 tanh(1.5)
        let k = Kernel::Tanh { scale: 1.0, offset: 0.0 };
        let ds = vectors(&[&[0.5], &[3.0]]).with_self_kernels(&k, &mut EvalCounter::new()).unwrap();
        let err = ds.induced_distance(0, 1, &mut EvalCounter::new()).unwrap_err();
        assert!(matches!(err, Error::NonPsd { .. }), "{err:?}");
    }

    #[test]
    fn missing_cache_is_an_error() {
        let ds = vectors(&[&[1.0]]);
        assert!(matches!(ds.induced_distance(0, 0, &mut EvalCounter::new()), Err(Error::MissingSelfKernels)));
    }

    #[test]
    fn sequences_need_string_kernel() {
        let ds = Dataset::from_sequences(vec![b"ABC".to_vec()]).unwrap();
        assert!(ds.clone().prepare_for(&Kernel::Linear).is_err());
        let ds = ds.prepare_for(&Kernel::PSpectrum { p: 2 }).unwrap();
        assert!(matches!(ds.point(0), Point::Grams(_)));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = vectors(&[&[1.0, 2.0]]);
        let b = vectors(&[&[1.0, 2.0]]);
        let c = vectors(&[&[1.0, 2.5]]);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
