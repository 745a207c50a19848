//! Kernel functions and exact accounting of kernel evaluations.
//!
//! Every kernel here is evaluated through [`Kernel::eval`], which takes an
//! [`EvalCounter`] and ticks it exactly once. The search and tree code never
//! touch point coordinates directly, so the counter is the whole cost model.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Counts kernel invocations. Owned by a single query or build; totals across
/// a batch are summed after the fact.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct EvalCounter {
    count: u64,
}

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Adds the evaluations recorded by a worker's own counter.
    pub fn absorb(&mut self, other: EvalCounter) {
        self.count += other.count;
    }

    #[inline]
    fn tick(&mut self) {
        self.count += 1;
    }
}

/// Sorted p-gram multiset of a byte string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GramCounts {
    p: usize,
    grams: Vec<(Box<[u8]>, u32)>,
}

impl GramCounts {
    /// Counts every length-`p` window of `seq`. Strings shorter than `p` have
    /// no grams.
    pub fn new(seq: &[u8], p: usize) -> Self {
        let mut counts: BTreeMap<&[u8], u32> = BTreeMap::new();
        if p > 0 && seq.len() >= p {
            for w in seq.windows(p) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let grams = counts.into_iter().map(|(g, c)| (g.into(), c)).collect();
        GramCounts { p, grams }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn get(&self, gram: &[u8]) -> u32 {
        self.grams
            .binary_search_by(|(g, _)| g.as_ref().cmp(gram))
            .map(|i| self.grams[i].1)
            .unwrap_or(0)
    }

    /// Sparse dot product by merging the two sorted lists. Integer
    /// accumulation keeps the result exact and order independent.
    pub fn dot(&self, other: &GramCounts) -> u64 {
        let (mut i, mut j) = (0, 0);
        let mut acc: u64 = 0;
        while i < self.grams.len() && j < other.grams.len() {
            match self.grams[i].0.cmp(&other.grams[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += u64::from(self.grams[i].1) * u64::from(other.grams[j].1);
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

/// A borrowed point in some kernel's domain.
#[derive(Debug, Clone, Copy)]
pub enum Point<'a> {
    Vector(&'a [f64]),
    /// Raw byte string; p-grams are counted on the fly.
    Sequence(&'a [u8]),
    /// Precounted p-grams.
    Grams(&'a GramCounts),
}

impl Point<'_> {
    fn domain(&self) -> &'static str {
        match self {
            Point::Vector(_) => "vector",
            Point::Sequence(_) | Point::Grams(_) => "string",
        }
    }
}

/// An owned query point, prepared for one kernel (p-grams counted once).
#[derive(Debug, Clone, PartialEq)]
pub enum PreparedPoint {
    Vector(Vec<f64>),
    Grams(GramCounts),
}

impl PreparedPoint {
    pub fn as_point(&self) -> Point<'_> {
        match self {
            PreparedPoint::Vector(v) => Point::Vector(v),
            PreparedPoint::Grams(g) => Point::Grams(g),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Linear,
    Polynomial,
    Cosine,
    Gaussian,
    Tanh,
    PSpectrum,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Polynomial => "polynomial",
            KernelKind::Cosine => "cosine",
            KernelKind::Gaussian => "gaussian",
            KernelKind::Tanh => "tanh",
            KernelKind::PSpectrum => "pspectrum",
        }
    }
}

pub const DEFAULT_POLY_OFFSET: f64 = 1.0;
pub const DEFAULT_TANH_SCALE: f64 = 1.0;
pub const DEFAULT_TANH_OFFSET: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    Polynomial { degree: u32, offset: f64 },
    Cosine,
    Gaussian { bandwidth: f64 },
    /// Not a Mercer kernel in general; induced distances may fail.
    Tanh { scale: f64, offset: f64 },
    PSpectrum { p: usize },
}

impl Kernel {
    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidParameter("polynomial degree must be >= 1".into()));
        }
        if !offset.is_finite() {
            return Err(Error::InvalidParameter("polynomial offset must be finite".into()));
        }
        Ok(Kernel::Polynomial { degree, offset })
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter("gaussian bandwidth must be > 0".into()));
        }
        Ok(Kernel::Gaussian { bandwidth })
    }

    pub fn tanh(scale: f64, offset: f64) -> Result<Self> {
        if !(scale.is_finite() && offset.is_finite()) {
            return Err(Error::InvalidParameter("tanh parameters must be finite".into()));
        }
        Ok(Kernel::Tanh { scale, offset })
    }

    pub fn pspectrum(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("pspectrum gram length must be >= 1".into()));
        }
        Ok(Kernel::PSpectrum { p })
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::Linear => KernelKind::Linear,
            Kernel::Polynomial { .. } => KernelKind::Polynomial,
            Kernel::Cosine => KernelKind::Cosine,
            Kernel::Gaussian { .. } => KernelKind::Gaussian,
            Kernel::Tanh { .. } => KernelKind::Tanh,
            Kernel::PSpectrum { .. } => KernelKind::PSpectrum,
        }
    }

    /// `K(x, x) = 1` for every x.
    pub fn is_normalized(&self) -> bool {
        matches!(self, Kernel::Cosine | Kernel::Gaussian { .. })
    }

    /// Whether the kernel is positive semi-definite on every input.
    pub fn is_psd(&self) -> bool {
        !matches!(self, Kernel::Tanh { .. })
    }

    pub fn accepts_strings(&self) -> bool {
        matches!(self, Kernel::PSpectrum { .. })
    }

    /// Evaluates the kernel, ticking `counter` once.
    pub fn eval(&self, x: Point<'_>, y: Point<'_>, counter: &mut EvalCounter) -> Result<f64> {
        let value = self.eval_uncounted(x, y)?;
        counter.tick();
        Ok(value)
    }

    fn eval_uncounted(&self, x: Point<'_>, y: Point<'_>) -> Result<f64> {
        if let Kernel::PSpectrum { p } = *self {
            return match (x, y) {
                (Point::Grams(a), Point::Grams(b)) if a.p == p && b.p == p => Ok(a.dot(b) as f64),
                (Point::Vector(_), _) | (_, Point::Vector(_)) => Err(self.mismatch("vector")),
                _ => Ok(grams_for(x, p)?.dot(grams_for(y, p)?.as_ref()) as f64),
            };
        }
        let (a, b) = match (x, y) {
            (Point::Vector(a), Point::Vector(b)) => (a, b),
            (Point::Vector(_), other) | (other, _) => return Err(self.mismatch(other.domain())),
        };
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
        }
        let value = match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Polynomial { degree, offset } => (dot(a, b) + offset).powi(degree as i32),
            Kernel::Cosine => {
                let norms = dot(a, a).sqrt() * dot(b, b).sqrt();
                if norms == 0.0 {
                    return Err(Error::ZeroNorm);
                }
                dot(a, b) / norms
            }
            Kernel::Gaussian { bandwidth } => {
                let sq: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
                (-sq / (2.0 * bandwidth * bandwidth)).exp()
            }
            Kernel::Tanh { scale, offset } => (scale * dot(a, b) + offset).tanh(),
            Kernel::PSpectrum { .. } => unreachable!(),
        };
        Ok(value)
    }

    fn mismatch(&self, found: &'static str) -> Error {
        Error::DomainMismatch { kernel: self.to_string(), found }
    }

    /// Converts an owned point into this kernel's evaluation form.
    pub fn prepare(&self, point: Point<'_>) -> Result<PreparedPoint> {
        match (*self, point) {
            (Kernel::PSpectrum { .. }, Point::Vector(_)) => Err(self.mismatch("vector")),
            (Kernel::PSpectrum { p }, other) => Ok(PreparedPoint::Grams(grams_for(other, p)?.into_owned())),
            (_, Point::Vector(v)) => Ok(PreparedPoint::Vector(v.to_vec())),
            (_, other) => Err(self.mismatch(other.domain())),
        }
    }
}

fn grams_for<'a>(point: Point<'a>, p: usize) -> Result<std::borrow::Cow<'a, GramCounts>> {
    use std::borrow::Cow;
    match point {
        Point::Grams(g) if g.p == p => Ok(Cow::Borrowed(g)),
        Point::Grams(g) => Err(Error::InvalidParameter(format!("point carries {}-grams, kernel needs {p}-grams", g.p))),
        Point::Sequence(s) => Ok(Cow::Owned(GramCounts::new(s, p))),
        Point::Vector(_) => unreachable!("checked by caller"),
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

impl fmt::Display for Kernel {
    /// Canonical spec string; `parse(k.to_string()) == k`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Linear => write!(f, "linear"),
            Kernel::Polynomial { degree, offset } => write!(f, "polynomial:d={degree},c={offset:?}"),
            Kernel::Cosine => write!(f, "cosine"),
            Kernel::Gaussian { bandwidth } => write!(f, "gaussian:sigma={bandwidth:?}"),
            Kernel::Tanh { scale, offset } => write!(f, "tanh:s={scale:?},c={offset:?}"),
            Kernel::PSpectrum { p } => write!(f, "pspectrum:p={p}"),
        }
    }
}

/// Splits `name:key=value,key=value` into the name and its parameters.
pub(crate) fn split_spec(input: &str) -> (&str, Vec<(&str, &str)>) {
    let input = input.trim();
    let (name, rest) = match input.split_once(':') {
        Some((n, r)) => (n.trim(), r.trim()),
        None => (input, ""),
    };
    let mut params = Vec::new();
    if !rest.is_empty() {
        for part in rest.split(',') {
            let part = part.trim();
            match part.split_once('=') {
                Some((k, v)) => params.push((k.trim(), v.trim())),
                None => params.push(("", part)),
            }
        }
    }
    (name, params)
}

pub(crate) fn parse_num<T: FromStr>(what: &'static str, input: &str, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::parse(what, input, format!("`{key}` expects a number, got `{value}`")))
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(input: &str) -> Result<Self> {
        const WHAT: &str = "kernel spec";
        let (name, params) = split_spec(input);
        let mut degree: Option<u32> = None;
        let mut offset: Option<f64> = None;
        let mut sigma: Option<f64> = None;
        let mut scale: Option<f64> = None;
        let mut p: Option<usize> = None;
        let allowed: &[&str] = match name {
            "linear" | "cosine" => &[],
            "polynomial" | "poly" => &["d", "degree", "c", "offset"],
            "gaussian" | "rbf" => &["sigma", "bandwidth"],
            "tanh" => &["s", "scale", "c", "offset"],
            "pspectrum" => &["p"],
            other => return Err(Error::parse(WHAT, input, format!("unknown kernel `{other}`"))),
        };
        for (key, value) in params {
            if !allowed.contains(&key) {
                return Err(Error::parse(WHAT, input, format!("unexpected parameter `{key}`")));
            }
            match key {
                "d" | "degree" => degree = Some(parse_num(WHAT, input, key, value)?),
                "c" | "offset" => offset = Some(parse_num(WHAT, input, key, value)?),
                "sigma" | "bandwidth" => sigma = Some(parse_num(WHAT, input, key, value)?),
                "s" | "scale" => scale = Some(parse_num(WHAT, input, key, value)?),
                "p" => p = Some(parse_num(WHAT, input, key, value)?),
                _ => unreachable!(),
            }
        }
        let kernel = match name {
            "linear" => Kernel::Linear,
            "cosine" => Kernel::Cosine,
            "polynomial" | "poly" => Kernel::polynomial(
                degree.ok_or_else(|| Error::parse(WHAT, input, "polynomial needs `d`"))?,
                offset.unwrap_or(DEFAULT_POLY_OFFSET),
            )?,
            "gaussian" | "rbf" => Kernel::gaussian(sigma.unwrap_or(1.0))?,
            "tanh" => Kernel::tanh(scale.unwrap_or(DEFAULT_TANH_SCALE), offset.unwrap_or(DEFAULT_TANH_OFFSET))?,
            "pspectrum" => Kernel::pspectrum(p.ok_or_else(|| Error::parse(WHAT, input, "pspectrum needs `p`"))?)?,
            _ => unreachable!(),
        };
        Ok(kernel)
    }
}
