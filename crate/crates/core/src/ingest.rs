//! Reading and writing point files, and seeded synthetic corpora.
//!
//! Vectors are CSV or TSV, one point per row, with an optional header row
//! (recognized by a non-numeric cell). Strings are FASTA records,
//! concatenated across lines and uppercased.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fastmks_api::{Corpus, GenerateSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{Dataset, Points};
use crate::error::{Error, Result};

pub const AMINO_ACIDS: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";
const FASTA_EXTENSIONS: &[&str] = &["fa", "fasta", "faa", "fna", "fas"];
const FASTA_LINE: usize = 60;
/// Mixture centers are drawn from `[-CENTER_SPREAD, CENTER_SPREAD]^dim`;
/// each cluster has unit standard deviation per coordinate.
const CENTER_SPREAD: f64 = 10.0;

fn is_fasta(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| FASTA_EXTENSIONS.iter().any(|f| f.eq_ignore_ascii_case(e)))
}

fn is_tsv(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("tsv") || e.eq_ignore_ascii_case("tab"))
}

/// Loads vectors or sequences depending on the file extension.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    if is_fasta(path) {
        load_sequences(path)
    } else {
        load_vectors(path)
    }
}

pub fn load_vectors(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_vectors(&text, path)
}

/// Parses CSV/TSV text; `origin` only labels errors. Tabs are the delimiter
/// for `.tsv` files or when the first line has tabs and no commas.
pub fn parse_vectors(text: &str, origin: &Path) -> Result<Dataset> {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let tabs = is_tsv(origin) || (first.contains('\t') && !first.contains(','));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .delimiter(if tabs { b'\t' } else { b',' })
        .from_reader(text.as_bytes());

    let err = |row: usize, message: String| Error::Ingest { path: origin.to_path_buf(), row, message };
    let mut dim = None;
    let mut values = Vec::new();
    let mut first_record = true;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            err(row, e.to_string())
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let parsed: Vec<Option<f64>> = record.iter().map(|c| c.parse::<f64>().ok()).collect();
        if std::mem::take(&mut first_record) && parsed.iter().any(Option::is_none) {
            continue;
        }
        let expected = *dim.get_or_insert(parsed.len());
        if parsed.len() != expected {
            return Err(err(row, format!("expected {expected} columns, found {}", parsed.len())));
        }
        for (col, (cell, v)) in record.iter().zip(parsed).enumerate() {
            match v {
                Some(v) if v.is_finite() => values.push(v),
                Some(_) => return Err(err(row, format!("column {}: non-finite value `{cell}`", col + 1))),
                None => return Err(err(row, format!("column {}: not a number: `{cell}`", col + 1))),
            }
        }
    }
    match dim {
        Some(d) if d > 0 && !values.is_empty() => Dataset::from_flat(d, values),
        _ => Err(Error::Format { path: origin.to_path_buf(), message: "no data rows".into() }),
    }
}

/// Writes vectors as CSV (TSV for `.tsv` paths). Values use the shortest
/// representation that parses back to the same bits.
pub fn save_vectors(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let Points::Vectors { dim, values } = dataset.points() else {
        return Err(Error::Format { path: path.to_path_buf(), message: "dataset holds strings, not vectors".into() });
    };
    let ctx = || format!("writing {}", path.display());
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut writer = csv::WriterBuilder::new()
        .delimiter(if is_tsv(path) { b'\t' } else { b',' })
        .from_writer(BufWriter::new(file));
    for row in values.chunks(*dim) {
        writer
            .write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| Error::io(ctx(), std::io::Error::other(e)))?;
    }
    writer.flush().map_err(|e| Error::io(ctx(), e))
}

pub fn load_sequences(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_fasta(BufReader::new(file), path)
}

/// Parses FASTA from any reader; `origin` only labels errors.
pub fn parse_fasta(reader: impl BufRead, origin: &Path) -> Result<Dataset> {
    let err = |row: usize, message: &str| Error::Ingest { path: origin.to_path_buf(), row, message: message.into() };
    let mut seqs: Vec<Vec<u8>> = Vec::new();
    let mut header_row = 0;
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", origin.display()), e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        if line.starts_with('>') {
            if seqs.last().is_some_and(Vec::is_empty) {
                return Err(err(header_row, "empty record"));
            }
            seqs.push(Vec::new());
            header_row = row;
            continue;
        }
        let Some(current) = seqs.last_mut() else {
            return Err(err(row, "sequence data before the first `>` header"));
        };
        current.extend(line.bytes().filter(|b| !b.is_ascii_whitespace()).map(|b| b.to_ascii_uppercase()));
    }
    if seqs.last().is_some_and(Vec::is_empty) {
        return Err(err(header_row, "empty record"));
    }
    if seqs.is_empty() {
        return Err(Error::Format { path: origin.to_path_buf(), message: "no FASTA records".into() });
    }
    Dataset::from_sequences(seqs)
}

pub fn save_sequences(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let Points::Sequences(seqs) = dataset.points() else {
        return Err(Error::Format { path: path.to_path_buf(), message: "dataset holds vectors, not strings".into() });
    };
    let ctx = || format!("writing {}", path.display());
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(ctx(), e))?);
    let mut write = || -> std::io::Result<()> {
        for (i, s) in seqs.iter().enumerate() {
            writeln!(out, ">seq{i}")?;
            for line in s.chunks(FASTA_LINE) {
                out.write_all(line)?;
                out.write_all(b"\n")?;
            }
        }
        out.flush()
    };
    write().map_err(|e| Error::io(ctx(), e))
}

/// Writes FASTA for string datasets, CSV/TSV otherwise.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    if dataset.is_sequences() {
        save_sequences(dataset, path)
    } else {
        save_vectors(dataset, path)
    }
}

/// Draws a synthetic corpus. The same spec always yields the same points,
/// and a smaller `n` yields a prefix of a larger one.
pub fn generate(spec: &GenerateSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;
    if spec.corpus != Corpus::Sequences && dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    match spec.corpus {
        Corpus::Cube => {
            let values = (0..spec.n * dim).map(|_| rng.random::<f64>()).collect();
            Dataset::from_flat(dim, values)
        }
        Corpus::Mixture => {
            if spec.clusters == 0 {
                return Err(Error::InvalidParameter("mixture needs at least one cluster".into()));
            }
            let centers: Vec<Vec<f64>> = (0..spec.clusters)
                .map(|_| (0..dim).map(|_| rng.random_range(-CENTER_SPREAD..=CENTER_SPREAD)).collect())
                .collect();
            let mut values = Vec::with_capacity(spec.n * dim);
            for _ in 0..spec.n {
                let c = &centers[rng.random_range(0..spec.clusters)];
                values.extend(c.iter().map(|&m| m + gauss(&mut rng)));
            }
            Dataset::from_flat(dim, values)
        }
        Corpus::Sphere => {
            let mut values = Vec::with_capacity(spec.n * dim);
            for _ in 0..spec.n {
                let v = loop {
                    let v: Vec<f64> = (0..dim).map(|_| gauss(&mut rng)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        break v.into_iter().map(|x| x / norm).collect::<Vec<_>>();
                    }
                };
                values.extend(v);
            }
            Dataset::from_flat(dim, values)
        }
        Corpus::Sequences => {
            if spec.min_length == 0 || spec.min_length > spec.max_length {
                return Err(Error::InvalidParameter(format!(
                    "sequence lengths need 1 <= min <= max, got {}..={}",
                    spec.min_length, spec.max_length
                )));
            }
            let seqs = (0..spec.n)
                .map(|_| {
                    let len = rng.random_range(spec.min_length..=spec.max_length);
                    (0..len).map(|_| AMINO_ACIDS[rng.random_range(0..AMINO_ACIDS.len())]).collect()
                })
                .collect();
            Dataset::from_sequences(seqs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{EvalCounter, Kernel, Point};

    fn vectors(text: &str) -> Result<Dataset> {
        parse_vectors(text, Path::new("mem.csv"))
    }

    fn fasta(text: &str) -> Result<Dataset> {
        parse_fasta(text.as_bytes(), Path::new("mem.fa"))
    }

    #[test]
    fn csv_shapes() {
        let ds = vectors("1,2\n3,4\n").unwrap();
        assert_eq!((ds.len(), ds.dim()), (2, Some(2)));
        let ds = vectors("x,y\n1,2\n").unwrap();
        assert_eq!(ds.len(), 1);
        let ds = parse_vectors("1\t2\t3\n", Path::new("a.txt")).unwrap();
        assert_eq!(ds.dim(), Some(3));
    }

    #[test]
    fn csv_errors_carry_rows() {
        match vectors("1,2\n3\n").unwrap_err() {
            Error::Ingest { row, .. } => assert_eq!(row, 2),
            e => panic!("{e}"),
        }
        match vectors("1,2\n3,abc\n").unwrap_err() {
            Error::Ingest { row, message, .. } => {
                assert_eq!(row, 2);
                assert!(message.contains("abc"));
            }
            e => panic!("{e}"),
        }
        assert!(matches!(vectors("").unwrap_err(), Error::Format { .. }));
        assert!(matches!(vectors("a,b\n").unwrap_err(), Error::Format { .. }));
        assert!(matches!(vectors("1,inf\n").unwrap_err(), Error::Ingest { row: 1, .. }));
    }

    #[test]
    fn fasta_records() {
        let ds = fasta(">a\nAB\nAB\n").unwrap();
        assert_eq!(ds.sequence(0).unwrap(), b"ABAB");
        let ds = fasta(">a\nac\n\n>b desc\nGgT\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.sequence(0).unwrap(), b"AC");
        assert_eq!(ds.sequence(1).unwrap(), b"GGT");
    }

    #[test]
    fn fasta_errors() {
        assert!(matches!(fasta(">a\n>b\nAC\n").unwrap_err(), Error::Ingest { row: 1, .. }));
        assert!(matches!(fasta(">a\nAC\n>b\n").unwrap_err(), Error::Ingest { row: 3, .. }));
        assert!(matches!(fasta("").unwrap_err(), Error::Format { .. }));
        assert!(matches!(fasta("AC\n").unwrap_err(), Error::Ingest { row: 1, .. }));
    }

    #[test]
    fn lowercase_input_counts_like_uppercase() {
        let ds = fasta(">x\nabAB\n").unwrap();
        let k = Kernel::PSpectrum { p: 2 };
        let v = k.eval(ds.point(0), Point::Sequence(b"AB"), &mut EvalCounter::new()).unwrap();
        // ABAB holds AB twice.
        assert_eq!(v, 2.0);
    }

    #[test]
    fn generators_are_prefix_stable() {
        for corpus in [Corpus::Cube, Corpus::Mixture, Corpus::Sphere, Corpus::Sequences] {
            let big = generate(&GenerateSpec::new(corpus, 50, 4, 9)).unwrap();
            let small = generate(&GenerateSpec::new(corpus, 20, 4, 9)).unwrap();
            let prefix: Vec<usize> = (0..20).collect();
            assert_eq!(big.subset(&prefix).points(), small.points(), "{corpus:?}");
        }
        let s = generate(&GenerateSpec::new(Corpus::Sphere, 10, 16, 1)).unwrap();
        for i in 0..10 {
            let n: f64 = s.vector(i).unwrap().iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
