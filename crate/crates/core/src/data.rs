//! Labeled embedding datasets: ingestion, persistence, and synthetic
//! generation with controllable distribution shift.
//!
//! The dataset is the universal boundary of the pipeline: every downstream
//! stage (classifier head, GP, attacks, scoring) consumes feature vectors
//! from here and never touches raw images.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// Class labels: AI-generated is 0, natural is 1.
pub const LABEL_AI: u8 = 0;
pub const LABEL_NATURE: u8 = 1;

/// One labeled embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub embedding: Vec<f64>,
    pub label: u8,
}

/// An immutable collection of equally-sized labeled embeddings.
///
/// Invariants enforced at construction: a common dimension `d >= 1`, labels
/// in `{0, 1}`, and unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    samples: Vec<Sample>,
    dim: usize,
}

impl EmbeddingDataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let dim = match samples.first() {
            Some(s) => s.embedding.len(),
            None => return Err(Error::EmptyInput("dataset has no samples")),
        };
        if dim == 0 {
            return Err(Error::config("embedding dimension must be at least 1"));
        }
        let mut ids = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.embedding.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.embedding.len(),
                });
            }
            if s.label > 1 {
                return Err(Error::UnknownLabel(s.label.to_string()));
            }
            if let Some(bad) = s.embedding.iter().find(|v| !v.is_finite()) {
                return Err(Error::config(format!(
                    "sample {:?} has a non-finite embedding value {bad}",
                    s.id
                )));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self { samples, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Sample counts as `[n_ai, n_nature]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0usize; 2];
        for s in &self.samples {
            c[s.label as usize] += 1;
        }
        c
    }

    /// Errors unless both classes are present.
    pub fn require_both_classes(&self) -> Result<()> {
        let [ai, nat] = self.class_counts();
        if ai == 0 {
            return Err(Error::SingleClass(LABEL_NATURE));
        }
        if nat == 0 {
            return Err(Error::SingleClass(LABEL_AI));
        }
        Ok(())
    }
}

/// On-disk dataset encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

impl Format {
    /// Guess from the file extension; `.uqf` is binary, everything else CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("uqf") | Some("bin") => Format::Binary,
            _ => Format::Csv,
        }
    }
}

const BINARY_MAGIC: &[u8; 4] = b"UQF1";

/// Load a dataset from `path` in the given format.
pub fn load_dataset(path: impl AsRef<Path>, format: Format) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    match format {
        Format::Csv => load_csv(path),
        Format::Binary => load_binary(path),
    }
}

/// Write a dataset to `path` in the given format.
pub fn save_dataset(ds: &EmbeddingDataset, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    match format {
        Format::Csv => save_csv(ds, path),
        Format::Binary => save_binary(ds, path),
    }
}

fn parse_label(field: &str, line: usize) -> Result<u8> {
    match field {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Malformed {
            format: "csv",
            line,
            msg: format!("unknown label {other:?}"),
        }),
    }
}

fn load_csv(path: &Path) -> Result<EmbeddingDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or(Error::EmptyInput("csv file has no header"))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.len() < 3 || cols[0] != "id" || cols[1] != "label" {
        return Err(Error::Malformed {
            format: "csv",
            line: 1,
            msg: "header must be `id,label,f0,...`".into(),
        });
    }
    let dim = cols.len() - 2;
    for (j, c) in cols[2..].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(Error::Malformed {
                format: "csv",
                line: 1,
                msg: format!("expected feature column `f{j}`, found {c:?}"),
            });
        }
    }

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != dim + 2 {
            return Err(Error::Malformed {
                format: "csv",
                line: lineno,
                msg: format!("expected {} fields, found {}", dim + 2, fields.len()),
            });
        }
        let label = parse_label(fields[1], lineno)?;
        let mut embedding = Vec::with_capacity(dim);
        for f in &fields[2..] {
            let v: f64 = f.parse().map_err(|_| Error::Malformed {
                format: "csv",
                line: lineno,
                msg: format!("invalid number {f:?}"),
            })?;
            embedding.push(v);
        }
        samples.push(Sample {
            id: fields[0].to_string(),
            embedding,
            label,
        });
    }
    EmbeddingDataset::new(samples)
}

fn save_csv(ds: &EmbeddingDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        write!(w, "id,label")?;
        for j in 0..ds.dim() {
            write!(w, ",f{j}")?;
        }
        writeln!(w)?;
        for s in ds.samples() {
            write!(w, "{},{}", s.id, s.label)?;
            for v in &s.embedding {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

fn load_binary(path: &Path) -> Result<EmbeddingDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |msg: &str| Error::Malformed {
        format: "binary",
        line: 0,
        msg: msg.to_string(),
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != BINARY_MAGIC {
        return Err(bad("bad magic bytes (expected UQF1)"));
    }
    let n = read_u32(&mut r, path)? as usize;
    let dim = read_u32(&mut r, path)? as usize;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let id_len = read_u32(&mut r, path)? as usize;
        let mut id_bytes = vec![0u8; id_len];
        r.read_exact(&mut id_bytes)
            .map_err(|e| Error::io(path, e))?;
        let id = String::from_utf8(id_bytes).map_err(|_| bad("id is not valid utf-8"))?;
        let mut label_byte = [0u8; 1];
        r.read_exact(&mut label_byte)
            .map_err(|e| Error::io(path, e))?;
        if label_byte[0] > 1 {
            return Err(Error::UnknownLabel(label_byte[0].to_string()));
        }
        let mut embedding = Vec::with_capacity(dim);
        for _ in 0..dim {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            embedding.push(f64::from_le_bytes(buf));
        }
        samples.push(Sample {
            id,
            embedding,
            label: label_byte[0],
        });
    }
    EmbeddingDataset::new(samples)
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_le_bytes(buf))
}

fn save_binary(ds: &EmbeddingDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(ds.len() as u32).to_le_bytes())?;
        w.write_all(&(ds.dim() as u32).to_le_bytes())?;
        for s in ds.samples() {
            w.write_all(&(s.id.len() as u32).to_le_bytes())?;
            w.write_all(s.id.as_bytes())?;
            w.write_all(&[s.label])?;
            for v in &s.embedding {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Distribution shift applied to the AI class of an existing dataset.
///
/// `mean_shift` is either one value broadcast across dimensions or a full
/// vector; `covariance_scale` multiplies the class covariance.
#[derive(Debug, Clone)]
pub struct ShiftSpec {
    pub mean_shift: MeanShift,
    pub covariance_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum MeanShift {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ShiftSpec {
    fn shift_at(&self, j: usize) -> f64 {
        match &self.mean_shift {
            MeanShift::Scalar(v) => *v,
            MeanShift::Vector(v) => v[j],
        }
    }
}

/// Two class-conditional Gaussian blobs on the diagonal of embedding space.
///
/// Class 0 is centered at `-separation/2` in every coordinate, class 1 at
/// `+separation/2`, both with unit covariance. Deterministic per seed.
pub fn synth_generate(
    n_per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<EmbeddingDataset> {
    if n_per_class < 1 {
        return Err(Error::config("n_per_class must be at least 1"));
    }
    if dim < 1 {
        return Err(Error::config("dim must be at least 1"));
    }
    let mut gen = rng::seeded(seed);
    let mut samples = Vec::with_capacity(2 * n_per_class);
    for (label, prefix, center) in [
        (LABEL_AI, "ai", -separation / 2.0),
        (LABEL_NATURE, "nat", separation / 2.0),
    ] {
        for i in 0..n_per_class {
            let embedding: Vec<f64> = (0..dim)
                .map(|_| center + gen.sample::<f64, _>(StandardNormal))
                .collect();
            samples.push(Sample {
                id: format!("{prefix}-{i:06}"),
                embedding,
                label,
            });
        }
    }
    EmbeddingDataset::new(samples)
}

/// Redraw the class-0 samples of `base` from a translated, rescaled Gaussian.
///
/// The new class-0 distribution is centered at the empirical class-0 mean
/// plus `mean_shift`, with per-dimension standard deviation scaled by
/// `sqrt(covariance_scale)`. Class-1 samples pass through untouched, which
/// mirrors shift regimes where the errors concentrate in the AI class.
pub fn synth_shift(base: &EmbeddingDataset, spec: &ShiftSpec) -> Result<EmbeddingDataset> {
    if spec.covariance_scale <= 0.0 {
        return Err(Error::config("covariance_scale must be positive"));
    }
    if let MeanShift::Vector(v) = &spec.mean_shift {
        if v.len() != base.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                got: v.len(),
            });
        }
    }
    let dim = base.dim();
    let class0: Vec<&Sample> = base.samples().iter().filter(|s| s.label == 0).collect();
    if class0.is_empty() {
        // Nothing to shift; hand back a copy.
        return EmbeddingDataset::new(base.samples().to_vec());
    }
    let n0 = class0.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in &class0 {
        for (m, v) in mean.iter_mut().zip(&s.embedding) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n0;
    }
    let mut var = vec![0.0; dim];
    for s in &class0 {
        for j in 0..dim {
            let d = s.embedding[j] - mean[j];
            var[j] += d * d;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n0).sqrt()).collect();

    let scale = spec.covariance_scale.sqrt();
    let mut gen = rng::seeded(spec.seed);
    let samples = base
        .samples()
        .iter()
        .map(|s| {
            if s.label != 0 {
                return s.clone();
            }
            let embedding: Vec<f64> = (0..dim)
                .map(|j| {
                    let z: f64 = gen.sample(StandardNormal);
                    mean[j] + spec.shift_at(j) + scale * std[j] * z
                })
                .collect();
            Sample {
                id: s.id.clone(),
                embedding,
                label: s.label,
            }
        })
        .collect();
    EmbeddingDataset::new(samples)
}
