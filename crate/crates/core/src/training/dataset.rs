use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

const DIGITS_CSV: &str = include_str!("../../data/digits8x8.csv");

/// Feature vectors in `[0, 1]` with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        Error::check_len(inputs.len(), labels.len())?;
        if let Some(first) = inputs.first() {
            if inputs.iter().any(|x| x.len() != first.len()) {
                return Err(Error::config("feature vectors differ in length"));
            }
        }
        if inputs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite feature".into()));
        }
        if let Some(l) = labels.iter().find(|l| **l >= classes) {
            return Err(Error::config(format!("label {l} outside {classes} classes")));
        }
        Ok(Dataset { inputs, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// The bundled 1797-image, 8x8, 10-class handwritten digit set.
    pub fn digits() -> Self {
        parse_labelled_csv(DIGITS_CSV, Path::new("digits8x8.csv")).expect("bundled dataset parses")
    }

    /// CSV with a header row, feature columns, and a final `label` column.
    /// Features are divided by their global maximum when it exceeds 1.
    pub fn from_csv(path: &Path) -> Result<Self> {
        parse_labelled_csv(&crate::io::read_text(path)?, path)
    }

    /// Isotropic Gaussian clusters, clipped to `[0, 1]`.
    pub fn blobs(classes: usize, dim: usize, per_class: usize, spread: f64, seed: u64) -> Result<Self> {
        let stream = SeedStream::new(seed).named("blobs");
        let mut crng = stream.named("centers").rng();
        let centers: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..dim).map(|_| 0.2 + 0.6 * rand::Rng::random::<f64>(&mut crng)).collect())
            .collect();
        let mut rng = stream.named("points").rng();
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..per_class {
            for (c, center) in centers.iter().enumerate() {
                inputs.push(
                    center
                        .iter()
                        .map(|m| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            (m + spread * z).clamp(0.0, 1.0)
                        })
                        .collect(),
                );
                labels.push(c);
            }
        }
        Dataset::new(inputs, labels, classes)
    }

    /// Seeded shuffle, then the first `train_fraction` for training.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::config("train_fraction must be in [0, 1]"));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut SeedStream::new(seed).named("split").rng());
        let cut = (self.len() as f64 * train_fraction).round() as usize;
        Ok((self.subset(&idx[..cut]), self.subset(&idx[cut..])))
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }
}

fn parse_labelled_csv(text: &str, path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let parse_err = |line: u64, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| parse_err(1, "no 'label' column".into()))?;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut x = Vec::with_capacity(rec.len() - 1);
        for (k, f) in rec.iter().enumerate() {
            if k == label_col {
                labels.push(f.parse::<usize>().map_err(|_| parse_err(line, format!("bad label '{f}'")))?);
            } else {
                x.push(f.parse::<f64>().map_err(|_| parse_err(line, format!("not a number: '{f}'")))?);
            }
        }
        inputs.push(x);
    }
    let max = inputs.iter().flatten().fold(0.0f64, |a, v| a.max(*v));
    if max > 1.0 {
        for v in inputs.iter_mut().flatten() {
            *v /= max;
        }
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(inputs, labels, classes)
}
