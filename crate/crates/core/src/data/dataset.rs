use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, TensorShape};

/// Samples (one flattened `C × H × W` tensor per row) with observed labels
/// and, for synthetic corruption, the hidden clean labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Matrix,
    shape: TensorShape,
    labels: Vec<usize>,
    true_labels: Option<Vec<usize>>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(
        samples: Matrix,
        shape: TensorShape,
        labels: Vec<usize>,
        true_labels: Option<Vec<usize>>,
        classes: usize,
    ) -> Result<Self> {
        if samples.cols() != shape.len() {
            return Err(Error::shape(format!(
                "samples have {} features, shape {}x{}x{} needs {}",
                samples.cols(),
                shape.channels,
                shape.height,
                shape.width,
                shape.len()
            )));
        }
        if labels.len() != samples.rows() {
            return Err(Error::shape(format!(
                "{} labels for {} samples",
                labels.len(),
                samples.rows()
            )));
        }
        if classes < 2 {
            return Err(Error::validation(
                "a classification dataset needs at least 2 classes",
            ));
        }
        check_labels(&labels, classes, "label")?;
        if let Some(t) = &true_labels {
            if t.len() != labels.len() {
                return Err(Error::shape("true-label count differs from label count"));
            }
            check_labels(t, classes, "true label")?;
        }
        if !samples.is_finite() {
            return Err(Error::numeric("samples contain non-finite values"));
        }
        Ok(Self {
            samples,
            shape,
            labels,
            true_labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn shape(&self) -> TensorShape {
        self.shape
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn true_labels(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.samples.row(i)
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            samples: self.samples.select_rows(indices),
            shape: self.shape,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            true_labels: self
                .true_labels
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i]).collect()),
            classes: self.classes,
        }
    }

    /// Same samples with new observed labels; `true_labels` is set to
    /// the current labels unless it is already present.
    pub fn relabeled(&self, labels: Vec<usize>) -> Result<LabeledDataset> {
        if labels.len() != self.len() {
            return Err(Error::shape("label count differs from sample count"));
        }
        check_labels(&labels, self.classes, "label")?;
        let true_labels = Some(
            self.true_labels
                .clone()
                .unwrap_or_else(|| self.labels.clone()),
        );
        Ok(LabeledDataset {
            samples: self.samples.clone(),
            shape: self.shape,
            labels,
            true_labels,
            classes: self.classes,
        })
    }

    /// Copy whose observed labels are the clean ones (identity when no
    /// corruption has been recorded).
    pub fn with_clean_labels(&self) -> LabeledDataset {
        let mut out = self.clone();
        if let Some(t) = out.true_labels.take() {
            out.labels = t;
        }
        out
    }

    /// Indices whose observed label equals the clean label. `None` without
    /// a clean-label channel.
    pub fn clean_indices(&self) -> Option<Vec<usize>> {
        let t = self.true_labels.as_ref()?;
        Some(
            (0..self.len())
                .filter(|&i| self.labels[i] == t[i])
                .collect(),
        )
    }

    /// Fraction of `indices` whose observed label is clean.
    pub fn purity(&self, indices: &[usize]) -> Option<f64> {
        let t = self.true_labels.as_ref()?;
        if indices.is_empty() {
            return None;
        }
        let clean = indices.iter().filter(|&&i| self.labels[i] == t[i]).count();
        Some(clean as f64 / indices.len() as f64)
    }

    /// Fraction of samples whose observed label differs from the clean one.
    pub fn noise_rate(&self) -> Option<f64> {
        let clean = self.clean_indices()?;
        Some(1.0 - clean.len() as f64 / self.len().max(1) as f64)
    }

    /// Writes `x0,x1,...,label,true_label` rows. `true_label` repeats the
    /// observed label when no corruption is recorded.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.shape.len()).map(|i| format!("x{i}")).collect();
        header.push("label".into());
        header.push("true_label".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.sample(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.labels[i].to_string());
            let t = self.true_labels.as_ref().map_or(self.labels[i], |t| t[i]);
            rec.push(t.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads the format written by [`write_csv`](Self::write_csv) for flat
    /// feature vectors.
    pub fn load_csv(path: &Path, classes: usize) -> Result<LabeledDataset> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let n = header.len();
        if n < 3 || &header[n - 2] != "label" || &header[n - 1] != "true_label" {
            return Err(Error::format(format!(
                "{}: expected header x0,...,label,true_label",
                path.display()
            )));
        }
        let features = n - 2;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut truth = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| {
                Error::format(format!(
                    "{}: record {}: bad {what}",
                    path.display(),
                    line + 1
                ))
            };
            for v in rec.iter().take(features) {
                data.push(v.trim().parse::<f64>().map_err(|_| bad("feature"))?);
            }
            labels.push(
                rec[features]
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| bad("label"))?,
            );
            truth.push(
                rec[features + 1]
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| bad("true_label"))?,
            );
        }
        let rows = labels.len();
        LabeledDataset::new(
            Matrix::new(rows, features, data)?,
            TensorShape::flat(features),
            labels,
            Some(truth),
            classes,
        )
    }
}

fn check_labels(labels: &[usize], classes: usize, what: &str) -> Result<()> {
    if let Some(i) = labels.iter().position(|&l| l >= classes) {
        return Err(Error::validation(format!(
            "{what} {} at index {i} is outside [0, {classes})",
            labels[i]
        )));
    }
    Ok(())
}

/// Deterministic shuffled partition into `(train, validation)`; the train
/// part gets `floor(len · train_fraction)` samples.
pub fn split(
    data: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train_idx, val_idx) = split_indices(data.len(), train_fraction, seed)?;
    Ok((data.subset(&train_idx), data.subset(&val_idx)))
}

/// Index form of [`split`].
pub fn split_indices(
    len: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::validation(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let n_train = (len as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train == len {
        return Err(Error::validation(format!(
            "train fraction {train_fraction} on {len} samples leaves an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = order.split_off(n_train);
    Ok((order, val))
}
