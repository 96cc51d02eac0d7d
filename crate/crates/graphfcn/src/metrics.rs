//! Confusion matrix and segmentation metrics (mIOU, pixel accuracy,
//! frequency-weighted IU).

use serde::Serialize;

use crate::data::{LabelMap, IGNORE};
use crate::error::{Error, Result};

/// ncl x ncl counts; entry (i, j) is pixels of true class i predicted as j.
/// Pixels whose truth is [`IGNORE`] are never counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    ncl: usize,
    counts: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub miou: f64,
    pub acc: f64,
    pub fwiu: f64,
    pub per_class_iou: Vec<Option<f64>>,
}

impl ConfusionMatrix {
    pub fn new(ncl: usize) -> Self {
        ConfusionMatrix {
            ncl,
            counts: vec![0; ncl * ncl],
        }
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Self {
        let ncl = rows.len();
        let mut counts = Vec::with_capacity(ncl * ncl);
        for r in rows {
            assert_eq!(r.len(), ncl);
            counts.extend_from_slice(r);
        }
        ConfusionMatrix { ncl, counts }
    }

    pub fn num_classes(&self) -> usize {
        self.ncl
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.ncl + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, predicted: &LabelMap, truth: &LabelMap) -> Result<()> {
        if predicted.height() != truth.height() || predicted.width() != truth.width() {
            return Err(Error::ShapeMismatch {
                op: "accumulate",
                lhs: vec![predicted.height(), predicted.width()],
                rhs: vec![truth.height(), truth.width()],
            });
        }
        for (&p, &t) in predicted.data().iter().zip(truth.data()) {
            if t == IGNORE {
                continue;
            }
            let (t, p) = (t as usize, p as usize);
            if t >= self.ncl || p >= self.ncl {
                return Err(Error::Parameter(format!(
                    "class index out of range: truth {t}, predicted {p}, ncl {}",
                    self.ncl
                )));
            }
            self.counts[t * self.ncl + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.ncl, other.ncl);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    fn true_count(&self, i: usize) -> u64 {
        (0..self.ncl).map(|j| self.count(i, j)).sum()
    }

    fn pred_count(&self, i: usize) -> u64 {
        (0..self.ncl).map(|j| self.count(j, i)).sum()
    }

    /// Per-class IoU; classes absent from both truth and prediction are None.
    pub fn per_class_iou(&self) -> Result<Vec<Option<f64>>> {
        if self.total() == 0 {
            return Err(Error::EmptyConfusion);
        }
        Ok((0..self.ncl)
            .map(|i| {
                let union = self.true_count(i) + self.pred_count(i) - self.count(i, i);
                if union == 0 {
                    None
                } else {
                    Some(self.count(i, i) as f64 / union as f64)
                }
            })
            .collect())
    }

    pub fn pixel_accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyConfusion);
        }
        let correct: u64 = (0..self.ncl).map(|i| self.count(i, i)).sum();
        Ok(correct as f64 / total as f64)
    }

    pub fn mean_iou(&self) -> Result<f64> {
        let ious = self.per_class_iou()?;
        let present: Vec<f64> = ious.into_iter().flatten().collect();
        Ok(present.iter().sum::<f64>() / present.len() as f64)
    }

    pub fn freq_weighted_iou(&self) -> Result<f64> {
        let ious = self.per_class_iou()?;
        let total = self.total() as f64;
        let mut acc = 0.0;
        for (i, iou) in ious.iter().enumerate() {
            if let Some(iou) = iou {
                acc += self.true_count(i) as f64 * iou;
            }
        }
        Ok(acc / total)
    }

    pub fn metrics(&self) -> Result<Metrics> {
        Ok(Metrics {
            miou: self.mean_iou()?,
            acc: self.pixel_accuracy()?,
            fwiu: self.freq_weighted_iou()?,
            per_class_iou: self.per_class_iou()?,
        })
    }
}
