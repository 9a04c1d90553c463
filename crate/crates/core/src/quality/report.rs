use std::path::Path;

use serde::{Deserialize, Serialize};

use super::autoencoder::AutoencoderModel;
use crate::dataio::EpochSet;
use crate::error::{Error, Result};

pub const GOOD_THRESHOLD: f64 = 0.65;
pub const POOR_THRESHOLD: f64 = 0.5;
pub const HISTOGRAM_BINS: usize = 10;
/// Multiple of the calibration loss level used as the upper anchor.
pub const UPPER_ANCHOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Good,
    Poor,
    Indeterminate,
}

impl Verdict {
    pub fn from_mean(mean: f64) -> Verdict {
        if mean > GOOD_THRESHOLD {
            Verdict::Good
        } else if mean < POOR_THRESHOLD {
            Verdict::Poor
        } else {
            Verdict::Indeterminate
        }
    }
}

/// Loss range that maps to scores 1 (at `lo`) and 0 (at `hi`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub lo: f64,
    pub hi: f64,
}

impl Calibration {
    /// `lo` is the smallest calibration loss. `hi` is the largest, or three
    /// times the larger of the median and mean if that is further out.
    pub fn from_losses(losses: &[f64]) -> Result<Calibration> {
        if losses.is_empty() {
            return Err(Error::Invalid("calibration set is empty".into()));
        }
        let mut sorted = losses.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let mean = sorted.iter().sum::<f64>() / n as f64;
        Ok(Calibration {
            lo: sorted[0],
            hi: sorted[n - 1].max(UPPER_ANCHOR * median.max(mean)),
        })
    }

    pub fn score(&self, loss: f64) -> f64 {
        if !loss.is_finite() {
            return 0.0;
        }
        let span = self.hi - self.lo;
        if span <= 0.0 {
            return if loss <= self.lo { 1.0 } else { 0.0 };
        }
        1.0 - ((loss - self.lo) / span).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub per_epoch_scores: Vec<f64>,
    pub per_epoch_losses: Vec<f64>,
    pub mean_score: f64,
    /// Counts over ten equal bins of `[0, 1]`.
    pub histogram: Vec<usize>,
    pub verdict: Verdict,
    pub calibration: Calibration,
}

impl QualityReport {
    pub fn from_losses(losses: Vec<f64>, calibration: Calibration) -> Result<QualityReport> {
        if losses.is_empty() {
            return Err(Error::Invalid("no epochs to score".into()));
        }
        let scores: Vec<f64> = losses.iter().map(|&l| calibration.score(l)).collect();
        let mean_score = scores.iter().sum::<f64>() / scores.len() as f64;
        let mut histogram = vec![0; HISTOGRAM_BINS];
        for &s in &scores {
            histogram[((s * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
        }
        Ok(QualityReport {
            per_epoch_scores: scores,
            per_epoch_losses: losses,
            mean_score,
            histogram,
            verdict: Verdict::from_mean(mean_score),
            calibration,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<QualityReport> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn save_histogram(&self, path: &Path) -> Result<()> {
        crate::plot::bar_chart(&self.histogram, path)
    }
}

/// Scores `data` against the loss range of `calibration` (real epochs).
pub fn score(model: &AutoencoderModel, data: &EpochSet, calibration: &EpochSet) -> Result<QualityReport> {
    if data.is_empty() {
        return Err(Error::Invalid("no epochs to score".into()));
    }
    let cal = Calibration::from_losses(&model.epoch_losses(calibration)?)?;
    QualityReport::from_losses(model.epoch_losses(data)?, cal)
}
