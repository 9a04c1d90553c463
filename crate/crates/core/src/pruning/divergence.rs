use serde::{Deserialize, Serialize};

use crate::dataio::{EpochSet, Label, Provenance};
use crate::error::{Error, Result};

/// Kullback–Leibler divergence in bits. Terms with `p(i) = 0` contribute
/// nothing.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Invalid(format!(
            "distributions have {} and {} bins",
            p.len(),
            q.len()
        )));
    }
    Ok(p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).log2())
        .sum())
}

/// Jensen–Shannon divergence in bits: the mean KL of each side to their
/// midpoint. Lies in `[0, 1]`.
pub fn js(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Invalid(format!(
            "distributions have {} and {} bins",
            p.len(),
            q.len()
        )));
    }
    // Accumulating both halves term by term keeps js(p, q) and js(q, p)
    // bit-identical: each term is a sum of two commuted products.
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        let ta = if a > 0.0 { a * (a / m).log2() } else { 0.0 };
        let tb = if b > 0.0 { b * (b / m).log2() } else { 0.0 };
        total += 0.5 * (ta + tb);
    }
    Ok(total.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistRange {
    Fixed { lo: f64, hi: f64 },
    PooledMinmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramSpec {
    pub bins: usize,
    pub range: HistRange,
    pub epsilon: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec {
            bins: 64,
            range: HistRange::PooledMinmax,
            epsilon: 1e-10,
        }
    }
}

impl HistogramSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::Config(format!("histogram needs at least 2 bins, got {}", self.bins)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("histogram epsilon must be positive".into()));
        }
        if let HistRange::Fixed { lo, hi } = self.range {
            if !(lo < hi) {
                return Err(Error::Config(format!("histogram range [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }
}

/// Smoothed bin probabilities of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDistribution {
    pub channel: String,
    pub probs: Vec<f64>,
}

/// One (label, provenance) cell of a fusion set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Group {
    pub label: Label,
    pub provenance: Provenance,
}

impl Group {
    pub const REAL_HC: Group = Group {
        label: Label::HC,
        provenance: Provenance::Real,
    };
    pub const REAL_PD: Group = Group {
        label: Label::PD,
        provenance: Provenance::Real,
    };
    pub const FAKE_HC: Group = Group {
        label: Label::HC,
        provenance: Provenance::Generated,
    };
    pub const FAKE_PD: Group = Group {
        label: Label::PD,
        provenance: Provenance::Generated,
    };

    pub fn name(&self) -> String {
        let p = match self.provenance {
            Provenance::Real => "real",
            Provenance::Generated => "generated",
        };
        format!("{p} {}", self.label)
    }
}

/// Normalised histogram of `values` on `bins` equal bins over `[lo, hi]`.
/// Values outside the range land in the edge bins. Every bin then gets
/// `epsilon` added and the result is renormalised.
pub fn histogram(values: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize, epsilon: f64) -> Vec<f64> {
    let mut counts = vec![0u64; bins];
    let width = hi - lo;
    let mut n = 0u64;
    for v in values {
        let b = if width > 0.0 {
            (((v - lo) / width) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize
        } else {
            0
        };
        counts[b] += 1;
        n += 1;
    }
    let n = n.max(1) as f64;
    let z = 1.0 + bins as f64 * epsilon;
    counts.iter().map(|&c| (c as f64 / n + epsilon) / z).collect()
}

pub(crate) fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Amplitude distribution of `channel` pooled over the epochs of `group`.
/// With a pooled range the edges come from this group alone; comparisons
/// across groups should use [`crate::pruning::similarity_table`], which
/// shares edges between all four groups.
pub fn estimate_distribution(
    epochs: &EpochSet,
    group: Group,
    channel: usize,
    spec: &HistogramSpec,
) -> Result<ChannelDistribution> {
    spec.validate()?;
    let idx = epochs.indices_where(|l, p| l == group.label && p == group.provenance);
    if idx.is_empty() {
        return Err(Error::EmptyGroup(group.name()));
    }
    let name = epochs
        .layout
        .names()
        .get(channel)
        .ok_or_else(|| Error::UnknownChannel(format!("#{channel}")))?
        .clone();
    let (lo, hi) = match spec.range {
        HistRange::Fixed { lo, hi } => (lo, hi),
        HistRange::PooledMinmax => min_max(epochs.channel_samples(&idx, channel)),
    };
    Ok(ChannelDistribution {
        channel: name,
        probs: histogram(epochs.channel_samples(&idx, channel), lo, hi, spec.bins, spec.epsilon),
    })
}
