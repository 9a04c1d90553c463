//! Channel selection by Jensen–Shannon divergence.
//!
//! For every channel the amplitude distributions of real HC, real PD,
//! generated HC and generated PD epochs are compared. A channel is kept when
//! real and generated data agree on it (low real/generated divergence) and
//! it separates the groups (high HC/PD divergence).

mod divergence;
mod export;

pub use divergence::{estimate_distribution, histogram, js, kl, ChannelDistribution, Group, HistRange, HistogramSpec};
pub use export::{export_similarity, read_similarity_csv, render_heatmap, SIMILARITY_HEADER};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::EpochSet;
use crate::error::{Error, Result};
use divergence::min_max;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub channel: String,
    pub js_hc_real_fake: f64,
    pub js_pd_real_fake: f64,
    pub js_real_hc_pd: f64,
    pub js_fake_hc_pd: f64,
}

impl SimilarityRow {
    pub fn values(&self) -> [f64; 4] {
        [
            self.js_hc_real_fake,
            self.js_pd_real_fake,
            self.js_real_hc_pd,
            self.js_fake_hc_pd,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTable {
    pub rows: Vec<SimilarityRow>,
}

impl SimilarityTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column means in row order of [`SimilarityRow::values`].
    pub fn column_means(&self) -> [f64; 4] {
        self.column_means_over(|_| true)
    }

    /// Column means over the rows whose channel passes `keep`.
    pub fn column_means_over(&self, keep: impl Fn(&str) -> bool) -> [f64; 4] {
        let mut sum = [0.0; 4];
        let mut n = 0;
        for r in self.rows.iter().filter(|r| keep(&r.channel)) {
            for (s, v) in sum.iter_mut().zip(r.values()) {
                *s += v;
            }
            n += 1;
        }
        sum.map(|s| s / n.max(1) as f64)
    }
}

/// Per-channel divergences between the four (label, provenance) groups of a
/// fusion set, with histogram edges shared by all four groups of a channel.
pub fn similarity_table(fusion: &EpochSet, spec: &HistogramSpec) -> Result<SimilarityTable> {
    spec.validate()?;
    let groups = [Group::REAL_HC, Group::FAKE_HC, Group::REAL_PD, Group::FAKE_PD];
    let idx: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| {
            let i = fusion.indices_where(|l, p| l == g.label && p == g.provenance);
            if i.is_empty() {
                Err(Error::EmptyGroup(g.name()))
            } else {
                Ok(i)
            }
        })
        .collect::<Result<_>>()?;
    let rows = (0..fusion.n_channels())
        .into_par_iter()
        .map(|c| {
            let (lo, hi) = match spec.range {
                HistRange::Fixed { lo, hi } => (lo, hi),
                HistRange::PooledMinmax => idx
                    .iter()
                    .map(|i| min_max(fusion.channel_samples(i, c)))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1))),
            };
            let d: Vec<Vec<f64>> = idx
                .iter()
                .map(|i| histogram(fusion.channel_samples(i, c), lo, hi, spec.bins, spec.epsilon))
                .collect();
            let (rh, gh, rd, gd) = (&d[0], &d[1], &d[2], &d[3]);
            Ok(SimilarityRow {
                channel: fusion.layout.names()[c].clone(),
                js_hc_real_fake: js(rh, gh)?,
                js_pd_real_fake: js(rd, gd)?,
                js_real_hc_pd: js(rh, rd)?,
                js_fake_hc_pd: js(gh, gd)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SimilarityTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdBase {
    /// Coefficient times twice the column mean, so 0.5 is the mean itself.
    #[default]
    PerGroupMean,
    /// Coefficient times the column sum.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    #[default]
    Intersection,
    Union,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneConfig {
    pub alpha: f64,
    pub beta: f64,
    pub threshold_base: ThresholdBase,
    pub combine: Combine,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            alpha: 0.5,
            beta: 0.5,
            threshold_base: ThresholdBase::PerGroupMean,
            combine: Combine::Intersection,
        }
    }
}

/// Pass/fail of each criterion for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub channel: String,
    /// `js_hc_real_fake <= T_beta`
    pub hc_real_fake_ok: bool,
    /// `js_pd_real_fake <= T_beta`
    pub pd_real_fake_ok: bool,
    /// `js_real_hc_pd >= T_alpha`
    pub real_hc_pd_ok: bool,
    /// `js_fake_hc_pd >= T_alpha`
    pub fake_hc_pd_ok: bool,
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMask {
    pub retained: Vec<String>,
    pub trace: Vec<TraceRow>,
    /// Thresholds applied to the four columns, in table column order.
    pub thresholds: [f64; 4],
}

impl ChannelMask {
    /// Mask that keeps every channel of `names`.
    pub fn full(names: &[String]) -> ChannelMask {
        ChannelMask {
            retained: names.to_vec(),
            trace: names
                .iter()
                .map(|c| TraceRow {
                    channel: c.clone(),
                    hc_real_fake_ok: true,
                    pd_real_fake_ok: true,
                    real_hc_pd_ok: true,
                    fake_hc_pd_ok: true,
                    retained: true,
                })
                .collect(),
            thresholds: [f64::NAN; 4],
        }
    }

    pub fn is_retained(&self, channel: &str) -> bool {
        self.retained.iter().any(|c| c == channel)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<ChannelMask> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Applies the two-sided threshold rule. Thresholds are computed per
/// column; ties at a threshold count as passing.
pub fn prune(table: &SimilarityTable, cfg: &PruneConfig) -> Result<ChannelMask> {
    if table.is_empty() {
        return Err(Error::Invalid("similarity table is empty".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.beta > 0.0) {
        return Err(Error::Config("alpha and beta must be positive".into()));
    }
    let n = table.len() as f64;
    let base = table.column_means().map(|m| match cfg.threshold_base {
        ThresholdBase::PerGroupMean => 2.0 * m,
        ThresholdBase::Sum => m * n,
    });
    let thresholds = [cfg.beta * base[0], cfg.beta * base[1], cfg.alpha * base[2], cfg.alpha * base[3]];
    let trace: Vec<TraceRow> = table
        .rows
        .iter()
        .map(|r| {
            let hc_real_fake_ok = r.js_hc_real_fake <= thresholds[0];
            let pd_real_fake_ok = r.js_pd_real_fake <= thresholds[1];
            let real_hc_pd_ok = r.js_real_hc_pd >= thresholds[2];
            let fake_hc_pd_ok = r.js_fake_hc_pd >= thresholds[3];
            let faithful = hc_real_fake_ok && pd_real_fake_ok;
            let separating = real_hc_pd_ok && fake_hc_pd_ok;
            let retained = match cfg.combine {
                Combine::Intersection => faithful && separating,
                Combine::Union => faithful || separating,
            };
            TraceRow {
                channel: r.channel.clone(),
                hc_real_fake_ok,
                pd_real_fake_ok,
                real_hc_pd_ok,
                fake_hc_pd_ok,
                retained,
            }
        })
        .collect();
    let retained: Vec<String> = trace.iter().filter(|t| t.retained).map(|t| t.channel.clone()).collect();
    if retained.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(ChannelMask {
        retained,
        trace,
        thresholds,
    })
}

/// Keeps the mask's channels, in mask order.
pub fn apply_mask(e: &EpochSet, mask: &ChannelMask) -> Result<EpochSet> {
    let idx = e.layout.indices_of(&mask.retained)?;
    let mut out = e.clone();
    out.epochs = e.epochs.select(ndarray::Axis(1), &idx);
    out.layout = e.layout.subset(&mask.retained)?;
    Ok(out)
}
