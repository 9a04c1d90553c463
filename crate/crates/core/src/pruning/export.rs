use std::path::{Path, PathBuf};

use super::{ChannelMask, SimilarityRow, SimilarityTable};
use crate::error::{Error, Result};
use crate::plot::heatmap_grid;

pub const SIMILARITY_HEADER: [&str; 6] = [
    "channel",
    "js_hc_real_fake",
    "js_pd_real_fake",
    "js_real_hc_pd",
    "js_fake_hc_pd",
    "retained",
];

/// Heatmap of the table: one row per divergence column, one cell per
/// channel in layout order. Channels outside `mask` are drawn grey.
pub fn render_heatmap(table: &SimilarityTable, mask: Option<&ChannelMask>, path: &Path) -> Result<()> {
    let cells: Vec<Vec<Option<f64>>> = (0..4)
        .map(|k| {
            table
                .rows
                .iter()
                .map(|r| match mask {
                    Some(m) if !m.is_retained(&r.channel) => None,
                    _ => Some(r.values()[k]),
                })
                .collect()
        })
        .collect();
    heatmap_grid(&cells, 16, path)
}

/// Writes `similarity.csv`, `heatmap_before.png` and `heatmap_after.png`
/// into `out_dir` and returns their paths.
pub fn export_similarity(table: &SimilarityTable, mask: &ChannelMask, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv_path = out_dir.join("similarity.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::Format(format!("{}: {e}", csv_path.display())))?;
    w.write_record(SIMILARITY_HEADER)?;
    for r in &table.rows {
        let v = r.values();
        w.write_record([
            r.channel.clone(),
            v[0].to_string(),
            v[1].to_string(),
            v[2].to_string(),
            v[3].to_string(),
            mask.is_retained(&r.channel).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let before = out_dir.join("heatmap_before.png");
    let after = out_dir.join("heatmap_after.png");
    render_heatmap(table, None, &before)?;
    render_heatmap(table, Some(mask), &after)?;
    Ok(vec![csv_path, before, after])
}

/// Reads a similarity CSV back into a table and the retained flags.
pub fn read_similarity_csv(path: &Path) -> Result<(SimilarityTable, Vec<bool>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if r.headers()?.iter().collect::<Vec<_>>() != SIMILARITY_HEADER {
        return Err(Error::Format(format!("{}: unexpected similarity CSV header", path.display())));
    }
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad number `{}`", path.display(), &rec[i])))
        };
        rows.push(SimilarityRow {
            channel: rec[0].to_string(),
            js_hc_real_fake: num(1)?,
            js_pd_real_fake: num(2)?,
            js_real_hc_pd: num(3)?,
            js_fake_hc_pd: num(4)?,
        });
        flags.push(
            rec[5]
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad flag `{}`", path.display(), &rec[5])))?,
        );
    }
    Ok((SimilarityTable { rows }, flags))
}
