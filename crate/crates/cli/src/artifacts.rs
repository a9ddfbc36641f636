//! Plot files: ERP difference traces and topomaps.

use std::path::Path;

use rsvp_core::preprocess::EpochSet;
use rsvp_core::spatial::{FilterMethod, SpatialFilterBank};
use rsvp_core::topomap;
use rsvp_core::Result;

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

/// `erp_diff.csv`: `time_s` then one column per channel, one row per sample
/// of `mean(target) − mean(standard)`.
pub fn write_erp_diff(epochs: &EpochSet, path: &Path) -> Result<()> {
    let diff = rsvp_core::preprocess::difference_erp(epochs)?;
    let mut out = String::from("time_s");
    for c in &epochs.channels {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for t in 0..diff.ncols() {
        out.push_str(&format!("{:?}", epochs.window.0 + t as f64 / epochs.rate));
        for c in 0..diff.nrows() {
            out.push_str(&format!(",{:?}", diff[(c, t)]));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Writes one SVG scalp map to `path`.
pub fn emit_topomap(pattern: &[f64], channels: &[String], title: &str, path: &Path) -> Result<()> {
    write_text(path, &topomap::render_svg(pattern, channels, title)?)
}

/// File name for pattern `k` of a bank; MTWLB names carry the window in
/// milliseconds.
pub fn topomap_name(bank: &SpatialFilterBank, k: usize) -> String {
    match (bank.method, bank.meta[k].window) {
        (FilterMethod::Mtwlb, Some((a, b))) => format!(
            "topomap_{}_{k}_{}-{}ms.svg",
            bank.method,
            (a * 1000.0).round() as i64,
            (b * 1000.0).round() as i64
        ),
        _ => format!("topomap_{}_{k}.svg", bank.method),
    }
}

/// All pattern maps of `bank` into `dir`; returns the file names.
pub fn emit_bank(bank: &SpatialFilterBank, channels: &[String], dir: &Path) -> Result<Vec<String>> {
    (0..bank.n_filters())
        .map(|k| {
            let name = topomap_name(bank, k);
            let title = match bank.meta[k].window {
                Some((a, b)) => format!("{} pattern {k} ({:.0}–{:.0} ms)", bank.method, a * 1000.0, b * 1000.0),
                None => format!("{} pattern {k}", bank.method),
            };
            let pattern: Vec<f64> = bank.patterns.column(k).iter().copied().collect();
            emit_topomap(&pattern, channels, &title, &dir.join(&name))?;
            Ok(name)
        })
        .collect()
}
