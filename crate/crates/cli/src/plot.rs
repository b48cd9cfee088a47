//! Long-format series for plotting scan results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::scan::{CellReport, Manifest, CELLS_DIR};

pub const HEADER: &str = "x_name,x,metric,group,y";

/// Metrics emitted per cell, in output order.
pub const METRICS: [&str; 7] = [
    "mass_out",
    "band_mass",
    "log_z",
    "num_clusters",
    "max_cluster_mass",
    "max_diameter",
    "band_size",
];

fn metric(c: &CellReport, name: &str) -> f64 {
    match name {
        "mass_out" => c.band.mass_out,
        "band_mass" => c.band.mass_in_band,
        "log_z" => c.band.log_z,
        "num_clusters" => c.clusters.num_clusters as f64,
        "max_cluster_mass" => c.max_cluster_mass,
        "max_diameter" => c.clusters.max_diameter,
        "band_size" => c.band_size as f64,
        _ => unreachable!("unknown metric {name}"),
    }
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Reads every cell report listed in the manifest of `dir`.
pub fn load_cells(dir: &Path) -> Result<Vec<CellReport>> {
    let manifest = Manifest::load(dir)?;
    let prefix = format!("{CELLS_DIR}/");
    manifest
        .files
        .iter()
        .filter(|f| f.path.starts_with(&prefix))
        .map(|f| {
            let path = dir.join(&f.path);
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Corrupt {
                path,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Tidy CSV: one row per `(cell, metric)` with `group = seed`, then one
/// `group = median` row per `(β, metric)`.
pub fn emit_plot_data(dir: &Path) -> Result<String> {
    let cells = load_cells(dir)?;
    let mut out = format!("{HEADER}\n");
    let mut groups: BTreeMap<(u64, usize), Vec<f64>> = BTreeMap::new();
    for c in &cells {
        for (k, name) in METRICS.iter().enumerate() {
            let y = metric(c, name);
            let _ = writeln!(out, "beta,{},{name},{},{y}", c.beta, c.seed);
            groups.entry((c.beta.to_bits(), k)).or_default().push(y);
        }
    }
    let mut keys: Vec<_> = groups.keys().copied().collect();
    keys.sort_by(|a, b| f64::from_bits(a.0).total_cmp(&f64::from_bits(b.0)).then(a.1.cmp(&b.1)));
    for key in keys {
        let m = median(groups.get_mut(&key).expect("key present"));
        let _ = writeln!(out, "beta,{},{},median,{m}", f64::from_bits(key.0), METRICS[key.1]);
    }
    Ok(out)
}
