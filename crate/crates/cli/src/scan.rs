//! Parameter scans over seeds and inverse temperatures.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use pspin::clustering::{shattering_verdict, ShatteringVerdict};
use pspin::gibbs::{band_set, BandDominance, BandRow};
use pspin::landscape::ground_state;
use pspin::rng::derive_seed;
use pspin::{band_dominance, build_energy_table, superlevel_set, tune_mogp, ClusterReport, EnergyTable, GibbsContext};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const CELLS_DIR: &str = "cells";

/// Everything measured at one `(seed, β)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub seed: u64,
    pub beta: f64,
    pub kappa: f64,
    pub n: usize,
    pub p: usize,
    pub mode: String,
    pub band: BandDominance,
    pub band_size: usize,
    pub cluster_masses: Vec<f64>,
    pub max_cluster_mass: f64,
    pub clusters: ClusterReport,
    pub verdict: ShatteringVerdict,
}

impl CellReport {
    pub fn file_name(&self) -> String {
        format!("seed-{}_beta-{}.json", self.seed, self.beta)
    }
}

/// Band and shattering parameters shared by every cell of a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    pub kappa: f64,
    pub nu1: f64,
    pub nu2: f64,
    /// Diameter bound as a fraction of `n`.
    pub a: f64,
    /// Separation bound as a fraction of `n`.
    pub b: f64,
    pub c: f64,
    pub cprime: f64,
}

impl CellParams {
    /// `a = 2ν₁`, `b = ν₂`.
    pub fn new(kappa: f64, nu1: f64, nu2: f64, c: f64, cprime: f64) -> Self {
        Self {
            kappa,
            nu1,
            nu2,
            a: 2.0 * nu1,
            b: nu2,
            c,
            cprime,
        }
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            a: cfg.shatter_a(),
            b: cfg.shatter_b(),
            ..Self::new(cfg.kappa, cfg.nu1, cfg.nu2, cfg.shattering.c, cfg.shattering.cprime)
        }
    }
}

/// Band, clusters and shattering verdict of one table at one `β`.
pub fn analyze_cell(table: &EnergyTable, beta: f64, q: &CellParams) -> Result<CellReport> {
    let kappa = q.kappa;
    let band = band_dominance(table, beta, kappa)?;
    let set = band_set(table, beta, kappa)?;
    let clusters = ClusterReport::diagnostic(&set, q.nu1, q.nu2)?;
    let gibbs = GibbsContext::new(table, beta)?;
    let masses: Vec<f64> = clusters.clusters.iter().map(|c| gibbs.mass_of(c)).collect();
    let verdict = shattering_verdict(&clusters, &masses, q.a, q.b, q.c, q.cprime)?;
    Ok(CellReport {
        seed: table.seed(),
        beta,
        kappa,
        n: table.n(),
        p: table.p(),
        mode: table.mode().name().to_string(),
        band,
        band_size: set.len(),
        max_cluster_mass: masses.iter().copied().fold(0.0, f64::max),
        cluster_masses: masses,
        clusters,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub config_sha256: String,
    pub created_unix: u64,
    pub seeds: usize,
    pub cells: usize,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Corrupt {
            path,
            reason: e.to_string(),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

struct SeedOutput {
    table_row: String,
    level_row: String,
    cells: Vec<CellReport>,
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutput> {
    let table = build_energy_table(cfg.n, cfg.p, seed, cfg.mode())?;
    let e = table.energies();
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    let min = e.iter().copied().fold(f64::INFINITY, f64::min);
    let (gs, max) = ground_state(&table);
    let table_row = format!(
        "{},{},{},{},{},{},{},{}\n",
        seed,
        cfg.n,
        cfg.p,
        table.mode().name(),
        min,
        max,
        mean,
        gs.bits()
    );
    let level = superlevel_set(&table, cfg.epsilon)?;
    let level_row = format!("{},{},{}\n", seed, cfg.epsilon, level.len());
    let params = CellParams::from_config(cfg);
    let cells = cfg
        .beta
        .iter()
        .map(|&beta| analyze_cell(&table, beta, &params))
        .collect::<Result<_>>()?;
    Ok(SeedOutput {
        table_row,
        level_row,
        cells,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_file(dir: &Path, rel: &str, bytes: &[u8], files: &mut Vec<FileEntry>) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    files.push(FileEntry {
        path: rel.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len() as u64,
    });
    Ok(())
}

/// Runs every `(seed, β)` cell of `cfg` and writes the reports under `out`.
///
/// Seeds run in parallel on the current rayon pool; rows are assembled in
/// config order so the data files do not depend on the worker count.
pub fn run_scan(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let seeds = cfg.seeds.to_vec();
    let outputs = seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;

    let mut files = Vec::new();
    if !outputs.is_empty() {
        let mut tables = String::from("seed,n,p,mode,min_energy,max_energy,mean_energy,ground_state\n");
        let mut levels = String::from("seed,epsilon,size\n");
        let mut bands = Vec::from(format!("{},mass_out,band_size\n", BandRow::HEADER));
        let mut clusters = String::from(
            "seed,beta,ogp,L,max_diameter,min_interdistance,max_cluster_mass,total_cluster_mass\n",
        );
        let mut shatter =
            String::from("seed,beta,many_clusters,diameter,separation,subdominant,total_mass,shattered\n");
        for o in &outputs {
            tables.push_str(&o.table_row);
            levels.push_str(&o.level_row);
            for c in &o.cells {
                let row = BandRow {
                    n: c.n,
                    p: c.p,
                    mode: c.mode.clone(),
                    seed: c.seed,
                    beta: c.beta,
                    kappa: c.kappa,
                    log_z: c.band.log_z,
                    band_mass: c.band.mass_in_band,
                };
                row.write_csv(&mut bands).expect("in-memory write");
                bands.pop();
                bands.extend(format!(",{},{}\n", c.band.mass_out, c.band_size).bytes());
                let r = &c.clusters;
                let _ = writeln!(
                    clusters,
                    "{},{},{},{},{},{},{},{}",
                    c.seed,
                    c.beta,
                    r.ogp,
                    r.num_clusters,
                    r.max_diameter,
                    opt(r.min_interdistance),
                    c.max_cluster_mass,
                    c.cluster_masses.iter().sum::<f64>()
                );
                let v = &c.verdict;
                let _ = writeln!(
                    shatter,
                    "{},{},{},{},{},{},{},{}",
                    c.seed,
                    c.beta,
                    v.many_clusters.holds,
                    v.diameter.holds,
                    v.separation.holds,
                    v.subdominant.holds,
                    v.total_mass.holds,
                    v.holds()
                );
            }
        }
        write_file(out, "energy_tables.csv", tables.as_bytes(), &mut files)?;
        write_file(out, "level_sets.csv", levels.as_bytes(), &mut files)?;
        write_file(out, "bands.csv", &bands, &mut files)?;
        write_file(out, "clusters.csv", clusters.as_bytes(), &mut files)?;
        write_file(out, "shattering.csv", shatter.as_bytes(), &mut files)?;
        for c in outputs.iter().flat_map(|o| &o.cells) {
            let json = serde_json::to_string_pretty(c).expect("report serializes");
            write_file(out, &format!("{CELLS_DIR}/{}", c.file_name()), json.as_bytes(), &mut files)?;
        }
        if let Some(m) = &cfg.mogp {
            let tuning = tune_mogp(m.m, m.gamma)?;
            let mut doc = serde_json::json!({ "m": m.m, "gamma": m.gamma, "tuning": tuning });
            if !m.angles.is_empty() {
                let angles = m
                    .angles
                    .iter()
                    .map(|&a| pspin::EnsembleAngle::new(a))
                    .collect::<pspin::Result<Vec<_>>>()?;
                let searches = seeds
                    .par_iter()
                    .map(|&s| {
                        pspin::mogp::empirical_mogp_search(
                            cfg.n,
                            cfg.p,
                            m.m,
                            m.gamma,
                            tuning.xi,
                            tuning.eta,
                            &angles,
                            derive_seed(s, 0x6d6f6770),
                            &Default::default(),
                        )
                    })
                    .collect::<pspin::Result<Vec<_>>>()?;
                doc["search"] = serde_json::to_value(searches).expect("search serializes");
            }
            let json = serde_json::to_string_pretty(&doc).expect("json");
            write_file(out, "mogp.json", json.as_bytes(), &mut files)?;
        }
    }

    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: sha256_hex(cfg.to_toml().as_bytes()),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        seeds: seeds.len(),
        cells: outputs.iter().map(|o| o.cells.len()).sum(),
        files,
    };
    let path = out.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

/// Paths of the data files listed in a manifest, relative to `dir`.
pub fn data_files(dir: &Path, manifest: &Manifest) -> Vec<PathBuf> {
    manifest.files.iter().map(|f| dir.join(&f.path)).collect()
}
