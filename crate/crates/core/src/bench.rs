//! Batch protocol: every corpus image, degraded at each missing fraction,
//! restored by each method and scored against the original.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::degrade::random_mask;
use crate::error::{param_err, GglrError, Result};
use crate::grid::ImageGrid;
use crate::metrics::{format_metric, psnr, ssim};
use crate::netpbm::read_pgm;
use crate::solver::{restore, Method, SolveConfig};

pub const DEFAULT_FRACTIONS: [f64; 4] = [0.90, 0.95, 0.98, 0.99];

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub fractions: Vec<f64>,
    pub methods: Vec<Method>,
    /// One mask per (image size, fraction), all drawn from this seed.
    pub seed: u64,
    pub solve: SolveConfig,
    /// Record wall-clock time; otherwise `runtime_s` is written as `NA`.
    pub timing: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            fractions: DEFAULT_FRACTIONS.to_vec(),
            methods: vec![Method::Gglr2, Method::Gglr4, Method::Glr],
            seed: 0,
            solve: SolveConfig::default(),
            timing: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub image: String,
    pub fraction: f64,
    pub method: Method,
    pub psnr_db: f64,
    pub ssim: f64,
    pub runtime_s: Option<f64>,
}

/// `.pgm` files of a directory, sorted by file name, keyed by file stem.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<(String, ImageGrid)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, read_pgm(&p)?))
        })
        .collect()
}

pub fn run_bench(corpus: &[(String, ImageGrid)], config: &BenchConfig) -> Result<Vec<BenchRecord>> {
    if corpus.is_empty() {
        return param_err("empty corpus");
    }
    if let Some(f) = config.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return param_err(format!("missing fraction {f} outside [0, 1]"));
    }
    let tasks: Vec<(usize, f64, Method)> = corpus
        .iter()
        .enumerate()
        .flat_map(|(i, _)| {
            config
                .fractions
                .iter()
                .flat_map(move |&f| config.methods.iter().map(move |&m| (i, f, m)))
        })
        .collect();

    let mut records = tasks
        .into_par_iter()
        .map(|(i, fraction, method)| {
            let (name, img) = &corpus[i];
            let mask = random_mask(img.rows(), img.cols(), fraction, config.seed)?;
            let start = Instant::now();
            let report = restore(img, &mask, method, &config.solve)?;
            let elapsed = start.elapsed().as_secs_f64();
            let out = report.image.clamped();
            Ok(BenchRecord {
                image: name.clone(),
                fraction,
                method,
                psnr_db: psnr(img, &out)?,
                ssim: ssim(img, &out)?,
                runtime_s: config.timing.then_some(elapsed),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| {
        a.image
            .cmp(&b.image)
            .then(a.fraction.total_cmp(&b.fraction))
            .then(a.method.cmp(&b.method))
    });
    Ok(records)
}

pub fn write_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| GglrError::Format(e.to_string());
    w.write_record(["image", "fraction", "method", "psnr_db", "ssim", "runtime_s"])
        .map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.image.clone(),
            format!("{}", r.fraction),
            r.method.name().to_string(),
            format_metric(r.psnr_db),
            format!("{:.6}", r.ssim),
            r.runtime_s.map_or_else(|| "NA".to_string(), |t| format!("{t:.6}")),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
