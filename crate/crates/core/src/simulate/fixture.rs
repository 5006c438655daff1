//! Synthetic facial action-unit recordings shaped like an emotion corpus:
//! 8 expressions, 17 AU intensity channels in `[0, 5]`, one clip per actor
//! and expression.

use std::fs;
use std::path::{Path, PathBuf};

use rand::RngExt;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcdata::{CurveSample, FunctionalDataset, TimeGrid};
use crate::rng::stream_rng;

pub const EMOTIONS: [&str; 8] = ["neutral", "calm", "happy", "sad", "angry", "fearful", "disgust", "surprised"];

pub const AU_LABELS: [&str; 17] = [
    "AU01", "AU02", "AU04", "AU05", "AU06", "AU07", "AU09", "AU10", "AU12", "AU14", "AU15", "AU17", "AU20", "AU23",
    "AU25", "AU26", "AU45",
];

/// Peak intensities of the characteristic AUs of each expression.
const PATTERNS: [&[(&str, f64)]; 8] = [
    &[],
    &[("AU12", 1.0), ("AU06", 0.8), ("AU45", 0.8)],
    &[("AU12", 3.2), ("AU06", 2.0), ("AU25", 1.2), ("AU07", 0.5)],
    &[("AU01", 1.6), ("AU04", 1.5), ("AU15", 1.6), ("AU17", 0.9)],
    &[("AU04", 2.3), ("AU07", 1.8), ("AU23", 1.3), ("AU10", 0.7)],
    &[("AU01", 1.8), ("AU02", 1.5), ("AU05", 1.7), ("AU20", 1.6), ("AU25", 0.9)],
    &[("AU09", 2.1), ("AU10", 1.7), ("AU15", 0.9), ("AU04", 0.8)],
    &[("AU01", 2.1), ("AU02", 2.0), ("AU05", 1.9), ("AU26", 2.2), ("AU25", 1.1)],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub actors: usize,
    pub frames: usize,
    /// Clip lengths vary in `frames − jitter ..= frames + jitter` when written to disk.
    pub frame_jitter: usize,
    pub sd: f64,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            actors: 24,
            frames: 110,
            frame_jitter: 2,
            sd: 0.25,
            seed: 2018,
        }
    }
}

struct Clip {
    onset: f64,
    gain: f64,
    offsets: Vec<f64>,
}

fn clip_params(cfg: &FixtureConfig, emotion: usize, actor: usize) -> Clip {
    let mut rng = stream_rng(cfg.seed, (emotion * 1000 + actor) as u64);
    Clip {
        onset: rng.random_range(-0.04..0.04),
        gain: rng.random_range(0.8..1.2),
        offsets: (0..AU_LABELS.len()).map(|_| rng.random_range(-0.1..0.1)).collect(),
    }
}

fn baseline(au: usize) -> f64 {
    0.25 + 0.05 * (au % 4) as f64
}

/// AU intensities of one clip at normalized times in `[0, 1]`.
fn clip_values(cfg: &FixtureConfig, emotion: usize, actor: usize, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let clip = clip_params(cfg, emotion, actor);
    let noise = Normal::new(0.0, cfg.sd).map_err(|e| Error::contract(e.to_string()))?;
    let mut rng = stream_rng(cfg.seed ^ 0x5eed, (emotion * 1000 + actor) as u64);
    let mut out = Vec::with_capacity(AU_LABELS.len());
    for (a, au) in AU_LABELS.iter().enumerate() {
        let peak = PATTERNS[emotion]
            .iter()
            .find(|(name, _)| name == au)
            .map_or(0.0, |(_, p)| *p);
        let vals = times
            .iter()
            .map(|&t| {
                let u = (t - 0.5 - clip.onset) / 0.7;
                let shape = if u.abs() < 0.5 {
                    0.5 * (1.0 + (2.0 * std::f64::consts::PI * u).cos())
                } else {
                    0.0
                };
                let e = if cfg.sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                (baseline(a) + clip.offsets[a] + clip.gain * peak * shape + e).clamp(0.0, 5.0)
            })
            .collect();
        out.push(vals);
    }
    Ok(out)
}

fn actor_id(k: usize) -> String {
    format!("actor{:02}", k + 1)
}

/// The corpus sampled directly on a uniform grid of `frames` points.
pub fn ravdess_like(cfg: &FixtureConfig) -> Result<FunctionalDataset> {
    let grid = TimeGrid::uniform(cfg.frames, 1.0)?;
    let mut samples = Vec::with_capacity(EMOTIONS.len() * AU_LABELS.len() * cfg.actors);
    for (g, emotion) in EMOTIONS.iter().enumerate() {
        for k in 0..cfg.actors {
            let vals = clip_values(cfg, g, k, grid.points())?;
            for (au, v) in AU_LABELS.iter().zip(vals) {
                samples.push(CurveSample {
                    unit_id: actor_id(k),
                    group_id: emotion.to_string(),
                    variate_id: au.to_string(),
                    values: v,
                });
            }
        }
    }
    FunctionalDataset::from_samples(
        grid,
        EMOTIONS.iter().map(|s| s.to_string()).collect(),
        AU_LABELS.iter().map(|s| s.to_string()).collect(),
        samples,
    )
}

/// Write the corpus as per-clip `frame,AU01,…` CSVs of slightly varying
/// length plus a `file,unit,group` manifest. Returns the manifest path.
pub fn write_openface_fixture(cfg: &FixtureConfig, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join("manifest.csv");
    let csv_err = |p: &Path, e: csv::Error| Error::Parse {
        file: p.display().to_string(),
        row: 0,
        column: String::new(),
        message: e.to_string(),
    };
    let mut manifest = csv::Writer::from_path(&manifest_path).map_err(|e| csv_err(&manifest_path, e))?;
    manifest
        .write_record(["file", "unit", "group"])
        .map_err(|e| csv_err(&manifest_path, e))?;
    let span = 2 * cfg.frame_jitter + 1;
    for (g, emotion) in EMOTIONS.iter().enumerate() {
        for k in 0..cfg.actors {
            let n = cfg.frames - cfg.frame_jitter + (g * 7 + k * 3) % span;
            let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let vals = clip_values(cfg, g, k, &times)?;
            let file = format!("{:02}-{}.csv", k + 1, emotion);
            let path = dir.join(&file);
            let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
            let mut header = vec!["frame".to_string()];
            header.extend(AU_LABELS.iter().map(|s| s.to_string()));
            w.write_record(&header).map_err(|e| csv_err(&path, e))?;
            for i in 0..n {
                let mut rec = vec![(i + 1).to_string()];
                rec.extend(vals.iter().map(|v| format!("{:.2}", v[i])));
                w.write_record(&rec).map_err(|e| csv_err(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            manifest
                .write_record([file.as_str(), &actor_id(k), emotion])
                .map_err(|e| csv_err(&manifest_path, e))?;
        }
    }
    manifest.flush().map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}
