//! Wall time of multiphase segmentation as a function of the region count.
//!
//! Each object count gets its own phantom, segmented with the same iteration
//! budget and early stopping disabled, so the runs differ only in `R`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ModelConfig;
use crate::imaging::{dice_multilabel, generate_phantom, LabelMatching, ObjectShape, PhantomSpec};
use crate::memory;
use crate::multiphase::{segment_multiphase, InitStrategy, MultiphaseConfig};
use crate::twophase::EvolutionConfig;

/// Version of the CSV layout written by [`BenchReport::to_csv`].
pub const BENCH_CSV_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub objects: Vec<usize>,
    /// Side of the square phantom.
    pub size: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub shape: ObjectShape,
    pub fill: f64,
    pub model: ModelConfig,
    /// `energy_tol` is forced to zero.
    pub evolution: EvolutionConfig,
    pub init: InitStrategy,
    pub relabel_every: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            objects: vec![2, 4, 8, 12],
            size: 300,
            noise_sigma: 4.0,
            seed: 0,
            shape: ObjectShape::Disk,
            fill: 0.5,
            model: ModelConfig {
                n_polytopes: 225,
                ..ModelConfig::default()
            },
            evolution: EvolutionConfig::multiphase(),
            init: InitStrategy::MultiOtsu,
            relabel_every: 5,
        }
    }
}

impl BenchConfig {
    pub fn phantom(&self, objects: usize) -> PhantomSpec {
        PhantomSpec {
            width: self.size,
            height: self.size,
            objects,
            shape: self.shape,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            fill: self.fill,
            ..PhantomSpec::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub objects: usize,
    pub regions: usize,
    pub iterations: usize,
    /// Seconds spent in segmentation alone.
    pub wall_time: f64,
    pub mean_dice: f64,
    /// Heap high-water mark during segmentation; `None` without the tracking
    /// allocator.
    pub peak_bytes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Slowest over fastest run.
    pub time_ratio: f64,
    /// Largest over smallest peak heap usage.
    pub memory_ratio: Option<f64>,
}

fn max_over_min(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    let min = values.fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        1.0
    }
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.objects.is_empty() {
        return Err(Error::InvalidConfig("no object counts given".into()));
    }
    let evolution = EvolutionConfig {
        energy_tol: 0.0,
        ..cfg.evolution.clone()
    };
    let mut rows = Vec::with_capacity(cfg.objects.len());
    for &objects in &cfg.objects {
        let (image, truth) = generate_phantom(&cfg.phantom(objects))?;
        let mp = MultiphaseConfig {
            relabel_every: cfg.relabel_every,
            init: cfg.init,
            seed: cfg.seed,
            ..MultiphaseConfig::new(objects + 1)
        };
        memory::reset_peak();
        let base = memory::current_bytes();
        let result = segment_multiphase(&image, &cfg.model, &evolution, &mp)?;
        let peak = memory::peak_bytes().saturating_sub(base);
        let score = dice_multilabel(&result.label_map, &truth, LabelMatching::HungarianGreedy)?;
        rows.push(BenchRow {
            objects,
            regions: objects + 1,
            iterations: result.iterations_run,
            wall_time: result.wall_time,
            mean_dice: score.mean,
            peak_bytes: memory::is_tracking().then_some(peak),
        });
    }
    let time_ratio = max_over_min(rows.iter().map(|r| r.wall_time));
    let memory_ratio = memory::is_tracking()
        .then(|| max_over_min(rows.iter().map(|r| r.peak_bytes.unwrap_or(0) as f64)));
    Ok(BenchReport {
        rows,
        time_ratio,
        memory_ratio,
    })
}

impl BenchReport {
    /// `schema,objects,regions,iterations,wall_time_s,mean_dice,peak_bytes`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("schema,objects,regions,iterations,wall_time_s,mean_dice,peak_bytes\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{BENCH_CSV_VERSION},{},{},{},{:.6},{:.6},{}\n",
                r.objects,
                r.regions,
                r.iterations,
                r.wall_time,
                r.mean_dice,
                r.peak_bytes.map(|b| b.to_string()).unwrap_or_default()
            ));
        }
        out
    }
}
