//! Two-phase piecewise-constant segmentation.
//!
//! Minimizes `E = sum_x (I - c1)^2 f + (I - c2)^2 (1 - f)` over the half-space
//! parameters by gradient descent, alternating with soft-membership updates
//! of the region means `c1` (foreground) and `c2` (background).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::accumulate::over_row_bands;
use crate::error::{Error, Result};
use crate::geometry::{exclusive_products, LevelSetModel, ModelConfig, PixelEval};
use crate::imaging::{check_shape, otsu_threshold, GrayImage, Mask};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    /// Mean foreground intensity.
    pub c1: f64,
    /// Mean background intensity.
    pub c2: f64,
}

/// Which phase ends up as the foreground `f > 0.5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    /// Whatever the soft means of the initial grid select.
    Auto,
    /// The first step uses the bright and dark Otsu class means as `c1`, `c2`.
    Bright,
    /// As `Bright` with the classes swapped.
    Dark,
}

/// Solver knobs shared by the two-phase and multiphase loops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub max_iters: usize,
    /// Initial step size.
    pub gamma0: f64,
    /// Multiplicative step decay per iteration.
    pub gamma_decay: f64,
    /// Relative change of the 5-iteration moving average of the energy below
    /// which the loop stops. Zero disables early stopping.
    pub energy_tol: f64,
    /// Iterations between region-mean refreshes (two-phase only).
    pub stats_every: usize,
    pub polarity: Polarity,
}

impl EvolutionConfig {
    /// Defaults for the two-phase energy on 0-255 images.
    pub fn two_phase() -> Self {
        Self {
            max_iters: 100,
            gamma0: 3.0e-7,
            gamma_decay: 0.97,
            energy_tol: 1e-6,
            stats_every: 1,
            polarity: Polarity::Bright,
        }
    }

    /// Defaults for the multiphase deformation energy, which is unitless.
    pub fn multiphase() -> Self {
        Self {
            max_iters: 100,
            gamma0: 3.0e-3,
            gamma_decay: 0.97,
            energy_tol: 1e-6,
            stats_every: 1,
            polarity: Polarity::Auto,
        }
    }

    /// Step size at iteration `t`.
    pub fn gamma(&self, t: usize) -> f64 {
        self.gamma0 * self.gamma_decay.powi(t as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return Err(Error::InvalidConfig("gamma0 must be positive".into()));
        }
        if !(self.gamma_decay > 0.0 && self.gamma_decay <= 1.0) {
            return Err(Error::InvalidConfig("gamma_decay must lie in (0, 1]".into()));
        }
        if !(self.energy_tol >= 0.0) {
            return Err(Error::InvalidConfig("energy_tol must be >= 0".into()));
        }
        if self.stats_every == 0 {
            return Err(Error::InvalidConfig("stats_every must be positive".into()));
        }
        Ok(())
    }
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self::two_phase()
    }
}

/// True once the moving average of the last five energies stops moving.
pub(crate) fn has_stalled(trace: &[f64], tol: f64) -> bool {
    const WINDOW: usize = 5;
    let n = trace.len();
    if tol <= 0.0 || n < WINDOW + 1 {
        return false;
    }
    let cur = trace[n - WINDOW..].iter().sum::<f64>() / WINDOW as f64;
    let prev = trace[n - WINDOW - 1..n - 1].iter().sum::<f64>() / WINDOW as f64;
    (cur - prev).abs() / prev.abs().max(1e-12) < tol
}

#[derive(Clone, Debug)]
pub struct SegmentationResult {
    /// `f > 0.5` at the final parameters.
    pub mask: Mask,
    pub final_energy: f64,
    pub iterations_run: usize,
    /// Energy before each step.
    pub energy_trace: Vec<f64>,
    /// Seconds.
    pub wall_time: f64,
    pub stats: RegionStats,
    pub converged: bool,
    pub model: LevelSetModel,
}

fn intensity(image: &GrayImage, x: usize, y: usize) -> f64 {
    image.get(x, y) as f64
}

pub fn energy_two_phase(image: &GrayImage, m: &LevelSetModel, stats: &RegionStats) -> Result<f64> {
    check_shape(m.image_shape(), image.shape())?;
    let field = m.field(None);
    Ok(image
        .data()
        .iter()
        .zip(&field)
        .map(|(&v, &f)| {
            let v = v as f64;
            (v - stats.c1).powi(2) * f + (v - stats.c2).powi(2) * (1.0 - f)
        })
        .sum())
}

/// Soft-membership means `c1 = sum I f / sum f`, `c2 = sum I (1-f) / sum (1-f)`.
pub fn update_region_stats(image: &GrayImage, m: &LevelSetModel) -> Result<RegionStats> {
    check_shape(m.image_shape(), image.shape())?;
    let field = m.field(None);
    let (mut wf, mut sf, mut wb, mut sb) = (0.0, 0.0, 0.0, 0.0);
    for (&v, &f) in image.data().iter().zip(&field) {
        let v = v as f64;
        wf += f;
        sf += v * f;
        wb += 1.0 - f;
        sb += v * (1.0 - f);
    }
    let floor = 1e-9 * field.len().max(1) as f64;
    if wf <= floor {
        return Err(Error::DegenerateRegion("the model covers no foreground"));
    }
    if wb <= floor {
        return Err(Error::DegenerateRegion("the model covers the whole image"));
    }
    Ok(RegionStats {
        c1: sf / wf,
        c2: sb / wb,
    })
}

/// Region means seeded from the two Otsu classes.
pub fn otsu_region_stats(image: &GrayImage, polarity: Polarity) -> Option<RegionStats> {
    let hist = image.histogram();
    if hist.iter().filter(|&&h| h > 0).count() < 2 {
        return None;
    }
    let t = otsu_threshold(&hist);
    let (mut n0, mut s0, mut n1, mut s1) = (0.0, 0.0, 0.0, 0.0);
    for (v, &h) in hist.iter().enumerate() {
        let (n, s) = if v <= t { (&mut n0, &mut s0) } else { (&mut n1, &mut s1) };
        *n += h as f64;
        *s += v as f64 * h as f64;
    }
    let (dark, bright) = (s0 / n0, s1 / n1);
    match polarity {
        Polarity::Auto => None,
        Polarity::Bright => Some(RegionStats { c1: bright, c2: dark }),
        Polarity::Dark => Some(RegionStats { c1: dark, c2: bright }),
    }
}

/// Energy, parameter gradient, and soft polytope moments at the current
/// parameters.
#[derive(Clone, Debug)]
pub struct TwoPhaseGradient {
    pub energy: f64,
    /// Same layout as [`LevelSetModel::params`].
    pub grad: Vec<f64>,
    /// `[sum g, sum g x, sum g y]` per polytope.
    pub moments: Vec<[f64; 3]>,
}

/// Everything one evaluation pass gathers. Since
/// `(I-c1)^2 - (I-c2)^2 = c1^2 - c2^2 - 2 I (c1 - c2)`, the gradient for any
/// `c1, c2` follows from `sum df/dw` and `sum I df/dw`, so the region means,
/// the energy, and the gradient all come out of a single pass.
#[derive(Clone, Debug)]
pub(crate) struct TwoPhasePass {
    /// `sum_x df/dw`.
    df: Vec<f64>,
    /// `sum_x I df/dw`.
    idf: Vec<f64>,
    moments: Vec<[f64; 3]>,
    pixels: f64,
    sum_i: f64,
    sum_i2: f64,
    sum_f: f64,
    sum_if: f64,
}

impl TwoPhasePass {
    fn new(m: &LevelSetModel) -> Self {
        Self {
            df: vec![0.0; m.param_count()],
            idf: vec![0.0; m.param_count()],
            moments: vec![[0.0; 3]; m.len()],
            pixels: 0.0,
            sum_i: 0.0,
            sum_i2: 0.0,
            sum_f: 0.0,
            sum_if: 0.0,
        }
    }

    fn merge(&mut self, other: &TwoPhasePass) {
        for (t, p) in self.df.iter_mut().zip(&other.df) {
            *t += p;
        }
        for (t, p) in self.idf.iter_mut().zip(&other.idf) {
            *t += p;
        }
        for (t, p) in self.moments.iter_mut().zip(&other.moments) {
            t[0] += p[0];
            t[1] += p[1];
            t[2] += p[2];
        }
        self.pixels += other.pixels;
        self.sum_i += other.sum_i;
        self.sum_i2 += other.sum_i2;
        self.sum_f += other.sum_f;
        self.sum_if += other.sum_if;
    }

    pub(crate) fn run(image: &GrayImage, m: &LevelSetModel) -> Result<Self> {
        check_shape(m.image_shape(), image.shape())?;
        let (height, width) = image.shape();
        let mh = m.m_halfspaces();
        let parts = over_row_bands(
            height,
            || Self::new(m),
            |rows, acc| {
                let mut pe = PixelEval::default();
                let mut excl = Vec::new();
                for y in rows {
                    for x in 0..width {
                        let p = [x as f64, y as f64];
                        let v = intensity(image, x, y);
                        m.eval_pixel(p, &mut pe);
                        let complement: f64 = pe.g.iter().map(|g| 1.0 - g).product();
                        let f = 1.0 - complement;
                        acc.pixels += 1.0;
                        acc.sum_i += v;
                        acc.sum_i2 += v * v;
                        acc.sum_f += f;
                        acc.sum_if += v * f;
                        exclusive_products(&pe.g, None, &mut excl);
                        for (a, &i) in pe.active.iter().enumerate() {
                            let g = pe.g[a];
                            let mom = &mut acc.moments[i];
                            mom[0] += g;
                            mom[1] += g * p[0];
                            mom[2] += g * p[1];
                            let coef = excl[a] * g * pe.gains[a];
                            if coef == 0.0 {
                                continue;
                            }
                            let u = pe.local[a];
                            let tails = &pe.tails[a * mh..(a + 1) * mh];
                            let range = i * mh * 3..(i + 1) * mh * 3;
                            let df = &mut acc.df[range.clone()];
                            let idf = &mut acc.idf[range];
                            for (j, &t) in tails.iter().enumerate() {
                                let c = coef * t;
                                let d = [c * u[0], c * u[1], c];
                                for k in 0..3 {
                                    df[3 * j + k] += d[k];
                                    idf[3 * j + k] += v * d[k];
                                }
                            }
                        }
                    }
                }
            },
        );
        let mut iter = parts.into_iter();
        let mut total = iter.next().expect("at least one band");
        for part in iter {
            total.merge(&part);
        }
        Ok(total)
    }

    /// Soft region means at the evaluated parameters.
    pub(crate) fn stats(&self) -> Result<RegionStats> {
        let wf = self.sum_f;
        let wb = self.pixels - self.sum_f;
        let floor = 1e-9 * self.pixels.max(1.0);
        if wf <= floor {
            return Err(Error::DegenerateRegion("the model covers no foreground"));
        }
        if wb <= floor {
            return Err(Error::DegenerateRegion("the model covers the whole image"));
        }
        Ok(RegionStats {
            c1: self.sum_if / wf,
            c2: (self.sum_i - self.sum_if) / wb,
        })
    }

    pub(crate) fn energy(&self, s: &RegionStats) -> Result<f64> {
        // sum (I-c2)^2 + sum f ((I-c1)^2 - (I-c2)^2)
        let background = self.sum_i2 - 2.0 * s.c2 * self.sum_i + self.pixels * s.c2 * s.c2;
        let e = background + (s.c1 * s.c1 - s.c2 * s.c2) * self.sum_f - 2.0 * (s.c1 - s.c2) * self.sum_if;
        if !e.is_finite() {
            return Err(Error::NonFinite("energy"));
        }
        Ok(e.max(0.0))
    }

    pub(crate) fn gradient(&self, s: &RegionStats) -> Vec<f64> {
        let a = s.c1 * s.c1 - s.c2 * s.c2;
        let b = -2.0 * (s.c1 - s.c2);
        self.df.iter().zip(&self.idf).map(|(&d, &id)| a * d + b * id).collect()
    }
}

/// `dE/dw_ijk = sum_x ((I-c1)^2 - (I-c2)^2) df/dw_ijk`, summed over every pixel
/// whose neighborhood contains polytope `i`.
pub fn two_phase_gradient(
    image: &GrayImage,
    m: &LevelSetModel,
    stats: &RegionStats,
) -> Result<TwoPhaseGradient> {
    let pass = TwoPhasePass::run(image, m)?;
    Ok(TwoPhaseGradient {
        energy: pass.energy(stats)?,
        grad: pass.gradient(stats),
        moments: pass.moments,
    })
}

/// One descent step `w <- w - gamma dE/dw`; returns the energy before the step.
pub fn gradient_step_two_phase(
    image: &GrayImage,
    m: &mut LevelSetModel,
    stats: &RegionStats,
    gamma: f64,
) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidConfig("gamma must be positive".into()));
    }
    let pass = TwoPhasePass::run(image, m)?;
    apply_pass(m, &pass, stats, gamma)
}

fn apply_pass(m: &mut LevelSetModel, pass: &TwoPhasePass, stats: &RegionStats, gamma: f64) -> Result<f64> {
    let energy = pass.energy(stats)?;
    m.apply_gradient(&pass.gradient(stats), gamma)?;
    m.update_centroids(&pass.moments);
    m.constrain_faces();
    Ok(energy)
}

pub fn segment_two_phase(
    image: &GrayImage,
    model_config: &ModelConfig,
    evo_config: &EvolutionConfig,
) -> Result<SegmentationResult> {
    segment_two_phase_observed(image, model_config, evo_config, &mut |_, _| {})
}

/// As [`segment_two_phase`], calling `observer(t, model)` before every step
/// and once more with the final model.
pub fn segment_two_phase_observed(
    image: &GrayImage,
    model_config: &ModelConfig,
    evo_config: &EvolutionConfig,
    observer: &mut dyn FnMut(usize, &LevelSetModel),
) -> Result<SegmentationResult> {
    evo_config.validate()?;
    let start = Instant::now();
    let mut model = LevelSetModel::init_grid(model_config, image.shape())?;
    let mut stats = match otsu_region_stats(image, evo_config.polarity) {
        Some(s) => s,
        None => update_region_stats(image, &model)?,
    };
    let mut trace = Vec::with_capacity(evo_config.max_iters);
    let mut converged = false;
    for t in 0..evo_config.max_iters {
        let pass = TwoPhasePass::run(image, &model)?;
        if t > 0 && t % evo_config.stats_every == 0 {
            stats = pass.stats()?;
        }
        observer(t, &model);
        trace.push(apply_pass(&mut model, &pass, &stats, evo_config.gamma(t))?);
        if has_stalled(&trace, evo_config.energy_tol) {
            converged = true;
            break;
        }
    }
    if let Ok(s) = update_region_stats(image, &model) {
        stats = s;
    }
    let iterations_run = trace.len();
    observer(iterations_run, &model);
    let final_energy = energy_two_phase(image, &model, &stats)?;
    Ok(SegmentationResult {
        mask: model.foreground_mask(),
        final_energy,
        iterations_run,
        energy_trace: trace,
        wall_time: start.elapsed().as_secs_f64(),
        stats,
        converged,
        model,
    })
}
