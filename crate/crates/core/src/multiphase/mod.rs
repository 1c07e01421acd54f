//! Multiphase segmentation of `R` regions.
//!
//! Every polytope carries a region label. The level set of region `r` is
//! `f_r = 1 - prod (1 - g_i)` over the polytopes labeled `r`. Labels come from
//! 1-D K-means on the polytopes' mean intensities; geometry then descends the
//! deformation energy, which at each pixel rewards the region whose mean is
//! closest to the pixel intensity and penalizes every other region.

mod kmeans;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans_1d, optimal_kmeans_1d, quantile_seeds, wcss, KMeans1d};

use crate::accumulate::{over_row_bands, sum_vectors};
use crate::error::{Error, Result};
use crate::geometry::{exclusive_products, LevelSetModel, ModelConfig, PixelEval, Point};
use crate::imaging::{check_shape, multi_otsu, GrayImage, LabelMap};
use crate::twophase::{has_stalled, EvolutionConfig};

/// Support below which a polytope has no meaningful mean intensity.
pub const MIN_SUPPORT: f64 = 1e-6;

/// Region label per polytope plus the region means, ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionModel {
    pub n_regions: usize,
    pub region_means: Vec<f64>,
    pub polytope_labels: Vec<usize>,
}

/// Soft mean intensity `p_i = sum I g_i / sum g_i` of every polytope, over
/// the pixels whose neighborhood contains it.
#[derive(Clone, Debug, PartialEq)]
pub struct PolytopeIntensity {
    pub values: Vec<f64>,
    /// `sum g_i`.
    pub support: Vec<f64>,
    pub centroids: Vec<Point>,
}

impl PolytopeIntensity {
    pub fn is_valid(&self, i: usize) -> bool {
        self.support[i] > MIN_SUPPORT
    }

    pub fn valid_count(&self) -> usize {
        (0..self.values.len()).filter(|&i| self.is_valid(i)).count()
    }
}

pub fn polytope_mean_intensities(image: &GrayImage, m: &LevelSetModel) -> Result<PolytopeIntensity> {
    check_shape(m.image_shape(), image.shape())?;
    let (height, width) = image.shape();
    let n = m.len();
    let parts = over_row_bands(
        height,
        || vec![0.0; 2 * n],
        |rows, acc| {
            let mut pe = PixelEval::default();
            for y in rows {
                for x in 0..width {
                    m.eval_pixel([x as f64, y as f64], &mut pe);
                    let v = image.get(x, y) as f64;
                    for (&i, &g) in pe.active.iter().zip(&pe.g) {
                        acc[2 * i] += g;
                        acc[2 * i + 1] += g * v;
                    }
                }
            }
        },
    );
    let sums = sum_vectors(parts);
    let mut values = Vec::with_capacity(n);
    let mut support = Vec::with_capacity(n);
    for i in 0..n {
        let (w, s) = (sums[2 * i], sums[2 * i + 1]);
        support.push(w);
        values.push(if w > MIN_SUPPORT { s / w } else { 0.0 });
    }
    Ok(PolytopeIntensity {
        values,
        support,
        centroids: m.polytopes().iter().map(|p| p.centroid).collect(),
    })
}

/// Index of the valid polytope nearest to `i` by centroid, ties to the lower
/// index.
fn nearest_valid(p: &PolytopeIntensity, i: usize) -> Option<usize> {
    let c = p.centroids[i];
    (0..p.values.len())
        .filter(|&k| p.is_valid(k))
        .map(|k| {
            let d = p.centroids[k];
            ((d[0] - c[0]).powi(2) + (d[1] - c[1]).powi(2), k)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, k)| k)
}

/// Clusters valid polytope intensities into `n_regions` labels. Invalid
/// polytopes inherit the label of the nearest valid one.
///
/// The partition is the global 1-D optimum. A run of Lloyd plus single-point
/// moves seeded from the previous means replaces it when equally good, so
/// labels stay put across relabelings whenever the optimum is not unique.
pub fn assign_labels_kmeans(
    p: &PolytopeIntensity,
    n_regions: usize,
    previous: Option<&RegionModel>,
) -> Result<RegionModel> {
    if n_regions == 0 {
        return Err(Error::InvalidConfig("at least one region is required".into()));
    }
    let valid: Vec<usize> = (0..p.values.len()).filter(|&i| p.is_valid(i)).collect();
    if valid.len() < n_regions {
        return Err(Error::TooFewPolytopes {
            needed: n_regions,
            found: valid.len(),
        });
    }
    let values: Vec<f64> = valid.iter().map(|&i| p.values[i]).collect();
    let mut best = optimal_kmeans_1d(&values, n_regions)?;
    if let Some(prev) = previous.filter(|r| r.region_means.len() == n_regions) {
        let warm = kmeans_1d(&values, n_regions, Some(&prev.region_means))?;
        if warm.wcss <= best.wcss * (1.0 + 1e-12) {
            best = warm;
        }
    }
    let mut labels = vec![0; p.values.len()];
    for (k, &i) in valid.iter().enumerate() {
        labels[i] = best.labels[k];
    }
    for i in 0..p.values.len() {
        if !p.is_valid(i) {
            labels[i] = labels[nearest_valid(p, i).expect("at least one valid")];
        }
    }
    Ok(RegionModel {
        n_regions,
        region_means: best.means,
        polytope_labels: labels,
    })
}

/// Region whose mean is closest to `intensity`, ties to the lower index.
pub fn best_region(intensity: f64, means: &[f64]) -> usize {
    kmeans::nearest(intensity, means)
}

/// Per-label products `prod (1 - g)` of the active polytopes at one pixel.
fn label_products(pe: &PixelEval, labels: &[usize], out: &mut Vec<(usize, f64)>) {
    out.clear();
    for (&i, &g) in pe.active.iter().zip(&pe.g) {
        let l = labels[i];
        match out.iter_mut().find(|(r, _)| *r == l) {
            Some((_, prod)) => *prod *= 1.0 - g,
            None => out.push((l, 1.0 - g)),
        }
    }
}

/// Pixel term `-f_rb + sum_{r != rb} f_r`; absent regions contribute 0.
fn pixel_deformation(products: &[(usize, f64)], rb: usize) -> f64 {
    products
        .iter()
        .map(|&(r, prod)| if r == rb { -(1.0 - prod) } else { 1.0 - prod })
        .sum()
}

#[derive(Clone, Debug)]
pub struct DeformationGradient {
    pub energy: f64,
    /// Same layout as [`LevelSetModel::params`].
    pub grad: Vec<f64>,
    /// `[sum g, sum g x, sum g y]` per polytope.
    pub moments: Vec<[f64; 3]>,
}

struct Partial {
    energy: f64,
    grad: Vec<f64>,
    moments: Vec<[f64; 3]>,
}

fn check_regions(m: &LevelSetModel, regions: &RegionModel) -> Result<()> {
    if regions.polytope_labels.len() != m.len() {
        return Err(Error::ShapeMismatch {
            expected: (m.len(), 1),
            actual: (regions.polytope_labels.len(), 1),
        });
    }
    if regions.region_means.len() != regions.n_regions
        || regions.polytope_labels.iter().any(|&l| l >= regions.n_regions)
    {
        return Err(Error::InvalidConfig("region labels out of range".into()));
    }
    Ok(())
}

pub fn deformation_energy(image: &GrayImage, m: &LevelSetModel, regions: &RegionModel) -> Result<f64> {
    check_shape(m.image_shape(), image.shape())?;
    check_regions(m, regions)?;
    let (height, width) = image.shape();
    let parts = over_row_bands(
        height,
        || 0.0,
        |rows, acc| {
            let mut pe = PixelEval::default();
            let mut prods = Vec::new();
            for y in rows {
                for x in 0..width {
                    m.eval_pixel([x as f64, y as f64], &mut pe);
                    label_products(&pe, &regions.polytope_labels, &mut prods);
                    let rb = best_region(image.get(x, y) as f64, &regions.region_means);
                    *acc += pixel_deformation(&prods, rb);
                }
            }
        },
    );
    Ok(parts.into_iter().sum())
}

pub fn deformation_gradient(
    image: &GrayImage,
    m: &LevelSetModel,
    regions: &RegionModel,
) -> Result<DeformationGradient> {
    check_shape(m.image_shape(), image.shape())?;
    check_regions(m, regions)?;
    let (height, width) = image.shape();
    let n = m.len();
    let mh = m.m_halfspaces();
    let labels = &regions.polytope_labels;
    let parts = over_row_bands(
        height,
        || Partial {
            energy: 0.0,
            grad: vec![0.0; m.param_count()],
            moments: vec![[0.0; 3]; n],
        },
        |rows, acc| {
            let mut pe = PixelEval::default();
            let mut prods = Vec::new();
            let mut groups = Vec::new();
            let mut excl = Vec::new();
            for y in rows {
                for x in 0..width {
                    let p = [x as f64, y as f64];
                    m.eval_pixel(p, &mut pe);
                    label_products(&pe, labels, &mut prods);
                    let rb = best_region(image.get(x, y) as f64, &regions.region_means);
                    acc.energy += pixel_deformation(&prods, rb);
                    groups.clear();
                    groups.extend(pe.active.iter().map(|&i| labels[i]));
                    exclusive_products(&pe.g, Some(&groups), &mut excl);
                    for (a, &i) in pe.active.iter().enumerate() {
                        let g = pe.g[a];
                        let mom = &mut acc.moments[i];
                        mom[0] += g;
                        mom[1] += g * p[0];
                        mom[2] += g * p[1];
                        let sign = if groups[a] == rb { -1.0 } else { 1.0 };
                        let coef = sign * excl[a] * g * pe.gains[a];
                        if coef == 0.0 {
                            continue;
                        }
                        let u = pe.local[a];
                        let tails = &pe.tails[a * mh..(a + 1) * mh];
                        let grad = &mut acc.grad[i * mh * 3..(i + 1) * mh * 3];
                        for (j, &t) in tails.iter().enumerate() {
                            let c = coef * t;
                            grad[3 * j] += c * u[0];
                            grad[3 * j + 1] += c * u[1];
                            grad[3 * j + 2] += c;
                        }
                    }
                }
            }
        },
    );
    let energy = parts.iter().map(|p| p.energy).sum::<f64>();
    let mut moments = vec![[0.0; 3]; n];
    for part in &parts {
        for (t, p) in moments.iter_mut().zip(&part.moments) {
            t[0] += p[0];
            t[1] += p[1];
            t[2] += p[2];
        }
    }
    let grad = sum_vectors(parts.into_iter().map(|p| p.grad));
    if !energy.is_finite() {
        return Err(Error::NonFinite("energy"));
    }
    Ok(DeformationGradient {
        energy,
        grad,
        moments,
    })
}

/// One descent step on the deformation energy; returns the energy before it.
pub fn gradient_step_deformation(
    image: &GrayImage,
    m: &mut LevelSetModel,
    regions: &RegionModel,
    gamma: f64,
) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidConfig("gamma must be positive".into()));
    }
    let step = deformation_gradient(image, m, regions)?;
    m.apply_gradient(&step.grad, gamma)?;
    m.update_centroids(&step.moments);
    m.constrain_faces();
    Ok(step.energy)
}

/// `argmax_r f_r` per pixel with ties to the lower label. Pixels where every
/// region level set is below 1/2 take the region with the closest mean.
pub fn extract_label_map(image: &GrayImage, m: &LevelSetModel, region_means: &[f64]) -> Result<LabelMap> {
    check_shape(m.image_shape(), image.shape())?;
    if region_means.is_empty() || region_means.len() > 256 {
        return Err(Error::InvalidConfig("between 1 and 256 regions are supported".into()));
    }
    let labels = m.labels();
    if labels.iter().any(|&l| l >= region_means.len()) {
        return Err(Error::InvalidConfig("polytope label out of range".into()));
    }
    let (height, width) = image.shape();
    let parts = over_row_bands(height, Vec::new, |rows, acc: &mut Vec<u8>| {
        let mut pe = PixelEval::default();
        let mut prods = Vec::new();
        for y in rows {
            for x in 0..width {
                m.eval_pixel([x as f64, y as f64], &mut pe);
                label_products(&pe, &labels, &mut prods);
                let mut best: Option<(usize, f64)> = None;
                for &(r, prod) in &prods {
                    let f = 1.0 - prod;
                    if best.is_none_or(|(br, bf)| f > bf || (f == bf && r < br)) {
                        best = Some((r, f));
                    }
                }
                let label = match best {
                    Some((r, f)) if f >= 0.5 => r,
                    _ => best_region(image.get(x, y) as f64, region_means),
                };
                acc.push(label as u8);
            }
        }
    });
    LabelMap::from_vec(width, height, parts.concat())
}

/// How polytope labels are chosen before the first step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// K-means on the initial polytope intensities.
    GridKmeans,
    /// Majority multi-Otsu class of each polytope's home cell.
    MultiOtsu,
    /// Uniformly random labels.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiphaseConfig {
    pub n_regions: usize,
    /// Iterations between relabelings.
    pub relabel_every: usize,
    pub init: InitStrategy,
    /// Seed of [`InitStrategy::Random`].
    pub seed: u64,
}

impl MultiphaseConfig {
    pub fn new(n_regions: usize) -> Self {
        Self {
            n_regions,
            relabel_every: 5,
            init: InitStrategy::GridKmeans,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=256).contains(&self.n_regions) {
            return Err(Error::InvalidConfig(format!(
                "region count must lie in 2..=256, got {}",
                self.n_regions
            )));
        }
        if self.relabel_every == 0 {
            return Err(Error::InvalidConfig("relabel_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MultiphaseResult {
    pub label_map: LabelMap,
    pub regions: RegionModel,
    pub iterations_run: usize,
    /// Deformation energy before each step.
    pub energy_trace: Vec<f64>,
    /// Seconds.
    pub wall_time: f64,
    pub converged: bool,
    pub model: LevelSetModel,
}

/// Means of the polytope intensities grouped by label; empty groups take the
/// image mean.
fn group_means(p: &PolytopeIntensity, labels: &[usize], n_regions: usize, fallback: f64) -> Vec<f64> {
    let mut sum = vec![0.0; n_regions];
    let mut count = vec![0usize; n_regions];
    for (i, &l) in labels.iter().enumerate() {
        if p.is_valid(i) {
            sum[l] += p.values[i];
            count[l] += 1;
        }
    }
    (0..n_regions)
        .map(|r| if count[r] > 0 { sum[r] / count[r] as f64 } else { fallback })
        .collect()
}

fn initial_regions(image: &GrayImage, m: &LevelSetModel, cfg: &MultiphaseConfig) -> Result<RegionModel> {
    let n_regions = cfg.n_regions;
    match cfg.init {
        InitStrategy::GridKmeans => {
            assign_labels_kmeans(&polytope_mean_intensities(image, m)?, n_regions, None)
        }
        InitStrategy::MultiOtsu => {
            let otsu = multi_otsu(image, n_regions)?;
            let grid = m.grid();
            let mut votes = vec![vec![0usize; n_regions]; grid.cells()];
            let (height, width) = image.shape();
            for y in 0..height {
                for x in 0..width {
                    let (r, c) = grid.cell_of([x as f64, y as f64]);
                    votes[r * grid.cols + c][otsu.labels.get(x, y) as usize] += 1;
                }
            }
            let labels = (0..m.len())
                .map(|i| {
                    let v = &votes[m.home_cell(i)];
                    // First maximum, so ties go to the lower class.
                    (0..n_regions).fold(0, |b, r| if v[r] > v[b] { r } else { b })
                })
                .collect();
            Ok(RegionModel {
                n_regions,
                region_means: otsu.class_means,
                polytope_labels: labels,
            })
        }
        InitStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let labels: Vec<usize> = (0..m.len()).map(|_| rng.random_range(0..n_regions)).collect();
            let p = polytope_mean_intensities(image, m)?;
            Ok(RegionModel {
                n_regions,
                region_means: group_means(&p, &labels, n_regions, image.mean()),
                polytope_labels: labels,
            })
        }
    }
}

pub fn segment_multiphase(
    image: &GrayImage,
    model_config: &ModelConfig,
    evo_config: &EvolutionConfig,
    mp_config: &MultiphaseConfig,
) -> Result<MultiphaseResult> {
    segment_multiphase_observed(image, model_config, evo_config, mp_config, &mut |_, _, _| {})
}

/// As [`segment_multiphase`], calling `observer(t, model, regions)` before
/// every step and once more with the final state.
pub fn segment_multiphase_observed(
    image: &GrayImage,
    model_config: &ModelConfig,
    evo_config: &EvolutionConfig,
    mp_config: &MultiphaseConfig,
    observer: &mut dyn FnMut(usize, &LevelSetModel, &RegionModel),
) -> Result<MultiphaseResult> {
    evo_config.validate()?;
    mp_config.validate()?;
    let start = Instant::now();
    let mut model = LevelSetModel::init_grid(model_config, image.shape())?;
    if model.len() < mp_config.n_regions {
        return Err(Error::TooFewPolytopes {
            needed: mp_config.n_regions,
            found: model.len(),
        });
    }
    let mut regions = initial_regions(image, &model, mp_config)?;
    model.set_labels(&regions.polytope_labels);
    let mut trace = Vec::with_capacity(evo_config.max_iters);
    let mut converged = false;
    for t in 0..evo_config.max_iters {
        if t > 0 && t % mp_config.relabel_every == 0 {
            let p = polytope_mean_intensities(image, &model)?;
            regions = assign_labels_kmeans(&p, mp_config.n_regions, Some(&regions))?;
            model.set_labels(&regions.polytope_labels);
        }
        observer(t, &model, &regions);
        let energy = gradient_step_deformation(image, &mut model, &regions, evo_config.gamma(t))?;
        trace.push(energy);
        if has_stalled(&trace, evo_config.energy_tol) {
            converged = true;
            break;
        }
    }
    let iterations_run = trace.len();
    observer(iterations_run, &model, &regions);
    let label_map = extract_label_map(image, &model, &regions.region_means)?;
    Ok(MultiphaseResult {
        label_map,
        regions,
        iterations_run,
        energy_trace: trace,
        wall_time: start.elapsed().as_secs_f64(),
        converged,
        model,
    })
}
