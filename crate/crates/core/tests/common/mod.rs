#![allow(dead_code)]

use dnls::multiphase::{best_region, RegionModel};
use dnls::{GrayImage, LevelSetModel, ModelConfig, RegionStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Grid model with every weight and bias jittered by up to `jitter`.
pub fn jittered_model(cfg: &ModelConfig, shape: (usize, usize), jitter: f64, rng: &mut impl Rng) -> LevelSetModel {
    let mut m = LevelSetModel::init_grid(cfg, shape).unwrap();
    let params: Vec<f64> = m
        .params()
        .into_iter()
        .map(|v| v + rng.random_range(-jitter..=jitter))
        .collect();
    m.set_params(&params);
    m
}

/// Relative error with the larger magnitude as the scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Vector relative error `|a - b| / max(|a|, |b|)`.
pub fn rel_err_vec(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Smooth blob image: a Gaussian bump of random center and height over a
/// random background.
pub fn smooth_phantom(width: usize, height: usize, rng: &mut impl Rng) -> GrayImage {
    let cx = rng.random_range(0.3..0.7) * width as f64;
    let cy = rng.random_range(0.3..0.7) * height as f64;
    let sigma = rng.random_range(0.15..0.3) * width.min(height) as f64;
    let base = rng.random_range(10.0..80.0);
    let peak = rng.random_range(120.0..240.0);
    GrayImage::from_fn(width, height, |x, y| {
        let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
        (base + (peak - base) * (-d2 / (2.0 * sigma * sigma)).exp()).round() as u8
    })
}

/// `f` without the negligible-polytope shortcut.
pub fn unpruned_level_set(m: &LevelSetModel, x: [f64; 2]) -> f64 {
    let mut complement = 1.0;
    for &i in m.neighborhood(x) {
        complement *= 1.0 - m.polytopes()[i].eval(x, m.steepness());
    }
    1.0 - complement
}

/// Region level sets `f_r` without the negligible-polytope shortcut.
pub fn unpruned_regions(m: &LevelSetModel, x: [f64; 2], n_regions: usize) -> Vec<f64> {
    let mut complement = vec![1.0; n_regions];
    for &i in m.neighborhood(x) {
        let p = &m.polytopes()[i];
        complement[p.label] *= 1.0 - p.eval(x, m.steepness());
    }
    complement.into_iter().map(|c| 1.0 - c).collect()
}

/// Two-phase energy summed directly over pixels.
pub fn oracle_two_phase_energy(image: &GrayImage, m: &LevelSetModel, s: &RegionStats) -> f64 {
    let mut e = 0.0;
    for y in 0..image.height() {
        for x in 0..image.width() {
            let v = image.get(x, y) as f64;
            let f = unpruned_level_set(m, [x as f64, y as f64]);
            e += (v - s.c1).powi(2) * f + (v - s.c2).powi(2) * (1.0 - f);
        }
    }
    e
}

/// Deformation energy summed directly over pixels.
pub fn oracle_deformation(image: &GrayImage, m: &LevelSetModel, regions: &RegionModel) -> f64 {
    let mut e = 0.0;
    for y in 0..image.height() {
        for x in 0..image.width() {
            let f = unpruned_regions(m, [x as f64, y as f64], regions.n_regions);
            let rb = best_region(image.get(x, y) as f64, &regions.region_means);
            for (r, v) in f.iter().enumerate() {
                e += if r == rb { -v } else { *v };
            }
        }
    }
    e
}

/// Central differences of `energy` over every parameter of `m`.
pub fn fd_gradient(m: &LevelSetModel, h: f64, energy: impl Fn(&LevelSetModel) -> f64) -> Vec<f64> {
    let base = m.params();
    let mut probe = m.clone();
    (0..base.len())
        .map(|k| {
            let mut p = base.clone();
            p[k] = base[k] + h;
            probe.set_params(&p);
            let up = energy(&probe);
            p[k] = base[k] - h;
            probe.set_params(&p);
            let down = energy(&probe);
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Random region labels on `m` with the given means.
pub fn random_regions(m: &mut LevelSetModel, means: &[f64], rng: &mut impl Rng) -> RegionModel {
    let labels: Vec<usize> = (0..m.len()).map(|_| rng.random_range(0..means.len())).collect();
    m.set_labels(&labels);
    RegionModel {
        n_regions: means.len(),
        region_means: means.to_vec(),
        polytope_labels: labels,
    }
}
