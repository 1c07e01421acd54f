//! Otsu thresholding, one threshold or many.
//!
//! Class `k` of a threshold tuple `t` holds the gray levels in
//! `(t[k-1], t[k]]`. Between-class variance only depends on per-class sums, so
//! the best tuple is found exactly by dynamic programming over contiguous bin
//! ranges instead of enumerating tuples.

use super::{GrayImage, LabelMap};
use crate::error::{Error, Result};

/// Result of [`multi_otsu`].
#[derive(Clone, Debug, PartialEq)]
pub struct MultiOtsu {
    /// `R - 1` thresholds; a pixel `v` is in class `k` when
    /// `thresholds[k-1] < v <= thresholds[k]`.
    pub thresholds: Vec<u8>,
    pub labels: LabelMap,
    /// Mean gray level of each class.
    pub class_means: Vec<f64>,
    pub between_class_variance: f64,
    /// Set when the image has no intensity variation; every pixel is class 0.
    pub degenerate: bool,
}

/// Classic single-threshold Otsu. Pixels `<= t` form the lower class.
pub fn otsu_threshold(hist: &[u64]) -> usize {
    let total: f64 = hist.iter().map(|&h| h as f64).sum();
    let sum: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &h)| i as f64 * h as f64)
        .sum();
    let (mut w0, mut s0) = (0.0, 0.0);
    let (mut best_t, mut best) = (0, -1.0);
    for (t, &h) in hist.iter().enumerate().take(hist.len().saturating_sub(1)) {
        w0 += h as f64;
        s0 += t as f64 * h as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = s0 / w0;
        let m1 = (sum - s0) / w1;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best {
            best = var;
            best_t = t;
        }
    }
    best_t
}

/// Optimal `classes - 1` thresholds over an arbitrary histogram, with the
/// achieved between-class variance. Ties resolve to the smallest thresholds.
pub fn multi_otsu_thresholds(hist: &[u64], classes: usize) -> Result<(Vec<usize>, f64)> {
    let bins = hist.len();
    if classes < 2 || classes > bins {
        return Err(Error::InvalidConfig(format!(
            "multi-Otsu needs 2 <= classes <= {bins}, got {classes}"
        )));
    }
    let mut w = vec![0.0; bins + 1];
    let mut s = vec![0.0; bins + 1];
    for (i, &h) in hist.iter().enumerate() {
        w[i + 1] = w[i] + h as f64;
        s[i + 1] = s[i] + i as f64 * h as f64;
    }
    let total = w[bins];
    if total == 0.0 {
        return Err(Error::InvalidConfig("empty histogram".into()));
    }
    // Scaled class score S_k^2 / W_k of bins [a, b).
    let score = |a: usize, b: usize| {
        let wk = w[b] - w[a];
        if wk > 0.0 {
            let sk = s[b] - s[a];
            sk * sk / wk
        } else {
            0.0
        }
    };
    // best[k][e]: bins [0, e) split into k + 1 non-empty ranges.
    let mut best = vec![vec![f64::NEG_INFINITY; bins + 1]; classes];
    let mut from = vec![vec![0usize; bins + 1]; classes];
    for e in 1..=bins {
        best[0][e] = score(0, e);
    }
    for k in 1..classes {
        for e in (k + 1)..=bins {
            let mut top = f64::NEG_INFINITY;
            let mut arg = k;
            for split in k..e {
                let v = best[k - 1][split] + score(split, e);
                if v > top {
                    top = v;
                    arg = split;
                }
            }
            best[k][e] = top;
            from[k][e] = arg;
        }
    }
    let mut thresholds = vec![0usize; classes - 1];
    let mut e = bins;
    for k in (1..classes).rev() {
        let split = from[k][e];
        thresholds[k - 1] = split - 1;
        e = split;
    }
    let mean = s[bins] / total;
    let variance = best[classes - 1][bins] / total - mean * mean;
    Ok((thresholds, variance.max(0.0)))
}

/// Multi-class Otsu over the 256-bin histogram of `image`, with the resulting
/// class map.
pub fn multi_otsu(image: &GrayImage, classes: usize) -> Result<MultiOtsu> {
    if !(2..=255).contains(&classes) {
        return Err(Error::InvalidConfig(format!(
            "multi-Otsu supports 2..=255 classes, got {classes}"
        )));
    }
    let hist = image.histogram();
    let occupied = hist.iter().filter(|&&h| h > 0).count();
    if occupied <= 1 {
        let v = image.data().first().copied().unwrap_or(0);
        return Ok(MultiOtsu {
            thresholds: vec![v; classes - 1],
            labels: LabelMap::new(image.width(), image.height()),
            class_means: vec![v as f64; classes],
            between_class_variance: 0.0,
            degenerate: true,
        });
    }
    let (thresholds, variance) = multi_otsu_thresholds(&hist, classes)?;
    let thresholds: Vec<u8> = thresholds.into_iter().map(|t| t as u8).collect();
    let mut lut = [0u8; 256];
    let mut class = 0u8;
    for (v, slot) in lut.iter_mut().enumerate() {
        while (class as usize) < thresholds.len() && v > thresholds[class as usize] as usize {
            class += 1;
        }
        *slot = class;
    }
    let labels = LabelMap::from_vec(
        image.width(),
        image.height(),
        image.data().iter().map(|&v| lut[v as usize]).collect(),
    )?;
    let mut sums = vec![(0.0f64, 0.0f64); classes];
    for (v, &h) in hist.iter().enumerate() {
        let c = &mut sums[lut[v] as usize];
        c.0 += h as f64;
        c.1 += v as f64 * h as f64;
    }
    let class_means = sums
        .iter()
        .enumerate()
        .map(|(k, &(n, sum))| {
            if n > 0.0 {
                sum / n
            } else {
                let lo = if k == 0 { 0.0 } else { thresholds[k - 1] as f64 + 1.0 };
                let hi = thresholds.get(k).map_or(255.0, |&t| t as f64);
                0.5 * (lo + hi)
            }
        })
        .collect();
    Ok(MultiOtsu {
        thresholds,
        labels,
        class_means,
        between_class_variance: variance,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Between-class variance of an explicit threshold tuple, computed from
    /// class weights and means.
    fn variance_of(hist: &[u64], thresholds: &[usize]) -> f64 {
        let total: f64 = hist.iter().map(|&h| h as f64).sum();
        let mean: f64 = hist
            .iter()
            .enumerate()
            .map(|(i, &h)| i as f64 * h as f64)
            .sum::<f64>()
            / total;
        let mut bounds = vec![0usize];
        bounds.extend(thresholds.iter().map(|t| t + 1));
        bounds.push(hist.len());
        let mut var = 0.0;
        for win in bounds.windows(2) {
            let (mut n, mut s) = (0.0, 0.0);
            for (i, &h) in hist.iter().enumerate().take(win[1]).skip(win[0]) {
                n += h as f64;
                s += i as f64 * h as f64;
            }
            if n > 0.0 {
                let m = s / n;
                var += n / total * (m - mean) * (m - mean);
            }
        }
        var
    }

    fn exhaustive(hist: &[u64], classes: usize) -> (Vec<usize>, f64) {
        fn rec(
            hist: &[u64],
            left: usize,
            start: usize,
            cur: &mut Vec<usize>,
            best: &mut (Vec<usize>, f64),
        ) {
            if left == 0 {
                let v = variance_of(hist, cur);
                if v > best.1 + 1e-12 {
                    *best = (cur.clone(), v);
                }
                return;
            }
            for t in start..hist.len() - left {
                cur.push(t);
                rec(hist, left - 1, t + 1, cur, best);
                cur.pop();
            }
        }
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        rec(hist, classes - 1, 0, &mut Vec::new(), &mut best);
        best
    }

    fn random_hist(rng: &mut ChaCha8Rng, bins: usize) -> Vec<u64> {
        (0..bins).map(|_| rng.random_range(1..1000)).collect()
    }

    #[test]
    fn two_deltas_split_between_modes() {
        let img = GrayImage::from_fn(10, 10, |x, _| if x < 5 { 50 } else { 200 });
        let r = multi_otsu(&img, 2).unwrap();
        assert!(r.thresholds[0] >= 50 && r.thresholds[0] < 200);
        assert_eq!(r.labels.get(0, 0), 0);
        assert_eq!(r.labels.get(9, 0), 1);
        assert_eq!(r.class_means, vec![50.0, 200.0]);
    }

    #[test]
    fn two_classes_match_classic_otsu() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let hist = random_hist(&mut rng, 256);
            let (t, v) = multi_otsu_thresholds(&hist, 2).unwrap();
            let classic = otsu_threshold(&hist);
            assert_eq!(t[0], classic);
            assert!((v - variance_of(&hist, &[classic])).abs() < 1e-9 * v.max(1.0));
        }
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for classes in 2..=4 {
            for _ in 0..3 {
                let hist = random_hist(&mut rng, 64);
                let (t, v) = multi_otsu_thresholds(&hist, classes).unwrap();
                let (_, best) = exhaustive(&hist, classes);
                assert!((v - best).abs() <= 1e-9 * best, "{classes}: {v} vs {best}");
                assert!((variance_of(&hist, &t) - best).abs() <= 1e-9 * best);
            }
        }
        let hist = random_hist(&mut rng, 24);
        let (_, v) = multi_otsu_thresholds(&hist, 5).unwrap();
        let (_, best) = exhaustive(&hist, 5);
        assert!((v - best).abs() <= 1e-9 * best);
    }

    #[test]
    fn beats_random_tuples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hist = random_hist(&mut rng, 256);
        for classes in 2..=5 {
            let (_, v) = multi_otsu_thresholds(&hist, classes).unwrap();
            for _ in 0..1000 {
                let mut t: Vec<usize> = Vec::new();
                while t.len() < classes - 1 {
                    let c = rng.random_range(0..255);
                    if !t.contains(&c) {
                        t.push(c);
                    }
                }
                t.sort_unstable();
                assert!(v >= variance_of(&hist, &t) - 1e-9 * v);
            }
        }
    }

    #[test]
    fn constant_image_is_degenerate() {
        let img = GrayImage::filled(8, 8, 77);
        let r = multi_otsu(&img, 3).unwrap();
        assert!(r.degenerate);
        assert!(r.labels.data().iter().all(|&l| l == 0));
    }

    #[test]
    fn rejects_bad_class_counts() {
        let img = GrayImage::filled(8, 8, 1);
        assert!(multi_otsu(&img, 1).is_err());
        assert!(multi_otsu(&img, 256).is_err());
    }

    #[test]
    fn many_levels_are_separated() {
        let levels: Vec<u8> = (0..13).map(|k| 20 + 17 * k as u8).collect();
        let img = GrayImage::from_fn(13, 4, |x, _| levels[x]);
        let r = multi_otsu(&img, 13).unwrap();
        for x in 0..13 {
            assert_eq!(r.labels.get(x, 0) as usize, x);
        }
    }
}
