//! 1-D K-means.
//!
//! Lloyd sweeps until assignments settle, then single-point moves (Hartigan)
//! until no move lowers the within-cluster sum of squares. The result is
//! stable under both nearest-mean reassignment and moving any one point.

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans1d {
    /// Cluster of each input value; clusters are ordered by ascending mean.
    pub labels: Vec<usize>,
    pub means: Vec<f64>,
    /// Within-cluster sum of squares of the final partition.
    pub wcss: f64,
    /// WCSS after every sweep (Lloyd and single-point passes).
    pub wcss_trace: Vec<f64>,
}

/// Seeds at the `(k + 1/2) / K` quantiles of the sorted values.
pub fn quantile_seeds(values: &[f64], k: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    (0..k)
        .map(|c| sorted[(((c as f64 + 0.5) * n as f64 / k as f64) as usize).min(n - 1)])
        .collect()
}

/// Nearest mean, ties to the lower index.
#[inline]
pub(crate) fn nearest(v: f64, means: &[f64]) -> usize {
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for (r, &m) in means.iter().enumerate() {
        let d = (v - m) * (v - m);
        if d < dist {
            dist = d;
            best = r;
        }
    }
    best
}

pub fn wcss(values: &[f64], labels: &[usize], k: usize) -> f64 {
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (&v, &l) in values.iter().zip(labels) {
        sum[l] += v;
        count[l] += 1;
    }
    values
        .iter()
        .zip(labels)
        .map(|(&v, &l)| {
            let m = sum[l] / count[l] as f64;
            (v - m) * (v - m)
        })
        .sum()
}

/// Clusters `values` into `k` groups starting from `seeds` (quantiles when
/// `None`). Empty clusters keep their previous mean.
pub fn kmeans_1d(values: &[f64], k: usize, seeds: Option<&[f64]>) -> Result<KMeans1d> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if values.len() < k {
        return Err(Error::TooFewPolytopes {
            needed: k,
            found: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("clustering input"));
    }
    let mut means = match seeds {
        Some(s) if s.len() == k => s.to_vec(),
        Some(s) => {
            return Err(Error::InvalidConfig(format!(
                "{} seeds given for {k} clusters",
                s.len()
            )))
        }
        None => quantile_seeds(values, k),
    };
    let n = values.len();
    let mut labels: Vec<usize> = values.iter().map(|&v| nearest(v, &means)).collect();
    let mut trace = Vec::new();
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];

    let refresh = |labels: &[usize], means: &mut [f64], sum: &mut [f64], count: &mut [usize]| {
        sum.iter_mut().for_each(|s| *s = 0.0);
        count.iter_mut().for_each(|c| *c = 0);
        for (&v, &l) in values.iter().zip(labels) {
            sum[l] += v;
            count[l] += 1;
        }
        for r in 0..k {
            if count[r] > 0 {
                means[r] = sum[r] / count[r] as f64;
            }
        }
    };
    let cost = |labels: &[usize], means: &[f64]| -> f64 {
        values
            .iter()
            .zip(labels)
            .map(|(&v, &l)| (v - means[l]) * (v - means[l]))
            .sum()
    };

    for _ in 0..MAX_SWEEPS {
        refresh(&labels, &mut means, &mut sum, &mut count);
        trace.push(cost(&labels, &means));
        let mut changed = false;
        for (l, &v) in labels.iter_mut().zip(values) {
            let r = nearest(v, &means);
            // Only move when strictly closer, so ties keep the current cluster.
            if r != *l && (v - means[r]).powi(2) < (v - means[*l]).powi(2) {
                *l = r;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    refresh(&labels, &mut means, &mut sum, &mut count);

    // Single-point moves.
    let scale = values.iter().map(|v| v * v).sum::<f64>().max(1.0);
    for _ in 0..MAX_SWEEPS {
        let mut moved = false;
        for i in 0..n {
            let v = values[i];
            let a = labels[i];
            if count[a] <= 1 {
                continue;
            }
            let na = count[a] as f64;
            let loss = na / (na - 1.0) * (v - means[a]).powi(2);
            let mut best = (0.0, a);
            for b in 0..k {
                if b == a {
                    continue;
                }
                let nb = count[b] as f64;
                let gain = nb / (nb + 1.0) * (v - means[b]).powi(2) - loss;
                if gain < best.0 - 1e-12 * scale {
                    best = (gain, b);
                }
            }
            if best.1 != a {
                let b = best.1;
                sum[a] -= v;
                count[a] -= 1;
                means[a] = sum[a] / count[a] as f64;
                sum[b] += v;
                count[b] += 1;
                means[b] = sum[b] / count[b] as f64;
                labels[i] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        refresh(&labels, &mut means, &mut sum, &mut count);
        trace.push(cost(&labels, &means));
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let labels: Vec<usize> = labels.iter().map(|&l| rank[l]).collect();
    let means: Vec<f64> = order.iter().map(|&o| means[o]).collect();
    let total = cost(&labels, &means);
    Ok(KMeans1d {
        labels,
        means,
        wcss: total,
        wcss_trace: trace,
    })
}

/// Globally optimal `k`-partition of 1-D values by dynamic programming over
/// the sorted order (optimal clusters are contiguous there).
pub fn optimal_kmeans_1d(values: &[f64], k: usize) -> Result<KMeans1d> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    let n = values.len();
    if n < k {
        return Err(Error::TooFewPolytopes { needed: k, found: n });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("clustering input"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    // Centered to keep the prefix-sum cost formula well conditioned.
    let shift = sorted[n / 2];
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, &v) in sorted.iter().enumerate() {
        let c = v - shift;
        s1[i + 1] = s1[i] + c;
        s2[i + 1] = s2[i] + c * c;
    }
    // Sum of squares of sorted[a..b] about its mean.
    let cost = |a: usize, b: usize| -> f64 {
        let m = (b - a) as f64;
        let s = s1[b] - s1[a];
        (s2[b] - s2[a] - s * s / m).max(0.0)
    };
    // best[c][j]: optimal cost of the first j values in c + 1 clusters. The
    // optimal split point is monotone in j, so each layer is filled by divide
    // and conquer in O(n log n).
    let mut best = vec![vec![f64::INFINITY; n + 1]; k];
    let mut split = vec![vec![0usize; n + 1]; k];
    for j in 1..=n {
        best[0][j] = cost(0, j);
    }
    for c in 1..k {
        let (done, rest) = best.split_at_mut(c);
        let prev = &done[c - 1];
        let cur = &mut rest[0];
        let cut = &mut split[c];
        // (j range, split range), inclusive.
        let mut stack = vec![(c + 1, n, c, n - 1)];
        while let Some((lo, hi, slo, shi)) = stack.pop() {
            if lo > hi {
                continue;
            }
            let j = (lo + hi) / 2;
            let mut arg = slo;
            for i in slo..=shi.min(j - 1) {
                let v = prev[i] + cost(i, j);
                if v < cur[j] {
                    cur[j] = v;
                    arg = i;
                }
            }
            cut[j] = arg;
            if j > lo {
                stack.push((lo, j - 1, slo, arg));
            }
            stack.push((j + 1, hi, arg, shi));
        }
    }
    let mut sorted_labels = vec![0; n];
    let mut means = vec![0.0; k];
    let mut end = n;
    for c in (0..k).rev() {
        let start = if c == 0 { 0 } else { split[c][end] };
        means[c] = sorted[start..end].iter().sum::<f64>() / (end - start) as f64;
        sorted_labels[start..end].iter_mut().for_each(|l| *l = c);
        end = start;
    }
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = sorted_labels[pos];
    }
    let total = wcss(values, &labels, k);
    Ok(KMeans1d {
        labels,
        means,
        wcss: total,
        wcss_trace: vec![total],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_obvious_clusters() {
        let r = kmeans_1d(&[10.0, 12.0, 200.0, 205.0], 2, None).unwrap();
        assert_eq!(r.labels, vec![0, 0, 1, 1]);
        assert_eq!(r.means, vec![11.0, 202.5]);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let r = kmeans_1d(&[1.0, 2.0, 6.0], 1, None).unwrap();
        assert_eq!(r.labels, vec![0, 0, 0]);
        assert_eq!(r.means, vec![3.0]);
    }

    #[test]
    fn one_cluster_per_point() {
        let vals = [5.0, -1.0, 9.0, 3.0];
        let r = kmeans_1d(&vals, 4, None).unwrap();
        assert_eq!(r.wcss, 0.0);
        assert_eq!(r.labels, vec![2, 0, 3, 1]);
    }

    #[test]
    fn seeded_run_orders_clusters_by_mean() {
        let r = kmeans_1d(&[0.0, 1.0, 100.0, 101.0], 2, Some(&[100.0, 0.0])).unwrap();
        assert_eq!(r.labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            kmeans_1d(&[1.0], 2, None),
            Err(Error::TooFewPolytopes { needed: 2, found: 1 })
        ));
    }

    /// Exhaustive minimum over all labelings.
    fn brute(values: &[f64], k: usize) -> f64 {
        let n = values.len();
        let mut labels = vec![0; n];
        let mut best = f64::INFINITY;
        loop {
            if (0..k).all(|c| labels.contains(&c)) {
                best = best.min(wcss(values, &labels, k));
            }
            let mut i = 0;
            while i < n && labels[i] == k - 1 {
                labels[i] = 0;
                i += 1;
            }
            if i == n {
                return best;
            }
            labels[i] += 1;
        }
    }

    #[test]
    fn dynamic_program_matches_enumeration() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        for trial in 0..60 {
            let n = 3 + trial % 7;
            let k = 1 + trial % 3;
            let values: Vec<f64> = (0..n).map(|_| (next() * 255.0).round()).collect();
            let r = optimal_kmeans_1d(&values, k).unwrap();
            assert!((r.wcss - brute(&values, k)).abs() < 1e-9, "{values:?} k={k}");
            for w in r.means.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn trace_never_increases() {
        let vals: Vec<f64> = (0..40).map(|i| ((i * 37) % 23) as f64 + (i % 3) as f64 * 40.0).collect();
        for k in 1..6 {
            let r = kmeans_1d(&vals, k, None).unwrap();
            for w in r.wcss_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", r.wcss_trace);
            }
            assert!((r.wcss - wcss(&vals, &r.labels, k)).abs() < 1e-9);
        }
    }
}
