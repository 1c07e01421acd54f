use serde::{Deserialize, Serialize};

use super::{check_shape, LabelMap, Mask};
use crate::error::Result;

/// `2 |A n B| / (|A| + |B|)`, 1 when both masks are empty.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    check_shape(a.shape(), b.shape())?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    Ok(dice_from_counts(inter, na, nb))
}

fn dice_from_counts(inter: usize, na: usize, nb: usize) -> f64 {
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMatching {
    /// Predicted label `r` is scored against ground-truth label `r`.
    Fixed,
    /// Predicted labels are paired one-to-one with ground-truth labels in
    /// order of descending overlap.
    HungarianGreedy,
}

/// Per-region DICE against the regions present in the ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiDice {
    /// Ground-truth labels, ascending.
    pub labels: Vec<u8>,
    pub per_region: Vec<f64>,
    /// Predicted label scored against each ground-truth label.
    pub matched: Vec<Option<u8>>,
    pub mean: f64,
}

/// Scores `predicted` against `truth`.
pub fn dice_multilabel(
    predicted: &LabelMap,
    truth: &LabelMap,
    matching: LabelMatching,
) -> Result<MultiDice> {
    check_shape(truth.shape(), predicted.shape())?;
    let mut overlap = vec![[0usize; 256]; 256];
    let mut pred_area = [0usize; 256];
    let mut truth_area = [0usize; 256];
    for (&p, &t) in predicted.data().iter().zip(truth.data()) {
        overlap[p as usize][t as usize] += 1;
        pred_area[p as usize] += 1;
        truth_area[t as usize] += 1;
    }
    let labels: Vec<u8> = (0..=255u8).filter(|&t| truth_area[t as usize] > 0).collect();

    let mut matched: Vec<Option<u8>> = vec![None; 256];
    match matching {
        LabelMatching::Fixed => {
            for &t in &labels {
                matched[t as usize] = Some(t);
            }
        }
        LabelMatching::HungarianGreedy => {
            let mut pairs: Vec<(usize, u8, u8)> = Vec::new();
            for p in 0..256 {
                for &t in &labels {
                    let o = overlap[p][t as usize];
                    if o > 0 {
                        pairs.push((o, t, p as u8));
                    }
                }
            }
            // Ties fall back to each predicted label's overlap profile, which
            // does not depend on how predicted labels are named.
            let profile = |p: u8| -> Vec<usize> {
                labels.iter().map(|&t| overlap[p as usize][t as usize]).collect()
            };
            pairs.sort_by(|a, b| {
                b.0.cmp(&a.0)
                    .then(a.1.cmp(&b.1))
                    .then_with(|| profile(b.2).cmp(&profile(a.2)))
                    .then(a.2.cmp(&b.2))
            });
            let mut used = [false; 256];
            for (_, t, p) in pairs {
                if matched[t as usize].is_none() && !used[p as usize] {
                    matched[t as usize] = Some(p);
                    used[p as usize] = true;
                }
            }
        }
    }

    let per_region: Vec<f64> = labels
        .iter()
        .map(|&t| match matched[t as usize] {
            Some(p) => dice_from_counts(
                overlap[p as usize][t as usize],
                pred_area[p as usize],
                truth_area[t as usize],
            ),
            None => 0.0,
        })
        .collect();
    let mean = if per_region.is_empty() {
        1.0
    } else {
        per_region.iter().sum::<f64>() / per_region.len() as f64
    };
    Ok(MultiDice {
        matched: labels.iter().map(|&t| matched[t as usize]).collect(),
        labels,
        per_region,
        mean,
    })
}
