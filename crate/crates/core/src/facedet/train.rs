//! Averaged-perceptron trainer for a single window filter.
//!
//! The returned filter classifies a window as a face when its score is
//! positive: the bias is minus the F1-maximizing threshold over training scores.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DetectError, LinearFilter, FILTER_LEN, WINDOW_CELLS};
use crate::hog;
use crate::imgio::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1.0,
            seed: 0,
        }
    }
}

/// Features of the centered 10x10-cell window of a training image.
pub fn window_features(img: &GrayImage) -> Result<Vec<f64>, DetectError> {
    let feat = hog::extract_features(img)?;
    let (cw, ch) = (feat.cells_w(), feat.cells_h());
    if cw < WINDOW_CELLS || ch < WINDOW_CELLS {
        return Err(DetectError::WindowTooLarge {
            cells_w: cw,
            cells_h: ch,
        });
    }
    Ok(feat.window((cw - WINDOW_CELLS) / 2, (ch - WINDOW_CELLS) / 2, WINDOW_CELLS))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn train_filter(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    config: &TrainConfig,
) -> Result<LinearFilter, DetectError> {
    if positives.is_empty() {
        return Err(DetectError::EmptyClass("positive"));
    }
    if negatives.is_empty() {
        return Err(DetectError::EmptyClass("negative"));
    }
    if let Some(bad) = positives.iter().chain(negatives).find(|x| x.len() != FILTER_LEN) {
        return Err(DetectError::ExampleShape { found: bad.len() });
    }

    let examples: Vec<(&[f64], f64)> = positives
        .iter()
        .map(|x| (x.as_slice(), 1.0))
        .chain(negatives.iter().map(|x| (x.as_slice(), -1.0)))
        .collect();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut w = vec![0.0; FILTER_LEN];
    let mut b = 0.0;
    let mut w_sum = vec![0.0; FILTER_LEN];
    let mut steps = 0usize;
    for _ in 0..config.epochs.max(1) {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, y) = examples[i];
            if y * (dot(&w, x) + b) <= 0.0 {
                for (wi, xi) in w.iter_mut().zip(x) {
                    *wi += config.learning_rate * y * xi;
                }
                b += config.learning_rate * y;
            }
            for (s, wi) in w_sum.iter_mut().zip(&w) {
                *s += wi;
            }
            steps += 1;
        }
    }
    let avg: Vec<f64> = w_sum.iter().map(|s| s / steps as f64).collect();

    let mut scored: Vec<(f64, bool)> = examples
        .iter()
        .map(|&(x, y)| (dot(&avg, x), y > 0.0))
        .collect();
    let threshold = best_f1_threshold(&mut scored);
    LinearFilter::new(avg, -threshold)
}

/// Threshold `t` (positive iff score > t) maximizing F1; ties prefer the
/// widest gap between neighbouring scores, then the lower threshold.
fn best_f1_threshold(scored: &mut [(f64, bool)]) -> f64 {
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total_pos = scored.iter().filter(|s| s.1).count();
    let f1 = |tp: usize, predicted: usize| {
        if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (predicted + total_pos) as f64
        }
    };
    let n = scored.len();
    // threshold below everything: all predicted positive
    let mut best = (f1(total_pos, n), 0.0, scored[0].0 - 1.0);
    let mut pos_at_or_below = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && scored[j].0 == scored[i].0 {
            if scored[j].1 {
                pos_at_or_below += 1;
            }
            j += 1;
        }
        let (t, gap) = if j < n {
            (0.5 * (scored[i].0 + scored[j].0), scored[j].0 - scored[i].0)
        } else {
            (scored[i].0 + 1.0, 0.0)
        };
        let cand = (f1(total_pos - pos_at_or_below, n - j), gap, t);
        if cand.0 > best.0 || (cand.0 == best.0 && cand.1 > best.1) {
            best = cand;
        }
        i = j;
    }
    best.2
}

/// Fraction of examples on the correct side of zero.
pub fn training_accuracy(filter: &LinearFilter, positives: &[Vec<f64>], negatives: &[Vec<f64>]) -> f64 {
    let correct = positives.iter().filter(|x| filter.score_window(x) > 0.0).count()
        + negatives.iter().filter(|x| filter.score_window(x) <= 0.0).count();
    correct as f64 / (positives.len() + negatives.len()) as f64
}
