use super::{Label, ScoreSet};
use crate::error::{Error, Result};

/// Fraction of scores classified correctly, where `score >= threshold` means genuine.
pub fn accuracy(scores: &ScoreSet, threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let correct = scores
        .scores()
        .iter()
        .filter(|&&(s, l)| (s >= threshold) == (l == Label::Genuine))
        .count();
    correct as f64 / scores.len() as f64
}

/// Threshold with the highest accuracy on `train`.
///
/// Candidates are `-inf`, the midpoints of adjacent distinct scores, and
/// `+inf`; ties go to the lowest candidate.
pub fn learn_accuracy_threshold(train: &ScoreSet) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::EmptyInput("no training scores".into()));
    }
    let sorted = train.sorted();
    // at -inf every score is accepted: the genuine ones are correct
    let mut correct = train.genuine_count() as i64;
    let (mut best_correct, mut best) = (correct, f64::NEG_INFINITY);
    let mut k = 0;
    while k < sorted.len() {
        let s = sorted[k].0;
        // crossing s moves every score equal to s to the rejected side
        while k < sorted.len() && sorted[k].0 == s {
            correct += match sorted[k].1 {
                Label::Genuine => -1,
                Label::Impostor => 1,
            };
            k += 1;
        }
        let candidate = match sorted.get(k) {
            Some(&(next, _)) => (s + next) / 2.0,
            None => f64::INFINITY,
        };
        if correct > best_correct {
            best_correct = correct;
            best = candidate;
        }
    }
    Ok(best)
}
