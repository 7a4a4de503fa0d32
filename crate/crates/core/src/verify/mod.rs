//! Cosine scoring and verification/identification metrics.
//!
//! Threshold convention used throughout: a score `s` is accepted at
//! threshold `t` iff `s >= t`. Hence FMR(t) is the fraction of impostor
//! scores `>= t` and FNMR(t) the fraction of genuine scores `< t`.

mod ident;
mod threshold;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::dot;
use crate::error::{Error, Result};

pub use ident::{
    cmc, cmc_from_scores, tpir_at_fpir, tpir_at_fpir_from_scores, GalleryEntry, IdentProtocol,
    Probe, TpirAtFpir,
};
pub use threshold::{accuracy, learn_accuracy_threshold};

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (na2, nb2) = (dot(a, a), dot(b, b));
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(Error::Normalization("cosine of a zero vector".into()));
    }
    // one rounded sqrt keeps cosine(v, v) == 1 and the result symmetric
    Ok((dot(a, b) / (na2 * nb2).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Genuine,
    Impostor,
}

/// Labeled similarity scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    scores: Vec<(f64, Label)>,
    genuine: usize,
    impostor: usize,
}

impl ScoreSet {
    pub fn new(scores: Vec<(f64, Label)>) -> Result<Self> {
        if let Some((s, _)) = scores.iter().find(|(s, _)| !s.is_finite()) {
            return Err(Error::OutOfRange(format!("non-finite score {s}")));
        }
        let genuine = scores.iter().filter(|(_, l)| *l == Label::Genuine).count();
        let impostor = scores.len() - genuine;
        Ok(ScoreSet {
            scores,
            genuine,
            impostor,
        })
    }

    /// Builds a set from separate genuine and impostor lists.
    pub fn from_parts(genuine: &[f64], impostor: &[f64]) -> Result<Self> {
        Self::new(
            genuine
                .iter()
                .map(|&s| (s, Label::Genuine))
                .chain(impostor.iter().map(|&s| (s, Label::Impostor)))
                .collect(),
        )
    }

    pub fn scores(&self) -> &[(f64, Label)] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn genuine_count(&self) -> usize {
        self.genuine
    }

    pub fn impostor_count(&self) -> usize {
        self.impostor
    }

    fn require_both(&self) -> Result<()> {
        if self.genuine == 0 {
            return Err(Error::MissingClass("genuine"));
        }
        if self.impostor == 0 {
            return Err(Error::MissingClass("impostor"));
        }
        Ok(())
    }

    /// Scores sorted ascending (ties keep input order).
    fn sorted(&self) -> Vec<(f64, Label)> {
        let mut s = self.scores.clone();
        s.sort_by(|a, b| a.0.total_cmp(&b.0));
        s
    }
}

/// Cosine scores of every unordered pair `i < j`; genuine when labels agree.
pub fn all_pair_scores(features: &[Vec<f64>], labels: &[usize]) -> Result<ScoreSet> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            found: labels.len(),
        });
    }
    let rows: Vec<Vec<(f64, Label)>> = (0..features.len())
        .into_par_iter()
        .map(|i| {
            (i + 1..features.len())
                .map(|j| {
                    let label = if labels[i] == labels[j] {
                        Label::Genuine
                    } else {
                        Label::Impostor
                    };
                    cosine(&features[i], &features[j]).map(|s| (s, label))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    ScoreSet::new(rows.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
}

impl OperatingPoint {
    /// True accept rate, `1 - FNMR`.
    pub fn tar(&self) -> f64 {
        1.0 - self.fnmr
    }
}

/// Empirical ROC: one operating point per distinct score in ascending
/// threshold order, followed by a point at `+inf` (FMR 0, FNMR 1).
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<OperatingPoint>,
}

impl RocCurve {
    pub fn points(&self) -> &[OperatingPoint] {
        &self.points
    }
}

pub fn roc(scores: &ScoreSet) -> Result<RocCurve> {
    scores.require_both()?;
    let sorted = scores.sorted();
    let (g, i) = (scores.genuine as f64, scores.impostor as f64);
    let mut points = Vec::new();
    // counts strictly below the current threshold
    let (mut gen_below, mut imp_below) = (0usize, 0usize);
    let mut k = 0;
    while k < sorted.len() {
        let t = sorted[k].0;
        points.push(OperatingPoint {
            threshold: t,
            fmr: (scores.impostor - imp_below) as f64 / i,
            fnmr: gen_below as f64 / g,
        });
        while k < sorted.len() && sorted[k].0 == t {
            match sorted[k].1 {
                Label::Genuine => gen_below += 1,
                Label::Impostor => imp_below += 1,
            }
            k += 1;
        }
    }
    points.push(OperatingPoint {
        threshold: f64::INFINITY,
        fmr: 0.0,
        fnmr: 1.0,
    });
    Ok(RocCurve { points })
}

/// Equal error rate: the FMR/FNMR crossing, linearly interpolated between
/// the two operating points that bracket it.
pub fn eer(curve: &RocCurve) -> f64 {
    let pts = &curve.points;
    let k = pts
        .iter()
        .position(|p| p.fnmr >= p.fmr)
        .expect("the +inf point always has fnmr >= fmr");
    let cur = pts[k];
    if cur.fnmr == cur.fmr || k == 0 {
        return cur.fmr;
    }
    let prev = pts[k - 1];
    let d0 = prev.fnmr - prev.fmr;
    let d1 = cur.fnmr - cur.fmr;
    let t = -d0 / (d1 - d0);
    prev.fmr + t * (cur.fmr - prev.fmr)
}

/// Trapezoidal area under TAR as a function of FMR.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[0].fmr - w[1].fmr) * (w[0].tar() + w[1].tar()) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnmrAtFmr {
    pub fnmr: f64,
    /// FMR of the lowest-threshold operating point with FMR at or below the target.
    pub achieved_fmr: f64,
    pub threshold: f64,
}

/// FNMR at a target FMR in `(0, 1]`.
///
/// Takes the lowest-threshold operating point whose FMR does not exceed the
/// target; if its FMR is below the target, FNMR is linearly interpolated in
/// FMR against the preceding point.
pub fn fnmr_at_fmr(curve: &RocCurve, fmr: f64) -> Result<FnmrAtFmr> {
    if !(fmr > 0.0 && fmr <= 1.0) {
        return Err(Error::OutOfRange(format!(
            "target FMR {fmr} outside (0, 1]"
        )));
    }
    let pts = &curve.points;
    let k = pts
        .iter()
        .position(|p| p.fmr <= fmr)
        .expect("the +inf point has fmr 0");
    let cur = pts[k];
    let fnmr = if cur.fmr == fmr || k == 0 {
        cur.fnmr
    } else {
        let prev = pts[k - 1];
        let t = (prev.fmr - fmr) / (prev.fmr - cur.fmr);
        prev.fnmr + t * (cur.fnmr - prev.fnmr)
    };
    Ok(FnmrAtFmr {
        fnmr,
        achieved_fmr: cur.fmr,
        threshold: cur.threshold,
    })
}
