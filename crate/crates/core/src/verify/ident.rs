//! Closed-set (CMC) and open-set (TPIR@FPIR) identification.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::cosine;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEntry {
    pub subject: String,
    pub features: Vec<f64>,
}

/// A probe with its true subject; `None` (or a subject absent from the
/// gallery) marks a non-mated probe.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub subject: Option<String>,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentProtocol {
    gallery: Vec<GalleryEntry>,
    probes: Vec<Probe>,
    gallery_pos: HashMap<String, usize>,
}

/// Per-probe ranking summary.
struct Ranked {
    /// Gallery position of the true subject, when mated.
    mate: Option<usize>,
    /// 1-based rank of the mate.
    rank: usize,
    top_score: f64,
    top_is_mate: bool,
}

impl IdentProtocol {
    pub fn new(gallery: Vec<GalleryEntry>, probes: Vec<Probe>) -> Result<Self> {
        if gallery.is_empty() {
            return Err(Error::EmptyInput("gallery is empty".into()));
        }
        let dim = gallery[0].features.len();
        let mut gallery_pos = HashMap::new();
        for (i, g) in gallery.iter().enumerate() {
            if gallery_pos.insert(g.subject.clone(), i).is_some() {
                return Err(Error::Protocol(format!(
                    "gallery subject `{}` appears twice",
                    g.subject
                )));
            }
            if g.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: g.features.len(),
                });
            }
        }
        if let Some(p) = probes.iter().find(|p| p.features.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.features.len(),
            });
        }
        Ok(IdentProtocol {
            gallery,
            probes,
            gallery_pos,
        })
    }

    pub fn gallery(&self) -> &[GalleryEntry] {
        &self.gallery
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    fn mate_of(&self, probe: &Probe) -> Option<usize> {
        probe
            .subject
            .as_ref()
            .and_then(|s| self.gallery_pos.get(s).copied())
    }

    /// Gallery position of each probe's true subject (`None` when non-mated).
    pub fn mates(&self) -> Vec<Option<usize>> {
        self.probes.iter().map(|p| self.mate_of(p)).collect()
    }

    /// Cosine score of every probe (rows) against every gallery entry (columns).
    pub fn score_matrix(&self) -> Result<Vec<Vec<f64>>> {
        self.probes
            .iter()
            .map(|p| {
                self.gallery
                    .iter()
                    .map(|g| cosine(&p.features, &g.features))
                    .collect()
            })
            .collect()
    }
}

fn check_scores(scores: &[Vec<f64>], mates: &[Option<usize>]) -> Result<()> {
    if scores.len() != mates.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: mates.len(),
        });
    }
    let width = scores.first().map_or(0, Vec::len);
    if width == 0 {
        return Err(Error::EmptyInput("no gallery scores".into()));
    }
    for (row, mate) in scores.iter().zip(mates) {
        if row.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                found: row.len(),
            });
        }
        if let Some(s) = row.iter().find(|s| !s.is_finite()) {
            return Err(Error::OutOfRange(format!("non-finite score {s}")));
        }
        if mate.is_some_and(|m| m >= width) {
            return Err(Error::OutOfRange(format!(
                "mate {mate:?} outside gallery of {width}"
            )));
        }
    }
    Ok(())
}

/// Ranks with ties broken by gallery order.
fn rank_probes(scores: &[Vec<f64>], mates: &[Option<usize>]) -> Vec<Ranked> {
    scores
        .iter()
        .zip(mates)
        .map(|(row, &mate)| {
            let mut top = 0;
            for (i, &s) in row.iter().enumerate().skip(1) {
                if s > row[top] {
                    top = i;
                }
            }
            let rank = mate.map_or(0, |m| {
                1 + row
                    .iter()
                    .enumerate()
                    .filter(|&(i, &s)| s > row[m] || (s == row[m] && i < m))
                    .count()
            });
            Ranked {
                mate,
                rank,
                top_score: row[top],
                top_is_mate: mate == Some(top),
            }
        })
        .collect()
}

/// Fraction of probes whose mate appears within the top `r` gallery
/// entries, for each `r` in `ranks`. Every probe must be mated.
pub fn cmc(protocol: &IdentProtocol, ranks: &[usize]) -> Result<Vec<f64>> {
    if protocol.probes.is_empty() {
        return Err(Error::EmptyInput("no probes".into()));
    }
    cmc_from_scores(&protocol.score_matrix()?, &protocol.mates(), ranks)
}

/// [`cmc`] over a precomputed probe-by-gallery score matrix, where
/// `mates[p]` is the gallery column of probe `p`'s true subject.
pub fn cmc_from_scores(
    scores: &[Vec<f64>],
    mates: &[Option<usize>],
    ranks: &[usize],
) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("no probes".into()));
    }
    if let Some(r) = ranks.iter().find(|&&r| r == 0) {
        return Err(Error::OutOfRange(format!("rank {r} must be at least 1")));
    }
    check_scores(scores, mates)?;
    let ranked = rank_probes(scores, mates);
    if let Some(i) = ranked.iter().position(|r| r.mate.is_none()) {
        return Err(Error::Protocol(format!(
            "probe {i} has no mate in the gallery (closed-set CMC)"
        )));
    }
    let n = ranked.len() as f64;
    Ok(ranks
        .iter()
        .map(|&r| ranked.iter().filter(|p| p.rank <= r).count() as f64 / n)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpirAtFpir {
    pub tpir: f64,
    /// FPIR of the lowest-threshold operating point at or below the target.
    pub achieved_fpir: f64,
    pub threshold: f64,
}

/// Open-set identification rate at each target FPIR in `(0, 1]`.
///
/// At threshold `t`, FPIR is the fraction of non-mated probes whose top
/// score is `>= t`, and TPIR the fraction of mated probes whose mate is
/// ranked first with score `>= t`. Operating points are taken at every
/// distinct top score plus `+inf`; TPIR is interpolated linearly in FPIR
/// the same way FNMR is for verification.
pub fn tpir_at_fpir(protocol: &IdentProtocol, fpir_targets: &[f64]) -> Result<Vec<TpirAtFpir>> {
    tpir_at_fpir_from_scores(&protocol.score_matrix()?, &protocol.mates(), fpir_targets)
}

/// [`tpir_at_fpir`] over a precomputed score matrix; see [`cmc_from_scores`].
pub fn tpir_at_fpir_from_scores(
    scores: &[Vec<f64>],
    mates: &[Option<usize>],
    fpir_targets: &[f64],
) -> Result<Vec<TpirAtFpir>> {
    if let Some(f) = fpir_targets.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::OutOfRange(format!("target FPIR {f} outside (0, 1]")));
    }
    check_scores(scores, mates)?;
    let ranked = rank_probes(scores, mates);
    let unmated: Vec<f64> = ranked
        .iter()
        .filter(|r| r.mate.is_none())
        .map(|r| r.top_score)
        .collect();
    let correct: Vec<f64> = ranked
        .iter()
        .filter(|r| r.mate.is_some() && r.top_is_mate)
        .map(|r| r.top_score)
        .collect();
    let mated = ranked.len() - unmated.len();
    if unmated.is_empty() {
        return Err(Error::Protocol(
            "open-set evaluation needs non-mated probes".into(),
        ));
    }
    if mated == 0 {
        return Err(Error::Protocol(
            "open-set evaluation needs mated probes".into(),
        ));
    }

    let mut thresholds: Vec<f64> = ranked.iter().map(|r| r.top_score).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let frac_at_or_above =
        |v: &[f64], t: f64, n: usize| v.iter().filter(|&&s| s >= t).count() as f64 / n as f64;
    let curve: Vec<(f64, f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            (
                t,
                frac_at_or_above(&unmated, t, unmated.len()),
                frac_at_or_above(&correct, t, mated),
            )
        })
        .collect();

    Ok(fpir_targets
        .iter()
        .map(|&target| {
            let k = curve
                .iter()
                .position(|&(_, f, _)| f <= target)
                .expect("+inf point has FPIR 0");
            let (t, f, tp) = curve[k];
            let tpir = if f == target || k == 0 {
                tp
            } else {
                let (_, f0, tp0) = curve[k - 1];
                tp0 + (f0 - target) / (f0 - f) * (tp - tp0)
            };
            TpirAtFpir {
                tpir,
                achieved_fpir: f,
                threshold: t,
            }
        })
        .collect())
}
