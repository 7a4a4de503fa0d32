//! Seeded end-to-end experiments on synthetic data.
//!
//! [`repro_fig3`] compares verification on raw features against TDE- and
//! TPE-projected features; [`repro_cluster`] compares clustering of pooled
//! templates before and after TPE projection and under average versus
//! media pooling. Subjects are split in half: the first half trains, the
//! second half is held out for evaluation.

use serde::{Deserialize, Serialize};

use crate::cluster::{
    agglomerate, default_grid, learn_cutoff, pairwise_metrics, pr_curve, prune, PrPoint,
};
use crate::data::{generate_synthetic, Dataset, SynthConfig, TemplateLayout};
use crate::embedding::{train, EmbeddingMatrix, Method, TrainConfig};
use crate::error::{Error, Result};
use crate::pooling::{pool_dataset, PoolMode};
use crate::verify::{all_pair_scores, auc, eer, fnmr_at_fmr, roc, RocCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Config {
    pub synth: SynthConfig,
    pub train: TrainConfig,
}

impl Fig3Config {
    pub fn with_seed(seed: u64) -> Self {
        let mut cfg = Self::default();
        cfg.synth.seed = seed;
        cfg.train.seed = seed;
        cfg
    }
}

impl Default for Fig3Config {
    fn default() -> Self {
        Fig3Config {
            synth: SynthConfig {
                num_subjects: 50,
                records_per_subject: 20,
                dim: 64,
                within_class_noise: 0.3,
                media_per_subject: 1,
                media_offset: 0.0,
                nuisance_rank: 8,
                nuisance_sigma: 1.5,
                media_nuisance_sigma: 0.0,
                templates: None,
                seed: 7,
            },
            train: TrainConfig {
                target_dim: 16,
                learning_rate: 0.01,
                iterations: 20_000,
                negative_pool_size: 2000,
                seed: 7,
                method: Method::Tpe,
                margin: 0.2,
                lr_decay: None,
                batch_size: 1,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub eer: f64,
    pub auc: f64,
    pub fnmr_at_fmr_0_01: f64,
    pub fnmr_at_fmr_0_1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Report {
    pub raw: MethodSummary,
    pub tde: MethodSummary,
    pub tpe: MethodSummary,
    /// `(method name, curve)` for `raw`, `tde`, `tpe`.
    pub curves: Vec<(&'static str, RocCurve)>,
    pub tpe_matrix: EmbeddingMatrix,
    pub tde_matrix: EmbeddingMatrix,
}

/// Train and held-out halves by subject order.
pub fn split_by_subject(ds: &Dataset) -> Result<(Dataset, Dataset)> {
    let subjects: Vec<&String> = ds.subject_index().keys().collect();
    if subjects.len() < 4 {
        return Err(Error::InsufficientData(
            "need at least four subjects to split".into(),
        ));
    }
    let half = subjects.len() / 2;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (k, s) in subjects.iter().enumerate() {
        let idx = ds.subject_records(s);
        if k < half {
            train.extend_from_slice(idx)
        } else {
            test.extend_from_slice(idx)
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

fn features(ds: &Dataset, w: Option<&EmbeddingMatrix>) -> Result<Vec<Vec<f64>>> {
    ds.records()
        .iter()
        .map(|r| match w {
            Some(w) => w.project(&r.values),
            None => Ok(r.values.clone()),
        })
        .collect()
}

fn summarize(curve: &RocCurve) -> Result<MethodSummary> {
    Ok(MethodSummary {
        eer: eer(curve),
        auc: auc(curve),
        fnmr_at_fmr_0_01: fnmr_at_fmr(curve, 0.01)?.fnmr,
        fnmr_at_fmr_0_1: fnmr_at_fmr(curve, 0.1)?.fnmr,
    })
}

/// Raw vs TDE vs TPE verification on held-out subjects (all record pairs).
pub fn repro_fig3(cfg: &Fig3Config) -> Result<Fig3Report> {
    let ds = generate_synthetic(&cfg.synth)?;
    let (train_set, test_set) = split_by_subject(&ds)?;
    let tpe = train(
        &train_set,
        &TrainConfig {
            method: Method::Tpe,
            ..cfg.train.clone()
        },
    )?
    .matrix;
    let tde = train(
        &train_set,
        &TrainConfig {
            method: Method::Tde,
            ..cfg.train.clone()
        },
    )?
    .matrix;
    let labels = test_set.class_labels();
    let mut curves = Vec::new();
    for (name, w) in [("raw", None), ("tde", Some(&tde)), ("tpe", Some(&tpe))] {
        let scores = all_pair_scores(&features(&test_set, w)?, &labels)?;
        curves.push((name, roc(&scores)?));
    }
    Ok(Fig3Report {
        raw: summarize(&curves[0].1)?,
        tde: summarize(&curves[1].1)?,
        tpe: summarize(&curves[2].1)?,
        curves,
        tpe_matrix: tpe,
        tde_matrix: tde,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReproConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub min_size: usize,
}

impl ClusterReproConfig {
    pub fn with_seed(seed: u64) -> Self {
        let mut cfg = Self::default();
        cfg.synth.seed = seed;
        cfg.train.seed = seed;
        cfg
    }
}

impl Default for ClusterReproConfig {
    fn default() -> Self {
        let base = Fig3Config::default();
        ClusterReproConfig {
            synth: SynthConfig {
                num_subjects: 100,
                media_offset: 0.8,
                media_nuisance_sigma: 2.0,
                templates: Some(TemplateLayout {
                    per_subject: 10,
                    media_per_template: 3,
                    max_frames_per_media: 6,
                }),
                ..base.synth
            },
            train: base.train,
            min_size: 3,
        }
    }
}

/// Clustering outcome for one representation of the held-out templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutcome {
    pub cutoff: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub clusters: usize,
    pub pruned_clusters: usize,
    pub pr: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub true_subjects: usize,
    pub media_raw: ClusterOutcome,
    pub media_tpe: ClusterOutcome,
    pub average_raw: ClusterOutcome,
    pub average_tpe: ClusterOutcome,
}

fn cluster_outcome(
    train_set: &Dataset,
    test_set: &Dataset,
    w: Option<&EmbeddingMatrix>,
    min_size: usize,
) -> Result<ClusterOutcome> {
    let grid = default_grid();
    let cutoff = learn_cutoff(&features(train_set, w)?, &train_set.class_labels(), &grid)?;
    let test_features = features(test_set, w)?;
    let labels = test_set.class_labels();
    let assignment = agglomerate(&test_features, cutoff)?;
    let scores = pairwise_metrics(&assignment, &labels)?;
    Ok(ClusterOutcome {
        cutoff,
        f1: scores.f1,
        precision: scores.precision,
        recall: scores.recall,
        clusters: assignment.num_clusters(),
        pruned_clusters: prune(&assignment, min_size).pruned_count,
        pr: pr_curve(&test_features, &labels, &grid)?,
    })
}

/// Clusters pooled held-out templates with cutoffs learned on the training
/// templates, for raw and TPE-projected features under both poolers. TPE is
/// trained on the training subjects' individual items.
pub fn repro_cluster(cfg: &ClusterReproConfig) -> Result<ClusterReport> {
    if cfg.synth.templates.is_none() {
        return Err(Error::InvalidConfig(
            "clustering reproduction needs a template layout".into(),
        ));
    }
    let ds = generate_synthetic(&cfg.synth)?;
    let (train_items, test_items) = split_by_subject(&ds)?;
    let w = train(
        &train_items,
        &TrainConfig {
            method: Method::Tpe,
            ..cfg.train.clone()
        },
    )?
    .matrix;
    let mut outcomes = Vec::new();
    for mode in [PoolMode::Media, PoolMode::Average] {
        let train_t = pool_dataset(&train_items, mode)?;
        let test_t = pool_dataset(&test_items, mode)?;
        outcomes.push(cluster_outcome(&train_t, &test_t, None, cfg.min_size)?);
        outcomes.push(cluster_outcome(&train_t, &test_t, Some(&w), cfg.min_size)?);
    }
    let mut it = outcomes.into_iter();
    Ok(ClusterReport {
        true_subjects: test_items.num_subjects(),
        media_raw: it.next().unwrap(),
        media_tpe: it.next().unwrap(),
        average_raw: it.next().unwrap(),
        average_tpe: it.next().unwrap(),
    })
}
