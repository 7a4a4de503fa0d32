//! Seeded synthetic features with subject, media and nuisance structure.
//!
//! Each subject has a mean direction drawn uniformly on the unit sphere.
//! A record is `normalize(mean + noise + media offset + nuisance)` where
//!
//! * noise is isotropic Gaussian with expected norm `within_class_noise`,
//! * the media offset is shared by all records of one media item and has
//!   expected norm `media_offset`,
//! * nuisance lives in a `nuisance_rank`-dimensional subspace shared by all
//!   subjects and has expected norm `nuisance_sigma`. It models variation
//!   such as pose or illumination that is common to every identity and
//!   carries no identity information.
//! * a media-level nuisance offset, drawn once per media item inside the
//!   same subspace with expected norm `media_nuisance_sigma`, models capture
//!   conditions shared by all frames of one photo or video.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{normalize, Dataset, FeatureRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_subjects: usize,
    pub records_per_subject: usize,
    pub dim: usize,
    pub within_class_noise: f64,
    pub media_per_subject: usize,
    pub media_offset: f64,
    #[serde(default)]
    pub nuisance_rank: usize,
    #[serde(default)]
    pub nuisance_sigma: f64,
    #[serde(default)]
    pub media_nuisance_sigma: f64,
    /// When set, records are organised into templates instead of the
    /// round-robin media layout; `records_per_subject` and
    /// `media_per_subject` are then unused.
    #[serde(default)]
    pub templates: Option<TemplateLayout>,
    pub seed: u64,
}

/// Template-structured layout: every subject has `per_subject` templates,
/// each holding `media_per_template` media items with between 1 and
/// `max_frames_per_media` frames each (uniform, seeded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateLayout {
    pub per_subject: usize,
    pub media_per_template: usize,
    pub max_frames_per_media: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_subjects: 50,
            records_per_subject: 20,
            dim: 64,
            within_class_noise: 0.3,
            media_per_subject: 1,
            media_offset: 0.0,
            nuisance_rank: 0,
            nuisance_sigma: 0.0,
            media_nuisance_sigma: 0.0,
            templates: None,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_subjects == 0 || self.dim == 0 {
            return bad("num_subjects and dim must be at least 1");
        }
        match self.templates {
            None if self.records_per_subject == 0 || self.media_per_subject == 0 => {
                return bad("records_per_subject and media_per_subject must be at least 1")
            }
            Some(t)
                if t.per_subject == 0
                    || t.media_per_template == 0
                    || t.max_frames_per_media == 0 =>
            {
                return bad("template layout counts must be at least 1")
            }
            _ => {}
        }
        for (name, s) in [
            ("within_class_noise", self.within_class_noise),
            ("media_offset", self.media_offset),
            ("nuisance_sigma", self.nuisance_sigma),
            ("media_nuisance_sigma", self.media_nuisance_sigma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(&format!("{name} must be finite and nonnegative"));
            }
        }
        if self.nuisance_rank > self.dim {
            return bad("nuisance_rank cannot exceed dim");
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let g = gaussian(rng, dim, 1.0);
        if let Ok(u) = normalize(&g) {
            return u;
        }
    }
}

/// Orthonormal basis of a random `rank`-dimensional subspace (Gram-Schmidt).
fn random_subspace(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rank);
    while basis.len() < rank {
        let mut v = gaussian(rng, dim, 1.0);
        for _ in 0..2 {
            for b in &basis {
                let proj = super::dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        if super::l2_norm(&v) > 1e-6 {
            basis.push(normalize(&v).expect("nonzero"));
        }
    }
    basis
}

struct Sampler<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    nuisance: Vec<Vec<f64>>,
}

impl Sampler<'_> {
    fn noise_scale(&self, sigma: f64) -> f64 {
        sigma / (self.cfg.dim as f64).sqrt()
    }

    /// Gaussian in the nuisance subspace with expected norm `sigma`.
    fn add_nuisance(&mut self, sigma: f64, out: &mut [f64]) {
        if self.nuisance.is_empty() || sigma == 0.0 {
            return;
        }
        let scale = sigma / (self.nuisance.len() as f64).sqrt();
        for b in &self.nuisance {
            let z: f64 = scale * self.rng.sample::<f64, _>(StandardNormal);
            out.iter_mut().zip(b).for_each(|(x, y)| *x += z * y);
        }
    }

    fn media_offset(&mut self) -> Vec<f64> {
        let scale = self.noise_scale(self.cfg.media_offset);
        let mut offset = gaussian(&mut self.rng, self.cfg.dim, scale);
        self.add_nuisance(self.cfg.media_nuisance_sigma, &mut offset);
        offset
    }

    fn record(&mut self, mean: &[f64], offset: &[f64]) -> Result<Vec<f64>> {
        let scale = self.noise_scale(self.cfg.within_class_noise);
        let mut v = gaussian(&mut self.rng, self.cfg.dim, scale);
        for ((x, m), o) in v.iter_mut().zip(mean).zip(offset) {
            *x += m + o;
        }
        self.add_nuisance(self.cfg.nuisance_sigma, &mut v);
        normalize(&v)
    }
}

/// Generates a deterministic synthetic dataset for `cfg`.
///
/// Subjects are labeled `s0000, s0001, ...`; records of one subject are
/// contiguous.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means: Vec<Vec<f64>> = (0..cfg.num_subjects)
        .map(|_| unit_vector(&mut rng, cfg.dim))
        .collect();
    let nuisance = if cfg.nuisance_sigma > 0.0 || cfg.media_nuisance_sigma > 0.0 {
        random_subspace(&mut rng, cfg.dim, cfg.nuisance_rank)
    } else {
        Vec::new()
    };
    let mut sampler = Sampler { cfg, rng, nuisance };
    let mut records = Vec::new();

    for (s, mean) in means.iter().enumerate() {
        let subject = format!("s{s:04}");
        match cfg.templates {
            None => {
                let offsets: Vec<Vec<f64>> = (0..cfg.media_per_subject)
                    .map(|_| sampler.media_offset())
                    .collect();
                for r in 0..cfg.records_per_subject {
                    let m = r % cfg.media_per_subject;
                    records.push(FeatureRecord {
                        record_id: format!("{subject}_r{r:04}"),
                        subject: subject.clone(),
                        media_id: format!("{subject}_m{m:03}"),
                        template_id: None,
                        split: None,
                        values: sampler.record(mean, &offsets[m])?,
                    });
                }
            }
            Some(layout) => {
                for t in 0..layout.per_subject {
                    let template = format!("{subject}_t{t:03}");
                    for m in 0..layout.media_per_template {
                        let media = format!("{template}_m{m:02}");
                        let frames = sampler.rng.random_range(1..=layout.max_frames_per_media);
                        let offset = sampler.media_offset();
                        for f in 0..frames {
                            records.push(FeatureRecord {
                                record_id: format!("{media}_f{f:03}"),
                                subject: subject.clone(),
                                media_id: media.clone(),
                                template_id: Some(template.clone()),
                                split: None,
                                values: sampler.record(mean, &offset)?,
                            });
                        }
                    }
                }
            }
        }
    }
    Dataset::new(records)
}
