//! Independent reference implementations and the checks shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]
// `!(x < bound)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tpe_core::cluster::{agglomerate, linkage, pairwise_metrics, ClusterAssignment};
use tpe_core::data::{generate_synthetic, Dataset, FeatureRecord, SynthConfig};
use tpe_core::embedding::{
    pca_init, probability_from_scores, tde_gradient_vectors, tpe_gradient_vectors,
    triplet_probability_vectors, EmbeddingMatrix,
};
use tpe_core::pooling::{pool_average, pool_media, Template, TemplateItem};
use tpe_core::verify::{
    auc, cmc_from_scores, eer, fnmr_at_fmr, roc, tpir_at_fpir_from_scores, ScoreSet,
};

/// `Ok(summary)` on success, `Err(reason)` on failure.
pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

// ---------------------------------------------------------------- embedding

/// `W v` with explicit loops over a row-major `rows x cols` buffer.
pub fn mat_vec(w: &[f64], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows];
    for r in 0..rows {
        for c in 0..cols {
            out[r] += w[r * cols + c] * v[c];
        }
    }
    out
}

/// `(W a) . (W b)` as a triple loop.
pub fn naive_similarity(w: &[f64], rows: usize, cols: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for r in 0..rows {
        let (mut wa, mut wb) = (0.0, 0.0);
        for c in 0..cols {
            wa += w[r * cols + c] * a[c];
            wb += w[r * cols + c] * b[c];
        }
        s += wa * wb;
    }
    s
}

/// `-ln p` for one triplet, `p = e^{s_ij} / (e^{s_ij} + e^{s_ik})`.
pub fn naive_nll(w: &[f64], rows: usize, cols: usize, a: &[f64], p: &[f64], n: &[f64]) -> f64 {
    let s_ij = naive_similarity(w, rows, cols, a, p);
    let s_ik = naive_similarity(w, rows, cols, a, n);
    let m = s_ij.max(s_ik);
    -(s_ij - m) + ((s_ij - m).exp() + (s_ik - m).exp()).ln()
}

/// Hinge `max(0, alpha + |W(a-p)|^2 - |W(a-n)|^2)`.
pub fn naive_hinge(
    w: &[f64],
    rows: usize,
    cols: usize,
    alpha: f64,
    a: &[f64],
    p: &[f64],
    n: &[f64],
) -> f64 {
    let sq = |x: &[f64], y: &[f64]| {
        let d: Vec<f64> = x.iter().zip(y).map(|(u, v)| u - v).collect();
        mat_vec(w, rows, cols, &d)
            .iter()
            .map(|z| z * z)
            .sum::<f64>()
    };
    (alpha + sq(a, p) - sq(a, n)).max(0.0)
}

/// Central finite differences of `f` at `w`.
pub fn finite_difference(w: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut x = w.to_vec();
    (0..w.len())
        .map(|k| {
            let orig = x[k];
            x[k] = orig + h;
            let up = f(&x);
            x[k] = orig - h;
            let down = f(&x);
            x[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` in Frobenius norm (0 when both vanish).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Gradients of both objectives against central differences (step 1e-6)
/// on random 8x16 matrices and triplets.
pub fn check_gradients(cases: usize, seed: u64) -> Check {
    let (rows, cols, h) = (8, 16, 1e-6);
    let mut r = rng(seed);
    let (mut worst_tpe, mut worst_tde, mut active) = (0.0f64, 0.0f64, 0usize);
    for case in 0..cases {
        let wdata: Vec<f64> = gaussian(&mut r, rows * cols)
            .iter()
            .map(|x| 0.4 * x)
            .collect();
        let w = EmbeddingMatrix::new(rows, cols, wdata.clone()).map_err(|e| e.to_string())?;
        let a = unit(&gaussian(&mut r, cols));
        let p = unit(&gaussian(&mut r, cols));
        let n = unit(&gaussian(&mut r, cols));

        let g = tpe_gradient_vectors(&w, &a, &p, &n);
        let fd = finite_difference(&wdata, h, |x| naive_nll(x, rows, cols, &a, &p, &n));
        let e = relative_error(g.as_slice(), &fd);
        worst_tpe = worst_tpe.max(e);
        if !(e < 1e-4) {
            return Err(format!("case {case}: TPE gradient relative error {e:e}"));
        }

        // keep clear of the hinge kink, where the loss is not differentiable
        let alpha: f64 = r.random_range(0.0..2.0);
        let margin = alpha + naive_hinge_raw(&wdata, rows, cols, &a, &p, &n);
        if margin.abs() < 1e-3 {
            continue;
        }
        if margin > 0.0 {
            active += 1;
        }
        let g = tde_gradient_vectors(&w, alpha, &a, &p, &n);
        let fd = finite_difference(&wdata, h, |x| naive_hinge(x, rows, cols, alpha, &a, &p, &n));
        let e = relative_error(g.as_slice(), &fd);
        worst_tde = worst_tde.max(e);
        if !(e < 1e-4) {
            return Err(format!("case {case}: TDE gradient relative error {e:e}"));
        }
    }
    Ok(format!(
        "{cases} cases, max rel err TPE {worst_tpe:.1e}, TDE {worst_tde:.1e} ({active} active hinges)"
    ))
}

fn naive_hinge_raw(w: &[f64], rows: usize, cols: usize, a: &[f64], p: &[f64], n: &[f64]) -> f64 {
    let sq = |x: &[f64], y: &[f64]| {
        let d: Vec<f64> = x.iter().zip(y).map(|(u, v)| u - v).collect();
        mat_vec(w, rows, cols, &d)
            .iter()
            .map(|z| z * z)
            .sum::<f64>()
    };
    sq(a, p) - sq(a, n)
}

/// Range, complement and symmetry identities of the triplet probability.
pub fn check_probability_identities(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for case in 0..cases {
        let rows = r.random_range(1..=8);
        let cols = r.random_range(rows..=12);
        // scales up to 1e3 push some cases deep into saturation
        let scale = 10f64.powf(r.random_range(-2.0..3.0));
        let wdata: Vec<f64> = gaussian(&mut r, rows * cols)
            .iter()
            .map(|x| scale * x)
            .collect();
        let w = EmbeddingMatrix::new(rows, cols, wdata).map_err(|e| e.to_string())?;
        let a = gaussian(&mut r, cols);
        let p = gaussian(&mut r, cols);
        let n = gaussian(&mut r, cols);

        let p_ijk = triplet_probability_vectors(&w, &a, &p, &n);
        let p_ikj = triplet_probability_vectors(&w, &a, &n, &p);
        if !(p_ijk > 0.0 && p_ijk < 1.0) {
            return Err(format!("case {case}: p = {p_ijk} outside (0, 1)"));
        }
        if (p_ijk + p_ikj - 1.0).abs() > 1e-12 {
            return Err(format!("case {case}: p_ijk + p_ikj = {}", p_ijk + p_ikj));
        }
        let tie = triplet_probability_vectors(&w, &a, &p, &p);
        let s: f64 = r.random_range(-1e6..1e6);
        if tie != 0.5 || probability_from_scores(s, s) != 0.5 {
            return Err(format!("case {case}: equal scores give {tie}"));
        }
    }
    Ok(format!("{cases} cases"))
}

// ------------------------------------------------------------- verification

/// `(threshold, fmr, fnmr)` at every distinct score and `+inf`, by direct counting.
pub fn naive_roc(genuine: &[f64], impostor: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut thresholds: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    thresholds
        .iter()
        .map(|&t| {
            let fm = impostor.iter().filter(|&&s| s >= t).count();
            let fnm = genuine.iter().filter(|&&s| s < t).count();
            (
                t,
                fm as f64 / impostor.len() as f64,
                fnm as f64 / genuine.len() as f64,
            )
        })
        .collect()
}

/// Crossing of the piecewise-linear FMR and FNMR traces.
pub fn naive_eer(points: &[(f64, f64, f64)]) -> f64 {
    if points[0].2 >= points[0].1 {
        return points[0].1;
    }
    for w in points.windows(2) {
        let ((_, f0, n0), (_, f1, n1)) = (w[0], w[1]);
        if n1 >= f1 {
            // solve f0 + s (f1 - f0) = n0 + s (n1 - n0)
            let s = (n0 - f0) / ((f1 - f0) - (n1 - n0));
            return f0 + s * (f1 - f0);
        }
    }
    unreachable!("the +inf point has fnmr 1")
}

/// `P(g > i) + P(g = i) / 2` over all genuine/impostor pairs.
pub fn mann_whitney(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut acc = 0.0;
    for g in genuine {
        for i in impostor {
            if g > i {
                acc += 1.0;
            } else if g == i {
                acc += 0.5;
            }
        }
    }
    acc / (genuine.len() * impostor.len()) as f64
}

/// FNMR at a target FMR: lowest-threshold point at or below the target,
/// linearly interpolated in FMR against the point before it.
pub fn naive_fnmr_at_fmr(points: &[(f64, f64, f64)], target: f64) -> f64 {
    let mut best: Option<usize> = None;
    for (k, p) in points.iter().enumerate() {
        if p.1 <= target && best.is_none_or(|b| p.0 < points[b].0) {
            best = Some(k);
        }
    }
    let k = best.unwrap();
    let (_, f1, n1) = points[k];
    if f1 == target || k == 0 {
        return n1;
    }
    let (_, f0, n0) = points[k - 1];
    n0 + (n1 - n0) * (f0 - target) / (f0 - f1)
}

/// Random score set with some exact ties.
pub fn random_scores(r: &mut impl Rng, max_len: usize) -> (Vec<f64>, Vec<f64>) {
    let len = r.random_range(2..=max_len);
    let g_count = r.random_range(1..len);
    let shift: f64 = r.random_range(0.0..2.0);
    let quantize = r.random_bool(0.5);
    let draw = |r: &mut ChaCha8Rng, mu: f64| {
        let x: f64 = mu + r.sample::<f64, _>(StandardNormal);
        if quantize {
            (x * 8.0).round() / 8.0
        } else {
            x
        }
    };
    let mut inner = rng(r.random());
    let genuine = (0..g_count).map(|_| draw(&mut inner, shift)).collect();
    let impostor = (g_count..len).map(|_| draw(&mut inner, 0.0)).collect();
    (genuine, impostor)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol
}

/// Ranks of each probe's mate after a full sort by (score desc, gallery order).
pub fn naive_cmc(scores: &[Vec<f64>], mates: &[usize], ranks: &[usize]) -> Vec<f64> {
    let positions: Vec<usize> = scores
        .iter()
        .zip(mates)
        .map(|(row, &m)| {
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            order.iter().position(|&g| g == m).unwrap() + 1
        })
        .collect();
    ranks
        .iter()
        .map(|&r| positions.iter().filter(|&&p| p <= r).count() as f64 / positions.len() as f64)
        .collect()
}

/// Sweeps every candidate threshold for open-set identification.
pub fn naive_tpir(scores: &[Vec<f64>], mates: &[Option<usize>], target: f64) -> f64 {
    let top = |row: &Vec<f64>| {
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        order[0]
    };
    let mut thresholds: Vec<f64> = scores.iter().map(|row| row[top(row)]).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let unmated = mates.iter().filter(|m| m.is_none()).count() as f64;
    let mated = mates.len() as f64 - unmated;
    let point = |t: f64| {
        let (mut fp, mut tp) = (0.0, 0.0);
        for (row, m) in scores.iter().zip(mates) {
            let best = top(row);
            if row[best] >= t {
                match m {
                    None => fp += 1.0,
                    Some(m) if *m == best => tp += 1.0,
                    _ => {}
                }
            }
        }
        (fp / unmated, tp / mated)
    };
    let curve: Vec<(f64, f64)> = thresholds.iter().map(|&t| point(t)).collect();
    let k = curve.iter().position(|c| c.0 <= target).unwrap();
    let (f1, t1) = curve[k];
    if f1 == target || k == 0 {
        return t1;
    }
    let (f0, t0) = curve[k - 1];
    t0 + (t1 - t0) * (f0 - target) / (f0 - f1)
}

/// Random probe x gallery score matrix with duplicated gallery columns (ties)
/// and a mix of mated and non-mated probes.
pub fn random_protocol(r: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<Option<usize>>) {
    let gallery = r.random_range(1..=20);
    let probes = r.random_range(2..=50);
    let dim = 6;
    let g: Vec<Vec<f64>> = (0..gallery)
        .map(|k| {
            gaussian(r, dim)
                .into_iter()
                .map(|x| x + k as f64 % 3.0)
                .collect()
        })
        .collect();
    // an exact duplicate column produces tied scores
    let g: Vec<Vec<f64>> = g
        .iter()
        .enumerate()
        .map(|(k, v)| {
            if k > 0 && k % 5 == 0 {
                g[k - 1].clone()
            } else {
                v.clone()
            }
        })
        .collect();
    let mut scores = Vec::new();
    let mut mates = Vec::new();
    for i in 0..probes {
        let mated = i == 0 || (i > 1 && r.random_bool(0.6));
        let (v, mate) = if mated {
            let m = r.random_range(0..gallery);
            let noise = gaussian(r, dim);
            (
                g[m].iter()
                    .zip(noise)
                    .map(|(x, e)| x + 0.8 * e)
                    .collect::<Vec<_>>(),
                Some(m),
            )
        } else {
            (gaussian(r, dim), None)
        };
        scores.push(
            g.iter()
                .map(|gv| tpe_core::verify::cosine(&v, gv).unwrap())
                .collect(),
        );
        mates.push(mate);
    }
    (scores, mates)
}

/// Verification and identification metrics against brute-force sweeps.
pub fn check_metric_oracles(score_sets: usize, protocols: usize, seed: u64) -> Check {
    let tol = 1e-9;
    let mut r = rng(seed);
    for case in 0..score_sets {
        let (genuine, impostor) = random_scores(&mut r, 1000);
        let set = ScoreSet::from_parts(&genuine, &impostor).map_err(|e| e.to_string())?;
        let curve = roc(&set).map_err(|e| e.to_string())?;
        let oracle = naive_roc(&genuine, &impostor);
        if curve.points().len() != oracle.len() {
            return Err(format!(
                "set {case}: {} ROC points, oracle {}",
                curve.points().len(),
                oracle.len()
            ));
        }
        for (p, o) in curve.points().iter().zip(&oracle) {
            if p.threshold != o.0 || !close(p.fmr, o.1, tol) || !close(p.fnmr, o.2, tol) {
                return Err(format!("set {case}: ROC point {p:?} vs {o:?}"));
            }
        }
        let (e, oe) = (eer(&curve), naive_eer(&oracle));
        if !close(e, oe, tol) {
            return Err(format!("set {case}: EER {e} vs {oe}"));
        }
        let (a, oa) = (auc(&curve), mann_whitney(&genuine, &impostor));
        if !close(a, oa, tol) {
            return Err(format!("set {case}: AUC {a} vs {oa}"));
        }
        for target in [0.001, 0.01, 0.1, 0.37, 1.0] {
            let f = fnmr_at_fmr(&curve, target).map_err(|e| e.to_string())?.fnmr;
            let of = naive_fnmr_at_fmr(&oracle, target);
            if !close(f, of, tol) {
                return Err(format!("set {case}: FNMR@{target} {f} vs {of}"));
            }
        }
    }
    for case in 0..protocols {
        let (scores, mates) = random_protocol(&mut r);
        let gallery = scores[0].len();
        let ranks: Vec<usize> = (1..=gallery).collect();
        let (mated_scores, mated): (Vec<Vec<f64>>, Vec<usize>) = scores
            .iter()
            .zip(&mates)
            .filter_map(|(s, m)| m.map(|m| (s.clone(), m)))
            .unzip();
        let got = cmc_from_scores(
            &mated_scores,
            &mated.iter().map(|&m| Some(m)).collect::<Vec<_>>(),
            &ranks,
        )
        .map_err(|e| e.to_string())?;
        let want = naive_cmc(&mated_scores, &mated, &ranks);
        if got.iter().zip(&want).any(|(a, b)| !close(*a, *b, tol)) {
            return Err(format!("protocol {case}: CMC {got:?} vs {want:?}"));
        }
        if mates.iter().all(Option::is_some) {
            continue;
        }
        let targets = [0.01, 0.1, 0.25, 0.5, 1.0];
        let got = tpir_at_fpir_from_scores(&scores, &mates, &targets).map_err(|e| e.to_string())?;
        for (g, &t) in got.iter().zip(&targets) {
            let want = naive_tpir(&scores, &mates, t);
            if !close(g.tpir, want, tol) {
                return Err(format!("protocol {case}: TPIR@{t} {} vs {want}", g.tpir));
            }
        }
    }
    Ok(format!(
        "{score_sets} score sets, {protocols} identification protocols"
    ))
}

// --------------------------------------------------------------- clustering

/// Average linkage from first principles: every step recomputes all
/// inter-cluster means from the raw pairwise distances and merges the
/// closest pair (lexicographically smallest ids on ties) while it is
/// below `cutoff`.
pub fn naive_average_linkage(features: &[Vec<f64>], cutoff: f64) -> Vec<Vec<usize>> {
    let n = features.len();
    let u: Vec<Vec<f64>> = features.iter().map(|f| unit(f)).collect();
    let dist = |i: usize, j: usize| {
        let c: f64 = u[i].iter().zip(&u[j]).map(|(a, b)| a * b).sum();
        (1.0 - c).clamp(0.0, 2.0)
    };
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut sum = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        sum += dist(i, j);
                    }
                }
                let d = sum / (clusters[a].len() * clusters[b].len()) as f64;
                // clusters are kept sorted by smallest member, so (a, b) order is lexicographic
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        match best {
            Some((d, a, b)) if d < cutoff => {
                let moved = clusters.remove(b);
                clusters[a].extend(moved);
                clusters[a].sort_unstable();
            }
            _ => break,
        }
    }
    clusters.sort();
    clusters
}

/// Pairwise precision, recall and F1 by enumerating all `i < j`.
pub fn naive_pairwise(clusters: &[usize], classes: &[usize]) -> (f64, f64, f64) {
    let (mut both, mut same_cluster, mut same_class) = (0u64, 0u64, 0u64);
    for i in 0..clusters.len() {
        for j in i + 1..clusters.len() {
            let c = clusters[i] == clusters[j];
            let l = classes[i] == classes[j];
            same_cluster += c as u64;
            same_class += l as u64;
            both += (c && l) as u64;
        }
    }
    let p = if same_cluster == 0 {
        0.0
    } else {
        both as f64 / same_cluster as f64
    };
    let r = if same_class == 0 {
        0.0
    } else {
        both as f64 / same_class as f64
    };
    let f = if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    };
    (p, r, f)
}

/// Random clustered points on the sphere with their class labels.
pub fn random_instance(r: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = r.random_range(2..=60);
    let dim = r.random_range(2..=8);
    let classes = r.random_range(1..=6);
    let spread: f64 = r.random_range(0.05..1.0);
    let centers: Vec<Vec<f64>> = (0..classes).map(|_| unit(&gaussian(r, dim))).collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let c = r.random_range(0..classes);
        let noise = gaussian(r, dim);
        features.push(
            centers[c]
                .iter()
                .zip(noise)
                .map(|(m, e)| m + spread * e)
                .collect(),
        );
        labels.push(c);
    }
    (features, labels)
}

/// Merge-history replay against fresh runs and the naive oracle, plus
/// pairwise scores against pair enumeration.
pub fn check_cluster_oracles(instances: usize, seed: u64) -> Check {
    let grid: Vec<f64> = (0..=40).map(|k| k as f64 * 0.05).collect();
    let mut r = rng(seed);
    for case in 0..instances {
        let (features, labels) = random_instance(&mut r);
        let history = linkage(&features).map_err(|e| e.to_string())?;
        if history
            .merges
            .windows(2)
            .any(|w| w[0].distance > w[1].distance)
        {
            return Err(format!("instance {case}: merge distances decrease"));
        }
        for &cutoff in &grid {
            let replay = history.cut(cutoff);
            let fresh = agglomerate(&features, cutoff).map_err(|e| e.to_string())?;
            if replay.labels() != fresh.labels() {
                return Err(format!(
                    "instance {case}: replay differs from fresh run at {cutoff}"
                ));
            }
            let oracle = naive_average_linkage(&features, cutoff);
            if fresh.as_sets() != oracle {
                return Err(format!(
                    "instance {case}: partition differs from oracle at {cutoff}"
                ));
            }
            let s = pairwise_metrics(&fresh, &labels).map_err(|e| e.to_string())?;
            let (p, rc, f) = naive_pairwise(fresh.labels(), &labels);
            if (s.precision, s.recall, s.f1) != (p, rc, f) {
                return Err(format!(
                    "instance {case}: P/R/F1 ({}, {}, {}) vs ({p}, {rc}, {f})",
                    s.precision, s.recall, s.f1
                ));
            }
        }
    }
    Ok(format!("{instances} instances x {} cutoffs", grid.len()))
}

// --------------------------------------------------------------- properties

fn runner(cases: u32, seed: u8) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::from_seed(
            proptest::test_runner::RngAlgorithm::ChaCha,
            &[seed; 32],
        ),
    )
}

fn outcome(
    name: &str,
    cases: u32,
    r: Result<(), proptest::test_runner::TestError<impl std::fmt::Debug>>,
) -> Check {
    r.map(|_| format!("{name}: {cases} cases"))
        .map_err(|e| format!("{name}: {e}"))
}

fn item(id: usize, media: &str, values: Vec<f64>) -> TemplateItem {
    TemplateItem {
        record_id: format!("r{id}"),
        media_id: media.to_string(),
        values,
    }
}

fn template(items: Vec<TemplateItem>) -> Template {
    Template {
        template_id: "t".into(),
        subject: None,
        items,
    }
}

fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
}

fn approx(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Singleton, single-media and equal-multiplicity pooling identities.
pub fn pooling_properties(cases: u32) -> Check {
    let strategy = (1usize..6, 1usize..5, 1usize..4).prop_flat_map(|(dim, media, frames)| {
        (
            prop::collection::vec(nonzero_vec(dim), media * frames),
            Just(frames),
        )
    });
    let result = runner(cases, 11).run(&strategy, |(vectors, frames)| {
        let dim = vectors[0].len();
        // singleton: both poolers return the normalized item
        let single = template(vec![item(0, "m0", vectors[0].clone())]);
        let expect = unit(&vectors[0]);
        prop_assert!(approx(&pool_average(&single).unwrap(), &expect, 1e-12));
        prop_assert!(approx(&pool_media(&single).unwrap(), &expect, 1e-12));

        // one media item: media pooling reduces to average pooling
        let one_media = template(
            vectors
                .iter()
                .enumerate()
                .map(|(i, v)| item(i, "m0", v.clone()))
                .collect(),
        );
        let sum: Vec<f64> = (0..dim)
            .map(|k| vectors.iter().map(|v| v[k]).sum())
            .collect();
        if sum.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            prop_assert!(approx(
                &pool_media(&one_media).unwrap(),
                &pool_average(&one_media).unwrap(),
                1e-9
            ));
        }

        // equal frames per media: the two poolers agree
        let equal = template(
            vectors
                .iter()
                .enumerate()
                .map(|(i, v)| item(i, &format!("m{}", i / frames), v.clone()))
                .collect(),
        );
        if sum.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            prop_assert!(approx(
                &pool_media(&equal).unwrap(),
                &pool_average(&equal).unwrap(),
                1e-9
            ));
        }
        Ok(())
    });
    outcome("pooling identities", cases, result)
}

fn dataset_from(rows: &[Vec<f64>]) -> Dataset {
    Dataset::new(
        rows.iter()
            .enumerate()
            .map(|(i, v)| FeatureRecord {
                record_id: format!("r{i}"),
                subject: format!("s{}", i % 3),
                media_id: String::new(),
                template_id: None,
                split: None,
                values: v.clone(),
            })
            .collect(),
    )
    .unwrap()
}

/// Rows of the PCA initializer are orthonormal.
pub fn pca_properties(cases: u32) -> Check {
    let strategy = (2usize..10, 3usize..30).prop_flat_map(|(dim, m)| {
        (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), m),
            1..=dim.min(m - 1),
        )
    });
    let result = runner(cases, 12).run(&strategy, |(rows, n)| {
        let w = match pca_init(&dataset_from(&rows), n) {
            Ok(w) => w,
            // rank-deficient draws are rejected by design
            Err(tpe_core::Error::DegenerateData(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        for i in 0..n {
            for j in 0..n {
                let d: f64 = w.row(i).iter().zip(w.row(j)).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                prop_assert!((d - expect).abs() < 1e-8, "W W^T[{i},{j}] = {d}");
            }
        }
        Ok(())
    });
    outcome("pca_init orthonormality", cases, result)
}

fn permuted_sets(sets: Vec<Vec<usize>>, perm: &[usize]) -> Vec<Vec<usize>> {
    let mut mapped: Vec<Vec<usize>> = sets
        .into_iter()
        .map(|s| {
            let mut m: Vec<usize> = s.into_iter().map(|i| perm[i]).collect();
            m.sort_unstable();
            m
        })
        .collect();
    mapped.sort();
    mapped
}

/// Reordering the input only relabels the clustering and leaves the merge
/// distances unchanged.
pub fn clustering_permutation_properties(cases: u32) -> Check {
    let strategy = (1usize..6).prop_flat_map(|dim| {
        prop::collection::vec(nonzero_vec(dim), 2..30).prop_flat_map(|pts| {
            let n = pts.len();
            (
                Just(pts),
                Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
                0.0f64..2.0,
            )
        })
    });
    let result = runner(cases, 13).run(&strategy, |(pts, perm, cutoff)| {
        // perm[i] is the new position of point i
        let mut shuffled = vec![Vec::new(); pts.len()];
        for (i, p) in pts.iter().enumerate() {
            shuffled[perm[i]] = p.clone();
        }
        let base = agglomerate(&pts, cutoff).unwrap();
        let moved = agglomerate(&shuffled, cutoff).unwrap();
        prop_assert_eq!(permuted_sets(base.as_sets(), &perm), moved.as_sets());
        let distances = |a: &ClusterAssignment| -> Vec<f64> {
            let mut d: Vec<f64> = a
                .history()
                .unwrap()
                .merges
                .iter()
                .map(|m| m.distance)
                .collect();
            d.sort_by(f64::total_cmp);
            d
        };
        prop_assert!(approx(&distances(&base), &distances(&moved), 1e-12));
        Ok(())
    });
    outcome("clustering permutation invariance", cases, result)
}

/// Strictly increasing maps of the scores leave EER, AUC, CMC and the
/// ROC's (FMR, FNMR) points unchanged.
pub fn monotone_properties(cases: u32) -> Check {
    let transforms: [fn(f64) -> f64; 3] = [|x| 3.0 * x - 1.0, |x| x.exp(), |x| x.atan()];
    let strategy = (
        prop::collection::vec((-4i32..=4).prop_map(|k| k as f64 / 4.0), 1..40),
        prop::collection::vec((-4i32..=4).prop_map(|k| k as f64 / 4.0), 1..40),
        0usize..3,
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 5), 1..8),
    );
    let result = runner(cases, 14).run(&strategy, |(genuine, impostor, t, matrix)| {
        let f = transforms[t];
        let base = roc(&ScoreSet::from_parts(&genuine, &impostor).unwrap()).unwrap();
        let mg: Vec<f64> = genuine.iter().map(|&x| f(x)).collect();
        let mi: Vec<f64> = impostor.iter().map(|&x| f(x)).collect();
        let moved = roc(&ScoreSet::from_parts(&mg, &mi).unwrap()).unwrap();
        let pts = |c: &tpe_core::verify::RocCurve| -> Vec<(f64, f64)> {
            c.points().iter().map(|p| (p.fmr, p.fnmr)).collect()
        };
        prop_assert_eq!(pts(&base), pts(&moved));
        prop_assert_eq!(eer(&base), eer(&moved));
        prop_assert_eq!(auc(&base), auc(&moved));

        // probes as rows of `matrix`, mate of probe p is column p mod width
        let width = matrix[0].len();
        let mates: Vec<Option<usize>> = (0..matrix.len()).map(|p| Some(p % width)).collect();
        let ranks: Vec<usize> = (1..=width).collect();
        let moved_matrix: Vec<Vec<f64>> = matrix
            .iter()
            .map(|row| row.iter().map(|&x| f(x)).collect())
            .collect();
        prop_assert_eq!(
            cmc_from_scores(&matrix, &mates, &ranks).unwrap(),
            cmc_from_scores(&moved_matrix, &mates, &ranks).unwrap()
        );
        Ok(())
    });
    outcome("monotone-transform invariance", cases, result)
}

pub type SuiteResult = (&'static str, Check, std::time::Duration);

/// Runs every structural suite, timing each.
pub fn structural_suites() -> Vec<SuiteResult> {
    type Suite = (&'static str, fn(u32) -> Check);
    let suites: [Suite; 4] = [
        ("pooling", pooling_properties),
        ("pca", pca_properties),
        ("permutation", clustering_permutation_properties),
        ("monotone", monotone_properties),
    ];
    suites
        .iter()
        .map(|(name, f)| {
            let t = std::time::Instant::now();
            let r = f(256);
            (*name, r, t.elapsed())
        })
        .collect()
}

// --------------------------------------------------------------- synthetic

/// Small generator configuration for quick pipeline runs.
pub fn small_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        num_subjects: 6,
        records_per_subject: 5,
        dim: 8,
        seed,
        ..SynthConfig::default()
    }
}

pub fn small_dataset(seed: u64) -> Dataset {
    generate_synthetic(&small_synth(seed)).unwrap()
}

/// Canonical form of a partition, for comparisons.
pub fn partition(a: &ClusterAssignment) -> BTreeSet<Vec<usize>> {
    a.as_sets().into_iter().collect()
}

// -------------------------------------------------------------- determinism

fn pipeline_artifacts(dir: &std::path::Path, tag: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    use tpe_core::cluster::{default_grid, kmeans, pr_curve};
    use tpe_core::data::{save_binary, save_csv};
    use tpe_core::embedding::{save_matrix, train, Method, TrainConfig};
    use tpe_core::pooling::{pool_dataset, PoolMode};

    let err = |e: tpe_core::Error| e.to_string();
    let synth = SynthConfig {
        num_subjects: 12,
        records_per_subject: 8,
        dim: 16,
        media_offset: 0.3,
        nuisance_rank: 2,
        nuisance_sigma: 0.5,
        templates: Some(tpe_core::data::TemplateLayout {
            per_subject: 2,
            media_per_template: 2,
            max_frames_per_media: 3,
        }),
        seed: 99,
        ..SynthConfig::default()
    };
    let ds = generate_synthetic(&synth).map_err(err)?;
    let csv = dir.join(format!("{tag}.csv"));
    save_csv(&ds, &csv).map_err(err)?;
    let manifest = save_binary(&ds, dir.join(format!("{tag}_bin.bin"))).map_err(err)?;

    let mut out = vec![
        ("features.csv".to_string(), std::fs::read(&csv).unwrap()),
        (
            "features.bin".to_string(),
            std::fs::read(manifest.with_extension("bin")).unwrap(),
        ),
        (
            "manifest.csv".to_string(),
            std::fs::read(&manifest).unwrap(),
        ),
    ];
    for method in [Method::Tpe, Method::Tde] {
        let cfg = TrainConfig {
            target_dim: 6,
            iterations: 400,
            negative_pool_size: 50,
            seed: 5,
            method,
            ..TrainConfig::default()
        };
        let trained = train(&ds, &cfg).map_err(err)?;
        let path = dir.join(format!("{tag}_{method:?}.w"));
        save_matrix(&trained.matrix, &path).map_err(err)?;
        out.push((format!("{method:?} matrix"), std::fs::read(&path).unwrap()));
        let log: Vec<String> = trained
            .log
            .iter()
            .map(|e| format!("{},{:?},{:?}", e.iter, e.p, e.loss))
            .collect();
        out.push((format!("{method:?} log"), log.join("\n").into_bytes()));
    }

    let pooled = pool_dataset(&ds, PoolMode::Media).map_err(err)?;
    let features: Vec<Vec<f64>> = pooled.records().iter().map(|r| r.values.clone()).collect();
    let labels = pooled.class_labels();
    let assignment = agglomerate(&features, 0.4).map_err(err)?;
    out.push((
        "agglomerate".into(),
        serde_json::to_vec(&assignment).unwrap(),
    ));
    let pr = pr_curve(&features, &labels, &default_grid()).map_err(err)?;
    out.push(("pr curve".into(), serde_json::to_vec(&pr).unwrap()));
    let km = kmeans(&features, 4, 3, 17).map_err(err)?;
    out.push((
        "kmeans".into(),
        serde_json::to_vec(&(km.assignment, km.cost, km.restart)).unwrap(),
    ));
    Ok(out)
}

/// Runs generate, train and cluster twice (the second time on a
/// three-thread pool) and compares every artifact byte for byte.
pub fn check_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline_artifacts(dir.path(), "a")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let second = pool.install(|| pipeline_artifacts(dir.path(), "b"))?;
    for ((name, a), (_, b)) in first.iter().zip(&second) {
        if a != b {
            return Err(format!("{name} differs between runs"));
        }
    }
    Ok(format!("{} artifacts byte-identical", first.len()))
}
