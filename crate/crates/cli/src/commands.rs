use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde_json::{json, Value};

use tpe_core::cluster::{
    agglomerate, default_grid, kmeans, learn_cutoff, pairwise_metrics, pr_curve, prune,
    ClusterAssignment,
};
use tpe_core::data::{
    generate_synthetic, save_binary, save_csv, Dataset, SynthConfig, TemplateLayout,
};
use tpe_core::embedding::{
    load_matrix, pca_init, save_matrix, train, LrDecay, Method, TrainConfig,
};
use tpe_core::pooling::{pool_dataset, PoolMode};
use tpe_core::repro::{repro_cluster, repro_fig3, ClusterReproConfig, Fig3Config};
use tpe_core::verify::{
    accuracy, all_pair_scores, auc, cmc, cosine, eer, fnmr_at_fmr, learn_accuracy_threshold, roc,
    tpir_at_fpir, GalleryEntry, IdentProtocol, Label, Probe, ScoreSet,
};

use crate::args::*;
use crate::output::{json_num, load, num, resolve_config, CliError, CliResult, Outputs};

fn log(verbose: bool, msg: impl AsRef<str>) {
    if verbose {
        eprintln!("{}", msg.as_ref());
    }
}

fn write_features(
    out: &mut Outputs,
    stem: &str,
    ds: &Dataset,
    format: FileFormat,
) -> CliResult<()> {
    match format {
        FileFormat::Csv => save_csv(ds, out.path(&format!("{stem}.csv")))?,
        FileFormat::Bin => {
            save_binary(ds, out.path(&format!("{stem}.bin")))?;
            out.path(&format!("{stem}.csv"));
        }
    }
    Ok(())
}

fn projected(ds: &Dataset, matrix: Option<&Path>) -> CliResult<Dataset> {
    match matrix {
        Some(path) => {
            let w = load_matrix(path)?;
            Ok(ds.map_features(|v| w.project(v))?)
        }
        None => Ok(ds.clone()),
    }
}

fn features(ds: &Dataset) -> Vec<Vec<f64>> {
    ds.records().iter().map(|r| r.values.clone()).collect()
}

pub fn gen(args: &GenArgs, verbose: bool) -> CliResult<()> {
    let mut cfg = resolve_config(SynthConfig::default(), args.config.as_deref())?;
    let set = |slot: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.num_subjects, args.subjects);
    set(&mut cfg.records_per_subject, args.per);
    set(&mut cfg.dim, args.dim);
    set(&mut cfg.media_per_subject, args.media);
    set(&mut cfg.nuisance_rank, args.nuisance_rank);
    let setf = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    setf(&mut cfg.within_class_noise, args.noise);
    setf(&mut cfg.media_offset, args.media_offset);
    setf(&mut cfg.nuisance_sigma, args.nuisance_sigma);
    setf(&mut cfg.media_nuisance_sigma, args.media_nuisance);
    if let Some(t) = args.templates {
        let base = cfg.templates.unwrap_or(TemplateLayout {
            per_subject: t,
            media_per_template: 3,
            max_frames_per_media: 6,
        });
        cfg.templates = Some(TemplateLayout {
            per_subject: t,
            media_per_template: args.media_per_template.unwrap_or(base.media_per_template),
            max_frames_per_media: args.max_frames.unwrap_or(base.max_frames_per_media),
        });
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let ds = generate_synthetic(&cfg)?;
    log(
        verbose,
        format!("generated {} records of dim {}", ds.len(), ds.dim()),
    );
    let mut out = Outputs::create(&args.out.out)?;
    write_features(&mut out, "features", &ds, args.format)?;
    out.finish("gen", args, serde_json::to_value(&cfg).unwrap())
}

pub fn pca(args: &PcaInitArgs, _verbose: bool) -> CliResult<()> {
    let ds = load(&args.input)?;
    let w = pca_init(&ds, args.dim)?;
    let mut out = Outputs::create(&args.out.out)?;
    save_matrix(&w, out.path("matrix.tpew"))?;
    out.finish("pca-init", args, json!({ "target_dim": args.dim }))
}

pub fn train_cmd(args: &TrainArgs, verbose: bool) -> CliResult<()> {
    let mut cfg = resolve_config(TrainConfig::default(), args.config.as_deref())?;
    if let Some(m) = args.method {
        cfg.method = match m {
            MethodArg::Tpe => Method::Tpe,
            MethodArg::Tde => Method::Tde,
        };
    }
    if let Some(v) = args.dim {
        cfg.target_dim = v;
    }
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.iters {
        cfg.iterations = v;
    }
    if let Some(v) = args.pool_size {
        cfg.negative_pool_size = v;
    }
    if let Some(v) = args.margin {
        cfg.margin = v;
    }
    if let Some(v) = args.batch {
        cfg.batch_size = v;
    }
    if let (Some(factor), Some(interval)) = (args.decay_factor, args.decay_every) {
        cfg.lr_decay = Some(LrDecay { factor, interval });
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    let ds = load(&args.input)?;
    log(
        verbose,
        format!(
            "training {:?} on {} records, {} iterations",
            cfg.method,
            ds.len(),
            cfg.iterations
        ),
    );
    let trained = train(&ds, &cfg)?;
    let mut out = Outputs::create(&args.out.out)?;
    save_matrix(&trained.matrix, out.path("matrix.tpew"))?;
    out.csv(
        "train_log.csv",
        &["iter", "p", "loss"],
        trained
            .log
            .iter()
            .map(|e| vec![e.iter.to_string(), num(e.p), num(e.loss)]),
    )?;
    out.finish("train", args, serde_json::to_value(&cfg).unwrap())
}

pub fn project(args: &ProjectArgs, _verbose: bool) -> CliResult<()> {
    let ds = load(&args.input)?;
    let p = projected(&ds, Some(&args.matrix))?;
    let mut out = Outputs::create(&args.out.out)?;
    write_features(&mut out, "projected", &p, args.format)?;
    out.finish("project", args, Value::Null)
}

pub fn pool(args: &PoolArgs, verbose: bool) -> CliResult<()> {
    let ds = load(&args.input)?;
    let mode = match args.mode {
        PoolArg::Average => PoolMode::Average,
        PoolArg::Media => PoolMode::Media,
    };
    let pooled = pool_dataset(&ds, mode)?;
    log(
        verbose,
        format!(
            "pooled {} records into {} templates",
            ds.len(),
            pooled.len()
        ),
    );
    let mut out = Outputs::create(&args.out.out)?;
    write_features(&mut out, "templates", &pooled, args.format)?;
    out.finish("pool", args, Value::Null)
}

fn parse_label(s: &str) -> Option<Label> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "genuine" | "same" | "true" | "match" => Some(Label::Genuine),
        "0" | "impostor" | "different" | "false" | "nonmatch" => Some(Label::Impostor),
        _ => None,
    }
}

/// Cosine scores for a pair protocol CSV `id_a,id_b,label` with a header row.
fn score_pairs(ds: &Dataset, path: &Path) -> CliResult<ScoreSet> {
    let index: HashMap<&str, usize> = ds
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| (r.record_id.as_str(), i))
        .collect();
    let bad = |line: usize, m: String| CliError::Data(format!("{}:{line}: {m}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut scores = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| bad(line, e.to_string()))?;
        if row.len() != 3 {
            return Err(bad(line, format!("expected 3 fields, found {}", row.len())));
        }
        let find = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| bad(line, format!("unknown record id `{id}`")))
        };
        let (a, b) = (find(&row[0])?, find(&row[1])?);
        let label = parse_label(&row[2])
            .ok_or_else(|| bad(line, format!("unrecognized label `{}`", &row[2])))?;
        scores.push((cosine(ds.features(a), ds.features(b))?, label));
    }
    Ok(ScoreSet::new(scores)?)
}

pub fn verify(args: &VerifyArgs, _verbose: bool) -> CliResult<()> {
    let ds = projected(&load(&args.input)?, args.matrix.as_deref())?;
    let scores = match &args.pairs {
        Some(p) => score_pairs(&ds, p)?,
        None => all_pair_scores(&features(&ds), &ds.class_labels())?,
    };
    let curve = roc(&scores)?;
    let mut at = BTreeMap::new();
    for &f in &args.fmr {
        let r = fnmr_at_fmr(&curve, f)?;
        at.insert(f.to_string(), json!({ "fnmr": r.fnmr, "achieved_fmr": r.achieved_fmr, "threshold": json_num(r.threshold) }));
    }
    let mut summary = json!({
        "genuine": scores.genuine_count(),
        "impostor": scores.impostor_count(),
        "eer": eer(&curve),
        "auc": auc(&curve),
        "fnmr_at_fmr": at,
    });
    if let Some(p) = &args.threshold_pairs {
        let train_scores = score_pairs(&ds, p)?;
        let theta = learn_accuracy_threshold(&train_scores)?;
        summary["accuracy_threshold"] = json_num(theta);
        summary["accuracy"] = json!(accuracy(&scores, theta));
    }
    let mut out = Outputs::create(&args.out.out)?;
    out.csv(
        "roc.csv",
        &["threshold", "fmr", "fnmr"],
        curve
            .points()
            .iter()
            .map(|p| vec![num(p.threshold), num(p.fmr), num(p.fnmr)]),
    )?;
    out.json("summary.json", &summary)?;
    out.finish("verify-eval", args, Value::Null)
}

pub fn ident(args: &IdentArgs, _verbose: bool) -> CliResult<()> {
    let input = |path: &Path| InputArgs {
        input: path.to_path_buf(),
        no_normalize: args.no_normalize,
        split: None,
    };
    let gallery = projected(&load(&input(&args.gallery))?, args.matrix.as_deref())?;
    let probes = projected(&load(&input(&args.probes))?, args.matrix.as_deref())?;
    let gallery_entries = gallery
        .records()
        .iter()
        .map(|r| GalleryEntry {
            subject: r.subject.clone(),
            features: r.values.clone(),
        })
        .collect();
    let probe_entries: Vec<Probe> = probes
        .records()
        .iter()
        .map(|r| Probe {
            subject: Some(r.subject.clone()),
            features: r.values.clone(),
        })
        .collect();
    let protocol = IdentProtocol::new(gallery_entries, probe_entries)?;
    let mates = protocol.mates();
    let unmated = mates.iter().filter(|m| m.is_none()).count();

    let mut summary = json!({ "probes": mates.len(), "non_mated": unmated });
    let mut out = Outputs::create(&args.out.out)?;
    if unmated < mates.len() {
        // closed-set ranks over the mated probes only
        let mated = IdentProtocol::new(
            protocol.gallery().to_vec(),
            protocol
                .probes()
                .iter()
                .zip(&mates)
                .filter(|(_, m)| m.is_some())
                .map(|(p, _)| p.clone())
                .collect(),
        )?;
        let rates = cmc(&mated, &args.ranks)?;
        out.csv(
            "cmc.csv",
            &["rank", "rate"],
            args.ranks
                .iter()
                .zip(&rates)
                .map(|(r, v)| vec![r.to_string(), num(*v)]),
        )?;
        let map: BTreeMap<String, f64> = args
            .ranks
            .iter()
            .zip(&rates)
            .map(|(r, v)| (r.to_string(), *v))
            .collect();
        summary["cmc"] = json!(map);
    }
    let targets = match (&args.fpir, unmated) {
        (Some(t), _) => Some(t.clone()),
        (None, 0) => None,
        (None, _) => Some(vec![0.01, 0.1]),
    };
    if let Some(targets) = targets {
        let res = tpir_at_fpir(&protocol, &targets)?;
        let map: BTreeMap<String, Value> = targets
            .iter()
            .zip(&res)
            .map(|(t, r)| {
                (
                    t.to_string(),
                    json!({ "tpir": r.tpir, "achieved_fpir": r.achieved_fpir, "threshold": json_num(r.threshold) }),
                )
            })
            .collect();
        summary["tpir_at_fpir"] = json!(map);
    }
    out.json("summary.json", &summary)?;
    out.finish("ident-eval", args, Value::Null)
}

pub fn cluster(args: &ClusterArgs, verbose: bool) -> CliResult<()> {
    let ds = projected(&load(&args.input)?, args.matrix.as_deref())?;
    let feats = features(&ds);
    let labels = ds.class_labels();
    let mut summary = json!({ "records": ds.len() });
    let (assignment, pr): (ClusterAssignment, Option<_>) = match args.algo {
        Algo::Agglo => {
            let cutoff = match (args.cutoff, &args.learn_cutoff) {
                (Some(c), _) => c,
                (None, Some(path)) => {
                    let train_input = InputArgs {
                        input: path.clone(),
                        no_normalize: args.input.no_normalize,
                        split: None,
                    };
                    let train_set = projected(&load(&train_input)?, args.matrix.as_deref())?;
                    let c = learn_cutoff(
                        &features(&train_set),
                        &train_set.class_labels(),
                        &default_grid(),
                    )?;
                    log(verbose, format!("learned cutoff {c}"));
                    c
                }
                (None, None) => {
                    return Err(CliError::Usage(
                        "agglomerative clustering needs --cutoff or --learn-cutoff".into(),
                    ))
                }
            };
            summary["cutoff"] = json!(cutoff);
            let a = agglomerate(&feats, cutoff)?;
            (a, Some(pr_curve(&feats, &labels, &default_grid())?))
        }
        Algo::Kmeans => {
            let k = args
                .k
                .ok_or_else(|| CliError::Usage("k-means needs --k".into()))?;
            let r = kmeans(&feats, k, args.restarts, args.seed)?;
            summary["cost"] = json!(r.cost);
            summary["restart"] = json!(r.restart);
            (r.assignment, None)
        }
    };
    let pruned = prune(&assignment, args.min_size);
    let scores = pairwise_metrics(&assignment, &labels)?;
    summary["clusters_raw"] = json!(pruned.raw_count);
    summary["clusters_pruned"] = json!(pruned.pruned_count);
    summary["min_size"] = json!(args.min_size);
    summary["precision"] = json!(scores.precision);
    summary["recall"] = json!(scores.recall);
    summary["f1"] = json!(scores.f1);

    let mut out = Outputs::create(&args.out.out)?;
    out.csv(
        "assignment.csv",
        &["record_id", "cluster"],
        ds.records()
            .iter()
            .zip(assignment.labels())
            .map(|(r, c)| vec![r.record_id.clone(), c.to_string()]),
    )?;
    out.json("clusters.json", &summary)?;
    if let Some(pr) = pr {
        out.csv(
            "pr.csv",
            &["cutoff", "precision", "recall", "f1"],
            pr.iter()
                .map(|p| vec![num(p.cutoff), num(p.precision), num(p.recall), num(p.f1)]),
        )?;
    }
    out.finish("cluster", args, Value::Null)
}

fn apply_repro_flags(synth: &mut SynthConfig, train: &mut TrainConfig, args: &ReproArgs) {
    if let Some(s) = args.seed {
        synth.seed = s;
        train.seed = s;
    }
    if let Some(i) = args.iters {
        train.iterations = i;
    }
}

pub fn fig3(args: &ReproArgs, verbose: bool) -> CliResult<()> {
    let mut cfg = resolve_config(Fig3Config::default(), args.config.as_deref())?;
    apply_repro_flags(&mut cfg.synth, &mut cfg.train, args);
    log(verbose, "training TPE and TDE");
    let report = repro_fig3(&cfg)?;
    let mut out = Outputs::create(&args.out.out)?;
    let methods = [
        ("raw", report.raw),
        ("tde", report.tde),
        ("tpe", report.tpe),
    ];
    out.csv(
        "roc.csv",
        &["method", "threshold", "fmr", "fnmr"],
        report.curves.iter().flat_map(|(name, curve)| {
            curve
                .points()
                .iter()
                .map(|p| vec![name.to_string(), num(p.threshold), num(p.fmr), num(p.fnmr)])
                .collect::<Vec<_>>()
        }),
    )?;
    out.csv(
        "eer.csv",
        &[
            "method",
            "eer",
            "auc",
            "fnmr_at_fmr_0.01",
            "fnmr_at_fmr_0.1",
        ],
        methods.iter().map(|(n, s)| {
            vec![
                n.to_string(),
                num(s.eer),
                num(s.auc),
                num(s.fnmr_at_fmr_0_01),
                num(s.fnmr_at_fmr_0_1),
            ]
        }),
    )?;
    save_matrix(&report.tpe_matrix, out.path("tpe.tpew"))?;
    save_matrix(&report.tde_matrix, out.path("tde.tpew"))?;
    out.json(
        "summary.json",
        &json!({
            "seed": cfg.synth.seed,
            "eer_raw": report.raw.eer,
            "eer_tde": report.tde.eer,
            "eer_tpe": report.tpe.eer,
            "methods": methods.iter().map(|(n, s)| (n.to_string(), json!(s))).collect::<BTreeMap<_, _>>(),
        }),
    )?;
    out.finish("repro-fig3", args, serde_json::to_value(&cfg).unwrap())
}

pub fn cluster_repro(args: &ReproArgs, verbose: bool) -> CliResult<()> {
    let mut cfg = resolve_config(ClusterReproConfig::default(), args.config.as_deref())?;
    apply_repro_flags(&mut cfg.synth, &mut cfg.train, args);
    log(verbose, "training TPE and clustering pooled templates");
    let report = repro_cluster(&cfg)?;
    let outcomes = [
        ("media_raw", &report.media_raw),
        ("media_tpe", &report.media_tpe),
        ("average_raw", &report.average_raw),
        ("average_tpe", &report.average_tpe),
    ];
    let mut out = Outputs::create(&args.out.out)?;
    out.csv(
        "pr.csv",
        &["representation", "cutoff", "precision", "recall", "f1"],
        outcomes.iter().flat_map(|(name, o)| {
            o.pr.iter()
                .map(|p| {
                    vec![
                        name.to_string(),
                        num(p.cutoff),
                        num(p.precision),
                        num(p.recall),
                        num(p.f1),
                    ]
                })
                .collect::<Vec<_>>()
        }),
    )?;
    let table: BTreeMap<String, Value> = outcomes
        .iter()
        .map(|(name, o)| {
            (
                name.to_string(),
                json!({
                    "cutoff": o.cutoff,
                    "f1": o.f1,
                    "precision": o.precision,
                    "recall": o.recall,
                    "clusters": o.clusters,
                    "pruned_clusters": o.pruned_clusters,
                }),
            )
        })
        .collect();
    out.json(
        "summary.json",
        &json!({
            "seed": cfg.synth.seed,
            "true_subjects": report.true_subjects,
            "f1_raw": report.media_raw.f1,
            "f1_tpe": report.media_tpe.f1,
            "representations": table,
        }),
    )?;
    out.finish("repro-cluster", args, serde_json::to_value(&cfg).unwrap())
}
