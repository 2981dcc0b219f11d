use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use qdrank::cluster::{adjusted_rand_index, distinctive_ngrams, ClusterTree, QueryClusterer};
use qdrank::corpus::{generate_synthetic, load_dataset, save_dataset_with_manifest, Dataset, SplitTag, SplitTruth};
use qdrank::eval::{manifest_line, paired_t_test, relative_delta, MetricsReport, TTest};
use qdrank::rank::{ModelConfig, Ranker, Variant};
use qdrank::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ClusterGridPoint, RunConfig, SweepKind};

pub const TRUTH_FILE: &str = "truth.json";

/// Dataset file of a split inside a data directory.
pub fn split_path(data_dir: &Path, split: SplitTag) -> PathBuf {
    data_dir.join(format!("{split}.jsonl"))
}

/// Run description embedded in every artifact.
pub fn manifest(command: &str, config: &RunConfig) -> Value {
    json!({
        "tool": "qdrank",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    })
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn load_split(data_dir: &Path, split: SplitTag) -> Result<Dataset> {
    let d = load_dataset(split_path(data_dir, split))?;
    if d.split != split {
        return Err(Error::Split(format!("{} holds the {} split", split_path(data_dir, split).display(), d.split)));
    }
    Ok(d)
}

fn load_clusterer(tree: Option<&Path>) -> Result<Option<QueryClusterer>> {
    tree.map(QueryClusterer::load).transpose()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TruthFile {
    manifest: Value,
    train: SplitTruth,
    dev: SplitTruth,
    test: SplitTruth,
}

/// Planted cluster labels written by `generate`, if present.
pub fn load_truth(data_dir: &Path, split: SplitTag) -> Result<Option<SplitTruth>> {
    let path = data_dir.join(TRUTH_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let t: TruthFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    Ok(Some(match split {
        SplitTag::Train => t.train,
        SplitTag::Dev => t.dev,
        SplitTag::Test => t.test,
    }))
}

#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub counts: [usize; 3],
    pub files: Vec<PathBuf>,
}

/// Writes `train.jsonl`, `dev.jsonl`, `test.jsonl` and `truth.json`.
pub fn generate(config: &RunConfig, out_dir: &Path) -> Result<GenerateSummary> {
    let config = config.resolved();
    config.synth.validate()?;
    let corpus = generate_synthetic(&config.synth)?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let m = manifest("generate", &config);
    let mut files = Vec::new();
    for d in [&corpus.train, &corpus.dev, &corpus.test] {
        let path = split_path(out_dir, d.split);
        save_dataset_with_manifest(d, &m, &path)?;
        files.push(path);
    }
    let [train, dev, test] = corpus.truth.clone();
    let truth = TruthFile {
        manifest: m,
        train,
        dev,
        test,
    };
    let path = out_dir.join(TRUTH_FILE);
    write_text(&path, &(serde_json::to_string(&truth).expect("truth serializes") + "\n"))?;
    files.push(path);
    Ok(GenerateSummary {
        counts: [corpus.train.len(), corpus.dev.len(), corpus.test.len()],
        files,
    })
}

#[derive(Debug, Clone)]
pub struct ClusterSummary {
    pub valid_clusters: usize,
    /// Members per level-1 cluster, by path.
    pub level_sizes: BTreeMap<String, usize>,
    /// Level-1 agreement with the planted clusters, when `truth.json` exists.
    pub level1_ari: Option<f64>,
}

/// Level-1 cluster index per query; queries without an assignment get `usize::MAX`.
pub fn level1_labels(assignments: &[qdrank::cluster::ClusterAssignment]) -> Vec<usize> {
    assignments
        .iter()
        .map(|a| {
            a.paths
                .first()
                .and_then(|p| p.split('.').next())
                .and_then(|s| s.parse().ok())
                .unwrap_or(usize::MAX)
        })
        .collect()
}

fn fit_clusterer(config: &RunConfig, train: &Dataset) -> Result<qdrank::cluster::FittedClusterer> {
    let mut fitted = QueryClusterer::fit(train, config.cluster.representation(), &config.cluster.params())?;
    fitted.clusterer.manifest = manifest("cluster", config);
    Ok(fitted)
}

/// Fits the query clusterer on the training split and writes it to `tree_out`.
/// `report_out` receives the most distinctive n-grams of every valid cluster.
pub fn cluster(config: &RunConfig, data_dir: &Path, tree_out: &Path, report_out: Option<&Path>) -> Result<ClusterSummary> {
    let config = config.resolved();
    config.validate()?;
    let train = load_split(data_dir, SplitTag::Train)?;
    let fitted = fit_clusterer(&config, &train)?;
    fitted.clusterer.save(tree_out)?;

    let tree = &fitted.clusterer.tree;
    let mut level_sizes = BTreeMap::new();
    for child in &tree.root.children {
        level_sizes.insert(child.path_string(), child.member_count);
    }
    let level1_ari = load_truth(data_dir, SplitTag::Train)?
        .map(|t| adjusted_rand_index(&t.planted_cluster, &level1_labels(&fitted.assignments)));

    if let Some(path) = report_out {
        let mut body = manifest_line(Some(&fitted.clusterer.manifest));
        body.push_str("cluster\tsize\trank\tngram\tdistinctiveness\n");
        for node in tree.nodes().into_iter().filter(|n| n.depth > 0 && !n.pruned) {
            let p = node.path_string();
            let top = distinctive_ngrams(
                &fitted.assignments,
                &fitted.representations,
                &p,
                config.cluster.report_top_n,
                config.cluster.report_min_support,
                Some("ngram:"),
            )?;
            for (i, (tok, score)) in top.iter().enumerate() {
                let _ = writeln!(body, "{p}\t{}\t{}\t{tok}\t{score:.6}", node.member_count, i + 1);
            }
        }
        write_text(path, &body)?;
    }
    Ok(ClusterSummary {
        valid_clusters: tree.valid_clusters().len(),
        level_sizes,
        level1_ari,
    })
}

fn training_log_text(ranker: &Ranker) -> String {
    let mut body = manifest_line(Some(&ranker.manifest));
    body.push_str("epoch\ttrain_loss\ttrain_rank_loss\ttrain_cluster_loss\tdev_mrr\n");
    for e in &ranker.training.epochs {
        let dev = e.dev_mrr.map_or_else(|| "NA".to_string(), |v| v.to_string());
        let _ = writeln!(
            body,
            "{}\t{}\t{}\t{}\t{dev}",
            e.epoch, e.train_loss, e.train_rank_loss, e.train_cluster_loss
        );
    }
    body
}

/// Trains `config.model` on the train split with dev-based early stopping.
pub fn train(
    config: &RunConfig,
    data_dir: &Path,
    tree: Option<&Path>,
    model_out: &Path,
    log_out: Option<&Path>,
) -> Result<Ranker> {
    let config = config.resolved();
    config.validate()?;
    if config.model.variant.needs_clusters() && tree.is_none() {
        return Err(Error::Config(format!("{} needs --tree", config.model.variant)));
    }
    let train = load_split(data_dir, SplitTag::Train)?;
    let dev = load_split(data_dir, SplitTag::Dev)?;
    let clusterer = load_clusterer(tree)?;
    let mut ranker = Ranker::fit(&config.model, &train, &dev, clusterer.as_ref())?;
    ranker.manifest = manifest("train", &config);
    ranker.save(model_out)?;
    if let Some(path) = log_out {
        write_text(path, &training_log_text(&ranker))?;
    }
    Ok(ranker)
}

/// One line of the model comparison produced by `eval`.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub name: String,
    pub report: MetricsReport,
    /// Paired test of reciprocal ranks against the first model.
    pub test: Option<TTest>,
}

fn model_names(models: &[(PathBuf, Ranker)]) -> Vec<String> {
    let variants: Vec<String> = models.iter().map(|(_, r)| r.config().variant.to_string()).collect();
    variants
        .iter()
        .zip(models)
        .map(|(v, (path, _))| {
            if variants.iter().filter(|w| *w == v).count() == 1 {
                v.clone()
            } else {
                path.file_stem().map_or_else(|| v.clone(), |s| s.to_string_lossy().into_owned())
            }
        })
        .collect()
}

/// Tab-separated comparison; the first row is the baseline.
pub fn comparison_table(rows: &[ComparisonRow], ks: &[usize]) -> String {
    let mut out = String::from("model\tmrr");
    for k in ks {
        let _ = write!(out, "\tsuccess@{k}");
    }
    out.push_str("\twmrr\twacp\tdelta_mrr\tdelta_wmrr\tt\tp_value\tsignificant\n");
    let base = &rows[0].report;
    for row in rows {
        let r = &row.report;
        let _ = write!(out, "{}\t{:.4}", row.name, r.mrr);
        for &k in ks {
            let _ = write!(out, "\t{:.4}", r.success(k).unwrap_or(f64::NAN));
        }
        let _ = write!(
            out,
            "\t{:.4}\t{:.4}\t{}\t{}",
            r.wmrr,
            r.wacp,
            relative_delta(r.mrr, base.mrr),
            relative_delta(r.wmrr, base.wmrr)
        );
        match &row.test {
            Some(t) => {
                let _ = writeln!(out, "\t{:.4}\t{:.3e}\t{}", t.t, t.p, if t.significant { "yes" } else { "no" });
            }
            None => out.push_str("\t-\t-\t-\n"),
        }
    }
    out
}

/// Scores `split` with every checkpoint and compares them against the first.
///
/// Writes `<name>.summary.tsv`, `<name>.detail.tsv` (and `<name>.scores.tsv`
/// with `export_scores`) per model plus `comparison.tsv` into `out_dir`.
pub fn evaluate(
    config: &RunConfig,
    data_dir: &Path,
    split: SplitTag,
    models: &[PathBuf],
    tree: Option<&Path>,
    out_dir: &Path,
    export_scores: bool,
) -> Result<Vec<ComparisonRow>> {
    let config = config.resolved();
    config.validate()?;
    if models.is_empty() {
        return Err(Error::Config("eval needs at least one model".into()));
    }
    let data = load_split(data_dir, split)?;
    let clusterer = load_clusterer(tree)?;
    let loaded: Vec<(PathBuf, Ranker)> = models
        .iter()
        .map(|p| Ranker::load(p).map(|r| (p.clone(), r)))
        .collect::<Result<_>>()?;
    let names = model_names(&loaded);
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut m = manifest("eval", &config);
    m["models"] = Value::Array(loaded.iter().map(|(_, r)| r.manifest.clone()).collect());

    let mut rows: Vec<ComparisonRow> = Vec::new();
    for (name, (_, ranker)) in names.into_iter().zip(&loaded) {
        let report = ranker.evaluate_with_ks(&data, clusterer.as_ref(), &config.eval.success_ks)?;
        report.write_summary(out_dir.join(format!("{name}.summary.tsv")), Some(&m))?;
        report.write_detail(out_dir.join(format!("{name}.detail.tsv")), Some(&m))?;
        if export_scores {
            ranker.export_scores(&data, clusterer.as_ref(), out_dir.join(format!("{name}.scores.tsv")))?;
        }
        let test = match rows.first() {
            Some(base) if report.num_queries >= 2 => {
                Some(paired_t_test(&report.reciprocal_ranks(), &base.report.reciprocal_ranks())?)
            }
            _ => None,
        };
        rows.push(ComparisonRow { name, report, test });
    }
    let mut body = manifest_line(Some(&m));
    body.push_str(&comparison_table(&rows, &config.eval.success_ks));
    write_text(&out_dir.join("comparison.tsv"), &body)?;
    Ok(rows)
}

/// One grid point of a sweep, averaged over the configured seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// `mix_rate`, or the number of valid clusters for cluster sweeps.
    pub value: f64,
    pub setting: String,
    pub baseline_mrr: f64,
    pub model_mrr: f64,
    /// Mean over seeds of the relative MRR change, in percent.
    pub improvement_pct: f64,
    /// Sample standard deviation of the per-seed improvement (0 for one seed).
    pub improvement_sd: f64,
    /// Paired test on per-query reciprocal ranks averaged over seeds.
    pub t: f64,
    pub p_value: f64,
    pub significant: bool,
}

pub const SWEEP_HEADER: &str =
    "value,setting,baseline_mrr,model_mrr,improvement_pct,improvement_sd,t,p_value,significant";

pub fn sweep_csv(rows: &[SweepRow], manifest: &Value) -> String {
    let mut out = format!("# run {manifest}\n{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.4},{:.4},{:.4},{:.6e},{}",
            r.value, r.setting, r.baseline_mrr, r.model_mrr, r.improvement_pct, r.improvement_sd, r.t, r.p_value, r.significant
        );
    }
    out
}

/// Parses a sweep CSV back into rows, skipping `#` lines.
pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
    match lines.next() {
        Some((_, h)) if h == SWEEP_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing sweep header".into(),
            })
        }
    }
    lines
        .map(|(i, l)| {
            let bad = || Error::Parse {
                line: i + 1,
                message: format!("bad sweep row `{l}`"),
            };
            let c: Vec<&str> = l.split(',').collect();
            if c.len() != 9 {
                return Err(bad());
            }
            let f = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(SweepRow {
                value: f(c[0])?,
                setting: c[1].to_string(),
                baseline_mrr: f(c[2])?,
                model_mrr: f(c[3])?,
                improvement_pct: f(c[4])?,
                improvement_sd: f(c[5])?,
                t: f(c[6])?,
                p_value: f(c[7])?,
                significant: c[8].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

struct Run {
    mrr: f64,
    rr: Vec<f64>,
}

fn run_of(report: &MetricsReport) -> Run {
    Run {
        mrr: report.mrr,
        rr: report.reciprocal_ranks(),
    }
}

fn summarize(value: f64, setting: String, baselines: &[Run], models: &[Run]) -> Result<SweepRow> {
    let n = models.len() as f64;
    let gains: Vec<f64> = baselines
        .iter()
        .zip(models)
        .map(|(b, m)| (m.mrr - b.mrr) / b.mrr * 100.0)
        .collect();
    let mean_gain = gains.iter().sum::<f64>() / n;
    let sd = if gains.len() > 1 {
        (gains.iter().map(|g| (g - mean_gain).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let avg = |runs: &[Run]| -> Vec<f64> {
        let len = runs[0].rr.len();
        (0..len).map(|i| runs.iter().map(|r| r.rr[i]).sum::<f64>() / n).collect()
    };
    let test = paired_t_test(&avg(models), &avg(baselines))?;
    Ok(SweepRow {
        value,
        setting,
        baseline_mrr: baselines.iter().map(|r| r.mrr).sum::<f64>() / n,
        model_mrr: models.iter().map(|r| r.mrr).sum::<f64>() / n,
        improvement_pct: mean_gain,
        improvement_sd: sd,
        t: test.t,
        p_value: test.p,
        significant: test.significant,
    })
}

fn with_seed(model: &ModelConfig, variant: Variant, seed: u64) -> ModelConfig {
    ModelConfig {
        variant,
        seed,
        ..model.clone()
    }
}

/// Trains QC-MTLRM over a grid of mix rates or clustering settings and
/// reports its relative MRR change over a DPRM baseline.
///
/// The baseline is `baseline` when given, otherwise a DPRM trained per seed
/// with the same model settings. Rows are sorted by `value`.
pub fn sweep(
    config: &RunConfig,
    data_dir: &Path,
    tree: Option<&Path>,
    baseline: Option<&Path>,
    out_csv: &Path,
) -> Result<Vec<SweepRow>> {
    let config = config.resolved();
    config.validate()?;
    let sw = &config.sweep;
    let train = load_split(data_dir, SplitTag::Train)?;
    let dev = load_split(data_dir, SplitTag::Dev)?;
    let eval = load_split(data_dir, sw.split)?;
    let ks = &config.eval.success_ks;

    let baselines: Vec<Run> = match baseline {
        Some(path) => {
            let r = Ranker::load(path)?;
            if r.config().variant.needs_clusters() {
                return Err(Error::Config("the sweep baseline must not need clusters".into()));
            }
            let run = run_of(&r.evaluate_with_ks(&eval, None, ks)?);
            sw.seeds.iter().map(|_| Run { mrr: run.mrr, rr: run.rr.clone() }).collect()
        }
        None => sw
            .seeds
            .iter()
            .map(|&s| {
                let r = Ranker::fit(&with_seed(&config.model, Variant::Dprm, s), &train, &dev, None)?;
                Ok(run_of(&r.evaluate_with_ks(&eval, None, ks)?))
            })
            .collect::<Result<_>>()?,
    };

    let train_mtl = |clusterer: &QueryClusterer, mix_rate: f64| -> Result<Vec<Run>> {
        sw.seeds
            .iter()
            .map(|&s| {
                let cfg = ModelConfig {
                    mix_rate,
                    ..with_seed(&config.model, Variant::QcMtlrm, s)
                };
                let r = Ranker::fit(&cfg, &train, &dev, Some(clusterer))?;
                Ok(run_of(&r.evaluate_with_ks(&eval, Some(clusterer), ks)?))
            })
            .collect()
    };

    let mut rows = Vec::new();
    match sw.kind {
        SweepKind::MixRate => {
            let Some(tree) = tree else {
                return Err(Error::Config("a mix-rate sweep needs --tree".into()));
            };
            if sw.mix_rates.is_empty() {
                return Err(Error::Config("empty mix_rate grid".into()));
            }
            let clusterer = QueryClusterer::load(tree)?;
            for &lambda in &sw.mix_rates {
                let runs = train_mtl(&clusterer, lambda)?;
                rows.push(summarize(lambda, format!("mix_rate={lambda}"), &baselines, &runs)?);
            }
        }
        SweepKind::Clusters => {
            if sw.cluster_grid.is_empty() {
                return Err(Error::Config("empty cluster grid".into()));
            }
            for &ClusterGridPoint { depth, branch, min_leaf } in &sw.cluster_grid {
                let mut c = config.clone();
                c.cluster.depth = depth;
                c.cluster.branch = branch;
                c.cluster.min_leaf = min_leaf;
                c.validate()?;
                let clusterer = fit_clusterer(&c, &train)?.clusterer;
                let n = clusterer.tree.valid_clusters().len();
                let runs = train_mtl(&clusterer, config.model.mix_rate)?;
                rows.push(summarize(
                    n as f64,
                    format!("depth={depth}/branch={branch}/min_leaf={min_leaf}"),
                    &baselines,
                    &runs,
                )?);
            }
        }
    }
    rows.sort_by(|a, b| a.value.total_cmp(&b.value));
    write_text(out_csv, &sweep_csv(&rows, &manifest("sweep", &config)))?;
    Ok(rows)
}

/// Valid clusters per level of a tree, root excluded.
pub fn clusters_per_level(tree: &ClusterTree) -> Vec<usize> {
    let mut out = vec![0; tree.params.depth];
    for n in tree.nodes() {
        if n.depth > 0 && !n.pruned {
            out[n.depth - 1] += 1;
        }
    }
    out
}
