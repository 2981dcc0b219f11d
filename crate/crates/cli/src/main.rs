use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qdrank::cluster::CountTransform;
use qdrank::corpus::SplitTag;
use qdrank::rank::{OptimizerKind, Variant};
use qdrank_cli::config::SweepKind;
use qdrank_cli::{commands, exit_code, RunConfig};

#[derive(Parser)]
#[command(name = "qdrank", version, about = "Query-clustered neural ranking workbench")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic click log with planted query clusters.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        train_queries: Option<usize>,
        #[arg(long)]
        dev_queries: Option<usize>,
        #[arg(long)]
        test_queries: Option<usize>,
        #[arg(long)]
        num_clusters: Option<usize>,
        #[arg(long)]
        vocab_size: Option<usize>,
        #[arg(long)]
        noise_rate: Option<f64>,
    },
    /// Fit the query cluster tree on the training split.
    Cluster {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Distinctive n-gram report.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        cluster: ClusterArgs,
    },
    /// Train one ranker.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch training log.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Evaluate checkpoints; the first one is the baseline.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: SplitTag,
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        export_scores: bool,
        /// Cutoffs for success@k, comma separated.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Sweep mix_rate or the clustering settings for QC-MTLRM.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Fixed baseline checkpoint instead of a DPRM trained per seed.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        kind: Option<SweepKind>,
        /// mix_rate grid, comma separated.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        split: Option<SplitTag>,
        #[command(flatten)]
        cluster: ClusterArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    branch: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    top_k_docs: Option<usize>,
    #[arg(long)]
    count_transform: Option<CountTransform>,
    /// Sparse fields of the query representation, comma separated.
    #[arg(long, value_delimiter = ',')]
    fields: Option<Vec<String>>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    mix_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ClusterArgs {
    fn apply(self, c: &mut RunConfig) {
        let s = &mut c.cluster;
        set(&mut s.depth, self.depth);
        set(&mut s.branch, self.branch);
        set(&mut s.min_leaf, self.min_leaf);
        set(&mut s.top_k_docs, self.top_k_docs);
        set(&mut s.count_transform, self.count_transform);
        set(&mut s.fields, self.fields);
    }
}

impl ModelArgs {
    fn apply(self, c: &mut RunConfig) {
        let m = &mut c.model;
        set(&mut m.variant, self.variant);
        set(&mut m.mix_rate, self.mix_rate);
        set(&mut m.max_epochs, self.epochs);
        set(&mut m.embedding_dim, self.embedding_dim);
        set(&mut m.hidden_sizes, self.hidden);
        set(&mut m.dropout_rate, self.dropout);
        set(&mut m.learning_rate, self.learning_rate);
        set(&mut m.optimizer, self.optimizer);
        set(&mut m.batch_size, self.batch_size);
        set(&mut m.patience, self.patience);
    }
}

fn run(cli: Cli) -> qdrank::Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    match cli.command {
        Command::Generate {
            out,
            train_queries,
            dev_queries,
            test_queries,
            num_clusters,
            vocab_size,
            noise_rate,
        } => {
            let s = &mut config.synth;
            set(&mut s.train_queries, train_queries);
            set(&mut s.dev_queries, dev_queries);
            set(&mut s.test_queries, test_queries);
            set(&mut s.num_clusters, num_clusters);
            set(&mut s.vocab_size, vocab_size);
            set(&mut s.noise_rate, noise_rate);
            let summary = commands::generate(&config, &out)?;
            let [tr, dv, te] = summary.counts;
            println!("generated {tr} train, {dv} dev and {te} test queries in {}", out.display());
        }
        Command::Cluster {
            data,
            out,
            report,
            cluster,
        } => {
            cluster.apply(&mut config);
            let s = commands::cluster(&config, &data, &out, report.as_deref())?;
            println!("{} valid clusters", s.valid_clusters);
            for (path, n) in &s.level_sizes {
                println!("  cluster {path}: {n} queries");
            }
            if let Some(ari) = s.level1_ari {
                println!("level-1 adjusted Rand index vs planted clusters: {ari:.4}");
            }
        }
        Command::Train {
            data,
            tree,
            out,
            log,
            model,
        } => {
            model.apply(&mut config);
            let r = commands::train(&config, &data, tree.as_deref(), &out, log.as_deref())?;
            for e in &r.training.epochs {
                let dev = e.dev_mrr.map_or_else(|| "NA".into(), |v| format!("{v:.4}"));
                println!("epoch {:>2}  loss {:.4}  dev mrr {dev}", e.epoch, e.train_loss);
            }
            println!("kept epoch {}; saved {}", r.training.best_epoch, out.display());
        }
        Command::Eval {
            data,
            split,
            models,
            tree,
            out,
            export_scores,
            ks,
        } => {
            set(&mut config.eval.success_ks, ks);
            let rows = commands::evaluate(&config, &data, split, &models, tree.as_deref(), &out, export_scores)?;
            print!("{}", commands::comparison_table(&rows, &config.eval.success_ks));
        }
        Command::Sweep {
            data,
            tree,
            baseline,
            out,
            kind,
            grid,
            seeds,
            split,
            cluster,
            model,
        } => {
            cluster.apply(&mut config);
            model.apply(&mut config);
            set(&mut config.sweep.kind, kind);
            set(&mut config.sweep.mix_rates, grid);
            set(&mut config.sweep.seeds, seeds);
            set(&mut config.sweep.split, split);
            let rows = commands::sweep(&config, &data, tree.as_deref(), baseline.as_deref(), &out)?;
            for r in &rows {
                println!(
                    "{:<40} {:+.2}% (p = {:.2e})",
                    r.setting, r.improvement_pct, r.p_value
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qdrank: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
