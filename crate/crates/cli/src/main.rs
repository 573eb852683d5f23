use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use opfunkb_core::framework::SemanticFramework;
use opfunkb_core::mapper::KnowledgeBase;
use opfunkb_core::pipeline::{EvalArgs, MapArgs, Pipeline, PipelineConfig, PlotKind, StageOutcome};

/// Builds an operator-to-function knowledge base from geospatial scripts.
#[derive(Debug, Parser)]
#[command(name = "opfunkb", version)]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Working directory for artifacts (overrides the configuration).
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,

    /// Seed for clustering and gold sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Skip a stage whose inputs and outputs are unchanged since its last run.
    #[arg(long, global = true)]
    skip_fresh: bool,

    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan a script directory and write the corpus manifest.
    Ingest {
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long)]
        glob: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse every script and log caller/callee pairs.
    ExtractCalls {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        estree_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Count pairs and mine frequent operator combinations.
    Mine {
        #[arg(long)]
        calls: Option<PathBuf>,
        #[arg(long)]
        min_support: Option<f64>,
        #[arg(long)]
        max_k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ask a model to describe each script as functional statements.
    ExtractStatements {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        template: Option<PathBuf>,
        /// Gateway profile name.
        #[arg(long)]
        gateway: Option<String>,
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed and cluster statements and write the review file.
    Cluster {
        #[arg(long)]
        statements: Option<PathBuf>,
        #[arg(long)]
        perplexity: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        /// Candidate component counts as `min:max`.
        #[arg(long)]
        k_range: Option<String>,
        #[arg(long)]
        out_review: Option<PathBuf>,
    },
    /// Import an edited review file (or a framework JSON) as the framework.
    Review {
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Map frequent combinations onto the framework with every model.
    Map {
        #[arg(long)]
        itemsets: Option<PathBuf>,
        #[arg(long)]
        framework: Option<PathBuf>,
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        rounds: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-decide labels using a subset of the models, such as `m1+m3`.
    Vote {
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        combination: String,
        #[arg(long)]
        framework: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score the knowledge base against gold labels.
    Eval {
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        framework: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a stratified sample of records for gold annotation.
    SampleGold {
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write CSV data for the plots.
    Plot {
        /// bic_curve, embedding_scatter, pair_heatmap or itemset_histogram; all when omitted.
        #[arg(long = "kind")]
        kinds: Vec<PlotKind>,
    },
    /// Show the knowledge-base records for a function id, path or label.
    Lookup {
        query: String,
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        framework: Option<PathBuf>,
    },
    /// Run every stage in order.
    Run(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Skip evaluation even when a gold file is configured.
    #[arg(long)]
    no_eval: bool,
}

fn parse_k_range(s: &str) -> anyhow::Result<(usize, usize)> {
    let (a, b) = s.split_once(':').with_context(|| format!("k range {s:?} is not min:max"))?;
    let lo = a.trim().parse().with_context(|| format!("bad k range start {a:?}"))?;
    let hi = b.trim().parse().with_context(|| format!("bad k range end {b:?}"))?;
    Ok((lo, hi))
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    match &cli.config {
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => {
            let local = Path::new("pipeline.toml");
            if local.is_file() {
                Ok(PipelineConfig::load(local)?)
            } else {
                let mut c = PipelineConfig::default();
                c.base_dir = PathBuf::from(".");
                Ok(c)
            }
        }
    }
}

fn report(outcomes: &[StageOutcome]) {
    for o in outcomes {
        let state = if o.skipped { "skipped" } else { "done" };
        println!("[{}] {state}: {}", o.stage, o.summary.trim_end());
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = load_config(&cli)?;
    if let Some(seed) = cli.seed {
        config.clustering.seed = seed;
        config.eval.sampling.seed = seed;
    }
    match &cli.command {
        Command::Ingest { root, glob, .. } => {
            if let Some(r) = root {
                config.paths.corpus = std::path::absolute(r)?;
            }
            if let Some(g) = glob {
                config.paths.glob = g.clone();
            }
        }
        Command::ExtractCalls { estree_dir: Some(d), .. } => config.paths.estree_dir = Some(std::path::absolute(d)?),
        Command::Mine { min_support, max_k, .. } => {
            if let Some(s) = min_support {
                config.mining.min_support = *s;
            }
            if let Some(k) = max_k {
                config.mining.max_k = *k;
            }
        }
        Command::ExtractStatements { template, gateway, profiles, .. } => {
            if let Some(t) = template {
                config.paths.statement_prompt = Some(std::path::absolute(t)?);
            }
            if let Some(g) = gateway {
                config.statements.profile = g.clone();
            }
            if let Some(p) = profiles {
                config.paths.gateways = std::path::absolute(p)?;
            }
        }
        Command::Cluster { perplexity, iters, k_range, .. } => {
            if let Some(p) = perplexity {
                config.clustering.perplexity = *p;
            }
            if let Some(n) = iters {
                config.clustering.n_iter = *n;
            }
            if let Some(r) = k_range {
                (config.clustering.k_min, config.clustering.k_max) = parse_k_range(r)?;
            }
        }
        Command::Run(args) if args.no_eval => config.paths.gold = None,
        _ => {}
    }
    config.validate()?;

    let mut pipeline = match &cli.workdir {
        Some(w) => Pipeline::new(config, w.clone()),
        None => Pipeline::from_config(config),
    };
    pipeline.skip_fresh = cli.skip_fresh;
    let wd = &mut pipeline.workdir;
    match &cli.command {
        Command::Ingest { out, .. } => redirect(wd, "manifest.jsonl", out),
        Command::ExtractCalls { manifest, out, .. } => {
            redirect(wd, "manifest.jsonl", manifest);
            redirect(wd, "calls.jsonl", out);
        }
        Command::Mine { calls, out, .. } => {
            redirect(wd, "calls.jsonl", calls);
            redirect(wd, "itemsets.json", out);
        }
        Command::ExtractStatements { manifest, out, .. } => {
            redirect(wd, "manifest.jsonl", manifest);
            redirect(wd, "statements.jsonl", out);
        }
        Command::Cluster { statements, out_review, .. } => {
            redirect(wd, "statements.jsonl", statements);
            redirect(wd, "review.toml", out_review);
        }
        Command::Review { out, .. } => redirect(wd, "framework.json", out),
        Command::Vote { framework, .. } => redirect(wd, "framework.json", framework),
        _ => {}
    }

    match cli.command {
        Command::Ingest { .. } => report(&[pipeline.ingest()?]),
        Command::ExtractCalls { .. } => report(&[pipeline.extract_calls()?]),
        Command::Mine { .. } => report(&[pipeline.mine()?]),
        Command::ExtractStatements { .. } => report(&[pipeline.extract_statements()?]),
        Command::Cluster { .. } => report(&[pipeline.cluster()?]),
        Command::Review { from, .. } => report(&[pipeline.review(from.as_deref())?]),
        Command::Map {
            itemsets,
            framework,
            profiles,
            rounds,
            out,
        } => report(&[pipeline.map(&MapArgs {
            itemsets,
            framework,
            profiles,
            rounds,
            out,
        })?]),
        Command::Vote { kb, combination, out, .. } => report(&[pipeline.vote(kb.as_deref(), &combination, out.as_deref())?]),
        Command::Eval { kb, gold, framework, out } => report(&[pipeline.eval(&EvalArgs { kb, gold, framework, out })?]),
        Command::SampleGold { kb, size, out } => {
            let mut strategy = pipeline.config.eval.sampling.clone();
            if let Some(n) = size {
                strategy.size = n;
            }
            let picks = pipeline.sample_gold(kb.as_deref(), out.as_deref(), &strategy)?;
            println!("[sample-gold] done: {} candidates", picks.len());
        }
        Command::Plot { kinds } => report(&[pipeline.plot(&kinds)?]),
        Command::Lookup { query, kb, framework } => {
            let kb_path = kb.unwrap_or_else(|| pipeline.workdir.kb());
            let fw_path = framework.unwrap_or_else(|| pipeline.workdir.framework());
            for (p, stage) in [(&kb_path, "map"), (&fw_path, "review")] {
                if !p.is_file() {
                    return Err(opfunkb_core::error::Error::Prerequisite {
                        stage: stage.into(),
                        missing: p.display().to_string(),
                    }
                    .into());
                }
            }
            let kb = KnowledgeBase::load(&kb_path)?;
            let fw = SemanticFramework::load(&fw_path)?;
            if query.trim().is_empty() {
                bail!("empty lookup query");
            }
            print!("{}", opfunkb_core::pipeline::lookup_text(&kb, &query, &fw));
        }
        Command::Run(_) => report(&pipeline.run_all()?),
    }
    Ok(())
}

fn redirect(wd: &mut opfunkb_core::pipeline::Workdir, name: &str, path: &Option<PathBuf>) {
    if let Some(p) = path {
        wd.redirect(name, p.clone());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<opfunkb_core::error::Error>())
                .map_or(1, |c| c.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
