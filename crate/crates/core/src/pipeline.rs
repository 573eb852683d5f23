//! Staged pipeline over a working directory.
//!
//! Every stage reads the artifacts of earlier stages from the working
//! directory and writes its own atomically. A stage manifest records, per
//! stage, a fingerprint of its inputs and parameters and the hashes of its
//! outputs, so an unchanged stage can be skipped. One stage runs at a time
//! per working directory, guarded by a lock file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ast::{self, CallLog, CallLogLine};
use crate::cluster::{cluster_statements, import_framework, BicPoint, ClusterConfig, StatementRef};
use crate::corpus::{ingest, sha256_hex, CorpusManifest};
use crate::error::{Error, Result};
use crate::eval::{evaluate, load_gold, sample_gold_candidates, EvalConfig, GoldCandidate, SamplingStrategy, Weights};
use crate::framework::SemanticFramework;
use crate::gateway::{ExchangeLog, Gateway, ProfileSet};
use crate::io::{file_sha256, read_json, read_jsonl, write_atomic, write_json, write_jsonl};
use crate::mapper::{build_kb, kb_lookup, parse_combination, KnowledgeBase, KnowledgeBaseRecord, MapConfig, MappingTemplate};
use crate::miner::{calculate_frequencies, ItemsetFile, PairFrequencyTable, DEFAULT_MAX_K, DEFAULT_MIN_SUPPORT};
use crate::statements::{extract_corpus, load_statements, save_statements, PromptTemplate, DEFAULT_BYTE_BUDGET};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub workdir: PathBuf,
    pub corpus: PathBuf,
    pub glob: String,
    /// Directory of pre-parsed `<script_id>.json` ESTree files.
    pub estree_dir: Option<PathBuf>,
    pub gateways: PathBuf,
    /// Framework JSON or edited review TOML used by the review stage; the
    /// working directory's `review.toml` when absent.
    pub framework: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub statement_prompt: Option<PathBuf>,
    pub mapping_prompt: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            workdir: "work".into(),
            corpus: "corpus".into(),
            glob: "*.js".into(),
            estree_dir: None,
            gateways: "gateways.toml".into(),
            framework: None,
            gold: None,
            statement_prompt: None,
            mapping_prompt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningConfig {
    pub min_support: f64,
    pub max_k: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            min_support: DEFAULT_MIN_SUPPORT,
            max_k: DEFAULT_MAX_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatementsConfig {
    pub profile: String,
    pub byte_budget: usize,
}

impl Default for StatementsConfig {
    fn default() -> Self {
        StatementsConfig {
            profile: "default".into(),
            byte_budget: DEFAULT_BYTE_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingConfig {
    pub rounds: u32,
    /// Profiles asked for every combination; all profiles when empty.
    pub profiles: Vec<String>,
    pub band_width: f64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        let d = MapConfig::default();
        MappingConfig {
            rounds: d.rounds,
            profiles: Vec::new(),
            band_width: d.band_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub weights: Weights,
    /// Combinations such as `"m1+m3"`; every subset of the profiles when empty.
    pub combinations: Vec<String>,
    pub sampling: SamplingStrategy,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            weights: Weights::default(),
            combinations: Vec::new(),
            sampling: SamplingStrategy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    /// Operators (by call count) kept in the pair heatmap.
    pub top_operators: usize,
}

impl Default for PlotConfig {
    fn default() -> Self {
        PlotConfig { top_operators: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub mining: MiningConfig,
    pub statements: StatementsConfig,
    pub clustering: ClusterConfig,
    pub mapping: MappingConfig,
    pub eval: EvalSection,
    pub plot: PlotConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut c: PipelineConfig = toml::from_str(text).map_err(|e| Error::parse("pipeline config", e))?;
        c.base_dir = base_dir.to_path_buf();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.eval.weights.validate()?;
        if !(self.mining.min_support > 0.0) || !self.mining.min_support.is_finite() {
            return Err(Error::Validation(format!("mining.min_support must be positive, got {}", self.mining.min_support)));
        }
        if self.mining.max_k == 0 {
            return Err(Error::Validation("mining.max_k must be at least 1".into()));
        }
        if self.mapping.rounds == 0 {
            return Err(Error::Validation("mapping.rounds must be at least 1".into()));
        }
        let c = &self.clustering;
        if c.k_min == 0 || c.k_max < c.k_min {
            return Err(Error::Validation(format!("clustering k range {}..={} is empty", c.k_min, c.k_max)));
        }
        if c.restarts == 0 {
            return Err(Error::Validation("clustering.restarts must be at least 1".into()));
        }
        Ok(())
    }

    /// Every profile the configuration names must exist in the profiles file.
    pub fn check_profiles(&self, set: &ProfileSet) -> Result<()> {
        let named = std::iter::once(&self.statements.profile)
            .chain(&self.mapping.profiles)
            .chain(self.eval.combinations.iter().flat_map(|c| parse_combination(c)).collect::<Vec<_>>().iter())
            .cloned()
            .collect::<Vec<_>>();
        for name in named {
            set.get(&name)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    ExtractCalls,
    Mine,
    ExtractStatements,
    Cluster,
    Review,
    Map,
    Vote,
    Eval,
    Plot,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::ExtractCalls => "extract-calls",
            Stage::Mine => "mine",
            Stage::ExtractStatements => "extract-statements",
            Stage::Cluster => "cluster",
            Stage::Review => "review",
            Stage::Map => "map",
            Stage::Vote => "vote",
            Stage::Eval => "eval",
            Stage::Plot => "plot",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PlotKind {
    BicCurve,
    EmbeddingScatter,
    PairHeatmap,
    ItemsetHistogram,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [PlotKind::BicCurve, PlotKind::EmbeddingScatter, PlotKind::PairHeatmap, PlotKind::ItemsetHistogram];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::BicCurve => "bic_curve",
            PlotKind::EmbeddingScatter => "embedding_scatter",
            PlotKind::PairHeatmap => "pair_heatmap",
            PlotKind::ItemsetHistogram => "itemset_histogram",
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().replace('-', "_"))
            .ok_or_else(|| Error::Validation(format!("unknown plot kind {s:?}; expected bic_curve, embedding_scatter, pair_heatmap or itemset_histogram")))
    }
}

/// Artifact locations inside a working directory. Any artifact can be
/// redirected to an explicit path by its file name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workdir {
    pub root: PathBuf,
    redirects: BTreeMap<String, PathBuf>,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workdir {
            root: root.into(),
            redirects: BTreeMap::new(),
        }
    }

    /// Uses `path` in place of the artifact named `name` (for example
    /// `"calls.jsonl"`).
    pub fn redirect(&mut self, name: &str, path: impl Into<PathBuf>) {
        self.redirects.insert(name.to_string(), path.into());
    }

    fn p(&self, name: &str) -> PathBuf {
        self.redirects.get(name).cloned().unwrap_or_else(|| self.root.join(name))
    }
    pub fn manifest(&self) -> PathBuf {
        self.p("manifest.jsonl")
    }
    pub fn calls(&self) -> PathBuf {
        self.p("calls.jsonl")
    }
    pub fn extraction_report(&self) -> PathBuf {
        self.p("extraction_report.json")
    }
    pub fn pairs(&self) -> PathBuf {
        self.p("pairs.csv")
    }
    pub fn itemsets(&self) -> PathBuf {
        self.p("itemsets.json")
    }
    pub fn statements(&self) -> PathBuf {
        self.p("statements.jsonl")
    }
    pub fn statement_failures(&self) -> PathBuf {
        self.p("statement_failures.json")
    }
    pub fn statement_exchanges(&self) -> PathBuf {
        self.p("statement_exchanges.jsonl")
    }
    pub fn clusters(&self) -> PathBuf {
        self.p("clusters.json")
    }
    pub fn review(&self) -> PathBuf {
        self.p("review.toml")
    }
    pub fn framework(&self) -> PathBuf {
        self.p("framework.json")
    }
    pub fn kb(&self) -> PathBuf {
        self.p("kb.json")
    }
    pub fn report(&self) -> PathBuf {
        self.p("report.json")
    }
    pub fn gold_candidates(&self) -> PathBuf {
        self.p("gold_candidates.jsonl")
    }
    pub fn plot(&self, kind: PlotKind) -> PathBuf {
        self.root.join("plots").join(format!("{}.csv", kind.name()))
    }
    pub fn stage_manifest(&self) -> PathBuf {
        self.p(".stages.json")
    }
    pub fn lock(&self) -> PathBuf {
        self.p(".lock")
    }
}

/// Clustering stage output besides the review file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub perplexity: f64,
    pub kl_divergence: f64,
    pub best_k: usize,
    pub bic_curve: Vec<BicPoint>,
    pub statements: Vec<StatementRef>,
    pub points: Vec<[f64; 2]>,
    pub assignments: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
struct StageRecord {
    fingerprint: String,
    outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub skipped: bool,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

/// Holds the working-directory lock until dropped.
pub struct LockGuard {
    path: PathBuf,
}

impl LockGuard {
    pub fn acquire(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        match fs::OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(LockGuard { path: path.to_path_buf() })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path.to_path_buf())),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Overrides for the map stage, mirroring its command-line flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MapArgs {
    pub itemsets: Option<PathBuf>,
    pub framework: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub rounds: Option<u32>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalArgs {
    pub kb: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub framework: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub workdir: Workdir,
    pub skip_fresh: bool,
}

fn require(path: &Path, stage: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Prerequisite {
            stage: stage.to_string(),
            missing: path.display().to_string(),
        })
    }
}

impl Pipeline {
    pub fn new(config: PipelineConfig, workdir: impl Into<PathBuf>) -> Self {
        Pipeline {
            config,
            workdir: Workdir::new(workdir),
            skip_fresh: false,
        }
    }

    /// Working directory taken from the configuration.
    pub fn from_config(config: PipelineConfig) -> Self {
        let wd = config.resolve(&config.paths.workdir);
        Self::new(config, wd)
    }

    fn lock(&self) -> Result<LockGuard> {
        LockGuard::acquire(&self.workdir.lock())
    }

    fn load_stage_manifest(&self) -> BTreeMap<String, StageRecord> {
        read_json(&self.workdir.stage_manifest()).unwrap_or_default()
    }

    fn fingerprint(stage: Stage, params: &serde_json::Value, inputs: &[PathBuf]) -> Result<String> {
        let mut text = format!("{stage}\n{params}\n");
        for p in inputs {
            let digest = if p.is_file() { file_sha256(p)? } else { "-".into() };
            text.push_str(&format!("{}={digest}\n", p.file_name().unwrap_or_default().to_string_lossy()));
        }
        Ok(sha256_hex(text.as_bytes()))
    }

    /// Runs `body` unless `--skip-fresh` is set and the recorded fingerprint
    /// and output hashes still match.
    fn guarded(
        &self,
        stage: Stage,
        params: serde_json::Value,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        body: impl FnOnce() -> Result<String>,
    ) -> Result<StageOutcome> {
        let fp = Self::fingerprint(stage, &params, inputs)?;
        let mut manifest = self.load_stage_manifest();
        if self.skip_fresh {
            if let Some(rec) = manifest.get(stage.name()) {
                let fresh = rec.fingerprint == fp
                    && outputs.iter().all(|o| {
                        let key = o.display().to_string();
                        o.is_file() && rec.outputs.get(&key).is_some_and(|h| file_sha256(o).ok().as_deref() == Some(h.as_str()))
                    });
                if fresh {
                    log::info!("{stage}: inputs unchanged, skipping");
                    return Ok(StageOutcome {
                        stage,
                        skipped: true,
                        artifacts: outputs.to_vec(),
                        summary: "up to date".into(),
                    });
                }
            }
        }
        let summary = body()?;
        let mut rec = StageRecord {
            fingerprint: fp,
            outputs: BTreeMap::new(),
        };
        for o in outputs {
            if o.is_file() {
                rec.outputs.insert(o.display().to_string(), file_sha256(o)?);
            }
        }
        manifest.insert(stage.name().to_string(), rec);
        write_json(&self.workdir.stage_manifest(), &manifest)?;
        Ok(StageOutcome {
            stage,
            skipped: false,
            artifacts: outputs.to_vec(),
            summary,
        })
    }

    fn profiles(&self, path: Option<&Path>) -> Result<ProfileSet> {
        let p = path.map_or_else(|| self.config.resolve(&self.config.paths.gateways), Path::to_path_buf);
        if !p.is_file() {
            return Err(Error::GatewayConfig(format!("profiles file {} not found", p.display())));
        }
        ProfileSet::load(&p)
    }

    pub fn ingest(&self) -> Result<StageOutcome> {
        let _g = self.lock()?;
        self.ingest_inner()
    }

    fn ingest_inner(&self) -> Result<StageOutcome> {
        let root = self.config.resolve(&self.config.paths.corpus);
        let manifest = ingest(&root, &self.config.paths.glob)?;
        let listing: Vec<(&str, &str)> = manifest.entries.iter().map(|e| (e.script_id.as_str(), e.sha256.as_str())).collect();
        let params = serde_json::json!({ "root": root, "glob": self.config.paths.glob, "files": listing });
        let out = self.workdir.manifest();
        self.guarded(Stage::Ingest, params, &[], &[out.clone()], || {
            manifest.save(&out)?;
            Ok(format!(
                "{} scripts ({} bytes), {} skipped, {} duplicate groups",
                manifest.corpus_stats.count,
                manifest.corpus_stats.total_bytes,
                manifest.corpus_stats.skipped,
                manifest.corpus_stats.duplicate_groups.len()
            ))
        })
    }

    pub fn extract_calls(&self) -> Result<StageOutcome> {
        let _g = self.lock()?;
        self.extract_calls_inner()
    }

    fn extract_calls_inner(&self) -> Result<StageOutcome> {
        let wd = &self.workdir;
        require(&wd.manifest(), "ingest")?;
        let estree = self.config.paths.estree_dir.as_ref().map(|d| self.config.resolve(d));
        let params = serde_json::json!({ "estree_dir": estree });
        self.guarded(Stage::ExtractCalls, params, &[wd.manifest()], &[wd.calls(), wd.extraction_report()], || {
            let manifest = CorpusManifest::load(&wd.manifest())?;
            let results = ast::extract_corpus(&manifest, estree.as_deref());
            let lines: Vec<CallLogLine> = results.iter().flat_map(|r| r.log.to_lines()).collect();
            write_jsonl(&wd.calls(), &lines)?;
            write_json(&wd.extraction_report(), &results)?;
            let failed = results.iter().filter(|r| r.status != ast::ExtractStatus::Ok).count();
            Ok(format!("{} call pairs from {} scripts ({failed} with problems)", lines.len(), results.len()))
        })
    }

    pub fn mine(&self) -> Result<StageOutcome> {
        let _g = self.lock()?;
        self.mine_inner()
    }

    fn mine_inner(&self) -> Result<StageOutcome> {
        let wd = &self.workdir;
        require(&wd.calls(), "extract-calls")?;
        let m = &self.config.mining;
        let params = serde_json::json!({ "min_support": m.min_support, "max_k": m.max_k });
        self.guarded(Stage::Mine, params, &[wd.calls()], &[wd.pairs(), wd.itemsets()], || {
            let lines: Vec<CallLogLine> = read_jsonl(&wd.calls())?;
            let logs = CallLog::from_lines(lines);
            let table = calculate_frequencies(&logs);
            table.save(&wd.pairs())?;
            let file = ItemsetFile::mine(&table, m.min_support, m.max_k)?;
            file.save(&wd.itemsets())?;
            let hist: Vec<String> = file.size_histogram().iter().map(|(k, c)| format!("k={k}: {c}")).collect();
            Ok(format!(
                "{} distinct pairs, N = {}, {} frequent itemsets ({})",
                table.len(),
                table.total_n(),
                file.itemsets.len(),
                hist.join(", ")
            ))
        })
    }

    pub fn extract_statements(&self) -> Result<StageOutcome> {
        let _g = self.lock()?;
        self.extract_statements_inner()
    }

    fn extract_statements_inner(&self) -> Result<StageOutcome> {
        let wd = &self.workdir;
        require(&wd.manifest(), "ingest")?;
        let cfg = &self.config.statements;
        let set = self.profiles(None)?;
        let profile = set.get(&cfg.profile)?.clone();
        let template_path = self.config.paths.statement_prompt.as_ref().map(|p| self.config.resolve(p));
        let mut inputs = vec![wd.manifest()];
        inputs.extend(template_path.clone());
        let params = serde_json::json!({ "profile": profile_fingerprint(&profile), "byte_budget": cfg.byte_budget });
        let outputs = [wd.statements(), wd.statement_failures()];
        self.guarded(Stage::ExtractStatements, params, &inputs, &outputs, || {
            let template = match &template_path {
                Some(p) => PromptTemplate::load(p)?,
                None => PromptTemplate::default(),
            };
            let mut manifest = CorpusManifest::load(&wd.manifest())?;
            manifest.load_sources()?;
            let gateway = Gateway::connect(&profile)?;
            let log = ExchangeLog::new();
            let run = extract_corpus(&manifest.entries, &gateway, &template, cfg.byte_budget, Some(&log))?;
            save_statements(&wd.statements(), &run.sets)?;
            write_json(&wd.statement_failures(), &run.failures)?;
            log.save(&wd.statement_exchanges())?;
            let steps: usize = run.sets.iter().map(|s| s.steps.len()).sum();
            Ok(format!("{} statement sets, {steps} statements, {} failures", run.sets.len(), run.failures.len()))
        })
    }

    fn cluster_config(&self) -> ClusterConfig {
        self.config.clustering.clone()
    }

    pub fn cluster(&self) -> Result<StageOutcome> {
        let _g = self.lock()?;
        self.cluster_inner()
    }

    fn cluster_inner(&self) -> Result<StageOutcome> {
        let wd = &self.workdir;
        require(&wd.statements(), "extract-statements")?;
        let cfg = self.cluster_config();
        let params = serde_json::to_value(&cfg).map_err(|e| Error::parse("cluster config", e))?;
        self.guarded(Stage::Cluster, params, &[wd.statements()], &[wd.clusters(), wd.review()], || {
            let sets = load_statements(&wd.statements())?;
            let run = cluster_statements(&sets, &cfg)?;
            let artifact = ClusterArtifact {
                perplexity: run.embedding.perplexity,
                kl_divergence: run.embedding.kl_divergence,
                best_k: run.selection.best_k,
                bic_curve: run.selection.curve.clone(),
                statements: run.statements.clone(),
                points: run.embedding.points.clone(),
                assignments: run.assignments.clone(),
            };
            write_json(&wd.clusters(), &artifact)?;
            run.review.save(&wd.review())?;
            Ok(format!(
                "{} statements, K* = {} (BIC over K = {}..={})",
                artifact.statements.len(),
                artifact.best_k,
                artifact.bic_curve.first().map_or(0, |b| b.k),
                artifact.bic_curve.last().map_or(0, |b| b.k)
            ))
        })
    }

    pub fn review(&self, from: Option<&Path>) -> Result<StageOutcome> {
        let _g = self.lock()?;
        self.review_inner(from)
    }

    /// Imports the expert-edited review file (or a framework JSON) as the
    /// working framework.
    fn review_inner(&self, from: Option<&Path>) -> Result<StageOutcome> {
        let wd = &self.workdir;
        let source = match (from, &self.config.paths.framework) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => self.config.resolve(p),
            (None, None) => {
                require(&wd.review(), "cluster")?;
                wd.review()
            }
        };
        if !source.is_file() {
            return Err(Error::io(&source, std::io::Error::new(std::io::ErrorKind::NotFound, "framework source not found")));
        }
        let params = serde_json::json!({ "source": source });
        self.guarded(Stage::Review, params, &[source.clone()], &[wd.framework()], || {
            let fw = import_framework(&source)?;
            fw.save(&wd.framework())?;
            let (c, s, l) = fw.level_counts();
            Ok(format!("framework with {c} categories, {s} subcategories, {l} functions"))
        })
    }

    pub fn map(&self, args: &MapArgs) -> Result<StageOutcome> {
        let _g = self.lock()?;
        self.map_inner(args)
    }

    fn map_inner(&self, args: &MapArgs) -> Result<StageOutcome> {
        let wd = &self.workdir;
        let itemsets = args.itemsets.clone().unwrap_or_else(|| wd.itemsets());
        let fw_path = args.framework.clone().unwrap_or_else(|| wd.framework());
        let out = args.out.clone().unwrap_or_else(|| wd.kb());
        require(&itemsets, "mine")?;
        require(&fw_path, "review")?;
        let set = self.profiles(args.profiles.as_deref())?;
        let names: Vec<String> = if self.config.mapping.profiles.is_empty() {
            set.names().map(String::from).collect()
        } else {
            self.config.mapping.profiles.clone()
        };
        if names.is_empty() {
            return Err(Error::GatewayConfig("no gateway profiles to map with".into()));
        }
        let profiles = names.iter().map(|n| set.get(n).cloned()).collect::<Result<Vec<_>>>()?;
        let template_path = self.config.paths.mapping_prompt.as_ref().map(|p| self.config.resolve(p));
        let cfg = MapConfig {
            rounds: args.rounds.unwrap_or(self.config.mapping.rounds),
            band_width: self.config.mapping.band_width,
        };
        let mut inputs = vec![itemsets.clone(), fw_path.clone()];
        inputs.extend(template_path.clone());
        let params = serde_json::json!({
            "profiles": profiles.iter().map(profile_fingerprint).collect::<Vec<_>>(),
            "rounds": cfg.rounds,
            "band_width": cfg.band_width,
        });
        self.guarded(Stage::Map, params, &inputs, &[out.clone()], || {
            let template = match &template_path {
                Some(p) => MappingTemplate::load(p)?,
                None => MappingTemplate::default(),
            };
            let file = ItemsetFile::load(&itemsets)?;
            let fw = SemanticFramework::load(&fw_path)?;
            let gateways = profiles.iter().map(Gateway::connect).collect::<Result<Vec<_>>>()?;
            let log = ExchangeLog::new();
            let kb = build_kb(&file.itemsets, &fw, &gateways, &template, &cfg, Some(&log))?;
            kb.save(&out)?;
            log.save(&out.with_file_name(format!(
                "{}_exchanges.jsonl",
                out.file_stem().unwrap_or_default().to_string_lossy()
            )))?;
            Ok(format!(
                "{} records from {} itemsets with {} ({} failures)",
                kb.records.len(),
                file.itemsets.len(),
                names.join("+"),
                kb.failures.len()
            ))
        })
    }

    /// Re-decides a knowledge base for one model combination.
    pub fn vote(&self, kb: Option<&Path>, combination: &str, out: Option<&Path>) -> Result<StageOutcome> {
        let _g = self.lock()?;
        let wd = &self.workdir;
        let kb_path = kb.map_or_else(|| wd.kb(), Path::to_path_buf);
        require(&kb_path, "map")?;
        let combo = parse_combination(combination);
        let out = out.map_or_else(|| wd.root.join(format!("kb_{}.json", combo.join("+"))), Path::to_path_buf);
        let fw_path = wd.framework();
        require(&fw_path, "review")?;
        let params = serde_json::json!({ "combination": combo });
        self.guarded(Stage::Vote, params, &[kb_path.clone(), fw_path.clone()], &[out.clone()], || {
            let kb = KnowledgeBase::load(&kb_path)?;
            let fw = SemanticFramework::load(&fw_path)?;
            let voted = kb.revote(&combo, &fw)?;
            voted.save(&out)?;
            Ok(format!("{} records voted by {}", voted.records.len(), combo.join("+")))
        })
    }

    pub fn eval(&self, args: &EvalArgs) -> Result<StageOutcome> {
        let _g = self.lock()?;
        self.eval_inner(args)
    }

    fn eval_inner(&self, args: &EvalArgs) -> Result<StageOutcome> {
        let wd = &self.workdir;
        let kb_path = args.kb.clone().unwrap_or_else(|| wd.kb());
        let fw_path = args.framework.clone().unwrap_or_else(|| wd.framework());
        let out = args.out.clone().unwrap_or_else(|| wd.report());
        require(&kb_path, "map")?;
        require(&fw_path, "review")?;
        let gold_path = match (&args.gold, &self.config.paths.gold) {
            (Some(g), _) => g.clone(),
            (None, Some(g)) => self.config.resolve(g),
            (None, None) => return Err(Error::Validation("no gold file given (set paths.gold or pass --gold)".into())),
        };
        let csv_path = out.with_file_name(format!("{}_records.csv", out.file_stem().unwrap_or_default().to_string_lossy()));
        let params = serde_json::json!({ "weights": self.config.eval.weights, "combinations": self.config.eval.combinations });
        let inputs = [kb_path.clone(), fw_path.clone(), gold_path.clone()];
        self.guarded(Stage::Eval, params, &inputs, &[out.clone(), csv_path.clone()], || {
            let kb = KnowledgeBase::load(&kb_path)?;
            let fw = SemanticFramework::load(&fw_path)?;
            let gold = load_gold(&gold_path, &fw)?;
            let combinations = if self.config.eval.combinations.is_empty() {
                None
            } else {
                Some(self.config.eval.combinations.iter().map(|c| parse_combination(c)).collect())
            };
            let cfg = EvalConfig {
                weights: self.config.eval.weights,
                combinations,
                ..EvalConfig::default()
            };
            let report = evaluate(&kb, &gold, &fw, &cfg)?;
            report.save(&out)?;
            report.save_records_csv(&csv_path)?;
            if !report.missing.is_empty() {
                log::warn!("{} gold combinations are not in the knowledge base", report.missing.len());
            }
            Ok(report.to_table())
        })
    }

    pub fn sample_gold(&self, kb: Option<&Path>, out: Option<&Path>, strategy: &SamplingStrategy) -> Result<Vec<GoldCandidate>> {
        let _g = self.lock()?;
        let kb_path = kb.map_or_else(|| self.workdir.kb(), Path::to_path_buf);
        require(&kb_path, "map")?;
        let kb = KnowledgeBase::load(&kb_path)?;
        let picks = sample_gold_candidates(&kb.records, strategy);
        write_jsonl(&out.map_or_else(|| self.workdir.gold_candidates(), Path::to_path_buf), &picks)?;
        Ok(picks)
    }

    pub fn plot(&self, kinds: &[PlotKind]) -> Result<StageOutcome> {
        let _g = self.lock()?;
        self.plot_inner(kinds)
    }

    fn plot_inner(&self, kinds: &[PlotKind]) -> Result<StageOutcome> {
        let wd = &self.workdir;
        let kinds = if kinds.is_empty() { PlotKind::ALL.to_vec() } else { kinds.to_vec() };
        let mut inputs = Vec::new();
        for k in &kinds {
            let (p, stage) = match k {
                PlotKind::BicCurve | PlotKind::EmbeddingScatter => (wd.clusters(), "cluster"),
                PlotKind::PairHeatmap => (wd.pairs(), "mine"),
                PlotKind::ItemsetHistogram => (wd.itemsets(), "mine"),
            };
            require(&p, stage)?;
            if !inputs.contains(&p) {
                inputs.push(p);
            }
        }
        let outputs: Vec<PathBuf> = kinds.iter().map(|k| wd.plot(*k)).collect();
        let names: Vec<&str> = kinds.iter().map(|k| k.name()).collect();
        let params = serde_json::json!({ "kinds": names, "top_operators": self.config.plot.top_operators });
        self.guarded(Stage::Plot, params, &inputs, &outputs, || {
            for k in &kinds {
                let csv = match k {
                    PlotKind::BicCurve => bic_curve_csv(&read_json(&wd.clusters())?),
                    PlotKind::EmbeddingScatter => scatter_csv(&read_json(&wd.clusters())?),
                    PlotKind::PairHeatmap => heatmap_csv(&PairFrequencyTable::load(&wd.pairs())?, self.config.plot.top_operators),
                    PlotKind::ItemsetHistogram => histogram_csv(&ItemsetFile::load(&wd.itemsets())?),
                };
                write_atomic(&wd.plot(*k), csv.as_bytes())?;
            }
            Ok(format!("wrote {}", names.join(", ")))
        })
    }

    /// Every stage from ingest to eval, then the plot data. Eval is skipped
    /// when no gold file is configured.
    pub fn run_all(&self) -> Result<Vec<StageOutcome>> {
        let _g = self.lock()?;
        let mut out = vec![
            self.ingest_inner()?,
            self.extract_calls_inner()?,
            self.mine_inner()?,
            self.extract_statements_inner()?,
            self.cluster_inner()?,
            self.review_inner(None)?,
            self.map_inner(&MapArgs::default())?,
        ];
        if self.config.paths.gold.is_some() {
            out.push(self.eval_inner(&EvalArgs::default())?);
        }
        out.push(self.plot_inner(&[])?);
        Ok(out)
    }
}

/// Profile fields that influence replies, for stage fingerprints.
fn profile_fingerprint(p: &crate::gateway::GatewayProfile) -> serde_json::Value {
    let mut v = serde_json::to_value(p).unwrap_or_default();
    if let Some(f) = p.mock.fixtures.as_ref().filter(|f| f.is_file()) {
        v["fixtures_sha256"] = serde_json::Value::String(file_sha256(f).unwrap_or_default());
    }
    v
}

pub fn bic_curve_csv(a: &ClusterArtifact) -> String {
    let mut s = String::from("k,bic,log_likelihood,degenerate\n");
    for b in &a.bic_curve {
        s.push_str(&format!("{},{:.6},{:.6},{}\n", b.k, b.bic, b.log_likelihood, b.degenerate));
    }
    s
}

pub fn scatter_csv(a: &ClusterArtifact) -> String {
    let mut s = String::from("x,y,cluster_id\n");
    for (p, c) in a.points.iter().zip(&a.assignments) {
        s.push_str(&format!("{:.6},{:.6},{c}\n", p[0], p[1]));
    }
    s
}

/// Caller-by-callee counts over the `top` operators with the largest call
/// counts (ties by name).
pub fn heatmap_csv(table: &PairFrequencyTable, top: usize) -> String {
    let mut ops: Vec<&String> = table.universe().iter().collect();
    ops.sort_by(|a, b| table.marginal(b).cmp(&table.marginal(a)).then(a.cmp(b)));
    ops.truncate(top.max(1));
    let quote = |s: &str| if s.contains([',', '"']) { format!("\"{}\"", s.replace('"', "\"\"")) } else { s.to_string() };
    let mut s = String::from("caller");
    for c in &ops {
        s.push(',');
        s.push_str(&quote(c));
    }
    s.push('\n');
    for r in &ops {
        s.push_str(&quote(r));
        for c in &ops {
            s.push_str(&format!(",{}", table.count(r, c)));
        }
        s.push('\n');
    }
    s
}

pub fn histogram_csv(file: &ItemsetFile) -> String {
    let mut s = String::from("k,count\n");
    for (k, c) in file.size_histogram() {
        s.push_str(&format!("{k},{c}\n"));
    }
    s
}

/// Lookup result rendered for the terminal.
pub fn lookup_text(kb: &KnowledgeBase, query: &str, framework: &SemanticFramework) -> String {
    let r = kb_lookup(kb, query, framework);
    match (&r.leaf, &r.suggestion) {
        (None, Some(s)) => format!("no function matches {query:?}; did you mean {s:?}?\n"),
        (None, None) => "empty query\n".to_string(),
        (Some(leaf), _) => {
            let noun = if r.records.len() == 1 { "record" } else { "records" };
            let mut out = format!("{} | {} ({} {noun})\n", leaf.id, leaf.path, r.records.len());
            for rec in &r.records {
                out.push_str(&lookup_line(rec));
            }
            out
        }
    }
}

fn lookup_line(r: &KnowledgeBaseRecord) -> String {
    format!("  {}  support {:.4}  {}\n", r.record_id, r.support, r.operators)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
        let c = PipelineConfig::from_toml("[mining]\nmin_support = 0.1\n", Path::new("/x")).unwrap();
        assert_eq!(c.mining.min_support, 0.1);
        assert_eq!(c.resolve(Path::new("a")), Path::new("/x/a"));
    }

    #[test]
    fn bad_weights_and_unknown_keys() {
        assert!(PipelineConfig::from_toml("[eval.weights]\nsemantic = 0.7\nstructure = 0.4\n", Path::new(".")).is_err());
        assert!(PipelineConfig::from_toml("[mining]\nminsupport = 0.1\n", Path::new(".")).is_err());
    }

    #[test]
    fn plot_kind_names() {
        for k in PlotKind::ALL {
            assert_eq!(k.name().parse::<PlotKind>().unwrap(), k);
        }
        assert_eq!("pair-heatmap".parse::<PlotKind>().unwrap(), PlotKind::PairHeatmap);
        assert!("pie".parse::<PlotKind>().is_err());
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(".lock");
        let g = LockGuard::acquire(&p).unwrap();
        assert!(matches!(LockGuard::acquire(&p), Err(Error::Locked(_))));
        drop(g);
        LockGuard::acquire(&p).unwrap();
    }

    #[test]
    fn heatmap_layout() {
        let t = PairFrequencyTable::from_counts([("a", "b", 3), ("b", "a", 1), ("c", "a", 1)]);
        let csv = heatmap_csv(&t, 2);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "caller,a,b");
        assert_eq!(lines[1], "a,0,3");
        assert_eq!(lines[2], "b,1,0");
    }
}
