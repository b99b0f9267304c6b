//! Seeded, hash-tracked pipeline stages driven by a single TOML file.
//!
//! Every stage reads its inputs from and writes its outputs to the artifact
//! directory, then appends one [`StageRecord`] to `manifest.jsonl` there.
//! A stage's seed is derived from the global seed and the stage name, so
//! stages can be rerun in isolation and reproduce the same bytes.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{build_cases, run_anycontext, write_cases, EvalConfig, EvalReport, PolicyGenerator};
use crate::graph::{
    build_graph_from_motions, embed_kinematic, extract_all, read_instructions, write_instructions, ExtractConfig, Instruction, MotionGraph,
    Span, Task,
};
use crate::grpo::{train_grpo, GrpoConfig, GrpoPrompt, RewardConfig};
use crate::hashing::hash_path;
use crate::motion::{generate_corpus, load_corpus, save_corpus, CorpusConfig, Motion};
use crate::rng::{self, derive_seed};
use crate::rvq::{train_tokenizer, TokenizerConfig, TokenizerModel};
use crate::seq::{
    compile_instruction, compile_prompt, flatten_tokens, train_sft, MotionTokens, OptimizerState, PolicyCheckpoint, PolicyConfig,
    PolicyModel, SftConfig, TextVocab, TokenSequence, Vocab,
};

pub const STAGES: [&str; 7] = [
    "gen-data",
    "build-graph",
    "make-instructions",
    "train-tokenizer",
    "sft",
    "grpo",
    "eval",
];

pub const MANIFEST: &str = "manifest.jsonl";
pub const CORPUS_DIR: &str = "corpus";
pub const GRAPH_FILE: &str = "graph.json";
pub const INSTRUCTIONS_FILE: &str = "instructions.jsonl";
pub const TOKENIZER_FILE: &str = "tokenizer.json";
pub const TOKENIZER_REPORT: &str = "tokenizer_report.json";
pub const SFT_POLICY: &str = "policy_sft.json";
pub const SFT_LOG: &str = "sft_log.jsonl";
pub const GRPO_POLICY: &str = "policy_grpo.json";
pub const GRPO_LOG: &str = "grpo_log.jsonl";
pub const CASES_FILE: &str = "cases.jsonl";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const EVAL_TEXT: &str = "eval_report.txt";

const REQUIRED: [&str; 2] = ["seed", "artifact_dir"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Cosine threshold for an edge between two segments.
    pub threshold: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { threshold: 0.9 }
    }
}

impl GraphConfig {
    pub fn violations(&self) -> Vec<String> {
        if (-1.0..=1.0).contains(&self.threshold) {
            Vec::new()
        } else {
            vec!["graph.threshold must lie in [-1, 1]".into()]
        }
    }
}

/// One experiment: global seed, artifact location and a section per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Relative paths are resolved against the config file's directory.
    pub artifact_dir: PathBuf,
    pub corpus: CorpusConfig,
    pub graph: GraphConfig,
    pub instructions: ExtractConfig,
    pub tokenizer: TokenizerConfig,
    pub model: PolicyConfig,
    pub sft: SftConfig,
    pub grpo: GrpoConfig,
    pub reward: RewardConfig,
    pub eval: EvalConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    artifact_dir: Option<PathBuf>,
    #[serde(default)]
    corpus: CorpusConfig,
    #[serde(default)]
    graph: GraphConfig,
    #[serde(default)]
    instructions: ExtractConfig,
    #[serde(default)]
    tokenizer: TokenizerConfig,
    #[serde(default)]
    model: PolicyConfig,
    #[serde(default)]
    sft: SftConfig,
    #[serde(default)]
    grpo: GrpoConfig,
    #[serde(default)]
    reward: RewardConfig,
    #[serde(default)]
    eval: EvalConfig,
}

impl PipelineConfig {
    /// Defaults everywhere, with the given seed and artifact directory.
    pub fn new(seed: u64, artifact_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed,
            artifact_dir: artifact_dir.into(),
            corpus: CorpusConfig::default(),
            graph: GraphConfig::default(),
            instructions: ExtractConfig::default(),
            tokenizer: TokenizerConfig::default(),
            model: PolicyConfig::default(),
            sft: SftConfig::default(),
            grpo: GrpoConfig::default(),
            reward: RewardConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    /// Every violated constraint across all sections.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        v.extend(self.corpus.violations());
        v.extend(self.graph.violations());
        v.extend(self.instructions.violations());
        v.extend(self.tokenizer.violations());
        v.extend(self.model.violations());
        v.extend(self.sft.violations());
        v.extend(self.grpo.violations());
        v.extend(self.reward.violations());
        v.extend(self.eval.violations());
        if self.grpo.max_new >= self.model.context {
            v.push("grpo.max_new must be < model.context".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Parses a full experiment file. Missing required keys and range
    /// violations are reported together.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        parse(text, true)
    }

    /// Parses a file that may omit `seed` and `artifact_dir` (seed 0, `.`),
    /// for single-stage commands that only need the sections.
    pub fn sections_from_toml_str(text: &str) -> Result<Self> {
        parse(text, false)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.artifact_dir.join(name)
    }
}

fn parse(text: &str, strict: bool) -> Result<PipelineConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))?;
    let mut problems: Vec<String> = if strict {
        REQUIRED
            .iter()
            .filter(|k| !table.contains_key(**k))
            .map(|k| format!("{k} is required"))
            .collect()
    } else {
        Vec::new()
    };
    let raw: RawConfig = match table.try_into() {
        Ok(r) => r,
        Err(e) => {
            problems.push(e.message().to_string());
            return Err(Error::Config(problems));
        }
    };
    let cfg = PipelineConfig {
        seed: raw.seed.unwrap_or(0),
        artifact_dir: raw.artifact_dir.unwrap_or_else(|| PathBuf::from(".")),
        corpus: raw.corpus,
        graph: raw.graph,
        instructions: raw.instructions,
        tokenizer: raw.tokenizer,
        model: raw.model,
        sft: raw.sft,
        grpo: raw.grpo,
        reward: raw.reward,
        eval: raw.eval,
    };
    problems.extend(cfg.violations());
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(problems))
    }
}

/// Reads, validates and resolves a pipeline config file.
pub fn validate_config(path: &Path) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::from_toml_str(&fs::read_to_string(path)?)?;
    if cfg.artifact_dir.is_relative() {
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.artifact_dir = base.join(&cfg.artifact_dir);
    }
    Ok(cfg)
}

/// One manifest line: what a stage read and wrote, and under which config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub seed: u64,
    /// Artifact path (relative to the artifact directory) to sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub config: serde_json::Value,
    pub wall_clock_s: f64,
    pub tool_version: String,
}

/// Reads every record of a manifest file, in append order.
pub fn read_manifest(path: &Path) -> Result<Vec<StageRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

fn append_manifest(path: &Path, rec: &StageRecord) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(rec)?)?;
    Ok(())
}

/// An output artifact whose current hash differs from the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct HashMismatch {
    pub stage: String,
    pub path: String,
    pub recorded: String,
    /// `None` when the artifact no longer exists.
    pub actual: Option<String>,
}

/// Rehashes the outputs of the latest record of each stage. Paths are
/// resolved against the manifest's directory.
pub fn verify_manifest(path: &Path) -> Result<Vec<HashMismatch>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut latest: BTreeMap<String, StageRecord> = BTreeMap::new();
    for rec in read_manifest(path)? {
        latest.insert(rec.stage.clone(), rec);
    }
    let mut out = Vec::new();
    for rec in latest.values() {
        for (p, h) in &rec.outputs {
            let full = base.join(p);
            let actual = if full.exists() { Some(hash_path(&full)?) } else { None };
            if actual.as_deref() != Some(h.as_str()) {
                out.push(HashMismatch {
                    stage: rec.stage.clone(),
                    path: p.clone(),
                    recorded: h.clone(),
                    actual,
                });
            }
        }
    }
    Ok(out)
}

/// `(artifact, producing stage)` pairs a stage needs.
pub fn stage_inputs(stage: &str) -> Result<&'static [(&'static str, &'static str)]> {
    Ok(match stage {
        "gen-data" => &[],
        "build-graph" => &[(CORPUS_DIR, "gen-data")],
        "make-instructions" => &[(GRAPH_FILE, "build-graph")],
        "train-tokenizer" => &[(CORPUS_DIR, "gen-data")],
        "sft" => &[
            (CORPUS_DIR, "gen-data"),
            (TOKENIZER_FILE, "train-tokenizer"),
            (INSTRUCTIONS_FILE, "make-instructions"),
        ],
        "grpo" => &[
            (CORPUS_DIR, "gen-data"),
            (TOKENIZER_FILE, "train-tokenizer"),
            (INSTRUCTIONS_FILE, "make-instructions"),
            (SFT_POLICY, "sft"),
        ],
        "eval" => &[(CORPUS_DIR, "gen-data"), (TOKENIZER_FILE, "train-tokenizer"), (GRPO_POLICY, "grpo")],
        other => {
            return Err(Error::Config(vec![format!(
                "unknown stage `{other}`; expected one of {}",
                STAGES.join(", ")
            )]))
        }
    })
}

pub fn stage_outputs(stage: &str) -> Result<&'static [&'static str]> {
    Ok(match stage {
        "gen-data" => &[CORPUS_DIR],
        "build-graph" => &[GRAPH_FILE],
        "make-instructions" => &[INSTRUCTIONS_FILE],
        "train-tokenizer" => &[TOKENIZER_FILE, TOKENIZER_REPORT],
        "sft" => &[SFT_POLICY, SFT_LOG],
        "grpo" => &[GRPO_POLICY, GRPO_LOG],
        "eval" => &[CASES_FILE, EVAL_REPORT, EVAL_TEXT],
        other => return Err(Error::Config(vec![format!("unknown stage `{other}`")])),
    })
}

fn stage_config(cfg: &PipelineConfig, stage: &str) -> Result<serde_json::Value> {
    let v = match stage {
        "gen-data" => serde_json::to_value(&cfg.corpus)?,
        "build-graph" => serde_json::to_value(&cfg.graph)?,
        "make-instructions" => serde_json::to_value(&cfg.instructions)?,
        "train-tokenizer" => serde_json::to_value(&cfg.tokenizer)?,
        "sft" => serde_json::json!({ "model": cfg.model, "sft": cfg.sft }),
        "grpo" => serde_json::json!({ "grpo": cfg.grpo, "reward": cfg.reward }),
        _ => serde_json::to_value(&cfg.eval)?,
    };
    Ok(v)
}

/// Runs one stage: checks inputs, hashes them, executes, hashes the
/// outputs and appends the record to the manifest.
pub fn run_stage(stage: &str, cfg: &PipelineConfig) -> Result<StageRecord> {
    let inputs = stage_inputs(stage)?;
    cfg.validate()?;
    let mut in_hashes = BTreeMap::new();
    for &(p, producer) in inputs {
        let full = cfg.path(p);
        if !full.exists() {
            return Err(Error::Dependency {
                stage: stage.into(),
                needs: producer.into(),
                path: full,
            });
        }
        in_hashes.insert(p.to_string(), hash_path(&full)?);
    }
    fs::create_dir_all(&cfg.artifact_dir)?;
    let seed = cfg.stage_seed(stage);
    log::info!("stage {stage} (seed {seed})");
    let t0 = Instant::now();
    match stage {
        "gen-data" => gen_data(cfg, seed)?,
        "build-graph" => build_graph(cfg)?,
        "make-instructions" => make_instructions(cfg, seed)?,
        "train-tokenizer" => tokenizer_stage(cfg, seed)?,
        "sft" => sft_stage(cfg, seed)?,
        "grpo" => grpo_stage(cfg, seed)?,
        _ => {
            eval_stage(cfg, seed)?;
        }
    }
    let wall_clock_s = t0.elapsed().as_secs_f64();
    let mut out_hashes = BTreeMap::new();
    for p in stage_outputs(stage)? {
        out_hashes.insert(p.to_string(), hash_path(&cfg.path(p))?);
    }
    let rec = StageRecord {
        stage: stage.into(),
        seed,
        inputs: in_hashes,
        outputs: out_hashes,
        config: stage_config(cfg, stage)?,
        wall_clock_s,
        tool_version: env!("CARGO_PKG_VERSION").into(),
    };
    append_manifest(&cfg.path(MANIFEST), &rec)?;
    log::info!("stage {stage} done in {wall_clock_s:.1}s");
    Ok(rec)
}

/// Runs all stages in order.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<StageRecord>> {
    cfg.validate()?;
    STAGES.iter().map(|s| run_stage(s, cfg)).collect()
}

fn gen_data(cfg: &PipelineConfig, seed: u64) -> Result<()> {
    let corpus = generate_corpus(&cfg.corpus, seed)?;
    let dir = cfg.path(CORPUS_DIR);
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    save_corpus(&dir, &corpus)?;
    Ok(())
}

fn build_graph(cfg: &PipelineConfig) -> Result<()> {
    let corpus = load_corpus(&cfg.path(CORPUS_DIR))?;
    let g = build_graph_from_motions(&corpus, cfg.graph.threshold)?;
    log::info!("graph: {} nodes, {} edges", g.nodes.len(), g.edges.len());
    g.save(&cfg.path(GRAPH_FILE))
}

fn make_instructions(cfg: &PipelineConfig, seed: u64) -> Result<()> {
    let g = MotionGraph::load(&cfg.path(GRAPH_FILE))?;
    let ins = extract_all(&g, &cfg.instructions, seed)?;
    log::info!("{} instructions", ins.len());
    write_instructions(&cfg.path(INSTRUCTIONS_FILE), &ins)
}

fn tokenizer_stage(cfg: &PipelineConfig, seed: u64) -> Result<()> {
    let corpus = load_corpus(&cfg.path(CORPUS_DIR))?;
    let (tk, report) = train_tokenizer(&corpus, &cfg.tokenizer, seed)?;
    tk.save(&cfg.path(TOKENIZER_FILE))?;
    fs::write(cfg.path(TOKENIZER_REPORT), serde_json::to_vec(&report)?)?;
    Ok(())
}

/// Text vocabulary over the template grammar and every instruction text.
pub fn text_vocab_for(ins: &[Instruction]) -> TextVocab {
    TextVocab::build(ins.iter().flat_map(|i| i.turns.iter().chain(&i.response)).filter_map(|s| match s {
        Span::Text(t) => Some(t.as_str()),
        Span::Motion(_) => None,
    }))
}

/// Flattened token spans of every corpus motion.
pub fn motion_tokens(corpus: &[Motion], tk: &TokenizerModel, v: &Vocab) -> Result<MotionTokens> {
    corpus.iter().map(|m| Ok((m.id, flatten_tokens(&tk.tokenize(m)?, v)?))).collect()
}

/// Compiles instructions into training sequences, dropping any that do not
/// fit the context.
pub fn sft_sequences(ins: &[Instruction], tv: &TextVocab, v: &Vocab, mt: &MotionTokens, context: usize) -> Result<Vec<TokenSequence>> {
    let mut out = Vec::with_capacity(ins.len());
    for i in ins {
        let s = compile_instruction(i, tv, v, mt)?;
        if s.len() <= context {
            out.push(s);
        } else {
            log::warn!("dropping {} instruction of {} tokens", i.task.as_str(), s.len());
        }
    }
    Ok(out)
}

/// GRPO prompts: every non-reflection instruction answered by a single
/// motion, whose prompt leaves room for `max_new` tokens.
pub fn grpo_prompts(
    ins: &[Instruction],
    corpus: &[Motion],
    tv: &TextVocab,
    mt: &MotionTokens,
    context: usize,
    max_new: usize,
) -> Result<Vec<GrpoPrompt>> {
    let by_id: HashMap<u64, &Motion> = corpus.iter().map(|m| (m.id, m)).collect();
    let mut out = Vec::new();
    for i in ins {
        if i.task == Task::Reflection || !matches!(i.response.as_slice(), [Span::Motion(_)]) {
            continue;
        }
        let prompt = compile_prompt(&i.turns, tv, mt)?;
        if prompt.len() + max_new > context {
            continue;
        }
        let target = by_id.get(&i.target).ok_or(Error::UnknownSegment(i.target))?;
        out.push(GrpoPrompt {
            prompt,
            target: embed_kinematic(target),
        });
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut body = String::new();
    for it in items {
        body.push_str(&serde_json::to_string(it)?);
        body.push('\n');
    }
    fs::write(path, body)?;
    Ok(())
}

#[derive(Serialize)]
struct LossRecord {
    step: usize,
    loss: f64,
}

fn sft_stage(cfg: &PipelineConfig, seed: u64) -> Result<()> {
    let corpus = load_corpus(&cfg.path(CORPUS_DIR))?;
    let tk = TokenizerModel::load(&cfg.path(TOKENIZER_FILE))?;
    let ins = read_instructions(&cfg.path(INSTRUCTIONS_FILE))?;
    let tv = text_vocab_for(&ins);
    let v = Vocab::new(tv.len(), tk.config.levels, tk.config.codebook_size)?;
    let mt = motion_tokens(&corpus, &tk, &v)?;
    let seqs = sft_sequences(&ins, &tv, &v, &mt, cfg.model.context)?;
    let mut pm = PolicyModel::new(cfg.model.clone(), v, derive_seed(seed, "init"))?;
    let mut opt = OptimizerState::new(cfg.sft.optimizer, pm.num_params(), cfg.sft.momentum);
    let report = train_sft(&mut pm, &mut opt, &seqs, &cfg.sft, derive_seed(seed, "batches"), |step, loss| {
        if step % 100 == 0 {
            log::info!("sft step {step} loss {loss:.4}");
        }
    })?;
    let log: Vec<LossRecord> = report
        .losses
        .iter()
        .enumerate()
        .map(|(step, &loss)| LossRecord { step, loss })
        .collect();
    write_jsonl(&cfg.path(SFT_LOG), &log)?;
    PolicyCheckpoint::new(pm, tv, Some(opt)).save(&cfg.path(SFT_POLICY))
}

fn grpo_stage(cfg: &PipelineConfig, seed: u64) -> Result<()> {
    let corpus = load_corpus(&cfg.path(CORPUS_DIR))?;
    let tk = TokenizerModel::load(&cfg.path(TOKENIZER_FILE))?;
    let ins = read_instructions(&cfg.path(INSTRUCTIONS_FILE))?;
    let ck = PolicyCheckpoint::load(&cfg.path(SFT_POLICY))?;
    let mut pm = ck.model;
    let mt = motion_tokens(&corpus, &tk, &pm.vocab)?;
    let prompts = grpo_prompts(&ins, &corpus, &ck.text_vocab, &mt, pm.config.context, cfg.grpo.max_new)?;
    let mut opt = OptimizerState::new(cfg.sft.optimizer, pm.num_params(), cfg.sft.momentum);
    let report = train_grpo(&mut pm, &mut opt, &tk, &prompts, &cfg.grpo, &cfg.reward, seed, |r| {
        if r.step % 10 == 0 {
            log::info!("grpo step {} reward {:.4} kl {:.2e}", r.step, r.mean_reward, r.kl);
        }
    })?;
    write_jsonl(&cfg.path(GRPO_LOG), &report.records)?;
    PolicyCheckpoint::new(pm, ck.text_vocab, Some(opt)).save(&cfg.path(GRPO_POLICY))
}

/// Benchmark of a policy checkpoint against a corpus. With `think` off
/// the reflection loop is limited to a single generation.
pub fn evaluate_policy(
    ck: &PolicyCheckpoint,
    tk: &TokenizerModel,
    corpus: &[Motion],
    cases: &[crate::eval::BenchCase],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<EvalReport> {
    let mt = motion_tokens(corpus, tk, &ck.model.vocab)?;
    let by_id: HashMap<u64, Motion> = corpus.iter().map(|m| (m.id, m.clone())).collect();
    let mut reflect = cfg.reflect.clone();
    if !cfg.think {
        reflect.max_rounds = 0;
    }
    let gen = PolicyGenerator {
        policy: &ck.model,
        tokenizer: tk,
        text_vocab: &ck.text_vocab,
        motion_tokens: &mt,
        corpus: &by_id,
        reflect,
    };
    run_anycontext(&gen, corpus, cases, cfg, seed)
}

fn eval_stage(cfg: &PipelineConfig, seed: u64) -> Result<EvalReport> {
    let corpus = load_corpus(&cfg.path(CORPUS_DIR))?;
    let tk = TokenizerModel::load(&cfg.path(TOKENIZER_FILE))?;
    let ck = PolicyCheckpoint::load(&cfg.path(GRPO_POLICY))?;
    let cases = build_cases(&corpus, derive_seed(seed, "cases"))?;
    write_cases(&cfg.path(CASES_FILE), &cases)?;
    let report = evaluate_policy(&ck, &tk, &corpus, &cases, &cfg.eval, rng::derive_seed(seed, "generate"))?;
    fs::write(cfg.path(EVAL_REPORT), serde_json::to_vec_pretty(&report)?)?;
    fs::write(cfg.path(EVAL_TEXT), report.to_text())?;
    Ok(report)
}
