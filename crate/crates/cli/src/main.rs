//! `motiongen` command line: single stages over artifact files, and the
//! full pipeline driven by one TOML experiment file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use motiongen::eval::{build_cases, read_cases, reflect_generate, write_cases, ReflectConfig};
use motiongen::graph::{build_graph_from_motions, extract_all, read_instructions, write_instructions, MotionGraph, Span, Task};
use motiongen::grpo::{decode_completion, train_grpo};
use motiongen::motion::{generate_corpus, load_corpus, save_corpus, write_motion};
use motiongen::pipeline::{
    evaluate_policy, grpo_prompts, motion_tokens, read_manifest, run_stage, sft_sequences, text_vocab_for, validate_config,
    verify_manifest, PipelineConfig, STAGES,
};
use motiongen::rng::derive_seed;
use motiongen::rvq::{train_tokenizer, TokenizerModel};
use motiongen::seq::{compile_prompt, sample, train_sft, OptimizerState, PolicyCheckpoint, PolicyModel, SampleConfig, Vocab};
use motiongen::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_DEPENDENCY: u8 = 3;
const EXIT_RUNTIME: u8 = 4;
const EXIT_VERIFY: u8 = 5;

#[derive(Parser)]
#[command(name = "motiongen", version, about = "Instruction-driven motion generation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Sections {
    /// Experiment TOML; only the sections this command needs are read.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Sections {
    fn load(&self) -> Result<PipelineConfig> {
        match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(PipelineConfig::sections_from_toml_str(&text)?)
            }
            None => Ok(PipelineConfig::new(0, ".")),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural motion corpus.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        sections: Sections,
    },
    /// Train the residual quantized tokenizer on a corpus.
    TrainTokenizer {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sections: Sections,
    },
    /// Build the motion graph of a corpus.
    BuildGraph {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
    },
    /// Compile instructions from a motion graph.
    MakeInstructions {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of in_context,edit,multi_turn,reflection.
        #[arg(long, value_delimiter = ',')]
        tasks: Option<Vec<Task>>,
        #[command(flatten)]
        sections: Sections,
    },
    /// Supervised training of a fresh policy on an instruction file.
    Sft {
        /// Instruction file (one JSON record per line).
        #[arg(long)]
        data: PathBuf,
        /// Corpus directory the instructions' motion refs resolve against.
        #[arg(long)]
        motions: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        sections: Sections,
    },
    /// Sample a motion for an interleaved prompt.
    Generate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        motions: PathBuf,
        /// JSON array of spans, e.g. `[{"text": "..."}, {"motion": 3}]`.
        #[arg(long)]
        prompt: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        think: bool,
        #[arg(long, default_value_t = 3)]
        max_rounds: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
    },
    /// GRPO fine-tuning of a policy checkpoint.
    Grpo {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        motions: PathBuf,
        /// TOML with reward fields at top level.
        #[arg(long)]
        reward_config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training log, one JSON record per step.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        sections: Sections,
    },
    /// Build benchmark cases from a corpus.
    MakeCases {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the benchmark on a policy.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        motions: PathBuf,
        #[arg(long)]
        cases: PathBuf,
        #[arg(long, default_value_t = 32)]
        gallery: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long)]
        think: bool,
        #[arg(long)]
        max_rounds: Option<usize>,
        /// JSON report path; the text table goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        sections: Sections,
    },
    /// Staged pipeline over one experiment file.
    Pipeline {
        #[command(subcommand)]
        action: PipelineAction,
    },
}

#[derive(Subcommand)]
enum PipelineAction {
    /// Run all stages, or only the listed ones, in order.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<String>>,
    },
    /// Check that every recorded output still has its recorded hash.
    Verify {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Validate a config and print it with defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug)]
struct VerifyFailed(usize);

impl std::fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} artifact(s) do not match the manifest", self.0)
    }
}

impl std::error::Error for VerifyFailed {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<VerifyFailed>().is_some() {
        return EXIT_VERIFY;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_)) => EXIT_CONFIG,
        Some(Error::Dependency { .. }) => EXIT_DEPENDENCY,
        _ => EXIT_RUNTIME,
    }
}

fn load_text_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {}", path.display(), e.message())]).into())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData { out, count, sections } => {
            let mut cfg = sections.load()?;
            if let Some(n) = count {
                cfg.corpus.count = n;
            }
            let v = cfg.corpus.violations();
            if !v.is_empty() {
                return Err(Error::Config(v).into());
            }
            let corpus = generate_corpus(&cfg.corpus, sections.seed)?;
            save_corpus(&out, &corpus)?;
            println!("wrote {} motions to {}", corpus.len(), out.display());
        }
        Command::TrainTokenizer { corpus, out, sections } => {
            let cfg = sections.load()?;
            let motions = load_corpus(&corpus)?;
            let (tk, report) = train_tokenizer(&motions, &cfg.tokenizer, sections.seed)?;
            tk.save(&out)?;
            println!("reconstruction mse {:.5} -> {:.5}", report.initial_mse, report.final_mse);
        }
        Command::BuildGraph { corpus, out, threshold } => {
            let g = build_graph_from_motions(&load_corpus(&corpus)?, threshold)?;
            g.save(&out)?;
            println!("{} nodes, {} edges", g.nodes.len(), g.edges.len());
        }
        Command::MakeInstructions {
            graph,
            out,
            tasks,
            sections,
        } => {
            let mut cfg = sections.load()?;
            if let Some(t) = tasks {
                cfg.instructions.tasks = t;
            }
            let ins = extract_all(&MotionGraph::load(&graph)?, &cfg.instructions, sections.seed)?;
            write_instructions(&out, &ins)?;
            println!("wrote {} instructions", ins.len());
        }
        Command::Sft {
            data,
            motions,
            tokenizer,
            out,
            steps,
            sections,
        } => {
            let mut cfg = sections.load()?;
            if let Some(s) = steps {
                cfg.sft.steps = s;
            }
            let corpus = load_corpus(&motions)?;
            let tk = TokenizerModel::load(&tokenizer)?;
            let ins = read_instructions(&data)?;
            let tv = text_vocab_for(&ins);
            let v = Vocab::new(tv.len(), tk.config.levels, tk.config.codebook_size)?;
            let mt = motion_tokens(&corpus, &tk, &v)?;
            let seqs = sft_sequences(&ins, &tv, &v, &mt, cfg.model.context)?;
            let mut pm = PolicyModel::new(cfg.model.clone(), v, derive_seed(sections.seed, "init"))?;
            let mut opt = OptimizerState::new(cfg.sft.optimizer, pm.num_params(), cfg.sft.momentum);
            let report = train_sft(
                &mut pm,
                &mut opt,
                &seqs,
                &cfg.sft,
                derive_seed(sections.seed, "batches"),
                |step, loss| {
                    if step % 100 == 0 {
                        log::info!("step {step} loss {loss:.4}");
                    }
                },
            )?;
            let (head, tail) = report.head_tail(20);
            println!("loss {head:.4} -> {tail:.4} over {} steps", report.losses.len());
            PolicyCheckpoint::new(pm, tv, Some(opt)).save(&out)?;
        }
        Command::Generate {
            policy,
            tokenizer,
            motions,
            prompt,
            seed,
            out,
            think,
            max_rounds,
            temperature,
        } => {
            let ck = PolicyCheckpoint::load(&policy)?;
            let tk = TokenizerModel::load(&tokenizer)?;
            let corpus = load_corpus(&motions)?;
            let spans: Vec<Span> = serde_json::from_str(&fs::read_to_string(&prompt)?)?;
            let mt = motion_tokens(&corpus, &tk, &ck.model.vocab)?;
            let ids = compile_prompt(&spans, &ck.text_vocab, &mt)?;
            let motion = if think {
                let rcfg = ReflectConfig {
                    max_rounds,
                    gate_threshold: None,
                    temperature,
                    ..ReflectConfig::default()
                };
                let r = reflect_generate(&ck.model, &tk, &ck.text_vocab, &ids, None, &rcfg, seed)?;
                println!("{} round(s)", r.rounds);
                r.motion
            } else {
                let scfg = SampleConfig {
                    temperature,
                    max_new: ReflectConfig::default().max_new,
                    stop_after_span: true,
                    force_open: true,
                    stop_before_open: false,
                };
                let s = sample(&ck.model, &ids, &scfg, seed)?;
                if s.truncated {
                    bail!("generation hit the token budget before closing the motion span");
                }
                decode_completion(s.generated(), &ck.model.vocab, &tk)?
            };
            write_motion(&out, &motion)?;
            println!("wrote {} frames to {}", motion.num_frames(), out.display());
        }
        Command::Grpo {
            policy,
            tokenizer,
            data,
            motions,
            reward_config,
            out,
            log,
            steps,
            sections,
        } => {
            let mut cfg = sections.load()?;
            if let Some(p) = reward_config {
                cfg.reward = load_text_config(&p)?;
            }
            if let Some(s) = steps {
                cfg.grpo.steps = s;
            }
            let ck = PolicyCheckpoint::load(&policy)?;
            let tk = TokenizerModel::load(&tokenizer)?;
            let corpus = load_corpus(&motions)?;
            let ins = read_instructions(&data)?;
            let mut pm = ck.model;
            let mt = motion_tokens(&corpus, &tk, &pm.vocab)?;
            let prompts = grpo_prompts(&ins, &corpus, &ck.text_vocab, &mt, pm.config.context, cfg.grpo.max_new)?;
            let mut opt = OptimizerState::new(cfg.sft.optimizer, pm.num_params(), cfg.sft.momentum);
            let mut lines = String::new();
            let report = train_grpo(&mut pm, &mut opt, &tk, &prompts, &cfg.grpo, &cfg.reward, sections.seed, |r| {
                lines.push_str(&serde_json::to_string(r).expect("record serializes"));
                lines.push('\n');
                log::info!("step {} reward {:.4} kl {:.2e}", r.step, r.mean_reward, r.kl);
            })?;
            if let Some(p) = log {
                fs::write(p, lines)?;
            }
            let (head, tail) = report.head_tail(20);
            println!("mean reward {head:.4} -> {tail:.4}");
            PolicyCheckpoint::new(pm, ck.text_vocab, Some(opt)).save(&out)?;
        }
        Command::MakeCases { corpus, out, seed } => {
            let cases = build_cases(&load_corpus(&corpus)?, seed)?;
            write_cases(&out, &cases)?;
            println!("wrote {} cases", cases.len());
        }
        Command::Eval {
            policy,
            tokenizer,
            motions,
            cases,
            gallery,
            reps,
            think,
            max_rounds,
            out,
            sections,
        } => {
            let mut cfg = sections.load()?;
            cfg.eval.gallery_size = gallery;
            cfg.eval.repetitions = reps;
            cfg.eval.think = think;
            if let Some(r) = max_rounds {
                cfg.eval.reflect.max_rounds = r;
            }
            let ck = PolicyCheckpoint::load(&policy)?;
            let tk = TokenizerModel::load(&tokenizer)?;
            let corpus = load_corpus(&motions)?;
            let cases = read_cases(&cases)?;
            let report = evaluate_policy(&ck, &tk, &corpus, &cases, &cfg.eval, sections.seed)?;
            if let Some(p) = out {
                fs::write(p, serde_json::to_vec_pretty(&report)?)?;
            }
            print!("{}", report.to_text());
        }
        Command::Pipeline { action } => match action {
            PipelineAction::Run { config, stages } => {
                let cfg = validate_config(&config)?;
                let stages = stages.unwrap_or_else(|| STAGES.iter().map(|s| s.to_string()).collect());
                for s in &stages {
                    let rec = run_stage(s, &cfg)?;
                    println!("{:<18} {:>8.1}s  {}", rec.stage, rec.wall_clock_s, summarize(&rec.outputs));
                }
            }
            PipelineAction::Verify { manifest } => {
                let n = read_manifest(&manifest)?.len();
                let bad = verify_manifest(&manifest)?;
                for m in &bad {
                    let actual = m.actual.as_deref().unwrap_or("missing");
                    println!("{}: {} recorded {} now {}", m.stage, m.path, m.recorded, actual);
                }
                if !bad.is_empty() {
                    return Err(VerifyFailed(bad.len()).into());
                }
                println!("{n} record(s) verified");
            }
            PipelineAction::Validate { config } => {
                let cfg = validate_config(&config)?;
                print!("{}", cfg.to_toml());
            }
        },
    }
    Ok(())
}

fn summarize(outputs: &BTreeMap<String, String>) -> String {
    outputs
        .iter()
        .map(|(k, v)| format!("{k}={}", &v[..12]))
        .collect::<Vec<_>>()
        .join(" ")
}
