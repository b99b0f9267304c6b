//! Benchmark harness: retrieval, contact plausibility, task categories and
//! reflection.

pub mod bench;
pub mod contact;
pub mod reflect;
pub mod retrieval;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use bench::{build_cases, categorize_case, read_cases, write_cases, BenchCase, BenchTask};
pub use contact::{contact_score, contact_score_from_feet, contact_term, ContactConfig, ContactMode};
pub use reflect::{reflect_generate, ReflectConfig, ReflectOutcome};
pub use retrieval::{rank_in_gallery, retrieval_metrics, Estimate, PoolEntry, RetrievalMetrics};

use crate::error::{Error, Result};
use crate::graph::{embed_kinematic, Embedding};
use crate::motion::Motion;
use crate::rng;
use crate::rvq::TokenizerModel;
use crate::seq::{compile_prompt, MotionTokens, PolicyModel, TextVocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub gallery_size: usize,
    pub repetitions: usize,
    /// Run the reflection loop; otherwise a single generation per case.
    pub think: bool,
    pub reflect: ReflectConfig,
    pub contact: ContactConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            gallery_size: 32,
            repetitions: 20,
            think: false,
            reflect: ReflectConfig::default(),
            contact: ContactConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.gallery_size < 2 {
            v.push("eval.gallery_size must be >= 2".into());
        }
        if self.repetitions == 0 {
            v.push("eval.repetitions must be >= 1".into());
        }
        v.extend(self.reflect.violations().into_iter().map(|s| format!("eval.{s}")));
        v.extend(self.contact.violations().into_iter().map(|s| format!("eval.{s}")));
        v
    }
}

/// Produces a motion for a benchmark case.
pub trait Generator {
    fn generate(&self, case: &BenchCase, seed: u64) -> Result<Generated>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub motion: Motion,
    pub rounds: usize,
}

/// Returns the ground-truth target.
pub struct EchoOracle<'a> {
    pub corpus: &'a HashMap<u64, Motion>,
}

impl Generator for EchoOracle<'_> {
    fn generate(&self, case: &BenchCase, _seed: u64) -> Result<Generated> {
        let motion = self.corpus.get(&case.target).ok_or(Error::UnknownSegment(case.target))?.clone();
        Ok(Generated { motion, rounds: 1 })
    }
}

/// Returns the same motion for every case.
pub struct ConstantOracle(pub Motion);

impl Generator for ConstantOracle {
    fn generate(&self, _case: &BenchCase, _seed: u64) -> Result<Generated> {
        Ok(Generated {
            motion: self.0.clone(),
            rounds: 1,
        })
    }
}

/// Samples from a trained policy, optionally through the reflection loop.
pub struct PolicyGenerator<'a> {
    pub policy: &'a PolicyModel,
    pub tokenizer: &'a TokenizerModel,
    pub text_vocab: &'a TextVocab,
    pub motion_tokens: &'a MotionTokens,
    pub corpus: &'a HashMap<u64, Motion>,
    pub reflect: ReflectConfig,
}

impl Generator for PolicyGenerator<'_> {
    fn generate(&self, case: &BenchCase, seed: u64) -> Result<Generated> {
        let prompt = compile_prompt(&case.prompt(), self.text_vocab, self.motion_tokens)?;
        let target = embed_kinematic(self.corpus.get(&case.target).ok_or(Error::UnknownSegment(case.target))?);
        let out = reflect_generate(
            self.policy,
            self.tokenizer,
            self.text_vocab,
            &prompt,
            Some(&target),
            &self.reflect,
            seed,
        )?;
        Ok(Generated {
            motion: out.motion,
            rounds: out.rounds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: BenchCase,
    /// Rank of the target in each repetition's gallery.
    pub ranks: Vec<usize>,
    pub similarity: f64,
    pub physical: f64,
    pub rounds: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task: BenchTask,
    pub cases: usize,
    pub failures: usize,
    pub r1: Estimate,
    pub r3: Estimate,
    pub avg_rank: Estimate,
    pub physical: f64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub seed: u64,
    pub rows: Vec<TaskRow>,
    pub cases: Vec<CaseResult>,
}

impl EvalReport {
    /// Text table with one row per task type.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "gallery {} | repetitions {} | think {} | seed {}",
            self.config.gallery_size, self.config.repetitions, self.config.think, self.seed
        );
        let _ = writeln!(
            s,
            "{:<11} {:>5} {:>5} {:>15} {:>15} {:>13} {:>9}",
            "task", "cases", "fail", "R@1", "R@3", "AvgR", "Physical"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<11} {:>5} {:>5} {:>7.2} ± {:<5.2} {:>7.2} ± {:<5.2} {:>6.2} ± {:<4.2} {:>9.4}",
                r.task.as_str(),
                r.cases,
                r.failures,
                r.r1.mean,
                r.r1.ci95,
                r.r3.mean,
                r.r3.ci95,
                r.avg_rank.mean,
                r.avg_rank.ci95,
                r.physical
            );
        }
        s
    }
}

/// Generates every case, then scores retrieval per task type against a
/// gallery pool drawn from `corpus`. Cases whose generation fails are
/// recorded and left out of the metrics.
pub fn run_anycontext(gen: &dyn Generator, corpus: &[Motion], cases: &[BenchCase], cfg: &EvalConfig, seed: u64) -> Result<EvalReport> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    let by_id: HashMap<u64, &Motion> = corpus.iter().map(|m| (m.id, m)).collect();
    let pool: Vec<PoolEntry> = corpus.iter().map(|m| (m.id, embed_kinematic(m))).collect();
    let pool_index: HashMap<u64, usize> = pool.iter().enumerate().map(|(i, p)| (p.0, i)).collect();
    let mut results = Vec::with_capacity(cases.len());
    let mut embeddings: Vec<Option<Embedding>> = Vec::with_capacity(cases.len());
    for (i, c) in cases.iter().enumerate() {
        for id in [c.source, c.reference, c.target] {
            if !by_id.contains_key(&id) {
                return Err(Error::UnknownSegment(id));
            }
        }
        let target = &pool[pool_index[&c.target]].1;
        let outcome = gen.generate(c, rng::derive_indexed(seed, "case", i as u64)).and_then(|g| {
            let phys = contact_score(&g.motion, cfg.contact.height, cfg.contact.speed, cfg.contact.mode)?;
            Ok((g, phys))
        });
        match outcome {
            Ok((g, physical)) => {
                let e = embed_kinematic(&g.motion);
                results.push(CaseResult {
                    case: c.clone(),
                    ranks: Vec::new(),
                    similarity: e.cosine(target),
                    physical,
                    rounds: g.rounds,
                    error: None,
                });
                embeddings.push(Some(e));
            }
            Err(e) => {
                let rounds = match &e {
                    Error::GenerationFailed { rounds, .. } => *rounds,
                    _ => 0,
                };
                results.push(CaseResult {
                    case: c.clone(),
                    ranks: Vec::new(),
                    similarity: f64::NAN,
                    physical: f64::NAN,
                    rounds,
                    error: Some(e.to_string()),
                });
                embeddings.push(None);
            }
        }
    }
    let mut groups: BTreeMap<BenchTask, Vec<usize>> = BTreeMap::new();
    for (i, c) in cases.iter().enumerate() {
        groups.entry(c.task).or_default().push(i);
    }
    let mut rows = Vec::new();
    for (task, idx) in groups {
        let ok: Vec<usize> = idx.iter().copied().filter(|&i| embeddings[i].is_some()).collect();
        let gen_e: Vec<Embedding> = ok.iter().map(|&i| embeddings[i].clone().expect("generated")).collect();
        let targets: Vec<PoolEntry> = ok.iter().map(|&i| pool[pool_index[&cases[i].target]].clone()).collect();
        let (r1, r3, avg_rank) = if ok.is_empty() {
            let nan = Estimate::from_samples(&[]);
            (nan, nan, nan)
        } else {
            let m = retrieval_metrics(
                &gen_e,
                &targets,
                &pool,
                cfg.gallery_size,
                cfg.repetitions,
                rng::derive_seed(seed, task.as_str()),
            )?;
            for (k, &i) in ok.iter().enumerate() {
                results[i].ranks = m.ranks.iter().map(|rep| rep[k]).collect();
            }
            (m.r1, m.r3, m.avg_rank)
        };
        let mean = |f: &dyn Fn(&CaseResult) -> f64| ok.iter().map(|&i| f(&results[i])).sum::<f64>() / ok.len().max(1) as f64;
        rows.push(TaskRow {
            task,
            cases: idx.len(),
            failures: idx.len() - ok.len(),
            r1,
            r3,
            avg_rank,
            physical: if ok.is_empty() { f64::NAN } else { mean(&|r| r.physical) },
            similarity: if ok.is_empty() { f64::NAN } else { mean(&|r| r.similarity) },
        });
    }
    Ok(EvalReport {
        config: cfg.clone(),
        seed,
        rows,
        cases: results,
    })
}
