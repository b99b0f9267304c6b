//! Gallery retrieval metrics over descriptor embeddings.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Embedding;
use crate::rng;

/// 1-based rank of `gallery[target]` when sorted by descending cosine to
/// `query`; ties go to the lower gallery index.
pub fn rank_in_gallery(query: &Embedding, gallery: &[&Embedding], target: usize) -> usize {
    let st = query.cosine(gallery[target]);
    1 + gallery
        .iter()
        .enumerate()
        .filter(|&(j, g)| {
            let s = query.cosine(g);
            s > st || (s == st && j < target)
        })
        .count()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval over repetitions.
    pub ci95: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self {
                mean: f64::NAN,
                ci95: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let ci95 = if xs.len() > 1 {
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            1.96 * (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, ci95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    /// Percent of cases ranked first.
    pub r1: Estimate,
    /// Percent of cases ranked in the top three.
    pub r3: Estimate,
    pub avg_rank: Estimate,
    /// `ranks[rep][case]`.
    pub ranks: Vec<Vec<usize>>,
}

/// Pool entry: segment id and embedding.
pub type PoolEntry = (u64, Embedding);

/// For each case and repetition, draws `gallery_size - 1` distractors from
/// `pool` (excluding entries with the target's id) without replacement,
/// inserts the target at a seeded position and ranks it against the
/// generated embedding.
pub fn retrieval_metrics(
    generated: &[Embedding],
    targets: &[PoolEntry],
    pool: &[PoolEntry],
    gallery_size: usize,
    repetitions: usize,
    seed: u64,
) -> Result<RetrievalMetrics> {
    if generated.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} generated motions but {} targets",
            generated.len(),
            targets.len()
        )));
    }
    if gallery_size == 0 || repetitions == 0 {
        return Err(Error::OutOfRange {
            what: "gallery",
            detail: "gallery size and repetitions must be positive".into(),
        });
    }
    let n = generated.len();
    let mut ranks = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let mut row = Vec::with_capacity(n);
        for (c, (g, (tid, temb))) in generated.iter().zip(targets).enumerate() {
            let candidates: Vec<&Embedding> = pool.iter().filter(|(id, _)| id != tid).map(|(_, e)| e).collect();
            if candidates.len() < gallery_size - 1 {
                return Err(Error::InsufficientGallery {
                    available: candidates.len(),
                    needed: gallery_size - 1,
                });
            }
            let mut r = rng::seeded(rng::derive_indexed(seed, "gallery", (rep * n + c) as u64));
            let picks = rand::seq::index::sample(&mut r, candidates.len(), gallery_size - 1);
            let mut gallery: Vec<&Embedding> = picks.iter().map(|i| candidates[i]).collect();
            let pos = r.random_range(0..gallery_size);
            gallery.insert(pos, temb);
            row.push(rank_in_gallery(g, &gallery, pos));
        }
        ranks.push(row);
    }
    let per_rep = |f: &dyn Fn(&[usize]) -> f64| -> Vec<f64> { ranks.iter().map(|r| f(r)).collect() };
    let frac = |k: usize| move |r: &[usize]| 100.0 * r.iter().filter(|&&x| x <= k).count() as f64 / r.len().max(1) as f64;
    let r1 = Estimate::from_samples(&per_rep(&frac(1)));
    let r3 = Estimate::from_samples(&per_rep(&frac(3)));
    let avg = Estimate::from_samples(&per_rep(&|r: &[usize]| r.iter().sum::<usize>() as f64 / r.len().max(1) as f64));
    Ok(RetrievalMetrics {
        r1,
        r3,
        avg_rank: avg,
        ranks,
    })
}
