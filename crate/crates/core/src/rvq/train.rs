use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{TokenizerConfig, TokenizerModel};
use crate::error::{Error, Result};
use crate::motion::Motion;
use crate::optim::{cosine_lr, Adam};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub reconstruction: f64,
    pub commitment: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerGrads {
    pub enc_w: Vec<f64>,
    pub enc_b: Vec<f64>,
    pub dec_w: Vec<f64>,
    pub dec_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Total loss per optimizer step.
    pub loss: Vec<f64>,
    pub reconstruction: Vec<f64>,
    /// Full-corpus reconstruction error with all levels, before and after.
    pub initial_mse: f64,
    pub final_mse: f64,
}

impl TrainReport {
    /// Exponential running average of the loss history.
    pub fn smoothed_loss(&self, alpha: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.loss.len());
        let mut acc = None;
        for &l in &self.loss {
            let a = match acc {
                None => l,
                Some(p) => alpha * p + (1.0 - alpha) * l,
            };
            acc = Some(a);
            out.push(a);
        }
        out
    }
}

/// Quantization outcome of one batch, kept for the codebook update.
struct BatchQuant {
    zhat: Array2<f64>,
    /// `inputs[l]` holds (row, code) pairs quantized at level `l + 1`.
    assigned: Vec<Vec<(usize, usize)>>,
    /// Residual entering each level, per row.
    level_inputs: Vec<Vec<Vec<f64>>>,
}

impl TokenizerModel {
    fn quantize_batch(&self, z: &Array2<f64>, keep: &[usize]) -> BatchQuant {
        let levels = self.config.levels;
        let mut zhat = Array2::zeros(z.raw_dim());
        let mut assigned = vec![Vec::new(); levels];
        let mut level_inputs = vec![Vec::new(); levels];
        for (row, zr) in z.rows().into_iter().enumerate() {
            let zv = zr.to_vec();
            let (idx, res, q) = self.quantize_vector(&zv, keep[row]);
            for (l, &k) in idx.iter().enumerate() {
                let input = if l == 0 { zv.clone() } else { res[l - 1].clone() };
                level_inputs[l].push(input);
                assigned[l].push((row, k));
            }
            zhat.row_mut(row).assign(&ndarray::ArrayView1::from(&q));
        }
        BatchQuant {
            zhat,
            assigned,
            level_inputs,
        }
    }

    /// Loss and straight-through gradients on normalized windows `x`, where
    /// row `i` is quantized with its first `keep[i]` levels.
    pub fn loss_and_grad(&self, x: &ArrayView2<f64>, keep: &[usize]) -> (LossParts, TokenizerGrads) {
        let z = self.encode_windows(x);
        let bq = self.quantize_batch(&z, keep);
        self.loss_and_grad_with(x, &z, &bq.zhat)
    }

    fn loss_and_grad_with(&self, x: &ArrayView2<f64>, z: &Array2<f64>, zhat: &Array2<f64>) -> (LossParts, TokenizerGrads) {
        let n = x.nrows() as f64;
        let w = self.config.window_dim() as f64;
        let d = self.config.latent_dim as f64;
        let beta = self.config.commitment_weight;

        let xhat = self.decode_windows(&zhat.view());
        let diff = &xhat - x;
        let recon = diff.iter().map(|v| v * v).sum::<f64>() / (n * w);
        let cdiff = z - zhat;
        let commit = cdiff.iter().map(|v| v * v).sum::<f64>() / (n * d);

        let dxhat = diff * (2.0 / (n * w));
        let dec_w = zhat.t().dot(&dxhat);
        let dec_b = dxhat.sum_axis(Axis(0));
        // straight-through: the gradient reaching zhat passes to z unchanged
        let dz = dxhat.dot(&self.dec_w_view().t()) + cdiff * (2.0 * beta / (n * d));
        let enc_w = x.t().dot(&dz);
        let enc_b = dz.sum_axis(Axis(0));

        (
            LossParts {
                reconstruction: recon,
                commitment: commit,
                total: recon + beta * commit,
            },
            TokenizerGrads {
                enc_w: enc_w.iter().copied().collect(),
                enc_b: enc_b.to_vec(),
                dec_w: dec_w.iter().copied().collect(),
                dec_b: dec_b.to_vec(),
            },
        )
    }

    /// Mean squared reconstruction error in normalized window space, using
    /// the first `levels` codebook levels.
    pub fn reconstruction_mse(&self, corpus: &[Motion], levels: usize) -> Result<f64> {
        let (mut sum, mut count) = (0.0, 0usize);
        for m in corpus {
            let x = self.motion_windows(m)?;
            let z = self.encode_windows(&x.view());
            let bq = self.quantize_batch(&z, &vec![levels; z.nrows()]);
            let xhat = self.decode_windows(&bq.zhat.view());
            sum += (&xhat - &x).iter().map(|v| v * v).sum::<f64>();
            count += x.len();
        }
        Ok(sum / count.max(1) as f64)
    }

    /// Mean squared latent quantization error `‖z − ẑ‖²/D` using the first
    /// `levels` levels.
    pub fn latent_mse(&self, corpus: &[Motion], levels: usize) -> Result<f64> {
        let (mut sum, mut count) = (0.0, 0usize);
        for m in corpus {
            let x = self.motion_windows(m)?;
            let z = self.encode_windows(&x.view());
            let bq = self.quantize_batch(&z, &vec![levels; z.nrows()]);
            sum += (&z - &bq.zhat).iter().map(|v| v * v).sum::<f64>();
            count += z.len();
        }
        Ok(sum / count.max(1) as f64)
    }
}

fn fit_normalization(model: &mut TokenizerModel, corpus: &[Motion]) {
    let repr = model.config.representation;
    let f = repr.dim();
    let mut sum = vec![0.0; f];
    let mut sq = vec![0.0; f];
    let mut n = 0.0;
    for m in corpus {
        for row in super::to_features(repr, m) {
            for i in 0..f {
                sum[i] += row[i];
                sq[i] += row[i] * row[i];
            }
            n += 1.0;
        }
    }
    for i in 0..f {
        let mean = sum[i] / n;
        let var = (sq[i] / n - mean * mean).max(0.0);
        model.norm_mean[i] = mean;
        model.norm_std[i] = var.sqrt().max(1e-3);
    }
    if repr == super::Representation::RootRelative {
        // integrated channels: errors there accumulate into drift
        for s in &mut model.norm_std[..3] {
            *s /= model.config.root_weight;
        }
    }
}

/// Trains a tokenizer on `corpus`. Every motion must share one frame rate
/// and span at least one window.
pub fn train_tokenizer(corpus: &[Motion], config: &TokenizerConfig, seed: u64) -> Result<(TokenizerModel, TrainReport)> {
    config.validate()?;
    let first = corpus.first().ok_or(Error::EmptyCorpus)?;
    if let Some(m) = corpus.iter().find(|m| m.fps != first.fps) {
        return Err(Error::ShapeMismatch(format!("mixed frame rates: {} and {}", first.fps, m.fps)));
    }
    let mut model = TokenizerModel::zeros(config.clone(), first.fps)?;
    fit_normalization(&mut model, corpus);

    let mut r = rng::seeded(seed);
    let (w, d) = (config.window_dim(), config.latent_dim);
    let enc_init = Normal::new(0.0, 1.0 / (w as f64).sqrt()).expect("finite std");
    let dec_init = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("finite std");
    for v in &mut model.enc_w {
        *v = enc_init.sample(&mut r);
    }
    for v in &mut model.dec_w {
        *v = dec_init.sample(&mut r);
    }

    let windows: Vec<Array2<f64>> = corpus.iter().map(|m| model.motion_windows(m)).collect::<Result<_>>()?;

    // Codebooks start from encoded data, level by level.
    let all: Vec<f64> = windows.iter().flat_map(|x| x.iter().copied()).collect();
    let rows = all.len() / w;
    let xall = ArrayView2::from_shape((rows, w), &all).expect("window shape");
    let zall = model.encode_windows(&xall);
    let mut residual: Vec<Vec<f64>> = zall.rows().into_iter().map(|r| r.to_vec()).collect();
    for l in 0..config.levels {
        model.codebooks[l].init_from(&residual, &mut r);
        for v in &mut residual {
            let k = super::nearest_code(v, &model.codebooks[l]);
            for (a, e) in v.iter_mut().zip(model.codebooks[l].entry(k)) {
                *a -= e;
            }
        }
    }

    let initial_mse = model.reconstruction_mse(corpus, config.levels)?;
    let mut adam = Adam::new(&[w * d, d, d * w, w]);
    let mut loss = Vec::with_capacity(config.steps);
    let mut reconstruction = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let mut xs = Vec::new();
        let mut keep = Vec::new();
        for _ in 0..config.batch_size {
            let i = r.random_range(0..corpus.len());
            let k = model.dropout_levels(&mut r).unwrap_or(config.levels);
            xs.extend(windows[i].iter().copied());
            keep.extend(std::iter::repeat_n(k, windows[i].nrows()));
        }
        let x = ArrayView2::from_shape((keep.len(), w), &xs).expect("batch shape");
        let z = model.encode_windows(&x);
        let bq = model.quantize_batch(&z, &keep);
        let (parts, g) = model.loss_and_grad_with(&x, &z, &bq.zhat);
        loss.push(parts.total);
        reconstruction.push(parts.reconstruction);

        let lr = cosine_lr(config.learning_rate, 0.05, step, config.steps);
        adam.step(
            &mut [&mut model.enc_w, &mut model.enc_b, &mut model.dec_w, &mut model.dec_b],
            &[&g.enc_w, &g.enc_b, &g.dec_w, &g.dec_b],
            lr,
        );
        for l in 0..config.levels {
            let codes: Vec<usize> = bq.assigned[l].iter().map(|&(_, k)| k).collect();
            model.codebooks[l].ema_update(&bq.level_inputs[l], &codes, config.ema_decay, config.dead_code_floor, &mut r);
        }
    }

    let final_mse = model.reconstruction_mse(corpus, config.levels)?;
    log::info!("tokenizer trained: mse {initial_mse:.5} -> {final_mse:.5}");
    Ok((
        model,
        TrainReport {
            loss,
            reconstruction,
            initial_mse,
            final_mse,
        },
    ))
}
