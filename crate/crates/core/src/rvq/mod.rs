//! Residual vector-quantized motion tokenizer.
//!
//! A motion is cut into non-overlapping windows of `downsample_factor`
//! frames. Each window is flattened, linearly projected to a latent vector,
//! and quantized by `levels` codebooks where every level encodes the
//! residual left by the levels before it. Decoding sums the selected
//! entries and projects back to frame features.

mod codebook;
mod features;
mod train;

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{ActionList, Motion};
use crate::rng;

pub use codebook::{nearest_code, Codebook};
pub use features::{from_features, to_features, Representation};
pub use train::{train_tokenizer, LossParts, TokenizerGrads, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub levels: usize,
    pub codebook_size: usize,
    pub latent_dim: usize,
    pub downsample_factor: usize,
    pub dropout_q: f64,
    pub ema_decay: f64,
    pub commitment_weight: f64,
    pub dead_code_floor: f64,
    pub representation: Representation,
    /// Loss weight of the root-motion channels relative to the pose channels.
    pub root_weight: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            codebook_size: 64,
            latent_dim: 32,
            downsample_factor: 4,
            dropout_q: 0.2,
            ema_decay: 0.99,
            commitment_weight: 0.25,
            dead_code_floor: 1e-3,
            representation: Representation::RootRelative,
            root_weight: 8.0,
            steps: 1500,
            batch_size: 16,
            learning_rate: 2e-3,
        }
    }
}

impl TokenizerConfig {
    /// Returns every violated constraint.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.levels < 1 {
            v.push("tokenizer.levels must be >= 1".to_string());
        }
        if self.codebook_size < 2 {
            v.push("tokenizer.codebook_size must be >= 2".to_string());
        }
        if self.latent_dim < 1 {
            v.push("tokenizer.latent_dim must be >= 1".to_string());
        }
        if self.downsample_factor < 1 {
            v.push("tokenizer.downsample_factor must be >= 1".to_string());
        }
        if !(0.0..1.0).contains(&self.dropout_q) {
            v.push("tokenizer.dropout_q must lie in [0, 1)".to_string());
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            v.push("tokenizer.ema_decay must lie in (0, 1)".to_string());
        }
        if !(self.commitment_weight >= 0.0) {
            v.push("tokenizer.commitment_weight must be >= 0".to_string());
        }
        if !(self.dead_code_floor >= 0.0) {
            v.push("tokenizer.dead_code_floor must be >= 0".to_string());
        }
        if !(self.root_weight > 0.0) {
            v.push("tokenizer.root_weight must be > 0".to_string());
        }
        if self.batch_size < 1 {
            v.push("tokenizer.batch_size must be >= 1".to_string());
        }
        if !(self.learning_rate > 0.0) {
            v.push("tokenizer.learning_rate must be > 0".to_string());
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

    pub fn window_dim(&self) -> usize {
        self.downsample_factor * self.representation.dim()
    }
}

/// Discrete indices for one motion. `indices[t][l]` is `None` when
/// quantization stopped before level `l + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStack {
    pub source_id: u64,
    pub source_frames: usize,
    pub levels: usize,
    pub indices: Vec<Vec<Option<u32>>>,
}

impl TokenStack {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.indices.iter().all(|f| f.iter().all(Option::is_some))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSeq {
    pub source_id: u64,
    pub attrs: ActionList,
    pub vectors: Vec<Vec<f64>>,
}

impl LatentSeq {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Per-frame record of the quantization pass.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantDiagnostics {
    /// `residuals[t][l]` is the residual after level `l + 1`.
    pub residuals: Vec<Vec<Vec<f64>>>,
    /// Sum of the selected entries per frame.
    pub quantized: Vec<Vec<f64>>,
    /// Number of levels used when dropout truncated the stack.
    pub truncated_at: Option<usize>,
}

impl QuantDiagnostics {
    pub fn residual_norms(&self) -> Vec<Vec<f64>> {
        self.residuals
            .iter()
            .map(|fr| fr.iter().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).collect())
            .collect()
    }

    /// Residual left after the last quantized level of frame `t`.
    pub fn final_residual(&self, t: usize) -> &[f64] {
        self.residuals[t].last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerModel {
    pub config: TokenizerConfig,
    pub fps: u32,
    /// Per-feature normalization applied before windowing.
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    /// `window_dim x latent_dim`, row-major.
    pub enc_w: Vec<f64>,
    pub enc_b: Vec<f64>,
    /// `latent_dim x window_dim`, row-major.
    pub dec_w: Vec<f64>,
    pub dec_b: Vec<f64>,
    pub codebooks: Vec<Codebook>,
}

const CHECKPOINT_FORMAT: &str = "motiongen-tokenizer";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: TokenizerModel,
}

impl TokenizerModel {
    /// A model with zero weights, unit normalization and zero codebooks.
    pub fn zeros(config: TokenizerConfig, fps: u32) -> Result<Self> {
        config.validate()?;
        let (w, d) = (config.window_dim(), config.latent_dim);
        let f = config.representation.dim();
        let codebooks = (1..=config.levels).map(|l| Codebook::new(l, config.codebook_size, d)).collect();
        Ok(Self {
            fps,
            norm_mean: vec![0.0; f],
            norm_std: vec![1.0; f],
            enc_w: vec![0.0; w * d],
            enc_b: vec![0.0; d],
            dec_w: vec![0.0; d * w],
            dec_b: vec![0.0; w],
            codebooks,
            config,
        })
    }

    pub fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let (w, d) = (c.window_dim(), c.latent_dim);
        let f = c.representation.dim();
        let ok = self.norm_mean.len() == f
            && self.norm_std.len() == f
            && self.enc_w.len() == w * d
            && self.enc_b.len() == d
            && self.dec_w.len() == d * w
            && self.dec_b.len() == w
            && self.codebooks.len() == c.levels
            && self
                .codebooks
                .iter()
                .all(|cb| cb.dim == d && cb.size() == c.codebook_size && cb.entries.len() == d * cb.size());
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("tokenizer parameters disagree with config".into()))
        }
    }

    pub fn enc_w_view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.config.window_dim(), self.config.latent_dim), &self.enc_w).expect("encoder shape")
    }

    pub fn dec_w_view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.config.latent_dim, self.config.window_dim()), &self.dec_w).expect("decoder shape")
    }

    /// Normalized feature windows of `m`, one row per encoded frame. The
    /// last window is padded by repeating the final frame.
    pub fn motion_windows(&self, m: &Motion) -> Result<Array2<f64>> {
        let ds = self.config.downsample_factor;
        if m.fps != self.fps {
            return Err(Error::ShapeMismatch(format!(
                "motion at {} fps, tokenizer expects {}",
                m.fps, self.fps
            )));
        }
        if m.num_frames() < ds {
            return Err(Error::TooShort {
                frames: m.num_frames(),
                needed: ds,
            });
        }
        let feats = to_features(self.config.representation, m);
        let f = self.config.representation.dim();
        let t_enc = feats.len().div_ceil(ds);
        let mut x = Array2::zeros((t_enc, ds * f));
        for t in 0..t_enc {
            for k in 0..ds {
                let src = &feats[(t * ds + k).min(feats.len() - 1)];
                for i in 0..f {
                    x[[t, k * f + i]] = (src[i] - self.norm_mean[i]) / self.norm_std[i];
                }
            }
        }
        Ok(x)
    }

    pub fn encode_windows(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.enc_w_view());
        for mut row in z.rows_mut() {
            for (v, b) in row.iter_mut().zip(&self.enc_b) {
                *v += b;
            }
        }
        z
    }

    pub fn decode_windows(&self, z: &ArrayView2<f64>) -> Array2<f64> {
        let mut x = z.dot(&self.dec_w_view());
        for mut row in x.rows_mut() {
            for (v, b) in row.iter_mut().zip(&self.dec_b) {
                *v += b;
            }
        }
        x
    }

    pub fn encode(&self, m: &Motion) -> Result<LatentSeq> {
        let x = self.motion_windows(m)?;
        let z = self.encode_windows(&x.view());
        Ok(LatentSeq {
            source_id: m.id,
            attrs: m.attrs.clone(),
            vectors: z.rows().into_iter().map(|r| r.to_vec()).collect(),
        })
    }

    /// Quantizes one latent vector through the first `keep` levels, returning
    /// the chosen indices, the residual after each level and the quantized sum.
    pub(crate) fn quantize_vector(&self, z: &[f64], keep: usize) -> (Vec<usize>, Vec<Vec<f64>>, Vec<f64>) {
        let mut r = z.to_vec();
        let mut q = vec![0.0; z.len()];
        let mut idx = Vec::with_capacity(keep);
        let mut residuals = Vec::with_capacity(keep);
        for cb in &self.codebooks[..keep] {
            let k = nearest_code(&r, cb);
            let e = cb.entry(k);
            for i in 0..r.len() {
                r[i] -= e[i];
                q[i] += e[i];
            }
            idx.push(k);
            residuals.push(r.clone());
        }
        (idx, residuals, q)
    }

    /// Number of levels kept for one sequence: all of them unless dropout is
    /// active and fires, in which case a level uniform on `1..levels`.
    pub fn dropout_levels(&self, rng: &mut rng::Rng) -> Option<usize> {
        let l = self.config.levels;
        let fire = rng.random::<f64>() < self.config.dropout_q;
        if fire && l >= 2 {
            Some(rng.random_range(1..l))
        } else {
            None
        }
    }

    pub fn quantize_rvq(&self, z: &LatentSeq, dropout_active: bool, seed: u64) -> Result<(TokenStack, QuantDiagnostics)> {
        let d = self.config.latent_dim;
        if z.vectors.iter().any(|v| v.len() != d) {
            return Err(Error::ShapeMismatch(format!("latent dimension must be {d}")));
        }
        let truncated_at = if dropout_active {
            self.dropout_levels(&mut rng::seeded(seed))
        } else {
            None
        };
        let keep = truncated_at.unwrap_or(self.config.levels);
        let mut indices = Vec::with_capacity(z.len());
        let mut residuals = Vec::with_capacity(z.len());
        let mut quantized = Vec::with_capacity(z.len());
        for v in &z.vectors {
            let (idx, res, q) = self.quantize_vector(v, keep);
            let mut row: Vec<Option<u32>> = idx.into_iter().map(|k| Some(k as u32)).collect();
            row.resize(self.config.levels, None);
            indices.push(row);
            residuals.push(res);
            quantized.push(q);
        }
        let ts = TokenStack {
            source_id: z.source_id,
            source_frames: z.len() * self.config.downsample_factor,
            levels: self.config.levels,
            indices,
        };
        Ok((
            ts,
            QuantDiagnostics {
                residuals,
                quantized,
                truncated_at,
            },
        ))
    }

    pub fn dequantize(&self, ts: &TokenStack) -> Result<LatentSeq> {
        self.dequantize_levels(ts, self.config.levels)
    }

    /// Dequantizes using only the first `levels` levels of each frame.
    pub fn dequantize_levels(&self, ts: &TokenStack, levels: usize) -> Result<LatentSeq> {
        let d = self.config.latent_dim;
        let mut vectors = Vec::with_capacity(ts.len());
        for (t, frame) in ts.indices.iter().enumerate() {
            if frame.len() > self.config.levels {
                return Err(Error::CorruptTokens(format!(
                    "frame {t} has {} levels, tokenizer has {}",
                    frame.len(),
                    self.config.levels
                )));
            }
            let mut q = vec![0.0; d];
            for (l, code) in frame.iter().enumerate().take(levels) {
                let Some(k) = code else { continue };
                let cb = &self.codebooks[l];
                if *k as usize >= cb.size() {
                    return Err(Error::CorruptTokens(format!(
                        "index {k} at frame {t} level {} exceeds codebook size {}",
                        l + 1,
                        cb.size()
                    )));
                }
                for (a, e) in q.iter_mut().zip(cb.entry(*k as usize)) {
                    *a += e;
                }
            }
            vectors.push(q);
        }
        Ok(LatentSeq {
            source_id: ts.source_id,
            attrs: ActionList::empty(),
            vectors,
        })
    }

    /// Denormalized frame features for a latent sequence.
    pub fn decode_features(&self, z: &LatentSeq) -> Result<Vec<Vec<f64>>> {
        let d = self.config.latent_dim;
        if z.vectors.iter().any(|v| v.len() != d) {
            return Err(Error::ShapeMismatch(format!("latent dimension must be {d}")));
        }
        let flat: Vec<f64> = z.vectors.iter().flatten().copied().collect();
        let zv = ArrayView2::from_shape((z.len(), d), &flat).expect("latent shape");
        let x = self.decode_windows(&zv);
        let f = self.config.representation.dim();
        let ds = self.config.downsample_factor;
        let mut feats = Vec::with_capacity(z.len() * ds);
        for row in x.rows() {
            for k in 0..ds {
                feats.push((0..f).map(|i| row[k * f + i] * self.norm_std[i] + self.norm_mean[i]).collect());
            }
        }
        Ok(feats)
    }

    pub fn decode(&self, z: &LatentSeq) -> Result<Motion> {
        let feats = self.decode_features(z)?;
        let frames = from_features(self.config.representation, &feats);
        Motion::new(z.source_id, self.fps, z.attrs.clone(), frames)
    }

    /// Encode and quantize without dropout.
    pub fn tokenize(&self, m: &Motion) -> Result<TokenStack> {
        let z = self.encode(m)?;
        Ok(self.quantize_rvq(&z, false, 0)?.0)
    }

    pub fn detokenize(&self, ts: &TokenStack) -> Result<Motion> {
        self.decode(&self.dequantize(ts)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        std::fs::write(path, serde_json::to_vec(&ck)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}, found {} v{}",
                ck.format, ck.version
            )));
        }
        ck.model.check_shapes()?;
        Ok(ck.model)
    }
}
