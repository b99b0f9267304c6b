//! Pre-norm causal transformer over the unified vocabulary, with manual
//! reverse-mode gradients.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::vocab::Vocab;
use crate::error::{Error, Result};
use crate::rng;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn: usize,
    pub context: usize,
    pub init_std: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            heads: 4,
            layers: 2,
            ffn: 256,
            context: 512,
            init_std: 0.02,
        }
    }
}

impl PolicyConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            v.push("model.d_model must be a positive multiple of model.heads".into());
        }
        if self.layers == 0 {
            v.push("model.layers must be >= 1".into());
        }
        if self.ffn == 0 {
            v.push("model.ffn must be >= 1".into());
        }
        if self.context < 2 {
            v.push("model.context must be >= 2".into());
        }
        if !(self.init_std >= 0.0) {
            v.push("model.init_std must be >= 0".into());
        }
        v
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerLayout {
    ln1_g: usize,
    ln1_b: usize,
    w_qkv: usize,
    b_qkv: usize,
    w_o: usize,
    b_o: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Offsets of every named tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
struct Layout {
    tok_emb: usize,
    pos_emb: usize,
    layers: Vec<LayerLayout>,
    lnf_g: usize,
    lnf_b: usize,
    w_out: usize,
    b_out: usize,
    total: usize,
}

impl Layout {
    fn new(c: &PolicyConfig, vocab: usize) -> Self {
        let (d, f) = (c.d_model, c.ffn);
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let tok_emb = take(vocab * d);
        let pos_emb = take(c.context * d);
        let layers = (0..c.layers)
            .map(|_| LayerLayout {
                ln1_g: take(d),
                ln1_b: take(d),
                w_qkv: take(d * 3 * d),
                b_qkv: take(3 * d),
                w_o: take(d * d),
                b_o: take(d),
                ln2_g: take(d),
                ln2_b: take(d),
                w1: take(d * f),
                b1: take(f),
                w2: take(f * d),
                b2: take(d),
            })
            .collect();
        let lnf_g = take(d);
        let lnf_b = take(d);
        let w_out = take(d * vocab);
        let b_out = take(vocab);
        Self {
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            w_out,
            b_out,
            total: off,
        }
    }

    /// (name, offset, length) of every tensor.
    fn tensors(&self, c: &PolicyConfig, vocab: usize) -> Vec<(String, usize, usize)> {
        let (d, f) = (c.d_model, c.ffn);
        let mut t = vec![
            ("tok_emb".to_string(), self.tok_emb, vocab * d),
            ("pos_emb".to_string(), self.pos_emb, c.context * d),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (name, o, n) in [
                ("ln1_g", l.ln1_g, d),
                ("ln1_b", l.ln1_b, d),
                ("w_qkv", l.w_qkv, 3 * d * d),
                ("b_qkv", l.b_qkv, 3 * d),
                ("w_o", l.w_o, d * d),
                ("b_o", l.b_o, d),
                ("ln2_g", l.ln2_g, d),
                ("ln2_b", l.ln2_b, d),
                ("w1", l.w1, d * f),
                ("b1", l.b1, f),
                ("w2", l.w2, f * d),
                ("b2", l.b2, d),
            ] {
                t.push((format!("layer{i}.{name}"), o, n));
            }
        }
        t.push(("lnf_g".into(), self.lnf_g, d));
        t.push(("lnf_b".into(), self.lnf_b, d));
        t.push(("w_out".into(), self.w_out, d * vocab));
        t.push(("b_out".into(), self.b_out, vocab));
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel {
    pub config: PolicyConfig,
    pub vocab: Vocab,
    pub params: Vec<f64>,
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

struct LayerCache {
    ln1: LnCache,
    h1: Array2<f64>,
    qkv: Array2<f64>,
    att: Vec<Array2<f64>>,
    o: Array2<f64>,
    ln2: LnCache,
    h2: Array2<f64>,
    u: Array2<f64>,
    a: Array2<f64>,
}

/// Activations retained by [`PolicyModel::forward_cached`] for backward.
pub struct ForwardCache {
    ids: Vec<u32>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    hf: Array2<f64>,
}

fn view<'a>(p: &'a [f64], off: usize, r: usize, c: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((r, c), &p[off..off + r * c]).expect("tensor shape")
}

fn view1(p: &[f64], off: usize, n: usize) -> ArrayView1<'_, f64> {
    ArrayView1::from(&p[off..off + n])
}

fn view_mut<'a>(p: &'a mut [f64], off: usize, r: usize, c: usize) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((r, c), &mut p[off..off + r * c]).expect("tensor shape")
}

fn add_bias(x: &mut Array2<f64>, b: ArrayView1<f64>) {
    for mut row in x.rows_mut() {
        row += &b;
    }
}

fn acc_colsum(g: &mut [f64], off: usize, dy: &Array2<f64>) {
    let s = dy.sum_axis(Axis(0));
    for (a, v) in g[off..off + s.len()].iter_mut().zip(s.iter()) {
        *a += v;
    }
}

fn layer_norm(x: &Array2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (i, mut row) in xhat.rows_mut().into_iter().enumerate() {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let r = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * r);
        rstd[i] = r;
    }
    let mut y = &xhat * &g;
    add_bias(&mut y, b);
    (y, LnCache { xhat, rstd })
}

/// Returns dx and accumulates dg, db.
fn layer_norm_backward(c: &LnCache, dy: &Array2<f64>, g: ArrayView1<f64>, grad: &mut [f64], og: usize, ob: usize) -> Array2<f64> {
    let d = dy.ncols();
    let dg = (dy * &c.xhat).sum_axis(Axis(0));
    let db = dy.sum_axis(Axis(0));
    for k in 0..d {
        grad[og + k] += dg[k];
        grad[ob + k] += db[k];
    }
    let dxhat = dy * &g;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let xh = c.xhat.row(i);
        let dh = dxhat.row(i);
        let m1 = dh.sum() / d as f64;
        let m2 = dh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let r = c.rstd[i];
        for k in 0..d {
            dx[[i, k]] = r * (dh[k] - m1 - xh[k] * m2);
        }
    }
    dx
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044715 * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + 0.044715 * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u)
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    v.iter().map(|x| x - lse).collect()
}

impl PolicyModel {
    pub fn new(config: PolicyConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        let v = config.violations();
        if !v.is_empty() {
            return Err(Error::Config(v));
        }
        let layout = Layout::new(&config, vocab.size());
        let mut params = vec![0.0; layout.total];
        let mut r = rng::seeded(seed);
        let normal = Normal::new(0.0, config.init_std).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        for (name, off, n) in layout.tensors(&config, vocab.size()) {
            let tail = name.rsplit('.').next().unwrap_or(&name);
            let fill: Option<f64> = match tail {
                "ln1_g" | "ln2_g" | "lnf_g" => Some(1.0),
                t if t.starts_with('b') || t.ends_with("_b") => Some(0.0),
                _ => None,
            };
            for p in &mut params[off..off + n] {
                *p = fill.unwrap_or_else(|| normal.sample(&mut r));
            }
        }
        Ok(Self { config, vocab, params })
    }

    /// All parameters zero, including layer-norm gains.
    pub fn zeros(config: PolicyConfig, vocab: Vocab) -> Result<Self> {
        let mut m = Self::new(PolicyConfig { init_std: 0.0, ..config }, vocab, 0)?;
        m.params.iter_mut().for_each(|p| *p = 0.0);
        Ok(m)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// (name, offset, length) of every parameter tensor.
    pub fn tensors(&self) -> Vec<(String, usize, usize)> {
        Layout::new(&self.config, self.vocab.size()).tensors(&self.config, self.vocab.size())
    }

    /// Frozen copy for ratio and KL computations.
    pub fn snapshot(&self) -> PolicyModel {
        self.clone()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n > self.config.context {
            return Err(Error::ContextOverflow {
                len: n,
                context: self.config.context,
            });
        }
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok(())
    }

    pub fn forward_cached(&self, ids: &[u32]) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_len(ids.len())?;
        let c = &self.config;
        let (t_len, d, f, nh) = (ids.len(), c.d_model, c.ffn, c.heads);
        let dh = d / nh;
        let vsz = self.vocab.size();
        let lay = Layout::new(c, vsz);
        let p = &self.params;
        let scale = 1.0 / (dh as f64).sqrt();

        let tok = view(p, lay.tok_emb, vsz, d);
        let pos = view(p, lay.pos_emb, c.context, d);
        let mut x = Array2::zeros((t_len, d));
        for (t, &id) in ids.iter().enumerate() {
            if id as usize >= vsz {
                return Err(Error::CorruptTokens(format!("token id {id} outside vocabulary")));
            }
            let mut row = x.row_mut(t);
            row += &tok.row(id as usize);
            row += &pos.row(t);
        }

        let mut caches = Vec::with_capacity(c.layers);
        for l in &lay.layers {
            let (h1, ln1) = layer_norm(&x, view1(p, l.ln1_g, d), view1(p, l.ln1_b, d));
            let mut qkv = h1.dot(&view(p, l.w_qkv, d, 3 * d));
            add_bias(&mut qkv, view1(p, l.b_qkv, 3 * d));
            let mut o = Array2::zeros((t_len, d));
            let mut att = Vec::with_capacity(nh);
            for h in 0..nh {
                let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
                let k = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
                let v = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
                let mut sc = q.dot(&k.t());
                for i in 0..t_len {
                    let mut row = sc.row_mut(i);
                    let m = (0..=i).map(|j| row[j] * scale).fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for j in 0..t_len {
                        row[j] = if j <= i { (row[j] * scale - m).exp() } else { 0.0 };
                        z += row[j];
                    }
                    row.mapv_inplace(|v| v / z);
                }
                o.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&sc.dot(&v));
                att.push(sc);
            }
            let mut proj = o.dot(&view(p, l.w_o, d, d));
            add_bias(&mut proj, view1(p, l.b_o, d));
            x += &proj;

            let (h2, ln2) = layer_norm(&x, view1(p, l.ln2_g, d), view1(p, l.ln2_b, d));
            let mut u = h2.dot(&view(p, l.w1, d, f));
            add_bias(&mut u, view1(p, l.b1, f));
            let a = u.mapv(gelu);
            let mut ff = a.dot(&view(p, l.w2, f, d));
            add_bias(&mut ff, view1(p, l.b2, d));
            x += &ff;
            caches.push(LayerCache {
                ln1,
                h1,
                qkv,
                att,
                o,
                ln2,
                h2,
                u,
                a,
            });
        }
        let (hf, lnf) = layer_norm(&x, view1(p, lay.lnf_g, d), view1(p, lay.lnf_b, d));
        let mut logits = hf.dot(&view(p, lay.w_out, d, vsz));
        add_bias(&mut logits, view1(p, lay.b_out, vsz));
        Ok((
            logits,
            ForwardCache {
                ids: ids.to_vec(),
                layers: caches,
                lnf,
                hf,
            },
        ))
    }

    pub fn logits(&self, ids: &[u32]) -> Result<Array2<f64>> {
        Ok(self.forward_cached(ids)?.0)
    }

    /// Per-position log-probabilities over the full vocabulary.
    pub fn forward(&self, ids: &[u32]) -> Result<Array2<f64>> {
        Ok(log_softmax_rows(&self.logits(ids)?))
    }

    /// Accumulates the parameter gradient for upstream `dlogits` into `grad`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &Array2<f64>, grad: &mut [f64]) {
        let c = &self.config;
        let (t_len, d, f, nh) = (cache.ids.len(), c.d_model, c.ffn, c.heads);
        let dh = d / nh;
        let vsz = self.vocab.size();
        let lay = Layout::new(c, vsz);
        let p = &self.params;
        let scale = 1.0 / (dh as f64).sqrt();

        general_mat_mul(1.0, &cache.hf.t(), dlogits, 1.0, &mut view_mut(grad, lay.w_out, d, vsz));
        acc_colsum(grad, lay.b_out, dlogits);
        let dhf = dlogits.dot(&view(p, lay.w_out, d, vsz).t());
        let mut dx = layer_norm_backward(&cache.lnf, &dhf, view1(p, lay.lnf_g, d), grad, lay.lnf_g, lay.lnf_b);

        for (l, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // feed-forward branch
            general_mat_mul(1.0, &lc.a.t(), &dx, 1.0, &mut view_mut(grad, l.w2, f, d));
            acc_colsum(grad, l.b2, &dx);
            let da = dx.dot(&view(p, l.w2, f, d).t());
            let du = &da * &lc.u.mapv(gelu_grad);
            general_mat_mul(1.0, &lc.h2.t(), &du, 1.0, &mut view_mut(grad, l.w1, d, f));
            acc_colsum(grad, l.b1, &du);
            let dh2 = du.dot(&view(p, l.w1, d, f).t());
            dx += &layer_norm_backward(&lc.ln2, &dh2, view1(p, l.ln2_g, d), grad, l.ln2_g, l.ln2_b);

            // attention branch
            general_mat_mul(1.0, &lc.o.t(), &dx, 1.0, &mut view_mut(grad, l.w_o, d, d));
            acc_colsum(grad, l.b_o, &dx);
            let d_o = dx.dot(&view(p, l.w_o, d, d).t());
            let mut dqkv = Array2::zeros((t_len, 3 * d));
            for h in 0..nh {
                let q = lc.qkv.slice(s![.., h * dh..(h + 1) * dh]);
                let k = lc.qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
                let v = lc.qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
                let pm = &lc.att[h];
                let doh = d_o.slice(s![.., h * dh..(h + 1) * dh]);
                let dp = doh.dot(&v.t());
                let dv = pm.t().dot(&doh);
                let mut ds = Array2::zeros((t_len, t_len));
                for i in 0..t_len {
                    let dot: f64 = (0..=i).map(|j| dp[[i, j]] * pm[[i, j]]).sum();
                    for j in 0..=i {
                        ds[[i, j]] = pm[[i, j]] * (dp[[i, j]] - dot) * scale;
                    }
                }
                dqkv.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&ds.dot(&k));
                dqkv.slice_mut(s![.., d + h * dh..d + (h + 1) * dh]).assign(&ds.t().dot(&q));
                dqkv.slice_mut(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]).assign(&dv);
            }
            general_mat_mul(1.0, &lc.h1.t(), &dqkv, 1.0, &mut view_mut(grad, l.w_qkv, d, 3 * d));
            acc_colsum(grad, l.b_qkv, &dqkv);
            let dh1 = dqkv.dot(&view(p, l.w_qkv, d, 3 * d).t());
            dx += &layer_norm_backward(&lc.ln1, &dh1, view1(p, l.ln1_g, d), grad, l.ln1_g, l.ln1_b);
        }

        for (t, &id) in cache.ids.iter().enumerate() {
            let row = dx.row(t);
            let te = lay.tok_emb + id as usize * d;
            let pe = lay.pos_emb + t * d;
            for k in 0..d {
                grad[te + k] += row[k];
                grad[pe + k] += row[k];
            }
        }
    }

    /// Teacher-forced mean negative log-likelihood over the batch and its
    /// gradient. Position `t` predicts `ids[t+1]`; targets equal to `<PAD>`
    /// are skipped, and with `completion_only` so are prompt targets.
    pub fn nll_and_grad(&self, batch: &[super::TokenSequence], completion_only: bool) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let counted = |s: &super::TokenSequence, t: usize| s.ids[t + 1] != self.vocab.pad() && (!completion_only || t + 1 >= s.prompt_len);
        let total: usize = batch
            .iter()
            .map(|s| (0..s.len().saturating_sub(1)).filter(|&t| counted(s, t)).count())
            .sum();
        let mut grad = vec![0.0; self.params.len()];
        if total == 0 {
            return Ok((0.0, grad));
        }
        let norm = 1.0 / total as f64;
        let mut loss = 0.0;
        for s in batch {
            let (logits, cache) = self.forward_cached(&s.ids)?;
            let lp = log_softmax_rows(&logits);
            let mut dl = Array2::zeros(logits.raw_dim());
            for t in 0..s.len() - 1 {
                if !counted(s, t) {
                    continue;
                }
                let y = s.ids[t + 1] as usize;
                loss -= lp[[t, y]] * norm;
                let mut row = dl.row_mut(t);
                for (k, v) in row.iter_mut().enumerate() {
                    *v = lp[[t, k]].exp() * norm;
                }
                row[y] -= norm;
            }
            self.backward(&cache, &dl, &mut grad);
        }
        Ok((loss, grad))
    }

    /// Loss only, without the backward pass.
    pub fn nll(&self, batch: &[super::TokenSequence], completion_only: bool) -> Result<f64> {
        let mut loss = 0.0;
        let mut count = 0usize;
        for s in batch {
            let lp = self.forward(&s.ids)?;
            for t in 0..s.len().saturating_sub(1) {
                let y = s.ids[t + 1];
                if y == self.vocab.pad() || (completion_only && t + 1 < s.prompt_len) {
                    continue;
                }
                loss -= lp[[t, y as usize]];
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok(loss / count as f64)
    }
}

/// Key/value cache for incremental decoding.
#[derive(Debug, Clone)]
pub struct DecodeState {
    pub pos: usize,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl PolicyModel {
    pub fn start_decode(&self) -> DecodeState {
        DecodeState {
            pos: 0,
            keys: vec![Vec::new(); self.config.layers],
            values: vec![Vec::new(); self.config.layers],
        }
    }

    fn ln_vec(x: &[f64], g: ArrayView1<f64>, b: ArrayView1<f64>) -> Array1<f64> {
        let d = x.len() as f64;
        let mean = x.iter().sum::<f64>() / d;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let r = 1.0 / (var + LN_EPS).sqrt();
        Array1::from_iter(x.iter().enumerate().map(|(k, v)| (v - mean) * r * g[k] + b[k]))
    }

    /// Feeds one token and returns the next-token logits.
    pub fn step(&self, st: &mut DecodeState, id: u32) -> Result<Vec<f64>> {
        let c = &self.config;
        if st.pos >= c.context {
            return Err(Error::ContextOverflow {
                len: st.pos + 1,
                context: c.context,
            });
        }
        let vsz = self.vocab.size();
        if id as usize >= vsz {
            return Err(Error::CorruptTokens(format!("token id {id} outside vocabulary")));
        }
        let (d, f, nh) = (c.d_model, c.ffn, c.heads);
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let lay = Layout::new(c, vsz);
        let p = &self.params;
        let t = st.pos;

        let mut x: Array1<f64> = &view(p, lay.tok_emb, vsz, d).row(id as usize) + &view(p, lay.pos_emb, c.context, d).row(t);
        for (li, l) in lay.layers.iter().enumerate() {
            let h1 = Self::ln_vec(x.as_slice().expect("contiguous"), view1(p, l.ln1_g, d), view1(p, l.ln1_b, d));
            let qkv = h1.dot(&view(p, l.w_qkv, d, 3 * d)) + view1(p, l.b_qkv, 3 * d);
            st.keys[li].extend(qkv.slice(s![d..2 * d]).iter());
            st.values[li].extend(qkv.slice(s![2 * d..3 * d]).iter());
            let keys = view(&st.keys[li], 0, t + 1, d);
            let vals = view(&st.values[li], 0, t + 1, d);
            let mut o = Array1::zeros(d);
            for h in 0..nh {
                let q = qkv.slice(s![h * dh..(h + 1) * dh]);
                let kh = keys.slice(s![.., h * dh..(h + 1) * dh]);
                let sc: Vec<f64> = kh.rows().into_iter().map(|k| k.dot(&q) * scale).collect();
                let m = sc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = sc.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = w.iter().sum();
                let vh = vals.slice(s![.., h * dh..(h + 1) * dh]);
                let mut oh = o.slice_mut(s![h * dh..(h + 1) * dh]);
                for (j, row) in vh.rows().into_iter().enumerate() {
                    oh.scaled_add(w[j] / z, &row);
                }
            }
            x = x + o.dot(&view(p, l.w_o, d, d)) + view1(p, l.b_o, d);
            let h2 = Self::ln_vec(x.as_slice().expect("contiguous"), view1(p, l.ln2_g, d), view1(p, l.ln2_b, d));
            let u = h2.dot(&view(p, l.w1, d, f)) + view1(p, l.b1, f);
            let a = u.mapv(gelu);
            x = x + a.dot(&view(p, l.w2, f, d)) + view1(p, l.b2, d);
        }
        let hf = Self::ln_vec(x.as_slice().expect("contiguous"), view1(p, lay.lnf_g, d), view1(p, lay.lnf_b, d));
        let logits = hf.dot(&view(p, lay.w_out, d, vsz)) + view1(p, lay.b_out, vsz);
        st.pos += 1;
        Ok(logits.to_vec())
    }
}
