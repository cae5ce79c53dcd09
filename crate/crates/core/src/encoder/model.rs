//! Pre-norm transformer encoder with a tanh pooler on `[CLS]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::input::CrossInput;
use super::params::{Init, Params};
use super::tensor::{
    affine_backward, gelu, gelu_grad, layer_norm, layer_norm_backward, masked_softmax, matmul_acc,
    matmul_nt, matmul_tn_acc, LnCache, Mat, Real,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ff: usize,
    pub max_len: usize,
    pub ln_eps: f64,
    pub init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 4,
            hidden: 64,
            ff: 256,
            max_len: 128,
            ln_eps: 1e-5,
            init_std: 0.02,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden size {} must be a positive multiple of the head count {}",
                self.hidden, self.heads
            )));
        }
        if self.max_len < 5 {
            return Err(Error::Config("max_len must be at least 5".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct LayerIdx {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Tensor layout of the encoder inside a [`Params`] set.
#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    vocab_size: usize,
    tok: usize,
    pos: usize,
    seg: usize,
    marker: usize,
    layers: Vec<LayerIdx>,
    lnf_g: usize,
    lnf_b: usize,
    pool_w: usize,
    pool_b: usize,
}

#[derive(Clone, Debug)]
struct LayerCache<T> {
    ln1: LnCache<T>,
    a: Mat<T>,
    q: Mat<T>,
    k: Mat<T>,
    v: Mat<T>,
    probs: Vec<Mat<T>>,
    o: Mat<T>,
    ln2: LnCache<T>,
    c: Mat<T>,
    h_pre: Mat<T>,
    h: Mat<T>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct EncoderCache<T> {
    input: CrossInput,
    layers: Vec<LayerCache<T>>,
    lnf: LnCache<T>,
    z0: Mat<T>,
    pooled: Vec<T>,
}

impl<T> EncoderCache<T> {
    pub fn pooled(&self) -> &[T] {
        &self.pooled
    }
}

impl Encoder {
    /// Register encoder tensors in `params`. Without an RNG, weights are
    /// zero and layer-norm gains one.
    pub fn register<T: Real, R: Rng>(
        config: &EncoderConfig,
        vocab_size: usize,
        params: &mut Params<T>,
        mut rng: Option<&mut R>,
    ) -> Result<Self> {
        config.validate()?;
        let (h, f) = (config.hidden, config.ff);
        let normal = Init::Normal(config.init_std);
        let mut add = |name: String, rows: usize, cols: usize, init: Init| {
            params.push(name, init.make(rows, cols, rng.as_deref_mut()))
        };
        let tok = add("encoder.tok_emb".into(), vocab_size, h, normal);
        let pos = add("encoder.pos_emb".into(), config.max_len, h, normal);
        let seg = add("encoder.seg_emb".into(), 2, h, normal);
        let marker = add("encoder.mention_marker".into(), 1, h, normal);
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = |s: &str| format!("encoder.layer{l}.{s}");
            layers.push(LayerIdx {
                ln1_g: add(p("ln1.gamma"), 1, h, Init::Ones),
                ln1_b: add(p("ln1.beta"), 1, h, Init::Zeros),
                wq: add(p("attn.wq"), h, h, normal),
                bq: add(p("attn.bq"), 1, h, Init::Zeros),
                wk: add(p("attn.wk"), h, h, normal),
                wv: add(p("attn.wv"), h, h, normal),
                bv: add(p("attn.bv"), 1, h, Init::Zeros),
                wo: add(p("attn.wo"), h, h, normal),
                bo: add(p("attn.bo"), 1, h, Init::Zeros),
                ln2_g: add(p("ln2.gamma"), 1, h, Init::Ones),
                ln2_b: add(p("ln2.beta"), 1, h, Init::Zeros),
                w1: add(p("ff.w1"), h, f, normal),
                b1: add(p("ff.b1"), 1, f, Init::Zeros),
                w2: add(p("ff.w2"), f, h, normal),
                b2: add(p("ff.b2"), 1, h, Init::Zeros),
            });
        }
        let lnf_g = add("encoder.final_ln.gamma".into(), 1, h, Init::Ones);
        let lnf_b = add("encoder.final_ln.beta".into(), 1, h, Init::Zeros);
        let pool_w = add("encoder.pooler.w".into(), h, h, normal);
        let pool_b = add("encoder.pooler.b".into(), 1, h, Init::Zeros);
        Ok(Self {
            config: config.clone(),
            vocab_size,
            tok,
            pos,
            seg,
            marker,
            layers,
            lnf_g,
            lnf_b,
            pool_w,
            pool_b,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Index of the mention-marker vector.
    pub fn marker_index(&self) -> usize {
        self.marker
    }

    fn check(&self, x: &CrossInput) -> Result<()> {
        if x.is_empty() || x.len() > self.config.max_len {
            return Err(Error::Invalid(format!(
                "input length {} outside 1..={}",
                x.len(),
                self.config.max_len
            )));
        }
        if let Some(&id) = x.ids.iter().find(|&&id| id as usize >= self.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                size: self.vocab_size,
            });
        }
        if x.segments.len() != x.len()
            || x.mention_mask.len() != x.len()
            || x.attention_mask.len() != x.len()
        {
            return Err(Error::Invalid(
                "input masks differ in length from the ids".into(),
            ));
        }
        Ok(())
    }

    pub fn forward<T: Real>(
        &self,
        p: &Params<T>,
        x: &CrossInput,
    ) -> Result<(Vec<T>, EncoderCache<T>)> {
        self.check(x)?;
        let n = x.len();
        let hd = self.config.hidden;
        let nh = self.config.heads;
        let dh = hd / nh;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let eps = self.config.ln_eps;

        let mut h = Mat::zeros(n, hd);
        for i in 0..n {
            let row = h.row_mut(i);
            let tok = p.get(self.tok).row(x.ids[i] as usize);
            let pos = p.get(self.pos).row(i);
            let seg = p.get(self.seg).row(x.segments[i] as usize);
            for j in 0..hd {
                row[j] = tok[j] + pos[j] + seg[j];
            }
            if x.mention_mask[i] {
                for (r, &m) in row.iter_mut().zip(&p.get(self.marker).data) {
                    *r += m;
                }
            }
        }

        let mut caches = Vec::with_capacity(self.layers.len());
        for li in &self.layers {
            let (a, ln1) = layer_norm(&h, p.get(li.ln1_g), p.get(li.ln1_b), eps);
            let q = a.affine(p.get(li.wq), p.get(li.bq));
            let mut k = Mat::zeros(n, hd);
            matmul_acc(&a, p.get(li.wk), &mut k);
            let v = a.affine(p.get(li.wv), p.get(li.bv));
            let mut o = Mat::zeros(n, hd);
            let mut probs = Vec::with_capacity(nh);
            for head in 0..nh {
                let off = head * dh;
                let mut s = Mat::zeros(n, n);
                for i in 0..n {
                    let qi = &q.row(i)[off..off + dh];
                    let srow = s.row_mut(i);
                    for (j, sj) in srow.iter_mut().enumerate() {
                        let kj = &k.row(j)[off..off + dh];
                        *sj = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<T>() * scale;
                    }
                    masked_softmax(srow, &x.attention_mask);
                }
                for i in 0..n {
                    for j in 0..n {
                        let pij = s.data[i * n + j];
                        if pij == T::zero() {
                            continue;
                        }
                        let vj = &v.data[j * hd + off..j * hd + off + dh];
                        let oi = &mut o.data[i * hd + off..i * hd + off + dh];
                        for (y, &w) in oi.iter_mut().zip(vj) {
                            *y += pij * w;
                        }
                    }
                }
                probs.push(s);
            }
            let attn = o.affine(p.get(li.wo), p.get(li.bo));
            h.add_assign(&attn);
            let (c, ln2) = layer_norm(&h, p.get(li.ln2_g), p.get(li.ln2_b), eps);
            let h_pre = c.affine(p.get(li.w1), p.get(li.b1));
            let act = Mat::from_vec(
                n,
                self.config.ff,
                h_pre.data.iter().map(|&v| gelu(v)).collect(),
            );
            let ff = act.affine(p.get(li.w2), p.get(li.b2));
            h.add_assign(&ff);
            caches.push(LayerCache {
                ln1,
                a,
                q,
                k,
                v,
                probs,
                o,
                ln2,
                c,
                h_pre,
                h: act,
            });
        }

        let cls = Mat::from_vec(1, hd, h.row(0).to_vec());
        let (z0, lnf) = layer_norm(&cls, p.get(self.lnf_g), p.get(self.lnf_b), eps);
        let pre = z0.affine(p.get(self.pool_w), p.get(self.pool_b));
        let pooled: Vec<T> = pre.data.iter().map(|v| v.tanh()).collect();
        Ok((
            pooled.clone(),
            EncoderCache {
                input: x.clone(),
                layers: caches,
                lnf,
                z0,
                pooled,
            },
        ))
    }

    /// Accumulate into `g` the gradient of a loss whose derivative with
    /// respect to the pooled output is `dpooled`.
    pub fn backward<T: Real>(
        &self,
        p: &Params<T>,
        cache: &EncoderCache<T>,
        dpooled: &[T],
        g: &mut Params<T>,
    ) {
        let x = &cache.input;
        let n = x.len();
        let hd = self.config.hidden;
        let nh = self.config.heads;
        let dh = hd / nh;
        let scale = T::one() / T::of(dh as f64).sqrt();

        let dpre = Mat::from_vec(
            1,
            hd,
            dpooled
                .iter()
                .zip(&cache.pooled)
                .map(|(&d, &y)| d * (T::one() - y * y))
                .collect(),
        );
        let dz0 = {
            let (dw, db) = two_mut(g, self.pool_w, self.pool_b);
            affine_backward(&cache.z0, p.get(self.pool_w), &dpre, dw, db)
        };
        let dcls = {
            let (dg, db) = two_mut(g, self.lnf_g, self.lnf_b);
            layer_norm_backward(&cache.lnf, p.get(self.lnf_g), &dz0, dg, db)
        };
        let mut dh_mat = Mat::zeros(n, hd);
        dh_mat.row_mut(0).copy_from_slice(&dcls.data);

        for (li, lc) in self.layers.iter().zip(&cache.layers).rev() {
            // feed-forward block
            let dact = {
                let (dw, db) = two_mut(g, li.w2, li.b2);
                affine_backward(&lc.h, p.get(li.w2), &dh_mat, dw, db)
            };
            let dpre_ff = Mat::from_vec(
                n,
                self.config.ff,
                dact.data
                    .iter()
                    .zip(&lc.h_pre.data)
                    .map(|(&d, &z)| d * gelu_grad(z))
                    .collect(),
            );
            let dc = {
                let (dw, db) = two_mut(g, li.w1, li.b1);
                affine_backward(&lc.c, p.get(li.w1), &dpre_ff, dw, db)
            };
            let dres = {
                let (dg, db) = two_mut(g, li.ln2_g, li.ln2_b);
                layer_norm_backward(&lc.ln2, p.get(li.ln2_g), &dc, dg, db)
            };
            dh_mat.add_assign(&dres);

            // attention block
            let d_o = {
                let (dw, db) = two_mut(g, li.wo, li.bo);
                affine_backward(&lc.o, p.get(li.wo), &dh_mat, dw, db)
            };
            let mut dq = Mat::zeros(n, hd);
            let mut dk = Mat::zeros(n, hd);
            let mut dv = Mat::zeros(n, hd);
            for head in 0..nh {
                let off = head * dh;
                let probs = &lc.probs[head];
                for i in 0..n {
                    let doi = &d_o.data[i * hd + off..i * hd + off + dh];
                    let prow = probs.row(i);
                    let mut dp = vec![T::zero(); n];
                    for j in 0..n {
                        if prow[j] == T::zero() {
                            continue;
                        }
                        let vj = &lc.v.data[j * hd + off..j * hd + off + dh];
                        dp[j] = doi.iter().zip(vj).map(|(&a, &b)| a * b).sum();
                        let dvj = &mut dv.data[j * hd + off..j * hd + off + dh];
                        for (y, &d) in dvj.iter_mut().zip(doi) {
                            *y += prow[j] * d;
                        }
                    }
                    let dot: T = prow.iter().zip(&dp).map(|(&a, &b)| a * b).sum();
                    for j in 0..n {
                        if prow[j] == T::zero() {
                            continue;
                        }
                        let ds = prow[j] * (dp[j] - dot) * scale;
                        for t in 0..dh {
                            dq.data[i * hd + off + t] += ds * lc.k.data[j * hd + off + t];
                            dk.data[j * hd + off + t] += ds * lc.q.data[i * hd + off + t];
                        }
                    }
                }
            }
            let mut da = {
                let (dw, db) = two_mut(g, li.wq, li.bq);
                affine_backward(&lc.a, p.get(li.wq), &dq, dw, db)
            };
            // keys carry no bias: a shared shift of every score in a row
            // leaves the softmax unchanged
            matmul_tn_acc(&lc.a, &dk, g.get_mut(li.wk));
            da.add_assign(&matmul_nt(&dk, p.get(li.wk)));
            {
                let (dw, db) = two_mut(g, li.wv, li.bv);
                da.add_assign(&affine_backward(&lc.a, p.get(li.wv), &dv, dw, db));
            }
            let dres = {
                let (dg, db) = two_mut(g, li.ln1_g, li.ln1_b);
                layer_norm_backward(&lc.ln1, p.get(li.ln1_g), &da, dg, db)
            };
            dh_mat.add_assign(&dres);
        }

        for i in 0..n {
            let d = dh_mat.row(i).to_vec();
            let add = |m: &mut Mat<T>, r: usize| {
                for (y, &v) in m.row_mut(r).iter_mut().zip(&d) {
                    *y += v;
                }
            };
            add(g.get_mut(self.tok), x.ids[i] as usize);
            add(g.get_mut(self.pos), i);
            add(g.get_mut(self.seg), x.segments[i] as usize);
            if x.mention_mask[i] {
                add(g.get_mut(self.marker), 0);
            }
        }
    }
}

/// Two distinct tensors of a parameter set, mutably.
pub(crate) fn two_mut<T: Real>(
    g: &mut Params<T>,
    a: usize,
    b: usize,
) -> (&mut Mat<T>, &mut Mat<T>) {
    assert_ne!(a, b);
    let ts = g.tensors_mut();
    if a < b {
        let (lo, hi) = ts.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = ts.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}
