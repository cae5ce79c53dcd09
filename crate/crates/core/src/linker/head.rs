//! Feed-forward scoring head over the pooled encoding and match features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bins::BinningSpec;
use crate::encoder::tensor::{affine_backward, gelu, gelu_grad};
use crate::encoder::{two_mut, Init, Mat, Params};
use crate::kb::NameType;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub name_type_dim: usize,
    pub bin_dim: usize,
    /// Dropout on the head input while training.
    pub dropout: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            hidden1: 1024,
            hidden2: 256,
            name_type_dim: 8,
            bin_dim: 8,
            dropout: 0.1,
        }
    }
}

/// Match features next to the pooled encoding. `linker_prob` is read only by
/// selector heads.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadFeatures {
    pub name_type: NameType,
    pub lexical_score: f64,
    pub linker_prob: f64,
}

#[derive(Clone, Debug)]
pub struct FeatureHead {
    config: HeadConfig,
    pooled_dim: usize,
    score_bins: BinningSpec,
    /// Present on selector heads.
    prob_bins: Option<BinningSpec>,
    name_type_emb: usize,
    score_bin_emb: usize,
    prob_bin_emb: Option<usize>,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
}

#[derive(Clone, Debug)]
pub struct HeadCache {
    input: Mat<f64>,
    /// Dropout multipliers, when training.
    mask: Option<Vec<f64>>,
    pre1: Mat<f64>,
    act1: Mat<f64>,
    pre2: Mat<f64>,
    act2: Mat<f64>,
    bins: (usize, usize, Option<usize>),
}

impl FeatureHead {
    pub fn register<R: Rng>(
        config: &HeadConfig,
        pooled_dim: usize,
        score_bins: BinningSpec,
        prob_bins: Option<BinningSpec>,
        params: &mut Params<f64>,
        mut rng: Option<&mut R>,
    ) -> Self {
        let mut add = |name: &str, rows: usize, cols: usize, init: Init| {
            params.push(
                format!("head.{name}"),
                init.make(rows, cols, rng.as_deref_mut()),
            )
        };
        let emb = Init::Normal(0.1);
        let name_type_emb = add(
            "name_type_emb",
            NameType::ALL.len(),
            config.name_type_dim,
            emb,
        );
        let score_bin_emb = add("score_bin_emb", score_bins.bins(), config.bin_dim, emb);
        let prob_bin_emb = prob_bins
            .as_ref()
            .map(|b| add("prob_bin_emb", b.bins(), config.bin_dim, emb));
        let mut input_dim = pooled_dim + config.name_type_dim + 1 + config.bin_dim;
        if prob_bins.is_some() {
            input_dim += 1 + config.bin_dim;
        }
        let w1 = add("w1", input_dim, config.hidden1, Init::FanIn);
        let b1 = add("b1", 1, config.hidden1, Init::Zeros);
        let w2 = add("w2", config.hidden1, config.hidden2, Init::FanIn);
        let b2 = add("b2", 1, config.hidden2, Init::Zeros);
        let w3 = add("w3", config.hidden2, 1, Init::FanIn);
        let b3 = add("b3", 1, 1, Init::Zeros);
        Self {
            config: config.clone(),
            pooled_dim,
            score_bins,
            prob_bins,
            name_type_emb,
            score_bin_emb,
            prob_bin_emb,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        }
    }

    pub fn input_dim(&self, p: &Params<f64>) -> usize {
        p.get(self.w1).rows
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    /// Score one pair. With `dropout` set, input units are zeroed with the
    /// configured probability and the rest rescaled.
    pub fn forward<R: Rng>(
        &self,
        p: &Params<f64>,
        pooled: &[f64],
        f: &HeadFeatures,
        dropout: Option<&mut R>,
    ) -> (f64, HeadCache) {
        debug_assert_eq!(pooled.len(), self.pooled_dim);
        let sb = self.score_bins.bin_index(f.lexical_score);
        let pb = self.prob_bins.as_ref().map(|b| b.bin_index(f.linker_prob));
        let mut input = Vec::with_capacity(self.input_dim(p));
        input.extend_from_slice(pooled);
        input.extend_from_slice(p.get(self.name_type_emb).row(f.name_type.rank()));
        input.push(f.lexical_score);
        input.extend_from_slice(p.get(self.score_bin_emb).row(sb));
        if let (Some(idx), Some(pb)) = (self.prob_bin_emb, pb) {
            input.push(f.linker_prob);
            input.extend_from_slice(p.get(idx).row(pb));
        }
        let mask = match dropout {
            Some(rng) if self.config.dropout > 0.0 => {
                let keep = 1.0 - self.config.dropout;
                let mask: Vec<f64> = (0..input.len())
                    .map(|_| {
                        if rng.gen::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                Some(mask)
            }
            _ => None,
        };
        let mut dropped = input.clone();
        if let Some(m) = &mask {
            for (x, k) in dropped.iter_mut().zip(m) {
                *x *= k;
            }
        }
        let x = Mat::from_vec(1, dropped.len(), dropped);
        let pre1 = x.affine(p.get(self.w1), p.get(self.b1));
        let act1 = Mat::from_vec(1, pre1.cols, pre1.data.iter().map(|&v| gelu(v)).collect());
        let pre2 = act1.affine(p.get(self.w2), p.get(self.b2));
        let act2 = Mat::from_vec(1, pre2.cols, pre2.data.iter().map(|&v| gelu(v)).collect());
        let out = act2.affine(p.get(self.w3), p.get(self.b3));
        (
            out.data[0],
            HeadCache {
                input: x,
                mask,
                pre1,
                act1,
                pre2,
                act2,
                bins: (f.name_type.rank(), sb, pb),
            },
        )
    }

    /// Accumulate head gradients; returns the gradient for the pooled input.
    pub fn backward(
        &self,
        p: &Params<f64>,
        c: &HeadCache,
        dscore: f64,
        g: &mut Params<f64>,
    ) -> Vec<f64> {
        let dout = Mat::from_vec(1, 1, vec![dscore]);
        let dact2 = {
            let (dw, db) = two_mut(g, self.w3, self.b3);
            affine_backward(&c.act2, p.get(self.w3), &dout, dw, db)
        };
        let dpre2 = Mat::from_vec(
            1,
            dact2.cols,
            dact2
                .data
                .iter()
                .zip(&c.pre2.data)
                .map(|(&d, &z)| d * gelu_grad(z))
                .collect(),
        );
        let dact1 = {
            let (dw, db) = two_mut(g, self.w2, self.b2);
            affine_backward(&c.act1, p.get(self.w2), &dpre2, dw, db)
        };
        let dpre1 = Mat::from_vec(
            1,
            dact1.cols,
            dact1
                .data
                .iter()
                .zip(&c.pre1.data)
                .map(|(&d, &z)| d * gelu_grad(z))
                .collect(),
        );
        let mut dx = {
            let (dw, db) = two_mut(g, self.w1, self.b1);
            affine_backward(&c.input, p.get(self.w1), &dpre1, dw, db)
        }
        .data;
        if let Some(m) = &c.mask {
            for (d, k) in dx.iter_mut().zip(m) {
                *d *= k;
            }
        }

        let (nt, sb, pb) = c.bins;
        let mut at = self.pooled_dim;
        let mut scatter = |tensor: usize, row: usize, width: usize, at: &mut usize| {
            for (y, &d) in g
                .get_mut(tensor)
                .row_mut(row)
                .iter_mut()
                .zip(&dx[*at..*at + width])
            {
                *y += d;
            }
            *at += width;
        };
        scatter(self.name_type_emb, nt, self.config.name_type_dim, &mut at);
        at += 1;
        scatter(self.score_bin_emb, sb, self.config.bin_dim, &mut at);
        if let (Some(idx), Some(pb)) = (self.prob_bin_emb, pb) {
            at += 1;
            scatter(idx, pb, self.config.bin_dim, &mut at);
        }
        dx.truncate(self.pooled_dim);
        dx
    }

    /// Index of the output layer weights.
    pub fn output_weights(&self) -> (usize, usize) {
        (self.w3, self.b3)
    }
}
