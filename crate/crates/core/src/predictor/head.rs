//! Quality regression head: dropout -> GELU -> Linear -> GLU -> Linear.
//!
//! All parameters live in one flat vector so the optimizer, the checkpoint
//! writer and gradient checks can treat them uniformly. Matrices are stored
//! row-major as `inputs x outputs`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::{affine, gelu, huber_grad, huber_loss, sigmoid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadDims {
    /// Embedding width.
    pub d: usize,
    /// First linear layer width.
    pub h: usize,
    /// GLU output width.
    pub g: usize,
    /// One output per registry model.
    pub n_models: usize,
}

impl HeadDims {
    pub fn new(d: usize, h: usize, g: usize, n_models: usize) -> Result<Self> {
        if d == 0 || h == 0 || g == 0 || n_models == 0 {
            return Err(Error::InvalidArgument(format!(
                "head dimensions must be positive, got d={d} h={h} g={g} n={n_models}"
            )));
        }
        Ok(Self { d, h, g, n_models })
    }

    pub fn param_count(&self) -> usize {
        Layout::new(*self).total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    w1: usize,
    b1: usize,
    gw: usize,
    gb: usize,
    gv: usize,
    gc: usize,
    w2: usize,
    b2: usize,
    total: usize,
}

impl Layout {
    fn new(dims: HeadDims) -> Self {
        let HeadDims { d, h, g, n_models: n } = dims;
        let w1 = 0;
        let b1 = w1 + d * h;
        let gw = b1 + h;
        let gb = gw + h * g;
        let gv = gb + g;
        let gc = gv + h * g;
        let w2 = gc + g;
        let b2 = w2 + g * n;
        let total = b2 + n;
        Self { w1, b1, gw, gb, gv, gc, w2, b2, total }
    }
}

/// Named views over a flat parameter (or gradient) vector.
#[derive(Debug, Clone, Copy)]
pub struct ParamView<'a> {
    pub w1: &'a [f64],
    pub b1: &'a [f64],
    pub glu_w: &'a [f64],
    pub glu_b: &'a [f64],
    pub glu_v: &'a [f64],
    pub glu_c: &'a [f64],
    pub w2: &'a [f64],
    pub b2: &'a [f64],
}

fn view(dims: HeadDims, p: &[f64]) -> ParamView<'_> {
    let l = Layout::new(dims);
    ParamView {
        w1: &p[l.w1..l.b1],
        b1: &p[l.b1..l.gw],
        glu_w: &p[l.gw..l.gb],
        glu_b: &p[l.gb..l.gv],
        glu_v: &p[l.gv..l.gc],
        glu_c: &p[l.gc..l.w2],
        w2: &p[l.w2..l.b2],
        b2: &p[l.b2..l.total],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorHead {
    dims: HeadDims,
    dropout_p: f64,
    params: Vec<f64>,
}

/// Gradient of the loss with respect to every head parameter, same layout as the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dims: HeadDims,
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn view(&self) -> ParamView<'_> {
        view(self.dims, &self.values)
    }
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
struct Trace {
    act: Vec<f64>,
    hidden: Vec<f64>,
    lin: Vec<f64>,
    gate: Vec<f64>,
    glu_out: Vec<f64>,
    out: Vec<f64>,
}

impl PredictorHead {
    pub const DEFAULT_DROPOUT: f64 = 0.2;

    /// Uniform `+-sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn init(dims: HeadDims, dropout_p: f64, seed: u64) -> Result<Self> {
        check_dropout(dropout_p)?;
        let layout = Layout::new(dims);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let HeadDims { d, h, g, n_models: n } = dims;
        for (start, fan_in, fan_out) in [(layout.w1, d, h), (layout.gw, h, g), (layout.gv, h, g), (layout.w2, g, n)] {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[start..start + fan_in * fan_out] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(Self { dims, dropout_p, params })
    }

    pub fn zeros(dims: HeadDims, dropout_p: f64) -> Result<Self> {
        check_dropout(dropout_p)?;
        Ok(Self { dims, dropout_p, params: vec![0.0; dims.param_count()] })
    }

    pub fn from_params(dims: HeadDims, dropout_p: f64, params: Vec<f64>) -> Result<Self> {
        check_dropout(dropout_p)?;
        if params.len() != dims.param_count() {
            return Err(Error::DimensionMismatch {
                what: "head parameters",
                expected: dims.param_count(),
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("head parameters must be finite".into()));
        }
        Ok(Self { dims, dropout_p, params })
    }

    pub fn dims(&self) -> HeadDims {
        self.dims
    }

    pub fn dropout_p(&self) -> f64 {
        self.dropout_p
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn view(&self) -> ParamView<'_> {
        view(self.dims, &self.params)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims.d {
            return Err(Error::DimensionMismatch { what: "embedding", expected: self.dims.d, found: x.len() });
        }
        Ok(())
    }

    /// Inverted-dropout mask: each entry is 0 with probability `p`, else `1 / (1 - p)`.
    pub fn sample_mask<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        dropout_mask(self.dims.d, self.dropout_p, rng)
    }

    fn trace(&self, x: &[f64], mask: Option<&[f64]>) -> Trace {
        let p = self.view();
        let pre_act: Vec<f64> = match mask {
            Some(m) => x.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => x.to_vec(),
        };
        let act: Vec<f64> = pre_act.iter().map(|&v| gelu(v)).collect();
        let hidden = affine(&act, p.w1, p.b1);
        let lin = affine(&hidden, p.glu_w, p.glu_b);
        let gate: Vec<f64> = affine(&hidden, p.glu_v, p.glu_c).into_iter().map(sigmoid).collect();
        let glu_out: Vec<f64> = lin.iter().zip(&gate).map(|(u, s)| u * s).collect();
        let out = affine(&glu_out, p.w2, p.b2);
        Trace { act, hidden, lin, gate, glu_out, out }
    }

    /// Forward pass. With `training`, a dropout mask is drawn from `rng`;
    /// otherwise the pass is deterministic and `rng` is untouched.
    pub fn forward<R: Rng + ?Sized>(&self, x: &[f64], training: bool, rng: &mut R) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if training && self.dropout_p > 0.0 {
            let mask = self.sample_mask(rng);
            Ok(self.trace(x, Some(&mask)).out)
        } else {
            Ok(self.trace(x, None).out)
        }
    }

    /// Forward pass with an explicit dropout mask (`None` = dropout off).
    pub fn forward_masked(&self, x: &[f64], mask: Option<&[f64]>) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if let Some(m) = mask {
            self.check_input(m)?;
        }
        Ok(self.trace(x, mask).out)
    }

    /// Per-model quality scores in registry order; dropout off.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_masked(x, None)
    }

    /// Mean Huber loss of the masked forward pass and its exact gradient.
    pub fn backward(&self, x: &[f64], target: &[f64], delta: f64, mask: Option<&[f64]>) -> Result<(f64, Gradients)> {
        self.check_input(x)?;
        if let Some(m) = mask {
            self.check_input(m)?;
        }
        let n = self.dims.n_models;
        if target.len() != n {
            return Err(Error::DimensionMismatch { what: "target", expected: n, found: target.len() });
        }
        let t = self.trace(x, mask);
        let loss = huber_loss(&t.out, target, delta)?;

        let HeadDims { d, h, g, .. } = self.dims;
        let layout = Layout::new(self.dims);
        let p = self.view();
        let mut grad = vec![0.0; layout.total];

        let d_out: Vec<f64> = t.out.iter().zip(target).map(|(o, y)| huber_grad(o - y, delta) / n as f64).collect();

        // final linear
        let mut d_glu = vec![0.0; g];
        for k in 0..g {
            let row = &p.w2[k * n..(k + 1) * n];
            let mut acc = 0.0;
            for o in 0..n {
                grad[layout.w2 + k * n + o] = t.glu_out[k] * d_out[o];
                acc += row[o] * d_out[o];
            }
            d_glu[k] = acc;
        }
        grad[layout.b2..layout.total].copy_from_slice(&d_out);

        // GLU
        let d_lin: Vec<f64> = (0..g).map(|k| d_glu[k] * t.gate[k]).collect();
        let d_gate_pre: Vec<f64> = (0..g).map(|k| d_glu[k] * t.lin[k] * t.gate[k] * (1.0 - t.gate[k])).collect();
        let mut d_hidden = vec![0.0; h];
        for j in 0..h {
            let mut acc = 0.0;
            for k in 0..g {
                grad[layout.gw + j * g + k] = t.hidden[j] * d_lin[k];
                grad[layout.gv + j * g + k] = t.hidden[j] * d_gate_pre[k];
                acc += p.glu_w[j * g + k] * d_lin[k] + p.glu_v[j * g + k] * d_gate_pre[k];
            }
            d_hidden[j] = acc;
        }
        grad[layout.gb..layout.gv].copy_from_slice(&d_lin);
        grad[layout.gc..layout.w2].copy_from_slice(&d_gate_pre);

        // first linear; the input side needs no gradient
        for i in 0..d {
            let a = t.act[i];
            for j in 0..h {
                grad[layout.w1 + i * h + j] = a * d_hidden[j];
            }
        }
        grad[layout.b1..layout.gw].copy_from_slice(&d_hidden);

        Ok((loss, Gradients { dims: self.dims, values: grad }))
    }
}

pub fn dropout_mask<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Vec<f64> {
    if p <= 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - p);
    (0..len).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect()
}

fn check_dropout(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("dropout probability must lie in [0, 1), got {p}")))
    }
}
