//! Minimal layer set on top of candle tensors. Parameters live in a
//! [`ParamStore`] and are initialized from a seeded ChaCha stream so that a
//! model is a pure function of its seed.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::archive::Archive;
use crate::error::{Error, Result};
use crate::rng::{rng_from, Rng};

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn device() -> Device {
    Device::Cpu
}

pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::leaky_relu(x, LEAKY_SLOPE)?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::sigmoid(x)?)
}

/// Named trainable parameters.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    rng: Rng,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self { vars: BTreeMap::new(), rng: rng_from(seed) }
    }

    fn add(&mut self, name: &str, shape: &[usize], values: Vec<f32>) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::InvalidInput(format!("parameter `{name}` defined twice")));
        }
        let var = Var::from_tensor(&Tensor::from_vec(values, shape, &device())?)?;
        let t = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(t)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<Tensor> {
        let n = shape.iter().product();
        let values = (0..n).map(|_| self.rng.random_range(-bound..=bound) as f32).collect();
        self.add(name, shape, values)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Tensor> {
        let n = shape.iter().product();
        let dist = Normal::new(0.0, std).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let values = (0..n).map(|_| dist.sample(&mut self.rng) as f32).collect();
        self.add(name, shape, values)
    }

    pub fn from_values(&mut self, name: &str, shape: &[usize], values: Vec<f32>) -> Result<Tensor> {
        if values.len() != shape.iter().product::<usize>() {
            return Err(Error::Shape(format!("`{name}`: {} values for shape {shape:?}", values.len())));
        }
        self.add(name, shape, values)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    /// Variables whose name starts with any of `prefixes`.
    pub fn vars_with_prefix(&self, prefixes: &[&str]) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(n, _)| prefixes.iter().any(|p| n.starts_with(p)))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub fn write_to(&self, archive: &mut Archive) -> Result<()> {
        for (name, var) in &self.vars {
            let data = var.as_tensor().flatten_all()?.to_vec1::<f32>()?;
            archive.insert(name.clone(), var.dims().to_vec(), data)?;
        }
        Ok(())
    }

    /// Overwrites every parameter with the archive tensor of the same name.
    pub fn read_from(&self, archive: &Archive) -> Result<()> {
        for (name, var) in &self.vars {
            let t = archive.get(name)?;
            if t.shape != var.dims() {
                return Err(Error::Checkpoint(format!(
                    "`{name}` has shape {:?} in the checkpoint, model expects {:?}",
                    t.shape,
                    var.dims()
                )));
            }
            var.set(&Tensor::from_vec(t.data.clone(), t.shape.as_slice(), &device())?)?;
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct Linear {
    /// (in, out), stored transposed so the forward pass is a plain matmul.
    w: Tensor,
    b: Tensor,
}

impl Linear {
    pub fn new(ps: &mut ParamStore, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        let bound = 1.0 / (d_in as f64).sqrt();
        let w = ps.uniform(&format!("{name}.weight"), &[d_in, d_out], bound)?;
        let b = ps.uniform(&format!("{name}.bias"), &[d_out], bound)?;
        Ok(Self { w, b })
    }

    /// Works on `(.., in)` inputs of rank 2 or 3.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = match x.rank() {
            2 => x.matmul(&self.w)?,
            3 => {
                let (b, t, d) = x.dims3()?;
                x.reshape((b * t, d))?.matmul(&self.w)?.reshape((b, t, self.w.dim(1)?))?
            }
            r => return Err(Error::Shape(format!("linear layer got rank-{r} input"))),
        };
        Ok(y.broadcast_add(&self.b)?)
    }
}

#[derive(Clone)]
pub struct Conv1d {
    w: Tensor,
    b: Tensor,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<Self> {
        let bound = 1.0 / ((c_in * kernel) as f64).sqrt();
        let w = ps.uniform(&format!("{name}.weight"), &[c_out, c_in, kernel], bound)?;
        let b = ps.uniform(&format!("{name}.bias"), &[c_out], bound)?;
        Ok(Self { w, b, kernel, stride, padding, dilation })
    }

    /// `(b, c_in, l)` → `(b, c_out, l')`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv1d(&self.w, self.padding, self.stride, self.dilation, 1)?;
        Ok(y.broadcast_add(&self.b.reshape((1, (), 1))?)?)
    }

    pub fn out_len(&self, l: usize) -> usize {
        (l + 2 * self.padding).saturating_sub(self.dilation * (self.kernel - 1) + 1) / self.stride + 1
    }
}

#[derive(Clone)]
pub struct Embedding {
    w: Tensor,
    pub dim: usize,
}

impl Embedding {
    pub fn new(ps: &mut ParamStore, name: &str, vocab: usize, dim: usize) -> Result<Self> {
        Ok(Self { w: ps.normal(&format!("{name}.weight"), &[vocab, dim], 1.0)?, dim })
    }

    pub fn from_values(ps: &mut ParamStore, name: &str, vocab: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        Ok(Self { w: ps.from_values(&format!("{name}.weight"), &[vocab, dim], values)?, dim })
    }

    /// `(b, t)` u32 ids → `(b, t, dim)`.
    pub fn forward(&self, ids: &Tensor) -> Result<Tensor> {
        let (b, t) = ids.dims2()?;
        Ok(self.w.index_select(&ids.flatten_all()?, 0)?.reshape((b, t, self.dim))?)
    }
}

/// One bidirectional GRU layer; both directions are advanced together as a
/// batch of two.
#[derive(Clone)]
struct GruLayer {
    w_ih: Tensor, // (2, in, 3h)
    b_ih: Tensor, // (2, 1, 3h)
    w_hh: Tensor, // (2, h, 3h)
    b_hh: Tensor, // (2, 1, 3h)
}

/// Multi-layer bidirectional GRU with PyTorch gate conventions
/// (r, z, n ordering; `n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))`).
#[derive(Clone)]
pub struct BiGru {
    layers: Vec<GruLayer>,
    pub hidden: usize,
}

impl BiGru {
    pub fn new(ps: &mut ParamStore, name: &str, d_in: usize, hidden: usize, num_layers: usize) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        let layers = (0..num_layers)
            .map(|l| {
                let li = if l == 0 { d_in } else { 2 * hidden };
                Ok(GruLayer {
                    w_ih: ps.uniform(&format!("{name}.l{l}.w_ih"), &[2, li, 3 * hidden], bound)?,
                    b_ih: ps.uniform(&format!("{name}.l{l}.b_ih"), &[2, 1, 3 * hidden], bound)?,
                    w_hh: ps.uniform(&format!("{name}.l{l}.w_hh"), &[2, hidden, 3 * hidden], bound)?,
                    b_hh: ps.uniform(&format!("{name}.l{l}.b_hh"), &[2, 1, 3 * hidden], bound)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, hidden })
    }

    /// `(b, t, in)` → `(b, t, 2h)` with forward and backward states
    /// concatenated. `dropout` masks the input of every layer after the first.
    pub fn forward(&self, x: &Tensor, mut dropout: Option<(&mut Rng, f64)>) -> Result<Tensor> {
        let mut x = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                if let Some((rng, p)) = dropout.as_mut() {
                    x = apply_dropout(&x, rng, *p)?;
                }
            }
            x = self.layer_forward(layer, &x)?;
        }
        Ok(x)
    }

    fn layer_forward(&self, layer: &GruLayer, x: &Tensor) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        let h = self.hidden;
        let gi = x
            .reshape((1, b * t, d))?
            .broadcast_matmul(&layer.w_ih)?
            .broadcast_add(&layer.b_ih)?
            .reshape((2, b, t, 3 * h))?;
        let gi_f = gi.get(0)?;
        let gi_b = gi.get(1)?;
        let mut state = Tensor::zeros((2, b, h), DType::F32, x.device())?;
        let mut fwd = Vec::with_capacity(t);
        let mut bwd = Vec::with_capacity(t);
        for s in 0..t {
            let g = Tensor::stack(&[gi_f.narrow(1, s, 1)?.squeeze(1)?, gi_b.narrow(1, t - 1 - s, 1)?.squeeze(1)?], 0)?;
            let gh = state.matmul(&layer.w_hh)?.broadcast_add(&layer.b_hh)?;
            let rz = sigmoid(&(g.narrow(D::Minus1, 0, 2 * h)? + gh.narrow(D::Minus1, 0, 2 * h)?)?)?;
            let r = rz.narrow(D::Minus1, 0, h)?;
            let z = rz.narrow(D::Minus1, h, h)?;
            let n = (g.narrow(D::Minus1, 2 * h, h)? + (r * gh.narrow(D::Minus1, 2 * h, h)?)?)?.tanh()?;
            state = (&n + (z * (&state - &n)?)?)?;
            fwd.push(state.get(0)?);
            bwd.push(state.get(1)?);
        }
        bwd.reverse();
        let fwd = Tensor::stack(&fwd, 1)?;
        let bwd = Tensor::stack(&bwd, 1)?;
        Ok(Tensor::cat(&[fwd, bwd], 2)?)
    }
}

/// Inverted dropout with a mask drawn from `rng`.
pub fn apply_dropout(x: &Tensor, rng: &mut Rng, p: f64) -> Result<Tensor> {
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - p;
    let mask: Vec<f32> = (0..x.elem_count())
        .map(|_| if rng.random::<f64>() < keep { (1.0 / keep) as f32 } else { 0.0 })
        .collect();
    Ok((x * Tensor::from_vec(mask, x.dims(), x.device())?)?)
}

/// Sum of squared gradient entries over `vars`, then scales every gradient
/// so the global norm is at most `max_norm`. Returns the norm before
/// clipping.
pub fn clip_grad_norm(grads: &mut candle_core::backprop::GradStore, vars: &[Var], max_norm: f64) -> Result<f64> {
    let mut sq = 0.0f64;
    for v in vars {
        if let Some(g) = grads.get(v.as_tensor()) {
            sq += g.sqr()?.sum_all()?.to_scalar::<f32>()? as f64;
        }
    }
    let norm = sq.sqrt();
    if norm.is_finite() && norm > max_norm {
        let factor = max_norm / norm;
        for v in vars {
            if let Some(g) = grads.remove(v.as_tensor()) {
                grads.insert(v.as_tensor(), (g * factor)?);
            }
        }
    }
    Ok(norm)
}
