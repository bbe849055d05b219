//! Generator and discriminator objectives on candle tensors. Every function
//! is dtype-agnostic so gradients can be checked in f64.

use candle_core::{Tensor, D};

use crate::error::{Error, Result};

pub const PROB_EPS: f64 = 1e-7;
/// Style pairs closer than this in L1 are skipped by the diversity term.
pub const STYLE_MIN_DISTANCE: f64 = 1e-8;

fn check_same(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("loss inputs differ in shape: {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Elementwise Huber values `0.5 q² + δ (|x| − q)` with `q = min(|x|, δ)`.
fn huber_elements(diff: &Tensor, delta: f64) -> Result<Tensor> {
    let a = diff.abs()?;
    let q = a.minimum(delta)?;
    Ok(((q.sqr()? * 0.5)? + ((a - &q)? * delta)?)?)
}

/// Mean Huber value over every element.
pub fn huber_loss(target: &Tensor, output: &Tensor, delta: f64) -> Result<Tensor> {
    check_same(target, output)?;
    Ok(huber_elements(&(output - target)?, delta)?.mean_all()?)
}

/// Per-sequence mean Huber value for `(b, …)` inputs, shape `(b,)`.
pub fn huber_per_item(a: &Tensor, b: &Tensor, delta: f64) -> Result<Tensor> {
    check_same(a, b)?;
    let n = a.dim(0)?;
    Ok(huber_elements(&(a - b)?, delta)?.reshape((n, ()))?.mean(1)?)
}

fn clamp_prob(p: &Tensor) -> Result<Tensor> {
    Ok(p.clamp(PROB_EPS, 1.0 - PROB_EPS)?)
}

/// `−mean(log D(fake))`.
pub fn nsgan_generator_loss(fake_scores: &Tensor) -> Result<Tensor> {
    Ok(clamp_prob(fake_scores)?.log()?.mean_all()?.neg()?)
}

/// `−mean(log D(real)) − mean(log(1 − D(fake)))`.
pub fn discriminator_loss(real_scores: &Tensor, fake_scores: &Tensor) -> Result<Tensor> {
    let real = clamp_prob(real_scores)?.log()?.mean_all()?;
    let fake = clamp_prob(fake_scores)?.affine(-1.0, 1.0)?.log()?.mean_all()?;
    Ok((real + fake)?.neg()?)
}

/// `−mean_b min(huber(gen_a, gen_b) / ‖style_a − style_b‖₁, τ)`; pairs with
/// near-identical styles contribute 0.
pub fn style_diversity_loss(
    gen_a: &Tensor,
    gen_b: &Tensor,
    style_a: &Tensor,
    style_b: &Tensor,
    tau: f64,
    delta: f64,
) -> Result<Tensor> {
    check_same(gen_a, gen_b)?;
    check_same(style_a, style_b)?;
    let numer = huber_per_item(gen_a, gen_b, delta)?;
    let l1 = (style_a - style_b)?.abs()?.sum(D::Minus1)?;
    let keep = l1.gt(STYLE_MIN_DISTANCE)?;
    let safe = keep.where_cond(&l1, &l1.ones_like()?)?;
    let ratio = (numer / safe)?.minimum(tau)?;
    let ratio = keep.where_cond(&ratio, &ratio.zeros_like()?)?;
    Ok(ratio.mean_all()?.neg()?)
}

/// `0.5 Σ(μ² + e^{lv} − 1 − lv)` per row, averaged over the batch.
pub fn kld_loss(mean: &Tensor, log_variance: &Tensor) -> Result<Tensor> {
    check_same(mean, log_variance)?;
    let terms = ((mean.sqr()? + log_variance.exp()?)? - log_variance)?.affine(1.0, -1.0)?;
    Ok((terms.sum(D::Minus1)? * 0.5)?.mean_all()?)
}
