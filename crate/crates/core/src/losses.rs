//! Generator objective (non-saturating adversarial term plus weighted L1) and
//! the conditional discriminator objective over patch-probability grids.
//!
//! Losses are evaluated in `f64`; gradients are returned as `f32` tensors
//! shaped like the inputs they differentiate.

use serde::{Deserialize, Serialize};
use sprite_nn::Tensor;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialForm {
    /// Generator: per-patch `-log D(G(x))`, averaged. Discriminator: patch
    /// grids reduced to their mean, then binary cross-entropy.
    NonSaturating,
    /// Both networks reduce the grid to its mean before the log.
    PaperLiteralMeanThenBce,
    /// Both networks use per-patch cross-entropy, averaged over patches.
    PerPatchBceMean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_l1: f64,
    pub adversarial_form: AdversarialForm,
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_l1: 100.0,
            adversarial_form: AdversarialForm::NonSaturating,
            epsilon: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_l1 >= 0.0) || !self.lambda_l1.is_finite() {
            return Err(Error::Config(format!("lambda_l1 must be >= 0, got {}", self.lambda_l1)));
        }
        if !(self.epsilon > 0.0) || self.epsilon >= 0.5 {
            return Err(Error::Config(format!("epsilon must be in (0, 0.5), got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub adversarial: f64,
    pub l1: f64,
}

fn check_same(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Invalid(format!("{op}: shapes {} and {} differ", a.shape(), b.shape())));
    }
    Ok(())
}

fn check_finite(op: &str, t: &Tensor) -> Result<()> {
    if !t.all_finite() {
        return Err(Error::Numerical(format!("{op}: input contains NaN or infinity")));
    }
    Ok(())
}

/// Mean absolute difference over every component.
pub fn l1_term(y: &Tensor, y_hat: &Tensor) -> Result<f64> {
    check_same("l1_term", y, y_hat)?;
    if y.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = y
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum();
    Ok(sum / y.len() as f64)
}

/// `-log(clamp(p, eps, 1))` and its derivative (zero where the clamp is active).
fn neg_log(p: f64, eps: f64) -> (f64, f64) {
    if p > eps {
        (-p.min(1.0).ln(), if p <= 1.0 { -1.0 / p } else { 0.0 })
    } else {
        (-eps.ln(), 0.0)
    }
}

fn grid_mean(grid: &Tensor) -> f64 {
    grid.data().iter().map(|&v| v as f64).sum::<f64>() / grid.len() as f64
}

/// Adversarial term `-E log D(G(x))` and its gradient with respect to the grid.
fn generator_adversarial(d_fake: &Tensor, cfg: &LossConfig) -> (f64, Tensor) {
    let n = d_fake.len() as f64;
    let mut grad = Tensor::zeros(d_fake.shape());
    match cfg.adversarial_form {
        AdversarialForm::NonSaturating | AdversarialForm::PerPatchBceMean => {
            let mut loss = 0.0;
            for (g, &p) in grad.data_mut().iter_mut().zip(d_fake.data()) {
                let (l, d) = neg_log(p as f64, cfg.epsilon);
                loss += l;
                *g = (d / n) as f32;
            }
            (loss / n, grad)
        }
        AdversarialForm::PaperLiteralMeanThenBce => {
            let (l, d) = neg_log(grid_mean(d_fake), cfg.epsilon);
            grad.data_mut().fill((d / n) as f32);
            (l, grad)
        }
    }
}

pub fn generator_loss(d_fake: &Tensor, y: &Tensor, y_hat: &Tensor, cfg: &LossConfig) -> Result<LossBreakdown> {
    Ok(generator_loss_with_grads(d_fake, y, y_hat, cfg)?.0)
}

/// Gradients of the generator loss.
pub struct GeneratorLossGrads {
    /// `dL/d D(G(x))`, to be pushed back through the discriminator.
    pub d_grid: Tensor,
    /// Direct `dL/d G(x)` from the L1 term.
    pub d_output: Tensor,
}

pub fn generator_loss_with_grads(
    d_fake: &Tensor,
    y: &Tensor,
    y_hat: &Tensor,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, GeneratorLossGrads)> {
    check_same("generator_loss", y, y_hat)?;
    for t in [d_fake, y, y_hat] {
        check_finite("generator_loss", t)?;
    }
    if d_fake.is_empty() {
        return Err(Error::Invalid("generator_loss: empty patch grid".into()));
    }
    let (adversarial, d_grid) = generator_adversarial(d_fake, cfg);
    let l1 = l1_term(y, y_hat)?;
    let scale = (cfg.lambda_l1 / y.len() as f64) as f32;
    let mut d_output = Tensor::zeros(y.shape());
    for ((g, &a), &b) in d_output.data_mut().iter_mut().zip(y_hat.data()).zip(y.data()) {
        *g = if a > b {
            scale
        } else if a < b {
            -scale
        } else {
            0.0
        };
    }
    let breakdown = LossBreakdown {
        total: adversarial + cfg.lambda_l1 * l1,
        adversarial,
        l1,
    };
    Ok((breakdown, GeneratorLossGrads { d_grid, d_output }))
}

pub fn discriminator_loss(d_real: &Tensor, d_fake: &Tensor, cfg: &LossConfig) -> Result<f64> {
    Ok(discriminator_loss_with_grads(d_real, d_fake, cfg)?.0)
}

/// Loss with `dL/d real_grid` and `dL/d fake_grid`.
pub fn discriminator_loss_with_grads(d_real: &Tensor, d_fake: &Tensor, cfg: &LossConfig) -> Result<(f64, Tensor, Tensor)> {
    check_same("discriminator_loss", d_real, d_fake)?;
    check_finite("discriminator_loss", d_real)?;
    check_finite("discriminator_loss", d_fake)?;
    if d_real.is_empty() {
        return Err(Error::Invalid("discriminator_loss: empty patch grid".into()));
    }
    let n = d_real.len() as f64;
    let mut g_real = Tensor::zeros(d_real.shape());
    let mut g_fake = Tensor::zeros(d_fake.shape());
    let loss = match cfg.adversarial_form {
        AdversarialForm::NonSaturating | AdversarialForm::PaperLiteralMeanThenBce => {
            let (lr, dr) = neg_log(grid_mean(d_real), cfg.epsilon);
            let (lf, df) = neg_log(1.0 - grid_mean(d_fake), cfg.epsilon);
            g_real.data_mut().fill((dr / n) as f32);
            g_fake.data_mut().fill((-df / n) as f32);
            lr + lf
        }
        AdversarialForm::PerPatchBceMean => {
            let mut loss = 0.0;
            for (g, &p) in g_real.data_mut().iter_mut().zip(d_real.data()) {
                let (l, d) = neg_log(p as f64, cfg.epsilon);
                loss += l;
                *g = (d / n) as f32;
            }
            for (g, &p) in g_fake.data_mut().iter_mut().zip(d_fake.data()) {
                let (l, d) = neg_log(1.0 - p as f64, cfg.epsilon);
                loss += l;
                *g = (-d / n) as f32;
            }
            loss / n
        }
    };
    Ok((loss, g_real, g_fake))
}
