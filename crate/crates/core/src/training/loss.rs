//! Loss terms on the tape. Every rounding and stop-gradient goes through
//! [`Rounding`] so the same graph can be replayed with frozen rounding offsets
//! and frozen detached values, whose exact derivative is the training gradient.

use rand::Rng;

use crate::codec::{BoundModel, LIKELIHOOD_FLOOR};
use crate::tensor::{Tape, Tensor, Var};

use super::config::{AuxNorm, ConstraintSet, LossWeights};
use super::Result;

#[derive(Clone, Debug, Default)]
pub struct Rounding {
    frozen: Option<Vec<Tensor>>,
    recorded: Vec<Tensor>,
    cursor: usize,
}

impl Rounding {
    /// Straight-through rounding; offsets `round(v) - v` are recorded.
    pub fn live() -> Self {
        Self::default()
    }

    /// Replays `v + offset` and detached values recorded by an earlier live pass.
    pub fn frozen(recorded: Vec<Tensor>) -> Self {
        Rounding {
            frozen: Some(recorded),
            ..Default::default()
        }
    }

    pub fn into_recorded(self) -> Vec<Tensor> {
        self.recorded
    }

    fn next_frozen(&mut self) -> Option<Tensor> {
        let t = self.frozen.as_ref()?[self.cursor].clone();
        self.cursor += 1;
        Some(t)
    }

    /// `v` as a constant; a frozen replay substitutes the live pass's value.
    pub fn stop_gradient(&mut self, tape: &mut Tape, v: Var) -> Var {
        match self.next_frozen() {
            None => {
                self.recorded.push(tape.value(v).clone());
                tape.detach(v)
            }
            Some(value) => tape.constant(value),
        }
    }

    pub fn round(&mut self, tape: &mut Tape, v: Var) -> Result<Var> {
        match self.next_frozen() {
            None => {
                let r = tape.ste_round(v);
                let offset = tape.value(r).data().iter().zip(tape.value(v).data()).map(|(a, b)| a - b).collect();
                self.recorded.push(Tensor::new(tape.shape(v).to_vec(), offset)?);
                Ok(r)
            }
            Some(offset) => {
                let c = tape.constant(offset);
                Ok(tape.add(v, c)?)
            }
        }
    }
}

/// `sum(-log2 P)` of `v` under unit-bin discretized `N(mu, sigma)`, floored.
pub fn discretized_bits(tape: &mut Tape, v: Var, mu: Var, sigma: Var) -> Result<Var> {
    let c = tape.sub(v, mu)?;
    let hi = tape.add_scalar(c, 0.5);
    let lo = tape.add_scalar(c, -0.5);
    let hi = tape.div(hi, sigma)?;
    let lo = tape.div(lo, sigma)?;
    let hi = tape.gaussian_cdf(hi);
    let lo = tape.gaussian_cdf(lo);
    let p = tape.sub(hi, lo)?;
    let p = tape.clamp(p, LIKELIHOOD_FLOOR, 1.0);
    let logp = tape.log(p);
    let s = tape.sum(logp);
    Ok(tape.mul_scalar(s, -1.0 / std::f64::consts::LN_2))
}

/// Bits per point of the noisy latent and hyper-latent.
#[allow(clippy::too_many_arguments)]
pub fn rate_loss(
    tape: &mut Tape,
    y_noisy: Var,
    mu: Var,
    sigma: Var,
    z_noisy: Var,
    prior_mean: Var,
    prior_scale: Var,
    num_points: usize,
) -> Result<Var> {
    let by = discretized_bits(tape, y_noisy, mu, sigma)?;
    let bz = discretized_bits(tape, z_noisy, prior_mean, prior_scale)?;
    let b = tape.add(by, bz)?;
    Ok(tape.mul_scalar(b, 1.0 / num_points as f64))
}

/// Mean squared error.
pub fn distortion_loss(tape: &mut Tape, x: Var, x_hat: Var) -> Result<Var> {
    let d = tape.sub(x, x_hat)?;
    let sq = tape.square(d);
    Ok(tape.mean(sq))
}

fn aux(tape: &mut Tape, a: Var, b: Var, norm: AuxNorm) -> Result<Var> {
    let d = tape.sub(a, b)?;
    let sq = tape.square(d);
    Ok(match norm {
        AuxNorm::Mse => tape.mean(sq),
        AuxNorm::SumSquares => tape.sum(sq),
    })
}

/// `round(clip(x, 0, 1) * 255) / 255` with straight-through rounding.
pub fn scale_round_normalized(tape: &mut Tape, x: Var, rounding: &mut Rounding) -> Result<Var> {
    let c = tape.clamp(x, 0.0, 1.0);
    let s = tape.mul_scalar(c, 255.0);
    let r = rounding.round(tape, s)?;
    let denom = tape.constant(Tensor::full(tape.shape(r), 255.0));
    Ok(tape.div(r, denom)?)
}

/// Deployed path applied to the main-path reconstruction: `(x_MI, L_MI)`.
pub fn mic_path(tape: &mut Tape, x: Var, x_hat: Var, norm: AuxNorm, rounding: &mut Rounding) -> Result<(Var, Var)> {
    let x_mi = scale_round_normalized(tape, x_hat, rounding)?;
    let l = aux(tape, x, x_mi, norm)?;
    Ok((x_mi, l))
}

/// Quantization-free path `f_D(f_E(x))`; `y` is `f_E(x)`: `(x_TR, L_TR)`.
pub fn trc_path(tape: &mut Tape, m: &BoundModel, x: Var, y: Var, norm: AuxNorm) -> Result<(Var, Var)> {
    let x_tr = m.synthesize(tape, y)?;
    let l = aux(tape, x, x_tr, norm)?;
    Ok((x_tr, l))
}

/// Re-analysis of the post-processed reconstruction against the detached
/// quantized latent: `(y_LC, L_LC)`.
pub fn lcc_path(
    tape: &mut Tape,
    m: &BoundModel,
    y_hat: Var,
    x_mi: Var,
    norm: AuxNorm,
    rounding: &mut Rounding,
) -> Result<(Var, Var)> {
    let y_lc = m.analyze(tape, x_mi)?;
    let target = rounding.stop_gradient(tape, y_hat);
    let l = aux(tape, target, y_lc, norm)?;
    Ok((y_lc, l))
}

/// Scalar loss nodes for one crop. Auxiliary terms outside the constraint
/// set are not built, except `mi`, which is always cheap to form.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub rate: Var,
    pub distortion: Var,
    pub mi: Var,
    pub tr: Option<Var>,
    pub lc: Option<Var>,
    pub total: Var,
    /// Main-path reconstruction (unclipped).
    pub x_hat: Var,
    /// Post-processed reconstruction as the decoder would emit it.
    pub x_mi: Var,
}

/// Builds every term for one padded `(N_pad, 3)` crop holding `num_points` points.
#[allow(clippy::too_many_arguments)]
pub fn crop_losses<R: Rng + ?Sized>(
    tape: &mut Tape,
    m: &BoundModel,
    x: &Tensor,
    num_points: usize,
    constraint: ConstraintSet,
    weights: LossWeights,
    norm: AuxNorm,
    noise: &mut R,
    rounding: &mut Rounding,
) -> Result<LossTerms> {
    let xv = tape.constant(x.clone());
    let y = m.analyze(tape, xv)?;
    let z = m.hyper_analyze(tape, y)?;
    let z_hat = rounding.round(tape, z)?;
    let (mu, sigma) = m.hyper_synthesize(tape, z_hat)?;

    let y_noisy = tape.add_uniform_noise(y, noise);
    let z_noisy = tape.add_uniform_noise(z, noise);
    let rows_z = tape.shape(z)[0];
    let (pm, ps) = m.prior(tape, rows_z)?;
    let rate = rate_loss(tape, y_noisy, mu, sigma, z_noisy, pm, ps, num_points)?;

    let centered = tape.sub(y, mu)?;
    let d = rounding.round(tape, centered)?;
    let y_hat = tape.add(d, mu)?;
    let x_hat = m.synthesize(tape, y_hat)?;
    let distortion = distortion_loss(tape, xv, x_hat)?;
    let (x_mi, mi) = mic_path(tape, xv, x_hat, norm, rounding)?;

    let tr = if constraint.has_trc() {
        Some(trc_path(tape, m, xv, y, norm)?.1)
    } else {
        None
    };
    let lc = if constraint.has_lcc() {
        Some(lcc_path(tape, m, y_hat, x_mi, norm, rounding)?.1)
    } else {
        None
    };

    let fidelity = if constraint.has_mic() { mi } else { distortion };
    let fidelity = tape.mul_scalar(fidelity, weights.lambda);
    let mut total = tape.add(rate, fidelity)?;
    if let Some(tr) = tr {
        let t = tape.mul_scalar(tr, weights.alpha);
        total = tape.add(total, t)?;
    }
    if let Some(lc) = lc {
        let t = tape.mul_scalar(lc, weights.beta);
        total = tape.add(total, t)?;
    }
    Ok(LossTerms {
        rate,
        distortion,
        mi,
        tr,
        lc,
        total,
        x_hat,
        x_mi,
    })
}
