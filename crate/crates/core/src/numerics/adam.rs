use super::error::{NumericsError, Result};
use super::scalar::Scalar;
use super::tensor::Tensor;

/// Which way an optimizer step moves along the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Standard training: step against the gradient.
    Descent,
    /// Gradient ascent: step along the gradient, i.e. descent on the negated loss.
    Ascent,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Descent => 1.0,
            Direction::Ascent => -1.0,
        }
    }
}

/// Moment accumulators for bias-corrected Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    first: Vec<Tensor<S>>,
    second: Vec<Tensor<S>>,
    step: u64,
    skipped: u64,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome<S> {
    /// Update applied; carries the Euclidean norm of the parameter change.
    Applied { update_norm: S },
    /// A gradient entry was NaN/Inf; parameters and moments left untouched.
    SkippedNonFinite,
}

impl<S: Scalar> AdamState<S> {
    /// Zeroed state congruent with `params`, β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(params: &[Tensor<S>]) -> Self {
        Self::with_hyper(params, S::lit(0.9), S::lit(0.999), S::lit(1e-8))
    }

    pub fn with_hyper(params: &[Tensor<S>], beta1: S, beta2: S, eps: S) -> Self {
        let zeros = |p: &Tensor<S>| Tensor::zeros(p.shape());
        Self {
            first: params.iter().map(zeros).collect(),
            second: params.iter().map(zeros).collect(),
            step: 0,
            skipped: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn skipped_count(&self) -> u64 {
        self.skipped
    }
}

/// One Adam update of `params` in place.
///
/// `Direction::Ascent` negates the gradient and then performs the ordinary
/// descent update, so ascent on `g` and descent on `-g` are the same
/// computation bit for bit.
pub fn adam_step<S: Scalar>(
    params: &mut [Tensor<S>],
    grads: &[Tensor<S>],
    state: &mut AdamState<S>,
    lr: S,
    direction: Direction,
) -> Result<StepOutcome<S>> {
    if !lr.is_finite() || lr < S::zero() {
        return Err(NumericsError::InvalidLearningRate(lr.to_f64_lossy()));
    }
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(NumericsError::Invalid(format!(
            "adam_step: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first) {
        p.same_shape("adam_step", g)?;
        p.same_shape("adam_step", m)?;
    }
    if grads.iter().any(|g| !g.is_finite()) {
        state.skipped += 1;
        return Ok(StepOutcome::SkippedNonFinite);
    }

    state.step += 1;
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let bc1 = S::one() - b1.powi(t);
    let bc2 = S::one() - b2.powi(t);
    let negate = direction == Direction::Ascent;
    let mut norm_sq = S::zero();
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let gv = if negate { -gv } else { gv };
            *mv = b1 * *mv + (S::one() - b1) * gv;
            *vv = b2 * *vv + (S::one() - b2) * gv * gv;
            let mhat = *mv / bc1;
            let vhat = *vv / bc2;
            let delta = lr * mhat / (vhat.sqrt() + eps);
            if delta != S::zero() {
                *pv -= delta;
            }
            norm_sq += delta * delta;
        }
    }
    Ok(StepOutcome::Applied {
        update_norm: norm_sq.sqrt(),
    })
}
