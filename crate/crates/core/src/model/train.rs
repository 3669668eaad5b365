use rand::Rng as _;

use super::forward::loss_and_grads;
use super::{ModelError, ModelParams, TrainSchedule};
use crate::dataset::PairedExample;
use crate::numerics::{adam_step, Direction, StepOutcome};
use crate::seed::rng;
use crate::AdamState;

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Pre-update batch loss at every step.
    pub losses: Vec<f64>,
}

/// Adam descent on the mean nll of batches drawn uniformly with replacement.
pub fn train(params: &ModelParams, examples: &[PairedExample], schedule: &TrainSchedule) -> Result<TrainOutcome, ModelError> {
    train_with_progress(params, examples, schedule, |_, _| {})
}

/// [`train`] with a callback receiving `(step, loss)` after every step.
pub fn train_with_progress(
    params: &ModelParams,
    examples: &[PairedExample],
    schedule: &TrainSchedule,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome, ModelError> {
    schedule.validate()?;
    if examples.is_empty() {
        return Err(ModelError::InvalidInput("empty training set".into()));
    }
    let mut params = params.clone();
    let mut state = AdamState::new(params.tensors());
    let mut r = rng(schedule.seed);
    let mut losses = Vec::with_capacity(schedule.steps);
    for step in 0..schedule.steps {
        let batch: Vec<&PairedExample> = (0..schedule.batch_size)
            .map(|_| &examples[r.random_range(0..examples.len())])
            .collect();
        let (loss, grads) = loss_and_grads(&params, &batch)?;
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { step });
        }
        match adam_step(params.tensors_mut(), &grads, &mut state, schedule.lr, Direction::Descent)? {
            StepOutcome::Applied { .. } => {}
            StepOutcome::SkippedNonFinite => return Err(ModelError::NonFiniteLoss { step }),
        }
        losses.push(loss);
        progress(step, loss);
    }
    Ok(TrainOutcome { params, losses })
}
