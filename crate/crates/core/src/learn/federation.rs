use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{DataMode, Dataset, LocalDataset, Sample};
use super::model::Model;
use super::phy::Phy;
use crate::error::{Error, Result};
use crate::oac::{majority_vote, VoteVector};
use crate::rng::{keyed_rng, DrawKind, SERVER};

/// Mean gradient over a batch drawn uniformly without replacement. A batch
/// at least as large as the dataset uses all of it.
pub fn local_gradient<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    w: &[f64],
    data: &Dataset,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Config(
            "cannot take a gradient over an empty dataset".into(),
        ));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let batch: Vec<&Sample> = if batch_size >= data.len() {
        data.refs()
    } else {
        let mut picks = index::sample(rng, data.len(), batch_size).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|i| &data.samples[i]).collect()
    };
    Ok(model.loss_grad(w, &batch).1)
}

/// Error-free majority vote of the device votes.
pub fn ideal_mv(votes: &[VoteVector]) -> Result<VoteVector> {
    majority_vote(votes)
}

/// One completed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub local_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub w: Vec<f64>,
    pub eta: f64,
    pub round: usize,
    pub history: Vec<RoundRecord>,
}

impl TrainState {
    pub fn new(w: Vec<f64>, eta: f64) -> Self {
        Self {
            w,
            eta,
            round: 0,
            history: Vec::new(),
        }
    }
}

/// `w ← w − η·v` and advance the round counter.
pub fn apply_update(state: &mut TrainState, mv: &VoteVector) -> Result<()> {
    if mv.len() != state.w.len() {
        return Err(Error::Framing {
            expected: state.w.len(),
            actual: mv.len(),
        });
    }
    for (w, v) in state.w.iter_mut().zip(mv.signs()) {
        *w -= state.eta * *v as f64;
    }
    state.round += 1;
    Ok(())
}

/// Top-1 accuracy on `test`.
pub fn evaluate<M: Model + ?Sized>(model: &M, w: &[f64], test: &Dataset) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let hits = test
        .samples
        .iter()
        .filter(|s| model.predict(w, &s.features) == s.label)
        .count();
    hits as f64 / test.len() as f64
}

/// Training hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub rounds: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mode: DataMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 200,
            batch_size: 32,
            learning_rate: 0.01,
            mode: DataMode::Homogeneous,
        }
    }
}

/// Devices, their data, the server's test set and the uplink.
pub struct Federation<'a, M: Model + ?Sized> {
    pub model: &'a M,
    pub locals: Vec<LocalDataset>,
    pub test: Dataset,
    pub phy: Phy,
    pub batch_size: usize,
    pub seed: u64,
}

impl<M: Model + ?Sized> Federation<'_, M> {
    pub fn init_state(&self, eta: f64) -> TrainState {
        let mut rng = keyed_rng(self.seed, 0, SERVER, DrawKind::Init);
        TrainState::new(self.model.init(&mut rng), eta)
    }

    /// Sign of each device's stochastic gradient at `w`.
    pub fn local_votes(&self, round: u64, w: &[f64]) -> Result<Vec<VoteVector>> {
        self.locals
            .par_iter()
            .enumerate()
            .map(|(k, local)| {
                let mut rng = keyed_rng(self.seed, round, k as u64, DrawKind::Batch);
                let g = local_gradient(self.model, w, &local.data, self.batch_size, &mut rng)?;
                Ok(VoteVector::from_values(&g))
            })
            .collect()
    }

    pub fn local_losses(&self, w: &[f64]) -> Vec<f64> {
        self.locals
            .par_iter()
            .map(|l| self.model.loss(w, &l.data.refs()))
            .collect()
    }

    /// Votes, uplink aggregation, update and bookkeeping for one round.
    pub fn run_round(&self, state: &mut TrainState) -> Result<()> {
        let round = state.round as u64;
        let votes = self.local_votes(round, &state.w)?;
        let mv = self.phy.aggregate(self.seed, round, &votes)?;
        apply_update(state, &mv)?;
        let local_losses = self.local_losses(&state.w);
        let sizes: Vec<f64> = self.locals.iter().map(|l| l.data.len() as f64).collect();
        let total: f64 = sizes.iter().sum();
        let train_loss = local_losses
            .iter()
            .zip(&sizes)
            .map(|(l, n)| l * n)
            .sum::<f64>()
            / total;
        state.history.push(RoundRecord {
            round: state.round,
            train_loss,
            test_accuracy: evaluate(self.model, &state.w, &self.test),
            local_losses,
        });
        Ok(())
    }

    pub fn run(&self, state: &mut TrainState, rounds: usize) -> Result<()> {
        for _ in 0..rounds {
            self.run_round(state)?;
        }
        Ok(())
    }

    /// `(distance, local loss)` per device at the current parameters.
    pub fn loss_by_distance(&self, state: &TrainState) -> Vec<(f64, f64)> {
        self.locals
            .iter()
            .zip(self.local_losses(&state.w))
            .map(|(l, loss)| (l.ed_distance, loss))
            .collect()
    }
}
