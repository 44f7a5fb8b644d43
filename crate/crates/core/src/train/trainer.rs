use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{sample_loss_and_grad, Labels, SampleLoss};
use super::optim::OptimizerState;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::hands::HandExample;
use crate::model::{init_model, ModelConfig, ModelParams};

/// Stream of the shuffling generator; parameters are initialized from stream 0.
const SHUFFLE_STREAM: u64 = 1;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub epoch: usize,
    pub stage_losses: Vec<f64>,
    pub weights: Vec<f64>,
    pub total_loss: f64,
    /// Final-stage mean joint error over the batch, in heatmap cells.
    pub mean_error: f64,
}

impl LogRow {
    pub fn csv_header(stages: usize) -> String {
        let mut cols = vec!["step".to_string(), "epoch".to_string()];
        cols.extend((1..=stages).map(|i| format!("loss_{i}")));
        cols.extend((1..=stages).map(|i| format!("weight_{i}")));
        cols.push("total_loss".into());
        cols.push("mean_error".into());
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.step.to_string(), self.epoch.to_string()];
        cols.extend(self.stage_losses.iter().map(|v| v.to_string()));
        cols.extend(self.weights.iter().map(|v| v.to_string()));
        cols.push(self.total_loss.to_string());
        cols.push(self.mean_error.to_string());
        cols.join(",")
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParams<f32>,
    pub optimizer: OptimizerState<f32>,
    /// Completed optimizer steps.
    pub step: usize,
    pub epoch: usize,
    /// Position inside the current epoch's example order.
    pub cursor: usize,
    pub order: Vec<usize>,
    pub rng: ChaCha8Rng,
    pub history: Vec<LogRow>,
}

impl TrainState {
    pub fn new(model: &ModelConfig, train: &TrainConfig) -> Result<Self> {
        let params = init_model::<f32>(model, train.seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
        rng.set_stream(SHUFFLE_STREAM);
        Ok(Self {
            optimizer: OptimizerState::new(train.optimizer, &params),
            params,
            step: 0,
            epoch: 0,
            cursor: 0,
            order: Vec::new(),
            rng,
            history: Vec::new(),
        })
    }
}

/// Drives the optimization over a fixed set of prepared hands.
pub struct Trainer<'d> {
    pub model: ModelConfig,
    pub config: TrainConfig,
    examples: &'d [HandExample],
    state: TrainState,
}

impl<'d> Trainer<'d> {
    pub fn new(examples: &'d [HandExample], model: ModelConfig, config: TrainConfig) -> Result<Self> {
        let state = TrainState::new(&model, &config)?;
        Self::resume(examples, model, config, state)
    }

    /// Continues from a saved state.
    pub fn resume(
        examples: &'d [HandExample],
        model: ModelConfig,
        config: TrainConfig,
        state: TrainState,
    ) -> Result<Self> {
        model.validate()?;
        config.validate()?;
        if examples.is_empty() {
            return Err(Error::Argument("no hands to train on".into()));
        }
        if !state.order.is_empty() && state.order.len() != examples.len() {
            return Err(Error::Argument(format!(
                "state was trained on {} hands but {} were given",
                state.order.len(),
                examples.len()
            )));
        }
        if state.optimizer.kind != config.optimizer {
            return Err(Error::config("optimizer", "differs from the resumed state"));
        }
        let expected = init_model::<f32>(&model, 0)?;
        if !state.params.same_layout(&expected) {
            return Err(Error::config(
                "model",
                "parameters do not match the model configuration",
            ));
        }
        Ok(Self {
            model,
            config,
            examples,
            state,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.examples.len().div_ceil(self.config.batch_size)
    }

    pub fn total_steps(&self) -> usize {
        self.config
            .max_steps
            .unwrap_or(self.config.epochs * self.steps_per_epoch())
    }

    pub fn is_finished(&self) -> bool {
        self.state.step >= self.total_steps()
    }

    fn next_batch(&mut self) -> Vec<usize> {
        let s = &mut self.state;
        if s.cursor >= s.order.len() {
            if !s.order.is_empty() {
                s.epoch += 1;
            }
            s.order = (0..self.examples.len()).collect();
            s.order.shuffle(&mut s.rng);
            s.cursor = 0;
        }
        let end = (s.cursor + self.config.batch_size).min(s.order.len());
        let batch = s.order[s.cursor..end].to_vec();
        s.cursor = end;
        batch
    }

    /// One optimizer step. On divergence the state is left untouched.
    pub fn step(&mut self) -> Result<&LogRow> {
        let saved = (
            self.state.epoch,
            self.state.cursor,
            self.state.order.clone(),
            self.state.rng.clone(),
        );
        let batch = self.next_batch();
        let weighting = self.config.weighting(&self.model);
        let params = &self.state.params;
        let model = &self.model;
        let results = batch
            .par_iter()
            .map(|&i| {
                let ex = &self.examples[i];
                let labels = Labels {
                    target: &ex.target,
                    gt: &ex.gt_cells,
                    occluded: &ex.occluded,
                };
                sample_loss_and_grad(params, &ex.crop, labels, model, weighting, None)
            })
            .collect::<Result<Vec<(SampleLoss, ModelParams<f32>)>>>();
        let results = match results {
            Ok(r) => r,
            Err(e) => {
                self.restore(saved);
                return Err(e);
            }
        };
        let n = results.len() as f64;
        let stages = self.model.num_msff;
        let mut row = LogRow {
            step: self.state.step,
            epoch: self.state.epoch,
            stage_losses: vec![0.0; stages],
            weights: vec![0.0; stages],
            total_loss: 0.0,
            mean_error: 0.0,
        };
        let mut grads = self.state.params.zeros_like();
        for (loss, g) in &results {
            for i in 0..stages {
                row.stage_losses[i] += loss.stage_losses[i] / n;
                row.weights[i] += loss.weights[i] / n;
            }
            row.total_loss += loss.total / n;
            row.mean_error += loss.stage_errors[stages - 1] / n;
            grads.accumulate(g);
        }
        grads.scale(1.0 / n as f32);
        if !row.total_loss.is_finite() || !grads.all_finite() {
            self.restore(saved);
            return Err(Error::Divergence {
                step: self.state.step,
                message: format!(
                    "loss {} (stages {:?}), gradient finite: {}, parameter norm {:.4e}",
                    row.total_loss,
                    row.stage_losses,
                    grads.all_finite(),
                    self.state.params.l2_norm()
                ),
            });
        }
        self.state
            .optimizer
            .step(&mut self.state.params, &grads, self.config.learning_rate);
        self.state.step += 1;
        self.state.history.push(row);
        Ok(self.state.history.last().expect("just pushed"))
    }

    fn restore(&mut self, saved: (usize, usize, Vec<usize>, ChaCha8Rng)) {
        (self.state.epoch, self.state.cursor, self.state.order, self.state.rng) = saved;
    }

    /// Steps until the configured budget is spent, calling `on_step` after each.
    pub fn run(&mut self, mut on_step: impl FnMut(&TrainState) -> Result<()>) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
            on_step(&self.state)?;
        }
        Ok(())
    }
}

/// Trains from scratch and returns the final state.
pub fn train(examples: &[HandExample], model: &ModelConfig, config: &TrainConfig) -> Result<TrainState> {
    let mut trainer = Trainer::new(examples, model.clone(), config.clone())?;
    trainer.run(|_| Ok(()))?;
    Ok(trainer.into_state())
}
