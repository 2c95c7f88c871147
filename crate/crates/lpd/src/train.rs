//! Adam training on (event list, truth) pairs with batch size 1.

use listrecon::{EventList, Image2D, Projector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Mode;
use crate::error::{Error, Result};
use crate::network::{lmpd_backward, lmpd_forward, mse_loss, update_running_stats, NetOperator};
use crate::params::NetworkParams;

/// One training pair with its operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub events: EventList,
    pub truth: Image2D,
    op: NetOperator,
}

impl Sample {
    pub fn new(projector: &Projector, events: EventList, truth: Image2D) -> Result<Self> {
        if !truth.same_shape(&Image2D::zeros(projector.grid())) {
            return Err(Error::Dimension(
                "truth image does not match the projector grid".into(),
            ));
        }
        let op = NetOperator::new(projector, &events)?;
        Ok(Self { events, truth, op })
    }

    pub fn operator(&self) -> &NetOperator {
        &self.op
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub bn_momentum: f64,
    /// Seeds the per-epoch sample order.
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, learning_rate: f64, seed: u64) -> Self {
        Self {
            epochs,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            bn_momentum: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && (0.0..=1.0).contains(&self.bn_momentum);
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "invalid training settings {self:?}"
            )));
        }
        Ok(())
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: NetworkParams,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub adam_step: u64,
    pub epochs_done: usize,
    pub best: NetworkParams,
    pub best_epoch: usize,
    pub best_val: f64,
    /// Mean training loss per completed epoch.
    pub train_curve: Vec<f64>,
    /// Validation loss before training and after each epoch.
    pub val_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss.
    pub best: NetworkParams,
    pub best_epoch: usize,
    pub best_val: f64,
    pub state: TrainState,
}

impl TrainOutcome {
    pub fn initial_val(&self) -> f64 {
        self.state.val_curve[0]
    }
}

/// Mean eval-mode MSE over `samples`.
pub fn evaluate(params: &NetworkParams, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(listrecon::Error::EmptyData("no validation samples".into()).into());
    }
    let mut total = 0.0;
    for s in samples {
        let out = lmpd_forward(params, s.operator(), Mode::Eval, false)?;
        total += mse_loss(&out.output, &s.truth)?.0;
    }
    Ok(total / samples.len() as f64)
}

fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

pub struct Trainer {
    cfg: TrainConfig,
    state: TrainState,
}

impl Trainer {
    /// Starts from `params`, scoring them on the validation set as epoch 0.
    pub fn new(params: NetworkParams, cfg: TrainConfig, val: &[Sample]) -> Result<Self> {
        cfg.validate()?;
        let initial = evaluate(&params, val)?;
        let n = params.values.len();
        let state = TrainState {
            best: params.clone(),
            params,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            adam_step: 0,
            epochs_done: 0,
            best_epoch: 0,
            best_val: initial,
            train_curve: Vec::new(),
            val_curve: vec![initial],
        };
        Ok(Self { cfg, state })
    }

    pub fn resume(state: TrainState, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let n = state.params.values.len();
        if state.adam_m.len() != n
            || state.adam_v.len() != n
            || state.val_curve.len() != state.epochs_done + 1
        {
            return Err(Error::State("inconsistent training state".into()));
        }
        Ok(Self { cfg, state })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    fn adam_update(&mut self, grad: &[f64]) {
        let c = &self.cfg;
        let s = &mut self.state;
        s.adam_step += 1;
        let t = s.adam_step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (((p, m), v), &g) in s
            .params
            .values
            .iter_mut()
            .zip(&mut s.adam_m)
            .zip(&mut s.adam_v)
            .zip(grad)
        {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            *p -= c.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
        }
    }

    fn diverged(&self) -> Error {
        Error::Diverged {
            epoch: self.state.epochs_done + 1,
            last_good: Box::new(self.state.best.clone()),
        }
    }

    /// One pass over `train` in a seeded order, then validation.
    pub fn run_epoch(&mut self, train: &[Sample], val: &[Sample]) -> Result<()> {
        if train.is_empty() {
            return Err(listrecon::Error::EmptyData("no training samples".into()).into());
        }
        let epoch = self.state.epochs_done;
        let mut total = 0.0;
        for i in epoch_order(self.cfg.seed, epoch, train.len()) {
            let sample = &train[i];
            let op = sample.operator();
            let fwd = lmpd_forward(&self.state.params, op, Mode::Train, true)?;
            let (loss, dloss) = mse_loss(&fwd.output, &sample.truth)?;
            if !loss.is_finite() {
                return Err(self.diverged());
            }
            let grad = lmpd_backward(&self.state.params, op, &fwd, &dloss)?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(self.diverged());
            }
            let trace = fwd.trace.as_ref().expect("recorded");
            update_running_stats(&mut self.state.params, trace, self.cfg.bn_momentum);
            self.adam_update(&grad);
            total += loss;
        }
        let val_loss = evaluate(&self.state.params, val)?;
        if !val_loss.is_finite() {
            return Err(self.diverged());
        }
        let s = &mut self.state;
        s.epochs_done += 1;
        s.train_curve.push(total / train.len() as f64);
        s.val_curve.push(val_loss);
        if val_loss < s.best_val {
            s.best_val = val_loss;
            s.best_epoch = s.epochs_done;
            s.best = s.params.clone();
        }
        log::info!(
            "epoch {}: train {:.6e} val {:.6e}",
            s.epochs_done,
            total / train.len() as f64,
            val_loss
        );
        Ok(())
    }

    /// Trains until the configured epoch count.
    pub fn train(mut self, train: &[Sample], val: &[Sample]) -> Result<TrainOutcome> {
        while self.state.epochs_done < self.cfg.epochs {
            self.run_epoch(train, val)?;
        }
        Ok(TrainOutcome {
            best: self.state.best.clone(),
            best_epoch: self.state.best_epoch,
            best_val: self.state.best_val,
            state: self.state,
        })
    }
}

/// Adam on MSE with batch size 1; returns the best-validation checkpoint.
pub fn train_toy(
    params: NetworkParams,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    Trainer::new(params, *cfg, val)?.train(train, val)
}

/// CSV with one row per epoch; epoch 0 holds the untrained validation loss.
pub fn loss_curve_csv(state: &TrainState) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for (e, v) in state.val_curve.iter().enumerate() {
        let train = if e == 0 {
            String::new()
        } else {
            format!("{:e}", state.train_curve[e - 1])
        };
        out.push_str(&format!("{e},{train},{v:e}\n"));
    }
    out
}
