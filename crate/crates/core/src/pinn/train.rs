use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NondimParams, OperatingCondition, SECTORS};
use crate::nn::{init_weights, AdamConfig, AdamState, MlpSpec};
use crate::pinn::{CollocationCounts, CollocationSet, LossBreakdown, LossWeights, PinnProblem, TaskPinn};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub collocation: CollocationCounts,
    pub loss_weights: LossWeights,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub max_steps: usize,
    pub target_loss: f64,
    pub plateau_window: usize,
    pub plateau_delta: f64,
    /// Trajectory sampling interval.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            collocation: CollocationCounts::default(),
            loss_weights: LossWeights::default(),
            lr: 1e-3,
            lr_decay: 0.5,
            decay_every: 2000,
            max_steps: 10_000,
            target_loss: 1e-6,
            plateau_window: 500,
            plateau_delta: 1e-8,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss_weights.validate()?;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.lr) || !pos(self.lr_decay) || self.lr_decay > 1.0 {
            return Err(Error::validation("lr must be positive and lr_decay in (0, 1]"));
        }
        if self.decay_every == 0 || self.plateau_window == 0 || self.log_every == 0 {
            return Err(Error::validation("decay_every, plateau_window and log_every must be positive"));
        }
        if !(self.target_loss >= 0.0) || !(self.plateau_delta >= 0.0) {
            return Err(Error::validation("target_loss and plateau_delta must be nonnegative"));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        self.lr * self.lr_decay.powi((step / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    TargetReached,
    Plateau,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// `(step, total loss)` samples; step 0 is the initial loss.
    pub trajectory: Vec<(usize, f64)>,
    pub steps: usize,
    pub stop_reason: StopReason,
    pub final_losses: LossBreakdown<f64>,
    pub seconds: f64,
    pub warm_started: bool,
}

/// A failed run, carrying the best weights seen before the failure.
#[derive(Debug)]
pub struct TrainFailure<T> {
    pub error: Error,
    pub step: usize,
    pub last_good: Option<Box<TaskPinn<T>>>,
}

impl<T> std::fmt::Display for TrainFailure<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "training failed at step {}: {}", self.step, self.error)
    }
}

impl<T: std::fmt::Debug> std::error::Error for TrainFailure<T> {}

impl<T> From<TrainFailure<T>> for Error {
    fn from(f: TrainFailure<T>) -> Self {
        match f.error {
            Error::Validation(_) => f.error,
            e => Error::Training(format!("step {}: {e}", f.step)),
        }
    }
}

fn fail<T>(error: Error) -> TrainFailure<T> {
    TrainFailure {
        error,
        step: 0,
        last_good: None,
    }
}

/// Adam on the joint loss of all three sector networks.
///
/// Returns the weights with the lowest total loss seen. Identical inputs give
/// identical results.
pub fn train_base_pinn<T: Scalar>(
    p: &NondimParams<T>,
    condition: OperatingCondition,
    cfg: &TrainConfig,
    seed: u64,
    warm_start: Option<&TaskPinn<T>>,
) -> std::result::Result<(TaskPinn<T>, TrainReport), TrainFailure<T>> {
    let started = Instant::now();
    cfg.validate().map_err(fail)?;
    let spec = MlpSpec::base_pinn();
    let mut w: Vec<T> = match warm_start {
        Some(t) => {
            t.validate().map_err(fail)?;
            t.flat()
        }
        None => (0..SECTORS)
            .flat_map(|j| init_weights::<T>(&spec, seed.wrapping_mul(3).wrapping_add(j as u64)).0)
            .collect(),
    };
    let colloc = CollocationSet::generate(&cfg.collocation, seed).map_err(fail)?;
    let problem = PinnProblem::new(&colloc, p, &cfg.loss_weights).map_err(fail)?;
    let mut adam = AdamState::new(w.len(), AdamConfig::with_lr(cfg.lr));
    let mut grad = vec![T::zero(); w.len()];

    let snapshot = |w: &[T], l: LossBreakdown<T>| {
        let mut t = TaskPinn::from_flat(condition, w, seed).expect("length checked");
        t.final_losses = l;
        t
    };
    let mut best: Option<(LossBreakdown<T>, Vec<T>)> = None;
    // Best total loss after each step, for the plateau test.
    let mut best_hist: Vec<f64> = Vec::with_capacity(cfg.max_steps + 1);
    let mut trajectory = Vec::new();
    let mut stop = StopReason::MaxSteps;
    let mut step = 0;
    loop {
        grad.iter_mut().for_each(|g| *g = T::zero());
        let loss = match problem.evaluate(&w, Some(&mut grad)) {
            Ok(l) if grad.iter().all(|g| g.is_finite()) => l,
            Ok(_) | Err(_) => {
                return Err(TrainFailure {
                    error: Error::Numerical("loss or gradient became non-finite".into()),
                    step,
                    last_good: best.map(|(l, bw)| Box::new(snapshot(&bw, l))),
                })
            }
        };
        let total = loss.total.f64();
        if best.as_ref().is_none_or(|(b, _)| loss.total < b.total) {
            best = Some((loss, w.clone()));
        }
        let best_total = best.as_ref().expect("set above").0.total.f64();
        best_hist.push(best_total);
        if step % cfg.log_every == 0 {
            trajectory.push((step, total));
        }
        if best_total < cfg.target_loss {
            stop = StopReason::TargetReached;
            break;
        }
        if step >= cfg.plateau_window && best_hist[step - cfg.plateau_window] - best_total < cfg.plateau_delta {
            stop = StopReason::Plateau;
            break;
        }
        if step >= cfg.max_steps {
            break;
        }
        adam.set_lr(cfg.lr_at(step));
        adam.step(&grad, &mut w).map_err(fail)?;
        step += 1;
    }
    if trajectory.last().map(|t| t.0) != Some(step) {
        trajectory.push((step, best_hist[step]));
    }
    let (loss, bw) = best.expect("at least one evaluation");
    let out = snapshot(&bw, loss);
    let report = TrainReport {
        trajectory,
        steps: step,
        stop_reason: stop,
        final_losses: loss.cast(),
        seconds: started.elapsed().as_secs_f64(),
        warm_started: warm_start.is_some(),
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            collocation: CollocationCounts {
                interior: 64,
                inlet: 16,
                interface: 16,
                neumann: 8,
            },
            max_steps: 300,
            ..TrainConfig::default()
        }
    }

    fn params(theta: [f64; 3]) -> NondimParams<f64> {
        NondimParams::new([3.0, 2.5, 2.5], [50.0, 50.0, 50.0], theta).unwrap()
    }

    #[test]
    fn lr_schedule_halves() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(0), 1e-3);
        assert_eq!(c.lr_at(1999), 1e-3);
        assert_eq!(c.lr_at(2000), 5e-4);
        assert_eq!(c.lr_at(4100), 2.5e-4);
    }

    #[test]
    fn deterministic_and_decreasing() {
        let c = OperatingCondition::new(300.0, 45.0, 45.0, 700.0);
        let p = params([0.6, 0.09, 0.09]);
        let (a, ra) = train_base_pinn(&p, c, &small_cfg(), 7, None).unwrap();
        let (b, _) = train_base_pinn(&p, c, &small_cfg(), 7, None).unwrap();
        assert_eq!(a, b);
        assert!(ra.final_losses.total < ra.trajectory[0].1 * 0.5, "{:?}", ra.trajectory);
        assert_eq!(a.seed, 7);
        let (d, _) = train_base_pinn(&p, c, &small_cfg(), 8, None).unwrap();
        assert_ne!(a.weights, d.weights);
    }

    #[test]
    fn nan_warm_start_rejected() {
        let c = OperatingCondition::new(300.0, 45.0, 45.0, 700.0);
        let p = params([0.6, 0.09, 0.09]);
        let (mut t, _) = train_base_pinn(&p, c, &TrainConfig { max_steps: 1, ..small_cfg() }, 1, None).unwrap();
        t.weights[1].0[0] = f64::NAN;
        let err = train_base_pinn(&p, c, &small_cfg(), 1, Some(&t)).unwrap_err();
        assert!(matches!(Error::from(err), Error::Training(_) | Error::Numerical(_)));
    }

    #[test]
    fn exploding_learning_rate_reports_last_good_state() {
        let c = OperatingCondition::new(300.0, 45.0, 45.0, 700.0);
        let p = params([0.6, 0.09, 0.09]);
        let cfg = TrainConfig {
            lr: 1e300,
            ..small_cfg()
        };
        match train_base_pinn(&p, c, &cfg, 3, None) {
            Err(f) => {
                assert!(f.last_good.is_some());
                assert!(matches!(Error::from(f), Error::Training(_)));
            }
            Ok((t, _)) => assert!(t.validate().is_ok()),
        }
    }
}
