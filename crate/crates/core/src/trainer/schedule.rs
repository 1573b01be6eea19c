use serde::{Deserialize, Serialize};

/// Learning-rate decay on a validation plateau plus early stopping.
///
/// An epoch improves when its metric is strictly greater than the best so far.
/// After every `decay_patience` consecutive stagnant epochs the rates are
/// multiplied by `decay_factor`; training stops once `stop_patience` epochs have
/// passed since the best one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub decay_factor: f64,
    pub decay_patience: usize,
    pub stop_patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    stagnant: usize,
    epoch: usize,
    scale: f64,
}

/// What the schedule decided after one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochDecision {
    pub improved: bool,
    /// Rates were multiplied by the decay factor for the next epoch.
    pub decayed: bool,
    pub stop: bool,
    /// Multiplier to apply to the base learning rates from now on.
    pub lr_scale: f64,
}

impl PlateauSchedule {
    pub fn new(decay_factor: f64, decay_patience: usize, stop_patience: usize) -> Self {
        Self { decay_factor, decay_patience, stop_patience, best: None, best_epoch: 0, stagnant: 0, epoch: 0, scale: 1.0 }
    }

    pub fn observe(&mut self, metric: f64) -> EpochDecision {
        self.epoch += 1;
        let improved = self.best.is_none_or(|b| metric > b);
        let mut decayed = false;
        if improved {
            self.best = Some(metric);
            self.best_epoch = self.epoch;
            self.stagnant = 0;
        } else {
            self.stagnant += 1;
            if self.stagnant % self.decay_patience == 0 {
                self.scale *= self.decay_factor;
                decayed = true;
            }
        }
        let stop = self.epoch - self.best_epoch >= self.stop_patience;
        EpochDecision { improved, decayed, stop, lr_scale: self.scale }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// 1-based epoch of the best metric, 0 before any observation.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn lr_scale(&self) -> f64 {
        self.scale
    }
}
