/// What the trainer should do after an epoch's monitor reading.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScheduleAction {
    Continue,
    Decay(f64),
    Stop,
}

/// Reduce-on-plateau: after `patience` epochs without a strict improvement
/// in the monitored accuracy the rate is multiplied by `decay`. Once
/// `max_decays` reductions have happened, the next plateau stops training.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauSchedule {
    pub lr: f64,
    decay: f64,
    patience: usize,
    max_decays: usize,
    best: f64,
    stale: usize,
    decays: usize,
}

impl PlateauSchedule {
    pub fn new(lr0: f64, decay: f64, patience: usize, max_decays: usize) -> Self {
        PlateauSchedule {
            lr: lr0,
            decay,
            patience,
            max_decays,
            best: f64::NEG_INFINITY,
            stale: 0,
            decays: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn observe(&mut self, metric: f64) -> ScheduleAction {
        if metric > self.best {
            self.best = metric;
            self.stale = 0;
            return ScheduleAction::Continue;
        }
        self.stale += 1;
        if self.stale < self.patience {
            return ScheduleAction::Continue;
        }
        self.stale = 0;
        if self.decays >= self.max_decays {
            return ScheduleAction::Stop;
        }
        self.decays += 1;
        self.lr *= self.decay;
        ScheduleAction::Decay(self.lr)
    }
}
