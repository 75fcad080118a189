use serde::{Deserialize, Serialize};

/// Halves the learning rate after `patience` consecutive epochs whose validation loss is not
/// lower than the epoch before. Progress is judged against the previous epoch rather than the
/// best so far, so a single spike costs one halving instead of one per epoch until recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    lr: f64,
    floor: f64,
    patience: usize,
    best: Option<f64>,
    last: Option<f64>,
    bad_epochs: usize,
}

impl PlateauSchedule {
    pub fn new(lr: f64, patience: usize, floor: f64) -> Self {
        Self {
            lr,
            floor,
            patience: patience.max(1),
            best: None,
            last: None,
            bad_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Records one epoch's validation loss. Returns true when it is a new best.
    /// A halving that would drop below the floor is skipped.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        let improved = self.last.is_none_or(|l| val_loss < l);
        self.last = Some(val_loss);
        if improved {
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.bad_epochs = 0;
                if self.lr * 0.5 >= self.floor {
                    self.lr *= 0.5;
                }
            }
        }
        let is_best = self.best.is_none_or(|b| val_loss < b);
        if is_best {
            self.best = Some(val_loss);
        }
        is_best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn halves_once_after_the_third_epoch() {
        let mut s = PlateauSchedule::new(1e-3, 1, 1e-6);
        let mut lrs = Vec::new();
        for v in [5.0, 4.0, 4.5] {
            s.observe(v);
            lrs.push(s.lr());
        }
        assert_eq!(lrs, vec![1e-3, 1e-3, 5e-4]);
    }

    #[test]
    fn recovery_after_a_spike_keeps_the_rate() {
        let mut s = PlateauSchedule::new(1.0, 1, 1e-6);
        let mut lrs = Vec::new();
        let mut best = Vec::new();
        for v in [3.0, 2.0, 2.5, 2.2, 2.1, 1.9, 1.95] {
            best.push(s.observe(v));
            lrs.push(s.lr());
        }
        assert_eq!(lrs, vec![1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.25]);
        assert_eq!(best, vec![true, true, false, false, false, true, false]);
        assert_eq!(s.best(), Some(1.9));
    }

    #[test]
    fn patience_counts_consecutive_stalls() {
        let mut s = PlateauSchedule::new(1.0, 2, 1e-6);
        for v in [1.0, 1.1, 1.0, 1.2, 1.3] {
            s.observe(v);
        }
        assert_eq!(s.lr(), 0.5);
    }

    #[test]
    fn respects_the_floor() {
        let mut s = PlateauSchedule::new(1.5e-6, 1, 1e-6);
        s.observe(1.0);
        s.observe(2.0);
        assert_eq!(s.lr(), 1.5e-6);
    }

    proptest! {
        #[test]
        fn lr_sequence_only_halves(losses in prop::collection::vec(0.0f64..10.0, 1..40)) {
            let mut s = PlateauSchedule::new(1e-3, 1, 1e-6);
            let mut prev = s.lr();
            for v in losses {
                s.observe(v);
                let lr = s.lr();
                prop_assert!(lr == prev || lr == prev * 0.5);
                prev = lr;
            }
        }
    }
}
