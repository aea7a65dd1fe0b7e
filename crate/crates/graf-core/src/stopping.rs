//! Early stopping on a validation score.

/// Tracks the best validation score and stops after `patience` epochs without
/// strict improvement, never before `min_epochs` epochs have run.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_epochs: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_epochs: usize) -> Self {
        EarlyStopping {
            patience,
            min_epochs,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Feed one epoch's score. Returns (is new best, should stop now).
    pub fn observe(&mut self, epoch: usize, score: f64) -> (bool, bool) {
        let improved = score > self.best;
        if improved {
            self.best = score;
            self.best_epoch = epoch;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        let done = epoch + 1 >= self.min_epochs && self.since_best >= self.patience;
        (improved, done)
    }

    pub fn best_score(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn never_stops_before_min_epochs() {
        let mut es = EarlyStopping::new(2, 10);
        for epoch in 0..9 {
            let (_, stop) = es.observe(epoch, 0.5);
            assert!(!stop, "stopped at epoch {epoch}");
        }
        let (_, stop) = es.observe(9, 0.5);
        assert!(stop);
    }

    #[test]
    fn patience_counts_from_last_improvement() {
        let mut es = EarlyStopping::new(3, 0);
        assert_eq!(es.observe(0, 0.1), (true, false));
        assert_eq!(es.observe(1, 0.2), (true, false));
        assert_eq!(es.observe(2, 0.2), (false, false)); // tie is not improvement
        assert_eq!(es.observe(3, 0.15), (false, false));
        let (_, stop) = es.observe(4, 0.19);
        assert!(stop);
        assert_eq!(es.best_epoch(), 1);
        assert_eq!(es.best_score(), 0.2);
    }
}
