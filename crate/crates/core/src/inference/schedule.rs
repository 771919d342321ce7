/// Reduce-on-plateau state: after `patience` consecutive epochs without a
/// new best loss, learning rates are multiplied by `factor`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    pub patience: usize,
    pub factor: f64,
    best: f64,
    bad_epochs: usize,
}

impl Plateau {
    pub fn new(patience: usize, factor: f64) -> Self {
        Plateau {
            patience,
            factor,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records one epoch loss; returns the multiplier to apply to every
    /// learning rate (1 or `factor`).
    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best {
            self.best = loss;
            self.bad_epochs = 0;
            return 1.0;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            return self.factor;
        }
        1.0
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Replays the plateau rule over a loss history, starting from `lrs`.
///
/// The first epoch always sets the best loss, so a trigger needs `patience`
/// epochs after it that fail to improve on the best.
pub fn lr_schedule<const N: usize>(history: &[f64], lrs: [f64; N], patience: usize, factor: f64) -> [f64; N] {
    let mut plateau = Plateau::new(patience, factor);
    let mut out = lrs;
    for &loss in history {
        let m = plateau.observe(loss);
        out.iter_mut().for_each(|lr| *lr *= m);
    }
    out
}
