use serde::{Deserialize, Serialize};

/// What the learning rate does once warmup is over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrDecay {
    #[default]
    Constant,
    /// Linear decay to zero at the final step.
    Linear,
}

/// Number of warmup steps: `max(1, round(fraction * total))`.
pub fn warmup_steps(total_steps: usize, warmup_fraction: f64) -> usize {
    ((warmup_fraction * total_steps as f64).round() as usize).max(1)
}

/// Linear warmup to `peak_lr` over the warmup steps, constant afterwards.
pub fn lr_at(step: usize, total_steps: usize, peak_lr: f64, warmup_fraction: f64) -> f64 {
    lr_with_decay(step, total_steps, peak_lr, warmup_fraction, LrDecay::Constant)
}

pub fn lr_with_decay(step: usize, total_steps: usize, peak_lr: f64, warmup_fraction: f64, decay: LrDecay) -> f64 {
    let warmup = warmup_steps(total_steps, warmup_fraction);
    if step < warmup {
        return peak_lr * step as f64 / warmup as f64;
    }
    match decay {
        LrDecay::Constant => peak_lr,
        LrDecay::Linear => {
            let remaining = total_steps.saturating_sub(warmup).max(1) as f64;
            peak_lr * (1.0 - (step - warmup) as f64 / remaining).max(0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_then_constant() {
        assert_eq!(warmup_steps(100, 0.06), 6);
        assert!((lr_at(3, 100, 2e-5, 0.06) - 1e-5).abs() < 1e-20);
        assert_eq!(lr_at(6, 100, 2e-5, 0.06), 2e-5);
        assert_eq!(lr_at(100, 100, 2e-5, 0.06), 2e-5);
        assert_eq!(lr_at(0, 100, 2e-5, 0.06), 0.0);
        // a single-step run still warms up over one step
        assert_eq!(lr_at(0, 1, 1.0, 0.06), 0.0);
        assert_eq!(lr_at(1, 1, 1.0, 0.06), 1.0);
    }

    #[test]
    fn monotone_during_warmup() {
        let total = 1000;
        let w = warmup_steps(total, 0.06);
        let lrs: Vec<f64> = (0..=w).map(|s| lr_at(s, total, 1.0, 0.06)).collect();
        assert!(lrs.windows(2).all(|p| p[0] <= p[1]));
        assert_eq!(*lrs.last().unwrap(), 1.0);
    }

    #[test]
    fn linear_decay_reaches_zero() {
        assert_eq!(lr_with_decay(100, 100, 1.0, 0.1, LrDecay::Linear), 0.0);
        assert_eq!(lr_with_decay(10, 100, 1.0, 0.1, LrDecay::Linear), 1.0);
        assert!((lr_with_decay(55, 100, 1.0, 0.1, LrDecay::Linear) - 0.5).abs() < 1e-12);
    }
}
