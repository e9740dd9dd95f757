use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    InverseSqrt,
}

/// Learning-rate schedule: `base` or `base / sqrt(max(warmup, step))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub base: f64,
    #[serde(default = "default_warmup")]
    pub warmup: u64,
}

fn default_warmup() -> u64 {
    10_000
}

impl Schedule {
    pub fn constant(base: f64) -> Self {
        Self { kind: ScheduleKind::Constant, base, warmup: 1 }
    }

    pub fn inverse_sqrt(base: f64, warmup: u64) -> Self {
        Self { kind: ScheduleKind::InverseSqrt, base, warmup }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base > 0.0 && self.base.is_finite()) {
            return Err(Error::Config(format!("learning rate base must be positive, got {}", self.base)));
        }
        if self.kind == ScheduleKind::InverseSqrt && self.warmup == 0 {
            return Err(Error::Config("inverse-sqrt schedule needs warmup >= 1".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.base,
            ScheduleKind::InverseSqrt => self.base / (self.warmup.max(step) as f64).sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_sqrt_plateau_and_decay() {
        let s = Schedule::inverse_sqrt(2.0, 10_000);
        for step in [0, 1, 5000, 10_000] {
            assert_eq!(s.lr_at(step), 2.0 / 100.0);
        }
        assert_eq!(s.lr_at(40_000), 2.0 / 200.0);
        assert!(s.lr_at(20_000) < s.lr_at(10_000));
    }

    #[test]
    fn constant() {
        let s = Schedule::constant(5e-4);
        assert!([0, 1, 10, 1_000_000].iter().all(|&t| s.lr_at(t) == 5e-4));
    }

    #[test]
    fn validation() {
        assert!(Schedule::constant(0.0).validate().is_err());
        assert!(Schedule::inverse_sqrt(1.0, 0).validate().is_err());
        assert!(Schedule::inverse_sqrt(1.0, 1).validate().is_ok());
    }
}
