//! Optimization: schedules, AdamW, the training loop and the overfit harness.

mod adamw;
mod schedule;
mod trainer;

pub use adamw::{clip_grad_norm, grad_norm, AdamW};
pub use schedule::{Schedule, ScheduleKind};
pub use trainer::{copy_task, loss_csv, overfit_harness, train_loop, train_loop_until, Example, LossRow, OverfitReport, TrainConfig, TrainReport, Trainer};

#[cfg(test)]
mod tests;
