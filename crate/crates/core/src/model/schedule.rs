use crate::{Error, Result};

/// Cosine annealing from `lr0` at step 0 to `lr_min` at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub lr0: f64,
    pub lr_min: f64,
    pub total_steps: usize,
}

impl Schedule {
    pub fn cosine_anneal(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::StepOutOfRange {
                step,
                total: self.total_steps,
            });
        }
        if self.total_steps == 0 {
            return Ok(self.lr0);
        }
        let phase = core::f64::consts::PI * step as f64 / self.total_steps as f64;
        let lr = self.lr_min + 0.5 * (self.lr0 - self.lr_min) * (1.0 + libm::cos(phase));
        Ok(lr.clamp(self.lr_min, self.lr0))
    }
}
