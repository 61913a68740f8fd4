use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub num_heads: usize,
    pub num_blocks: usize,
    pub max_rooms: usize,
    pub max_corners_per_room: usize,
    pub coord_bins: usize,
    /// Steps at or below this use the discrete head (loss and sampler snapping).
    pub discrete_threshold: usize,
    pub ff_width: usize,
    /// Self-attention rounds over boundary corners before cross-attention.
    pub boundary_rounds: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            num_heads: 4,
            num_blocks: 2,
            max_rooms: 8,
            max_corners_per_room: 12,
            coord_bins: 256,
            discrete_threshold: 32,
            ff_width: 256,
            boundary_rounds: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, schedule_steps: Option<usize>) -> Result<()> {
        if self.d_model == 0 || self.num_heads == 0 || self.d_model % self.num_heads != 0 {
            return Err(Error::validation(format!(
                "d_model {} must be a positive multiple of num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.d_model % 2 != 0 {
            return Err(Error::validation("d_model must be even for the timestep embedding"));
        }
        if self.max_rooms == 0 || self.max_corners_per_room < 3 || self.coord_bins < 2 || self.ff_width == 0 {
            return Err(Error::validation("model limits must be positive"));
        }
        if let Some(t) = schedule_steps {
            if self.discrete_threshold >= t {
                return Err(Error::validation(format!(
                    "discrete_threshold {} must be below schedule length {t}",
                    self.discrete_threshold
                )));
            }
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }

    pub fn slots(&self) -> usize {
        self.max_rooms * self.max_corners_per_room
    }

    /// Width of the per-corner input: xy, type one-hot, room one-hot, corner one-hot.
    pub fn corner_features(&self) -> usize {
        2 + crate::geometry::RoomType::COUNT + self.max_rooms + self.max_corners_per_room
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub p_drop_boundary: f64,
    pub discrete_loss_weight: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 16,
            lr_start: 1e-3,
            lr_end: 1e-5,
            p_drop_boundary: 0.1,
            discrete_loss_weight: 0.1,
            seed: 0,
            checkpoint_every: 200,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_drop_boundary) {
            return Err(Error::validation(format!(
                "p_drop_boundary {} outside [0, 1]",
                self.p_drop_boundary
            )));
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end) {
            return Err(Error::validation(format!(
                "need lr_start >= lr_end > 0, got {} and {}",
                self.lr_start, self.lr_end
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be positive"));
        }
        if self.discrete_loss_weight < 0.0 {
            return Err(Error::validation("discrete_loss_weight must be non-negative"));
        }
        Ok(())
    }

    /// Exponential decay from `lr_start` at step 0 to `lr_end` at the final step.
    pub fn learning_rate(&self, step: usize) -> f64 {
        if self.steps <= 1 {
            return self.lr_start;
        }
        let frac = step as f64 / (self.steps - 1) as f64;
        self.lr_start * (self.lr_end / self.lr_start).powf(frac)
    }
}
