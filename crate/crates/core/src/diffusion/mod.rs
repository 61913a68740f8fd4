//! Noise schedule, forward corruption, guidance blending and ancestral sampling over
//! corner-coordinate tensors.

mod layout;
mod process;
mod sampler;
mod schedule;

pub use layout::LayoutTensor;
pub use process::{cfg_blend, forward_diffuse, predict_x0, predict_x0_unclamped};
pub use sampler::{sample, sample_one, SampleRequest, SamplerOptions};
pub use schedule::{cosine_schedule, NoiseSchedule, ScheduleConfig, MAX_BETA};

