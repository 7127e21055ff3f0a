//! Linear state-space models, noise descriptions and trajectory simulation.

mod model;
mod noise;
mod rng;
mod simulate;

pub use model::LinearModel;
pub use noise::{fig2_case, sample_noise, NoiseDraw, NoiseSampler, NoiseSpec, Schedule};
pub use rng::{sample_student_compound, substream, MEASUREMENT_STREAM, PROCESS_STREAM};
pub use simulate::{simulate, Trajectory};
