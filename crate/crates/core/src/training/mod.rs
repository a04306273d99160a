//! Loss, optimizer, synthetic data and the training loop.

mod adam;
mod loss;
mod synth;
mod trainer;

pub use adam::{Adam, AdamConfig};
pub use loss::{nll_loss, nll_loss_on_tape, nll_terms};
pub use synth::{
    corner_displacement, generate_depth_pair, generate_synthetic_pair, sample_homography, SynthConfig,
    SyntheticPair,
};
pub use trainer::*;
