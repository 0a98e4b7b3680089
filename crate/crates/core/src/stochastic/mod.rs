//! Randomness: keyed RNG substreams, the Karhunen–Loève field, stochastic
//! objectives with their mini-batch estimators, and the random stopping
//! index of the inner loop.

mod batch;
mod kl;
mod stream;

pub use batch::{batch_gradient, BatchEstimate, ObjectiveSample, StochasticObjective};
pub use kl::KlField;
pub use stream::{draw_stopping, RngStream, SampleRng, StreamPurpose};
