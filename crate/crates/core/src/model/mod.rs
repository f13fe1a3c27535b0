//! The negative binomial delay model and its approximate posterior.

pub mod arrow;
pub mod fit;
pub mod nb;
pub mod posterior;
pub mod spec;

pub use fit::{fit, latent_mode, FitConfig, FitDiagnostics, GridPoint, LatentMode, NewtonConfig, PosteriorSamples};
pub use nb::{nb_log_pmf, sample_nb};
pub use posterior::{
    linear_predictor, log_posterior, log_posterior_gradient, Hyperparameters, LatentState, Layout, ModelData, Priors,
};
pub use spec::{ModelSpec, ModelVariant};
