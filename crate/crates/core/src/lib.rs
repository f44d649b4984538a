//! Zero-carbon multi-energy system dispatch: device and carbon-capture
//! models, a Markov decision process over hourly dispatch, off-policy agents,
//! a particle-swarm baseline and a hyperparameter tuner.

pub mod data;
pub mod devices;
pub mod carbon;
pub mod economics;
pub mod env;
pub mod baseline;
pub mod neural;
pub mod agents;
pub mod tuner;
