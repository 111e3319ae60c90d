//! Experiment pipelines. Each returns an in-memory [`RunOutput`]; writing
//! artifacts is left to the caller.

pub mod common;
pub mod gsa_generic;
pub mod poly;
pub mod transport;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::Result;
use crate::output::RunOutput;

/// Runs the experiment described by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let seed = cfg.seed;
    match &cfg.experiment {
        Experiment::PolyInadequate(c) => poly::poly_inadequate(c, seed),
        Experiment::PolyHierarchical(c) => poly::poly_hierarchical(c, seed),
        Experiment::TransportForward(c) => transport::transport_forward(c, seed),
        Experiment::TransportCalibrate(c) => transport::transport_calibrate(c, seed),
        Experiment::TransportRobustness(c) => transport::transport_robustness(c, seed),
        Experiment::GsaGeneric(c) => gsa_generic::gsa_generic(c, seed),
        Experiment::Dci(c) => transport::dci(c, seed),
    }
}
