//! The model shared by the certification routines and the Monte-Carlo harness:
//! basis, forcing, the Brownian limit noise and the jump kernels on an ε-grid.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::integrators::{BrownianNoise, DriftForce};
use crate::levy::JumpKernel;
use crate::spectral::Basis;

#[derive(Clone, Debug)]
pub struct Model {
    pub basis: Arc<Basis>,
    pub drift: DriftForce,
    pub brownian: BrownianNoise,
    /// One kernel per ε, in the order of the configured grid.
    pub kernels: Vec<JumpKernel>,
    pub kappa: f64,
    pub nonlinear: bool,
}

impl Model {
    pub fn new(
        basis: Arc<Basis>,
        drift: DriftForce,
        brownian: BrownianNoise,
        kernels: Vec<JumpKernel>,
    ) -> Result<Self> {
        drift.check_dim(basis.dim())?;
        for s in &brownian.sigmas {
            s.check_dim(basis.dim())?;
        }
        for k in &kernels {
            if k.channels().len() != brownian.channels() {
                return Err(Error::Config(format!(
                    "jump kernel at epsilon {} has {} channels, Brownian noise has {}",
                    k.epsilon(),
                    k.channels().len(),
                    brownian.channels()
                )));
            }
            for (ch, s) in k.channels().iter().zip(&brownian.sigmas) {
                if ch.sigma() != s {
                    return Err(Error::Config(format!(
                        "jump base sigma '{}' differs from Brownian sigma '{}'",
                        ch.sigma().name(),
                        s.name()
                    )));
                }
            }
        }
        Ok(Self {
            basis,
            drift,
            brownian,
            kernels,
            kappa: 1.0,
            nonlinear: true,
        })
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.kernels.iter().map(|k| k.epsilon()).collect()
    }

    /// The uniform threshold `ε₀`: the largest ε in the grid.
    pub fn epsilon0(&self) -> f64 {
        self.epsilons().into_iter().fold(f64::NAN, f64::max)
    }
}
