use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// What a policy or critic sees at a step.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Discrete(usize),
    Vector(Vec<f64>),
}

impl Observation {
    pub fn discrete(&self) -> Result<usize> {
        match self {
            Observation::Discrete(s) => Ok(*s),
            Observation::Vector(_) => Err(Error::ObservationMismatch("expected a discrete state".into())),
        }
    }

    /// Network input: one-hot for discrete states, the raw vector otherwise.
    pub fn features(&self, dim: usize) -> Result<Vec<f64>> {
        match self {
            Observation::Discrete(s) if *s < dim => {
                let mut v = vec![0.0; dim];
                v[*s] = 1.0;
                Ok(v)
            }
            Observation::Vector(v) if v.len() == dim => Ok(v.clone()),
            _ => Err(Error::ObservationMismatch(format!("observation {self:?} does not fit {dim} features"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn discrete(&self) -> Result<usize> {
        match self {
            Action::Discrete(a) => Ok(*a),
            Action::Continuous(_) => Err(Error::InvalidAction("expected a discrete action".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionDistribution {
    Categorical(Vec<f64>),
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}
