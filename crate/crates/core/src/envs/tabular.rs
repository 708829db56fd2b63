use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Action, ActionSpace, EnvSpec, Environment, Observation, ObservationSpace, Transition};
use crate::cmdp::{EpisodicCmdp, Signal};
use crate::rng::{sample_categorical, SeededRng};
use crate::{Error, Result};

/// Simulator for an explicit tabular CMDP.
#[derive(Debug, Clone)]
pub struct CmdpEnv {
    spec: EnvSpec,
    cmdp: EpisodicCmdp,
}

impl CmdpEnv {
    pub fn new(name: impl Into<String>, cmdp: EpisodicCmdp) -> Self {
        let spec = EnvSpec {
            name: name.into(),
            horizon: cmdp.horizon(),
            observation: ObservationSpace::Discrete { n: cmdp.num_states() },
            action: ActionSpace::Discrete { n: cmdp.num_actions() },
            thresholds: cmdp.thresholds().to_vec(),
        };
        Self { spec, cmdp }
    }

    pub fn cmdp(&self) -> &EpisodicCmdp {
        &self.cmdp
    }
}

impl Environment for CmdpEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut SeededRng) -> Observation {
        Observation::Discrete(sample_categorical(self.cmdp.initial_dist(), rng))
    }

    fn step(&self, state: &Observation, action: &Action, rng: &mut SeededRng) -> Result<Transition> {
        let s = state.discrete()?;
        let a = action.discrete()?;
        if s >= self.cmdp.num_states() || a >= self.cmdp.num_actions() {
            return Err(Error::InvalidAction(format!("state {s} / action {a} out of range")));
        }
        let s2 = sample_categorical(self.cmdp.next_dist(s, a), rng);
        let reward = self.cmdp.signal_value(Signal::Reward, s, a, s2)?;
        let costs = (0..self.cmdp.num_constraints())
            .map(|i| self.cmdp.signal_value(Signal::Cost(i), s, a, s2))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Transition { next_state: Observation::Discrete(s2), reward, costs })
    }

    fn to_cmdp(&self) -> Option<EpisodicCmdp> {
        Some(self.cmdp.clone())
    }
}
