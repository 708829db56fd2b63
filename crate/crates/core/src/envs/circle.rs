use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{Action, ActionSpace, EnvSpec, Environment, Observation, ObservationSpace, Transition};
use crate::math;
use crate::rng::SeededRng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PointCircleParams {
    pub horizon: usize,
    pub radius: f64,
    /// Cost boundary `x_lim` as a fraction of the radius.
    pub x_limit_fraction: f64,
    pub threshold: f64,
    pub dt: f64,
    /// Half-width of the uniform box the start position is drawn from.
    pub start_noise: f64,
}

impl Default for PointCircleParams {
    fn default() -> Self {
        Self { horizon: 50, radius: 1.0, x_limit_fraction: 0.5, threshold: 10.0, dt: 0.1, start_noise: 0.1 }
    }
}

/// `v·(−y, x) / (1 + |‖(x, y)‖ − radius|)`.
pub fn circle_reward(pos: [f64; 2], vel: [f64; 2], radius: f64) -> f64 {
    let along = -vel[0] * pos[1] + vel[1] * pos[0];
    let off = math::abs(math::sqrt(pos[0] * pos[0] + pos[1] * pos[1]) - radius);
    along / (1.0 + off)
}

/// Point mass with double-integrator dynamics; state `(x, y, vx, vy)`,
/// acceleration actions clamped to `[−1, 1]²`.
#[derive(Debug, Clone)]
pub struct PointCircle {
    spec: EnvSpec,
    params: PointCircleParams,
}

const POSITION_BOUND: f64 = 10.0;
const VELOCITY_BOUND: f64 = 10.0;

impl PointCircle {
    pub fn new(params: PointCircleParams) -> Result<Self> {
        if params.horizon == 0 || !(params.radius > 0.0) || !(params.dt > 0.0) || !(params.start_noise >= 0.0) {
            return Err(Error::InvalidConfig("point circle needs horizon >= 1, radius > 0, dt > 0".into()));
        }
        let spec = EnvSpec {
            name: "point_circle".into(),
            horizon: params.horizon,
            observation: ObservationSpace::Box {
                low: vec![-POSITION_BOUND, -POSITION_BOUND, -VELOCITY_BOUND, -VELOCITY_BOUND],
                high: vec![POSITION_BOUND, POSITION_BOUND, VELOCITY_BOUND, VELOCITY_BOUND],
            },
            action: ActionSpace::Box { low: vec![-1.0, -1.0], high: vec![1.0, 1.0] },
            thresholds: vec![params.threshold],
        };
        Ok(Self { spec, params })
    }

    pub fn x_limit(&self) -> f64 {
        self.params.x_limit_fraction * self.params.radius
    }
}

impl Environment for PointCircle {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut SeededRng) -> Observation {
        let w = self.params.start_noise;
        let mut draw = || if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 };
        let x = draw();
        let y = draw();
        Observation::Vector(vec![x, y, 0.0, 0.0])
    }

    fn step(&self, state: &Observation, action: &Action, _rng: &mut SeededRng) -> Result<Transition> {
        let s = match state {
            Observation::Vector(v) if v.len() == 4 => v,
            _ => return Err(Error::ObservationMismatch(format!("point circle state {state:?}"))),
        };
        let a: Vec<f64> = match action {
            Action::Continuous(a) if a.len() == 2 => a.iter().map(|x| x.clamp(-1.0, 1.0)).collect(),
            _ => return Err(Error::InvalidAction(format!("point circle expects a 2-d action, got {action:?}"))),
        };
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("point circle action".into()));
        }
        let dt = self.params.dt;
        let vx = (s[2] + a[0] * dt).clamp(-VELOCITY_BOUND, VELOCITY_BOUND);
        let vy = (s[3] + a[1] * dt).clamp(-VELOCITY_BOUND, VELOCITY_BOUND);
        let x = (s[0] + vx * dt).clamp(-POSITION_BOUND, POSITION_BOUND);
        let y = (s[1] + vy * dt).clamp(-POSITION_BOUND, POSITION_BOUND);
        let reward = circle_reward([x, y], [vx, vy], self.params.radius);
        let cost = (x > self.x_limit()) as u8 as f64;
        Ok(Transition { next_state: Observation::Vector(vec![x, y, vx, vy]), reward, costs: vec![cost] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn tangential_motion_on_circle_earns_speed() {
        let speed = 0.7;
        let r = circle_reward([0.0, 1.0], [-speed, 0.0], 1.0);
        assert!((r - speed).abs() < 1e-15);
    }

    #[test]
    fn cost_only_beyond_x_limit() {
        let env = PointCircle::new(PointCircleParams::default()).unwrap();
        let mut rng = rng_from_seed(0);
        let inside = env.step(&Observation::Vector(vec![0.4, 0.0, 0.0, 0.0]), &Action::Continuous(vec![0.0, 0.0]), &mut rng);
        let outside = env.step(&Observation::Vector(vec![0.6, 0.0, 0.0, 0.0]), &Action::Continuous(vec![0.0, 0.0]), &mut rng);
        assert_eq!(inside.unwrap().costs, vec![0.0]);
        assert_eq!(outside.unwrap().costs, vec![1.0]);
    }

    #[test]
    fn actions_are_clamped() {
        let env = PointCircle::new(PointCircleParams::default()).unwrap();
        let mut rng = rng_from_seed(0);
        let a = env.step(&Observation::Vector(vec![0.0; 4]), &Action::Continuous(vec![5.0, -5.0]), &mut rng).unwrap();
        let b = env.step(&Observation::Vector(vec![0.0; 4]), &Action::Continuous(vec![1.0, -1.0]), &mut rng).unwrap();
        assert_eq!(a, b);
    }
}
