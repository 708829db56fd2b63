//! Two-hidden-layer perceptron evaluated either on plain floats or on a tape.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::autodiff::{Tape, Var};
use super::params::LayoutBuilder;
use crate::math;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => math::tanh(x),
            Activation::Relu => math::relu(x),
        }
    }

    fn apply_tape(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub input_dim: usize,
    pub hidden: [usize; 2],
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpShape {
    fn dims(&self) -> [(usize, usize); 3] {
        [
            (self.input_dim, self.hidden[0]),
            (self.hidden[0], self.hidden[1]),
            (self.hidden[1], self.output_dim),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Registers `{prefix}layerN.weight` / `.bias` blocks; returns the offset.
    pub fn push_layout(&self, builder: &mut LayoutBuilder, prefix: &str) -> usize {
        let start = builder.total();
        for (l, (i, o)) in self.dims().iter().enumerate() {
            builder.push(format!("{prefix}layer{l}.weight"), i * o);
            builder.push(format!("{prefix}layer{l}.bias"), *o);
        }
        start
    }

    /// Gaussian weights with variance `1/fan_in`, output layer scaled by
    /// `output_scale`, zero biases.
    pub fn init(&self, rng: &mut SeededRng, output_scale: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (l, (i, o)) in self.dims().iter().enumerate() {
            let scale = if l == 2 { output_scale } else { 1.0 } / math::sqrt(*i as f64);
            for _ in 0..i * o {
                let z: f64 = rng.sample(StandardNormal);
                out.push(z * scale);
            }
            out.extend(core::iter::repeat_n(0.0, *o));
        }
        out
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = input.to_vec();
        let mut offset = 0;
        for (l, (i, o)) in self.dims().iter().enumerate() {
            let w = &params[offset..offset + i * o];
            let b = &params[offset + i * o..offset + i * o + o];
            offset += i * o + o;
            let y: Vec<f64> = (0..*o)
                .map(|j| {
                    let pre = b[j] + w[j * i..(j + 1) * i].iter().zip(&x).map(|(a, c)| a * c).sum::<f64>();
                    if l < 2 {
                        self.activation.apply(pre)
                    } else {
                        pre
                    }
                })
                .collect();
            x = y;
        }
        x
    }

    /// Forward pass where `params` are tape leaves for this network.
    pub fn forward_tape(&self, tape: &mut Tape, params: &[Var], input: &[f64]) -> Vec<Var> {
        let mut offset = 0;
        let mut hidden: Vec<Var> = Vec::new();
        for (l, (i, o)) in self.dims().iter().enumerate() {
            let w = &params[offset..offset + i * o];
            let b = &params[offset + i * o..offset + i * o + o];
            offset += i * o + o;
            let y: Vec<Var> = (0..*o)
                .map(|j| {
                    let pre = if l == 0 {
                        tape.affine_const(&w[j * i..(j + 1) * i], input, b[j])
                    } else {
                        tape.affine(&w[j * i..(j + 1) * i], &hidden, b[j])
                    };
                    if l < 2 {
                        self.activation.apply_tape(tape, pre)
                    } else {
                        pre
                    }
                })
                .collect();
            hidden = y;
        }
        hidden
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn tape_and_float_forward_agree() {
        let shape = MlpShape { input_dim: 3, hidden: [4, 5], output_dim: 2, activation: Activation::Tanh };
        let params = shape.init(&mut rng_from_seed(3), 1.0);
        let input = [0.3, -0.2, 1.0];
        let plain = shape.forward(&params, &input);
        let mut tape = Tape::new();
        let leaves: Vec<Var> = params.iter().map(|p| tape.leaf(*p)).collect();
        let out = shape.forward_tape(&mut tape, &leaves, &input);
        for (a, b) in plain.iter().zip(&out) {
            assert!((a - tape.value(*b)).abs() < 1e-14);
        }
    }
}
