//! A small tape-based reverse-mode differentiation engine.
//!
//! Every node records its value and the local partial derivatives with
//! respect to its parents at creation time, so the backward pass is a single
//! reverse sweep over the tape.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }

    /// Refers to the node created `index`-th on a tape.
    pub fn from_index(index: usize) -> Self {
        Var(index)
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    value: f64,
    dep_start: usize,
    dep_len: usize,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    deps: Vec<(usize, f64)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self { nodes: Vec::with_capacity(nodes), deps: Vec::with_capacity(nodes * 2) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node created after the first `len`, so a prefix of
    /// parameter leaves can be reused across many forward passes.
    pub fn truncate(&mut self, len: usize) {
        if len < self.nodes.len() {
            let node = self.nodes[len];
            self.deps.truncate(node.dep_start);
            self.nodes.truncate(len);
        }
    }

    fn push(&mut self, value: f64, deps: &[(Var, f64)]) -> Var {
        let dep_start = self.deps.len();
        self.deps.extend(deps.iter().map(|(v, d)| (v.0, *d)));
        self.nodes.push(Node { value, dep_start, dep_len: deps.len() });
        Var(self.nodes.len() - 1)
    }

    /// An independent input (parameter or constant).
    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(value, &[])
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.0].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, &[(a, 1.0), (b, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, &[(a, 1.0), (b, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        self.push(va * vb, &[(a, vb), (b, va)])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        self.push(value, &[(a, c)])
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        self.push(value, &[(a, 1.0)])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a);
        self.push(v * v, &[(a, 2.0 * v)])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = math::tanh(self.value(a));
        self.push(t, &[(a, 1.0 - t * t)])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a);
        if v > 0.0 {
            self.push(v, &[(a, 1.0)])
        } else {
            self.push(0.0, &[(a, 0.0)])
        }
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let e = math::exp(self.value(a));
        self.push(e, &[(a, e)])
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a);
        self.push(math::ln(v), &[(a, 1.0 / v)])
    }

    /// `Σ_i vars[i]`.
    pub fn sum(&mut self, vars: &[Var]) -> Var {
        let value = vars.iter().map(|v| self.value(*v)).sum();
        let deps: Vec<(Var, f64)> = vars.iter().map(|v| (*v, 1.0)).collect();
        self.push(value, &deps)
    }

    /// Affine map `bias + Σ_i weights[i] * inputs[i]` where both weights and
    /// inputs live on the tape.
    pub fn affine(&mut self, weights: &[Var], inputs: &[Var], bias: Var) -> Var {
        let mut value = self.value(bias);
        let mut deps = Vec::with_capacity(2 * weights.len() + 1);
        for (w, x) in weights.iter().zip(inputs) {
            let (vw, vx) = (self.value(*w), self.value(*x));
            value += vw * vx;
            deps.push((*w, vx));
            deps.push((*x, vw));
        }
        deps.push((bias, 1.0));
        self.push(value, &deps)
    }

    /// Affine map with constant inputs: `bias + Σ_i weights[i] * inputs[i]`.
    pub fn affine_const(&mut self, weights: &[Var], inputs: &[f64], bias: Var) -> Var {
        let mut value = self.value(bias);
        let mut deps = Vec::with_capacity(weights.len() + 1);
        for (w, x) in weights.iter().zip(inputs) {
            value += self.value(*w) * x;
            if *x != 0.0 {
                deps.push((*w, *x));
            }
        }
        deps.push((bias, 1.0));
        self.push(value, &deps)
    }

    /// `ln Σ_i exp(z_i)`, fused for stability.
    pub fn log_sum_exp(&mut self, z: &[Var]) -> Var {
        let vals: Vec<f64> = z.iter().map(|v| self.value(*v)).collect();
        let lse = math::log_sum_exp(&vals);
        let deps: Vec<(Var, f64)> = z.iter().zip(&vals).map(|(v, x)| (*v, math::exp(x - lse))).collect();
        self.push(lse, &deps)
    }

    /// Log-density of `a` under `N(mean, exp(log_std)^2)`.
    pub fn gaussian_log_density(&mut self, mean: Var, log_std: Var, a: f64) -> Var {
        let (mu, ls) = (self.value(mean), self.value(log_std));
        let inv_var = math::exp(-2.0 * ls);
        let diff = a - mu;
        let z2 = diff * diff * inv_var;
        let value = -0.5 * z2 - ls - 0.5 * math::LN_2PI;
        self.push(value, &[(mean, diff * inv_var), (log_std, z2 - 1.0)])
    }

    /// Adjoints `∂output/∂node` for every node, scaled by `seed`.
    pub fn gradient(&self, output: Var, seed: f64) -> Vec<f64> {
        let mut adj = vec![0.0; output.0 + 1];
        adj[output.0] = seed;
        for i in (0..=output.0).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let node = self.nodes[i];
            for &(parent, d) in &self.deps[node.dep_start..node.dep_start + node.dep_len] {
                adj[parent] += g * d;
            }
        }
        adj
    }
}
