//! Network building blocks, generic over parameter storage.
//!
//! `T = Shared` holds the trainable values; `T = NodeId` is the same
//! structure leased onto a tape for one forward/backward pass. Binding
//! is an `Arc` clone per tensor, so a pass never copies weights.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::{Matrix, NodeId, Tape};

/// Reference-counted parameter tensor.
pub type Shared = Arc<Matrix>;

fn init_weight(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Shared {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Arc::new(Matrix::from_vec(rows, cols, data).expect("sized data"))
}

#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: T,
    pub bias: T,
}

impl Linear<Shared> {
    /// Weights uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)), zero bias.
    pub fn init(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Linear {
            weight: init_weight(rng, out_dim, in_dim, bound),
            bias: Arc::new(Matrix::zeros(out_dim, 1)),
        }
    }

    /// Same shape but a caller-chosen bound (the recurrent cell uses
    /// 1/sqrt(d_h) for all of its matrices).
    pub fn init_with_bound(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize, bound: f64) -> Self {
        Linear {
            weight: init_weight(rng, out_dim, in_dim, bound),
            bias: Arc::new(Matrix::zeros(out_dim, 1)),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> Linear<NodeId> {
        Linear {
            weight: tape.shared_leaf(Arc::clone(&self.weight)),
            bias: tape.shared_leaf(Arc::clone(&self.bias)),
        }
    }

    pub fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Shared)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Shared)>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }
}

impl Linear<NodeId> {
    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        tape.affine(self.weight, x, self.bias)
    }

    pub fn push_ids(&self, out: &mut Vec<NodeId>) {
        out.push(self.weight);
        out.push(self.bias);
    }
}

/// Two-layer network with ReLU on the hidden layer.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    pub hidden: Linear<T>,
    pub out: Linear<T>,
}

impl Mlp<Shared> {
    pub fn init(rng: &mut ChaCha8Rng, in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        Mlp {
            hidden: Linear::init(rng, in_dim, hidden_dim),
            out: Linear::init(rng, hidden_dim, out_dim),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> Mlp<NodeId> {
        Mlp {
            hidden: self.hidden.bind(tape),
            out: self.out.bind(tape),
        }
    }

    pub fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Shared)>) {
        self.hidden.tensors(&format!("{prefix}.hidden"), out);
        self.out.tensors(&format!("{prefix}.out"), out);
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Shared)>) {
        self.hidden.tensors_mut(&format!("{prefix}.hidden"), out);
        self.out.tensors_mut(&format!("{prefix}.out"), out);
    }
}

impl Mlp<NodeId> {
    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let h = self.hidden.apply(tape, x)?;
        let a = tape.relu(h)?;
        self.out.apply(tape, a)
    }

    pub fn push_ids(&self, out: &mut Vec<NodeId>) {
        self.hidden.push_ids(out);
        self.out.push_ids(out);
    }
}

/// Shared ReLU trunk with separate mean/std output heads.
#[derive(Debug, Clone)]
pub struct DualHead<T> {
    pub trunk: Linear<T>,
    pub mean_head: Linear<T>,
    pub std_head: Linear<T>,
}

impl DualHead<Shared> {
    pub fn init(rng: &mut ChaCha8Rng, in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        DualHead {
            trunk: Linear::init(rng, in_dim, hidden_dim),
            mean_head: Linear::init(rng, hidden_dim, out_dim),
            std_head: Linear::init(rng, hidden_dim, out_dim),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> DualHead<NodeId> {
        DualHead {
            trunk: self.trunk.bind(tape),
            mean_head: self.mean_head.bind(tape),
            std_head: self.std_head.bind(tape),
        }
    }

    pub fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Shared)>) {
        self.trunk.tensors(&format!("{prefix}.trunk"), out);
        self.mean_head.tensors(&format!("{prefix}.mean_head"), out);
        self.std_head.tensors(&format!("{prefix}.std_head"), out);
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Shared)>) {
        self.trunk.tensors_mut(&format!("{prefix}.trunk"), out);
        self.mean_head.tensors_mut(&format!("{prefix}.mean_head"), out);
        self.std_head.tensors_mut(&format!("{prefix}.std_head"), out);
    }
}

impl DualHead<NodeId> {
    /// Returns `(mean, raw_std)`; the caller applies the softplus floor.
    pub fn heads(&self, tape: &mut Tape, x: NodeId) -> Result<(NodeId, NodeId)> {
        let h = self.trunk.apply(tape, x)?;
        let a = tape.relu(h)?;
        let mean = self.mean_head.apply(tape, a)?;
        let raw_std = self.std_head.apply(tape, a)?;
        Ok((mean, raw_std))
    }

    pub fn push_ids(&self, out: &mut Vec<NodeId>) {
        self.trunk.push_ids(out);
        self.mean_head.push_ids(out);
        self.std_head.push_ids(out);
    }
}

/// Fully separate mean and std networks (used only where the trunks
/// must not be shared).
#[derive(Debug, Clone)]
pub struct SplitDualHead<T> {
    pub mean_net: Mlp<T>,
    pub std_net: Mlp<T>,
}

impl SplitDualHead<Shared> {
    pub fn init(rng: &mut ChaCha8Rng, in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        SplitDualHead {
            mean_net: Mlp::init(rng, in_dim, hidden_dim, out_dim),
            std_net: Mlp::init(rng, in_dim, hidden_dim, out_dim),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> SplitDualHead<NodeId> {
        SplitDualHead {
            mean_net: self.mean_net.bind(tape),
            std_net: self.std_net.bind(tape),
        }
    }

    pub fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Shared)>) {
        self.mean_net.tensors(&format!("{prefix}.mean_net"), out);
        self.std_net.tensors(&format!("{prefix}.std_net"), out);
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Shared)>) {
        self.mean_net.tensors_mut(&format!("{prefix}.mean_net"), out);
        self.std_net.tensors_mut(&format!("{prefix}.std_net"), out);
    }
}

impl SplitDualHead<NodeId> {
    pub fn heads(&self, tape: &mut Tape, x: NodeId) -> Result<(NodeId, NodeId)> {
        let mean = self.mean_net.apply(tape, x)?;
        let raw_std = self.std_net.apply(tape, x)?;
        Ok((mean, raw_std))
    }

    pub fn push_ids(&self, out: &mut Vec<NodeId>) {
        self.mean_net.push_ids(out);
        self.std_net.push_ids(out);
    }
}

/// Gated-update recurrent cell with reset and update gates. Each gate
/// reads the concatenated `[input, state]` vector.
#[derive(Debug, Clone)]
pub struct GruCell<T> {
    pub reset: Linear<T>,
    pub update: Linear<T>,
    pub candidate: Linear<T>,
}

impl GruCell<Shared> {
    pub fn init(rng: &mut ChaCha8Rng, input_dim: usize, state_dim: usize) -> Self {
        let bound = 1.0 / (state_dim as f64).sqrt();
        let total = input_dim + state_dim;
        GruCell {
            reset: Linear::init_with_bound(rng, total, state_dim, bound),
            update: Linear::init_with_bound(rng, total, state_dim, bound),
            candidate: Linear::init_with_bound(rng, total, state_dim, bound),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> GruCell<NodeId> {
        GruCell {
            reset: self.reset.bind(tape),
            update: self.update.bind(tape),
            candidate: self.candidate.bind(tape),
        }
    }

    pub fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Shared)>) {
        self.reset.tensors(&format!("{prefix}.reset"), out);
        self.update.tensors(&format!("{prefix}.update"), out);
        self.candidate.tensors(&format!("{prefix}.candidate"), out);
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Shared)>) {
        self.reset.tensors_mut(&format!("{prefix}.reset"), out);
        self.update.tensors_mut(&format!("{prefix}.update"), out);
        self.candidate.tensors_mut(&format!("{prefix}.candidate"), out);
    }
}

impl GruCell<NodeId> {
    pub fn step(&self, tape: &mut Tape, state: NodeId, input: NodeId) -> Result<NodeId> {
        let joint = tape.concat(input, state)?;
        let r_pre = self.reset.apply(tape, joint)?;
        let r = tape.sigmoid(r_pre)?;
        let u_pre = self.update.apply(tape, joint)?;
        let u = tape.sigmoid(u_pre)?;
        let gated_state = tape.mul(r, state)?;
        let cand_in = tape.concat(input, gated_state)?;
        let n_pre = self.candidate.apply(tape, cand_in)?;
        let n = tape.tanh(n_pre)?;
        // h' = (1 - u) .* n + u .* h
        let neg_u = tape.neg(u)?;
        let one_minus_u = tape.add_const(neg_u, 1.0);
        let new_part = tape.mul(one_minus_u, n)?;
        let kept_part = tape.mul(u, state)?;
        tape.add(new_part, kept_part)
    }

    pub fn push_ids(&self, out: &mut Vec<NodeId>) {
        self.reset.push_ids(out);
        self.update.push_ids(out);
        self.candidate.push_ids(out);
    }
}
