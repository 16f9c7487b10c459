//! The anticipation network.
//!
//! A gated recurrent encoder carries the observed feature sequence while
//! a prior head over the hidden state defines the goal distribution at
//! every step (the posterior head is evaluated alongside it for the
//! observation loss). The final-step prior is the feature-based goal;
//! from a goal sample the model derives the observed action vector, a
//! distribution over next-action candidates, and for each candidate an
//! action-based goal distribution plus class scores.

mod checkpoint;
mod config;
mod layers;

pub use config::ModelConfig;
pub use layers::{DualHead, GruCell, Linear, Mlp, Shared, SplitDualHead};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gaussians::DiagGaussian;
use crate::numerics::{Matrix, NodeId, Tape};
use crate::rng::{mix, rng_from_seed};
use rand::Rng;

/// Every trainable tensor of the model, generic over storage
/// (`Shared` values or tape `NodeId`s).
#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    /// Goal prior from the previous hidden state; mean and std nets are
    /// fully separate here.
    pub prior_net: SplitDualHead<T>,
    /// Goal posterior from the projected new feature and hidden state.
    pub posterior_net: DualHead<T>,
    /// Feature projection into the goal space (no hidden layer).
    pub feat_proj: Linear<T>,
    /// Hidden-state projection into the goal space (no hidden layer).
    pub hidden_proj: Linear<T>,
    /// Goal-sample projection (no hidden layer).
    pub goal_proj: Linear<T>,
    /// Recurrent cell over `[feat_proj(x), goal_proj(z)]`.
    pub cell: GruCell<T>,
    /// Observed-action vector from `[goal_proj(z), hidden_proj(h)]`.
    pub obs_action_net: Mlp<T>,
    /// Next-action distribution from `[hidden_proj(h), obs_action_proj(a_o)]`.
    pub next_action_net: DualHead<T>,
    /// Observed-action projection into the goal space.
    pub obs_action_proj: Mlp<T>,
    /// Next-action projection within the goal space.
    pub next_action_proj: Mlp<T>,
    /// Action-based goal conditioned on the candidate alone.
    pub action_goal_prior_net: DualHead<T>,
    /// Action-based goal conditioned on candidate and observed action.
    pub action_goal_posterior_net: DualHead<T>,
    /// Class scores from a candidate.
    pub classifier: Mlp<T>,
}

impl ModelParams<Shared> {
    fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = rng_from_seed(mix(seed, 0x6d6f_64656c));
        let (d_f, d_h, d_z, d_c, hid) = (
            config.d_f,
            config.d_h,
            config.d_z,
            config.d_c,
            config.mlp_hidden,
        );
        ModelParams {
            prior_net: SplitDualHead::init(&mut rng, d_h, hid, d_z),
            posterior_net: DualHead::init(&mut rng, 2 * d_z, hid, d_z),
            feat_proj: Linear::init(&mut rng, d_f, d_z),
            hidden_proj: Linear::init(&mut rng, d_h, d_z),
            goal_proj: Linear::init(&mut rng, d_z, d_z),
            cell: GruCell::init(&mut rng, 2 * d_z, d_h),
            obs_action_net: Mlp::init(&mut rng, 2 * d_z, hid, d_h),
            next_action_net: DualHead::init(&mut rng, 2 * d_z, hid, d_z),
            obs_action_proj: Mlp::init(&mut rng, d_h, hid, d_z),
            next_action_proj: Mlp::init(&mut rng, d_z, hid, d_z),
            action_goal_prior_net: DualHead::init(&mut rng, d_z, hid, d_z),
            action_goal_posterior_net: DualHead::init(&mut rng, 2 * d_z, hid, d_z),
            classifier: Mlp::init(&mut rng, d_z, hid, d_c),
        }
    }

    /// Named tensors in declaration order; checkpoints and the optimizer
    /// rely on this order being stable.
    pub fn tensors(&self) -> Vec<(String, &Shared)> {
        let mut out = Vec::with_capacity(60);
        self.prior_net.tensors("prior_net", &mut out);
        self.posterior_net.tensors("posterior_net", &mut out);
        self.feat_proj.tensors("feat_proj", &mut out);
        self.hidden_proj.tensors("hidden_proj", &mut out);
        self.goal_proj.tensors("goal_proj", &mut out);
        self.cell.tensors("cell", &mut out);
        self.obs_action_net.tensors("obs_action_net", &mut out);
        self.next_action_net.tensors("next_action_net", &mut out);
        self.obs_action_proj.tensors("obs_action_proj", &mut out);
        self.next_action_proj.tensors("next_action_proj", &mut out);
        self.action_goal_prior_net
            .tensors("action_goal_prior_net", &mut out);
        self.action_goal_posterior_net
            .tensors("action_goal_posterior_net", &mut out);
        self.classifier.tensors("classifier", &mut out);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Shared)> {
        let mut out = Vec::with_capacity(60);
        self.prior_net.tensors_mut("prior_net", &mut out);
        self.posterior_net.tensors_mut("posterior_net", &mut out);
        self.feat_proj.tensors_mut("feat_proj", &mut out);
        self.hidden_proj.tensors_mut("hidden_proj", &mut out);
        self.goal_proj.tensors_mut("goal_proj", &mut out);
        self.cell.tensors_mut("cell", &mut out);
        self.obs_action_net.tensors_mut("obs_action_net", &mut out);
        self.next_action_net.tensors_mut("next_action_net", &mut out);
        self.obs_action_proj.tensors_mut("obs_action_proj", &mut out);
        self.next_action_proj.tensors_mut("next_action_proj", &mut out);
        self.action_goal_prior_net
            .tensors_mut("action_goal_prior_net", &mut out);
        self.action_goal_posterior_net
            .tensors_mut("action_goal_posterior_net", &mut out);
        self.classifier.tensors_mut("classifier", &mut out);
        out
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelParams<NodeId> {
        ModelParams {
            prior_net: self.prior_net.bind(tape),
            posterior_net: self.posterior_net.bind(tape),
            feat_proj: self.feat_proj.bind(tape),
            hidden_proj: self.hidden_proj.bind(tape),
            goal_proj: self.goal_proj.bind(tape),
            cell: self.cell.bind(tape),
            obs_action_net: self.obs_action_net.bind(tape),
            next_action_net: self.next_action_net.bind(tape),
            obs_action_proj: self.obs_action_proj.bind(tape),
            next_action_proj: self.next_action_proj.bind(tape),
            action_goal_prior_net: self.action_goal_prior_net.bind(tape),
            action_goal_posterior_net: self.action_goal_posterior_net.bind(tape),
            classifier: self.classifier.bind(tape),
        }
    }
}

impl ModelParams<NodeId> {
    /// Bound tensor ids in the same order as
    /// [`ModelParams::tensors`]; the trainer folds per-sample gradients
    /// through this list.
    pub fn node_ids(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(60);
        self.prior_net.push_ids(&mut out);
        self.posterior_net.push_ids(&mut out);
        self.feat_proj.push_ids(&mut out);
        self.hidden_proj.push_ids(&mut out);
        self.goal_proj.push_ids(&mut out);
        self.cell.push_ids(&mut out);
        self.obs_action_net.push_ids(&mut out);
        self.next_action_net.push_ids(&mut out);
        self.obs_action_proj.push_ids(&mut out);
        self.next_action_proj.push_ids(&mut out);
        self.action_goal_prior_net.push_ids(&mut out);
        self.action_goal_posterior_net.push_ids(&mut out);
        self.classifier.push_ids(&mut out);
        out
    }
}

/// A trained (or freshly initialized) model: config plus parameters.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ModelParams<Shared>,
    init_seed: u64,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Model {
            params: ModelParams::init(&config, seed),
            config,
            init_seed: seed,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn params(&self) -> &ModelParams<Shared> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<Shared> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Leases the parameters onto a tape for one pass.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        BoundModel {
            config: self.config,
            params: self.params.bind(tape),
        }
    }

    /// Loads one observed feature matrix (T x d_f rows) as per-step
    /// column-vector leaves.
    pub fn feature_leaves(&self, tape: &mut Tape, features: &Matrix) -> Result<Vec<NodeId>> {
        if features.cols() != self.config.d_f {
            return Err(Error::shape(
                "features",
                features.shape_str(),
                format!("Tx{}", self.config.d_f),
            ));
        }
        Ok((0..features.rows())
            .map(|t| tape.leaf(Matrix::column(features.row(t))))
            .collect())
    }

    /// Adds uniform noise in `(-scale, scale)` to every tensor.
    ///
    /// Gradient checks evaluate at such a generic point: at the exact
    /// zero-bias init, first-step ReLU pre-activations sit on the kink
    /// where central differences are ill-defined.
    pub fn perturb_params(&mut self, scale: f64, seed: u64) {
        let mut rng = rng_from_seed(mix(seed, 0x6a69_7474_6572));
        for (_, t) in self.params.tensors_mut() {
            let m = Arc::make_mut(t);
            for v in m.as_mut_slice() {
                *v += rng.random_range(-scale..scale);
            }
        }
    }

    /// Replaces parameter values from a flat list in tensor order
    /// (used by checkpoint loading and gradient checks).
    pub fn set_tensors(&mut self, values: &[Matrix]) -> Result<()> {
        let mut tensors = self.params.tensors_mut();
        if tensors.len() != values.len() {
            return Err(Error::Contract(format!(
                "expected {} tensors, got {}",
                tensors.len(),
                values.len()
            )));
        }
        for ((name, slot), v) in tensors.iter_mut().zip(values) {
            if v.shape() != slot.shape() {
                return Err(Error::shape("set_tensors", name.clone(), v.shape_str()));
            }
            **slot = Arc::new(v.clone());
        }
        Ok(())
    }
}

/// Closed-form parameter count for a configuration.
pub fn expected_param_count(config: &ModelConfig) -> usize {
    let linear = |i: usize, o: usize| i * o + o;
    let mlp = |i: usize, o: usize| linear(i, config.mlp_hidden) + linear(config.mlp_hidden, o);
    let dual = |i: usize, o: usize| linear(i, config.mlp_hidden) + 2 * linear(config.mlp_hidden, o);
    let (d_f, d_h, d_z, d_c) = (config.d_f, config.d_h, config.d_z, config.d_c);
    let gru = 3 * linear(2 * d_z + d_h, d_h);
    2 * mlp(d_h, d_z)                  // prior (separate mean/std nets)
        + dual(2 * d_z, d_z)           // posterior
        + linear(d_f, d_z)             // feature projection
        + linear(d_h, d_z)             // hidden projection
        + linear(d_z, d_z)             // goal projection
        + gru
        + mlp(2 * d_z, d_h)            // observed action
        + dual(2 * d_z, d_z)           // next-action distribution
        + mlp(d_h, d_z)                // observed-action projection
        + mlp(d_z, d_z)                // next-action projection
        + dual(d_z, d_z)               // action goal prior
        + dual(2 * d_z, d_z)           // action goal posterior
        + mlp(d_z, d_c) // classifier
}

/// Per-step record of one encoded sequence.
#[derive(Debug, Clone)]
pub struct EncodeTrace {
    /// Goal prior at each step (computed from the previous hidden state).
    pub priors: Vec<DiagGaussian>,
    /// Goal posterior at each step (additionally sees the new feature).
    pub posteriors: Vec<DiagGaussian>,
    /// Goal samples fed to the recurrence.
    pub goals: Vec<NodeId>,
    /// Hidden states `h_0..h_T`; `h_0` is the zero vector.
    pub hiddens: Vec<NodeId>,
}

impl EncodeTrace {
    pub fn steps(&self) -> usize {
        self.priors.len()
    }

    pub fn final_hidden(&self) -> NodeId {
        *self.hiddens.last().expect("nonempty trace")
    }

    /// The feature-based goal distribution: the final-step prior
    /// (never the posterior).
    pub fn feature_goal(&self) -> &DiagGaussian {
        self.priors.last().expect("nonempty trace")
    }
}

/// Model parameters leased onto a tape, with the forward operations.
pub struct BoundModel {
    pub config: ModelConfig,
    pub params: ModelParams<NodeId>,
}

impl BoundModel {
    /// Goal prior `N(mu, sigma)` from the previous hidden state.
    pub fn prior_dist(&self, tape: &mut Tape, h_prev: NodeId) -> Result<DiagGaussian> {
        let (mean, raw_std) = self.params.prior_net.heads(tape, h_prev)?;
        DiagGaussian::from_raw_heads(tape, mean, raw_std)
    }

    /// Goal posterior from the incoming feature and previous hidden state.
    pub fn posterior_dist(
        &self,
        tape: &mut Tape,
        x: NodeId,
        h_prev: NodeId,
    ) -> Result<DiagGaussian> {
        let fx = self.params.feat_proj.apply(tape, x)?;
        let fh = self.params.hidden_proj.apply(tape, h_prev)?;
        let joint = tape.concat(fx, fh)?;
        let (mean, raw_std) = self.params.posterior_net.heads(tape, joint)?;
        DiagGaussian::from_raw_heads(tape, mean, raw_std)
    }

    /// Runs the recurrence over the observed sequence from `h_0 = 0`,
    /// recording prior and posterior at every step. The goal sample fed
    /// to the cell is drawn from the prior.
    pub fn encode(&self, tape: &mut Tape, xs: &[NodeId]) -> Result<EncodeTrace> {
        if xs.is_empty() {
            return Err(Error::Contract("encode requires at least one step".into()));
        }
        let mut trace = EncodeTrace {
            priors: Vec::with_capacity(xs.len()),
            posteriors: Vec::with_capacity(xs.len()),
            goals: Vec::with_capacity(xs.len()),
            hiddens: Vec::with_capacity(xs.len() + 1),
        };
        let mut h = tape.leaf(Matrix::zeros(self.config.d_h, 1));
        trace.hiddens.push(h);
        for &x in xs {
            let prior = self.prior_dist(tape, h)?;
            let posterior = self.posterior_dist(tape, x, h)?;
            let z = crate::gaussians::reparam_sample(tape, &prior)?;
            let fx = self.params.feat_proj.apply(tape, x)?;
            let fz = self.params.goal_proj.apply(tape, z)?;
            let input = tape.concat(fx, fz)?;
            h = self.params.cell.step(tape, h, input)?;
            trace.priors.push(prior);
            trace.posteriors.push(posterior);
            trace.goals.push(z);
            trace.hiddens.push(h);
        }
        Ok(trace)
    }

    /// Observed-action vector from a goal sample and the final hidden
    /// state; lives in the hidden space.
    pub fn observed_action_rep(&self, tape: &mut Tape, z: NodeId, h: NodeId) -> Result<NodeId> {
        let fz = self.params.goal_proj.apply(tape, z)?;
        let fh = self.params.hidden_proj.apply(tape, h)?;
        let joint = tape.concat(fz, fh)?;
        self.params.obs_action_net.apply(tape, joint)
    }

    /// Distribution over next-action candidates in the goal space.
    pub fn next_action_dist(
        &self,
        tape: &mut Tape,
        h: NodeId,
        a_o: NodeId,
    ) -> Result<DiagGaussian> {
        let fh = self.params.hidden_proj.apply(tape, h)?;
        let fa = self.params.obs_action_proj.apply(tape, a_o)?;
        let joint = tape.concat(fh, fa)?;
        let (mean, raw_std) = self.params.next_action_net.heads(tape, joint)?;
        DiagGaussian::from_raw_heads(tape, mean, raw_std)
    }

    /// Action-based goal conditioned on the candidate alone.
    pub fn action_goal_prior(&self, tape: &mut Tape, a_n: NodeId) -> Result<DiagGaussian> {
        let fa = self.params.next_action_proj.apply(tape, a_n)?;
        let (mean, raw_std) = self.params.action_goal_prior_net.heads(tape, fa)?;
        DiagGaussian::from_raw_heads(tape, mean, raw_std)
    }

    /// Action-based goal conditioned on candidate and observed action.
    pub fn action_goal_posterior(
        &self,
        tape: &mut Tape,
        a_n: NodeId,
        a_o: NodeId,
    ) -> Result<DiagGaussian> {
        let fan = self.params.next_action_proj.apply(tape, a_n)?;
        let fao = self.params.obs_action_proj.apply(tape, a_o)?;
        let joint = tape.concat(fan, fao)?;
        let (mean, raw_std) = self.params.action_goal_posterior_net.heads(tape, joint)?;
        DiagGaussian::from_raw_heads(tape, mean, raw_std)
    }

    /// Raw class scores for a candidate; softmax is applied only inside
    /// the loss and the metrics.
    pub fn classify(&self, tape: &mut Tape, a_n: NodeId) -> Result<NodeId> {
        self.params.classifier.apply(tape, a_n)
    }
}
