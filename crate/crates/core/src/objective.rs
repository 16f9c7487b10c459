//! The four training losses and their unweighted sum.
//!
//! Disabled terms are omitted from the graph entirely rather than
//! multiplied by zero, so gradient checks stay exact under any flag
//! combination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussians::{kl, sym_kl, DiagGaussian};
use crate::model::{BoundModel, EncodeTrace};
use crate::numerics::{NodeId, Tape};

/// Which loss terms participate in training. The cross-entropy term is
/// mandatory (it carries the supervision).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossFlags {
    pub og: bool,
    pub ng: bool,
    pub gc: bool,
    pub na: bool,
}

impl Default for LossFlags {
    fn default() -> Self {
        LossFlags {
            og: true,
            ng: true,
            gc: true,
            na: true,
        }
    }
}

impl LossFlags {
    pub fn only_na() -> Self {
        LossFlags {
            og: false,
            ng: false,
            gc: false,
            na: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.na {
            return Err(Error::Config(
                "the cross-entropy term cannot be disabled (supervision required)".into(),
            ));
        }
        Ok(())
    }

    /// Short tag like "na+og+gc" for reports.
    pub fn label(&self) -> String {
        let mut parts = vec!["na"];
        if self.og {
            parts.push("og");
        }
        if self.ng {
            parts.push("ng");
        }
        if self.gc {
            parts.push("gc");
        }
        parts.join("+")
    }
}

/// Loss component values for logging. Disabled components are `None`,
/// not zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_og: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_ng: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_gc: Option<f64>,
    pub l_na: f64,
    pub total: f64,
}

/// Sum over observed steps of `KL(posterior_t || prior_t)`: the goal
/// should not move when one more feature arrives.
pub fn loss_og(tape: &mut Tape, trace: &EncodeTrace) -> Result<NodeId> {
    let mut acc: Option<NodeId> = None;
    for (posterior, prior) in trace.posteriors.iter().zip(&trace.priors) {
        let term = kl(tape, posterior, prior)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, term)?,
            None => term,
        });
    }
    acc.ok_or_else(|| Error::Contract("empty trace".into()))
}

/// `KL(posterior || prior)` of the action-based goal at the selected
/// candidate: the goal should not move because of the chosen action.
pub fn loss_ng(
    tape: &mut Tape,
    model: &BoundModel,
    a_n_star: NodeId,
    a_o: NodeId,
) -> Result<NodeId> {
    let posterior = model.action_goal_posterior(tape, a_n_star, a_o)?;
    let prior = model.action_goal_prior(tape, a_n_star)?;
    kl(tape, &posterior, &prior)
}

/// Symmetric divergence between the feature-based goal and the selected
/// candidate's action-based goal.
pub fn loss_gc(tape: &mut Tape, p_zt: &DiagGaussian, p_zn_star: &DiagGaussian) -> Result<NodeId> {
    sym_kl(tape, p_zt, p_zn_star)
}

/// Cross-entropy `-log_softmax(scores)[label]`.
pub fn loss_na(tape: &mut Tape, scores: NodeId, label: usize) -> Result<NodeId> {
    let d_c = tape.value(scores).rows();
    if label >= d_c {
        return Err(Error::Contract(format!(
            "label {label} out of range for {d_c} classes"
        )));
    }
    let log_probs = tape.log_softmax(scores)?;
    let picked = tape.select(log_probs, label)?;
    tape.neg(picked)
}

/// Unweighted sum of the present terms.
pub fn total_loss(tape: &mut Tape, parts: &[NodeId]) -> Result<NodeId> {
    let mut iter = parts.iter();
    let first = *iter
        .next()
        .ok_or_else(|| Error::Contract("no loss terms".into()))?;
    let mut acc = first;
    for &p in iter {
        acc = tape.add(acc, p)?;
    }
    Ok(acc)
}
