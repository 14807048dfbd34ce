use serde::{Deserialize, Serialize};

use crate::nn::{softplus, Graph, NnError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Hinge,
    Bce,
}

/// Per-head hinge loss `mean_b max(0, 1 + D(agent)) + max(0, 1 − D(ref))`
/// on `batch × N` score tensors, as a `1 × N` row.
pub fn hinge_loss(g: &mut Graph, agent: Var, reference: Var) -> Result<Var, NnError> {
    let b = g.shape(agent).0 as f64;
    let a = g.affine(agent, 1.0, 1.0);
    let a = g.relu(a);
    let r = g.affine(reference, -1.0, 1.0);
    let r = g.relu(r);
    let sa = g.sum_rows(a);
    let sr = g.sum_rows(r);
    let total = g.add(sa, sr)?;
    Ok(g.scale(total, 1.0 / b))
}

/// Per-head binary cross-entropy with reference windows labelled 1, scores as logits.
pub fn bce_loss(g: &mut Graph, agent: Var, reference: Var) -> Result<Var, NnError> {
    let b = g.shape(agent).0 as f64;
    let a = g.softplus(agent);
    let neg = g.scale(reference, -1.0);
    let r = g.softplus(neg);
    let sa = g.sum_rows(a);
    let sr = g.sum_rows(r);
    let total = g.add(sa, sr)?;
    Ok(g.scale(total, 1.0 / b))
}

pub fn head_loss(g: &mut Graph, kind: LossKind, agent: Var, reference: Var) -> Result<Var, NnError> {
    match kind {
        LossKind::Hinge => hinge_loss(g, agent, reference),
        LossKind::Bce => bce_loss(g, agent, reference),
    }
}

/// Hinge loss of one head on plain score lists.
pub fn hinge_loss_value(agent: &[f64], reference: &[f64]) -> f64 {
    let a: f64 = agent.iter().map(|d| (1.0 + d).max(0.0)).sum::<f64>() / agent.len() as f64;
    let r: f64 = reference.iter().map(|d| (1.0 - d).max(0.0)).sum::<f64>() / reference.len() as f64;
    a + r
}

/// Cross-entropy of one head on plain logit lists.
pub fn bce_loss_value(agent: &[f64], reference: &[f64]) -> f64 {
    let a: f64 = agent.iter().map(|&d| softplus(d)).sum::<f64>() / agent.len() as f64;
    let r: f64 = reference.iter().map(|&d| softplus(-d)).sum::<f64>() / reference.len() as f64;
    a + r
}

/// Scores clipped to `[-1, 1]`, then averaged.
pub fn clipped_mean(scores: &[f64]) -> f64 {
    scores.iter().map(|s| s.clamp(-1.0, 1.0)).sum::<f64>() / scores.len() as f64
}
