//! Maximum-entropy inverse reinforcement learning over joint state-action
//! features, plus the retrieval machinery built on the trained model:
//! MAP property-vector inference, mutual-information distance weights, and
//! k-nearest-neighbor structure lookup.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::features::{ContextVector, PropertyVector, CONTEXT_DIM, PROPERTY_DIM};
use crate::cas::{parse_cas, CasStructure};

pub const JOINT_DIM: usize = CONTEXT_DIM * PROPERTY_DIM;

/// Joint state-action features: outer product of the binary context and the
/// integer property components. The per-state policy stays log-linear in the
/// property vector while being conditioned on the context.
pub fn joint_features(ctx: &ContextVector, prop: &PropertyVector) -> [f64; JOINT_DIM] {
    let mut out = [0.0; JOINT_DIM];
    let bits = ctx.bits();
    let comps = prop.components();
    for (i, b) in bits.iter().enumerate() {
        for (j, c) in comps.iter().enumerate() {
            out[i * PROPERTY_DIM + j] = b * c;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct IrlDemo {
    pub context: ContextVector,
    pub property: PropertyVector,
    pub structure: CasStructure,
}

#[derive(Debug, Clone)]
pub struct IrlHyper {
    pub lr: f64,
    pub iters: usize,
    pub l2: f64,
    /// Gradient norm below which training counts as converged.
    pub tol: f64,
}

impl Default for IrlHyper {
    fn default() -> Self {
        IrlHyper {
            lr: 0.1,
            iters: 500,
            l2: 1e-3,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrlConfig {
    pub k_c: usize,
    /// Recorded from the MDP tuple; unused by the log-linear policy.
    pub gamma: f64,
}

impl Default for IrlConfig {
    fn default() -> Self {
        IrlConfig { k_c: 100, gamma: 0.95 }
    }
}

#[derive(Debug, Error)]
pub enum IrlError {
    #[error("no demonstrations provided")]
    EmptyDemos,
    #[error("action database is empty")]
    EmptyActionDb,
    #[error("checkpoint parse error: {0}")]
    Checkpoint(String),
}

/// Trained content-selection model.
#[derive(Debug, Clone)]
pub struct IrlModel {
    pub theta: Vec<f64>,
    /// Distinct (structure, property) entries observed in training, in order
    /// of first appearance.
    pub action_db: Vec<(CasStructure, PropertyVector)>,
    pub mi_weights: [f64; PROPERTY_DIM],
    pub config: IrlConfig,
    /// Infinity norm of the final training gradient; a non-converged run is
    /// reported here rather than failing.
    pub final_grad_norm: f64,
    pub converged: bool,
}

/// Negative energy of an action in a context: the policy is
/// pi(a|s) proportional to exp(-theta . psi(s, a)).
fn energy(theta: &[f64], ctx: &ContextVector, prop: &PropertyVector) -> f64 {
    let psi = joint_features(ctx, prop);
    theta.iter().zip(psi.iter()).map(|(t, p)| t * p).sum()
}

/// Policy distribution over the candidate action set for one context.
pub fn policy(
    theta: &[f64],
    ctx: &ContextVector,
    actions: &[PropertyVector],
) -> Vec<f64> {
    let energies: Vec<f64> = actions.iter().map(|a| -energy(theta, ctx, a)).collect();
    let max = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = energies.iter().map(|e| (e - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// Mean log-likelihood of the demos under theta (without regularization).
/// Kept public so tests can finite-difference it against the gradient.
pub fn log_likelihood(
    theta: &[f64],
    demos: &[(ContextVector, PropertyVector)],
    actions: &[PropertyVector],
) -> f64 {
    let mut total = 0.0;
    for (ctx, prop) in demos {
        let probs = policy(theta, ctx, actions);
        let idx = actions
            .iter()
            .position(|a| a == prop)
            .expect("demo action must be in the candidate set");
        total += probs[idx].ln();
    }
    total / demos.len() as f64
}

/// Gradient of the mean log-likelihood: empirical joint features minus
/// model-expected joint features (negated to match the exponent's sign).
pub fn log_likelihood_grad(
    theta: &[f64],
    demos: &[(ContextVector, PropertyVector)],
    actions: &[PropertyVector],
) -> Vec<f64> {
    let mut grad = vec![0.0; JOINT_DIM];
    for (ctx, prop) in demos {
        let psi = joint_features(ctx, prop);
        let probs = policy(theta, ctx, actions);
        for (g, p) in grad.iter_mut().zip(psi.iter()) {
            *g -= p;
        }
        for (a, pr) in actions.iter().zip(probs.iter()) {
            let psi_a = joint_features(ctx, a);
            for (g, p) in grad.iter_mut().zip(psi_a.iter()) {
                *g += pr * p;
            }
        }
    }
    for g in grad.iter_mut() {
        *g /= demos.len() as f64;
    }
    grad
}

fn dedup_actions(demos: &[(ContextVector, PropertyVector)]) -> Vec<PropertyVector> {
    let mut actions: Vec<PropertyVector> = Vec::new();
    for (_, prop) in demos {
        if !actions.contains(prop) {
            actions.push(*prop);
        }
    }
    actions
}

/// Fit the maximum-entropy policy by gradient ascent on the regularized
/// demo log-likelihood. The candidate action set is the distinct property
/// vectors observed in the demos.
pub fn train_irl(demos: &[IrlDemo], hyper: &IrlHyper, config: IrlConfig) -> Result<IrlModel, IrlError> {
    if demos.is_empty() {
        return Err(IrlError::EmptyDemos);
    }
    let pairs: Vec<(ContextVector, PropertyVector)> =
        demos.iter().map(|d| (d.context, d.property)).collect();
    let actions = dedup_actions(&pairs);
    let mut theta = vec![0.0; JOINT_DIM];
    let mut grad_norm = f64::INFINITY;
    for _ in 0..hyper.iters {
        let mut grad = log_likelihood_grad(&theta, &pairs, &actions);
        for (g, t) in grad.iter_mut().zip(theta.iter()) {
            *g -= hyper.l2 * t;
        }
        grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm < hyper.tol {
            break;
        }
        for (t, g) in theta.iter_mut().zip(grad.iter()) {
            *t += hyper.lr * g;
        }
    }
    // action_db keeps one entry per distinct property vector, carrying the
    // first structure observed with it.
    let mut action_db: Vec<(CasStructure, PropertyVector)> = Vec::new();
    for d in demos {
        if !action_db.iter().any(|(_, p)| p == &d.property) {
            action_db.push((d.structure.clone(), d.property));
        }
    }
    let mi = mi_weights(&pairs);
    Ok(IrlModel {
        theta,
        action_db,
        mi_weights: mi,
        config,
        final_grad_norm: grad_norm,
        converged: grad_norm < hyper.tol,
    })
}

impl IrlModel {
    pub fn actions(&self) -> Vec<PropertyVector> {
        self.action_db.iter().map(|(_, p)| *p).collect()
    }

    /// MAP property vector for a context; ties break to the earliest
    /// database entry.
    pub fn map_property_vector(&self, ctx: &ContextVector) -> Result<PropertyVector, IrlError> {
        if self.action_db.is_empty() {
            return Err(IrlError::EmptyActionDb);
        }
        let mut best = 0usize;
        let mut best_energy = energy(&self.theta, ctx, &self.action_db[0].1);
        for (i, (_, prop)) in self.action_db.iter().enumerate().skip(1) {
            let e = energy(&self.theta, ctx, prop);
            if e < best_energy {
                best = i;
                best_energy = e;
            }
        }
        Ok(self.action_db[best].1)
    }

    /// The k_c database structures nearest to `target` under the
    /// MI-weighted L1 distance, in stable (distance, index) order.
    pub fn knn_retrieve(&self, target: &PropertyVector) -> Vec<CasStructure> {
        let mut scored: Vec<(f64, usize)> = self
            .action_db
            .iter()
            .enumerate()
            .map(|(i, (_, prop))| {
                let d: f64 = (0..PROPERTY_DIM)
                    .map(|j| self.mi_weights[j] * (prop.0[j] - target.0[j]).abs() as f64)
                    .sum();
                (d, i)
            })
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        scored
            .into_iter()
            .take(self.config.k_c)
            .map(|(_, i)| self.action_db[i].0.clone())
            .collect()
    }
}

/// Per-property mutual information (in nats) between the context bits and
/// that property component, computed from co-occurrence counts with add-one
/// smoothing over the observed value support. The context factorizes
/// per bit; bit contributions are summed.
pub fn mi_weights(pairs: &[(ContextVector, PropertyVector)]) -> [f64; PROPERTY_DIM] {
    let n = pairs.len();
    let mut out = [0.0; PROPERTY_DIM];
    if n == 0 {
        return out;
    }
    for d in 0..PROPERTY_DIM {
        let mut values: Vec<i64> = pairs.iter().map(|(_, p)| p.0[d]).collect();
        values.sort_unstable();
        values.dedup();
        if values.len() < 2 {
            continue; // constant component carries no information
        }
        let v = values.len();
        let mut total = 0.0;
        for bit in 0..CONTEXT_DIM {
            // counts[b][vi]
            let mut counts = vec![vec![0usize; v]; 2];
            for (ctx, prop) in pairs {
                let b = ctx.0[bit] as usize;
                let vi = values.binary_search(&prop.0[d]).unwrap();
                counts[b][vi] += 1;
            }
            let denom = (n + 2 * v) as f64;
            let mut mi = 0.0;
            for b in 0..2 {
                for vi in 0..v {
                    let pj = (counts[b][vi] + 1) as f64 / denom;
                    let pb = (counts[b].iter().sum::<usize>() + v) as f64 / denom;
                    let pv = (counts[0][vi] + counts[1][vi] + 2) as f64 / denom;
                    mi += pj * (pj / (pb * pv)).ln();
                }
            }
            total += mi.max(0.0);
        }
        out[d] = total;
    }
    out
}

// Checkpoint format shared with the neural models: named real arrays plus
// the database entries in CAS concrete syntax.

#[derive(Serialize, Deserialize)]
struct IrlCheckpoint {
    version: u32,
    theta: Vec<f64>,
    mi_weights: Vec<f64>,
    action_db: Vec<DbEntry>,
    config: IrlConfig,
    final_grad_norm: f64,
    converged: bool,
}

#[derive(Serialize, Deserialize)]
struct DbEntry {
    structure: String,
    property: Vec<i64>,
}

impl IrlModel {
    pub fn to_json(&self) -> String {
        let ckpt = IrlCheckpoint {
            version: 1,
            theta: self.theta.clone(),
            mi_weights: self.mi_weights.to_vec(),
            action_db: self
                .action_db
                .iter()
                .map(|(s, p)| DbEntry {
                    structure: s.serialize(),
                    property: p.0.to_vec(),
                })
                .collect(),
            config: self.config.clone(),
            final_grad_norm: self.final_grad_norm,
            converged: self.converged,
        };
        serde_json::to_string_pretty(&ckpt).expect("checkpoint serialization")
    }

    pub fn from_json(text: &str) -> Result<IrlModel, IrlError> {
        let ckpt: IrlCheckpoint =
            serde_json::from_str(text).map_err(|e| IrlError::Checkpoint(e.to_string()))?;
        let mut action_db = Vec::new();
        for e in ckpt.action_db {
            let s = parse_cas(&e.structure).map_err(|err| IrlError::Checkpoint(err.to_string()))?;
            let mut p = PropertyVector::default();
            if e.property.len() != PROPERTY_DIM {
                return Err(IrlError::Checkpoint("bad property vector length".into()));
            }
            p.0.copy_from_slice(&e.property);
            action_db.push((s, p));
        }
        let mut mi = [0.0; PROPERTY_DIM];
        if ckpt.mi_weights.len() != PROPERTY_DIM {
            return Err(IrlError::Checkpoint("bad mi_weights length".into()));
        }
        mi.copy_from_slice(&ckpt.mi_weights);
        Ok(IrlModel {
            theta: ckpt.theta,
            action_db,
            mi_weights: mi,
            config: ckpt.config,
            final_grad_norm: ckpt.final_grad_norm,
            converged: ckpt.converged,
        })
    }
}
