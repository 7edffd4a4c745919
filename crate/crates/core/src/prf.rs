//! Two-component mixture-model pseudo-relevance feedback.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::index::{InvertedIndex, QueryModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub num_docs: usize,
    pub num_terms: usize,
    pub interp_coeff: f64,
    /// Weight of the collection model in the feedback mixture.
    pub noise: f64,
    pub em_iters: usize,
    pub em_tol: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        FeedbackConfig {
            num_docs: 10,
            num_terms: 50,
            interp_coeff: 0.5,
            noise: 0.5,
            em_iters: 30,
            em_tol: 1e-6,
        }
    }
}

/// Result of EM with the log-likelihood after initialization and after each
/// iteration.
#[derive(Debug, Clone)]
pub struct FeedbackEstimate {
    pub model: QueryModel,
    /// Untruncated topic model `theta_F`.
    pub theta: BTreeMap<String, f64>,
    pub log_likelihood: Vec<f64>,
}

/// Estimates `theta_F` maximizing
/// `sum_w c(w;F) ln((1 - noise) theta_F(w) + noise p(w|C))`
/// and returns its top `num_terms` terms renormalized.
pub fn estimate_feedback_model(
    feedback_docs: &[Document],
    index: &InvertedIndex,
    cfg: &FeedbackConfig,
) -> Result<QueryModel> {
    estimate_feedback_trace(feedback_docs, index, cfg).map(|e| e.model)
}

pub fn estimate_feedback_trace(
    feedback_docs: &[Document],
    index: &InvertedIndex,
    cfg: &FeedbackConfig,
) -> Result<FeedbackEstimate> {
    if feedback_docs.is_empty() {
        return Err(Error::invalid("feedback_docs", "at least one document is required"));
    }
    if !(cfg.noise > 0.0 && cfg.noise < 1.0) {
        return Err(Error::invalid("noise", format!("{} is outside (0, 1)", cfg.noise)));
    }
    if cfg.num_terms == 0 {
        return Err(Error::invalid("num_terms", "must be at least 1"));
    }
    let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
    for d in feedback_docs {
        for t in &d.tokens {
            *counts.entry(t.as_str()).or_insert(0.0) += 1.0;
        }
    }
    let total: f64 = counts.values().sum();
    if total == 0.0 {
        return Err(Error::EmptyFeedback);
    }
    let terms: Vec<&str> = counts.keys().copied().collect();
    let c: Vec<f64> = counts.values().copied().collect();
    let p_c: Vec<f64> = terms.iter().map(|t| index.collection_prob(t)).collect();
    let lambda = 1.0 - cfg.noise;

    let mut theta: Vec<f64> = c.iter().map(|x| x / total).collect();
    let log_lik = |theta: &[f64]| -> f64 {
        c.iter()
            .zip(theta)
            .zip(&p_c)
            .map(|((c, th), pc)| c * (lambda * th + cfg.noise * pc).ln())
            .sum()
    };
    let mut trace = vec![log_lik(&theta)];
    let mut resp = vec![0.0; theta.len()];
    for _ in 0..cfg.em_iters {
        for i in 0..theta.len() {
            let fg = lambda * theta[i];
            resp[i] = fg / (fg + cfg.noise * p_c[i]);
        }
        let norm: f64 = c.iter().zip(&resp).map(|(c, r)| c * r).sum();
        for i in 0..theta.len() {
            theta[i] = c[i] * resp[i] / norm;
        }
        let ll = log_lik(&theta);
        let delta = ll - trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        trace.push(ll);
        if delta.abs() < cfg.em_tol {
            break;
        }
    }

    let mut ranked: Vec<(&str, f64)> = terms.iter().copied().zip(theta.iter().copied()).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(cfg.num_terms);
    let model = QueryModel::from_weights(ranked.iter().map(|(t, w)| (t.to_string(), *w)))?;
    let theta = terms
        .iter()
        .zip(theta)
        .map(|(t, w)| (t.to_string(), w))
        .collect();
    Ok(FeedbackEstimate {
        model,
        theta,
        log_likelihood: trace,
    })
}

/// `(1 - coeff) * original + coeff * feedback`.
pub fn interpolate_query(original: &QueryModel, feedback: &QueryModel, coeff: f64) -> Result<QueryModel> {
    if !(0.0..=1.0).contains(&coeff) {
        return Err(Error::invalid("coeff", format!("{coeff} is outside [0, 1]")));
    }
    if coeff == 0.0 {
        return Ok(original.clone());
    }
    if coeff == 1.0 {
        return Ok(feedback.clone());
    }
    let mut acc: BTreeMap<String, f64> = BTreeMap::new();
    for (t, w) in original.iter() {
        *acc.entry(t.to_string()).or_insert(0.0) += (1.0 - coeff) * w;
    }
    for (t, w) in feedback.iter() {
        *acc.entry(t.to_string()).or_insert(0.0) += coeff * w;
    }
    QueryModel::from_weights(acc)
}
