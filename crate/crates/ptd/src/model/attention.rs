//! Graph-attention message aggregation shared by both channels.
//!
//! `Attn(q, V) = sum_j softmax_j(lrelu(score([Wq q; Wv vj]))) * Wv vj`,
//! with per-class value embeddings (heterogeneous entities have different
//! feature widths) and one shared scoring layer.

use crate::error::Result;
use crate::nn::affine;
use crate::params::ParamSet;
use crate::tape::{NodeId, Tape};

pub struct AttentionOut {
    pub message: NodeId,
    /// Normalized attention weights `[n]`; `None` for an empty value set.
    pub weights: Option<NodeId>,
}

/// Aggregate `values` into a message for `query`. An empty value set yields
/// the zero message.
///
/// `query_embed` and the per-value embed names are bare weight-matrix
/// parameters; `score_prefix` is an affine layer (`.w`/`.b`) producing one
/// logit per pair.
pub fn gat_attention(
    tape: &mut Tape,
    params: &ParamSet,
    query: NodeId,
    query_embed: &str,
    values: &[(NodeId, &str)],
    score_prefix: &str,
    slope: f64,
    message_width: usize,
) -> Result<AttentionOut> {
    if values.is_empty() {
        return Ok(AttentionOut {
            message: tape.zeros(vec![message_width])?,
            weights: None,
        });
    }
    let wq = tape.param(query_embed, params)?;
    let q_emb = tape.matmul(wq, query)?;

    let mut embedded = Vec::with_capacity(values.len());
    let mut logits = Vec::with_capacity(values.len());
    for (value, embed_name) in values {
        let wv = tape.param(embed_name, params)?;
        let v_emb = tape.matmul(wv, *value)?;
        let pair = tape.concat(&[q_emb, v_emb], 0)?;
        let logit = affine(tape, params, score_prefix, pair)?;
        logits.push(tape.leaky_relu(logit, slope)?);
        embedded.push(v_emb);
    }
    let stacked = tape.concat(&logits, 0)?;
    let weights = tape.softmax(stacked, 0)?;

    let mut message = None;
    for (j, v_emb) in embedded.iter().enumerate() {
        let w_j = tape.slice(weights, 0, j, 1)?;
        let w_scalar = tape.sum(w_j)?;
        let w_full = tape.broadcast(w_scalar, vec![message_width])?;
        let term = tape.mul(w_full, *v_emb)?;
        message = Some(match message {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok(AttentionOut {
        message: message.expect("non-empty values"),
        weights: Some(weights),
    })
}
