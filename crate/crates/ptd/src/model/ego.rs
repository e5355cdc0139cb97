//! Egocentric coordinate transform: subtract the center human's keypoint
//! centroid from every point, aligning interaction patterns into a
//! subject-centered frame. The inverse adds the centroid back.
//!
//! Both tape and plain-slice versions exist; the tape versions keep gradients
//! flowing through the centroid, which matters when the center's features are
//! themselves predictions during autoregressive unrolling.

use crate::error::Result;
use crate::tape::{NodeId, Tape};

/// Per-coordinate mean of a flat `[points * coord_dim]` vector, on tape.
/// Returns a `[coord_dim]` node.
pub fn centroid_node(
    tape: &mut Tape,
    x: NodeId,
    points: usize,
    coord_dim: usize,
) -> Result<NodeId> {
    let mut coords = Vec::with_capacity(coord_dim);
    for c in 0..coord_dim {
        let mut acc = tape.slice(x, 0, c, 1)?;
        for k in 1..points {
            let part = tape.slice(x, 0, k * coord_dim + c, 1)?;
            acc = tape.add(acc, part)?;
        }
        coords.push(tape.scale(acc, 1.0 / points as f64)?);
    }
    tape.concat(&coords, 0)
}

/// Repeat a `[coord_dim]` vector `points` times into `[points * coord_dim]`.
pub fn tile_node(tape: &mut Tape, v: NodeId, points: usize) -> Result<NodeId> {
    let parts = vec![v; points];
    tape.concat(&parts, 0)
}

/// `x - centroid` per point; `centroid_tiled` must already be tiled to
/// `x`'s length.
pub fn to_egocentric_node(tape: &mut Tape, x: NodeId, centroid_tiled: NodeId) -> Result<NodeId> {
    tape.sub(x, centroid_tiled)
}

pub fn from_egocentric_node(
    tape: &mut Tape,
    x_ego: NodeId,
    centroid_tiled: NodeId,
) -> Result<NodeId> {
    tape.add(x_ego, centroid_tiled)
}

/// Plain-slice version: subtract `center` (a `[coord_dim]` point) from every
/// point of `x`.
pub fn to_egocentric(x: &[f64], center: &[f64], coord_dim: usize) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, v)| v - center[i % coord_dim])
        .collect()
}

pub fn from_egocentric(x_ego: &[f64], center: &[f64], coord_dim: usize) -> Vec<f64> {
    x_ego
        .iter()
        .enumerate()
        .map(|(i, v)| v + center[i % coord_dim])
        .collect()
}
