//! Switch supervision targets.
//!
//! The interaction bit `q^t` says whether a human has an outward edge at
//! frame `t`; the switch label postdates it, OR-ing the next `omega` bits in
//! so the switch learns to fire before contact is observable.

use std::collections::BTreeMap;

use crate::model::{build_transient_graph, object_centroid};
use crate::scene::{anchor_point, DistanceAnchor, SceneSequence};

/// Per-frame interaction bit for every human (keyed by entity index).
///
/// Geometric rule: `q^t = 1` iff some object's centroid lies within
/// `beta_out` of the human's anchor at frame `t`. When the scene carries
/// generator ground-truth windows and `prefer_windows` is set, window
/// membership takes precedence over geometry.
pub fn interaction_labels(
    scene: &SceneSequence,
    beta_out: f64,
    anchor: DistanceAnchor,
    prefer_windows: bool,
) -> BTreeMap<usize, Vec<bool>> {
    let humans = scene.human_indices();
    let objects = scene.object_indices();
    let frames = scene.frames.len();
    let mut out = BTreeMap::new();

    if prefer_windows && !scene.windows.is_empty() {
        for &hi in &humans {
            let id = scene.entities[hi].id;
            let mut q = vec![false; frames];
            for w in scene.windows.iter().filter(|w| w.human == id) {
                for bit in q.iter_mut().take(w.t_end + 1).skip(w.t_start) {
                    *bit = true;
                }
            }
            out.insert(hi, q);
        }
        return out;
    }

    for &hi in &humans {
        let mut q = Vec::with_capacity(frames);
        for frame in &scene.frames {
            let a = anchor_point(&frame[hi], scene.coord_dim, anchor);
            let cents: Vec<(usize, Vec<f64>)> = objects
                .iter()
                .map(|&o| (o, object_centroid(&frame[o], scene.coord_dim)))
                .collect();
            let g = build_transient_graph(hi, &a, &cents, beta_out, beta_out, false);
            q.push(!g.outward.is_empty());
        }
        out.insert(hi, q);
    }
    out
}

/// Postdated switch label: `p^t = q^t | q^{t+1} | ... | q^{t+omega}`, indices
/// past the end of the sequence dropped from the OR.
pub fn switch_labels(q: &[bool], omega: usize) -> Vec<bool> {
    (0..q.len())
        .map(|t| q[t..=(t + omega).min(q.len() - 1)].iter().any(|&b| b))
        .collect()
}
