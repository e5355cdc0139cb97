//! Egocentric transient graph: a star of the center human and nearby object
//! leaves, with distance-thresholded inward (attention candidates) and
//! outward (manipulated objects) edges. Rebuilt every step, so the topology
//! evolves within one transient life cycle.

use std::collections::BTreeMap;

use crate::scene::{centroid, euclidean};

#[derive(Debug, Clone, PartialEq)]
pub struct TransientGraph {
    /// Entity index of the center human.
    pub center: usize,
    /// Object entity indices with `d <= beta_in`, ascending.
    pub inward: Vec<usize>,
    /// Object entity indices with `d <= beta_out`, ascending.
    pub outward: Vec<usize>,
    /// Center-leaf distance per object entity index.
    pub distances: BTreeMap<usize, f64>,
    /// Distance to the nearest object; infinite when there are none.
    pub d_min: f64,
}

impl TransientGraph {
    pub fn has_outward(&self, object: usize) -> bool {
        self.outward.binary_search(&object).is_ok()
    }
}

/// Mean of an object's box corners.
pub fn object_centroid(features: &[f64], coord_dim: usize) -> Vec<f64> {
    centroid(features, coord_dim)
}

/// Threshold center-leaf distances into edge sets. Boundary convention:
/// a distance exactly equal to the threshold produces an edge.
/// `fully_connected` (the no-egocentric ablation) puts every object in both
/// sets while still reporting true distances.
pub fn build_transient_graph(
    center: usize,
    human_anchor: &[f64],
    objects: &[(usize, Vec<f64>)],
    beta_in: f64,
    beta_out: f64,
    fully_connected: bool,
) -> TransientGraph {
    let mut inward = Vec::new();
    let mut outward = Vec::new();
    let mut distances = BTreeMap::new();
    let mut d_min = f64::INFINITY;
    for (idx, pos) in objects {
        let d = euclidean(human_anchor, pos);
        distances.insert(*idx, d);
        d_min = d_min.min(d);
        if fully_connected || d <= beta_in {
            inward.push(*idx);
        }
        if fully_connected || d <= beta_out {
            outward.push(*idx);
        }
    }
    inward.sort_unstable();
    outward.sort_unstable();
    TransientGraph {
        center,
        inward,
        outward,
        distances,
        d_min,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(x: f64) -> Vec<f64> {
        vec![x, 0.0]
    }

    #[test]
    fn thresholding_rule() {
        // beta_in=2.0, beta_out=0.5; d = {A:0.4, B:1.5, C:3.0}
        let objects = vec![(1, at(0.4)), (2, at(1.5)), (3, at(3.0))];
        let g = build_transient_graph(0, &[0.0, 0.0], &objects, 2.0, 0.5, false);
        assert_eq!(g.inward, vec![1, 2]);
        assert_eq!(g.outward, vec![1]);
        assert_eq!(g.d_min, 0.4);
    }

    #[test]
    fn no_objects_empty_sets_infinite_distance() {
        let g = build_transient_graph(0, &[1.0, 2.0], &[], 2.0, 0.5, false);
        assert!(g.inward.is_empty() && g.outward.is_empty());
        assert!(g.d_min.is_infinite());
    }

    #[test]
    fn boundary_distance_included() {
        let objects = vec![(7, at(0.5))];
        let g = build_transient_graph(0, &[0.0, 0.0], &objects, 2.0, 0.5, false);
        assert_eq!(g.outward, vec![7]);
        assert!(g.has_outward(7));
    }

    #[test]
    fn fully_connected_overrides_thresholds() {
        let objects = vec![(1, at(10.0)), (2, at(20.0))];
        let g = build_transient_graph(0, &[0.0, 0.0], &objects, 2.0, 0.5, true);
        assert_eq!(g.inward, vec![1, 2]);
        assert_eq!(g.outward, vec![1, 2]);
        assert_eq!(g.d_min, 10.0);
    }
}
