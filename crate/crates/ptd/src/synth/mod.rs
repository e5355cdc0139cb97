//! Deterministic synthetic scene generator.
//!
//! Humans navigate piecewise-linear smoothed paths between waypoints and
//! occasionally approach, grab and displace an object; the object tracks the
//! human's (smoothed) anchor rigidly for the duration. Because the generator
//! owns the plan, every interaction window is known exactly, giving
//! verifiable switch ground truth.
//!
//! Generation is single-shot deterministic per spec: geometry violations
//! (a label/window mismatch, out-of-arena coordinates) are reported as
//! errors, and the suite builder retries with a re-derived spec seed.

mod suite;

pub use suite::{
    generate_suite, load_dataset, load_manifest, Manifest, SuiteConfig, SuiteKind,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::scene::{
    centroid, euclidean, DistanceAnchor, Entity, EntityClass, InteractionWindow, SceneSequence,
};
use crate::train::interaction_labels;

#[derive(Debug, Clone, PartialEq)]
pub enum PlanStep {
    /// Walk to the waypoint at cruise speed.
    Navigate { to: Vec<f64> },
    /// Walk to a stop ring just outside the interaction radius of an object
    /// (index into [`ScenarioSpec::objects`]).
    Approach { object: usize },
    /// Grab the object and carry it along `displacement` over `duration`
    /// frames; the interaction window is exactly these frames.
    Manipulate {
        object: usize,
        duration: usize,
        displacement: Vec<f64>,
    },
    /// Step back out of the interaction radius.
    Release,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanPlan {
    pub start: Vec<f64>,
    pub steps: Vec<PlanStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// Side length of the square (or cubic) arena.
    pub arena: f64,
    pub coord_dim: usize,
    pub keypoints: usize,
    pub frames: usize,
    pub t_obs: usize,
    pub l_pred: usize,
    /// Per-keypoint Gaussian jitter amplitude.
    pub noise: f64,
    pub seed: u64,
    /// Cruise speed, scene units per frame.
    pub speed: f64,
    /// Anchor-to-object distance while carrying.
    pub attach_radius: f64,
    /// Stop distance at the end of an approach (must exceed `beta_out`).
    pub approach_stop: f64,
    /// One-frame step-back distance after releasing; must clear `beta_out`
    /// with room for path smoothing.
    pub release_dist: f64,
    /// Interaction radius the labels must reproduce.
    pub beta_out: f64,
    /// Moving-average window for path smoothing.
    pub smooth_window: usize,
    pub humans: Vec<HumanPlan>,
    /// Object base positions (centroids).
    pub objects: Vec<Vec<f64>>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            arena: 10.0,
            coord_dim: 2,
            keypoints: 5,
            frames: 30,
            t_obs: 10,
            l_pred: 20,
            noise: 0.01,
            seed: 0,
            speed: 0.18,
            attach_radius: 0.15,
            approach_stop: 0.65,
            release_dist: 1.4,
            beta_out: 0.45,
            smooth_window: 3,
            humans: Vec::new(),
            objects: Vec::new(),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.coord_dim != 2 && self.coord_dim != 3 {
            return Err(Error::Config("coord_dim must be 2 or 3".to_string()));
        }
        if self.noise < 0.0 {
            return Err(Error::Config("noise must be >= 0".to_string()));
        }
        if self.humans.is_empty() {
            return Err(Error::Config("at least one human required".to_string()));
        }
        if self.speed <= 0.0 || self.attach_radius <= 0.0 {
            return Err(Error::Config("speed and attach_radius must be > 0".to_string()));
        }
        let inside = |p: &[f64]| p.iter().all(|&v| v >= 0.0 && v <= self.arena);
        for plan in &self.humans {
            if !inside(&plan.start) {
                return Err(Error::Config("human start outside arena".to_string()));
            }
            for step in &plan.steps {
                match step {
                    PlanStep::Navigate { to } => {
                        if !inside(to) {
                            return Err(Error::Config("waypoint outside arena".to_string()));
                        }
                    }
                    PlanStep::Approach { object } | PlanStep::Manipulate { object, .. } => {
                        if *object >= self.objects.len() {
                            return Err(Error::Config(format!(
                                "plan references object {object}, only {} exist",
                                self.objects.len()
                            )));
                        }
                        if let PlanStep::Manipulate { duration, .. } = step {
                            if *duration < 1 {
                                return Err(Error::Config(
                                    "manipulate duration must be >= 1".to_string(),
                                ));
                            }
                        }
                    }
                    PlanStep::Release => {}
                }
            }
        }
        for o in &self.objects {
            if !inside(o) {
                return Err(Error::Config("object outside arena".to_string()));
            }
        }
        Ok(())
    }

    pub fn human_dim(&self) -> usize {
        self.keypoints * self.coord_dim
    }

    pub fn object_dim(&self) -> usize {
        (1 << self.coord_dim) * self.coord_dim
    }
}

/// Raw anchor paths plus window records, before smoothing.
struct CompiledPlan {
    path: Vec<Vec<f64>>,
    windows: Vec<(usize, usize, usize)>, // (object, t_start, t_end)
}

fn vsub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn vadd(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn vscale(a: &[f64], k: f64) -> Vec<f64> {
    a.iter().map(|x| x * k).collect()
}

fn vnorm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn direction(from: &[f64], to: &[f64]) -> Vec<f64> {
    let d = vsub(to, from);
    let n = vnorm(&d);
    if n < 1e-12 {
        let mut unit = vec![0.0; from.len()];
        unit[0] = 1.0;
        unit
    } else {
        vscale(&d, 1.0 / n)
    }
}

/// Walk the plan into a per-frame anchor path. Object base positions move
/// when this human displaces them (plans of different humans must not share
/// objects; the suite builder enforces that).
fn compile_plan(
    spec: &ScenarioSpec,
    plan: &HumanPlan,
    object_bases: &mut [Vec<f64>],
) -> Result<CompiledPlan> {
    let mut path = vec![plan.start.clone()];
    let mut windows = Vec::new();
    let walk_to = |path: &mut Vec<Vec<f64>>, target: &[f64], speed: f64| {
        let from = path.last().unwrap().clone();
        let dist = euclidean(&from, target);
        let n = (dist / speed).ceil().max(1.0) as usize;
        for i in 1..=n {
            let k = i as f64 / n as f64;
            let step = vadd(&from, &vscale(&vsub(target, &from), k));
            path.push(step);
        }
    };
    for step in &plan.steps {
        match step {
            PlanStep::Navigate { to } => walk_to(&mut path, to, spec.speed),
            PlanStep::Approach { object } => {
                let obj = object_bases[*object].clone();
                let here = path.last().unwrap().clone();
                let dir = direction(&obj, &here);
                let stop = vadd(&obj, &vscale(&dir, spec.approach_stop));
                walk_to(&mut path, &stop, spec.speed);
            }
            PlanStep::Manipulate {
                object,
                duration,
                displacement,
            } => {
                let obj = object_bases[*object].clone();
                let here = path.last().unwrap().clone();
                let dir = direction(&obj, &here);
                // one-frame reach to grab range
                let grab = vadd(&obj, &vscale(&dir, spec.attach_radius));
                path.push(grab.clone());
                let t_start = path.len() - 1;
                for i in 1..*duration {
                    let k = i as f64 / (*duration as f64 - 1.0).max(1.0);
                    path.push(vadd(&grab, &vscale(displacement, k)));
                }
                let t_end = path.len() - 1;
                windows.push((*object, t_start, t_end));
                object_bases[*object] = vadd(&obj, displacement);
            }
            PlanStep::Release => {
                // single-frame step-back: far enough out that even the
                // smoothed trajectory stays beyond beta_out from frame t+1 on
                let here = path.last().unwrap().clone();
                let nearest = object_bases
                    .iter()
                    .min_by(|a, b| {
                        euclidean(&here, a).partial_cmp(&euclidean(&here, b)).unwrap()
                    })
                    .cloned()
                    .unwrap_or_else(|| here.clone());
                let dir = direction(&nearest, &here);
                let mut out = vadd(&nearest, &vscale(&dir, spec.release_dist));
                for v in &mut out {
                    *v = v.clamp(0.3, spec.arena - 0.3);
                }
                path.push(out);
            }
        }
    }
    Ok(CompiledPlan { path, windows })
}

/// Centered moving average with clamped edges; preserves collinearity of
/// straight segments.
fn smooth_path(path: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    if window <= 1 || path.len() < 3 {
        return path.to_vec();
    }
    let half = window / 2;
    let cd = path[0].len();
    (0..path.len())
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(path.len() - 1);
            let mut acc = vec![0.0; cd];
            for p in &path[lo..=hi] {
                for (a, v) in acc.iter_mut().zip(p) {
                    *a += v;
                }
            }
            vscale(&acc, 1.0 / (hi - lo + 1) as f64)
        })
        .collect()
}

/// Zero-mean keypoint offsets: `keypoints` points on a radius-0.3 ring
/// (third coordinate zero in 3D).
fn keypoint_offsets(keypoints: usize, coord_dim: usize) -> Vec<Vec<f64>> {
    let mut offs: Vec<Vec<f64>> = (0..keypoints)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / keypoints as f64;
            let mut p = vec![0.3 * a.cos(), 0.3 * a.sin()];
            p.resize(coord_dim, 0.0);
            p
        })
        .collect();
    // subtract the mean so the anchor is the centroid up to rounding
    let mean = {
        let mut m = vec![0.0; coord_dim];
        for o in &offs {
            for (a, v) in m.iter_mut().zip(o) {
                *a += v;
            }
        }
        vscale(&m, 1.0 / keypoints as f64)
    };
    for o in &mut offs {
        *o = vsub(o, &mean);
    }
    offs
}

/// Axis-aligned box corners around a centroid; half-side 0.15.
fn box_corners(center: &[f64], coord_dim: usize) -> Vec<f64> {
    let s = 0.15;
    let n = 1 << coord_dim;
    let mut out = Vec::with_capacity(n * coord_dim);
    for corner in 0..n {
        for (d, &c) in center.iter().enumerate() {
            let sign = if corner >> d & 1 == 1 { 1.0 } else { -1.0 };
            out.push(c + sign * s);
        }
    }
    out
}

/// Build the scene for a spec. Deterministic; fails when the realized
/// geometry breaks the window/label equivalence, coordinates leave the
/// arena, or a manipulation does not fit into the frame budget.
pub fn generate_scene(spec: &ScenarioSpec) -> Result<SceneSequence> {
    spec.validate()?;
    let cd = spec.coord_dim;
    let n_humans = spec.humans.len();
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);

    // 1. anchor paths + raw windows
    let mut bases = spec.objects.clone();
    let mut compiled = Vec::with_capacity(n_humans);
    for plan in &spec.humans {
        compiled.push(compile_plan(spec, plan, &mut bases)?);
    }

    // feasibility: every window must fit the frame budget
    for c in &compiled {
        for &(obj, _, t_end) in &c.windows {
            if t_end >= spec.frames {
                return Err(Error::Config(format!(
                    "infeasible plan: manipulation of object {obj} ends at frame {t_end}, \
                     budget is {}",
                    spec.frames
                )));
            }
        }
    }

    // 2. pad short paths by wandering to seeded waypoints (keeping clear of
    //    both original and displaced object positions), then truncate
    let margin = 1.2;
    let mut avoid = spec.objects.clone();
    avoid.extend(bases.iter().cloned());
    for c in &mut compiled {
        while c.path.len() < spec.frames {
            let mut wp: Vec<f64> = (0..cd)
                .map(|_| rng.random_range(margin..spec.arena - margin))
                .collect();
            for _ in 0..20 {
                if avoid.iter().all(|o| euclidean(&wp, o) >= margin) {
                    break;
                }
                wp = (0..cd)
                    .map(|_| rng.random_range(margin..spec.arena - margin))
                    .collect();
            }
            let from = c.path.last().unwrap().clone();
            let dist = euclidean(&from, &wp);
            let n = (dist / spec.speed).ceil().max(1.0) as usize;
            for i in 1..=n {
                let k = i as f64 / n as f64;
                c.path.push(vadd(&from, &vscale(&vsub(&wp, &from), k)));
            }
        }
        c.path.truncate(spec.frames);
    }

    // 3. smooth anchors
    let anchors: Vec<Vec<Vec<f64>>> = compiled
        .iter()
        .map(|c| smooth_path(&c.path, spec.smooth_window))
        .collect();

    // 4. object trajectories: static except while carried
    let mut object_pos: Vec<Vec<Vec<f64>>> = Vec::with_capacity(spec.objects.len());
    for (o, base) in spec.objects.iter().enumerate() {
        let mut windows: Vec<(usize, usize, usize)> = Vec::new(); // (human, t0, t1)
        for (h, c) in compiled.iter().enumerate() {
            for &(obj, t0, t1) in &c.windows {
                if obj == o {
                    windows.push((h, t0, t1));
                }
            }
        }
        windows.sort_by_key(|&(_, t0, _)| t0);
        for pair in windows.windows(2) {
            if pair[1].1 <= pair[0].2 {
                return Err(Error::Config(format!(
                    "object {o} carried by two overlapping manipulations"
                )));
            }
        }
        let mut traj = Vec::with_capacity(spec.frames);
        let mut current = base.clone();
        let mut offset: Option<(usize, Vec<f64>)> = None;
        for t in 0..spec.frames {
            if let Some((h, off)) = &offset {
                let carried = vadd(&anchors[*h][t], off);
                current = carried;
                if windows.iter().any(|&(wh, _, t1)| wh == *h && t == t1) {
                    offset = None;
                }
            }
            if offset.is_none() {
                if let Some(&(h, t0, _)) = windows.iter().find(|&&(_, t0, _)| t0 == t) {
                    let off = vsub(&current, &anchors[h][t0]);
                    current = vadd(&anchors[h][t], &off);
                    offset = Some((h, off));
                }
            }
            traj.push(current.clone());
        }
        object_pos.push(traj);
    }

    // 5. features with per-keypoint noise on humans
    let offsets = keypoint_offsets(spec.keypoints, cd);
    let normal = |rng: &mut ChaCha12Rng| -> f64 {
        // Box-Muller
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut frames: Vec<Vec<Vec<f64>>> = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut frame = Vec::with_capacity(n_humans + spec.objects.len());
        for anchor in anchors.iter().map(|a| &a[t]) {
            let mut feats = Vec::with_capacity(spec.human_dim());
            for off in &offsets {
                for d in 0..cd {
                    feats.push(anchor[d] + off[d] + spec.noise * normal(&mut rng));
                }
            }
            frame.push(feats);
        }
        for traj in &object_pos {
            frame.push(box_corners(&traj[t], cd));
        }
        frames.push(frame);
    }

    // 6. assemble: humans get ids 0..H, objects follow
    let mut entities = Vec::new();
    for h in 0..n_humans {
        entities.push(Entity {
            id: h,
            class: EntityClass::Human {
                keypoints: spec.keypoints,
            },
            dim: spec.human_dim(),
        });
    }
    for o in 0..spec.objects.len() {
        entities.push(Entity {
            id: n_humans + o,
            class: EntityClass::Object {
                type_label: format!("obj{o}"),
            },
            dim: spec.object_dim(),
        });
    }
    let mut windows = Vec::new();
    for (h, c) in compiled.iter().enumerate() {
        for &(obj, t0, t1) in &c.windows {
            windows.push(InteractionWindow {
                human: h,
                object: n_humans + obj,
                t_start: t0,
                t_end: t1,
            });
        }
    }
    let scene = SceneSequence {
        coord_dim: cd,
        entities,
        frames,
        t_obs: spec.t_obs,
        l_pred: spec.l_pred,
        windows,
    };
    scene.validate()?;

    // 7. constraint checks: bounds and window/label equivalence
    let slack = 4.0 * spec.noise + 1e-9;
    for frame in &scene.frames {
        for feats in frame {
            for &v in feats {
                if v < -0.5 - slack || v > spec.arena + 0.5 + slack {
                    return Err(Error::Data(format!(
                        "coordinate {v} outside the expanded arena"
                    )));
                }
            }
        }
    }
    let geo = interaction_labels(&scene, spec.beta_out, DistanceAnchor::Centroid, false);
    let win = interaction_labels(&scene, spec.beta_out, DistanceAnchor::Centroid, true);
    if geo != win {
        return Err(Error::Data(
            "window labels diverge from thresholded geometry".to_string(),
        ));
    }
    Ok(scene)
}

/// Fraction of (human, frame) pairs inside an interaction window.
pub fn interaction_fraction(scene: &SceneSequence) -> f64 {
    let humans = scene.human_indices();
    if humans.is_empty() || scene.frames.is_empty() {
        return 0.0;
    }
    let mut on = 0usize;
    for &hi in &humans {
        let id = scene.entities[hi].id;
        for t in 0..scene.frames.len() {
            if scene
                .windows
                .iter()
                .any(|w| w.human == id && w.t_start <= t && t <= w.t_end)
            {
                on += 1;
            }
        }
    }
    on as f64 / (humans.len() * scene.frames.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_spec() -> ScenarioSpec {
        ScenarioSpec {
            noise: 0.0,
            frames: 20,
            t_obs: 10,
            l_pred: 10,
            seed: 3,
            humans: vec![HumanPlan {
                start: vec![1.0, 1.0],
                steps: vec![PlanStep::Navigate {
                    to: vec![7.0, 4.0],
                }],
            }],
            objects: vec![],
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn straight_line_navigation_is_collinear() {
        let scene = generate_scene(&line_spec()).unwrap();
        let anchors: Vec<Vec<f64>> = scene
            .frames
            .iter()
            .map(|f| centroid(&f[0], 2))
            .collect();
        let (a, b) = (&anchors[0], anchors.last().unwrap());
        let dir = vsub(b, a);
        for p in &anchors {
            let v = vsub(p, a);
            let cross = v[0] * dir[1] - v[1] * dir[0];
            assert!(cross.abs() < 1e-9, "anchor off the line by {cross}");
        }
    }

    #[test]
    fn same_seed_bit_identical() {
        let a = generate_scene(&line_spec()).unwrap();
        let b = generate_scene(&line_spec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_text(), b.to_text());
    }

    fn manipulation_spec() -> ScenarioSpec {
        ScenarioSpec {
            noise: 0.0,
            frames: 40,
            t_obs: 10,
            l_pred: 20,
            seed: 8,
            humans: vec![HumanPlan {
                start: vec![1.5, 1.5],
                steps: vec![
                    PlanStep::Navigate { to: vec![3.0, 2.0] },
                    PlanStep::Approach { object: 0 },
                    PlanStep::Manipulate {
                        object: 0,
                        duration: 8,
                        displacement: vec![1.5, 0.5],
                    },
                    PlanStep::Release,
                    PlanStep::Navigate { to: vec![8.0, 8.0] },
                ],
            }],
            objects: vec![vec![5.0, 3.0]],
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn carried_object_tracks_anchor_displacement() {
        let scene = generate_scene(&manipulation_spec()).unwrap();
        assert_eq!(scene.windows.len(), 1);
        let w = scene.windows[0];
        assert_eq!(w.t_end - w.t_start + 1, 8);
        let anchor = |t: usize| centroid(&scene.frames[t][0], 2);
        let obj = |t: usize| centroid(&scene.frames[t][1], 2);
        let (a0, o0) = (anchor(w.t_start), obj(w.t_start));
        for t in w.t_start..=w.t_end {
            let da = vsub(&anchor(t), &a0);
            let d_o = vsub(&obj(t), &o0);
            for (x, y) in da.iter().zip(&d_o) {
                assert!((x - y).abs() < 1e-9, "tracking broke at t={t}");
            }
        }
        // object moved roughly by the planned displacement (the smoothed
        // release step drags the final frame a little)
        let total = vsub(&obj(w.t_end), &o0);
        assert!(
            (total[0] - 1.5).abs() < 0.5 && (total[1] - 0.5).abs() < 0.5,
            "displacement {total:?}"
        );
    }

    #[test]
    fn labels_match_windows_exactly() {
        let spec = manipulation_spec();
        let scene = generate_scene(&spec).unwrap();
        let geo = interaction_labels(&scene, spec.beta_out, DistanceAnchor::Centroid, false);
        let q = &geo[&0];
        let w = scene.windows[0];
        for (t, &bit) in q.iter().enumerate() {
            let inside = w.t_start <= t && t <= w.t_end;
            assert_eq!(bit, inside, "frame {t}");
        }
    }

    #[test]
    fn infeasible_duration_rejected() {
        let mut spec = manipulation_spec();
        spec.frames = 18; // approach alone takes most of it
        let err = generate_scene(&spec).unwrap_err().to_string();
        assert!(err.contains("infeasible"), "{err}");
    }

    #[test]
    fn coordinates_stay_in_expanded_arena() {
        let mut spec = manipulation_spec();
        spec.noise = 0.05;
        let scene = generate_scene(&spec).unwrap();
        let slack = 4.0 * spec.noise + 0.5 + 1e-9;
        for frame in &scene.frames {
            for feats in frame {
                for &v in feats {
                    assert!(v >= -slack && v <= spec.arena + slack);
                }
            }
        }
    }

    #[test]
    fn interaction_fraction_counts_window_frames() {
        let scene = generate_scene(&manipulation_spec()).unwrap();
        let f = interaction_fraction(&scene);
        assert!((f - 8.0 / 40.0).abs() < 1e-12);
    }
}
