//! Named scene suites and the on-disk dataset layout: one scene file per
//! scene plus a `manifest.json` carrying the accepted seeds, so any dataset
//! can be regenerated byte-for-byte from its manifest.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{generate_scene, interaction_fraction, HumanPlan, PlanStep, ScenarioSpec};
use crate::error::{Error, Result};
use crate::scene::{euclidean, SceneSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteKind {
    /// Wandering only; the switch should stay off.
    NavigateOnly,
    /// One manipulation episode per human.
    PickPlace,
    /// Sequential manipulations of different objects.
    MultiObject,
    /// Two humans with independent concurrent interactions.
    TwoAgent,
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SuiteKind::NavigateOnly => "navigate-only",
            SuiteKind::PickPlace => "pick-place",
            SuiteKind::MultiObject => "multi-object",
            SuiteKind::TwoAgent => "two-agent",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SuiteKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "navigate-only" => Ok(SuiteKind::NavigateOnly),
            "pick-place" => Ok(SuiteKind::PickPlace),
            "multi-object" => Ok(SuiteKind::MultiObject),
            "two-agent" => Ok(SuiteKind::TwoAgent),
            other => Err(Error::Config(format!("unknown suite `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub suite: SuiteKind,
    pub scenes: usize,
    pub seed: u64,
    pub humans: usize,
    pub objects: usize,
    /// Manipulation episodes per human (multi-object suite).
    pub episodes: usize,
    pub frames: usize,
    pub t_obs: usize,
    pub l_pred: usize,
    pub arena: f64,
    pub noise: f64,
    pub keypoints: usize,
    pub coord_dim: usize,
    pub speed: f64,
    pub attach_radius: f64,
    pub approach_stop: f64,
    pub release_dist: f64,
    pub beta_out: f64,
    pub smooth_window: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            suite: SuiteKind::PickPlace,
            scenes: 100,
            seed: 7,
            humans: 1,
            objects: 3,
            episodes: 2,
            frames: 30,
            t_obs: 10,
            l_pred: 20,
            arena: 10.0,
            noise: 0.01,
            keypoints: 5,
            coord_dim: 2,
            speed: 0.18,
            attach_radius: 0.15,
            approach_stop: 0.65,
            release_dist: 1.4,
            beta_out: 0.45,
            smooth_window: 3,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenes == 0 {
            return Err(Error::Config("suite needs at least one scene".to_string()));
        }
        if self.frames < self.t_obs + self.l_pred {
            return Err(Error::Config(format!(
                "frames ({}) must cover t_obs + l_pred ({})",
                self.frames,
                self.t_obs + self.l_pred
            )));
        }
        if self.suite == SuiteKind::MultiObject && self.frames < 40 * self.episodes {
            return Err(Error::Config(format!(
                "multi-object with {} episodes needs >= {} frames",
                self.episodes,
                40 * self.episodes
            )));
        }
        let humans = self.effective_humans();
        let needed = match self.suite {
            SuiteKind::NavigateOnly => 1,
            SuiteKind::PickPlace | SuiteKind::TwoAgent => humans,
            SuiteKind::MultiObject => humans * self.episodes,
        };
        if self.objects < needed {
            return Err(Error::Config(format!(
                "{} suite needs {needed} objects, config has {}",
                self.suite, self.objects
            )));
        }
        Ok(())
    }

    pub fn effective_humans(&self) -> usize {
        match self.suite {
            SuiteKind::TwoAgent => 2,
            _ => self.humans,
        }
    }
}

const WAYPOINT_CLEARANCE: f64 = 1.2;

fn sample_point(rng: &mut ChaCha12Rng, arena: f64, cd: usize) -> Vec<f64> {
    (0..cd)
        .map(|_| rng.random_range(WAYPOINT_CLEARANCE..arena - WAYPOINT_CLEARANCE))
        .collect()
}

fn sample_clear_point(
    rng: &mut ChaCha12Rng,
    arena: f64,
    cd: usize,
    avoid: &[Vec<f64>],
    clearance: f64,
) -> Vec<f64> {
    let mut best = sample_point(rng, arena, cd);
    for _ in 0..200 {
        if avoid.iter().all(|p| euclidean(&best, p) >= clearance) {
            return best;
        }
        best = sample_point(rng, arena, cd);
    }
    best
}

/// Point at distance in `radius` from `center`, clear of `avoid`, clamped
/// into the waypoint margins. Bounded hop distances keep every plan inside
/// its frame budget.
fn sample_ring_point(
    rng: &mut ChaCha12Rng,
    arena: f64,
    cd: usize,
    center: &[f64],
    radius: (f64, f64),
    avoid: &[Vec<f64>],
    clearance: f64,
) -> Vec<f64> {
    let mut fallback = None;
    for _ in 0..40 {
        let r = rng.random_range(radius.0..radius.1);
        let mut dir: Vec<f64> = (0..cd).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        for v in &mut dir {
            *v = *v / n * r;
        }
        let mut p: Vec<f64> = center.iter().zip(&dir).map(|(c, d)| c + d).collect();
        for v in &mut p {
            *v = v.clamp(WAYPOINT_CLEARANCE, arena - WAYPOINT_CLEARANCE);
        }
        if avoid.iter().all(|o| euclidean(&p, o) >= clearance) {
            return p;
        }
        fallback.get_or_insert(p);
    }
    fallback.expect("at least one candidate")
}

/// Deterministically build the scenario for one (config, seed) pair.
/// Regeneration from a manifest seed goes through this same function.
pub fn scene_spec(cfg: &SuiteConfig, seed: u64) -> ScenarioSpec {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let cd = cfg.coord_dim;
    let humans = cfg.effective_humans();

    // objects clustered so walks between them stay short
    let cluster = sample_point(&mut rng, cfg.arena - 3.2, cd)
        .iter()
        .map(|v| v + 1.6)
        .collect::<Vec<f64>>();
    let mut objects: Vec<Vec<f64>> = Vec::with_capacity(cfg.objects);
    for _ in 0..cfg.objects {
        let p = sample_ring_point(&mut rng, cfg.arena, cd, &cluster, (0.1, 3.0), &objects, 2.2);
        objects.push(p);
    }

    let mut plans = Vec::with_capacity(humans);
    for h in 0..humans {
        let mut steps = Vec::new();
        let start;
        match cfg.suite {
            SuiteKind::NavigateOnly => {
                start = sample_clear_point(&mut rng, cfg.arena, cd, &objects, 1.5);
                let mut from = start.clone();
                for _ in 0..3 {
                    let wp = sample_ring_point(
                        &mut rng,
                        cfg.arena,
                        cd,
                        &from,
                        (1.2, 2.5),
                        &objects,
                        WAYPOINT_CLEARANCE,
                    );
                    steps.push(PlanStep::Navigate { to: wp.clone() });
                    from = wp;
                }
            }
            SuiteKind::PickPlace | SuiteKind::TwoAgent => {
                start = push_episode(&mut rng, cfg, &objects, h, &mut steps, None);
            }
            SuiteKind::MultiObject => {
                let mut s = None;
                for e in 0..cfg.episodes {
                    let first = push_episode(
                        &mut rng,
                        cfg,
                        &objects,
                        h * cfg.episodes + e,
                        &mut steps,
                        s.clone(),
                    );
                    s.get_or_insert(first);
                }
                start = s.expect("episodes >= 1");
            }
        }
        plans.push(HumanPlan { start, steps });
    }

    ScenarioSpec {
        arena: cfg.arena,
        coord_dim: cd,
        keypoints: cfg.keypoints,
        frames: cfg.frames,
        t_obs: cfg.t_obs,
        l_pred: cfg.l_pred,
        noise: cfg.noise,
        seed,
        speed: cfg.speed,
        attach_radius: cfg.attach_radius,
        approach_stop: cfg.approach_stop,
        release_dist: cfg.release_dist,
        beta_out: cfg.beta_out,
        smooth_window: cfg.smooth_window,
        humans: plans,
        objects,
    }
}

/// One navigate/approach/manipulate/release episode targeting `object`.
/// For the first episode (`prior_start == None`) this also samples and
/// returns the human's start point one short hop before the waypoint.
fn push_episode(
    rng: &mut ChaCha12Rng,
    cfg: &SuiteConfig,
    objects: &[Vec<f64>],
    object: usize,
    steps: &mut Vec<PlanStep>,
    prior_start: Option<Vec<f64>>,
) -> Vec<f64> {
    let cd = cfg.coord_dim;
    let others: Vec<Vec<f64>> = objects
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != object)
        .map(|(_, p)| p.clone())
        .collect();
    // waypoint on a short ring around the target, then start one hop before
    let wp = sample_ring_point(
        rng,
        cfg.arena,
        cd,
        &objects[object],
        (1.5, 1.8),
        &others,
        WAYPOINT_CLEARANCE,
    );
    let start = match prior_start {
        Some(s) => s,
        None => sample_ring_point(rng, cfg.arena, cd, &wp, (1.0, 1.4), objects, 1.2),
    };
    if steps.is_empty() {
        steps.push(PlanStep::Navigate { to: wp });
    }
    steps.push(PlanStep::Approach { object });
    let duration = rng.random_range(9..=11);
    // displacement toward a clear target so the carried object stays inside
    let carry_target = sample_ring_point(
        rng,
        cfg.arena,
        cd,
        &objects[object],
        (0.6, 1.3),
        &others,
        2.0,
    );
    let displacement: Vec<f64> = carry_target
        .iter()
        .zip(&objects[object])
        .map(|(t, o)| t - o)
        .collect();
    steps.push(PlanStep::Manipulate {
        object,
        duration,
        displacement,
    });
    steps.push(PlanStep::Release);
    start
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub suite: String,
    pub count: usize,
    pub coord_dim: usize,
    pub keypoints: usize,
    pub frames: usize,
    pub t_obs: usize,
    pub l_pred: usize,
    pub beta_out: f64,
    pub interaction_fraction: f64,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
}

const MAX_ATTEMPTS: u64 = 64;

fn derive_seed(cfg_seed: u64, scene: usize, attempt: u64) -> u64 {
    cfg_seed
        .wrapping_add(scene as u64 * 1_000_003)
        .wrapping_add(attempt * 7919)
}

/// Generate the suite into `dir` (one text file per scene plus the
/// manifest). Scenes whose sampled geometry violates the label/window
/// equivalence are re-derived from follow-up seeds; the accepted seed lands
/// in the manifest.
pub fn generate_suite(cfg: &SuiteConfig, dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let mut seeds = Vec::with_capacity(cfg.scenes);
    let mut files = Vec::with_capacity(cfg.scenes);
    let mut fraction_sum = 0.0;
    for i in 0..cfg.scenes {
        let mut accepted = None;
        let mut last_err = None;
        for attempt in 0..MAX_ATTEMPTS {
            let seed = derive_seed(cfg.seed, i, attempt);
            match generate_scene(&scene_spec(cfg, seed)) {
                Ok(scene) => {
                    accepted = Some((seed, scene));
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        let (seed, scene) = accepted.ok_or_else(|| {
            Error::Data(format!(
                "scene {i}: no valid sample in {MAX_ATTEMPTS} attempts (last: {})",
                last_err.map(|e| e.to_string()).unwrap_or_default()
            ))
        })?;
        fraction_sum += interaction_fraction(&scene);
        let file = format!("scene_{i:04}.txt");
        scene.save(&dir.join(&file))?;
        seeds.push(seed);
        files.push(file);
    }
    let manifest = Manifest {
        suite: cfg.suite.to_string(),
        count: cfg.scenes,
        coord_dim: cfg.coord_dim,
        keypoints: cfg.keypoints,
        frames: cfg.frames,
        t_obs: cfg.t_obs,
        l_pred: cfg.l_pred,
        beta_out: cfg.beta_out,
        interaction_fraction: fraction_sum / cfg.scenes as f64,
        seeds,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Data(format!("manifest serialization: {e}")))?;
    std::fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("manifest parse: {e}")))
}

pub fn load_dataset(dir: &Path) -> Result<Vec<SceneSequence>> {
    let manifest = load_manifest(dir)?;
    manifest
        .files
        .iter()
        .map(|f| SceneSequence::load(&dir.join(f)))
        .collect()
}
