//! The persistent-transient duality network.
//!
//! A single always-on channel models the whole scene as a recurrent graph
//! attention network over all entities. Per-human transient channels zoom
//! into an egocentric star graph of nearby objects while an interaction is
//! happening; a learned switch manages their life cycles. Channel outputs
//! are arbitrated per entity at every predicted step.

mod attention;
mod ego;
mod graph;
mod persistent;
mod rollout;
mod switch;
mod transient;

pub use attention::{gat_attention, AttentionOut};
pub use ego::{
    centroid_node, from_egocentric, from_egocentric_node, tile_node, to_egocentric,
    to_egocentric_node,
};
pub use graph::{build_transient_graph, object_centroid, TransientGraph};
pub use persistent::{persistent_readout, persistent_step, PersistentStepOut};
pub use rollout::{
    combine_predictions, rollout, ChannelPrediction, GraphTraceRow, Rollout, RolloutMode,
    StateTraceRow, SwitchTraceRow,
};
pub use switch::{switch_decide, switch_score};
pub use transient::{transient_step, TransientInstance, TransientStepOut};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{init_affine, init_gru, init_mlp, init_uniform, Activation, LayerSpec};
use crate::params::ParamSet;
use crate::scene::{DistanceAnchor, EntityClass, SceneSequence};
use crate::tensor::Tensor;

/// Runtime ablation toggles, mirroring the model's component structure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    /// Persistent channel only; the switch never fires.
    pub no_transient: bool,
    /// Transient channels only, always on; uncovered entities fall back to
    /// repeating their current position.
    pub no_persistent: bool,
    /// Transient channels use global coordinates and a fully-connected graph.
    pub no_egocentric: bool,
    /// Replace the neural switch with the rule `d_min <= beta_out`.
    pub heuristic_switch: bool,
    /// Drop the distance discount from the switch score.
    pub no_discount: bool,
    /// The switch score is the distance discount alone.
    pub discount_only: bool,
    /// Transient channels stay on from the first step.
    pub always_on_transient: bool,
    /// Train without the switch supervision term.
    pub no_switch_loss: bool,
    /// Train with the teacher-forced stage only.
    pub single_stage: bool,
}

pub const ABLATION_NAMES: &[&str] = &[
    "no-transient",
    "no-persistent",
    "no-egocentric",
    "heuristic-switch",
    "no-discount",
    "discount-only",
    "always-on-transient",
    "no-switch-loss",
    "single-stage",
];

impl AblationFlags {
    pub fn set(&mut self, name: &str) -> Result<()> {
        match name {
            "no-transient" => self.no_transient = true,
            "no-persistent" => self.no_persistent = true,
            "no-egocentric" => self.no_egocentric = true,
            "heuristic-switch" => self.heuristic_switch = true,
            "no-discount" => self.no_discount = true,
            "discount-only" => self.discount_only = true,
            "always-on-transient" => self.always_on_transient = true,
            "no-switch-loss" => self.no_switch_loss = true,
            "single-stage" => self.single_stage = true,
            other => {
                return Err(Error::Config(format!(
                    "unknown ablation flag `{other}` (expected one of {ABLATION_NAMES:?})"
                )))
            }
        }
        Ok(())
    }

    pub fn from_names(names: &[String]) -> Result<Self> {
        let mut flags = AblationFlags::default();
        for n in names {
            flags.set(n)?;
        }
        Ok(flags)
    }

    pub fn active(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let pairs: [(bool, &'static str); 9] = [
            (self.no_transient, "no-transient"),
            (self.no_persistent, "no-persistent"),
            (self.no_egocentric, "no-egocentric"),
            (self.heuristic_switch, "heuristic-switch"),
            (self.no_discount, "no-discount"),
            (self.discount_only, "discount-only"),
            (self.always_on_transient, "always-on-transient"),
            (self.no_switch_loss, "no-switch-loss"),
            (self.single_stage, "single-stage"),
        ];
        for (on, name) in pairs {
            if on {
                out.push(name);
            }
        }
        out
    }
}

/// Anchor choice as it appears in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorChoice {
    Centroid,
    Keypoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PtdConfig {
    /// Recurrent state width of both channels.
    pub hidden_width: usize,
    /// Width of every attention/channel message.
    pub message_width: usize,
    /// Hidden width of the switch scorer.
    pub switch_hidden: usize,
    /// Inward edge threshold (attention candidates), scene units.
    pub beta_in: f64,
    /// Outward edge threshold (manipulated objects); must be <= beta_in.
    pub beta_out: f64,
    /// Postdating window: future interaction bits OR-ed into switch labels.
    pub postdate_window: usize,
    pub lambda_human: f64,
    pub lambda_object: f64,
    pub lambda_switch: f64,
    /// Negative slope of the attention score nonlinearity.
    pub attn_slope: f64,
    /// Initial decay rate of the distance discount.
    pub eta_init: f64,
    /// Switch threshold; stored as a parameter but not gradient-trained.
    pub theta_init: f64,
    pub anchor: AnchorChoice,
    /// Keypoint index when `anchor = "keypoint"`.
    pub anchor_keypoint: usize,
    pub ablation: AblationFlags,
}

impl Default for PtdConfig {
    fn default() -> Self {
        PtdConfig {
            hidden_width: 64,
            message_width: 32,
            switch_hidden: 32,
            beta_in: 1.2,
            beta_out: 0.45,
            postdate_window: 3,
            lambda_human: 1.0,
            lambda_object: 1.0,
            lambda_switch: 0.1,
            attn_slope: 0.2,
            eta_init: 1.0,
            theta_init: 0.5,
            anchor: AnchorChoice::Centroid,
            anchor_keypoint: 0,
            ablation: AblationFlags::default(),
        }
    }
}

impl PtdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta_out > self.beta_in {
            return Err(Error::Config(format!(
                "beta_out ({}) must be <= beta_in ({})",
                self.beta_out, self.beta_in
            )));
        }
        if self.lambda_human < 0.0 || self.lambda_object < 0.0 || self.lambda_switch < 0.0 {
            return Err(Error::Config("loss weights must be >= 0".to_string()));
        }
        if self.eta_init <= 0.0 {
            return Err(Error::Config(format!(
                "eta_init must be > 0, got {}",
                self.eta_init
            )));
        }
        if !(self.theta_init > 0.0 && self.theta_init < 1.0) {
            return Err(Error::Config(format!(
                "theta_init must be in (0,1), got {}",
                self.theta_init
            )));
        }
        if self.hidden_width == 0 || self.message_width == 0 || self.switch_hidden == 0 {
            return Err(Error::Config("widths must be positive".to_string()));
        }
        if self.ablation.no_transient && self.ablation.no_persistent {
            return Err(Error::Config(
                "contradictory ablations: no-transient and no-persistent".to_string(),
            ));
        }
        Ok(())
    }

    pub fn distance_anchor(&self) -> DistanceAnchor {
        match self.anchor {
            AnchorChoice::Centroid => DistanceAnchor::Centroid,
            AnchorChoice::Keypoint => DistanceAnchor::Keypoint(self.anchor_keypoint),
        }
    }
}

/// Feature dimensions shared by every scene a model instance works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntityDims {
    pub coord_dim: usize,
    pub keypoints: usize,
    pub human_dim: usize,
    pub object_dim: usize,
}

impl EntityDims {
    pub fn from_scene(scene: &SceneSequence) -> Result<Self> {
        let mut human_dim = None;
        let mut keypoints = None;
        let mut object_dim = None;
        for e in &scene.entities {
            match &e.class {
                EntityClass::Human { keypoints: j } => {
                    if *human_dim.get_or_insert(e.dim) != e.dim
                        || *keypoints.get_or_insert(*j) != *j
                    {
                        return Err(Error::Data(
                            "humans with differing feature dims in one scene".to_string(),
                        ));
                    }
                }
                EntityClass::Object { .. } => {
                    if *object_dim.get_or_insert(e.dim) != e.dim {
                        return Err(Error::Data(
                            "objects with differing feature dims in one scene".to_string(),
                        ));
                    }
                }
            }
        }
        let keypoints = keypoints
            .ok_or_else(|| Error::Data("scene has no human entities".to_string()))?;
        let cd = scene.coord_dim;
        Ok(EntityDims {
            coord_dim: cd,
            keypoints,
            human_dim: human_dim.unwrap(),
            // 2^cd corners per box even when the scene has no objects
            object_dim: object_dim.unwrap_or((1 << cd) * cd),
        })
    }

    pub fn object_points(&self) -> usize {
        self.object_dim / self.coord_dim
    }
}

#[derive(Debug, Clone)]
pub struct PtdModel {
    pub config: PtdConfig,
    pub dims: EntityDims,
}

impl PtdModel {
    pub fn new(config: PtdConfig, dims: EntityDims) -> Result<Self> {
        config.validate()?;
        Ok(PtdModel { config, dims })
    }

    /// Width of a human's persistent RNN input `[x, spatial msg, transient msg]`.
    pub fn human_z_width(&self) -> usize {
        self.dims.human_dim + 2 * self.config.message_width
    }

    /// Width of an object's persistent RNN input `[x, spatial msg]`.
    pub fn object_z_width(&self) -> usize {
        self.dims.object_dim + self.config.message_width
    }

    pub fn switch_layers(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::new(self.config.switch_hidden, Activation::LeakyRelu(0.2)),
            LayerSpec::new(1, Activation::Identity),
        ]
    }

    /// Register every learnable weight under its dotted name. Seeded and
    /// order-fixed, so the same seed always yields the same initialization.
    pub fn init_params(&self, seed: u64) -> Result<ParamSet> {
        let cfg = &self.config;
        let d = &self.dims;
        let h = cfg.hidden_width;
        let msg = cfg.message_width;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();

        // Persistent channel: per-class query/value embeddings over [x; h],
        // one shared scoring layer.
        for (class, dim) in [("human", d.human_dim), ("object", d.object_dim)] {
            let in_w = dim + h;
            p.insert(
                &format!("persistent.attn.query.{class}.w"),
                init_uniform(&mut rng, vec![msg, in_w], in_w),
            )?;
            p.insert(
                &format!("persistent.attn.value.{class}.w"),
                init_uniform(&mut rng, vec![msg, in_w], in_w),
            )?;
        }
        init_affine(&mut p, &mut rng, "persistent.attn.score", 2 * msg, 1)?;
        init_gru(&mut p, &mut rng, "persistent.human.gru", self.human_z_width(), h)?;
        init_gru(&mut p, &mut rng, "persistent.object.gru", self.object_z_width(), h)?;
        init_affine(&mut p, &mut rng, "persistent.human.to_transient", h, msg)?;
        init_affine(&mut p, &mut rng, "persistent.human.predict", h, d.human_dim)?;
        init_affine(&mut p, &mut rng, "persistent.object.predict", h, d.object_dim)?;

        // Transient channel: center is always a human, leaves are objects.
        p.insert(
            "transient.attn.query.w",
            init_uniform(&mut rng, vec![msg, d.human_dim + h], d.human_dim + h),
        )?;
        p.insert(
            "transient.attn.value.w",
            init_uniform(&mut rng, vec![msg, d.object_dim + h], d.object_dim + h),
        )?;
        init_affine(&mut p, &mut rng, "transient.attn.score", 2 * msg, 1)?;
        init_gru(
            &mut p,
            &mut rng,
            "transient.center.gru",
            d.human_dim + 2 * msg,
            h,
        )?;
        init_gru(&mut p, &mut rng, "transient.leaf.gru", d.object_dim + msg, h)?;
        init_affine(&mut p, &mut rng, "transient.broadcast", d.human_dim + h, msg)?;
        init_affine(&mut p, &mut rng, "transient.to_persistent", h, msg)?;
        init_affine(&mut p, &mut rng, "transient.center.predict", h, d.human_dim)?;
        init_affine(&mut p, &mut rng, "transient.leaf.predict", h, d.object_dim)?;

        // Switch scorer over [h; z] of the persistent RNN.
        init_mlp(
            &mut p,
            &mut rng,
            "switch.mlp",
            h + self.human_z_width(),
            &self.switch_layers(),
        )?;

        p.insert("eta", Tensor::scalar(cfg.eta_init))?;
        p.insert("theta", Tensor::scalar(cfg.theta_init))?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_valid() {
        PtdConfig::default().validate().unwrap();
    }

    #[test]
    fn contradictory_ablations_rejected() {
        let mut cfg = PtdConfig::default();
        cfg.ablation.no_transient = true;
        cfg.ablation.no_persistent = true;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn beta_order_enforced() {
        let cfg = PtdConfig {
            beta_in: 0.3,
            beta_out: 0.5,
            ..PtdConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_ablation_name_rejected() {
        let mut f = AblationFlags::default();
        assert!(f.set("no-such-flag").is_err());
        f.set("no-transient").unwrap();
        assert_eq!(f.active(), vec!["no-transient"]);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let dims = EntityDims {
            coord_dim: 2,
            keypoints: 5,
            human_dim: 10,
            object_dim: 8,
        };
        let model = PtdModel::new(PtdConfig::default(), dims).unwrap();
        let a = model.init_params(9).unwrap();
        let b = model.init_params(9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scalar("theta").unwrap(), 0.5);
        assert!(a.contains("persistent.human.gru.wz"));
        assert!(a.contains("transient.leaf.predict.b"));
    }
}
