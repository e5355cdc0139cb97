//! Scene sequences: per-entity class labels and per-frame feature vectors,
//! plus the line-delimited scene file format.
//!
//! Humans carry flattened keypoints (`keypoints * coord_dim` values per
//! frame), objects carry flattened box corners (`2^coord_dim * coord_dim`
//! values). Ground-truth interaction windows, when known, ride along in the
//! footer records.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum EntityClass {
    Human { keypoints: usize },
    Object { type_label: String },
}

impl EntityClass {
    pub fn is_human(&self) -> bool {
        matches!(self, EntityClass::Human { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: usize,
    pub class: EntityClass,
    /// Feature dimension, constant over the sequence.
    pub dim: usize,
}

/// A ground-truth interaction: `human` manipulates `object` over the closed
/// frame range `[t_start, t_end]` (0-based frame indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteractionWindow {
    pub human: usize,
    pub object: usize,
    pub t_start: usize,
    pub t_end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSequence {
    pub coord_dim: usize,
    pub entities: Vec<Entity>,
    /// `frames[t][entity_index]` is that entity's flat feature vector.
    pub frames: Vec<Vec<Vec<f64>>>,
    pub t_obs: usize,
    pub l_pred: usize,
    /// Ground-truth interaction windows; empty when unknown.
    pub windows: Vec<InteractionWindow>,
}

impl SceneSequence {
    pub fn validate(&self) -> Result<()> {
        if self.t_obs < 2 {
            return Err(Error::Data(format!("t_obs must be >= 2, got {}", self.t_obs)));
        }
        if self.l_pred < 1 {
            return Err(Error::Data(format!(
                "l_pred must be >= 1, got {}",
                self.l_pred
            )));
        }
        if self.frames.len() < self.t_obs {
            return Err(Error::Data(format!(
                "scene has {} frames, fewer than t_obs={}",
                self.frames.len(),
                self.t_obs
            )));
        }
        for (t, frame) in self.frames.iter().enumerate() {
            if frame.len() != self.entities.len() {
                return Err(Error::Data(format!(
                    "frame {t} has {} entities, expected {}",
                    frame.len(),
                    self.entities.len()
                )));
            }
            for (e, feats) in frame.iter().enumerate() {
                if feats.len() != self.entities[e].dim {
                    return Err(Error::Data(format!(
                        "frame {t} entity {e}: {} features, expected {}",
                        feats.len(),
                        self.entities[e].dim
                    )));
                }
            }
        }
        for w in &self.windows {
            if w.t_end < w.t_start || w.t_end >= self.frames.len() {
                return Err(Error::Data(format!(
                    "interaction window [{}, {}] out of range",
                    w.t_start, w.t_end
                )));
            }
        }
        Ok(())
    }

    pub fn human_indices(&self) -> Vec<usize> {
        self.entities
            .iter()
            .enumerate()
            .filter(|(_, e)| e.class.is_human())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn object_indices(&self) -> Vec<usize> {
        self.entities
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.class.is_human())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn entity_index(&self, id: usize) -> Option<usize> {
        self.entities.iter().position(|e| e.id == id)
    }

    /// Per-entity features at frame `t`.
    pub fn features(&self, t: usize, entity: usize) -> &[f64] {
        &self.frames[t][entity]
    }

    // ── Scene file format ────────────────────────────────────────────
    //
    // Line-delimited records:
    //   scene <coord_dim> <t_obs> <l_pred> <n_frames> <n_entities>
    //   entity <id> human <keypoints>
    //   entity <id> object <type_label>
    //   frame <t> <features of entity 0> <features of entity 1> ...
    //   window <human_id> <object_id> <t_start> <t_end>
    //   end

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "scene {} {} {} {} {}",
            self.coord_dim,
            self.t_obs,
            self.l_pred,
            self.frames.len(),
            self.entities.len()
        )
        .unwrap();
        for e in &self.entities {
            match &e.class {
                EntityClass::Human { keypoints } => {
                    writeln!(s, "entity {} human {}", e.id, keypoints).unwrap()
                }
                EntityClass::Object { type_label } => {
                    writeln!(s, "entity {} object {}", e.id, type_label).unwrap()
                }
            }
        }
        for (t, frame) in self.frames.iter().enumerate() {
            write!(s, "frame {t}").unwrap();
            for feats in frame {
                for v in feats {
                    write!(s, " {v}").unwrap();
                }
            }
            s.push('\n');
        }
        for w in &self.windows {
            writeln!(s, "window {} {} {} {}", w.human, w.object, w.t_start, w.t_end).unwrap();
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let bad = |n: usize, msg: &str| Error::Data(format!("scene file line {}: {msg}", n + 1));

        let (n0, header) = lines
            .next()
            .ok_or_else(|| Error::Data("empty scene file".to_string()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 || h[0] != "scene" {
            return Err(bad(n0, "expected `scene <coord_dim> <t_obs> <l_pred> <n_frames> <n_entities>`"));
        }
        let parse = |n: usize, s: &str| -> Result<usize> {
            s.parse().map_err(|_| bad(n, &format!("bad integer `{s}`")))
        };
        let coord_dim = parse(n0, h[1])?;
        let t_obs = parse(n0, h[2])?;
        let l_pred = parse(n0, h[3])?;
        let n_frames = parse(n0, h[4])?;
        let n_entities = parse(n0, h[5])?;

        let mut entities = Vec::with_capacity(n_entities);
        for _ in 0..n_entities {
            let (n, line) = lines.next().ok_or_else(|| bad(n0, "truncated entity records"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() < 4 || f[0] != "entity" {
                return Err(bad(n, "expected `entity <id> <class> ...`"));
            }
            let id = parse(n, f[1])?;
            let class = match f[2] {
                "human" => EntityClass::Human {
                    keypoints: parse(n, f[3])?,
                },
                "object" => EntityClass::Object {
                    type_label: f[3].to_string(),
                },
                other => return Err(bad(n, &format!("unknown entity class `{other}`"))),
            };
            let dim = match &class {
                EntityClass::Human { keypoints } => keypoints * coord_dim,
                EntityClass::Object { .. } => (1 << coord_dim) * coord_dim,
            };
            entities.push(Entity { id, class, dim });
        }

        let frame_width: usize = entities.iter().map(|e| e.dim).sum();
        let mut frames = Vec::with_capacity(n_frames);
        for _ in 0..n_frames {
            let (n, line) = lines.next().ok_or_else(|| bad(n0, "truncated frame records"))?;
            let mut f = line.split_whitespace();
            if f.next() != Some("frame") {
                return Err(bad(n, "expected `frame <t> <values...>`"));
            }
            let _t = f.next().ok_or_else(|| bad(n, "missing frame index"))?;
            let values: Vec<f64> = f
                .map(|s| s.parse().map_err(|_| bad(n, &format!("bad float `{s}`"))))
                .collect::<Result<_>>()?;
            if values.len() != frame_width {
                return Err(bad(
                    n,
                    &format!("{} values, expected {frame_width}", values.len()),
                ));
            }
            let mut frame = Vec::with_capacity(entities.len());
            let mut off = 0;
            for e in &entities {
                frame.push(values[off..off + e.dim].to_vec());
                off += e.dim;
            }
            frames.push(frame);
        }

        let mut windows = Vec::new();
        for (n, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.first().copied() {
                Some("window") => {
                    if f.len() != 5 {
                        return Err(bad(n, "expected `window <human> <object> <t_start> <t_end>`"));
                    }
                    windows.push(InteractionWindow {
                        human: parse(n, f[1])?,
                        object: parse(n, f[2])?,
                        t_start: parse(n, f[3])?,
                        t_end: parse(n, f[4])?,
                    });
                }
                Some("end") => break,
                Some(other) => return Err(bad(n, &format!("unexpected record `{other}`"))),
                None => continue,
            }
        }

        let scene = SceneSequence {
            coord_dim,
            entities,
            frames,
            t_obs,
            l_pred,
            windows,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

/// Arithmetic-mean centroid of a flat point list (`points * coord_dim`).
pub fn centroid(features: &[f64], coord_dim: usize) -> Vec<f64> {
    let n = features.len() / coord_dim;
    let mut c = vec![0.0; coord_dim];
    for p in 0..n {
        for d in 0..coord_dim {
            c[d] += features[p * coord_dim + d];
        }
    }
    for v in &mut c {
        *v /= n as f64;
    }
    c
}

/// Anchor point used for center-leaf distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceAnchor {
    /// Mean of the human's keypoints (the default).
    Centroid,
    /// A single named keypoint, e.g. a hand.
    Keypoint(usize),
}

pub fn anchor_point(features: &[f64], coord_dim: usize, anchor: DistanceAnchor) -> Vec<f64> {
    match anchor {
        DistanceAnchor::Centroid => centroid(features, coord_dim),
        DistanceAnchor::Keypoint(k) => features[k * coord_dim..(k + 1) * coord_dim].to_vec(),
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
