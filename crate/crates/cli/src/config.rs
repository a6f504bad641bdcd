//! Run configuration: a `key = value` file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use irmrf::bgsub;
use irmrf::detect;
use irmrf::icm::{VariantTag, DEFAULT_MAX_SWEEPS};
use irmrf::io::KeyValues;
use sha2::{Digest, Sha256};

use crate::Failure;

/// Scene families produced by `synth`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scene {
    Planted,
    Poles,
    Sequence,
    CleanSequence,
}

impl Scene {
    pub fn as_str(self) -> &'static str {
        match self {
            Scene::Planted => "planted",
            Scene::Poles => "poles",
            Scene::Sequence => "sequence",
            Scene::CleanSequence => "clean-sequence",
        }
    }
}

impl std::str::FromStr for Scene {
    type Err = Failure;

    fn from_str(s: &str) -> Result<Self, Failure> {
        match s {
            "planted" => Ok(Scene::Planted),
            "poles" => Ok(Scene::Poles),
            "sequence" => Ok(Scene::Sequence),
            "clean-sequence" => Ok(Scene::CleanSequence),
            other => Err(Failure::config(format!("unknown scene `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variant: VariantTag,
    pub models: Option<PathBuf>,
    pub ladder: usize,
    pub min_area: usize,
    pub bg_t: usize,
    pub bg_sigma: f64,
    pub bg_tau: f64,
    pub seed: u64,
    pub detect_delta: f64,
    pub max_sweeps: usize,
    pub scene: Scene,
    pub frames: usize,
    pub boxes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: VariantTag::SarAuto,
            models: None,
            ladder: detect::DEFAULT_LADDER_LEN,
            min_area: detect::DEFAULT_MIN_AREA,
            bg_t: bgsub::DEFAULT_HISTORY,
            bg_sigma: bgsub::DEFAULT_SIGMA,
            bg_tau: bgsub::DEFAULT_TAU,
            seed: 0,
            detect_delta: 0.0,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            scene: Scene::Planted,
            frames: 20,
            boxes: 2,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, Failure> {
    raw.parse()
        .map_err(|_| Failure::config(format!("`{key}`: cannot parse `{raw}`")))
}

impl RunConfig {
    /// Apply every key of a config file. Unknown keys are rejected.
    /// Relative model paths resolve against `base`.
    pub fn apply_kv(&mut self, kv: &KeyValues, base: &Path) -> Result<(), Failure> {
        for key in kv.keys() {
            let raw = kv.get(key).unwrap_or_default();
            match key {
                "variant" => self.variant = raw.parse()?,
                "models" => self.models = Some(base.join(raw)),
                "ladder" => self.ladder = parse(key, raw)?,
                "min_area" => self.min_area = parse(key, raw)?,
                "bg_T" => self.bg_t = parse(key, raw)?,
                "bg_sigma" => self.bg_sigma = parse(key, raw)?,
                "bg_tau" => self.bg_tau = parse(key, raw)?,
                "seed" => self.seed = parse(key, raw)?,
                "detect_delta" => self.detect_delta = parse(key, raw)?,
                "max_sweeps" => self.max_sweeps = parse(key, raw)?,
                "scene" => self.scene = raw.parse()?,
                "frames" => self.frames = parse(key, raw)?,
                "boxes" => self.boxes = parse(key, raw)?,
                other => return Err(Failure::config(format!("unknown config key `{other}`"))),
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let mut cfg = Self::default();
        cfg.apply_kv(&KeyValues::read(path)?, path.parent().unwrap_or(Path::new(".")))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |m: &str| Err(Failure::config(m.to_string()));
        if self.ladder == 0 {
            return bad("ladder must have at least one threshold");
        }
        if self.min_area == 0 {
            return bad("min_area must be >= 1");
        }
        if self.bg_t == 0 {
            return bad("bg_T must be >= 1");
        }
        if !(self.bg_sigma > 0.0 && self.bg_sigma.is_finite()) {
            return bad("bg_sigma must be positive");
        }
        if !(self.bg_tau > 0.0 && self.bg_tau <= 1.0) {
            return bad("bg_tau must lie in (0, 1]");
        }
        if !self.detect_delta.is_finite() {
            return bad("detect_delta must be finite");
        }
        if self.max_sweeps == 0 {
            return bad("max_sweeps must be >= 1");
        }
        if self.frames == 0 {
            return bad("frames must be >= 1");
        }
        Ok(())
    }

    /// The effective configuration in config-file form.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("variant", self.variant)
            .set("ladder", self.ladder)
            .set("min_area", self.min_area)
            .set("bg_T", self.bg_t)
            .set("bg_sigma", self.bg_sigma)
            .set("bg_tau", self.bg_tau)
            .set("seed", self.seed)
            .set("detect_delta", self.detect_delta)
            .set("max_sweeps", self.max_sweeps)
            .set("scene", self.scene.as_str())
            .set("frames", self.frames)
            .set("boxes", self.boxes);
        if let Some(m) = &self.models {
            kv.set("models", m.display());
        }
        kv
    }

    /// SHA-256 of the effective configuration text, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_kv().to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
