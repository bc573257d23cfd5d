use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::EXTENDED_DIM;

/// Environment conditions. Slip only corrupts the drive-pressure reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionProfile {
    pub name: String,
    pub slip: f64,
    pub material_stiffness: f64,
    pub pile_distance_range: [f64; 2],
    pub sensor_noise_std: [f64; EXTENDED_DIM],
    pub surface_drag: f64,
}

const DEFAULT_NOISE: [f64; EXTENDED_DIM] = [0.005, 0.005, 1.5, 1.5, 1.0, 1.0, 0.01];

impl ConditionProfile {
    pub fn summer() -> Self {
        Self {
            name: "summer".into(),
            slip: 0.0,
            material_stiffness: 3.0,
            pile_distance_range: [1.0, 5.0],
            sensor_noise_std: DEFAULT_NOISE,
            surface_drag: 0.4,
        }
    }

    /// Icy ground: heavy slip, frozen and slightly stiffer material.
    pub fn winter_ice() -> Self {
        Self {
            name: "winter_ice".into(),
            slip: 0.6,
            material_stiffness: 3.6,
            surface_drag: 0.3,
            ..Self::summer()
        }
    }

    /// Snow over the pile: moderate slip, stiffer pile.
    pub fn winter_snow() -> Self {
        Self {
            name: "winter_snow".into(),
            slip: 0.3,
            material_stiffness: 3.9,
            surface_drag: 0.5,
            ..Self::summer()
        }
    }

    pub const BUILTIN: [&'static str; 3] = ["summer", "winter_ice", "winter_snow"];

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "summer" => Ok(Self::summer()),
            "winter_ice" | "winter" => Ok(Self::winter_ice()),
            "winter_snow" => Ok(Self::winter_snow()),
            other => Err(Error::InvalidArgument(format!(
                "unknown condition {other:?} (expected one of {:?} or a profile file)",
                Self::BUILTIN
            ))),
        }
    }

    /// A built-in name, or a path to a profile file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        let p = Path::new(name_or_path);
        if p.is_file() {
            Self::load(p)
        } else {
            Self::builtin(name_or_path)
        }
    }

    pub fn without_noise(mut self) -> Self {
        self.sensor_noise_std = [0.0; EXTENDED_DIM];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("condition {}: {m}", self.name)));
        if !(0.0..1.0).contains(&self.slip) {
            return bad(format!("slip {} outside [0, 1)", self.slip));
        }
        if !(self.material_stiffness > 0.0) {
            return bad(format!("material_stiffness {} must be positive", self.material_stiffness));
        }
        let [lo, hi] = self.pile_distance_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("pile_distance_range [{lo}, {hi}] invalid"));
        }
        if self.sensor_noise_std.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("sensor_noise_std must be finite and non-negative".into());
        }
        if !(self.surface_drag >= 0.0) {
            return bad(format!("surface_drag {} must be non-negative", self.surface_drag));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile fields serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("condition profile: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}
