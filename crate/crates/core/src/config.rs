//! Experiment configuration, read from TOML.
//!
//! Every field has a default, so an empty file is a valid configuration and
//! a file only needs the keys it changes:
//!
//! ```toml
//! seed = 7
//! phantoms = ["cross", "v"]
//!
//! [aadmm]
//! mu = 5000.0
//!
//! [depiht.phase1]
//! k_max = 20
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::ForwardConfig;
use crate::geometry::{PixelGrid, SensorGeometry};
use crate::phantom::PhantomKind;
use crate::solvers::{AadmmParams, DepihtParams, LandweberParams, Method};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub electrodes: usize,
    /// Vessel diameter in mm.
    pub diameter: f64,
    /// Angular span of each electrode in degrees.
    pub span: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            electrodes: 8,
            diameter: 76.0,
            span: 30.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Per-channel signal-to-noise ratio in dB; `inf` disables noise.
    pub snr_db: f64,
    /// Frames averaged into one measurement.
    pub frames: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            snr_db: 35.0,
            frames: 1000,
        }
    }
}

/// Which image the fluctuation metric is computed on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdBasis {
    /// Min-max normalize every method's image first.
    #[default]
    Normalized,
    /// Use each method's image as delivered: LI and AADMM are normalized,
    /// the DEPIHT stage is not renormalized.
    Delivered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Binarization level for the thresholded images.
    pub threshold: f64,
    pub sd_basis: SdBasis,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            threshold: 0.1,
            sd_basis: SdBasis::Normalized,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Pixels per side of the reconstruction grid.
    pub grid_side: usize,
    pub phantoms: Vec<PhantomKind>,
    pub methods: Vec<Method>,
    pub sensor: SensorConfig,
    pub forward: ForwardConfig,
    pub noise: NoiseConfig,
    pub landweber: LandweberParams,
    pub aadmm: AadmmParams,
    pub depiht: DepihtParams,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2018,
            grid_side: 48,
            phantoms: PhantomKind::ALL.to_vec(),
            methods: vec![Method::Li, Method::Aadmm, Method::AadmmDepiht],
            sensor: SensorConfig::default(),
            forward: ForwardConfig::default(),
            noise: NoiseConfig::default(),
            landweber: LandweberParams::default(),
            aadmm: AadmmParams::default(),
            depiht: DepihtParams::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        if self.grid_side < 2 {
            return Err(Error::Config(format!("grid_side must be >= 2, got {}", self.grid_side)));
        }
        if self.forward.refine == 0 {
            return Err(Error::Config("forward.refine must be >= 1".into()));
        }
        if !(self.forward.eps_high > self.forward.eps_low && self.forward.eps_low >= 1.0) {
            return Err(Error::Config("forward permittivities need 1 <= eps_low < eps_high".into()));
        }
        if self.noise.frames == 0 {
            return Err(Error::Config("noise.frames must be >= 1".into()));
        }
        if self.noise.snr_db.is_nan() {
            return Err(Error::Config("noise.snr_db must be a number".into()));
        }
        if self.phantoms.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("phantoms and methods must be non-empty".into()));
        }
        if !(self.metrics.threshold > 0.0 && self.metrics.threshold < 1.0) {
            return Err(Error::Config("metrics.threshold must lie in (0, 1)".into()));
        }
        self.landweber.validate()?;
        self.aadmm.validate()?;
        self.depiht.phase1.validate()?;
        self.depiht.phase2.validate()?;
        if let Some(q) = self.depiht.q {
            if !(q > 0.0) {
                return Err(Error::Config(format!("depiht.q must be positive, got {q}")));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<SensorGeometry> {
        SensorGeometry::new(self.sensor.electrodes, self.sensor.diameter, self.sensor.span)
    }

    pub fn grid(&self) -> Result<PixelGrid> {
        PixelGrid::new(self.grid_side, &self.geometry()?)
    }
}
