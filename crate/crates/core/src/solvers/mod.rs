//! Reconstruction algorithms.

mod aadmm;
mod baseline;
mod depiht;

pub use aadmm::{aadmm_solve, augmented_lagrangian, tv_objective, AadmmParams, AadmmRun};
pub use baseline::{landweber, lbp, LandweberParams};
pub use depiht::{
    depiht, epiht_run, g_value, grad_g, h_value, prox_step, surrogate_value, DepihtParams, DepihtRun,
    EpihtParams, EpihtRun, NuPolicy, ThresholdOperator,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::PermittivityImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Lbp,
    Li,
    Aadmm,
    EpihtI,
    EpihtII,
    Depiht,
    AadmmDepiht,
    LiDepiht,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lbp => "lbp",
            Method::Li => "li",
            Method::Aadmm => "aadmm",
            Method::EpihtI => "epiht-i",
            Method::EpihtII => "epiht-ii",
            Method::Depiht => "depiht",
            Method::AadmmDepiht => "aadmm-depiht",
            Method::LiDepiht => "li-depiht",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            Method::Lbp,
            Method::Li,
            Method::Aadmm,
            Method::EpihtI,
            Method::EpihtII,
            Method::Depiht,
            Method::AadmmDepiht,
            Method::LiDepiht,
        ];
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let key = if key == "landweber" { "li".to_string() } else { key };
        all.into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::param(format!("unknown method `{s}`")))
    }
}

/// One entry of a solver's convergence history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord {
    /// `||S g - lambda||_2` at the iterate.
    pub residual: f64,
    /// The method's own objective at the iterate.
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconResult {
    pub image: PermittivityImage,
    pub history: Vec<IterRecord>,
    /// Wall-clock seconds spent in the solver.
    pub elapsed: f64,
    pub method: Method,
    pub params: BTreeMap<String, String>,
}

impl ReconResult {
    pub fn final_residual(&self) -> Option<f64> {
        self.history.last().map(|r| r.residual)
    }
}

macro_rules! snapshot {
    ($($key:ident),* $(,)?) => {{
        let mut m = ::std::collections::BTreeMap::new();
        $( m.insert(stringify!($key).to_string(), format!("{:?}", $key)); )*
        m
    }};
}
pub(crate) use snapshot;

pub(crate) fn residual_norm(sg: &[f64], lambda: &[f64]) -> f64 {
    sg.iter()
        .zip(lambda)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}
