//! Training configuration shared by every imputation method.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Imputation method, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "gain")]
    Gain,
    #[serde(rename = "gain+vs")]
    GainVs,
    #[serde(rename = "vae")]
    Vae,
    #[serde(rename = "vae+it")]
    VaeIt,
    #[serde(rename = "vae+bp")]
    VaeBp,
    #[serde(rename = "vae+vs")]
    VaeVs,
    #[serde(rename = "vae+vs+it")]
    VaeVsIt,
    #[serde(rename = "vae+vs+bp")]
    VaeVsBp,
}

/// How a trained VAE fills the test partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VaeProcedure {
    Plain,
    Iterative,
    Backprop,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Gain,
        Method::GainVs,
        Method::Vae,
        Method::VaeIt,
        Method::VaeBp,
        Method::VaeVs,
        Method::VaeVsIt,
        Method::VaeVsBp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gain => "gain",
            Method::GainVs => "gain+vs",
            Method::Vae => "vae",
            Method::VaeIt => "vae+it",
            Method::VaeBp => "vae+bp",
            Method::VaeVs => "vae+vs",
            Method::VaeVsIt => "vae+vs+it",
            Method::VaeVsBp => "vae+vs+bp",
        }
    }

    /// Label used in report tables, e.g. `VAE+vs+it`.
    pub fn display_name(self) -> &'static str {
        match self {
            Method::Gain => "GAIN",
            Method::GainVs => "GAIN+vs",
            Method::Vae => "VAE",
            Method::VaeIt => "VAE+it",
            Method::VaeBp => "VAE+bp",
            Method::VaeVs => "VAE+vs",
            Method::VaeVsIt => "VAE+vs+it",
            Method::VaeVsBp => "VAE+vs+bp",
        }
    }

    pub fn is_gain(self) -> bool {
        matches!(self, Method::Gain | Method::GainVs)
    }

    pub fn variable_split(self) -> bool {
        matches!(
            self,
            Method::GainVs | Method::VaeVs | Method::VaeVsIt | Method::VaeVsBp
        )
    }

    pub fn vae_procedure(self) -> Option<VaeProcedure> {
        match self {
            Method::Gain | Method::GainVs => None,
            Method::Vae | Method::VaeVs => Some(VaeProcedure::Plain),
            Method::VaeIt | Method::VaeVsIt => Some(VaeProcedure::Iterative),
            Method::VaeBp | Method::VaeVsBp => Some(VaeProcedure::Backprop),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == key)
            .ok_or_else(|| Error::Invalid(format!("unknown method `{s}`")))
    }
}

/// Hidden layer widths as fractions of the input size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayout(pub Vec<f64>);

impl HiddenLayout {
    pub fn none() -> Self {
        HiddenLayout(vec![])
    }

    /// Widths for an input of `size` features; every layer keeps at least one unit.
    pub fn widths(&self, size: usize) -> Vec<usize> {
        self.0.iter().map(|f| fraction_of(*f, size)).collect()
    }
}

impl fmt::Display for HiddenLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("none");
        }
        let parts: Vec<String> = self.0.iter().map(|v| format!("{}", v * 100.0)).collect();
        f.write_str(&parts.join("-"))
    }
}

impl FromStr for HiddenLayout {
    type Err = Error;

    /// `none`, or percentages joined by `-`, e.g. `50` or `100-50`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") || s.is_empty() {
            return Ok(HiddenLayout::none());
        }
        s.split('-')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| *v > 0.0 && v.is_finite())
                    .map(|v| v / 100.0)
                    .ok_or_else(|| Error::Invalid(format!("bad hidden layout `{s}`")))
            })
            .collect::<Result<_>>()
            .map(HiddenLayout)
    }
}

pub(crate) fn fraction_of(fraction: f64, size: usize) -> usize {
    ((fraction * size as f64).round() as usize).max(1)
}

/// Full configuration of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub method: Method,
    /// Hidden layers of every stack; `None` picks the method default.
    pub hidden: Option<HiddenLayout>,
    pub latent_fraction: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub tau: f64,
    pub alpha: f64,
    pub i_max: usize,
    pub e_min: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Learning rate of the input optimizer in backprop imputation.
    pub bp_lr: f64,
    /// Discriminator loss over missing positions only, instead of all.
    pub dloss_missing_only: bool,
    /// Categorical embedding widths for split inputs; `None` uses `s_j`.
    pub embedding_dims: Option<Vec<usize>>,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            method: Method::Vae,
            hidden: None,
            latent_fraction: 0.5,
            batch_size: 64,
            lr: 1e-3,
            tau: 1.0,
            alpha: 10.0,
            i_max: 10_000,
            e_min: 1e-4,
            epochs: 200,
            seed: 0,
            bp_lr: 1e-2,
            dloss_missing_only: false,
            embedding_dims: None,
        }
    }
}

impl HyperParams {
    pub fn for_method(method: Method) -> Self {
        HyperParams {
            method,
            ..HyperParams::default()
        }
    }

    /// Hidden layout actually used: GAIN defaults to two layers as wide as the
    /// input, the VAEs to one layer of half the input.
    pub fn hidden_layout(&self) -> HiddenLayout {
        self.hidden.clone().unwrap_or_else(|| {
            if self.method.is_gain() {
                HiddenLayout(vec![1.0, 1.0])
            } else {
                HiddenLayout(vec![0.5])
            }
        })
    }

    pub fn latent_dim(&self, size: usize) -> usize {
        fraction_of(self.latent_fraction, size)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Invalid(m));
        if self.batch_size == 0 {
            return fail("batch size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.tau > 0.0) {
            return fail(format!("temperature {} must be positive", self.tau));
        }
        if !(self.alpha >= 0.0) {
            return fail(format!("alpha {} must be non-negative", self.alpha));
        }
        if !(self.latent_fraction > 0.0) {
            return fail(format!(
                "latent fraction {} must be positive",
                self.latent_fraction
            ));
        }
        if self.i_max == 0 {
            return fail("i_max must be at least 1".into());
        }
        if !(self.e_min > 0.0) {
            return fail(format!("e_min {} must be positive", self.e_min));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if !(self.bp_lr > 0.0) {
            return fail(format!(
                "backprop learning rate {} must be positive",
                self.bp_lr
            ));
        }
        Ok(())
    }
}
