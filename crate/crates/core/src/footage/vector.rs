use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the five emotion spaces a footage record carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Scene,
    Face,
    TextSelf,
    TextReact,
    Audio,
}

impl Modality {
    /// Schema order, also the on-disk payload order.
    pub const ALL: [Modality; 5] =
        [Modality::Scene, Modality::Face, Modality::TextSelf, Modality::TextReact, Modality::Audio];

    pub fn index(self) -> usize {
        match self {
            Modality::Scene => 0,
            Modality::Face => 1,
            Modality::TextSelf => 2,
            Modality::TextReact => 3,
            Modality::Audio => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Scene => "scene",
            Modality::Face => "face",
            Modality::TextSelf => "text_self",
            Modality::TextReact => "text_react",
            Modality::Audio => "audio",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown modality {s:?}")))
    }
}

/// A finite real vector living in one modality's emotion space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionVector {
    modality: Modality,
    values: Vec<f64>,
}

impl EmotionVector {
    pub fn new(modality: Modality, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Schema(format!("{modality} vector has dim 0")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Schema(format!("{modality} vector has non-finite value {} at index {i}", values[i])));
        }
        Ok(EmotionVector { modality, values })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Multiplies every component by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        EmotionVector::new(self.modality, self.values.iter().map(|v| v * factor).collect())
    }

    /// Unit-norm copy; the zero vector is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        EmotionVector { modality: self.modality, values: self.values.iter().map(|v| v / n).collect() }
    }
}

/// Per-modality dimensions registered for a library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    dims: [u32; 5],
}

impl Schema {
    pub fn new(dims: [u32; 5]) -> Result<Self> {
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Schema(format!("{} dim is 0", Modality::ALL[i])));
        }
        Ok(Schema { dims })
    }

    /// Same dim for every modality.
    pub fn uniform(dim: u32) -> Result<Self> {
        Schema::new([dim; 5])
    }

    pub fn dims(&self) -> [u32; 5] {
        self.dims
    }

    pub fn dim(&self, modality: Modality) -> usize {
        self.dims[modality.index()] as usize
    }

    /// Width of the concatenated text vector (self ‖ react).
    pub fn text_dim(&self) -> usize {
        self.dim(Modality::TextSelf) + self.dim(Modality::TextReact)
    }

    pub fn check(&self, v: &EmotionVector) -> Result<()> {
        let want = self.dim(v.modality());
        if v.dim() != want {
            return Err(Error::Schema(format!("{} vector has dim {}, schema registers {want}", v.modality(), v.dim())));
        }
        Ok(())
    }
}

impl Default for Schema {
    fn default() -> Self {
        Schema { dims: [8; 5] }
    }
}
