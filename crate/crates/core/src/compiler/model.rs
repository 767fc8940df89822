//! Model descriptions: per-layer GNN descriptors plus the weights they use.
//!
//! On disk a model is a TOML document:
//!
//! ```toml
//! spec_version = 1
//! name = "gcn2"
//!
//! [[layers]]
//! kind = "gcn"          # gcn | sage | gin | sgc
//! f_in = 64
//! f_out = 64
//! aggregation = "sum"   # sum | mean (max | min are rejected at compile time)
//! activation = "relu"   # relu | prelu | none
//! prelu_slope = 0.25    # prelu only
//! gin_epsilon = 0.0     # gin only
//! sgc_hops = 2          # sgc only
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Activation, DenseMatrix};

pub const MODEL_SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gcn,
    Sage,
    Gin,
    Sgc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Mean,
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    #[default]
    Relu,
    Prelu,
    None,
}

fn default_slope() -> f32 {
    0.25
}

fn default_hops() -> usize {
    2
}

fn default_aggregation() -> Aggregation {
    Aggregation::Sum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: ModelKind,
    pub f_in: usize,
    pub f_out: usize,
    #[serde(default = "default_aggregation")]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub activation: ActivationKind,
    #[serde(default = "default_slope")]
    pub prelu_slope: f32,
    #[serde(default)]
    pub gin_epsilon: f32,
    #[serde(default = "default_hops")]
    pub sgc_hops: usize,
}

impl LayerSpec {
    pub fn new(kind: ModelKind, f_in: usize, f_out: usize) -> Self {
        Self {
            kind,
            f_in,
            f_out,
            aggregation: Aggregation::Sum,
            activation: ActivationKind::Relu,
            prelu_slope: default_slope(),
            gin_epsilon: 0.0,
            sgc_hops: default_hops(),
        }
    }

    pub fn with_activation(mut self, activation: ActivationKind) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    pub fn activation_fn(&self) -> Activation {
        match self.activation {
            ActivationKind::Relu => Activation::Relu,
            ActivationKind::Prelu => Activation::Prelu {
                slope: self.prelu_slope,
            },
            ActivationKind::None => Activation::Identity,
        }
    }

    /// Weight names and shapes this layer needs, in kernel order.
    pub fn weight_shapes(&self, layer: usize) -> Vec<(String, usize, usize)> {
        let (i, o) = (self.f_in, self.f_out);
        match self.kind {
            ModelKind::Gcn | ModelKind::Sgc => vec![(format!("l{layer}.w"), i, o)],
            ModelKind::Sage => vec![
                (format!("l{layer}.w_neigh"), i, o),
                (format!("l{layer}.w_self"), i, o),
            ],
            ModelKind::Gin => vec![
                (format!("l{layer}.w1"), i, o),
                (format!("l{layer}.w2"), o, o),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub spec_version: u32,
    #[serde(default)]
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>) -> Self {
        Self {
            spec_version: MODEL_SPEC_VERSION,
            name: name.into(),
            layers,
        }
    }

    /// Built-in two-layer models: `gcn2`, `sage2`, `gin2`, `sgc2`. The first
    /// layer uses ReLU, the last has no activation.
    pub fn zoo(id: &str, f_in: usize, hidden: usize, f_out: usize) -> Result<Self> {
        let two = |kind| {
            vec![
                LayerSpec::new(kind, f_in, hidden),
                LayerSpec::new(kind, hidden, f_out).with_activation(ActivationKind::None),
            ]
        };
        let layers = match id {
            "gcn2" => two(ModelKind::Gcn),
            "sage2" => two(ModelKind::Sage)
                .into_iter()
                .map(|l| l.with_aggregation(Aggregation::Mean))
                .collect(),
            "gin2" => two(ModelKind::Gin),
            "sgc2" => {
                let mut l = LayerSpec::new(ModelKind::Sgc, f_in, f_out)
                    .with_activation(ActivationKind::None);
                l.sgc_hops = 2;
                vec![l]
            }
            other => {
                return Err(Error::config(format!(
                    "unknown zoo model '{other}' (expected gcn2, sage2, gin2 or sgc2)"
                )))
            }
        };
        Ok(Self::new(id, layers))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ModelSpec =
            toml::from_str(text).map_err(|e| Error::Format(format!("model spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: ModelSpec = toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model spec serializes")
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.first().map(|l| l.f_in)
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.last().map(|l| l.f_out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spec_version != MODEL_SPEC_VERSION {
            return Err(Error::config(format!(
                "unsupported model spec_version {} (expected {MODEL_SPEC_VERSION})",
                self.spec_version
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.f_in == 0 || l.f_out == 0 {
                return Err(Error::config(format!("layer {i}: dimensions must be positive")));
            }
            if l.kind == ModelKind::Sgc && l.sgc_hops == 0 {
                return Err(Error::config(format!("layer {i}: sgc_hops must be >= 1")));
            }
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].f_out != w[1].f_in {
                return Err(Error::shape(format!(
                    "layer {} outputs {} features but layer {} expects {}",
                    i,
                    w[0].f_out,
                    i + 1,
                    w[1].f_in
                )));
            }
        }
        Ok(())
    }

    pub fn weight_shapes(&self) -> Vec<(String, usize, usize)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.weight_shapes(i))
            .collect()
    }
}

/// Named weight matrices. `BTreeMap` keeps serialization order stable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightSet {
    pub weights: BTreeMap<String, DenseMatrix>,
}

impl WeightSet {
    pub fn get(&self, name: &str) -> Result<&DenseMatrix> {
        self.weights
            .get(name)
            .ok_or_else(|| Error::config(format!("missing weight matrix '{name}'")))
    }

    pub fn insert(&mut self, name: impl Into<String>, m: DenseMatrix) {
        self.weights.insert(name.into(), m);
    }

    /// Uniform weights in `[-1, 1)` for every matrix the model needs, each
    /// magnitude-pruned to `density`.
    pub fn random<R: Rng>(spec: &ModelSpec, density: f64, rng: &mut R) -> Result<Self> {
        let mut set = WeightSet::default();
        for (name, r, c) in spec.weight_shapes() {
            let mut w = crate::generate::random_dense(r, c, 1.0, rng);
            crate::generate::magnitude_prune(&mut w, density)?;
            set.insert(name, w);
        }
        Ok(set)
    }

    /// Checks that every weight the model needs exists with the right shape.
    pub fn check_against(&self, spec: &ModelSpec) -> Result<()> {
        for (name, r, c) in spec.weight_shapes() {
            let w = self.get(&name)?;
            if w.shape() != (r, c) {
                return Err(Error::shape(format!(
                    "weight '{name}' is {:?}, model expects ({r}, {c})",
                    w.shape()
                )));
            }
        }
        Ok(())
    }
}
