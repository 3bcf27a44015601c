//! JSON forms of cones, models, paths, utilities and strategies.
//!
//! Numbers are written as decimal strings holding the shortest representation
//! that parses back to the same `f64`, so a model's digest survives a save and
//! reload. Plain JSON numbers are accepted on input.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::cone::{Cone, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::model::{Model, NodeSpec, Strategy};
use crate::paths::GridPath;
use crate::utility::UtilitySpec;

/// An `f64` that serializes as a full-precision decimal string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&format!("{:?}", self.0))
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct NumVisitor;
        impl Visitor<'_> for NumVisitor {
            type Value = Num;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a decimal string")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Num, E> {
                Ok(Num(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Num, E> {
                Ok(Num(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Num, E> {
                Ok(Num(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Num, E> {
                v.trim()
                    .parse::<f64>()
                    .map(Num)
                    .map_err(|_| E::custom(format!("invalid number {v:?}")))
            }
        }
        deserializer.deserialize_any(NumVisitor)
    }
}

pub fn nums(v: &[f64]) -> Vec<Num> {
    v.iter().copied().map(Num).collect()
}

pub fn floats(v: &[Num]) -> Vec<f64> {
    v.iter().map(|n| n.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeDto {
    pub dim: usize,
    pub generators: Vec<Vec<Num>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<Num>,
}

impl ConeDto {
    pub fn from_cone(cone: &Cone) -> Self {
        Self {
            dim: cone.dim(),
            generators: cone.generators().iter().map(|g| nums(g)).collect(),
            tol: Some(Num(cone.tol())),
        }
    }

    pub fn to_cone(&self) -> Result<Cone> {
        let generators: Vec<Vec<f64>> = self.generators.iter().map(|g| floats(g)).collect();
        if let Some(bad) = generators.iter().find(|g| g.len() != self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: bad.len(),
            });
        }
        Cone::new(generators, self.tol.map_or(DEFAULT_TOL, |t| t.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDto {
    pub id: String,
    #[serde(default)]
    pub parent: Option<String>,
    pub prob: Num,
    pub y: Vec<Num>,
    pub s: Vec<Num>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDto {
    pub cone: ConeDto,
    #[serde(default)]
    pub aux_dims: usize,
    pub nodes: Vec<NodeDto>,
}

impl ModelDto {
    pub fn from_model(model: &Model) -> Self {
        let tree = model.tree();
        let nodes = tree
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| NodeDto {
                id: n.id.clone(),
                parent: n.parent.map(|p| tree.node(p).id.clone()),
                prob: Num(n.prob),
                y: nums(model.driving(i)),
                s: nums(model.prices(i)),
            })
            .collect();
        Self {
            cone: ConeDto::from_cone(model.cone()),
            aux_dims: model.aux_dims(),
            nodes,
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        let cone = self.cone.to_cone()?;
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.id.clone(),
                parent: n.parent.clone(),
                prob: n.prob.0,
                y: floats(&n.y),
                s: floats(&n.s),
            })
            .collect();
        Model::new(cone, nodes, self.aux_dims)
    }
}

pub fn model_to_json(model: &Model) -> String {
    serde_json::to_string_pretty(&ModelDto::from_model(model)).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<Model> {
    let dto: ModelDto = serde_json::from_str(text).map_err(|e| Error::InvalidModel(format!("model JSON: {e}")))?;
    dto.to_model()
}

/// Hex SHA-256 of any serializable value's compact JSON.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("value serializes");
    hex::encode(Sha256::digest(bytes))
}

pub fn model_digest(model: &Model) -> String {
    digest_of(&ModelDto::from_model(model))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathDto {
    pub times: Vec<Num>,
    pub values: Vec<Vec<Num>>,
    #[serde(default)]
    pub pre_initial: bool,
}

impl PathDto {
    pub fn from_path(path: &GridPath) -> Self {
        Self {
            times: nums(path.times()),
            values: path.values().iter().map(|v| nums(v)).collect(),
            pre_initial: path.pre_initial(),
        }
    }

    pub fn to_path(&self) -> Result<GridPath> {
        GridPath::new(
            floats(&self.times),
            self.values.iter().map(|v| floats(v)).collect(),
            self.pre_initial,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilityDto {
    Linear { weights: Vec<Num> },
    LogLiquidation,
    PowerLiquidation { gamma: Num },
}

impl UtilityDto {
    pub fn from_spec(spec: &UtilitySpec) -> Self {
        match spec {
            UtilitySpec::Linear { weights } => Self::Linear { weights: nums(weights) },
            UtilitySpec::LogLiquidation => Self::LogLiquidation,
            UtilitySpec::PowerLiquidation { gamma } => Self::PowerLiquidation { gamma: Num(*gamma) },
        }
    }

    pub fn to_spec(&self) -> UtilitySpec {
        match self {
            Self::Linear { weights } => UtilitySpec::Linear {
                weights: floats(weights),
            },
            Self::LogLiquidation => UtilitySpec::LogLiquidation,
            Self::PowerLiquidation { gamma } => UtilitySpec::PowerLiquidation { gamma: gamma.0 },
        }
    }
}

/// Strategies as `{node id: increment}`.
pub type StrategyDto = BTreeMap<String, Vec<Num>>;

pub fn strategy_to_dto(model: &Model, strategy: &Strategy) -> StrategyDto {
    model
        .tree()
        .nodes()
        .iter()
        .zip(strategy.increments())
        .map(|(n, inc)| (n.id.clone(), nums(inc)))
        .collect()
}

/// Nodes missing from the map do not trade.
pub fn strategy_from_dto(model: &Model, dto: &StrategyDto) -> Result<Strategy> {
    let mut s = Strategy::zero(model).increments().to_vec();
    for (id, inc) in dto {
        let i = model
            .tree()
            .index_of(id)
            .ok_or_else(|| Error::InvalidArgument(format!("strategy names unknown node {id:?}")))?;
        if inc.len() != model.asset_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.asset_dim(),
                got: inc.len(),
            });
        }
        s[i] = floats(inc);
    }
    Ok(Strategy::new(s))
}
