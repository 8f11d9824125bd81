//! JSON file formats shared by the command-line tools.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{Model, ModelData, Strategy};
use crate::reduction::FeaturePartition;
use crate::scalar::Scalar;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse<D: DeserializeOwned>(path: &Path, text: &str) -> Result<D> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    parse(path, &read(path)?)
}

/// Parses and validates a model file.
pub fn read_model<T: Scalar>(path: &Path) -> Result<Model<T>> {
    Model::from_data(read_json::<ModelData<T>>(path)?)
}

/// Coupling file: either a joint matrix or a deterministic map.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged, bound = "T: Scalar")]
pub enum CouplingFile<T> {
    Joint(JointFile<T>),
    Map(MapFile),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct JointFile<T> {
    pub pi: Matrix<T>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFile {
    pub phi: Vec<usize>,
}

impl<T: Scalar> CouplingFile<T> {
    /// Builds the coupling, checking marginals against whichever weights are given.
    ///
    /// A map needs the left weights; the right weights default to their pushforward.
    pub fn resolve(self, left: Option<&[T]>, right: Option<&[T]>) -> Result<Coupling<T>> {
        match self {
            CouplingFile::Joint(JointFile { pi }) => match (left, right) {
                (Some(l), Some(r)) => Coupling::with_marginals(pi, l, r, T::zero()),
                (None, None) => Coupling::from_pi(pi),
                (l, r) => {
                    let left = l.map_or_else(|| pi.row_sums(), <[T]>::to_vec);
                    let right = r.map_or_else(|| pi.col_sums(), <[T]>::to_vec);
                    Coupling::with_marginals(pi, &left, &right, T::zero())
                }
            },
            CouplingFile::Map(MapFile { phi }) => {
                let left = left.ok_or_else(|| {
                    Error::InvalidCoupling("a deterministic coupling needs the left model's weights".into())
                })?;
                let right = match right {
                    Some(r) => r.to_vec(),
                    None => {
                        let size = phi.iter().max().map_or(0, |&j| j + 1);
                        let mut pushed = vec![T::zero(); size];
                        for (i, &j) in phi.iter().enumerate().take(left.len()) {
                            pushed[j] += left[i];
                        }
                        pushed
                    }
                };
                Coupling::deterministic(left, &phi, &right)
            }
        }
    }
}

/// Reads a vector file: a bare JSON array, or an object with a single array field
/// such as `{"eta": [...]}`.
pub fn read_vector<T: Scalar>(path: &Path) -> Result<Vec<T>> {
    parse_vector(path, &read(path)?)
}

fn parse_vector<T: Scalar>(path: &Path, text: &str) -> Result<Vec<T>> {
    let value: serde_json::Value = parse(path, text)?;
    let inner = match value {
        serde_json::Value::Object(map) if map.len() == 1 => map.into_iter().next().map(|(_, v)| v).unwrap(),
        other => other,
    };
    Vec::<T>::deserialize(inner).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: format!("expected an array of numbers: {e}"),
    })
}

pub fn read_strategy<T: Scalar>(path: &Path) -> Result<Strategy<T>> {
    Strategy::new(read_vector(path)?)
}

pub fn read_partition(path: &Path) -> Result<FeaturePartition> {
    read_json(path)
}
