pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod matrix;
pub mod model;
pub mod operator;
pub mod pareto;
pub mod reduction;
pub mod sampling;
pub mod scalar;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{Model, ModelData, Strategy};
pub use scalar::Scalar;

pub type Model64 = Model<f64>;
pub type Model32 = Model<f32>;
pub type Strategy64 = Strategy<f64>;
pub type Strategy32 = Strategy<f32>;
pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Coupling64 = coupling::Coupling<f64>;
pub type Coupling32 = coupling::Coupling<f32>;
pub type Frontier64 = pareto::Frontier<f64>;
pub type Frontier32 = pareto::Frontier<f32>;
