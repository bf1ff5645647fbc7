//! Shape-based fitting of integer trial models to integer data.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod crosscheck;
pub mod data;
pub mod error;
pub mod expr;
pub mod grid;
pub mod measure;
pub mod model;
pub mod params;
pub mod report;
pub mod sensitivity;
pub mod statevector;
pub mod trimmer;
pub mod worked_example;

pub use error::{Error, ParseErrorKind, Result};
pub use expr::{Arity, Expr};
pub use grid::{DataTable, DomainGrid, NoiseKind, NoiseSpec, Provenance};
pub use model::{ExprModel, FnModel, Sensitivity, TrialModel};
pub use params::{Half, ParamField, ParameterSpace};
