pub mod controller;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod model;
pub mod planner;
pub mod reference;
pub mod sensor;
pub mod sim;

pub use error::{Error, Result};
