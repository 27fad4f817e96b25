pub mod error;
pub mod fdata;
pub mod fglm;
pub mod flm;
pub mod linalg;
pub mod sim;
pub mod spline;
pub mod subsample;

pub use error::{Error, Result};
