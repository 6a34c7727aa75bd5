//! Stage runner behind the `plr` binary.

pub mod aggregate;
pub mod error;
pub mod grid;
pub mod plot;
pub mod run;
pub mod stage;
pub mod stages;

pub use aggregate::{execute, Execution};
pub use error::{CliError, Result};
pub use stage::Stage;
