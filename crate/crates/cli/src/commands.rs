//! One module per subcommand. Each `run` returns the pass verdict, a JSON
//! report body, and the plot tables to drop next to the certificate; the
//! binary owns exit codes and file layout.

pub mod access;
pub mod certify;
pub mod holonomy;
pub mod leaves;
pub mod lyapunov;
pub mod perturb;
pub mod sections;

pub struct CommandOutput {
    pub pass: bool,
    pub report: serde_json::Value,
    /// (file name, body) pairs, written into the output directory.
    pub plots: Vec<(String, String)>,
    /// Short failure line for stderr; a generic message is used when absent.
    pub failure: Option<String>,
}
