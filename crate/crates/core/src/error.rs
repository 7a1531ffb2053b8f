use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("threshold calibration failed: {0}")]
    Calibration(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("dataset {name} not found at {path}; run `specsense gen --condition {condition} --role {role}` first")]
    MissingDataset { name: String, condition: String, role: String, path: String },

    #[error("model {name} not found at {path}; run `specsense train --condition {name}` first")]
    MissingModel { name: String, path: String },
}

pub type Result<T> = std::result::Result<T, Error>;
