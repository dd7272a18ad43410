use serde::Serialize;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error{}: {message}", .at.map(|(l, c)| format!(" at line {l}, column {c}")).unwrap_or_default())]
    Parse { at: Option<(usize, usize)>, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{module}: {message}")]
    Numerical { module: &'static str, message: String },
    #[error("acceptance suite failed: {0}")]
    SuiteFailed(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// What a numerical failure prints to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorPayload<'a> {
    pub module: &'a str,
    pub error: String,
}

impl CliError {
    /// 1 for unreadable configs, 2 for failed validation, 3 for numerics.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse { .. } | CliError::Io { .. } => 1,
            CliError::Invalid(_) | CliError::SuiteFailed(_) => 2,
            CliError::Numerical { .. } => 3,
        }
    }

    pub fn payload(&self) -> String {
        let module = match self {
            CliError::Numerical { module, .. } => module,
            CliError::Parse { .. } | CliError::Invalid(_) => "config",
            CliError::SuiteFailed(_) => "validate",
            CliError::Io { .. } => "io",
        };
        serde_json::to_string(&ErrorPayload { module, error: self.to_string() }).expect("payload serializes")
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

macro_rules! numerical_from {
    ($($t:ty => $m:literal),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Numerical { module: $m, message: e.to_string() }
            }
        })*
    };
}

numerical_from!(
    mobedge_core::potential::PotentialError => "potential",
    mobedge_core::cavity::CavityError => "cavity",
    mobedge_core::cavity::CheckpointError => "cavity",
    mobedge_core::transfer::TransferError => "transfer",
    mobedge_core::spectrum::SpectrumError => "spectrum",
    mobedge_core::treesim::TreeError => "treesim",
);

#[cfg(test)]
mod tests {
    use super::*;
    use mobedge_core::transfer::TransferError;

    #[test]
    fn numerical_errors_name_their_module() {
        let e: CliError = TransferError::BadExponent(0.3).into();
        assert_eq!(e.exit_code(), 3);
        let v: serde_json::Value = serde_json::from_str(&e.payload()).unwrap();
        assert_eq!(v["module"], "transfer");
        assert!(v["error"].as_str().unwrap().contains("0.3"));
    }

    #[test]
    fn parse_errors_print_their_position() {
        let e = CliError::Parse { at: Some((3, 7)), message: "bad".into() };
        assert_eq!(e.to_string(), "config parse error at line 3, column 7: bad");
        assert_eq!(CliError::Parse { at: None, message: "bad".into() }.to_string(), "config parse error: bad");
    }
}
