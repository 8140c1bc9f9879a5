use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: vbow::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn stage(stage: &'static str) -> impl FnOnce(vbow::Error) -> CliError {
        move |source| CliError::Stage { stage, source }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "Config",
            CliError::Stage { source, .. } => source.kind(),
            CliError::Io { .. } => "Io",
        }
    }

    /// Machine-readable form printed on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Stage { stage, source } = self {
            body["stage"] = json!(stage);
            if let vbow::Error::InsufficientSpectrum { available, .. } = source {
                body["hint"] = json!(format!("use K <= {available}"));
            }
        }
        json!({ "error": body })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insufficient_spectrum_suggests_smaller_k() {
        let e = CliError::Stage { stage: "reduce", source: vbow::Error::InsufficientSpectrum { requested: 9, available: 4 } };
        let j = e.to_json();
        assert_eq!(j["error"]["kind"], "InsufficientSpectrum");
        assert_eq!(j["error"]["hint"], "use K <= 4");
        assert_eq!(e.exit_code(), 1);
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
    }
}
