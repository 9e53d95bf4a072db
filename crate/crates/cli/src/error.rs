use candlenet::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: CoreError,
    },
    #[error("model is under-fitted: sigma* {sigma_star:.4} < zeta {zeta}; {advice}")]
    UnderFitted {
        sigma_star: f64,
        zeta: f64,
        advice: &'static str,
    },
    #[error("internal: {0}")]
    Internal(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_UNDERFITTED: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::UnderFitted { .. } => EXIT_UNDERFITTED,
            CliError::Internal(_) => EXIT_INTERNAL,
            CliError::Stage { source, .. } => match source {
                CoreError::InvalidArgument(_) => EXIT_CONFIG,
                CoreError::Io { .. }
                | CoreError::Parse { .. }
                | CoreError::CandleInvariant { .. }
                | CoreError::InsufficientData(_)
                | CoreError::Format(_) => EXIT_DATA,
                CoreError::Shape(_) | CoreError::NonFinite(_) | CoreError::BackwardBeforeForward(_) => EXIT_INTERNAL,
            },
        }
    }
}

/// Tags core errors with the pipeline stage that raised them.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> StageExt<T> for candlenet::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
