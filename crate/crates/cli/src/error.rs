use tanet::checkpoint::CheckpointError;
use tanet::config::ConfigError;
use tanet::tensor::TensorError;
use tanet::train::TrainError;
use tanet::weather::WeatherError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Checkpoint(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Io(_) => 2,
            CliError::Usage(_) => 3,
            CliError::Checkpoint(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<WeatherError> for CliError {
    fn from(e: WeatherError) -> Self {
        match e {
            WeatherError::Param(_) | WeatherError::Tensor(_) => CliError::Usage(e.to_string()),
            WeatherError::Io { .. } | WeatherError::Image { .. } | WeatherError::Manifest(_) => {
                CliError::Io(e.to_string())
            }
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Checkpoint(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Weather(w) => w.into(),
            TrainError::Checkpoint(c) => c.into(),
            TrainError::Tensor(t) => t.into(),
            TrainError::Io { .. } => CliError::Io(e.to_string()),
            TrainError::Data(_) => CliError::Usage(e.to_string()),
            TrainError::NonFinite(_) => CliError::Failed(e.to_string()),
        }
    }
}
