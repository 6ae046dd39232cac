use std::path::Path;

use graphspn::chem::ChemError;
use graphspn::circuit::CircuitError;
use graphspn::data::DataError;
use graphspn::graphrep::GraphError;
use graphspn::invariance::ModelError;
use graphspn::model_io::ModelFileError;
use graphspn::queries::QueryError;
use thiserror::Error;

/// Failure of one command, grouped by the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("infeasible: {0}")]
    Feasibility(String),
    #[error("inference: {0}")]
    Inference(String),
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Feasibility(_) => 4,
            CliError::Inference(_) => 5,
            CliError::Output(_) => 6,
        }
    }

    pub fn write(path: &Path, e: std::io::Error) -> Self {
        CliError::Output(format!("{}: {e}", path.display()))
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Infeasible(_) => CliError::Feasibility(e.to_string()),
            ModelError::Representation(_) => CliError::Config(e.to_string()),
            ModelError::Graph(GraphError::Infeasible(_)) => CliError::Feasibility(e.to_string()),
            ModelError::Graph(_) => CliError::Data(e.to_string()),
            ModelError::Circuit(CircuitError::Structure(_) | CircuitError::Training(_) | CircuitError::Spec(_)) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Inference(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Fractions(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        match e {
            ModelFileError::Model(m) => m.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<QueryError> for CliError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Model(m) => m.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ChemError> for CliError {
    fn from(e: ChemError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        ModelError::from(e).into()
    }
}
