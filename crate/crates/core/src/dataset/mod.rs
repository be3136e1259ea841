//! Timing traces: schema, CSV ingestion, splitting, normalization and the
//! synthetic benchmark families.
//!
//! A trace row is one sample of a program's execution time as a function of
//! its secret and public inputs. Secret features always live in a finite
//! unit-step domain so the secret space can be enumerated exactly downstream.

mod csv_io;
mod generate;
mod normalize;
mod schema;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{load_csv, load_csv_with_schema, read_csv, write_csv};
pub use generate::{
    gen_bl, gen_rn, gen_sort_demo, rn_preset, Formula, GroundTruth, RnClause, RnPreset,
    SortAlgorithm, BL_COMPLEXITIES, DEFAULT_NOISE_STD, RN_BASE_TIME,
};
pub use normalize::{Affine, Normalizer};
pub use schema::{Domain, DomainSize, FeatureSchema, SecretFeature};
pub use split::split;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("last column must be `time`")]
    MissingTimeColumn,
    #[error("column `{0}` is neither secret (`s_`) nor public (`p_`)")]
    UnknownColumn(String),
    #[error("non-numeric cell at row {row}, column `{col}`")]
    NonNumericCell { row: usize, col: String },
    #[error("secret value {value} at row {row} is outside the domain of `{col}`")]
    SecretValueOutOfDomain { row: usize, col: String, value: f64 },
    #[error("negative or non-finite time {value} at row {row}")]
    InvalidTime { row: usize, value: f64 },
    #[error("secret feature `{name}` has degenerate domain [{lo}, {hi}]")]
    DegenerateDomain { name: String, lo: i64, hi: i64 },
    #[error("feature name `{0}` used twice")]
    DuplicateFeature(String),
    #[error("sidecar schema: {0}")]
    Sidecar(String),
    #[error("sidecar schema does not match the CSV header: {0}")]
    SchemaMismatch(String),
    #[error("row has {got} values, expected {expected}")]
    RowShape { expected: usize, got: usize },
    #[error("dataset too small: {rows} rows cannot give non-empty train and test sides")]
    DatasetTooSmall { rows: usize },
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("clause list is empty")]
    EmptyClauseList,
    #[error("{bits} secret bits cannot encode {behaviors} behaviors")]
    TooFewSecretBits { bits: usize, behaviors: usize },
    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),
}

impl From<csv::Error> for DatasetError {
    fn from(e: csv::Error) -> Self {
        DatasetError::Csv(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDataset {
    pub schema: FeatureSchema,
    pub rows: Vec<Row>,
}

impl TraceDataset {
    /// Builds a dataset, checking row shapes, secret domains and times.
    pub fn new(schema: FeatureSchema, rows: Vec<Row>) -> Result<Self, DatasetError> {
        schema.validate()?;
        for (i, row) in rows.iter().enumerate() {
            check_row(&schema, i, row)?;
        }
        Ok(TraceDataset { schema, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + Clone + '_ {
        self.rows.iter().map(|r| r.t)
    }

    pub(crate) fn with_rows(&self, rows: Vec<Row>) -> TraceDataset {
        TraceDataset {
            schema: self.schema.clone(),
            rows,
        }
    }
}

fn check_row(schema: &FeatureSchema, i: usize, row: &Row) -> Result<(), DatasetError> {
    if row.x.len() != schema.n_secret() {
        return Err(DatasetError::RowShape {
            expected: schema.n_secret(),
            got: row.x.len(),
        });
    }
    if row.y.len() != schema.n_public() {
        return Err(DatasetError::RowShape {
            expected: schema.n_public(),
            got: row.y.len(),
        });
    }
    for (f, &v) in schema.secret.iter().zip(&row.x) {
        if !f.domain.contains(v) {
            return Err(DatasetError::SecretValueOutOfDomain {
                row: i,
                col: format!("s_{}", f.name),
                value: v,
            });
        }
    }
    if !(row.t.is_finite() && row.t >= 0.0) {
        return Err(DatasetError::InvalidTime { row: i, value: row.t });
    }
    Ok(())
}
