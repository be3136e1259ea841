use serde::{Deserialize, Serialize};

use super::{Domain, Row, TraceDataset};

/// `v -> (v - shift) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub shift: f64,
    pub scale: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        shift: 0.0,
        scale: 1.0,
    };

    /// Population z-score of `values`; zero variance keeps scale 1.
    pub fn zscore(values: impl Iterator<Item = f64> + Clone) -> Affine {
        let n = values.clone().count().max(1) as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Affine {
            shift: mean,
            scale: if std > 0.0 && std.is_finite() { std } else { 1.0 },
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.shift) / self.scale
    }

    pub fn unapply(&self, v: f64) -> f64 {
        v * self.scale + self.shift
    }
}

/// Feature and target scaling fitted on training rows. Secret features use the
/// exact domain maps so a reducer can replay them without the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub secret: Vec<Domain>,
    pub public: Vec<Affine>,
    pub time: Affine,
}

impl Normalizer {
    pub fn fit(train: &TraceDataset) -> Normalizer {
        let public = (0..train.schema.n_public())
            .map(|j| Affine::zscore(train.rows.iter().map(move |r| r.y[j])))
            .collect();
        Normalizer {
            secret: train.schema.secret_domains(),
            public,
            time: Affine::zscore(train.times()),
        }
    }

    pub fn secret_in(&self, x: &[f64]) -> Vec<f64> {
        self.secret.iter().zip(x).map(|(d, &v)| d.to_unit(v)).collect()
    }

    pub fn public_in(&self, y: &[f64]) -> Vec<f64> {
        self.public.iter().zip(y).map(|(a, &v)| a.apply(v)).collect()
    }

    pub fn apply_row(&self, row: &Row) -> Row {
        Row {
            x: self.secret_in(&row.x),
            y: self.public_in(&row.y),
            t: self.time.apply(row.t),
        }
    }

    pub fn unapply_row(&self, row: &Row) -> Row {
        Row {
            x: self.secret.iter().zip(&row.x).map(|(d, &u)| d.from_unit(u)).collect(),
            y: self.public.iter().zip(&row.y).map(|(a, &u)| a.unapply(u)).collect(),
            t: self.time.unapply(row.t),
        }
    }

    /// Normalized copy of the rows. The result is a plain row list because
    /// normalized values no longer satisfy the raw schema's domains.
    pub fn apply(&self, ds: &TraceDataset) -> Vec<Row> {
        ds.rows.iter().map(|r| self.apply_row(r)).collect()
    }
}
