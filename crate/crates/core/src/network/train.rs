use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::grad::loss_and_gradients;
use super::model::{check_dim, TriBranchNetwork};
use super::{Architecture, NetworkError, TrainConfig};
use crate::dataset::{Normalizer, Row, TraceDataset};

/// Relative validation improvement that resets the patience counter.
const MIN_REL_IMPROVEMENT: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Running SSE over the epoch's mini-batches, normalized scale.
    pub train_sse: f64,
    pub valid_sse: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Fit quality on a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Sum of squared errors on the normalized time scale.
    pub sse: f64,
    /// Coefficient of determination on the original time scale.
    pub r2: f64,
    /// Largest absolute residual, in the dataset's time unit.
    pub max_residual: f64,
    pub rows: usize,
}

fn sse_normalized(net: &TriBranchNetwork, rows: &[Row]) -> f64 {
    rows.iter()
        .map(|r| {
            let e = net.trace(&r.x, &r.y).output - r.t;
            e * e
        })
        .sum()
}

pub fn evaluate(net: &TriBranchNetwork, ds: &TraceDataset) -> Result<Metrics, NetworkError> {
    check_dim("secret features", net.architecture.n, ds.schema.n_secret())?;
    check_dim("public features", net.architecture.m, ds.schema.n_public())?;
    let norm = &net.normalizer;
    let mean = ds.times().sum::<f64>() / ds.len().max(1) as f64;
    let (mut sse, mut ss_res, mut ss_tot, mut max_res) = (0.0, 0.0, 0.0, 0.0f64);
    for r in &ds.rows {
        let nr = norm.apply_row(r);
        let out = net.trace(&nr.x, &nr.y).output;
        sse += (out - nr.t) * (out - nr.t);
        let resid = r.t - norm.time.unapply(out);
        ss_res += resid * resid;
        ss_tot += (r.t - mean) * (r.t - mean);
        max_res = max_res.max(resid.abs());
    }
    let r2 = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(Metrics {
        sse,
        r2,
        max_residual: max_res,
        rows: ds.len(),
    })
}

pub fn sse(net: &TriBranchNetwork, ds: &TraceDataset) -> Result<f64, NetworkError> {
    evaluate(net, ds).map(|m| m.sse)
}

pub fn r2(net: &TriBranchNetwork, ds: &TraceDataset) -> Result<f64, NetworkError> {
    evaluate(net, ds).map(|m| m.r2)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Mini-batch Adam training with early stopping on validation SSE. The
/// normalizer is fitted on `train` only; the best-validation snapshot is
/// returned. An empty validation set falls back to the training SSE.
pub fn train(
    train: &TraceDataset,
    valid: &TraceDataset,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<(TriBranchNetwork, TrainHistory), NetworkError> {
    config.validate()?;
    let net = TriBranchNetwork::init(arch, train.schema.clone(), config.seed)?;
    train_from(net, train, valid, config)
}

/// Like [`train`], but starting from the weights of `initial`, which must
/// share the training schema. The normalizer is refitted on `train`; the
/// starting point itself is a candidate snapshot.
pub fn train_from(
    mut net: TriBranchNetwork,
    train: &TraceDataset,
    valid: &TraceDataset,
    config: &TrainConfig,
) -> Result<(TriBranchNetwork, TrainHistory), NetworkError> {
    config.validate()?;
    if train.is_empty() {
        return Err(NetworkError::EmptyBatch);
    }
    if train.schema != valid.schema || net.schema != train.schema {
        return Err(NetworkError::InvalidConfig(
            "network, training and validation schemas differ".into(),
        ));
    }
    net.normalizer = Normalizer::fit(train);
    let train_rows = net.normalizer.apply(train);
    let valid_rows = net.normalizer.apply(valid);

    let mut adam = Adam::new(config.adam());
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut history = TrainHistory::default();
    let valid_sse_of = |net: &TriBranchNetwork| {
        if valid_rows.is_empty() {
            sse_normalized(net, &train_rows)
        } else {
            sse_normalized(net, &valid_rows)
        }
    };
    let mut best = net.clone();
    let mut best_sse = valid_sse_of(&net);
    if !best_sse.is_finite() {
        best_sse = f64::INFINITY;
    }
    let mut patience_ref = f64::INFINITY;
    let mut stale = 0;
    let mut decays = 0;
    let mut frozen: Option<TriBranchNetwork> = None;

    for epoch in 0..config.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut epoch_rng(config.seed, epoch));
        let mut train_sse = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_rows[i].clone()));
            let (mse, grads) = loss_and_gradients(&net, &batch, config.ste_clip)
                .map_err(|e| with_epoch(e, epoch))?;
            train_sse += mse * batch.len() as f64;
            adam.step(&mut net.params.tensors_mut(), &grads.tensors());
            if let Some(f) = &frozen {
                net.params.secret.clone_from(&f.params.secret);
                net.params.interface.clone_from(&f.params.interface);
            }
        }
        let valid_sse = valid_sse_of(&net);
        if !valid_sse.is_finite() {
            return Err(NetworkError::NonFiniteLoss { epoch: Some(epoch) });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_sse,
            valid_sse,
        });
        if valid_sse < best_sse {
            best_sse = valid_sse;
            best = net.clone();
            history.best_epoch = epoch;
        }
        if valid_sse < patience_ref * (1.0 - MIN_REL_IMPROVEMENT) {
            patience_ref = valid_sse;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                if decays == config.max_decays {
                    break;
                }
                decays += 1;
                stale = 0;
                net = best.clone();
                adam.config.learning_rate *= config.lr_decay;
                if config.freeze_interface && frozen.is_none() {
                    frozen = Some(best.clone());
                }
            }
        }
    }
    Ok((best, history))
}

fn with_epoch(e: NetworkError, epoch: usize) -> NetworkError {
    match e {
        NetworkError::NonFiniteLoss { .. } => NetworkError::NonFiniteLoss { epoch: Some(epoch) },
        other => other,
    }
}
