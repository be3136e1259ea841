//! Interface-width sweep: train networks for `k = 0..=k_max`, pick the elbow
//! of the test-SSE curve, and decide whether timing depends on the secret.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{split, DatasetError, TraceDataset};
use crate::network::{evaluate, train, train_from, Architecture, NetworkError, TrainConfig, TriBranchNetwork};
use crate::quantifier::SweepSummary;

pub const SWEEP_FORMAT: &str = "timeleak-sweep";
pub const SWEEP_VERSION: u32 = 1;
pub const DEFAULT_TAU: f64 = 0.05;
/// Floor on the denominator of the relative-improvement test.
const SSE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("training failed at k={k}: {source}")]
    Training { k: usize, source: NetworkError },
    #[error("invalid sweep settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("sweep parse error: {0}")]
    Parse(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub k_max: usize,
    pub seeds_per_k: usize,
    pub tau: f64,
    /// Max-residual tolerance in time units; `None` uses the SSE elbow alone.
    pub epsilon: Option<f64>,
    /// Fraction of rows held out for the reported test metrics.
    pub test_fraction: f64,
    /// Fraction of the remaining rows used for early stopping.
    pub valid_fraction: f64,
    pub seed: u64,
    /// Start every `k >= 1` training from the kept `k - 1` network, widened
    /// by one bit that initially has no effect on the prediction.
    pub warm_start: bool,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            k_max: 3,
            seeds_per_k: 3,
            tau: DEFAULT_TAU,
            epsilon: None,
            test_fraction: 0.1,
            valid_fraction: 0.1,
            seed: 0,
            warm_start: true,
        }
    }
}

impl SweepSettings {
    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::InvalidSettings(m));
        if self.k_max < 1 {
            return bad("k_max must be at least 1".into());
        }
        if self.seeds_per_k < 1 {
            return bad("seeds_per_k must be at least 1".into());
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if let Some(e) = self.epsilon {
            if e.is_nan() || e < 0.0 {
                return bad(format!("epsilon must be non-negative, got {e}"));
            }
        }
        Ok(())
    }

    /// Training seed for restart `j` at width `k`.
    pub fn seed_for(&self, k: usize, j: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(((k as u64) << 32) | j as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KRecord {
    pub k: usize,
    /// Test SSE on the normalized time scale.
    pub test_sse: f64,
    pub test_r2: f64,
    /// Largest absolute test residual in time units.
    pub max_residual: f64,
    /// Seed of the restart that was kept.
    pub seed: u64,
    pub epochs: usize,
    pub model_path: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    NoLeakDetected,
    LeakDetected(usize),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::NoLeakDetected => write!(f, "NoLeakDetected"),
            Verdict::LeakDetected(k) => write!(f, "LeakDetected({k})"),
        }
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "NoLeakDetected" {
            return Ok(Verdict::NoLeakDetected);
        }
        s.strip_prefix("LeakDetected(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|k| k.parse().ok())
            .map(Verdict::LeakDetected)
            .ok_or_else(|| format!("bad verdict `{s}`"))
    }
}

impl Serialize for Verdict {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Verdict {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Verdict plus the two signals behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub verdict: Verdict,
    pub elbow_k: usize,
    /// Smallest k whose max residual is within epsilon, when epsilon is set.
    pub epsilon_k: Option<usize>,
    /// The elbow and the epsilon rule disagree on leak / no leak.
    pub disagreement: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub format: String,
    pub version: u32,
    pub tau: f64,
    pub epsilon: Option<f64>,
    pub records: Vec<KRecord>,
    pub chosen_k: usize,
    pub verdict: Verdict,
    pub detection: Detection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
}

impl SweepResult {
    pub fn k_max(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn summary(&self) -> SweepSummary {
        SweepSummary {
            chosen_k: self.chosen_k,
            k_max: self.k_max(),
            tau: self.tau,
            verdict: self.verdict.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }

    pub fn from_json(text: &str) -> Result<SweepResult, SweepError> {
        let r: SweepResult =
            serde_json::from_str(text).map_err(|e| SweepError::Parse(e.to_string()))?;
        if r.format != SWEEP_FORMAT || r.version != SWEEP_VERSION {
            return Err(SweepError::Parse(format!(
                "expected {SWEEP_FORMAT}/{SWEEP_VERSION}, found {}/{}",
                r.format, r.version
            )));
        }
        let contiguous = r.records.iter().enumerate().all(|(i, rec)| rec.k == i);
        if r.records.is_empty() || !contiguous || r.chosen_k > r.k_max() {
            return Err(SweepError::Parse("records must cover k = 0..=k_max".into()));
        }
        Ok(r)
    }
}

/// Train, validation and test parts of `ds`: the test rows are held out
/// first, then the validation rows (for early stopping) from the rest.
pub fn partition(
    ds: &TraceDataset,
    test_fraction: f64,
    valid_fraction: f64,
    seed: u64,
) -> Result<(TraceDataset, TraceDataset, TraceDataset), SweepError> {
    let (rest, test) = split(ds, test_fraction, seed)?;
    let (train_set, valid) = split(&rest, valid_fraction, seed.wrapping_add(1))?;
    Ok((train_set, valid, test))
}

/// Smallest `k` after which no larger width improves the SSE by a relative
/// `tau` or more. `sse` is indexed by k.
pub fn select_k(sse: &[f64], tau: f64) -> usize {
    (0..sse.len())
        .find(|&k| {
            let denom = sse[k].max(SSE_FLOOR);
            sse[k + 1..].iter().all(|&s| (sse[k] - s) / denom < tau)
        })
        .unwrap_or(0)
}

/// Leak decision from per-k records. With `epsilon`, a leak means the k = 0
/// model misses some test point by more than `epsilon`; otherwise it means
/// the elbow sits at `k >= 1`.
pub fn detect(records: &[KRecord], tau: f64, epsilon: Option<f64>) -> Detection {
    let sse: Vec<f64> = records.iter().map(|r| r.test_sse).collect();
    let elbow_k = select_k(&sse, tau);
    let epsilon_k = epsilon.map(|eps| {
        records
            .iter()
            .find(|r| r.max_residual <= eps)
            .map_or(records.len().saturating_sub(1), |r| r.k)
    });
    let chosen = epsilon_k.unwrap_or(elbow_k);
    let verdict = if chosen == 0 {
        Verdict::NoLeakDetected
    } else {
        Verdict::LeakDetected(chosen)
    };
    Detection {
        verdict,
        elbow_k,
        epsilon_k,
        disagreement: epsilon_k.is_some_and(|e| (e == 0) != (elbow_k == 0)),
    }
}

/// Trains `seeds_per_k` networks for every `k = 0..=k_max` and keeps the
/// best by test SSE. Trainings run in parallel on the current rayon pool;
/// the result does not depend on scheduling. Returns the sweep record and
/// the kept network for every k.
pub fn sweep_k(
    ds: &TraceDataset,
    arch_template: &Architecture,
    settings: &SweepSettings,
    config: &TrainConfig,
) -> Result<(SweepResult, Vec<TriBranchNetwork>), SweepError> {
    settings.validate()?;
    config
        .validate()
        .map_err(|e| SweepError::InvalidSettings(e.to_string()))?;
    let (train_set, valid, test) =
        partition(ds, settings.test_fraction, settings.valid_fraction, settings.seed)?;

    let run = |k: usize, j: usize, from: Option<&TriBranchNetwork>| {
        let seed = settings.seed_for(k, j);
        let cfg = TrainConfig { seed, ..config.clone() };
        let tag = |source| SweepError::Training { k, source };
        let (net, hist) = match from {
            Some(prev) => train_from(prev.widen(k, seed).map_err(tag)?, &train_set, &valid, &cfg),
            None => train(&train_set, &valid, &arch_template.with_k(k), &cfg),
        }
        .map_err(tag)?;
        let m = evaluate(&net, &test).map_err(tag)?;
        let rec = KRecord {
            k,
            test_sse: m.sse,
            test_r2: m.r2,
            max_residual: m.max_residual,
            seed,
            epochs: hist.epochs.len(),
            model_path: None,
        };
        Ok((rec, net))
    };
    // jobs are in (k, j) order, so ties keep the lowest restart
    let keep_best = |best: &mut Vec<Option<(KRecord, TriBranchNetwork)>>, trained: Vec<Result<_, SweepError>>| {
        for item in trained {
            let (rec, net): (KRecord, TriBranchNetwork) = item?;
            let slot = &mut best[rec.k];
            if slot.as_ref().is_none_or(|(b, _)| rec.test_sse < b.test_sse) {
                *slot = Some((rec, net));
            }
        }
        Ok::<_, SweepError>(())
    };

    let mut best: Vec<Option<(KRecord, TriBranchNetwork)>> = vec![None; settings.k_max + 1];
    if settings.warm_start {
        for k in 0..=settings.k_max {
            let prev = k.checked_sub(1).map(|p| &best[p].as_ref().expect("trained").1);
            let trained: Vec<_> = (0..settings.seeds_per_k)
                .into_par_iter()
                .map(|j| run(k, j, prev))
                .collect();
            keep_best(&mut best, trained)?;
        }
    } else {
        let jobs: Vec<(usize, usize)> = (0..=settings.k_max)
            .flat_map(|k| (0..settings.seeds_per_k).map(move |j| (k, j)))
            .collect();
        let trained: Vec<_> = jobs.par_iter().map(|&(k, j)| run(k, j, None)).collect();
        keep_best(&mut best, trained)?;
    }
    let (records, nets): (Vec<KRecord>, Vec<TriBranchNetwork>) =
        best.into_iter().map(|b| b.expect("every k trained")).unzip();

    let detection = detect(&records, settings.tau, settings.epsilon);
    let result = SweepResult {
        format: SWEEP_FORMAT.into(),
        version: SWEEP_VERSION,
        tau: settings.tau,
        epsilon: settings.epsilon,
        chosen_k: match detection.verdict {
            Verdict::NoLeakDetected => 0,
            Verdict::LeakDetected(k) => k,
        },
        verdict: detection.verdict,
        detection,
        records,
        manifest_hash: None,
    };
    Ok((result, nets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureSchema, Row};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct reading of the rule: scan k upward and stop at the first k from
    /// which every later width improves by less than tau.
    fn oracle_select(sse: &[f64], tau: f64) -> usize {
        for k in 0..sse.len() {
            let mut ok = true;
            for later in &sse[k + 1..] {
                let gain = (sse[k] - later) / if sse[k] > 1e-12 { sse[k] } else { 1e-12 };
                if gain >= tau {
                    ok = false;
                }
            }
            if ok {
                return k;
            }
        }
        unreachable!("the last k always qualifies")
    }

    #[test]
    fn elbow_examples() {
        assert_eq!(select_k(&[100.0, 40.0, 10.0, 9.8, 9.7, 9.7], 0.05), 2);
        assert_eq!(select_k(&[5.0, 5.0, 5.0], 0.05), 0);
        let snapbuddy = [90.0, 60.0, 41.0, 27.0, 15.0, 8.0, 3.0, 2.95, 2.93, 2.92, 2.92];
        assert_eq!(select_k(&snapbuddy, 0.05), 6);
        // a late drop is caught even past a local plateau
        assert_eq!(select_k(&[10.0, 9.9, 9.9, 2.0], 0.05), 3);
        assert_eq!(select_k(&[0.0, 0.0], 0.05), 0);
    }

    fn record(k: usize, sse: f64, resid: f64) -> KRecord {
        KRecord {
            k,
            test_sse: sse,
            test_r2: 0.0,
            max_residual: resid,
            seed: 0,
            epochs: 0,
            model_path: None,
        }
    }

    #[test]
    fn detection_signals() {
        let recs = vec![record(0, 50.0, 3.0), record(1, 1.0, 0.1), record(2, 0.99, 0.1)];
        let d = detect(&recs, 0.05, None);
        assert_eq!(d.verdict, Verdict::LeakDetected(1));
        assert_eq!(d.epsilon_k, None);

        let d = detect(&recs, 0.05, Some(f64::INFINITY));
        assert_eq!(d.verdict, Verdict::NoLeakDetected);
        assert!(d.disagreement);

        let d = detect(&recs, 0.05, Some(0.5));
        assert_eq!(d.verdict, Verdict::LeakDetected(1));
        assert!(!d.disagreement);

        // nothing meets epsilon: report the widest model
        let d = detect(&recs, 0.05, Some(0.01));
        assert_eq!(d.verdict, Verdict::LeakDetected(2));
    }

    #[test]
    fn verdict_wire_format() {
        for v in [Verdict::NoLeakDetected, Verdict::LeakDetected(3)] {
            let s = serde_json::to_string(&v).unwrap();
            assert_eq!(serde_json::from_str::<Verdict>(&s).unwrap(), v);
        }
        assert_eq!(serde_json::to_string(&Verdict::LeakDetected(3)).unwrap(), r#""LeakDetected(3)""#);
        assert!("LeakDetected(x)".parse::<Verdict>().is_err());
    }

    #[test]
    fn settings_guards() {
        let ok = SweepSettings::default();
        assert!(ok.validate().is_ok());
        for bad in [
            SweepSettings { k_max: 0, ..ok.clone() },
            SweepSettings { seeds_per_k: 0, ..ok.clone() },
            SweepSettings { tau: 1.0, ..ok.clone() },
            SweepSettings { epsilon: Some(-1.0), ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
        assert_ne!(ok.seed_for(1, 0), ok.seed_for(0, 1));
    }

    fn public_only(seed: u64) -> TraceDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..200)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(0..=1) as f64).collect();
                let y = rng.random_range(0..8) as f64;
                Row { x, y: vec![y], t: 5.0 + 2.0 * y }
            })
            .collect();
        TraceDataset::new(FeatureSchema::binary(3, vec!["y".into()], "s"), rows).unwrap()
    }

    fn small_arch() -> Architecture {
        Architecture {
            k: 0,
            secret_widths: vec![4],
            public_widths: vec![4],
            joint_widths: vec![6],
            n: 3,
            m: 1,
        }
    }

    #[test]
    fn sweep_is_deterministic_and_contiguous() {
        let ds = public_only(1);
        let cfg = TrainConfig { max_epochs: 30, ..Default::default() };
        for warm_start in [true, false] {
            let settings = SweepSettings { k_max: 2, seeds_per_k: 2, seed: 9, warm_start, ..Default::default() };
            let (a, nets) = sweep_k(&ds, &small_arch(), &settings, &cfg).unwrap();
            let (b, _) = sweep_k(&ds, &small_arch(), &settings, &cfg).unwrap();
            assert_eq!(a.to_json(), b.to_json());
            assert_eq!(nets.len(), 3);
            assert!(a.records.iter().enumerate().all(|(i, r)| r.k == i && nets[i].k() == i));
            assert_eq!(SweepResult::from_json(&a.to_json()).unwrap(), a);
            assert_eq!(a.summary().k_max, 2);
        }
    }

    #[test]
    fn training_errors_carry_k() {
        let ds = public_only(2);
        let mut arch = small_arch();
        arch.n = 5;
        let err = sweep_k(&ds, &arch, &SweepSettings::default(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, SweepError::Training { k: 0, .. }), "{err}");
    }

    proptest! {
        #[test]
        fn matches_oracle(sse in prop::collection::vec(0.0f64..100.0, 1..10), tau in 0.01f64..0.9) {
            prop_assert_eq!(select_k(&sse, tau), oracle_select(&sse, tau));
        }

        #[test]
        fn larger_tau_never_larger_k(sse in prop::collection::vec(0.0f64..100.0, 1..10), a in 0.01f64..0.9, b in 0.01f64..0.9) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(select_k(&sse, hi) <= select_k(&sse, lo));
        }

        #[test]
        fn invariant_under_scaling(sse in prop::collection::vec(0.01f64..100.0, 1..10), c in prop::sample::select(vec![0.5, 2.0, 4.0, 1024.0])) {
            // power-of-two factors keep every ratio bit-identical
            let scaled: Vec<f64> = sse.iter().map(|s| s * c).collect();
            prop_assert_eq!(select_k(&scaled, 0.05), select_k(&sse, 0.05));
        }
    }
}
