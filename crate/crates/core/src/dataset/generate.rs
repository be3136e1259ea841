//! Synthetic trace families with known observational classes.
//!
//! `R_n`: secret bits feed boolean clauses; each true clause runs a linear
//! loop over the public integer `N`, so `t = base + sum(coeff * N)`.
//! `B_L_i`: the secret selects one of `4i` loop bodies of complexity
//! `log N`, `N`, `N log N` or `N^2`, each with a constant factor.
//! Every generator records the ground-truth class sizes obtained by
//! enumerating the whole secret domain.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Domain, FeatureSchema, Row, SecretFeature, TraceDataset};

pub const DEFAULT_NOISE_STD: f64 = 0.02;
pub const RN_BASE_TIME: f64 = 10.0;

/// Boolean formula over secret bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formula {
    Const(bool),
    Var(usize),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    pub fn var(i: usize) -> Formula {
        Formula::Var(i)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn eval(&self, bits: &[bool]) -> bool {
        match self {
            Formula::Const(b) => *b,
            Formula::Var(i) => bits[*i],
            Formula::Not(f) => !f.eval(bits),
            Formula::And(fs) => fs.iter().all(|f| f.eval(bits)),
            Formula::Or(fs) => fs.iter().any(|f| f.eval(bits)),
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Formula::Const(_) => None,
            Formula::Var(i) => Some(*i),
            Formula::Not(f) => f.max_var(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().filter_map(Formula::max_var).max(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnClause {
    pub formula: Formula,
    pub coeff: f64,
}

/// Ground-truth class sizes over the full secret domain, ordered by the
/// behaviour that defines the class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundTruth(pub Vec<u64>);

impl GroundTruth {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

fn bits_of(v: u64, n: usize) -> Vec<bool> {
    (0..n).map(|j| (v >> j) & 1 == 1).collect()
}

fn jitter(rng: &mut ChaCha8Rng, t: f64, noise_std: f64) -> f64 {
    if noise_std == 0.0 {
        return t;
    }
    let z: f64 = rng.sample(StandardNormal);
    (t * (1.0 + noise_std * z)).max(0.0)
}

fn check_noise(noise_std: f64) -> Result<(), DatasetError> {
    if noise_std.is_finite() && noise_std >= 0.0 {
        Ok(())
    } else {
        Err(DatasetError::InvalidParameter(format!(
            "noise_std {noise_std} must be finite and non-negative"
        )))
    }
}

fn bit_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|j| format!("{prefix}{j}")).collect()
}

pub fn gen_rn(
    n_secret_bits: usize,
    clauses: &[RnClause],
    n_public_bits: usize,
    rows: usize,
    noise_std: f64,
    seed: u64,
) -> Result<(TraceDataset, GroundTruth), DatasetError> {
    if clauses.is_empty() {
        return Err(DatasetError::EmptyClauseList);
    }
    if n_secret_bits == 0 || n_secret_bits > 24 || n_public_bits > 52 {
        return Err(DatasetError::InvalidParameter(format!(
            "need 1..=24 secret bits and at most 52 public bits, got {n_secret_bits}/{n_public_bits}"
        )));
    }
    check_noise(noise_std)?;
    for (i, c) in clauses.iter().enumerate() {
        if !(c.coeff > 0.0 && c.coeff.is_finite()) {
            return Err(DatasetError::InvalidParameter(format!(
                "clause {i} coefficient {} must be positive",
                c.coeff
            )));
        }
        if clauses[..i].iter().any(|d| d.coeff == c.coeff) {
            return Err(DatasetError::InvalidParameter(format!(
                "clause coefficients must be distinct ({} repeats)",
                c.coeff
            )));
        }
        if c.formula.max_var().is_some_and(|v| v >= n_secret_bits) {
            return Err(DatasetError::InvalidParameter(format!(
                "clause {i} refers to a bit beyond {n_secret_bits} secret bits"
            )));
        }
    }

    let slope = |bits: &[bool]| -> f64 {
        clauses
            .iter()
            .filter(|c| c.formula.eval(bits))
            .map(|c| c.coeff)
            .sum()
    };

    let schema = FeatureSchema::binary(n_secret_bits, bit_names("", n_public_bits), "time-units");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let s: u64 = rng.random_range(0..1u64 << n_secret_bits);
        let n_pub: u64 = if n_public_bits == 0 {
            0
        } else {
            rng.random_range(0..1u64 << n_public_bits)
        };
        let bits = bits_of(s, n_secret_bits);
        let t = RN_BASE_TIME + slope(&bits) * n_pub as f64;
        out.push(Row {
            x: bits.iter().map(|&b| b as u8 as f64).collect(),
            y: bits_of(n_pub, n_public_bits)
                .iter()
                .map(|&b| b as u8 as f64)
                .collect(),
            t: jitter(&mut rng, t, noise_std),
        });
    }

    // Classes are distinct timing functions, i.e. distinct total slopes.
    let mut tally: BTreeMap<u64, u64> = BTreeMap::new();
    for s in 0..1u64 << n_secret_bits {
        let key = slope(&bits_of(s, n_secret_bits));
        *tally.entry(key.to_bits()).or_default() += 1;
    }
    let mut classes: Vec<(f64, u64)> = tally.into_iter().map(|(k, c)| (f64::from_bits(k), c)).collect();
    classes.sort_by(|a, b| a.0.total_cmp(&b.0));

    Ok((
        TraceDataset::new(schema, out)?,
        GroundTruth(classes.into_iter().map(|(_, c)| c).collect()),
    ))
}

/// Named `R_n` benchmark with its reference network shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnPreset {
    pub name: String,
    pub n_secret_bits: usize,
    pub n_public_bits: usize,
    pub rows: usize,
    pub clauses: Vec<RnClause>,
    /// Reference interface width.
    pub k: usize,
    pub secret_widths: Vec<usize>,
    pub public_widths: Vec<usize>,
    pub joint_widths: Vec<usize>,
    pub learning_rate: f64,
}

impl RnPreset {
    pub fn generate(&self, noise_std: f64, seed: u64) -> Result<(TraceDataset, GroundTruth), DatasetError> {
        self.generate_rows(self.rows, noise_std, seed)
    }

    pub fn generate_rows(
        &self,
        rows: usize,
        noise_std: f64,
        seed: u64,
    ) -> Result<(TraceDataset, GroundTruth), DatasetError> {
        gen_rn(self.n_secret_bits, &self.clauses, self.n_public_bits, rows, noise_std, seed)
    }
}

/// Looks up `R_2` ... `R_7` (also accepts `R2`, `r_2`).
pub fn rn_preset(name: &str) -> Option<RnPreset> {
    use Formula::{And, Or};
    let v = Formula::var;
    let not = Formula::not;
    let n: usize = name
        .to_ascii_lowercase()
        .trim_start_matches('r')
        .trim_start_matches('_')
        .parse()
        .ok()?;
    let clause = |formula, coeff| RnClause { formula, coeff };
    // s1 | (s2 & s3): 10 of the 16 assignments of bits 1..=4
    let ten_of_sixteen = || Or(vec![v(1), And(vec![v(2), v(3)])]);

    let (clauses, k, secret_widths, public_widths, joint_widths) = match n {
        // {s0 & s1}: classes {1, 3}
        2 => (
            vec![clause(And(vec![v(0), v(1)]), 1.0)],
            1,
            vec![5],
            vec![5],
            vec![10],
        ),
        // disjoint clauses of 3 and 3, remainder 2
        3 => (
            vec![
                clause(And(vec![v(0), Or(vec![v(1), v(2)])]), 1.0),
                clause(And(vec![not(v(0)), Or(vec![v(1), v(2)])]), 2.0),
            ],
            2,
            vec![10],
            vec![10],
            vec![20],
        ),
        // overlapping clauses: only-A 6, only-B 7, both 2, neither 1
        4 => (
            vec![
                clause(v(0), 1.0),
                clause(
                    Or(vec![
                        And(vec![v(0), v(1), v(2)]),
                        And(vec![not(v(0)), Or(vec![v(1), v(2), v(3)])]),
                    ]),
                    2.0,
                ),
            ],
            2,
            vec![10],
            vec![10],
            vec![20],
        ),
        // disjoint clauses of 10 and 10, remainder 12
        5 => (
            vec![
                clause(And(vec![v(0), ten_of_sixteen()]), 1.0),
                clause(And(vec![not(v(0)), ten_of_sixteen()]), 2.0),
            ],
            2,
            vec![10, 10],
            vec![10],
            vec![20],
        ),
        // s0 = 0 is one class; s0 = 1 splits four ways on (s1, s2)
        6 | 7 => {
            let eq12 = Or(vec![And(vec![v(1), v(2)]), And(vec![not(v(1)), not(v(2))])]);
            (
                vec![
                    clause(And(vec![v(0), eq12]), 1.0),
                    clause(And(vec![v(0), v(2)]), 2.0),
                    clause(And(vec![v(0), v(1), not(v(2))]), 4.0),
                ],
                3,
                if n == 6 { vec![10, 10] } else { vec![20, 20] },
                vec![10, 10],
                vec![20],
            )
        }
        _ => return None,
    };
    Some(RnPreset {
        name: format!("R_{n}"),
        n_secret_bits: n,
        n_public_bits: 7,
        rows: 100 << n,
        clauses,
        k,
        secret_widths,
        public_widths,
        joint_widths,
        learning_rate: 1e-2,
    })
}

/// Loop complexities of the `B_L` family, in behaviour order.
pub const BL_COMPLEXITIES: [&str; 4] = ["log N", "N", "N log N", "N^2"];

fn bl_cost(complexity: usize, n: f64) -> f64 {
    match complexity {
        0 => n.log2(),
        1 => n,
        2 => n * n.log2(),
        _ => n * n,
    }
}

/// `B_L_i` traces. Secret `s` selects behaviour `b = s mod 4i`; behaviour
/// `4j + c` runs complexity `c` with constant factor `j + 1`.
pub fn gen_bl(
    variants_per_complexity: usize,
    n_secret_bits: usize,
    public_range: (i64, i64),
    rows: usize,
    noise_std: f64,
    seed: u64,
) -> Result<(TraceDataset, GroundTruth), DatasetError> {
    let behaviors = 4 * variants_per_complexity;
    if variants_per_complexity == 0 {
        return Err(DatasetError::InvalidParameter(
            "variants per complexity must be at least 1".into(),
        ));
    }
    if n_secret_bits > 24 {
        return Err(DatasetError::InvalidParameter(format!(
            "at most 24 secret bits supported, got {n_secret_bits}"
        )));
    }
    if (behaviors as u64) > 1u64 << n_secret_bits {
        return Err(DatasetError::TooFewSecretBits {
            bits: n_secret_bits,
            behaviors,
        });
    }
    let (lo, hi) = public_range;
    if lo < 1 || hi < lo {
        return Err(DatasetError::InvalidParameter(format!(
            "public range [{lo}, {hi}] must satisfy 1 <= lo <= hi"
        )));
    }
    check_noise(noise_std)?;

    let time = |s: u64, n: i64| -> f64 {
        let b = (s % behaviors as u64) as usize;
        let factor = (b / 4 + 1) as f64;
        factor * bl_cost(b % 4, n as f64)
    };

    let schema = FeatureSchema::new(
        (0..n_secret_bits)
            .map(|j| SecretFeature {
                name: j.to_string(),
                domain: Domain::Binary,
            })
            .collect(),
        vec!["n".to_string()],
        "time-units",
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let s: u64 = rng.random_range(0..1u64 << n_secret_bits);
        let n: i64 = rng.random_range(lo..=hi);
        out.push(Row {
            x: bits_of(s, n_secret_bits).iter().map(|&b| b as u8 as f64).collect(),
            y: vec![n as f64],
            t: jitter(&mut rng, time(s, n), noise_std),
        });
    }

    let mut sizes = vec![0u64; behaviors];
    for s in 0..1u64 << n_secret_bits {
        sizes[(s % behaviors as u64) as usize] += 1;
    }
    Ok((TraceDataset::new(schema, out)?, GroundTruth(sizes)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortAlgorithm {
    Bubble,
    Selection,
    Insertion,
    Merge,
    Quick,
    Heap,
}

impl SortAlgorithm {
    pub const ALL: [SortAlgorithm; 6] = [
        SortAlgorithm::Bubble,
        SortAlgorithm::Selection,
        SortAlgorithm::Insertion,
        SortAlgorithm::Merge,
        SortAlgorithm::Quick,
        SortAlgorithm::Heap,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SortAlgorithm::Bubble => "bubble",
            SortAlgorithm::Selection => "selection",
            SortAlgorithm::Insertion => "insertion",
            SortAlgorithm::Merge => "merge",
            SortAlgorithm::Quick => "quick",
            SortAlgorithm::Heap => "heap",
        }
    }

    /// Average-case comparison count on an array of length `n`.
    pub fn cost(&self, n: f64) -> f64 {
        let nlogn = n * n.log2();
        match self {
            SortAlgorithm::Bubble => n * n,
            SortAlgorithm::Selection => n * n / 2.0,
            SortAlgorithm::Insertion => n * n / 4.0,
            SortAlgorithm::Merge => nlogn,
            SortAlgorithm::Quick => 1.39 * nlogn,
            SortAlgorithm::Heap => 2.0 * nlogn,
        }
    }
}

/// Regression-only demo: public features are a one-hot algorithm choice plus
/// the array length; there are no secrets.
pub fn gen_sort_demo(max_len: usize, rows: usize, seed: u64) -> Result<TraceDataset, DatasetError> {
    gen_sort_demo_with_noise(max_len, rows, DEFAULT_NOISE_STD, seed)
}

pub(crate) fn gen_sort_demo_with_noise(
    max_len: usize,
    rows: usize,
    noise_std: f64,
    seed: u64,
) -> Result<TraceDataset, DatasetError> {
    if max_len < 2 {
        return Err(DatasetError::InvalidParameter("max_len must be at least 2".into()));
    }
    check_noise(noise_std)?;
    let public = SortAlgorithm::ALL
        .iter()
        .map(|a| a.name().to_string())
        .chain(std::iter::once("len".to_string()))
        .collect();
    let schema = FeatureSchema::new(vec![], public, "comparisons")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let alg = rng.random_range(0..SortAlgorithm::ALL.len());
        let len = rng.random_range(2..=max_len);
        let mut y = vec![0.0; SortAlgorithm::ALL.len() + 1];
        y[alg] = 1.0;
        y[SortAlgorithm::ALL.len()] = len as f64;
        let t = SortAlgorithm::ALL[alg].cost(len as f64);
        out.push(Row {
            x: vec![],
            y,
            t: jitter(&mut rng, t, noise_std),
        });
    }
    TraceDataset::new(schema, out)
}
