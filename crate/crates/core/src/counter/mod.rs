//! Per-class counting of secret inputs under a trained reducer.
//!
//! The reducer maps every secret to a `k`-bit interface valuation; secrets
//! sharing a valuation are indistinguishable through timing. A census
//! records, for every valuation, whether any secret reaches it and how many
//! (up to a cap). Two routes compute it: plain enumeration, and a
//! branch-and-bound search that fixes interface bits over whole input boxes
//! with interval bound propagation.

mod bounds;
mod census;
mod reducer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bounds::{propagate_bounds, Interval};
pub use census::{bnb_census, brute_force_census, BRUTE_FORCE_LIMIT, DEFAULT_BUDGET};
pub use reducer::{extract_reducer, ReducerNet, SecretDomain};

#[derive(Debug, Error)]
pub enum CounterError {
    #[error("k=0 model has no reducer: nothing leaks through it")]
    ZeroInterfaceWidth,
    #[error("extracted reducer disagrees with the network on {0:?}")]
    ReducerMismatch(Vec<f64>),
    #[error("secret domain of {0} elements is too large for enumeration (limit 2^20)")]
    DomainTooLarge(String),
    #[error("node budget exhausted after {nodes} nodes; census incomplete")]
    BudgetExhausted { nodes: u64, partial: Box<ClassCensus> },
    #[error("census is incomplete")]
    IncompleteCensus,
    #[error("cap must be at least 1")]
    InvalidCap,
    #[error("invalid reducer: {0}")]
    InvalidReducer(String),
    #[error("census parse error: {0}")]
    Parse(String),
}

/// Outcome for one interface valuation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassStatus {
    Infeasible,
    Counted(u64),
    /// Counting stopped at the cap; the class has at least this many secrets.
    CapHit(u64),
    /// Search budget ran out before the class was decided.
    Unresolved,
}

impl ClassStatus {
    /// Status for `count` secrets under `cap`: a class whose count reaches the
    /// cap is reported as `CapHit`.
    pub fn from_count(count: u64, cap: Option<u64>) -> ClassStatus {
        match cap {
            _ if count == 0 => ClassStatus::Infeasible,
            Some(c) if count >= c => ClassStatus::CapHit(c),
            _ => ClassStatus::Counted(count),
        }
    }

    /// `min(true count, cap)` for decided classes.
    pub fn capped_count(&self) -> Option<u64> {
        match self {
            ClassStatus::Infeasible => Some(0),
            ClassStatus::Counted(c) | ClassStatus::CapHit(c) => Some(*c),
            ClassStatus::Unresolved => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, ClassStatus::Counted(_) | ClassStatus::CapHit(_))
    }
}

/// Census over all `2^k` valuations. Index `v` holds the valuation whose bit
/// string, interface unit 0 first, reads as `v` in binary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassCensus {
    pub k: usize,
    pub cap: Option<u64>,
    pub classes: Vec<ClassStatus>,
    pub complete: bool,
    /// Search nodes visited (domain elements for enumeration).
    pub nodes: u64,
    /// Exact uncapped counts, kept by enumeration for oracle comparisons.
    pub true_counts: Option<Vec<u64>>,
    pub model_hash: Option<String>,
    pub manifest_hash: Option<String>,
}

pub fn valuation_string(v: usize, k: usize) -> String {
    (0..k)
        .map(|i| if (v >> (k - 1 - i)) & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub fn valuation_index(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

impl ClassCensus {
    pub fn feasible_count(&self) -> usize {
        self.classes.iter().filter(|c| c.is_feasible()).count()
    }

    /// Same census with classes and counts only, for equality checks across
    /// counting routes.
    pub fn outcome(&self) -> (usize, Option<u64>, &[ClassStatus], bool) {
        (self.k, self.cap, &self.classes, self.complete)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CensusWire::from(self)).expect("census serializes")
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(CensusWire::from(self)).expect("census serializes")
    }

    pub fn from_json(text: &str) -> Result<ClassCensus, CounterError> {
        let w: CensusWire =
            serde_json::from_str(text).map_err(|e| CounterError::Parse(e.to_string()))?;
        ClassCensus::try_from(w)
    }
}

/// Feasible classes in valuation order with their capped counts.
pub fn feasible_classes(census: &ClassCensus) -> Result<Vec<(String, u64)>, CounterError> {
    if !census.complete {
        return Err(CounterError::IncompleteCensus);
    }
    Ok(census
        .classes
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_feasible())
        .map(|(v, c)| (valuation_string(v, census.k), c.capped_count().unwrap_or(0)))
        .collect())
}

pub const CENSUS_FORMAT: &str = "timeleak-census";
pub const CENSUS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CensusWire {
    format: String,
    version: u32,
    k: usize,
    cap: Option<u64>,
    complete: bool,
    nodes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    manifest_hash: Option<String>,
    classes: Vec<ClassWire>,
}

#[derive(Serialize, Deserialize)]
struct ClassWire {
    valuation: String,
    status: String,
    /// Capped count; absent for unresolved classes.
    count: Option<u64>,
}

impl ClassWire {
    fn new(valuation: String, s: ClassStatus) -> Self {
        let status = match s {
            ClassStatus::Infeasible => "infeasible",
            ClassStatus::Counted(_) => "counted",
            ClassStatus::CapHit(_) => "cap_hit",
            ClassStatus::Unresolved => "unresolved",
        };
        ClassWire {
            valuation,
            status: status.to_string(),
            count: s.capped_count(),
        }
    }

    fn status(&self) -> Result<ClassStatus, CounterError> {
        let count = || {
            self.count
                .ok_or_else(|| CounterError::Parse(format!("class {} lacks a count", self.valuation)))
        };
        Ok(match self.status.as_str() {
            "infeasible" => ClassStatus::Infeasible,
            "counted" => ClassStatus::Counted(count()?),
            "cap_hit" => ClassStatus::CapHit(count()?),
            "unresolved" => ClassStatus::Unresolved,
            other => return Err(CounterError::Parse(format!("unknown class status `{other}`"))),
        })
    }
}

impl From<&ClassCensus> for CensusWire {
    fn from(c: &ClassCensus) -> Self {
        CensusWire {
            format: CENSUS_FORMAT.into(),
            version: CENSUS_VERSION,
            k: c.k,
            cap: c.cap,
            complete: c.complete,
            nodes: c.nodes,
            model_hash: c.model_hash.clone(),
            manifest_hash: c.manifest_hash.clone(),
            classes: c
                .classes
                .iter()
                .enumerate()
                .map(|(v, s)| ClassWire::new(valuation_string(v, c.k), *s))
                .collect(),
        }
    }
}

impl TryFrom<CensusWire> for ClassCensus {
    type Error = CounterError;

    fn try_from(w: CensusWire) -> Result<Self, CounterError> {
        if w.format != CENSUS_FORMAT || w.version != CENSUS_VERSION {
            return Err(CounterError::Parse(format!(
                "expected {CENSUS_FORMAT}/{CENSUS_VERSION}, found {}/{}",
                w.format, w.version
            )));
        }
        if w.k > 30 || w.classes.len() != 1 << w.k {
            return Err(CounterError::Parse(format!(
                "{} classes listed for k = {}",
                w.classes.len(),
                w.k
            )));
        }
        let mut classes = vec![ClassStatus::Unresolved; 1 << w.k];
        for cw in w.classes {
            let bits: Option<Vec<bool>> = cw
                .valuation
                .chars()
                .map(|ch| match ch {
                    '0' => Some(false),
                    '1' => Some(true),
                    _ => None,
                })
                .collect();
            match bits {
                Some(b) if b.len() == w.k => classes[valuation_index(&b)] = cw.status()?,
                _ => {
                    return Err(CounterError::Parse(format!(
                        "bad valuation `{}`",
                        cw.valuation
                    )))
                }
            }
        }
        Ok(ClassCensus {
            k: w.k,
            cap: w.cap,
            classes,
            complete: w.complete,
            nodes: w.nodes,
            true_counts: None,
            model_hash: w.model_hash,
            manifest_hash: w.manifest_hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn census(classes: Vec<ClassStatus>, k: usize) -> ClassCensus {
        ClassCensus {
            k,
            cap: Some(10),
            classes,
            complete: true,
            nodes: 7,
            true_counts: None,
            model_hash: None,
            manifest_hash: None,
        }
    }

    #[test]
    fn cap_semantics() {
        assert_eq!(ClassStatus::from_count(0, Some(5)), ClassStatus::Infeasible);
        assert_eq!(ClassStatus::from_count(4, Some(5)), ClassStatus::Counted(4));
        assert_eq!(ClassStatus::from_count(5, Some(5)), ClassStatus::CapHit(5));
        assert_eq!(ClassStatus::from_count(9, None), ClassStatus::Counted(9));
    }

    #[test]
    fn feasible_classes_in_valuation_order() {
        let c = census(vec![ClassStatus::Counted(3), ClassStatus::Counted(1)], 1);
        assert_eq!(
            feasible_classes(&c).unwrap(),
            vec![("0".to_string(), 3), ("1".to_string(), 1)]
        );
        let c = census(
            vec![
                ClassStatus::Infeasible,
                ClassStatus::Infeasible,
                ClassStatus::CapHit(10),
                ClassStatus::Infeasible,
            ],
            2,
        );
        assert_eq!(feasible_classes(&c).unwrap(), vec![("10".to_string(), 10)]);
        let mut inc = c.clone();
        inc.complete = false;
        assert!(matches!(feasible_classes(&inc), Err(CounterError::IncompleteCensus)));
    }

    #[test]
    fn json_round_trip_and_wire_shape() {
        let c = census(
            vec![
                ClassStatus::Infeasible,
                ClassStatus::Counted(3),
                ClassStatus::CapHit(10),
                ClassStatus::Counted(1),
            ],
            2,
        );
        let text = c.to_json();
        assert!(text.contains(r#""valuation": "10""#));
        assert!(text.contains(r#""status": "cap_hit""#));
        assert!(text.contains(r#""complete": true"#));
        assert_eq!(ClassCensus::from_json(&text).unwrap(), c);
        assert!(ClassCensus::from_json("[]").is_err());
    }

    #[test]
    fn valuation_strings_are_msb_first() {
        assert_eq!(valuation_string(2, 3), "010");
        assert_eq!(valuation_index(&[false, true, false]), 2);
        assert_eq!(valuation_string(0, 0), "");
    }
}
