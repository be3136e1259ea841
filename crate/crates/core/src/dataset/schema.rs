use serde::{Deserialize, Serialize};

use super::DatasetError;

/// Finite domain of one secret feature. Wire form: `"binary"` or
/// `{"int": [lo, hi]}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Binary,
    /// Inclusive integer range with unit step.
    Int([i64; 2]),
}

impl Domain {
    pub fn int(lo: i64, hi: i64) -> Self {
        Domain::Int([lo, hi])
    }

    pub fn lo(&self) -> i64 {
        match self {
            Domain::Binary => 0,
            Domain::Int([lo, _]) => *lo,
        }
    }

    pub fn hi(&self) -> i64 {
        match self {
            Domain::Binary => 1,
            Domain::Int([_, hi]) => *hi,
        }
    }

    /// Number of values, `hi - lo + 1`.
    pub fn size(&self) -> u128 {
        (self.hi() as i128 - self.lo() as i128 + 1) as u128
    }

    pub fn contains(&self, v: f64) -> bool {
        v.fract() == 0.0 && v >= self.lo() as f64 && v <= self.hi() as f64
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Domain::Binary)
    }

    /// Exact affine map into the unit interval used for network inputs.
    /// Binary features pass through unchanged.
    pub fn to_unit(&self, v: f64) -> f64 {
        match self {
            Domain::Binary => v,
            Domain::Int([lo, hi]) => (v - *lo as f64) / (*hi as f64 - *lo as f64),
        }
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        match self {
            Domain::Binary => u,
            Domain::Int([lo, hi]) => u * (*hi as f64 - *lo as f64) + *lo as f64,
        }
    }

    fn validate(&self, name: &str) -> Result<(), DatasetError> {
        if let Domain::Int([lo, hi]) = self {
            if lo >= hi {
                return Err(DatasetError::DegenerateDomain {
                    name: name.to_string(),
                    lo: *lo,
                    hi: *hi,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretFeature {
    pub name: String,
    pub domain: Domain,
}

/// Total size of a secret domain. Sizes beyond `u128` are flagged rather than
/// wrapped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainSize {
    Finite(u128),
    Unbounded,
}

impl DomainSize {
    pub fn finite(&self) -> Option<u128> {
        match self {
            DomainSize::Finite(n) => Some(*n),
            DomainSize::Unbounded => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub secret: Vec<SecretFeature>,
    pub public: Vec<String>,
    #[serde(default = "default_time_unit")]
    pub time_unit: String,
}

fn default_time_unit() -> String {
    "seconds".to_string()
}

impl FeatureSchema {
    pub fn new(
        secret: Vec<SecretFeature>,
        public: Vec<String>,
        time_unit: impl Into<String>,
    ) -> Result<Self, DatasetError> {
        let schema = FeatureSchema {
            secret,
            public,
            time_unit: time_unit.into(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        for f in &self.secret {
            f.domain.validate(&f.name)?;
        }
        // the s_/p_ column prefixes keep the two roles apart
        let secret: Vec<&String> = self.secret.iter().map(|f| &f.name).collect();
        let public: Vec<&String> = self.public.iter().collect();
        for names in [secret, public] {
            let mut seen = std::collections::BTreeSet::new();
            if let Some(dup) = names.into_iter().find(|n| !seen.insert(n.as_str())) {
                return Err(DatasetError::DuplicateFeature(dup.clone()));
            }
        }
        Ok(())
    }

    pub fn n_secret(&self) -> usize {
        self.secret.len()
    }

    pub fn n_public(&self) -> usize {
        self.public.len()
    }

    pub fn domain_size(&self) -> DomainSize {
        self.secret
            .iter()
            .try_fold(1u128, |acc, f| acc.checked_mul(f.domain.size()))
            .map_or(DomainSize::Unbounded, DomainSize::Finite)
    }

    pub fn secret_domains(&self) -> Vec<Domain> {
        self.secret.iter().map(|f| f.domain).collect()
    }

    /// Binary secret features named `0..n`.
    pub fn binary(n_secret: usize, public: Vec<String>, time_unit: &str) -> Self {
        FeatureSchema {
            secret: (0..n_secret)
                .map(|i| SecretFeature {
                    name: i.to_string(),
                    domain: Domain::Binary,
                })
                .collect(),
            public,
            time_unit: time_unit.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let schema: FeatureSchema =
            serde_json::from_str(text).map_err(|e| DatasetError::Sidecar(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_wire_format() {
        let text = r#"{"secret":[{"name":"a","domain":"binary"},{"name":"temp","domain":{"int":[-10000,10000]}}],
                       "public":["n"],"time_unit":"cost-units"}"#;
        let s = FeatureSchema::from_json(text).unwrap();
        assert_eq!(s.secret[1].domain, Domain::int(-10000, 10000));
        assert_eq!(s.domain_size(), DomainSize::Finite(2 * 20001));
        let back = FeatureSchema::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert!(s.to_json().contains(r#""int": ["#));
    }

    #[test]
    fn rejects_constant_and_inverted_ranges() {
        for (lo, hi) in [(5, 5), (3, 1)] {
            let err = FeatureSchema::new(
                vec![SecretFeature {
                    name: "x".into(),
                    domain: Domain::int(lo, hi),
                }],
                vec![],
                "s",
            )
            .unwrap_err();
            assert!(matches!(err, DatasetError::DegenerateDomain { .. }));
        }
    }

    #[test]
    fn rejects_shared_names_within_a_role() {
        let bit = |n: &str| SecretFeature {
            name: n.into(),
            domain: Domain::Binary,
        };
        let err = FeatureSchema::new(vec![bit("x"), bit("x")], vec![], "s").unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateFeature(_)));
        let err = FeatureSchema::new(vec![], vec!["n".into(), "n".into()], "s").unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateFeature(_)));
        assert!(FeatureSchema::new(vec![bit("x")], vec!["x".into()], "s").is_ok());
    }

    #[test]
    fn domain_size_overflow_is_flagged() {
        assert_eq!(
            FeatureSchema::binary(127, vec![], "s").domain_size(),
            DomainSize::Finite(1u128 << 127)
        );
        assert_eq!(
            FeatureSchema::binary(1024, vec![], "s").domain_size(),
            DomainSize::Unbounded
        );
    }

    #[test]
    fn unit_map_matches_thermostat_range() {
        let d = Domain::int(-10000, 10000);
        assert_eq!(d.to_unit(0.0), 0.5);
        assert_eq!(d.from_unit(d.to_unit(1234.0)), 1234.0);
        assert_eq!(Domain::Binary.to_unit(1.0), 1.0);
    }
}
