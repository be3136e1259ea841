use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{valuation_index, CounterError};
use crate::dataset::{Domain, DomainSize, FeatureSchema};
use crate::network::{binarize, Dense, TriBranchNetwork};

/// Number of random domain points checked against the parent network when a
/// reducer is extracted.
const SELF_CHECK_POINTS: usize = 1000;

/// Finite secret domain, enumerated lexicographically (last feature fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct SecretDomain {
    pub domains: Vec<Domain>,
}

impl SecretDomain {
    pub fn new(domains: Vec<Domain>) -> Self {
        SecretDomain { domains }
    }

    pub fn from_schema(schema: &FeatureSchema) -> Self {
        SecretDomain::new(schema.secret_domains())
    }

    pub fn size(&self) -> DomainSize {
        self.domains
            .iter()
            .try_fold(1u128, |acc, d| acc.checked_mul(d.size()))
            .map_or(DomainSize::Unbounded, DomainSize::Finite)
    }

    /// Calls `f` on every element in lexicographic order.
    pub fn for_each(&self, mut f: impl FnMut(&[f64])) {
        let mut cur: Vec<i64> = self.domains.iter().map(Domain::lo).collect();
        let mut point: Vec<f64> = cur.iter().map(|&v| v as f64).collect();
        loop {
            f(&point);
            let mut j = self.domains.len();
            loop {
                if j == 0 {
                    return;
                }
                j -= 1;
                if cur[j] < self.domains[j].hi() {
                    cur[j] += 1;
                    point[j] = cur[j] as f64;
                    break;
                }
                cur[j] = self.domains[j].lo();
                point[j] = cur[j] as f64;
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.domains
            .iter()
            .map(|d| rng.random_range(d.lo()..=d.hi()) as f64)
            .collect()
    }
}

/// Secret branch of a trained network together with the exact input maps:
/// raw secret vector to interface valuation.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducerNet {
    /// Maps applied to raw secret values before the first layer.
    pub input_maps: Vec<Domain>,
    pub hidden: Vec<Dense>,
    pub interface: Dense,
}

impl ReducerNet {
    pub fn new(input_maps: Vec<Domain>, hidden: Vec<Dense>, interface: Dense) -> Result<Self, CounterError> {
        let mut width = input_maps.len();
        for (i, d) in hidden.iter().chain(std::iter::once(&interface)).enumerate() {
            if d.inputs != width || d.weights.len() != d.inputs * d.outputs || d.bias.len() != d.outputs {
                return Err(CounterError::InvalidReducer(format!(
                    "layer {i} has shape {}x{}, expected {width} inputs",
                    d.outputs, d.inputs
                )));
            }
            width = d.outputs;
        }
        if interface.outputs == 0 {
            return Err(CounterError::ZeroInterfaceWidth);
        }
        if interface.outputs > 30 {
            return Err(CounterError::InvalidReducer(format!(
                "{} interface bits is beyond the supported 30",
                interface.outputs
            )));
        }
        Ok(ReducerNet {
            input_maps,
            hidden,
            interface,
        })
    }

    pub fn k(&self) -> usize {
        self.interface.outputs
    }

    pub fn n(&self) -> usize {
        self.input_maps.len()
    }

    pub fn preact(&self, x: &[f64]) -> Vec<f64> {
        let mut a: Vec<f64> = self.input_maps.iter().zip(x).map(|(d, &v)| d.to_unit(v)).collect();
        for layer in &self.hidden {
            a = layer.affine(&a);
            for v in a.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        self.interface.affine(&a)
    }

    /// Interface bits for a raw secret vector.
    pub fn eval(&self, x: &[f64]) -> Vec<bool> {
        binarize(&self.preact(x))
    }

    pub fn valuation(&self, x: &[f64]) -> usize {
        valuation_index(&self.eval(x))
    }
}

/// Secret branch and input maps of `net`, checked against the full network
/// on random domain points.
pub fn extract_reducer(net: &TriBranchNetwork) -> Result<ReducerNet, CounterError> {
    let interface = net
        .params
        .interface
        .clone()
        .ok_or(CounterError::ZeroInterfaceWidth)?;
    let reducer = ReducerNet::new(net.normalizer.secret.clone(), net.params.secret.clone(), interface)?;

    let dom = SecretDomain::from_schema(&net.schema);
    let mut rng = ChaCha8Rng::seed_from_u64(net.seed ^ 0x5eed_c0de);
    for _ in 0..SELF_CHECK_POINTS {
        let x = dom.sample(&mut rng);
        let expected = net
            .alpha(&x)
            .map_err(|e| CounterError::InvalidReducer(e.to_string()))?;
        if reducer.eval(&x) != expected {
            return Err(CounterError::ReducerMismatch(x));
        }
    }
    Ok(reducer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Architecture;

    #[test]
    fn lexicographic_enumeration() {
        let dom = SecretDomain::new(vec![Domain::Binary, Domain::int(-1, 1)]);
        let mut seen = Vec::new();
        dom.for_each(|x| seen.push(x.to_vec()));
        assert_eq!(
            seen,
            vec![
                vec![0.0, -1.0],
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, -1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0]
            ]
        );
        assert_eq!(dom.size(), DomainSize::Finite(6));
        let mut count = 0;
        SecretDomain::new(vec![]).for_each(|_| count += 1);
        assert_eq!(count, 1);
    }

    #[test]
    fn extraction_agrees_with_network() {
        let arch = Architecture {
            k: 3,
            secret_widths: vec![8, 6],
            public_widths: vec![4],
            joint_widths: vec![5],
            n: 5,
            m: 2,
        };
        let schema = FeatureSchema::new(
            (0..5)
                .map(|i| crate::dataset::SecretFeature {
                    name: i.to_string(),
                    domain: if i < 3 { Domain::Binary } else { Domain::int(-20, 40) },
                })
                .collect(),
            vec!["a".into(), "b".into()],
            "s",
        )
        .unwrap();
        let net = TriBranchNetwork::init(&arch, schema, 42).unwrap();
        let r = extract_reducer(&net).unwrap();
        let dom = SecretDomain::from_schema(&net.schema);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = dom.sample(&mut rng);
            assert_eq!(r.eval(&x), net.alpha(&x).unwrap());
        }
    }

    #[test]
    fn zero_width_interface_is_rejected() {
        let arch = Architecture {
            k: 0,
            secret_widths: vec![],
            public_widths: vec![3],
            joint_widths: vec![3],
            n: 2,
            m: 1,
        };
        let net = TriBranchNetwork::init(&arch, FeatureSchema::binary(2, vec!["y".into()], "s"), 0).unwrap();
        assert!(matches!(extract_reducer(&net), Err(CounterError::ZeroInterfaceWidth)));
    }
}
