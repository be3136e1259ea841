use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::{stack_forward, Dense};
use super::{Architecture, NetworkError};
use crate::dataset::{FeatureSchema, Normalizer};

/// Hard threshold of the interface layer. A pre-activation of exactly zero
/// maps to bit 1; the counter relies on the same convention.
pub fn binarize(preact: &[f64]) -> Vec<bool> {
    preact.iter().map(|&u| u >= 0.0).collect()
}

pub(crate) fn bits_as_inputs(bits: &[bool]) -> impl Iterator<Item = f64> + '_ {
    bits.iter().map(|&b| if b { 1.0 } else { 0.0 })
}

/// All trainable tensors. Also used as the shape for gradients and optimizer
/// moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub secret: Vec<Dense>,
    pub interface: Option<Dense>,
    pub public: Vec<Dense>,
    /// Hidden joint layers; the first one reads `[bits | public output]`.
    pub joint: Vec<Dense>,
    pub output: Dense,
}

impl ParamSet {
    fn build(arch: &Architecture, mut make: impl FnMut(usize, usize) -> Dense) -> ParamSet {
        let chain = |dims_in: usize, widths: &[usize], make: &mut dyn FnMut(usize, usize) -> Dense| {
            let mut prev = dims_in;
            widths
                .iter()
                .map(|&w| {
                    let d = make(prev, w);
                    prev = w;
                    d
                })
                .collect::<Vec<_>>()
        };
        let (secret, interface) = if arch.k > 0 {
            let secret = chain(arch.n, &arch.secret_widths, &mut make);
            let last = arch.secret_widths.last().copied().unwrap_or(arch.n);
            (secret, Some(make(last, arch.k)))
        } else {
            (Vec::new(), None)
        };
        let public = chain(arch.m, &arch.public_widths, &mut make);
        let joint = chain(arch.k + arch.public_out(), &arch.joint_widths, &mut make);
        let last = arch
            .joint_widths
            .last()
            .copied()
            .unwrap_or(arch.k + arch.public_out());
        let output = make(last, 1);
        ParamSet {
            secret,
            interface,
            public,
            joint,
            output,
        }
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            secret: self.secret.iter().map(Dense::zeros_like).collect(),
            interface: self.interface.as_ref().map(Dense::zeros_like),
            public: self.public.iter().map(Dense::zeros_like).collect(),
            joint: self.joint.iter().map(Dense::zeros_like).collect(),
            output: self.output.zeros_like(),
        }
    }

    /// Layers in a fixed order: secret, interface, public, joint, output.
    pub fn layers(&self) -> Vec<&Dense> {
        self.secret
            .iter()
            .chain(self.interface.as_ref())
            .chain(&self.public)
            .chain(&self.joint)
            .chain(std::iter::once(&self.output))
            .collect()
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Dense> {
        self.secret
            .iter_mut()
            .chain(self.interface.as_mut())
            .chain(&mut self.public)
            .chain(&mut self.joint)
            .chain(std::iter::once(&mut self.output))
            .collect()
    }

    /// Weight and bias tensors in layer order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .into_iter()
            .flat_map(|d| [d.weights.as_slice(), d.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|d| [d.weights.as_mut_slice(), d.bias.as_mut_slice()])
            .collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|d| d.param_count()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriBranchNetwork {
    pub architecture: Architecture,
    pub params: ParamSet,
    pub normalizer: Normalizer,
    pub schema: FeatureSchema,
    pub seed: u64,
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub(crate) struct ForwardTrace {
    pub secret_acts: Vec<Vec<f64>>,
    pub preact: Vec<f64>,
    pub bits: Vec<bool>,
    pub public_acts: Vec<Vec<f64>>,
    pub joint_acts: Vec<Vec<f64>>,
    pub output: f64,
}

impl TriBranchNetwork {
    /// Fresh network with He-uniform weights, deterministic in `seed`. The
    /// normalizer starts as the identity on public features and time.
    pub fn init(arch: &Architecture, schema: FeatureSchema, seed: u64) -> Result<Self, NetworkError> {
        arch.validate()?;
        check_dim("secret features", arch.n, schema.n_secret())?;
        check_dim("public features", arch.m, schema.n_public())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ParamSet::build(arch, |i, o| Dense::he_uniform(i, o, &mut rng));
        let normalizer = Normalizer {
            secret: schema.secret_domains(),
            public: vec![crate::dataset::Affine::IDENTITY; schema.n_public()],
            time: crate::dataset::Affine::IDENTITY,
        };
        Ok(TriBranchNetwork {
            architecture: arch.clone(),
            params,
            normalizer,
            schema,
            seed,
        })
    }

    /// Network with every weight and bias zero.
    pub fn zeros(arch: &Architecture, schema: FeatureSchema) -> Result<Self, NetworkError> {
        let mut net = Self::init(arch, schema, 0)?;
        net.params = ParamSet::build(arch, Dense::zeros);
        Ok(net)
    }

    pub fn k(&self) -> usize {
        self.architecture.k
    }

    /// The same timing function with a `k`-bit interface: existing bits and
    /// the public, joint and output weights are kept, added bits start from
    /// fresh `seed` weights and have zero influence on the joint branch.
    pub fn widen(&self, k: usize, seed: u64) -> Result<Self, NetworkError> {
        let old_k = self.architecture.k;
        if k < old_k {
            return Err(NetworkError::InvalidArchitecture(format!(
                "cannot narrow a {old_k}-bit interface to {k} bits"
            )));
        }
        let mut net = Self::init(&self.architecture.with_k(k), self.schema.clone(), seed)?;
        net.normalizer = self.normalizer.clone();
        let (p, q) = (&mut net.params, &self.params);
        if let Some(old) = &q.interface {
            p.secret.clone_from(&q.secret);
            let iface = p.interface.as_mut().expect("k >= old_k > 0");
            iface.weights[..old.weights.len()].copy_from_slice(&old.weights);
            iface.bias[..old_k].copy_from_slice(&old.bias);
        }
        p.public.clone_from(&q.public);
        p.joint.clone_from(&q.joint);
        p.output = q.output.clone();
        let first = p.joint.first_mut().unwrap_or(&mut p.output);
        let (old_in, inputs) = (first.inputs, first.inputs + k - old_k);
        let mut weights = vec![0.0; first.outputs * inputs];
        for o in 0..first.outputs {
            let (row, old_row) = (&mut weights[o * inputs..][..inputs], &first.weights[o * old_in..][..old_in]);
            row[..old_k].copy_from_slice(&old_row[..old_k]);
            row[k..].copy_from_slice(&old_row[old_k..]);
        }
        first.weights = weights;
        first.inputs = inputs;
        Ok(net)
    }

    pub(crate) fn trace(&self, x: &[f64], y: &[f64]) -> ForwardTrace {
        let p = &self.params;
        let (secret_acts, preact) = match &p.interface {
            Some(iface) => {
                let acts = stack_forward(&p.secret, x.to_vec());
                let preact = iface.affine(acts.last().expect("non-empty"));
                (acts, preact)
            }
            None => (Vec::new(), Vec::new()),
        };
        let bits = binarize(&preact);
        let public_acts = stack_forward(&p.public, y.to_vec());
        let joint_in: Vec<f64> = bits_as_inputs(&bits)
            .chain(public_acts.last().expect("non-empty").iter().copied())
            .collect();
        let joint_acts = stack_forward(&p.joint, joint_in);
        let output = p.output.affine(joint_acts.last().expect("non-empty"))[0];
        ForwardTrace {
            secret_acts,
            preact,
            bits,
            public_acts,
            joint_acts,
            output,
        }
    }

    pub(crate) fn check_inputs(&self, x: &[f64], y: &[f64]) -> Result<(), NetworkError> {
        check_dim("secret inputs", self.architecture.n, x.len())?;
        check_dim("public inputs", self.architecture.m, y.len())
    }

    /// Normalized prediction and interface bits for normalized inputs.
    pub fn forward(&self, x: &[f64], y: &[f64]) -> Result<(f64, Vec<bool>), NetworkError> {
        self.check_inputs(x, y)?;
        let t = self.trace(x, y);
        Ok((t.output, t.bits))
    }

    /// Interface valuation of a normalized secret vector.
    pub fn interface_bits(&self, x: &[f64]) -> Result<Vec<bool>, NetworkError> {
        check_dim("secret inputs", self.architecture.n, x.len())?;
        Ok(match &self.params.interface {
            Some(iface) => {
                let acts = stack_forward(&self.params.secret, x.to_vec());
                binarize(&iface.affine(acts.last().expect("non-empty")))
            }
            None => Vec::new(),
        })
    }

    /// Predicted execution time, in the dataset's time unit, for raw inputs.
    pub fn predict(&self, x: &[f64], y: &[f64]) -> Result<f64, NetworkError> {
        let xn = self.normalizer.secret_in(x);
        let yn = self.normalizer.public_in(y);
        let (t, _) = self.forward(&xn, &yn)?;
        Ok(self.normalizer.time.unapply(t))
    }

    /// The reducer applied to a raw secret vector.
    pub fn alpha(&self, x: &[f64]) -> Result<Vec<bool>, NetworkError> {
        check_dim("secret inputs", self.architecture.n, x.len())?;
        self.interface_bits(&self.normalizer.secret_in(x))
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), NetworkError> {
    if expected == got {
        Ok(())
    } else {
        Err(NetworkError::DimensionMismatch { what, expected, got })
    }
}
