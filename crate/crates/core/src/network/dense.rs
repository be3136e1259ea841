use rand::Rng;
use serde::{Deserialize, Serialize};

/// Affine layer `out = W in + b`, weights stored row-major (one row per
/// output).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "DenseWire", into = "DenseWire")]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DenseWire {
    inputs: usize,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl From<DenseWire> for Dense {
    fn from(w: DenseWire) -> Self {
        Dense {
            inputs: w.inputs,
            outputs: w.bias.len(),
            weights: w.weights.into_iter().flatten().collect(),
            bias: w.bias,
        }
    }
}

impl From<Dense> for DenseWire {
    fn from(d: Dense) -> Self {
        DenseWire {
            inputs: d.inputs,
            weights: if d.inputs == 0 {
                vec![Vec::new(); d.outputs]
            } else {
                d.weights.chunks(d.inputs).map(<[f64]>::to_vec).collect()
            },
            bias: d.bias,
        }
    }
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Dense {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// He-style uniform initialization, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`,
    /// zero biases.
    pub fn he_uniform<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Dense {
        let limit = (6.0 / inputs.max(1) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Dense {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    pub fn zeros_like(&self) -> Dense {
        Dense::zeros(self.inputs, self.outputs)
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    /// Accumulates `bias + sum_i w_i * x_i` left to right. Every consumer that
    /// must agree bit-for-bit with the network (the extracted reducer) goes
    /// through this function.
    pub fn affine(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.inputs);
        (0..self.outputs)
            .map(|o| {
                self.row(o)
                    .iter()
                    .zip(input)
                    .fold(self.bias[o], |acc, (w, x)| acc + w * x)
            })
            .collect()
    }

    /// Adds `grad_out * input^T` to the weight gradient and `grad_out` to the
    /// bias gradient held in `self`.
    pub(crate) fn accumulate(&mut self, input: &[f64], grad_out: &[f64]) {
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            self.bias[o] += g;
            let row = &mut self.weights[o * self.inputs..(o + 1) * self.inputs];
            for (w, &x) in row.iter_mut().zip(input) {
                *w += g * x;
            }
        }
    }

    /// `W^T grad_out`.
    pub(crate) fn backprop_input(&self, grad_out: &[f64]) -> Vec<f64> {
        let mut g_in = vec![0.0; self.inputs];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (gi, &w) in g_in.iter_mut().zip(self.row(o)) {
                *gi += g * w;
            }
        }
        g_in
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

pub(crate) fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Runs a ReLU stack and returns every activation, input included.
pub(crate) fn stack_forward(layers: &[Dense], input: Vec<f64>) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(input);
    for layer in layers {
        let mut z = layer.affine(acts.last().expect("non-empty"));
        relu_in_place(&mut z);
        acts.push(z);
    }
    acts
}

/// Backward pass through a ReLU stack. `grad_top` is the gradient with
/// respect to the last activation; returns the gradient with respect to the
/// stack input.
pub(crate) fn stack_backward(
    layers: &[Dense],
    grads: &mut [Dense],
    acts: &[Vec<f64>],
    grad_top: Vec<f64>,
) -> Vec<f64> {
    let mut g = grad_top;
    for l in (0..layers.len()).rev() {
        for (gi, &a) in g.iter_mut().zip(&acts[l + 1]) {
            if a <= 0.0 {
                *gi = 0.0;
            }
        }
        grads[l].accumulate(&acts[l], &g);
        g = layers[l].backprop_input(&g);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_and_wire_format() {
        let d = Dense {
            inputs: 2,
            outputs: 2,
            weights: vec![1.0, 2.0, -1.0, 0.5],
            bias: vec![0.5, 0.0],
        };
        assert_eq!(d.affine(&[1.0, 1.0]), vec![3.5, -0.5]);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"inputs":2,"weights":[[1.0,2.0],[-1.0,0.5]],"bias":[0.5,0.0]}"#);
        assert_eq!(serde_json::from_str::<Dense>(&json).unwrap(), d);
    }
}
