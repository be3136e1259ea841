use serde::{Deserialize, Serialize};

use super::ReducerNet;
use crate::network::Dense;

/// Outward widening applied to every affine output whose inputs are not all
/// points, relative to the summed term magnitudes. Covers floating-point
/// rounding of both the bound computation and concrete evaluation.
const ROUNDING_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn relu(&self) -> Interval {
        Interval {
            lo: self.lo.max(0.0),
            hi: self.hi.max(0.0),
        }
    }

    /// Interface bit fixed over the whole interval: `lo >= 0` means 1,
    /// `hi < 0` means 0.
    pub fn bit(&self) -> Option<bool> {
        if self.lo >= 0.0 {
            Some(true)
        } else if self.hi < 0.0 {
            Some(false)
        } else {
            None
        }
    }

    fn is_point(&self) -> bool {
        self.lo == self.hi
    }
}

fn affine_bounds(layer: &Dense, input: &[Interval]) -> Vec<Interval> {
    let exact = input.iter().all(Interval::is_point);
    (0..layer.outputs)
        .map(|o| {
            let b = layer.bias[o];
            let (mut lo, mut hi, mut mag) = (b, b, b.abs());
            for (&w, iv) in layer.row(o).iter().zip(input) {
                if w >= 0.0 {
                    lo += w * iv.lo;
                    hi += w * iv.hi;
                } else {
                    lo += w * iv.hi;
                    hi += w * iv.lo;
                }
                mag += w.abs() * iv.lo.abs().max(iv.hi.abs());
            }
            if exact {
                Interval::new(lo, hi)
            } else {
                let slack = ROUNDING_SLACK * mag;
                Interval::new(lo - slack, hi + slack)
            }
        })
        .collect()
}

/// Sound pre-activation bounds of every interface unit for raw secret inputs
/// ranging over `region` (one closed interval per feature).
pub fn propagate_bounds(r: &ReducerNet, region: &[Interval]) -> Vec<Interval> {
    debug_assert_eq!(region.len(), r.n());
    let mut cur: Vec<Interval> = r
        .input_maps
        .iter()
        .zip(region)
        .map(|(d, iv)| {
            // domain maps are increasing affine maps
            Interval::new(d.to_unit(iv.lo), d.to_unit(iv.hi))
        })
        .collect();
    for layer in &r.hidden {
        cur = affine_bounds(layer, &cur).iter().map(Interval::relu).collect();
    }
    affine_bounds(&r.interface, &cur)
}
