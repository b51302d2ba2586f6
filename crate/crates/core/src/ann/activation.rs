use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivationKind {
    Tanh,
    Linear,
    Relu,
    Gelu,
    Selu,
    Sigmoid,
    Softmax,
    Softplus,
    Softsign,
    Swish,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 10] = [
        ActivationKind::Tanh,
        ActivationKind::Linear,
        ActivationKind::Relu,
        ActivationKind::Gelu,
        ActivationKind::Selu,
        ActivationKind::Sigmoid,
        ActivationKind::Softmax,
        ActivationKind::Softplus,
        ActivationKind::Softsign,
        ActivationKind::Swish,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Tanh => "tanh",
            ActivationKind::Linear => "linear",
            ActivationKind::Relu => "relu",
            ActivationKind::Gelu => "gelu",
            ActivationKind::Selu => "selu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Softmax => "softmax",
            ActivationKind::Softplus => "softplus",
            ActivationKind::Softsign => "softsign",
            ActivationKind::Swish => "swish",
        }
    }

    /// Whether the derivative jumps at `v = 0`.
    pub fn has_kink(self) -> bool {
        matches!(self, ActivationKind::Relu | ActivationKind::Selu)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("activation", s))
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn std_normal_pdf(v: f64) -> f64 {
    (-0.5 * v * v).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(v: f64) -> f64 {
    0.5 * libm::erfc(-v / std::f64::consts::SQRT_2)
}

/// Element-wise activation. Softmax of a single element is the constant 1;
/// use [`activate_layer`] for softmax over a layer.
pub fn activation(kind: ActivationKind, v: f64) -> f64 {
    match kind {
        // (e^v - e^-v) / (e^v + e^-v), saturating cleanly for large |v|
        ActivationKind::Tanh => v.tanh(),
        ActivationKind::Linear => v,
        ActivationKind::Relu => v.max(0.0),
        ActivationKind::Gelu => v * std_normal_cdf(v),
        ActivationKind::Selu => {
            if v > 0.0 {
                SELU_LAMBDA * v
            } else {
                SELU_LAMBDA * SELU_ALPHA * v.exp_m1()
            }
        }
        ActivationKind::Sigmoid => sigmoid(v),
        ActivationKind::Softmax => 1.0,
        ActivationKind::Softplus => v.max(0.0) + (-v.abs()).exp().ln_1p(),
        ActivationKind::Softsign => v / (1.0 + v.abs()),
        ActivationKind::Swish => v * sigmoid(v),
    }
}

pub fn activation_derivative(kind: ActivationKind, v: f64) -> f64 {
    match kind {
        ActivationKind::Tanh => {
            let t = v.tanh();
            1.0 - t * t
        }
        ActivationKind::Linear => 1.0,
        ActivationKind::Relu => {
            if v > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        ActivationKind::Gelu => std_normal_cdf(v) + v * std_normal_pdf(v),
        ActivationKind::Selu => {
            if v > 0.0 {
                SELU_LAMBDA
            } else {
                SELU_LAMBDA * SELU_ALPHA * v.exp()
            }
        }
        ActivationKind::Sigmoid => {
            let s = sigmoid(v);
            s * (1.0 - s)
        }
        ActivationKind::Softmax => 0.0,
        ActivationKind::Softplus => sigmoid(v),
        ActivationKind::Softsign => {
            let d = 1.0 + v.abs();
            1.0 / (d * d)
        }
        ActivationKind::Swish => {
            let s = sigmoid(v);
            s + v * s * (1.0 - s)
        }
    }
}

/// Applies `kind` to a whole layer's potentials.
pub fn activate_layer(kind: ActivationKind, v: &[f64]) -> Vec<f64> {
    match kind {
        ActivationKind::Softmax => {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect()
        }
        _ => v.iter().map(|&x| activation(kind, x)).collect(),
    }
}

/// Maps `g = dL/dy` to `dL/dv` through the layer's activation. Softmax uses
/// its full Jacobian `dy_i/dv_j = y_i (delta_ij - y_j)`.
pub fn backprop_layer(kind: ActivationKind, v: &[f64], y: &[f64], g: &[f64]) -> Vec<f64> {
    match kind {
        ActivationKind::Softmax => {
            let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
            y.iter().zip(g).map(|(yi, gi)| yi * (gi - dot)).collect()
        }
        _ => v
            .iter()
            .zip(g)
            .map(|(&vi, gi)| activation_derivative(kind, vi) * gi)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tanh_matches_exponential_form() {
        for &v in &[-3.0_f64, -0.5, 0.0, 0.25, 2.0] {
            let e = (v.exp() - (-v).exp()) / (v.exp() + (-v).exp());
            assert!((activation(ActivationKind::Tanh, v) - e).abs() < 1e-15);
        }
        assert!((activation(ActivationKind::Tanh, 0.5) - 0.46212).abs() < 1e-5);
        assert_eq!(activation_derivative(ActivationKind::Tanh, 0.0), 1.0);
    }

    #[test]
    fn saturation_is_stable() {
        for kind in ActivationKind::ALL {
            for v in [-1e3, -50.0, 50.0, 1e3] {
                assert!(activation(kind, v).is_finite(), "{kind} at {v}");
                assert!(activation_derivative(kind, v).is_finite(), "{kind}' at {v}");
            }
        }
        assert_eq!(activation(ActivationKind::Tanh, 800.0), 1.0);
        assert_eq!(activation(ActivationKind::Tanh, -800.0), -1.0);
        assert_eq!(activation_derivative(ActivationKind::Tanh, 800.0), 0.0);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for kind in ActivationKind::ALL {
            if kind == ActivationKind::Softmax {
                continue;
            }
            let mut checked = 0;
            while checked < 100 {
                let v: f64 = rng.gen_range(-5.0..5.0);
                if kind.has_kink() && v.abs() < 1e-3 {
                    continue;
                }
                let fd = (activation(kind, v + h) - activation(kind, v - h)) / (2.0 * h);
                let an = activation_derivative(kind, v);
                let scale = an.abs().max(fd.abs()).max(1e-3);
                assert!((fd - an).abs() <= 1e-6 * scale, "{kind} at {v}: {an} vs {fd}");
                checked += 1;
            }
        }
    }

    #[test]
    fn softmax_layer_jacobian() {
        let v = [0.3, -1.2, 2.0];
        let y = activate_layer(ActivationKind::Softmax, &v);
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let g = [0.7, -0.1, 0.4];
        let an = backprop_layer(ActivationKind::Softmax, &v, &y, &g);
        let h = 1e-6;
        for j in 0..3 {
            let mut p = v;
            let mut m = v;
            p[j] += h;
            m[j] -= h;
            let yp = activate_layer(ActivationKind::Softmax, &p);
            let ym = activate_layer(ActivationKind::Softmax, &m);
            let fd: f64 = (0..3).map(|i| g[i] * (yp[i] - ym[i]) / (2.0 * h)).sum();
            assert!((fd - an[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn names_round_trip() {
        for kind in ActivationKind::ALL {
            assert_eq!(kind.name().parse::<ActivationKind>().unwrap(), kind);
        }
        assert!("elu".parse::<ActivationKind>().is_err());
    }
}
