use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation::{activate_layer, backprop_layer, ActivationKind};
use crate::error::{Error, Result};

/// Fully connected layer. `weights` is row-major `(outputs, inputs)`, so
/// `weights[k * inputs + j]` connects input `j` to neuron `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn weight(&self, k: usize, j: usize) -> f64 {
        self.weights[k * self.inputs + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    pub layers: Vec<Layer>,
    pub hidden_activation: ActivationKind,
    pub output_activation: ActivationKind,
}

/// Values retained from one forward pass, per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Layer input x_j.
    pub input: Vec<f64>,
    /// Weighted sum u_k.
    pub sum: Vec<f64>,
    /// Induced potential v_k = u_k + b_k.
    pub potential: Vec<f64>,
    /// Output y_k = phi(v_k).
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        &self.layers.last().expect("network has layers").output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub input: Vec<f64>,
    pub desired: Vec<f64>,
}

pub const DEFAULT_LAYER_SIZES: [usize; 4] = [3, 6, 3, 1];

impl MlpNetwork {
    pub fn zeros(
        layer_sizes: &[usize],
        hidden_activation: ActivationKind,
        output_activation: ActivationKind,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Shape(format!(
                "need at least two non-empty layers, got {layer_sizes:?}"
            )));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Layer {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        Ok(MlpNetwork {
            layers,
            hidden_activation,
            output_activation,
        })
    }

    /// Weights and biases drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn initialized(
        layer_sizes: &[usize],
        hidden_activation: ActivationKind,
        output_activation: ActivationKind,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, hidden_activation, output_activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let limit = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.gen_range(-limit..=limit);
            }
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn activation_of(&self, layer: usize) -> ActivationKind {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|w| w.is_finite()))
    }

    /// Forward pass keeping every intermediate quantity.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.input_size() {
            return Err(Error::Shape(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.input_size()
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut input = x.to_vec();
        for (n, layer) in self.layers.iter().enumerate() {
            let sum: Vec<f64> = (0..layer.outputs)
                .map(|k| {
                    let row = &layer.weights[k * layer.inputs..(k + 1) * layer.inputs];
                    row.iter().zip(&input).map(|(w, x)| w * x).sum()
                })
                .collect();
            let potential: Vec<f64> = sum.iter().zip(&layer.biases).map(|(u, b)| u + b).collect();
            let output = activate_layer(self.activation_of(n), &potential);
            let next = output.clone();
            layers.push(LayerTrace {
                input,
                sum,
                potential,
                output,
            });
            input = next;
        }
        Ok(ForwardTrace { layers })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.layers.pop().expect("layers").output)
    }

    /// Local gradients for every layer, plus the output error `d - y`.
    fn local_gradients(
        &self,
        trace: &ForwardTrace,
        desired: &[f64],
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if desired.len() != self.output_size() {
            return Err(Error::Shape(format!(
                "desired output has {} values, network produces {}",
                desired.len(),
                self.output_size()
            )));
        }
        if trace.layers.len() != self.layers.len() {
            return Err(Error::Shape("trace does not belong to this network".into()));
        }
        let last = self.layers.len() - 1;
        let error: Vec<f64> = desired
            .iter()
            .zip(trace.output())
            .map(|(d, y)| d - y)
            .collect();

        let mut deltas = vec![Vec::new(); self.layers.len()];
        let t = &trace.layers[last];
        deltas[last] = backprop_layer(self.activation_of(last), &t.potential, &t.output, &error);
        for n in (0..last).rev() {
            let above = &self.layers[n + 1];
            let back: Vec<f64> = (0..above.inputs)
                .map(|j| {
                    (0..above.outputs)
                        .map(|k| deltas[n + 1][k] * above.weight(k, j))
                        .sum()
                })
                .collect();
            let t = &trace.layers[n];
            deltas[n] = backprop_layer(self.activation_of(n), &t.potential, &t.output, &back);
        }
        if deltas.iter().flatten().any(|d| !d.is_finite()) {
            return Err(Error::Divergence("non-finite local gradient".into()));
        }
        Ok((deltas, error))
    }

    /// One online delta-rule step: `w_kj += alpha * delta_k * x_j` and
    /// `b_k += alpha * delta_k`. Returns the output error `d - y` computed
    /// before the update.
    pub fn backward_update(
        &mut self,
        sample: &TrainSample,
        trace: &ForwardTrace,
        learning_rate: f64,
    ) -> Result<Vec<f64>> {
        let (deltas, error) = self.local_gradients(trace, &sample.desired)?;
        for ((layer, delta), t) in self.layers.iter_mut().zip(&deltas).zip(&trace.layers) {
            for (k, &dk) in delta.iter().enumerate() {
                let step = learning_rate * dk;
                let row = &mut layer.weights[k * layer.inputs..(k + 1) * layer.inputs];
                for (w, x) in row.iter_mut().zip(&t.input) {
                    *w += step * x;
                }
                layer.biases[k] += step;
            }
        }
        Ok(error)
    }

    /// Gradient of `1/2 sum (d - y)^2` with respect to [`Self::params`].
    pub fn loss_gradient(&self, sample: &TrainSample) -> Result<Vec<f64>> {
        let trace = self.forward(&sample.input)?;
        let (deltas, _) = self.local_gradients(&trace, &sample.desired)?;
        let mut g = Vec::with_capacity(self.param_count());
        for (delta, t) in deltas.iter().zip(&trace.layers) {
            for &dk in delta {
                g.extend(t.input.iter().map(|x| -dk * x));
            }
            g.extend(delta.iter().map(|dk| -dk));
        }
        Ok(g)
    }

    /// Parameters flattened layer by layer: weights row-major, then biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} parameters given, network has {}",
                p.len(),
                self.param_count()
            )));
        }
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::loss;

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpNetwork::zeros(&DEFAULT_LAYER_SIZES, ActivationKind::Tanh, ActivationKind::Tanh)
            .unwrap();
        assert_eq!(net.predict(&[0.3, -0.2, 0.9]).unwrap(), vec![0.0]);
        assert_eq!(net.param_count(), 18 + 6 + 18 + 3 + 3 + 1);
    }

    #[test]
    fn single_tanh_neuron() {
        let mut net = MlpNetwork::zeros(&[1, 1], ActivationKind::Tanh, ActivationKind::Tanh).unwrap();
        net.layers[0].weights[0] = 1.0;
        let y = net.predict(&[0.5]).unwrap()[0];
        assert!((y - 0.46212).abs() < 1e-5);
        let t = net.forward(&[0.5]).unwrap();
        assert_eq!(t.layers[0].sum, vec![0.5]);
        assert_eq!(t.layers[0].potential, vec![0.5]);
    }

    #[test]
    fn linear_identity_passes_input_through() {
        let mut net =
            MlpNetwork::zeros(&[3, 3, 3], ActivationKind::Linear, ActivationKind::Linear).unwrap();
        for l in &mut net.layers {
            for k in 0..3 {
                l.weights[k * 3 + k] = 1.0;
            }
        }
        let x = [0.1, -0.7, 0.35];
        assert_eq!(net.predict(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn shape_errors() {
        let net = MlpNetwork::zeros(&[3, 2, 1], ActivationKind::Tanh, ActivationKind::Tanh).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape(_))));
        assert!(MlpNetwork::zeros(&[3], ActivationKind::Tanh, ActivationKind::Tanh).is_err());
        assert!(MlpNetwork::zeros(&[3, 0, 1], ActivationKind::Tanh, ActivationKind::Tanh).is_err());
    }

    #[test]
    fn zero_error_changes_nothing() {
        let mut net =
            MlpNetwork::initialized(&DEFAULT_LAYER_SIZES, ActivationKind::Tanh, ActivationKind::Tanh, 3)
                .unwrap();
        let x = vec![0.2, -0.4, 0.6];
        let trace = net.forward(&x).unwrap();
        let sample = TrainSample {
            input: x,
            desired: trace.output().to_vec(),
        };
        let before = net.clone();
        let e = net.backward_update(&sample, &trace, 0.5).unwrap();
        assert_eq!(e, vec![0.0]);
        assert_eq!(net, before);
    }

    #[test]
    fn single_linear_neuron_update() {
        let mut net =
            MlpNetwork::zeros(&[1, 1], ActivationKind::Linear, ActivationKind::Linear).unwrap();
        net.layers[0].weights[0] = 1.0;
        let sample = TrainSample {
            input: vec![2.0],
            desired: vec![3.0],
        };
        let trace = net.forward(&sample.input).unwrap();
        let e = net.backward_update(&sample, &trace, 0.1).unwrap();
        assert_eq!(e, vec![1.0]);
        assert!((net.layers[0].weights[0] - 1.2).abs() < 1e-15);
        assert!((net.layers[0].biases[0] - 0.1).abs() < 1e-15);
    }

    /// Delta rule written out by hand for a 2-2-1 tanh network.
    #[test]
    fn two_two_one_update_matches_scalar_expansion() {
        let mut net =
            MlpNetwork::initialized(&[2, 2, 1], ActivationKind::Tanh, ActivationKind::Tanh, 17)
                .unwrap();
        let (x1, x2, d, a) = (0.3, -0.8, 0.25, 0.07);
        let h = &net.layers[0];
        let o = &net.layers[1];
        let (w11, w12, w21, w22) = (h.weights[0], h.weights[1], h.weights[2], h.weights[3]);
        let (b1, b2) = (h.biases[0], h.biases[1]);
        let (v1, v2) = (w11 * x1 + w12 * x2 + b1, w21 * x1 + w22 * x2 + b2);
        let (y1, y2) = (v1.tanh(), v2.tanh());
        let (o1, o2, ob) = (o.weights[0], o.weights[1], o.biases[0]);
        let vo = o1 * y1 + o2 * y2 + ob;
        let e = d - vo.tanh();
        let dout = e * (1.0 - vo.tanh().powi(2));
        let dh1 = (1.0 - y1 * y1) * dout * o1;
        let dh2 = (1.0 - y2 * y2) * dout * o2;
        let expected = [
            w11 + a * dh1 * x1,
            w12 + a * dh1 * x2,
            w21 + a * dh2 * x1,
            w22 + a * dh2 * x2,
            b1 + a * dh1,
            b2 + a * dh2,
            o1 + a * dout * y1,
            o2 + a * dout * y2,
            ob + a * dout,
        ];
        let sample = TrainSample {
            input: vec![x1, x2],
            desired: vec![d],
        };
        let trace = net.forward(&sample.input).unwrap();
        net.backward_update(&sample, &trace, a).unwrap();
        for (got, want) in net.params().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_loss_differences() {
        let net =
            MlpNetwork::initialized(&DEFAULT_LAYER_SIZES, ActivationKind::Tanh, ActivationKind::Tanh, 5)
                .unwrap();
        let sample = TrainSample {
            input: vec![0.4, -0.1, 0.7],
            desired: vec![-0.3],
        };
        let g = net.loss_gradient(&sample).unwrap();
        let p = net.params();
        let h = 1e-5;
        let f = |q: &[f64]| {
            let mut n = net.clone();
            n.set_params(q).unwrap();
            let y = n.predict(&sample.input).unwrap()[0];
            loss(sample.desired[0] - y)
        };
        for i in 0..p.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * fd.abs().max(g[i].abs()).max(1e-4));
        }
    }
}
