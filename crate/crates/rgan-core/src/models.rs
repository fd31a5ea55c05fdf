//! MLP generator/discriminator definitions, initialization and Adam.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape, DEFAULT_LEAKY_SLOPE};
use crate::tensor::{matmul_nn_acc, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Relu,
    LeakyRelu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    /// Generators emit raw coordinates.
    Identity,
    /// Discriminators emit a probability in (0,1).
    Sigmoid,
}

/// Architecture of one multilayer perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: HiddenActivation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Generator: identity output head.
    pub fn generator(layer_sizes: Vec<usize>, hidden: HiddenActivation) -> Result<Self> {
        Self::new(layer_sizes, hidden, OutputActivation::Identity)
    }

    /// Discriminator: single sigmoid output so `D(x)` lands in (0,1).
    pub fn discriminator(layer_sizes: Vec<usize>, hidden: HiddenActivation) -> Result<Self> {
        if layer_sizes.last() != Some(&1) {
            return Err(Error::Contract(format!(
                "discriminator output size must be 1, got {:?}",
                layer_sizes.last()
            )));
        }
        Self::new(layer_sizes, hidden, OutputActivation::Sigmoid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Contract(format!(
                "need at least input and output sizes, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Contract("zero-sized layer".to_string()));
        }
        if self.output_activation == OutputActivation::Sigmoid && *self.layer_sizes.last().unwrap() != 1
        {
            return Err(Error::Contract(
                "sigmoid output head requires output size 1".to_string(),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

/// Weight `[in×out]` and bias `[out]` of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// All layer parameters of one network, in layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layers: Vec<LayerParams>,
}

impl ParamSet {
    /// Parameter tensors in canonical order: `w0, b0, w1, b1, ...`
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn tensor_count(&self) -> usize {
        self.layers.len() * 2
    }

    pub fn validate_against(&self, spec: &MlpSpec) -> Result<()> {
        if self.layers.len() != spec.layer_count() {
            return Err(Error::Contract(format!(
                "param set has {} layers, spec wants {}",
                self.layers.len(),
                spec.layer_count()
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let (fan_in, fan_out) = (spec.layer_sizes[i], spec.layer_sizes[i + 1]);
            if layer.weight.shape() != [fan_in, fan_out] || layer.bias.shape() != [fan_out] {
                return Err(Error::Contract(format!(
                    "layer {i} shapes {:?}/{:?} do not match spec {fan_in}x{fan_out}",
                    layer.weight.shape(),
                    layer.bias.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases. Deterministic per seed.
pub fn init_params(spec: &MlpSpec, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = (0..spec.layer_count())
        .map(|i| {
            let (fan_in, fan_out) = (spec.layer_sizes[i], spec.layer_sizes[i + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("valid uniform bounds");
            let wdata: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
            LayerParams {
                weight: Tensor::matrix(fan_in, fan_out, wdata).expect("finite init"),
                bias: Tensor::zeros(&[fan_out]),
            }
        })
        .collect();
    ParamSet { layers }
}

/// A network's parameters staged on a tape as leaves, ready to be applied to
/// any number of input batches. Applying the same staged parameters to
/// several batches accumulates their gradients jointly, which is what the
/// multi-term losses need.
pub struct StagedMlp<'a> {
    spec: &'a MlpSpec,
    nodes: Vec<(NodeId, NodeId)>,
}

impl<'a> StagedMlp<'a> {
    pub fn stage(tape: &mut Tape, spec: &'a MlpSpec, params: &ParamSet) -> Result<Self> {
        params.validate_against(spec)?;
        let nodes = params
            .layers
            .iter()
            .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
            .collect();
        Ok(Self { spec, nodes })
    }

    /// Forward pass of a `[m×input_dim]` batch node.
    pub fn apply(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        let (_, cols) = tape.value(input).dims2()?;
        if cols != self.spec.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "forward",
                detail: format!("batch has {cols} columns, spec wants {}", self.spec.input_dim()),
            });
        }
        let last = self.nodes.len() - 1;
        let mut h = input;
        for (i, (w, b)) in self.nodes.iter().enumerate() {
            let z = tape.matmul(h, *w)?;
            let z = tape.add_bias(z, *b)?;
            h = if i < last {
                match self.spec.hidden_activation {
                    HiddenActivation::Relu => tape.relu(z)?,
                    HiddenActivation::LeakyRelu => tape.leaky_relu(z, DEFAULT_LEAKY_SLOPE)?,
                    HiddenActivation::Tanh => tape.tanh(z)?,
                }
            } else {
                match self.spec.output_activation {
                    OutputActivation::Identity => z,
                    OutputActivation::Sigmoid => tape.sigmoid(z)?,
                }
            };
        }
        Ok(h)
    }

    /// `(weight, bias)` node ids in layer order.
    pub fn param_nodes(&self) -> &[(NodeId, NodeId)] {
        &self.nodes
    }

    /// Gradients for every parameter in canonical order.
    pub fn collect_grads(&self, grads: &crate::tape::Gradients) -> Vec<Tensor> {
        self.nodes
            .iter()
            .flat_map(|(w, b)| [grads.wrt(*w).clone(), grads.wrt(*b).clone()])
            .collect()
    }
}

/// Records a forward pass on `tape`, differentiable with respect to the
/// parameters and the input batch. Returns the output node, the staged
/// parameters and the input leaf.
pub fn forward<'a>(
    params: &ParamSet,
    spec: &'a MlpSpec,
    batch: &Tensor,
    tape: &mut Tape,
) -> Result<(NodeId, StagedMlp<'a>, NodeId)> {
    let staged = StagedMlp::stage(tape, spec, params)?;
    let input = tape.leaf(batch.clone());
    let out = staged.apply(tape, input)?;
    Ok((out, staged, input))
}

fn apply_hidden(act: HiddenActivation, h: &mut [f64]) {
    match act {
        HiddenActivation::Relu => h.iter_mut().for_each(|v| {
            if *v < 0.0 {
                *v = 0.0;
            }
        }),
        HiddenActivation::LeakyRelu => h.iter_mut().for_each(|v| {
            if *v < 0.0 {
                *v *= DEFAULT_LEAKY_SLOPE;
            }
        }),
        HiddenActivation::Tanh => h.iter_mut().for_each(|v| *v = v.tanh()),
    }
}

/// One network bundled with its architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: ParamSet,
}

impl Mlp {
    pub fn init(spec: MlpSpec, seed: u64) -> Self {
        let params = init_params(&spec, seed);
        Self { spec, params }
    }

    /// Tape-free forward pass for sampling and evaluation.
    pub fn forward_inference(&self, batch: &Tensor) -> Result<Tensor> {
        let (m, cols) = batch.dims2()?;
        if cols != self.spec.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "forward_inference",
                detail: format!("batch has {cols} columns, spec wants {}", self.spec.input_dim()),
            });
        }
        let last = self.params.layers.len() - 1;
        let mut h = batch.data().to_vec();
        let mut h_cols = cols;
        for (i, layer) in self.params.layers.iter().enumerate() {
            let (fan_in, fan_out) = layer.weight.dims2()?;
            debug_assert_eq!(fan_in, h_cols);
            let mut z = vec![0.0; m * fan_out];
            matmul_nn_acc(&mut z, &h, layer.weight.data(), m, fan_in, fan_out);
            let bias = layer.bias.data();
            for row in z.chunks_mut(fan_out) {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            if i < last {
                apply_hidden(self.spec.hidden_activation, &mut z);
            } else if self.spec.output_activation == OutputActivation::Sigmoid {
                z.iter_mut()
                    .for_each(|v| *v = crate::tape::stable_sigmoid(*v));
            }
            h = z;
            h_cols = fan_out;
        }
        Tensor::matrix(m, h_cols, h)
    }
}

/// Bias-corrected Adam state over one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64, beta1: f64, beta2: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            t: 0,
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One Adam update. `grads` must cover every parameter tensor in canonical
/// order (`w0, b0, w1, b1, ...`) with matching shapes.
pub fn adam_step(state: &mut AdamState, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
    if grads.len() != params.tensor_count() {
        return Err(Error::Contract(format!(
            "adam_step got {} gradients for {} parameters",
            grads.len(),
            params.tensor_count()
        )));
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    for ((param, grad), (m, v)) in params
        .tensors_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if param.shape() != grad.shape() {
            return Err(Error::Contract(format!(
                "adam_step gradient shape {:?} does not match parameter {:?}",
                grad.shape(),
                param.shape()
            )));
        }
        let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
        for ((p, g), (mi, vi)) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
        {
            *mi = b1 * *mi + (1.0 - b1) * g;
            *vi = b2 * *vi + (1.0 - b2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::ReduceAxis;

    fn tiny_d() -> MlpSpec {
        MlpSpec::discriminator(vec![2, 4, 1], HiddenActivation::LeakyRelu).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_biases_zero() {
        let spec = tiny_d();
        let a = init_params(&spec, 42);
        let b = init_params(&spec, 42);
        assert_eq!(a, b);
        for layer in &a.layers {
            assert!(layer.bias.data().iter().all(|&v| v == 0.0));
        }
        assert_ne!(a, init_params(&spec, 43));
    }

    #[test]
    fn init_weights_respect_glorot_bound() {
        // 10^4 draws on a 50x150 layer stay inside ±sqrt(6/(fan_in+fan_out)).
        let spec = MlpSpec::generator(vec![50, 150], HiddenActivation::Relu).unwrap();
        let p = init_params(&spec, 7);
        let bound = (6.0 / 200.0f64).sqrt();
        let w = p.layers[0].weight.data();
        assert_eq!(w.len(), 7500);
        assert!(w.iter().all(|v| v.abs() <= bound));
        // The draws should actually explore the range.
        assert!(w.iter().any(|v| v.abs() > 0.9 * bound));
    }

    #[test]
    fn zero_discriminator_outputs_half() {
        let spec = tiny_d();
        let mut params = init_params(&spec, 1);
        for t in params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let d = Mlp { spec, params };
        let x = Tensor::matrix(3, 2, vec![0.5, -1.0, 2.0, 0.0, -3.0, 4.0]).unwrap();
        let out = d.forward_inference(&x).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn identity_generator_passes_input_through() {
        let spec = MlpSpec::generator(vec![2, 2], HiddenActivation::Relu).unwrap();
        let params = ParamSet {
            layers: vec![LayerParams {
                weight: Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
                bias: Tensor::zeros(&[2]),
            }],
        };
        let g = Mlp { spec, params };
        let z = Tensor::matrix(2, 2, vec![0.3, -0.7, 1.5, 2.5]).unwrap();
        let out = g.forward_inference(&z).unwrap();
        assert_eq!(out.data(), z.data());
    }

    #[test]
    fn forward_matches_hand_computation() {
        // One hidden layer, leaky_relu(0.2), sigmoid head, all 2x2 weights.
        // x = [1, -1]
        // h_pre = x·W1 + b1, W1 = [[1, 2], [3, 4]], b1 = [0.5, -0.5]
        //       = [1-3+0.5, 2-4-0.5] = [-1.5, -2.5]
        // h = leaky([-1.5, -2.5]) = [-0.3, -0.5]
        // logit = h·W2 + b2, W2 = [[2], [-1]], b2 = [0.1]
        //       = [-0.6 + 0.5 + 0.1] = [0.0] → sigmoid = 0.5
        let spec = MlpSpec::discriminator(vec![2, 2, 1], HiddenActivation::LeakyRelu).unwrap();
        let params = ParamSet {
            layers: vec![
                LayerParams {
                    weight: Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
                    bias: Tensor::vector(vec![0.5, -0.5]).unwrap(),
                },
                LayerParams {
                    weight: Tensor::matrix(2, 1, vec![2.0, -1.0]).unwrap(),
                    bias: Tensor::vector(vec![0.1]).unwrap(),
                },
            ],
        };
        let d = Mlp { spec, params };
        let x = Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap();
        let out = d.forward_inference(&x).unwrap();
        assert!((out.data()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn taped_forward_matches_inference() {
        let spec = tiny_d();
        let params = init_params(&spec, 5);
        let net = Mlp {
            spec: spec.clone(),
            params: params.clone(),
        };
        let x = Tensor::matrix(4, 2, vec![0.1, 0.2, -0.3, 0.4, 1.0, -1.0, 0.0, 2.0]).unwrap();
        let plain = net.forward_inference(&x).unwrap();
        let mut tape = Tape::new();
        let (out, _, _) = forward(&params, &spec, &x, &mut tape).unwrap();
        assert_eq!(tape.value(out).data(), plain.data());
    }

    #[test]
    fn batch_forward_equals_stacked_rows() {
        let spec = MlpSpec::generator(vec![3, 5, 2], HiddenActivation::Tanh).unwrap();
        let net = Mlp::init(spec, 11);
        let batch = Tensor::matrix(4, 3, (0..12).map(|i| (i as f64) * 0.17 - 1.0).collect()).unwrap();
        let full = net.forward_inference(&batch).unwrap();
        for i in 0..4 {
            let row = Tensor::matrix(1, 3, batch.row(i).to_vec()).unwrap();
            let single = net.forward_inference(&row).unwrap();
            for (a, b) in full.row(i).iter().zip(single.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn discriminator_outputs_stay_strictly_inside_unit_interval() {
        let spec = MlpSpec::discriminator(vec![2, 8, 8, 1], HiddenActivation::LeakyRelu).unwrap();
        for seed in 0..20 {
            let d = Mlp::init(spec.clone(), seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let data: Vec<f64> = (0..64).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect();
            let x = Tensor::matrix(32, 2, data).unwrap();
            let out = d.forward_inference(&x).unwrap();
            assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params_and_bumps_t() {
        let spec = tiny_d();
        let mut params = init_params(&spec, 3);
        let before = params.clone();
        let mut state = AdamState::new(&params, 1e-3, 0.9, 0.999);
        let zeros: Vec<Tensor> = params.tensors().map(|t| Tensor::zeros(t.shape())).collect();
        adam_step(&mut state, &mut params, &zeros).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_scalar_hand_case() {
        // w=1, grad=1, lr=0.1, first step: w' = 1 - 0.1/(1+1e-8) ≈ 0.9.
        let spec = MlpSpec::generator(vec![1, 1], HiddenActivation::Relu).unwrap();
        let mut params = ParamSet {
            layers: vec![LayerParams {
                weight: Tensor::matrix(1, 1, vec![1.0]).unwrap(),
                bias: Tensor::zeros(&[1]),
            }],
        };
        let mut state = AdamState::new(&params, 0.1, 0.9, 0.999);
        let grads = vec![
            Tensor::matrix(1, 1, vec![1.0]).unwrap(),
            Tensor::zeros(&[1]),
        ];
        adam_step(&mut state, &mut params, &grads).unwrap();
        let w = params.layers[0].weight.data()[0];
        assert!((w - 0.9).abs() < 1e-8);
        let _ = spec;
    }

    #[test]
    fn adam_missing_gradients_error() {
        let spec = tiny_d();
        let mut params = init_params(&spec, 3);
        let mut state = AdamState::new(&params, 1e-3, 0.9, 0.999);
        assert!(adam_step(&mut state, &mut params, &[]).is_err());
    }

    #[test]
    fn adam_trajectories_are_deterministic() {
        let spec = tiny_d();
        let run = |seed: u64| {
            let mut params = init_params(&spec, seed);
            let mut state = AdamState::new(&params, 1e-2, 0.5, 0.999);
            for step in 0..50u64 {
                // A deterministic synthetic gradient stream.
                let grads: Vec<Tensor> = params
                    .tensors()
                    .map(|t| {
                        let data = t
                            .data()
                            .iter()
                            .enumerate()
                            .map(|(i, v)| (v * 0.7 + (step as f64 + i as f64) * 1e-3).sin())
                            .collect();
                        Tensor::new(t.shape().to_vec(), data).unwrap()
                    })
                    .collect();
                adam_step(&mut state, &mut params, &grads).unwrap();
            }
            params
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn taped_forward_gradients_flow_to_input() {
        let spec = tiny_d();
        let params = init_params(&spec, 21);
        let x = Tensor::matrix(2, 2, vec![0.4, -0.2, 0.9, 1.1]).unwrap();
        let mut tape = Tape::new();
        let (out, _, input) = forward(&params, &spec, &x, &mut tape).unwrap();
        let root = tape.sum(out, ReduceAxis::All).unwrap();
        let grads = tape.backward(root).unwrap();
        assert_eq!(grads.wrt(input).shape(), x.shape());
        assert!(grads.wrt(input).data().iter().any(|&v| v != 0.0));
    }
}
