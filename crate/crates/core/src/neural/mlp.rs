use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NeuralError;
use crate::linalg::{matvec, DenseMatrix, DenseVector};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation value `o = sigma(z)`.
    #[inline]
    fn slope(self, o: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - o * o,
            Activation::Identity => 1.0,
        }
    }
}

/// Standardization applied to raw inputs before the first layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNormalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fixed, untrained map from the last layer `z` to the physical output `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputMap {
    Identity,
    /// `y_i = offset_i + scale_i z_i`
    Affine { offset: Vec<f64>, scale: Vec<f64> },
    /// `y = offset + basis z`
    Linear { offset: Vec<f64>, basis: DenseMatrix },
}

impl OutputMap {
    fn check(&self, net_out: usize) -> Result<usize, NeuralError> {
        let bad = |what: &str| Err(NeuralError::Architecture(format!("output map {what} does not match {net_out} network outputs")));
        match self {
            OutputMap::Identity => Ok(net_out),
            OutputMap::Affine { offset, scale } => {
                if offset.len() != net_out || scale.len() != net_out {
                    return bad("offset/scale");
                }
                Ok(net_out)
            }
            OutputMap::Linear { offset, basis } => {
                if basis.cols() != net_out || offset.len() != basis.rows() {
                    return bad("basis");
                }
                Ok(basis.rows())
            }
        }
    }

    fn apply(&self, z: &[f64]) -> Vec<f64> {
        match self {
            OutputMap::Identity => z.to_vec(),
            OutputMap::Affine { offset, scale } => z.iter().zip(offset).zip(scale).map(|((z, o), s)| o + s * z).collect(),
            OutputMap::Linear { offset, basis } => {
                let mut y = matvec(basis, z).expect("checked at construction").into_inner();
                y.iter_mut().zip(offset).for_each(|(y, o)| *y += o);
                y
            }
        }
    }

    /// Pulls an output gradient back to the last layer.
    fn pull_back(&self, dy: &[f64]) -> Vec<f64> {
        match self {
            OutputMap::Identity => dy.to_vec(),
            OutputMap::Affine { scale, .. } => dy.iter().zip(scale).map(|(g, s)| g * s).collect(),
            OutputMap::Linear { basis, .. } => crate::linalg::vecmat(dy, basis).expect("checked at construction").into_inner(),
        }
    }
}

/// Fully connected network. `weights[l]` maps the activations of layer `l`
/// (layer 0 = normalized input) to layer `l + 1` and has shape
/// `layer_sizes[l + 1] x layer_sizes[l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelFile", try_from = "ModelFile")]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    weights: Vec<DenseMatrix>,
    biases: Vec<DenseVector>,
    hidden_activation: Activation,
    output_activation: Activation,
    input_normalization: Option<InputNormalization>,
    output_map: OutputMap,
}

/// Cached forward pass of one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `z^l` for l = 1..L.
    pub pre_activations: Vec<Vec<f64>>,
    /// `o^l` for l = 0..L; `o^0` is the normalized input.
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn depth(&self) -> usize {
        self.pre_activations.len()
    }
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<DenseVector>,
}

impl ParamGrads {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| DenseMatrix::zeros(w.rows(), w.cols())).collect(),
            biases: model.biases.iter().map(|b| DenseVector::zeros(b.len())).collect(),
        }
    }

    pub fn set_zero(&mut self) {
        self.weights.iter_mut().for_each(|w| w.data_mut().fill(0.0));
        self.biases.iter_mut().for_each(|b| b.fill(0.0));
    }

    pub fn scale(&mut self, alpha: f64) {
        self.weights.iter_mut().for_each(|w| w.data_mut().iter_mut().for_each(|v| *v *= alpha));
        self.biases.iter_mut().for_each(|b| b.iter_mut().for_each(|v| *v *= alpha));
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b.iter()).for_each(|(x, y)| *x += y);
        }
    }

    /// Weights layer by layer (row-major), then biases layer by layer.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.data().iter().all(|v| v.is_finite())) && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl MlpModel {
    /// Xavier-uniform weights, zero biases, tanh hidden layers and identity
    /// output.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self, NeuralError> {
        check_sizes(layer_sizes)?;
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
            weights.push(DenseMatrix::new(fan_out, fan_in, data)?);
        }
        let biases = layer_sizes[1..].iter().map(|&n| DenseVector::zeros(n)).collect();
        Self::from_parts(weights, biases, Activation::Tanh, Activation::Identity)
    }

    pub fn from_parts(
        weights: Vec<DenseMatrix>,
        biases: Vec<DenseVector>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self, NeuralError> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(NeuralError::Architecture("need one bias vector per weight matrix".into()));
        }
        let mut layer_sizes = vec![weights[0].cols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.cols() != *layer_sizes.last().unwrap() || b.len() != w.rows() {
                return Err(NeuralError::Architecture(format!("layer {l} shapes do not chain")));
            }
            layer_sizes.push(w.rows());
        }
        Ok(Self {
            layer_sizes,
            weights,
            biases,
            hidden_activation,
            output_activation,
            input_normalization: None,
            output_map: OutputMap::Identity,
        })
    }

    pub fn with_input_normalization(mut self, norm: InputNormalization) -> Result<Self, NeuralError> {
        let n = self.input_dim();
        if norm.mean.len() != n || norm.std.len() != n {
            return Err(NeuralError::Architecture(format!("normalization needs {n} entries")));
        }
        if norm.std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(NeuralError::Architecture("normalization std must be positive".into()));
        }
        self.input_normalization = Some(norm);
        Ok(self)
    }

    pub fn with_output_map(mut self, map: OutputMap) -> Result<Self, NeuralError> {
        map.check(*self.layer_sizes.last().unwrap())?;
        self.output_map = map;
        Ok(self)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Length of the physical output (after the output map).
    pub fn output_dim(&self) -> usize {
        self.output_map.check(*self.layer_sizes.last().unwrap()).expect("validated")
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[DenseVector] {
        &self.biases
    }

    pub fn input_normalization(&self) -> Option<&InputNormalization> {
        self.input_normalization.as_ref()
    }

    pub fn output_map(&self) -> &OutputMap {
        &self.output_map
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Same layout as [`ParamGrads::flat`].
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<(), NeuralError> {
        if flat.len() != self.n_params() {
            return Err(crate::linalg::shape_err("set_params_flat", self.n_params(), flat.len()).into());
        }
        let mut pos = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let nw = w.data().len();
            w.data_mut().copy_from_slice(&flat[pos..pos + nw]);
            pos += nw;
            let nb = b.len();
            b.copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
        }
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = (&mut [f64], &mut [f64])> {
        self.weights.iter_mut().zip(self.biases.iter_mut()).map(|(w, b)| (w.data_mut(), &mut b[..]))
    }

    pub fn is_finite(&self) -> bool {
        self.params_flat().iter().all(|v| v.is_finite())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        serde_json::from_str(text).map_err(|e| NeuralError::Format(e.to_string()))
    }

    fn normalize(&self, x: &[f64]) -> Vec<f64> {
        match &self.input_normalization {
            None => x.to_vec(),
            Some(n) => x.iter().zip(&n.mean).zip(&n.std).map(|((x, m), s)| (x - m) / s).collect(),
        }
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Accumulates `dLoss/dtheta` for one sample into `grads`.
    pub fn backward_into(&self, trace: &ForwardTrace, dy: &[f64], grads: &mut ParamGrads) -> Result<(), NeuralError> {
        let depth = self.weights.len();
        if trace.depth() != depth || trace.activations.len() != depth + 1 || trace.activations[0].len() != self.input_dim() {
            return Err(crate::linalg::shape_err("mlp_backward", format!("trace of depth {depth}"), trace.depth()).into());
        }
        if dy.len() != self.output_dim() {
            return Err(crate::linalg::shape_err("mlp_backward", self.output_dim(), dy.len()).into());
        }
        let mut g = self.output_map.pull_back(dy);
        for l in (0..depth).rev() {
            let act = self.activation(l);
            let out = &trace.activations[l + 1];
            let input = &trace.activations[l];
            let w = &self.weights[l];
            let delta: Vec<f64> = g.iter().zip(out).map(|(g, o)| g * act.slope(*o)).collect();
            let gw = grads.weights[l].data_mut();
            let cols = w.cols();
            for (i, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (gw, &o) in gw[i * cols..(i + 1) * cols].iter_mut().zip(input) {
                        *gw += d * o;
                    }
                }
            }
            grads.biases[l].iter_mut().zip(&delta).for_each(|(b, d)| *b += d);
            if l > 0 {
                let mut prev = vec![0.0; cols];
                for (i, &d) in delta.iter().enumerate() {
                    for (p, &wij) in prev.iter_mut().zip(w.row(i)) {
                        *p += d * wij;
                    }
                }
                g = prev;
            }
        }
        Ok(())
    }
}

fn check_sizes(layer_sizes: &[usize]) -> Result<(), NeuralError> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(NeuralError::Architecture(format!("invalid layer sizes {layer_sizes:?}")));
    }
    Ok(())
}

pub fn mlp_forward(model: &MlpModel, x: &[f64]) -> Result<(DenseVector, ForwardTrace), NeuralError> {
    if x.len() != model.input_dim() {
        return Err(crate::linalg::shape_err("mlp_forward", model.input_dim(), x.len()).into());
    }
    let depth = model.weights.len();
    let mut activations = Vec::with_capacity(depth + 1);
    let mut pre_activations = Vec::with_capacity(depth);
    activations.push(model.normalize(x));
    for l in 0..depth {
        let w = &model.weights[l];
        let input = &activations[l];
        let z: Vec<f64> = (0..w.rows())
            .map(|i| w.row(i).iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + model.biases[l][i])
            .collect();
        let act = model.activation(l);
        activations.push(z.iter().map(|&v| act.apply(v)).collect());
        pre_activations.push(z);
    }
    let y = model.output_map.apply(&activations[depth]);
    Ok((
        y.into(),
        ForwardTrace {
            pre_activations,
            activations,
        },
    ))
}

/// Forward evaluation without keeping the trace.
pub fn mlp_predict(model: &MlpModel, x: &[f64]) -> Result<DenseVector, NeuralError> {
    mlp_forward(model, x).map(|(y, _)| y)
}

pub fn mlp_backward(model: &MlpModel, trace: &ForwardTrace, dloss_dy: &[f64]) -> Result<ParamGrads, NeuralError> {
    let mut grads = ParamGrads::zeros_like(model);
    model.backward_into(trace, dloss_dy, &mut grads)?;
    Ok(grads)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
    /// Row-major, `layer_sizes[l + 1] x layer_sizes[l]`.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    input_normalization: Option<InputNormalization>,
    output_map: OutputMap,
}

impl From<MlpModel> for ModelFile {
    fn from(m: MlpModel) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            weights: m.weights.iter().map(|w| w.data().to_vec()).collect(),
            biases: m.biases.into_iter().map(DenseVector::into_inner).collect(),
            layer_sizes: m.layer_sizes,
            hidden_activation: m.hidden_activation,
            output_activation: m.output_activation,
            input_normalization: m.input_normalization,
            output_map: m.output_map,
        }
    }
}

impl TryFrom<ModelFile> for MlpModel {
    type Error = NeuralError;
    fn try_from(f: ModelFile) -> Result<Self, NeuralError> {
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(NeuralError::Format(format!("unsupported model format version {}", f.format_version)));
        }
        check_sizes(&f.layer_sizes)?;
        if f.weights.len() != f.layer_sizes.len() - 1 {
            return Err(NeuralError::Format("weight count does not match layer sizes".into()));
        }
        let weights = f
            .weights
            .into_iter()
            .zip(f.layer_sizes.windows(2))
            .map(|(data, pair)| DenseMatrix::new(pair[1], pair[0], data))
            .collect::<Result<Vec<_>, _>>()?;
        let biases = f.biases.into_iter().map(DenseVector::from).collect();
        let mut model = Self::from_parts(weights, biases, f.hidden_activation, f.output_activation)?;
        if let Some(norm) = f.input_normalization {
            model = model.with_input_normalization(norm)?;
        }
        model.with_output_map(f.output_map)
    }
}
