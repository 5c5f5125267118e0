//! Dense autoencoder with ReLU hidden layers and a sigmoid output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Layer widths `[d, d/2, d/4, d/2, d]`, halves and quarters rounded.
pub fn layer_dims(d: usize) -> Result<Vec<usize>> {
    if d < 2 {
        return Err(Error::Config(format!("autoencoder input dimension must be at least 2, got {d}")));
    }
    let half = (0.5 * d as f64).round() as usize;
    let quarter = (0.25 * d as f64).round() as usize;
    Ok(vec![d, half, quarter, half, d])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSpan {
    inputs: usize,
    outputs: usize,
    /// Offset of the `outputs × inputs` row-major weight block; biases
    /// follow it.
    offset: usize,
}

impl LayerSpan {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    fn biases(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }
}

/// Serialized form: one row-major weight matrix and bias vector per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AutoencoderRepr", into = "AutoencoderRepr")]
pub struct Autoencoder {
    layer_dims: Vec<usize>,
    spans: Vec<LayerSpan>,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AutoencoderRepr {
    layer_dims: Vec<usize>,
    layers: Vec<DenseLayer>,
}

impl From<Autoencoder> for AutoencoderRepr {
    fn from(ae: Autoencoder) -> Self {
        let layers = ae
            .spans
            .iter()
            .map(|s| DenseLayer {
                inputs: s.inputs,
                outputs: s.outputs,
                weights: ae.params[s.weights()].to_vec(),
                biases: ae.params[s.biases()].to_vec(),
            })
            .collect();
        AutoencoderRepr { layer_dims: ae.layer_dims, layers }
    }
}

impl TryFrom<AutoencoderRepr> for Autoencoder {
    type Error = String;

    fn try_from(r: AutoencoderRepr) -> std::result::Result<Self, String> {
        let mut ae = Autoencoder::zeroed(&r.layer_dims);
        if r.layers.len() != ae.spans.len() {
            return Err(format!("expected {} layers, found {}", ae.spans.len(), r.layers.len()));
        }
        for (span, layer) in ae.spans.clone().iter().zip(&r.layers) {
            if layer.inputs != span.inputs
                || layer.outputs != span.outputs
                || layer.weights.len() != span.inputs * span.outputs
                || layer.biases.len() != span.outputs
            {
                return Err("layer shape does not match layer_dims".into());
            }
            ae.params[span.weights()].copy_from_slice(&layer.weights);
            ae.params[span.biases()].copy_from_slice(&layer.biases);
        }
        if !ae.params.iter().all(|p| p.is_finite()) {
            return Err("non-finite weight".into());
        }
        Ok(ae)
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-row scratch space for forward and backward passes.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    /// Activations per layer, index 0 is the input.
    acts: Vec<Vec<f64>>,
    /// Upstream gradients per layer output.
    deltas: Vec<Vec<f64>>,
}

impl Autoencoder {
    fn zeroed(layer_dims: &[usize]) -> Self {
        let mut spans = Vec::new();
        let mut offset = 0;
        for w in layer_dims.windows(2) {
            spans.push(LayerSpan { inputs: w[0], outputs: w[1], offset });
            offset += w[0] * w[1] + w[1];
        }
        Autoencoder { layer_dims: layer_dims.to_vec(), spans, params: vec![0.0; offset] }
    }

    /// Glorot-uniform weights from `seed`, zero biases.
    pub fn new(input_dim: usize, seed: u64) -> Result<Self> {
        let dims = layer_dims(input_dim)?;
        let mut ae = Self::zeroed(&dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for span in ae.spans.clone() {
            let limit = (6.0 / (span.inputs + span.outputs) as f64).sqrt();
            for w in &mut ae.params[span.weights()] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(ae)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.layer_dims[self.layer_dims.len() / 2]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn workspace(&self) -> Workspace {
        Workspace {
            acts: self.layer_dims.iter().map(|&n| vec![0.0; n]).collect(),
            deltas: self.layer_dims.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn forward_into(&self, x: &[f64], ws: &mut Workspace) {
        ws.acts[0].copy_from_slice(x);
        let last = self.spans.len() - 1;
        for (l, span) in self.spans.iter().enumerate() {
            let (prev, next) = ws.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            let w = &self.params[span.weights()];
            let b = &self.params[span.biases()];
            for o in 0..span.outputs {
                let row = &w[o * span.inputs..(o + 1) * span.inputs];
                let z: f64 = b[o] + row.iter().zip(input.iter()).map(|(a, c)| a * c).sum::<f64>();
                out[o] = if l == last { sigmoid(z) } else { z.max(0.0) };
            }
        }
    }

    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.forward_into(x, &mut ws);
        ws.acts.pop().expect("output layer")
    }

    /// Mean squared reconstruction error of one row.
    pub fn row_mse(&self, x: &[f64]) -> f64 {
        let mut ws = self.workspace();
        self.row_mse_with(x, &mut ws)
    }

    fn row_mse_with(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        self.forward_into(x, ws);
        let out = ws.acts.last().expect("output layer");
        x.iter().zip(out).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
    }

    /// Activations of the bottleneck layer.
    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.forward_into(x, &mut ws);
        ws.acts[self.layer_dims.len() / 2].clone()
    }

    fn check_dim(&self, m: &Matrix) -> Result<()> {
        if m.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: m.cols() });
        }
        Ok(())
    }

    /// Per-row reconstruction MSE.
    pub fn mse_rows(&self, m: &Matrix) -> Result<Vec<f64>> {
        self.check_dim(m)?;
        Ok((0..m.rows())
            .into_par_iter()
            .map_init(|| self.workspace(), |ws, i| self.row_mse_with(m.row(i), ws))
            .collect())
    }

    pub fn bottleneck_rows(&self, m: &Matrix) -> Result<Matrix> {
        self.check_dim(m)?;
        let rows: Vec<Vec<f64>> = (0..m.rows()).into_par_iter().map(|i| self.encode(m.row(i))).collect();
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, self.bottleneck_dim()));
        }
        Matrix::from_rows(&rows)
    }

    /// Batch loss `mean over rows and columns of (x - x̂)²` and its gradient
    /// with respect to every parameter, accumulated in row order.
    pub fn loss_and_gradient(&self, rows: &[&[f64]]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut ws = self.workspace();
        let loss = self.accumulate_gradient(rows, &mut ws, &mut grad);
        (loss, grad)
    }

    pub(crate) fn accumulate_gradient(&self, rows: &[&[f64]], ws: &mut Workspace, grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let d = self.input_dim();
        let scale = 2.0 / (rows.len() * d) as f64;
        let last = self.spans.len() - 1;
        let mut loss = 0.0;
        for x in rows {
            self.forward_into(x, ws);
            // Output pre-activation gradient through the sigmoid.
            {
                let out = &ws.acts[last + 1];
                let delta = &mut ws.deltas[last + 1];
                for j in 0..d {
                    let e = out[j] - x[j];
                    loss += e * e;
                    delta[j] = scale * e * out[j] * (1.0 - out[j]);
                }
            }
            for l in (0..=last).rev() {
                let span = self.spans[l];
                let (lower, upper) = ws.deltas.split_at_mut(l + 1);
                let dz = &upper[0];
                let input = &ws.acts[l];
                let wr = span.weights();
                let br = span.biases();
                for o in 0..span.outputs {
                    let g = dz[o];
                    if g == 0.0 {
                        continue;
                    }
                    grad[br.start + o] += g;
                    let gw = &mut grad[wr.start + o * span.inputs..wr.start + (o + 1) * span.inputs];
                    for (gi, a) in gw.iter_mut().zip(input) {
                        *gi += g * a;
                    }
                }
                if l > 0 {
                    let below = &mut lower[l];
                    below.iter_mut().for_each(|v| *v = 0.0);
                    let w = &self.params[wr];
                    for o in 0..span.outputs {
                        let g = dz[o];
                        if g == 0.0 {
                            continue;
                        }
                        let row = &w[o * span.inputs..(o + 1) * span.inputs];
                        for (b, wv) in below.iter_mut().zip(row) {
                            *b += g * wv;
                        }
                    }
                    // ReLU derivative on the layer below.
                    for (b, a) in below.iter_mut().zip(&ws.acts[l]) {
                        if *a <= 0.0 {
                            *b = 0.0;
                        }
                    }
                }
            }
        }
        loss / (rows.len() * d) as f64
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.learning_rate * mh / (vh.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_follow_percentages() {
        assert_eq!(layer_dims(24).unwrap(), vec![24, 12, 6, 12, 24]);
        assert_eq!(layer_dims(4).unwrap(), vec![4, 2, 1, 2, 4]);
        assert_eq!(layer_dims(2).unwrap(), vec![2, 1, 1, 1, 2]);
        assert!(layer_dims(1).is_err());
        assert!(Autoencoder::new(1, 0).is_err());
    }

    #[test]
    fn seeded_build_is_bit_identical() {
        let a = Autoencoder::new(24, 7).unwrap();
        let b = Autoencoder::new(24, 7).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), Autoencoder::new(24, 8).unwrap().params());
    }

    #[test]
    fn outputs_in_open_unit_interval() {
        let ae = Autoencoder::new(6, 3).unwrap();
        let out = ae.reconstruct(&[0.0, 1.0, 0.5, 0.2, 0.9, 1.0]);
        assert!(out.iter().all(|v| *v > 0.0 && *v < 1.0));
        assert!(ae.row_mse(&[1.0; 6]) <= 1.0);
        assert_eq!(ae.encode(&[0.5; 6]).len(), 2);
    }

    #[test]
    fn serde_round_trip() {
        let ae = Autoencoder::new(5, 1).unwrap();
        let json = serde_json::to_string(&ae).unwrap();
        let back: Autoencoder = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ae);
        let broken = json.replacen("\"inputs\":5", "\"inputs\":4", 1);
        assert!(serde_json::from_str::<Autoencoder>(&broken).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let mut ae = Autoencoder::new(6, 2).unwrap();
        for w in ae.params_mut() {
            *w += rng.random_range(-0.5..0.5);
        }
        let (_, grad) = ae.loss_and_gradient(&refs);
        let h = 1e-6;
        for p in 0..grad.len() {
            let orig = ae.params[p];
            ae.params[p] = orig + h;
            let up = ae.loss_and_gradient(&refs).0;
            ae.params[p] = orig - h;
            let down = ae.loss_and_gradient(&refs).0;
            ae.params[p] = orig;
            let numeric = (up - down) / (2.0 * h);
            assert!((grad[p] - numeric).abs() <= 1e-4 * grad[p].abs().max(numeric.abs()).max(1e-7), "param {p}");
        }
    }

    #[test]
    fn mse_dimension_mismatch() {
        let ae = Autoencoder::new(4, 1).unwrap();
        assert!(matches!(ae.mse_rows(&Matrix::zeros(2, 3)), Err(Error::DimensionMismatch { .. })));
    }
}
