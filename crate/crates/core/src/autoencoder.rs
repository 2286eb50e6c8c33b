//! Fully-connected undercomplete autoencoder with hand-written
//! backpropagation and Adam.
//!
//! Every layer except the last is affine followed by ReLU; the output layer is
//! affine only. Loss is the squared reconstruction error averaged over both
//! samples and features.

use serde::{Deserialize, Serialize};

use crate::error::{HifError, Result};
use crate::linalg::Matrix;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output; ReLU at 0 gives 0.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    layer_dims: Vec<usize>,
    /// `weights[k]` is `dims[k+1] x dims[k]`.
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    activations: Vec<Activation>,
}

/// Output of a single forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub reconstruction: Vec<f64>,
    pub bottleneck: Vec<f64>,
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &AutoencoderModel) -> Self {
        Self {
            weights: model
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        self.weights
            .iter_mut()
            .for_each(|w| w.as_mut_slice().fill(0.0));
        self.biases.iter_mut().for_each(|b| b.fill(0.0));
    }

    /// Parameter blocks in the order weights[0], biases[0], weights[1], ...
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

/// Checks the layer layout of an undercomplete autoencoder.
pub fn validate_layer_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 3 {
        return Err(HifError::InvalidConfig(format!(
            "autoencoder needs at least one hidden layer, got dims {dims:?}"
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(HifError::InvalidConfig(format!(
            "layer dims must be positive, got {dims:?}"
        )));
    }
    let input = dims[0];
    if dims[dims.len() - 1] != input {
        return Err(HifError::InvalidConfig(format!(
            "output dim {} must equal input dim {input}",
            dims[dims.len() - 1]
        )));
    }
    if let Some(&h) = dims[1..dims.len() - 1].iter().find(|&&h| h >= input) {
        return Err(HifError::InvalidConfig(format!(
            "hidden dim {h} is not smaller than input dim {input}"
        )));
    }
    Ok(())
}

fn default_activations(n_layers: usize) -> Vec<Activation> {
    (0..n_layers)
        .map(|k| {
            if k + 1 == n_layers {
                Activation::Identity
            } else {
                Activation::Relu
            }
        })
        .collect()
}

impl AutoencoderModel {
    /// Builds a model from explicit parameters with the default activations.
    pub fn new(layer_dims: Vec<usize>, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        let activations = default_activations(layer_dims.len().saturating_sub(1));
        Self::with_activations(layer_dims, weights, biases, activations)
    }

    pub fn with_activations(
        layer_dims: Vec<usize>,
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
        activations: Vec<Activation>,
    ) -> Result<Self> {
        let model = Self {
            layer_dims,
            weights,
            biases,
            activations,
        };
        model.validate().map_err(|e| match e {
            HifError::ModelFormat(msg) => HifError::Shape(msg),
            other => other,
        })?;
        Ok(model)
    }

    /// All parameters zero.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        validate_layer_dims(layer_dims)?;
        let weights = layer_dims
            .windows(2)
            .map(|w| Matrix::zeros(w[1], w[0]))
            .collect();
        let biases = layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        Self::new(layer_dims.to_vec(), weights, biases)
    }

    /// Seeded Glorot-uniform weights, zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(layer_dims)?;
        let mut rng = SeededRng::new(seed);
        for w in &mut model.weights {
            let (fan_out, fan_in) = (w.rows(), w.cols());
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for x in w.as_mut_slice() {
                *x = rng.uniform_range(-bound, bound);
            }
        }
        Ok(model)
    }

    /// Re-checks every structural invariant; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        validate_layer_dims(&self.layer_dims).map_err(|e| HifError::ModelFormat(e.to_string()))?;
        let n_layers = self.layer_dims.len() - 1;
        if self.weights.len() != n_layers
            || self.biases.len() != n_layers
            || self.activations.len() != n_layers
        {
            return Err(HifError::ModelFormat(format!(
                "{n_layers} layers need as many weight matrices, bias vectors and activations; got {}, {}, {}",
                self.weights.len(),
                self.biases.len(),
                self.activations.len()
            )));
        }
        for k in 0..n_layers {
            let (din, dout) = (self.layer_dims[k], self.layer_dims[k + 1]);
            let w = &self.weights[k];
            if w.rows() != dout || w.cols() != din {
                return Err(HifError::ModelFormat(format!(
                    "layer {k} weights are {}x{}, expected {dout}x{din}",
                    w.rows(),
                    w.cols()
                )));
            }
            if self.biases[k].len() != dout {
                return Err(HifError::ModelFormat(format!(
                    "layer {k} bias has {} entries, expected {dout}",
                    self.biases[k].len()
                )));
            }
            if !w.is_finite() || self.biases[k].iter().any(|b| !b.is_finite()) {
                return Err(HifError::ModelFormat(format!(
                    "layer {k} has non-finite parameters"
                )));
            }
        }
        Ok(())
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn n_parameters(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w.as_slice().len())
            .chain(self.biases.iter().map(Vec::len))
            .sum()
    }

    /// Mutable parameter blocks, ordered like [`Gradients::blocks`].
    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    /// Index of the narrowest layer among the activations (first on ties).
    fn bottleneck_layer(&self) -> usize {
        let hidden = &self.layer_dims[1..self.layer_dims.len() - 1];
        1 + hidden
            .iter()
            .enumerate()
            .min_by_key(|&(i, &d)| (d, i))
            .map_or(0, |(i, _)| i)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(HifError::Shape(format!(
                "input has {} values, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(HifError::InvalidInput("input contains non-finite values".into()));
        }
        Ok(())
    }

    /// Fills `acts[k]` with the activation of layer `k` (`acts[0] = x`).
    fn forward_into(&self, x: &[f64], acts: &mut [Vec<f64>]) {
        acts[0].copy_from_slice(x);
        for k in 0..self.weights.len() {
            let (before, after) = acts.split_at_mut(k + 1);
            let input = &before[k];
            let out = &mut after[0];
            let act = self.activations[k];
            for ((o, w_row), b) in out
                .iter_mut()
                .zip(self.weights[k].iter_rows())
                .zip(&self.biases[k])
            {
                let z = w_row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>() + b;
                *o = act.apply(z);
            }
        }
    }

    fn activation_buffers(&self) -> Vec<Vec<f64>> {
        self.layer_dims.iter().map(|&d| vec![0.0; d]).collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        self.check_input(x)?;
        let mut acts = self.activation_buffers();
        self.forward_into(x, &mut acts);
        let bottleneck = acts[self.bottleneck_layer()].clone();
        let reconstruction = acts.pop().unwrap_or_default();
        Ok(Forward {
            reconstruction,
            bottleneck,
        })
    }

    /// Reconstructs every row of `x`.
    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(HifError::Shape(format!(
                "matrix has {} columns, model expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut out = Matrix::zeros(x.rows(), x.cols());
        let mut acts = self.activation_buffers();
        for i in 0..x.rows() {
            let row = x.row(i);
            self.check_input(row)?;
            self.forward_into(row, &mut acts);
            out.row_mut(i).copy_from_slice(&acts[acts.len() - 1]);
        }
        Ok(out)
    }

    /// Mean squared error of this model on `x`.
    pub fn evaluate_loss(&self, x: &Matrix) -> Result<f64> {
        loss(x, &self.reconstruct(x)?)
    }

    /// Loss and exact gradients on one batch.
    pub fn loss_and_gradients(&self, batch: &Matrix) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(self);
        let mut work = Workspace::new(self);
        let l = self.accumulate_gradients(batch, &(0..batch.rows()).collect::<Vec<_>>(), &mut grads, &mut work)?;
        Ok((l, grads))
    }

    /// Accumulates the gradient of the mean loss over `rows` of `x` into
    /// `grads` (which must be cleared beforehand) and returns that loss.
    fn accumulate_gradients(
        &self,
        x: &Matrix,
        rows: &[usize],
        grads: &mut Gradients,
        work: &mut Workspace,
    ) -> Result<f64> {
        if rows.is_empty() {
            return Err(HifError::InsufficientData("empty batch".into()));
        }
        if x.cols() != self.input_dim() {
            return Err(HifError::Shape(format!(
                "batch has {} columns, model expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let n_layers = self.weights.len();
        let m = self.input_dim() as f64;
        let scale = 2.0 / (rows.len() as f64 * m);
        let mut total = 0.0;
        for &i in rows {
            let target = x.row(i);
            self.check_input(target)?;
            self.forward_into(target, &mut work.acts);

            let out_act = self.activations[n_layers - 1];
            let delta = &mut work.deltas[n_layers - 1];
            for ((d, &y), &t) in delta.iter_mut().zip(&work.acts[n_layers]).zip(target) {
                let err = y - t;
                total += err * err;
                *d = scale * err * out_act.derivative_from_output(y);
            }

            for k in (0..n_layers).rev() {
                let input = &work.acts[k];
                let delta = &work.deltas[k];
                let gw = &mut grads.weights[k];
                for (r, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (g, a) in gw.row_mut(r).iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                for (g, d) in grads.biases[k].iter_mut().zip(delta) {
                    *g += d;
                }
                if k == 0 {
                    break;
                }
                let (lower, upper) = work.deltas.split_at_mut(k);
                let prev = &mut lower[k - 1];
                let delta = &upper[0];
                prev.fill(0.0);
                for (w_row, &d) in self.weights[k].iter_rows().zip(delta) {
                    if d == 0.0 {
                        continue;
                    }
                    for (p, w) in prev.iter_mut().zip(w_row) {
                        *p += w * d;
                    }
                }
                let act = self.activations[k - 1];
                for (p, &a) in prev.iter_mut().zip(&work.acts[k]) {
                    *p *= act.derivative_from_output(a);
                }
            }
        }
        Ok(total / (rows.len() as f64 * m))
    }
}

struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(model: &AutoencoderModel) -> Self {
        Self {
            acts: model.activation_buffers(),
            deltas: model.layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
        }
    }
}

/// Mean over samples and features of the squared elementwise error.
pub fn loss(x: &Matrix, reconstruction: &Matrix) -> Result<f64> {
    if x.rows() != reconstruction.rows() || x.cols() != reconstruction.cols() {
        return Err(HifError::Shape(format!(
            "loss of {}x{} against {}x{}",
            x.rows(),
            x.cols(),
            reconstruction.rows(),
            reconstruction.cols()
        )));
    }
    if x.is_empty() {
        return Err(HifError::InsufficientData("loss of an empty batch".into()));
    }
    let sse: f64 = x
        .as_slice()
        .iter()
        .zip(reconstruction.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sse / x.as_slice().len() as f64)
}

/// Gradient of the batch loss with respect to every parameter.
pub fn backward(model: &AutoencoderModel, batch: &Matrix) -> Result<Gradients> {
    model.loss_and_gradients(batch).map(|(_, g)| g)
}

/// Residual matrix `E = X - X̃`.
pub fn residuals(model: &AutoencoderModel, x: &Matrix) -> Result<Matrix> {
    let mut e = model.reconstruct(x)?;
    for (r, &v) in e.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *r = v - *r;
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(HifError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(HifError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(HifError::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(HifError::InvalidConfig(format!(
                "Adam betas must lie in [0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(HifError::InvalidConfig(format!(
                "Adam epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Seed for the initial weights.
    pub fn init_seed(&self) -> u64 {
        SeededRng::derive_seed(self.seed, 1)
    }

    fn shuffle_seed(&self) -> u64 {
        SeededRng::derive_seed(self.seed, 2)
    }
}

/// Adam moment estimates for a list of parameter blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(block_sizes: &[usize]) -> Self {
        Self {
            m: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(HifError::Shape(format!(
            "Adam got {} parameter blocks, {} gradient blocks and {} state blocks",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(HifError::Shape(format!(
                "Adam block of {} parameters got {} gradients",
                p.len(),
                g.len()
            )));
        }
        for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

/// Per-epoch losses. `train_loss` is the sample-weighted mean of the
/// mini-batch losses seen during the epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochLoss>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochLoss> {
        self.epochs.last()
    }
}

/// Trains a fresh autoencoder with Adam on mini-batches.
pub fn train(
    train_x: &Matrix,
    validation_x: &Matrix,
    layer_dims: &[usize],
    config: &TrainConfig,
) -> Result<(AutoencoderModel, TrainHistory)> {
    config.validate()?;
    validate_layer_dims(layer_dims)?;
    let input = layer_dims[0];
    for (name, x) in [("training", train_x), ("validation", validation_x)] {
        if x.cols() != input {
            return Err(HifError::Shape(format!(
                "{name} matrix has {} columns, layer dims start with {input}",
                x.cols()
            )));
        }
    }
    if train_x.rows() == 0 {
        return Err(HifError::InsufficientData("training matrix is empty".into()));
    }

    let mut model = AutoencoderModel::init(layer_dims, config.init_seed())?;
    let mut grads = Gradients::zeros_like(&model);
    let mut work = Workspace::new(&model);
    let sizes: Vec<usize> = grads.blocks().iter().map(|b| b.len()).collect();
    let mut adam = AdamState::new(&sizes);
    let mut rng = SeededRng::new(config.shuffle_seed());
    let mut order: Vec<usize> = (0..train_x.rows()).collect();
    let mut history = TrainHistory::default();

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut weighted = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            let l = model.accumulate_gradients(train_x, batch, &mut grads, &mut work)?;
            if !l.is_finite() {
                return Err(HifError::TrainingDiverged { epoch });
            }
            weighted += l * batch.len() as f64;
            let g = grads.blocks();
            adam_step(&mut model.param_blocks_mut(), &g, &mut adam, config)?;
        }
        let train_loss = weighted / train_x.rows() as f64;
        let validation_loss = if validation_x.rows() > 0 {
            model.evaluate_loss(validation_x)?
        } else {
            f64::NAN
        };
        if !train_loss.is_finite() || (validation_x.rows() > 0 && !validation_loss.is_finite()) {
            return Err(HifError::TrainingDiverged { epoch });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6e}, validation {validation_loss:.6e}");
        history.epochs.push(EpochLoss {
            epoch,
            train_loss,
            validation_loss,
        });
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model(enc_w: f64, dec_w: f64) -> AutoencoderModel {
        // 2-1-2 is the smallest valid layout; use the first input only
        AutoencoderModel::new(
            vec![2, 1, 2],
            vec![
                Matrix::from_rows(vec![vec![enc_w, 0.0]]).unwrap(),
                Matrix::from_rows(vec![vec![dec_w], vec![0.0]]).unwrap(),
            ],
            vec![vec![0.0], vec![0.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = AutoencoderModel::zeros(&[4, 2, 4]).unwrap();
        let f = m.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(f.reconstruction, vec![0.0; 4]);
    }

    #[test]
    fn two_multiplications_through_relu() {
        let m = tiny_model(2.0, 0.5);
        let f = m.forward(&[0.5, 0.0]).unwrap();
        assert_eq!(f.bottleneck, vec![1.0]);
        assert_eq!(f.reconstruction, vec![0.5, 0.0]);
    }

    #[test]
    fn negative_preactivation_is_gated() {
        let m = tiny_model(2.0, 0.5);
        let f = m.forward(&[-0.5, 0.0]).unwrap();
        assert_eq!(f.bottleneck, vec![0.0]);
        assert_eq!(f.reconstruction, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_errors() {
        let m = AutoencoderModel::zeros(&[4, 2, 4]).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(HifError::Shape(_))));
        assert!(matches!(
            m.forward(&[f64::NAN, 0.0, 0.0, 0.0]),
            Err(HifError::InvalidInput(_))
        ));
    }

    #[test]
    fn bottleneck_is_narrowest_layer() {
        let m = AutoencoderModel::init(&[32, 15, 10, 15, 32], 1).unwrap();
        let f = m.forward(&[0.5; 32]).unwrap();
        assert_eq!(f.bottleneck.len(), 10);
        assert_eq!(f.reconstruction.len(), 32);
    }

    #[test]
    fn rejects_overcomplete_or_mismatched_layers() {
        assert!(AutoencoderModel::zeros(&[4, 4, 4]).is_err());
        assert!(AutoencoderModel::zeros(&[4, 5, 4]).is_err());
        assert!(AutoencoderModel::zeros(&[4, 2, 3]).is_err());
        assert!(AutoencoderModel::zeros(&[4, 4]).is_err());
    }

    #[test]
    fn loss_examples() {
        let x = Matrix::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let z = Matrix::zeros(1, 2);
        assert_eq!(loss(&x, &x).unwrap(), 0.0);
        assert_eq!(loss(&x, &z).unwrap(), 0.5);
        let x2 = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(loss(&x2, &Matrix::zeros(2, 2)).unwrap(), 0.5);
        assert!(loss(&x2, &z).is_err());
    }

    #[test]
    fn perfect_reconstruction_zero_output_bias_gradient() {
        // identity on the first coordinate, zero on the second
        let m = tiny_model(1.0, 1.0);
        let x = Matrix::from_rows(vec![vec![0.3, 0.0], vec![0.7, 0.0]]).unwrap();
        let g = backward(&m, &x).unwrap();
        assert_eq!(g.biases[1], vec![0.0, 0.0]);
    }

    #[test]
    fn inactive_unit_has_zero_incoming_gradient() {
        let mut m = AutoencoderModel::init(&[3, 2, 3], 5).unwrap();
        // unit 0 of the hidden layer always sees a negative pre-activation
        m.weights[0].row_mut(0).fill(0.0);
        m.biases[0][0] = -1.0;
        let x = Matrix::from_rows(vec![vec![0.2, 0.4, 0.9], vec![0.8, 0.1, 0.3]]).unwrap();
        let g = backward(&m, &x).unwrap();
        assert_eq!(g.weights[0].row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(g.biases[0][0], 0.0);
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let g = vec![0.0, 0.0];
        let mut state = AdamState::new(&[2]);
        adam_step(&mut [p.as_mut_slice()], &[g.as_slice()], &mut state, &TrainConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_hand_value() {
        // m̂ = 0.1, v̂ = 0.01, so the step is lr * 0.1 / (0.1 + 1e-8)
        let mut p = vec![1.0];
        let mut state = AdamState::new(&[1]);
        let cfg = TrainConfig::default();
        adam_step(&mut [p.as_mut_slice()], &[&[0.1]], &mut state, &cfg).unwrap();
        let expected = 1.0 - 0.001 * 0.1 / (0.1 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] - 0.999).abs() < 1e-9);
    }

    #[test]
    fn adam_is_deterministic() {
        let cfg = TrainConfig::default();
        let run = || {
            let mut p = vec![0.3, 0.4];
            let mut s = AdamState::new(&[2]);
            for _ in 0..2 {
                adam_step(&mut [p.as_mut_slice()], &[&[0.5, -0.25]], &mut s, &cfg).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn residuals_definitions() {
        let x = Matrix::from_rows(vec![vec![0.1, 0.9, 0.4], vec![0.5, 0.2, 0.3]]).unwrap();
        let zero = AutoencoderModel::zeros(&[3, 2, 3]).unwrap();
        assert_eq!(residuals(&zero, &x).unwrap(), x);

        let m = AutoencoderModel::init(&[3, 2, 3], 3).unwrap();
        let e = residuals(&m, &x).unwrap();
        let f = m.forward(x.row(1)).unwrap();
        for j in 0..3 {
            assert_eq!(e[(1, j)], x[(1, j)] - f.reconstruction[j]);
        }
    }

    #[test]
    fn residuals_of_perfect_reconstruction_are_zero() {
        let m = tiny_model(1.0, 1.0);
        let x = Matrix::from_rows(vec![vec![0.3, 0.0]]).unwrap();
        assert_eq!(residuals(&m, &x).unwrap(), Matrix::zeros(1, 2));
    }

    #[test]
    fn train_rejects_bad_config() {
        let x = Matrix::zeros(4, 3);
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&x, &x, &[3, 2, 3], &bad), Err(HifError::InvalidConfig(_))));
        assert!(matches!(
            train(&x, &x, &[4, 2, 4], &TrainConfig::default()),
            Err(HifError::Shape(_))
        ));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let mut rng = SeededRng::new(2);
        let x = Matrix::new(64, 4, (0..256).map(|_| rng.uniform() * 1e150).collect()).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e200,
            epochs: 5,
            ..TrainConfig::default()
        };
        match train(&x, &x, &[4, 2, 4], &cfg) {
            Err(HifError::TrainingDiverged { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
