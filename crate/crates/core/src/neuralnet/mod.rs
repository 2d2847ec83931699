//! Fully-connected ReLU regression network with inverted dropout and a
//! clamped scalar output.
//!
//! `f(x) = clamp(W_L g_{L-1}(… g_0(x)) + b_L, −v_max, v_max)` with
//! `g_j(h) = max(W_j h + b_j, 0)`. Gradients are exact reverse-mode
//! derivatives of the mean squared error; the ReLU subgradient at 0 is 0 and
//! the clamp passes gradient only strictly inside `(−v_max, v_max)`.

mod gradcheck;
mod train;

use std::path::Path;

use rand::Rng;

pub use gradcheck::{gradient_check, gradient_check_with, GradientCheckOptions};
pub use train::{train_regression, Adam, TrainConfig, TrainResult};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::{fmt_exact, Real};
use crate::textio::{self, join_list, KeyValues, LineReader};

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkArchitecture<T> {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    /// Probability of zeroing a hidden activation in training mode.
    pub dropout_rate: T,
    /// Output clamp, normally `R_max / (1 − γ)`.
    pub v_max: T,
}

impl<T: Real> NetworkArchitecture<T> {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, dropout_rate: T, v_max: T) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden_widths,
            dropout_rate,
            v_max,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("network input dimension must be positive".into()));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::Config(format!(
                "need at least one hidden layer with positive widths, got {:?}",
                self.hidden_widths
            )));
        }
        if !(self.dropout_rate >= T::zero() && self.dropout_rate < T::one()) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.v_max > T::zero()) {
            return Err(Error::Config(format!("v_max must be positive, got {}", self.v_max)));
        }
        Ok(())
    }

    /// `[d_0, d_1, …, d_L, 1]`
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(1);
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    /// `out × in`
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> NetworkParameters<T> {
    pub fn zeros_like(arch: &NetworkArchitecture<T>) -> Self {
        let dims = arch.layer_dims();
        Self {
            layers: dims
                .windows(2)
                .map(|w| Layer {
                    weights: Matrix::zeros(w[1], w[0]),
                    bias: vec![T::zero(); w[1]],
                })
                .collect(),
        }
    }

    pub fn matches(&self, arch: &NetworkArchitecture<T>) -> bool {
        let dims = arch.layer_dims();
        self.layers.len() + 1 == dims.len()
            && self.layers.iter().zip(dims.windows(2)).all(|(l, w)| {
                l.weights.rows() == w[1] && l.weights.cols() == w[0] && l.bias.len() == w[1]
            })
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Flat view over every parameter, layer by layer (weights then bias).
    pub fn iter(&self) -> impl Iterator<Item = &T> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    /// Mutable access by flat index, in [`iter`](Self::iter) order.
    pub fn flat_mut(&mut self, mut idx: usize) -> Option<&mut T> {
        for layer in &mut self.layers {
            let nw = layer.weights.as_slice().len();
            if idx < nw {
                return Some(&mut layer.weights.as_mut_slice()[idx]);
            }
            idx -= nw;
            if idx < layer.bias.len() {
                return Some(&mut layer.bias[idx]);
            }
            idx -= layer.bias.len();
        }
        None
    }

    fn fill_zero(&mut self) {
        self.iter_mut().for_each(|v| *v = T::zero());
    }
}

/// Uniform `(−1/√fan_in, 1/√fan_in)` weights, zero biases.
pub fn init_network<T: Real>(arch: &NetworkArchitecture<T>, seed: u64) -> NetworkParameters<T> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParameters::zeros_like(arch);
    for layer in &mut params.layers {
        let bound = 1.0 / (layer.weights.cols() as f64).sqrt();
        for w in layer.weights.as_mut_slice() {
            *w = T::lit(rng.random_range(-bound..bound));
        }
    }
    params
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train,
}

/// Per-hidden-layer dropout multipliers for one sample: each entry is either
/// `0` or `1/(1−rate)`.
pub type DropoutMask<T> = Vec<Vec<T>>;

pub fn sample_mask<T: Real, R: Rng + ?Sized>(arch: &NetworkArchitecture<T>, rng: &mut R) -> DropoutMask<T> {
    let p = arch.dropout_rate.as_f64();
    let keep = T::one() / (T::one() - arch.dropout_rate);
    arch.hidden_widths
        .iter()
        .map(|&w| {
            (0..w)
                .map(|_| {
                    if p > 0.0 && rng.random::<f64>() < p {
                        T::zero()
                    } else {
                        keep
                    }
                })
                .collect()
        })
        .collect()
}

/// Reusable buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub(crate) struct Workspace<T> {
    /// Post-activation outputs per layer; `acts[0]` is the input.
    acts: Vec<Vec<T>>,
    /// Pre-activations per layer.
    pre: Vec<Vec<T>>,
    delta: Vec<Vec<T>>,
}

impl<T: Real> Workspace<T> {
    pub(crate) fn new(arch: &NetworkArchitecture<T>) -> Self {
        let dims = arch.layer_dims();
        Self {
            acts: dims.iter().map(|&d| vec![T::zero(); d]).collect(),
            pre: dims[1..].iter().map(|&d| vec![T::zero(); d]).collect(),
            delta: dims[1..].iter().map(|&d| vec![T::zero(); d]).collect(),
        }
    }
}

/// Forward pass, filling the workspace. Returns the clamped output and the
/// raw (pre-clamp) output.
pub(crate) fn forward_ws<T: Real>(
    params: &NetworkParameters<T>,
    arch: &NetworkArchitecture<T>,
    input: &[T],
    mask: Option<&DropoutMask<T>>,
    ws: &mut Workspace<T>,
) -> (T, T) {
    ws.acts[0].copy_from_slice(input);
    let last = params.layers.len() - 1;
    for (j, layer) in params.layers.iter().enumerate() {
        let (head, tail) = ws.acts.split_at_mut(j + 1);
        let inp = &head[j];
        let out = &mut tail[0];
        let pre = &mut ws.pre[j];
        for (i, (p, &b)) in pre.iter_mut().zip(&layer.bias).enumerate() {
            *p = dot(layer.weights.row(i), inp) + b;
        }
        if j < last {
            match mask {
                Some(m) => {
                    for ((o, &p), &k) in out.iter_mut().zip(pre.iter()).zip(&m[j]) {
                        *o = p.max(T::zero()) * k;
                    }
                }
                None => {
                    for (o, &p) in out.iter_mut().zip(pre.iter()) {
                        *o = p.max(T::zero());
                    }
                }
            }
        } else {
            out[0] = pre[0];
        }
    }
    let raw = ws.pre[last][0];
    (raw.max(-arch.v_max).min(arch.v_max), raw)
}

/// Accumulates `scale · ∂f/∂θ` into `grads` for the sample held in `ws`.
fn backward_ws<T: Real>(
    params: &NetworkParameters<T>,
    mask: Option<&DropoutMask<T>>,
    ws: &mut Workspace<T>,
    scale: T,
    grads: &mut NetworkParameters<T>,
) {
    let last = params.layers.len() - 1;
    ws.delta[last][0] = scale;
    for j in (0..=last).rev() {
        {
            let d = &ws.delta[j];
            let inp = &ws.acts[j];
            let g = &mut grads.layers[j];
            for (i, &di) in d.iter().enumerate() {
                if di == T::zero() {
                    continue;
                }
                g.bias[i] += di;
                for (gw, &x) in g.weights.row_mut(i).iter_mut().zip(inp) {
                    *gw += di * x;
                }
            }
        }
        if j == 0 {
            break;
        }
        // delta for layer j-1 through W_jᵀ, ReLU and dropout
        let (lo, hi) = ws.delta.split_at_mut(j);
        let prev = &mut lo[j - 1];
        let d = &hi[0];
        prev.iter_mut().for_each(|v| *v = T::zero());
        let w = &params.layers[j].weights;
        for (i, &di) in d.iter().enumerate() {
            if di == T::zero() {
                continue;
            }
            for (p, &wij) in prev.iter_mut().zip(w.row(i)) {
                *p += di * wij;
            }
        }
        let pre = &ws.pre[j - 1];
        for (k, p) in prev.iter_mut().enumerate() {
            let gate = if pre[k] > T::zero() { T::one() } else { T::zero() };
            let keep = mask.map_or(T::one(), |m| m[j - 1][k]);
            *p *= gate * keep;
        }
    }
}

impl<T: Real> NetworkParameters<T> {
    /// Eval-mode output for one input.
    pub fn predict(&self, arch: &NetworkArchitecture<T>, input: &[T]) -> T {
        let mut ws = Workspace::new(arch);
        forward_ws(self, arch, input, None, &mut ws).0
    }

    pub(crate) fn predict_ws(&self, arch: &NetworkArchitecture<T>, input: &[T], ws: &mut Workspace<T>) -> T {
        forward_ws(self, arch, input, None, ws).0
    }
}

/// Network output for one input. Train mode draws a fresh dropout mask from `rng`.
pub fn forward<T: Real, R: Rng + ?Sized>(
    params: &NetworkParameters<T>,
    arch: &NetworkArchitecture<T>,
    input: &[T],
    mode: Mode,
    rng: &mut R,
) -> Result<T> {
    if input.len() != arch.input_dim {
        return Err(Error::Dimension(format!(
            "network input has length {}, expected {}",
            input.len(),
            arch.input_dim
        )));
    }
    if !params.matches(arch) {
        return Err(Error::Dimension("parameters do not match architecture".into()));
    }
    let mut ws = Workspace::new(arch);
    let out = match mode {
        Mode::Eval => forward_ws(params, arch, input, None, &mut ws).0,
        Mode::Train => {
            let mask = sample_mask(arch, rng);
            forward_ws(params, arch, input, Some(&mask), &mut ws).0
        }
    };
    Ok(out)
}

/// Gradient of `(1/|batch|) Σ (f(x) − y)²` and the loss itself. `masks`, when
/// given, holds one dropout mask per batch element.
pub fn gradient<T: Real>(
    params: &NetworkParameters<T>,
    arch: &NetworkArchitecture<T>,
    batch: &[(&[T], T)],
    masks: Option<&[DropoutMask<T>]>,
) -> Result<(NetworkParameters<T>, T)> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("gradient of an empty batch".into()));
    }
    if let Some((x, _)) = batch.iter().find(|(x, _)| x.len() != arch.input_dim) {
        return Err(Error::Dimension(format!(
            "network input has length {}, expected {}",
            x.len(),
            arch.input_dim
        )));
    }
    let mut grads = NetworkParameters::zeros_like(arch);
    let mut ws = Workspace::new(arch);
    let loss = accumulate_gradient(params, arch, batch.iter().copied(), masks, &mut ws, &mut grads);
    Ok((grads, loss))
}

/// Core of [`gradient`], writing into caller buffers. Returns the batch MSE.
pub(crate) fn accumulate_gradient<'a, T: Real>(
    params: &NetworkParameters<T>,
    arch: &NetworkArchitecture<T>,
    batch: impl ExactSizeIterator<Item = (&'a [T], T)>,
    masks: Option<&[DropoutMask<T>]>,
    ws: &mut Workspace<T>,
    grads: &mut NetworkParameters<T>,
) -> T {
    grads.fill_zero();
    let n = T::from_usize_lossy(batch.len());
    let two = T::lit(2.0);
    let mut loss = T::zero();
    for (idx, (x, y)) in batch.enumerate() {
        let mask = masks.map(|m| &m[idx]);
        let (f, raw) = forward_ws(params, arch, x, mask, ws);
        let err = f - y;
        loss += err * err;
        let inside = raw > -arch.v_max && raw < arch.v_max;
        if inside && err != T::zero() {
            backward_ws(params, mask, ws, two * err / n, grads);
        }
    }
    loss / n
}

/// Eval-mode mean squared error over a dataset.
pub fn mse<T: Real>(
    params: &NetworkParameters<T>,
    arch: &NetworkArchitecture<T>,
    inputs: &Matrix<T>,
    targets: &[T],
) -> T {
    let mut ws = Workspace::new(arch);
    let mut total = T::zero();
    for (i, &y) in targets.iter().enumerate() {
        let e = params.predict_ws(arch, inputs.row(i), &mut ws) - y;
        total += e * e;
    }
    total / T::from_usize_lossy(targets.len())
}

impl<T: Real> NetworkParameters<T> {
    pub fn render(&self, arch: &NetworkArchitecture<T>) -> String {
        let mut kv = KeyValues::new();
        kv.push("network", "v1")
            .push("input_dim", arch.input_dim)
            .push("hidden", join_list(&arch.hidden_widths))
            .push("dropout", fmt_exact(arch.dropout_rate))
            .push("v_max", fmt_exact(arch.v_max));
        let mut out = kv.to_line();
        out.push('\n');
        for (j, layer) in self.layers.iter().enumerate() {
            textio::write_matrix(&mut out, &format!("W{j}"), &layer.weights);
            textio::write_vector(&mut out, &format!("b{j}"), &layer.bias);
        }
        out
    }

    pub fn parse(text: &str) -> Result<(NetworkArchitecture<T>, Self)> {
        let mut r = LineReader::new(text);
        let kv = KeyValues::parse(r.next_line()?, 1)?;
        if kv.get("network").is_none() {
            return Err(Error::Schema("not a network parameter file".into()));
        }
        let arch = NetworkArchitecture::new(
            kv.parse_value("input_dim")?,
            kv.parse_list("hidden")?,
            kv.parse_value("dropout")?,
            kv.parse_value("v_max")?,
        )?;
        let n_layers = arch.hidden_widths.len() + 1;
        let mut layers = Vec::with_capacity(n_layers);
        for j in 0..n_layers {
            let weights = r.read_matrix(&format!("W{j}"))?;
            let bias = r.read_vector(&format!("b{j}"))?;
            layers.push(Layer { weights, bias });
        }
        let params = Self { layers };
        if !params.matches(&arch) {
            return Err(Error::Dimension("layer shapes disagree with the header".into()));
        }
        Ok((arch, params))
    }

    pub fn save(&self, arch: &NetworkArchitecture<T>, path: &Path) -> Result<()> {
        textio::write_file(path, &self.render(arch))
    }

    pub fn load(path: &Path) -> Result<(NetworkArchitecture<T>, Self)> {
        Self::parse(&textio::read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch(input: usize, hidden: Vec<usize>, dropout: f64) -> NetworkArchitecture<f64> {
        NetworkArchitecture::new(input, hidden, dropout, 100.0).unwrap()
    }

    #[test]
    fn architecture_validation() {
        assert!(NetworkArchitecture::new(0, vec![3], 0.0, 1.0).is_err());
        assert!(NetworkArchitecture::new(2, vec![], 0.0, 1.0).is_err());
        assert!(NetworkArchitecture::new(2, vec![3, 0], 0.0, 1.0).is_err());
        assert!(NetworkArchitecture::new(2, vec![3], 1.0, 1.0).is_err());
        assert!(NetworkArchitecture::new(2, vec![3], 0.1, 0.0).is_err());
        assert_eq!(arch(7, vec![15, 5, 5], 0.1).layer_dims(), vec![7, 15, 5, 5, 1]);
    }

    #[test]
    fn init_is_deterministic_and_seed_dependent() {
        let a = arch(4, vec![8, 3], 0.0);
        assert_eq!(init_network(&a, 5), init_network(&a, 5));
        assert_ne!(init_network(&a, 5), init_network(&a, 6));
        let p = init_network(&a, 5);
        assert!(p.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_fan_in_scaling() {
        let a = arch(400, vec![50], 0.0);
        let p = init_network(&a, 1);
        let w = p.layers[0].weights.as_slice();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let theory = 1.0 / (3.0f64 * 400.0).sqrt();
        assert!((sd - theory).abs() / theory < 0.2, "{sd} vs {theory}");
    }

    #[test]
    fn zero_network_outputs_zero() {
        let a = arch(3, vec![4, 2], 0.0);
        let p = NetworkParameters::zeros_like(&a);
        assert_eq!(p.predict(&a, &[1.0, -2.0, 3.0]), 0.0);
    }

    #[test]
    fn single_unit_relu_gating() {
        let a = arch(1, vec![1], 0.0);
        let mut p = NetworkParameters::zeros_like(&a);
        p.layers[0].weights[(0, 0)] = 1.0;
        p.layers[1].weights[(0, 0)] = 2.0;
        assert_eq!(p.predict(&a, &[3.0]), 6.0);
        assert_eq!(p.predict(&a, &[-3.0]), 0.0);
    }

    #[test]
    fn output_is_clamped() {
        let mut a = arch(1, vec![1], 0.0);
        a.v_max = 5.0;
        let mut p = NetworkParameters::zeros_like(&a);
        p.layers[0].weights[(0, 0)] = 1.0;
        p.layers[1].weights[(0, 0)] = 2.0;
        assert_eq!(p.predict(&a, &[3.0]), 5.0);
        p.layers[1].weights[(0, 0)] = -2.0;
        assert_eq!(p.predict(&a, &[3.0]), -5.0);
        // no gradient through a saturated clamp
        let (g, _) = gradient(&p, &a, &[(&[3.0][..], 0.0)], None).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rejects_bad_input() {
        let a = arch(2, vec![2], 0.0);
        let p = init_network(&a, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            forward(&p, &a, &[1.0], Mode::Eval, &mut rng),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn eval_forward_is_pure() {
        let a = arch(3, vec![6, 4], 0.3);
        let p = init_network(&a, 9);
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let x = [0.3, -1.1, 2.0];
        let y1 = forward(&p, &a, &x, Mode::Eval, &mut r1).unwrap();
        let y2 = forward(&p, &a, &x, Mode::Eval, &mut r2).unwrap();
        assert_eq!(y1.to_bits(), y2.to_bits());
    }

    #[test]
    fn dropout_expectation_matches_eval_in_linear_region() {
        // all-positive weights and inputs keep every unit active, so the
        // network is linear in each dropout multiplier
        let a = arch(2, vec![6, 4], 0.1);
        let mut p = init_network(&a, 4);
        p.iter_mut().for_each(|v| *v = v.abs() + 0.05);
        let x = [0.7, 1.3];
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let eval = forward(&p, &a, &x, Mode::Eval, &mut rng).unwrap();
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| forward(&p, &a, &x, Mode::Train, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        let se = sd / (n as f64).sqrt();
        assert!((mean - eval).abs() < 3.0 * se, "mean {mean} eval {eval} se {se}");
    }

    #[test]
    fn zero_gradient_at_exact_fit() {
        let a = arch(2, vec![5], 0.0);
        let p = init_network(&a, 3);
        let xs = [[0.5, -0.2], [1.0, 2.0], [-1.0, 0.3]];
        let batch: Vec<(&[f64], f64)> = xs.iter().map(|x| (&x[..], p.predict(&a, x))).collect();
        let (g, loss) = gradient(&p, &a, &batch, None).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chain_rule_by_hand() {
        // f(x) = 1·relu(w·x) with x = 1 > 0 is linear in w: f = w.
        let a = arch(1, vec![1], 0.0);
        let mut p = NetworkParameters::zeros_like(&a);
        p.layers[0].weights[(0, 0)] = 2.0;
        p.layers[1].weights[(0, 0)] = 1.0;
        let (g, loss) = gradient(&p, &a, &[(&[1.0][..], 0.0)], None).unwrap();
        assert_eq!(loss, 4.0);
        // dL/dw = 2·(2 − 0)·1 = 4
        assert_eq!(g.layers[0].weights[(0, 0)], 4.0);
        assert!(gradient(&p, &a, &[], None).is_err());
    }

    #[test]
    fn parameter_file_round_trip() {
        let a = arch(3, vec![4, 2], 0.1);
        let p = init_network(&a, 12);
        let (a2, p2) = NetworkParameters::<f64>::parse(&p.render(&a)).unwrap();
        assert_eq!(a2, a);
        assert_eq!(p2, p);
    }
}
