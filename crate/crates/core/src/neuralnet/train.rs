use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{accumulate_gradient, mse, DropoutMask, NetworkArchitecture, NetworkParameters, Workspace};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam decay rates must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Adaptive moment estimation state.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    m: NetworkParameters<T>,
    v: NetworkParameters<T>,
    step: i32,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
}

impl<T: Real> Adam<T> {
    pub fn new(arch: &NetworkArchitecture<T>, cfg: &TrainConfig) -> Self {
        Self {
            m: NetworkParameters::zeros_like(arch),
            v: NetworkParameters::zeros_like(arch),
            step: 0,
            lr: T::lit(cfg.learning_rate),
            beta1: T::lit(cfg.beta1),
            beta2: T::lit(cfg.beta2),
            eps: T::lit(cfg.epsilon),
        }
    }

    pub fn update(&mut self, params: &mut NetworkParameters<T>, grads: &NetworkParameters<T>) {
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult<T> {
    /// Parameters with the lowest end-of-epoch training loss.
    pub params: NetworkParameters<T>,
    pub best_epoch: usize,
    pub best_loss: T,
    /// Eval-mode training MSE after each epoch.
    pub epoch_losses: Vec<T>,
}

fn fill_mask<T: Real, R: Rng + ?Sized>(arch: &NetworkArchitecture<T>, rng: &mut R, mask: &mut DropoutMask<T>) {
    let p = arch.dropout_rate.as_f64();
    let keep = T::one() / (T::one() - arch.dropout_rate);
    for layer in mask.iter_mut() {
        for k in layer.iter_mut() {
            *k = if rng.random::<f64>() < p { T::zero() } else { keep };
        }
    }
}

/// Shuffled minibatch Adam on the mean squared error, starting from `init`.
pub fn train_regression<T: Real>(
    init: NetworkParameters<T>,
    arch: &NetworkArchitecture<T>,
    inputs: &Matrix<T>,
    targets: &[T],
    cfg: &TrainConfig,
) -> Result<TrainResult<T>> {
    cfg.validate()?;
    arch.validate()?;
    if targets.is_empty() || inputs.rows() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} input rows for {} targets",
            inputs.rows(),
            targets.len()
        )));
    }
    if inputs.cols() != arch.input_dim {
        return Err(Error::Dimension(format!(
            "inputs have {} columns, network expects {}",
            inputs.cols(),
            arch.input_dim
        )));
    }
    if !init.matches(arch) {
        return Err(Error::Dimension("initial parameters do not match architecture".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init;
    let mut adam = Adam::new(arch, cfg);
    let mut grads = NetworkParameters::zeros_like(arch);
    let mut ws = Workspace::new(arch);
    let use_dropout = arch.dropout_rate > T::zero();
    let template: DropoutMask<T> = arch
        .hidden_widths
        .iter()
        .map(|&w| vec![T::one(); w])
        .collect();
    let mut masks: Vec<DropoutMask<T>> = vec![template; cfg.batch_size.min(targets.len())];
    let mut order: Vec<usize> = (0..targets.len()).collect();
    let mut best: Option<(NetworkParameters<T>, usize, T)> = None;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            if use_dropout {
                for mask in masks.iter_mut().take(chunk.len()) {
                    fill_mask(arch, &mut rng, mask);
                }
            }
            let batch = chunk.iter().map(|&i| (inputs.row(i), targets[i]));
            let loss = accumulate_gradient(
                &params,
                arch,
                batch,
                use_dropout.then_some(&masks[..chunk.len()]),
                &mut ws,
                &mut grads,
            );
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            adam.update(&mut params, &grads);
        }
        let loss = mse(&params, arch, inputs, targets);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        epoch_losses.push(loss);
        if best.as_ref().is_none_or(|(_, _, b)| loss < *b) {
            best = Some((params.clone(), epoch, loss));
        }
    }
    let (params, best_epoch, best_loss) = best.expect("at least one epoch");
    Ok(TrainResult {
        params,
        best_epoch,
        best_loss,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::init_network;

    fn line_data(n: usize) -> (Matrix<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let ys = xs.iter().map(|x| 2.0 * x).collect();
        (Matrix::from_vec(n, 1, xs), ys)
    }

    #[test]
    fn fits_a_line() {
        let arch = NetworkArchitecture::new(1, vec![8], 0.0, 10.0).unwrap();
        let (x, y) = line_data(100);
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 16,
            learning_rate: 1e-2,
            seed: 3,
            ..TrainConfig::default()
        };
        let res = train_regression(init_network(&arch, 1), &arch, &x, &y, &cfg).unwrap();
        assert!(res.best_loss < 1e-3, "mse {}", res.best_loss);
        assert_eq!(res.epoch_losses.len(), 200);
        assert_eq!(res.best_loss, res.epoch_losses[res.best_epoch - 1]);
        assert!(res.epoch_losses.iter().all(|&l| l >= res.best_loss));
    }

    #[test]
    fn zero_targets_with_zero_output_layer_stay_at_zero() {
        let arch = NetworkArchitecture::new(2, vec![4], 0.1, 10.0).unwrap();
        let mut p = init_network(&arch, 1);
        let last = p.layers.last_mut().unwrap();
        last.weights.as_mut_slice().iter_mut().for_each(|w| *w = 0.0);
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.3]]);
        let y = vec![0.0; 3];
        let res = train_regression(p.clone(), &arch, &x, &y, &TrainConfig::default()).unwrap();
        assert!(res.epoch_losses.iter().all(|&l| l == 0.0));
        assert_eq!(res.params, p);
    }

    #[test]
    fn training_is_deterministic() {
        let arch = NetworkArchitecture::new(1, vec![6, 3], 0.1, 10.0).unwrap();
        let (x, y) = line_data(40);
        let cfg = TrainConfig {
            epochs: 15,
            seed: 99,
            ..TrainConfig::default()
        };
        let a = train_regression(init_network(&arch, 2), &arch, &x, &y, &cfg).unwrap();
        let b = train_regression(init_network(&arch, 2), &arch, &x, &y, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn divergence_is_reported() {
        let arch = NetworkArchitecture::new(1, vec![8], 0.0, f64::INFINITY).unwrap();
        let (x, y) = line_data(20);
        let y: Vec<f64> = y.iter().map(|v| v * 1e300).collect();
        let cfg = TrainConfig {
            epochs: 5,
            learning_rate: 1e300,
            ..TrainConfig::default()
        };
        let err = train_regression(init_network(&arch, 0), &arch, &x, &y, &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn rejects_bad_config_and_shapes() {
        let arch = NetworkArchitecture::new(1, vec![2], 0.0, 1.0).unwrap();
        let (x, y) = line_data(5);
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train_regression(init_network(&arch, 0), &arch, &x, &y, &bad).is_err());
        assert!(train_regression(init_network(&arch, 0), &arch, &x, &y[..3], &TrainConfig::default()).is_err());
    }
}
