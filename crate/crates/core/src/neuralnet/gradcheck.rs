//! Central finite-difference check of the analytic gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{forward_ws, gradient, init_network, sample_mask, DropoutMask, NetworkArchitecture, NetworkParameters, Workspace};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckOptions {
    pub batch_size: usize,
    pub step: f64,
    /// Positive weights, biases and inputs: every unit stays active.
    pub linear_region: bool,
    /// Fix one dropout mask per sample and check through it.
    pub with_dropout: bool,
    /// Minimum |pre-activation| accepted for a sampled input, so that a
    /// perturbation of size `step` cannot cross a ReLU kink.
    pub kink_margin: f64,
}

impl Default for GradientCheckOptions {
    fn default() -> Self {
        Self {
            batch_size: 8,
            step: 1e-5,
            linear_region: false,
            with_dropout: false,
            kink_margin: 1e-3,
        }
    }
}

/// Worst relative error between analytic and finite-difference gradients on
/// a random network and batch.
pub fn gradient_check(arch: &NetworkArchitecture<f64>, seed: u64) -> f64 {
    gradient_check_with(arch, seed, &GradientCheckOptions::default())
}

pub fn gradient_check_with(arch: &NetworkArchitecture<f64>, seed: u64, opts: &GradientCheckOptions) -> f64 {
    // the clamp is checked separately; here the network itself is compared
    let arch = NetworkArchitecture {
        v_max: f64::INFINITY,
        ..arch.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_network(&arch, seed);
    for layer in &mut params.layers {
        for b in &mut layer.bias {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    if opts.linear_region {
        params.iter_mut().for_each(|v| *v = v.abs() + 0.05);
    }
    let mut ws = Workspace::new(&arch);
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(opts.batch_size);
    for _ in 0..opts.batch_size {
        let mut x = Vec::new();
        for _attempt in 0..200 {
            x = (0..arch.input_dim)
                .map(|_| {
                    let v: f64 = rng.sample(StandardNormal);
                    if opts.linear_region {
                        v.abs() + 0.1
                    } else {
                        v
                    }
                })
                .collect();
            forward_ws(&params, &arch, &x, None, &mut ws);
            let hidden = &ws.pre[..ws.pre.len() - 1];
            if hidden.iter().flatten().all(|p| p.abs() > opts.kink_margin) {
                break;
            }
        }
        inputs.push(x);
    }
    let targets: Vec<f64> = (0..opts.batch_size).map(|_| rng.sample(StandardNormal)).collect();
    let masks: Option<Vec<DropoutMask<f64>>> = (opts.with_dropout && arch.dropout_rate > 0.0)
        .then(|| (0..opts.batch_size).map(|_| sample_mask(&arch, &mut rng)).collect());
    let batch: Vec<(&[f64], f64)> = inputs
        .iter()
        .map(Vec::as_slice)
        .zip(targets.iter().copied())
        .collect();
    let (analytic, _) = gradient(&params, &arch, &batch, masks.as_deref()).expect("valid batch");

    let loss = |p: &NetworkParameters<f64>, ws: &mut Workspace<f64>| -> f64 {
        batch
            .iter()
            .enumerate()
            .map(|(i, (x, y))| {
                let mask = masks.as_ref().map(|m| &m[i]);
                let (f, _) = forward_ws(p, &arch, x, mask, ws);
                (f - y).powi(2)
            })
            .sum::<f64>()
            / batch.len() as f64
    };

    let h = opts.step;
    let analytic: Vec<f64> = analytic.iter().copied().collect();
    let mut worst = 0.0f64;
    for (idx, &a) in analytic.iter().enumerate() {
        let original = *params.flat_mut(idx).expect("index in range");
        *params.flat_mut(idx).expect("index in range") = original + h;
        let up = loss(&params, &mut ws);
        *params.flat_mut(idx).expect("index in range") = original - h;
        let down = loss(&params, &mut ws);
        *params.flat_mut(idx).expect("index in range") = original;
        let numeric = (up - down) / (2.0 * h);
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(hidden: Vec<usize>) -> NetworkArchitecture<f64> {
        NetworkArchitecture::new(6, hidden, 0.1, 10.0).unwrap()
    }

    #[test]
    fn small_network_passes() {
        let err = gradient_check(&arch(vec![7, 4]), 1);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn default_architecture_passes() {
        let err = gradient_check(&arch(vec![15, 5, 5]), 2);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn linear_region_is_tight() {
        let opts = GradientCheckOptions {
            linear_region: true,
            ..Default::default()
        };
        let err = gradient_check_with(&arch(vec![5, 3]), 3, &opts);
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn holds_through_fixed_dropout_masks() {
        let opts = GradientCheckOptions {
            with_dropout: true,
            ..Default::default()
        };
        let err = gradient_check_with(&arch(vec![15, 5, 5]), 4, &opts);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn deterministic() {
        let a = arch(vec![15, 5, 5]);
        assert_eq!(gradient_check(&a, 7).to_bits(), gradient_check(&a, 7).to_bits());
    }
}
