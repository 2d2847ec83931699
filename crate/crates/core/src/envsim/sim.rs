use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Environment;
use crate::dataset::{MixedState, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::fmt_exact;
use crate::seeds;
use crate::spectral::eigendecompose;
use crate::textio::{self, join_list, KeyValues, LineReader};

const SEED_COV: u64 = 21;
const SEED_COEF: u64 = 22;
/// Bound on the largest singular value of every transition matrix.
const STABILITY_BOUND: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovarianceSetting {
    /// One spectrum over the concatenated `z`.
    Dependent,
    /// Block-diagonal; each block carries its own spectrum.
    IndependentBlocks,
}

impl fmt::Display for CovarianceSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovarianceSetting::Dependent => "dependent",
            CovarianceSetting::IndependentBlocks => "independent-blocks",
        })
    }
}

impl FromStr for CovarianceSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dependent" | "1" => Ok(CovarianceSetting::Dependent),
            "independent-blocks" | "independent" | "2" => Ok(CovarianceSetting::IndependentBlocks),
            _ => Err(Error::Config(format!("unknown covariance setting {s:?}"))),
        }
    }
}

/// Scalar knobs of the simulator. Coefficients are derived from these by
/// [`SimConfig::from_settings`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub n_traj: usize,
    pub horizon: usize,
    pub m0: usize,
    pub block_lengths: Vec<usize>,
    /// Eigenvalue decay rate ζ: `λ_k = exp(−ζk)`.
    pub zeta: f64,
    pub setting: CovarianceSetting,
    pub action_count: usize,
    /// Weight of the ReLU term in the reward.
    pub c: f64,
    pub gamma: f64,
    /// Autoregressive coefficient of `z` before stabilization.
    pub z_persistence: f64,
    pub x_noise_sd: f64,
    /// Multiplier on the `z` innovation (covariance `scale²·G`).
    pub z_noise_scale: f64,
    pub reward_noise_sd: f64,
    pub init_x_sd: f64,
    /// Multiplier on the `N(0, I/m0)` draw of the `x` offsets `b_a`.
    pub offset_scale: f64,
    /// Standard deviation of `zᵀβ₂ₐ` for `z ~ N(0, G)`.
    pub z_signal: f64,
    /// Seed for the covariance and all coefficients.
    pub seed: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            n_traj: 6,
            horizon: 80,
            m0: 2,
            block_lengths: vec![27; 4],
            zeta: 0.6,
            setting: CovarianceSetting::Dependent,
            action_count: 2,
            c: 0.5,
            gamma: 0.5,
            z_persistence: 0.5,
            x_noise_sd: 0.5,
            z_noise_scale: 1.0,
            reward_noise_sd: 0.0,
            init_x_sd: 1.0,
            offset_scale: 0.0,
            z_signal: 1.0,
            seed: 0,
        }
    }
}

impl SimSettings {
    pub fn m(&self) -> usize {
        self.block_lengths.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.zeta > 0.0) {
            return fail(format!("zeta must be positive, got {}", self.zeta));
        }
        if self.n_traj == 0 || self.horizon < 2 {
            return fail(format!("need N ≥ 1 and T ≥ 2, got N={} T={}", self.n_traj, self.horizon));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.block_lengths.is_empty() || self.block_lengths.contains(&0) {
            return fail(format!("invalid block lengths {:?}", self.block_lengths));
        }
        if self.action_count == 0 {
            return fail("action_count must be at least 1".into());
        }
        let scales = [
            self.x_noise_sd,
            self.z_noise_scale,
            self.reward_noise_sd,
            self.init_x_sd,
            self.z_signal,
            self.offset_scale,
        ];
        if scales.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) || !self.c.is_finite() {
            return fail("noise scales and signal strength must be finite and non-negative".into());
        }
        if !(self.z_persistence.abs() < 1.0) {
            return fail(format!("z persistence must lie in (−1, 1), got {}", self.z_persistence));
        }
        Ok(())
    }

    fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.push("sim_config", "v1")
            .push("n_traj", self.n_traj)
            .push("horizon", self.horizon)
            .push("m0", self.m0)
            .push("block_lengths", join_list(&self.block_lengths))
            .push("zeta", fmt_exact(self.zeta))
            .push("setting", self.setting)
            .push("action_count", self.action_count)
            .push("c", fmt_exact(self.c))
            .push("gamma", fmt_exact(self.gamma))
            .push("z_persistence", fmt_exact(self.z_persistence))
            .push("x_noise_sd", fmt_exact(self.x_noise_sd))
            .push("z_noise_scale", fmt_exact(self.z_noise_scale))
            .push("reward_noise_sd", fmt_exact(self.reward_noise_sd))
            .push("init_x_sd", fmt_exact(self.init_x_sd))
            .push("offset_scale", fmt_exact(self.offset_scale))
            .push("z_signal", fmt_exact(self.z_signal))
            .push("seed", self.seed);
        kv
    }

    fn from_key_values(kv: &KeyValues) -> Result<Self> {
        if kv.get("sim_config").is_none() {
            return Err(Error::Schema("not a simulator config".into()));
        }
        Ok(Self {
            n_traj: kv.parse_value("n_traj")?,
            horizon: kv.parse_value("horizon")?,
            m0: kv.parse_value("m0")?,
            block_lengths: kv.parse_list("block_lengths")?,
            zeta: kv.parse_value("zeta")?,
            setting: kv.require("setting")?.parse()?,
            action_count: kv.parse_value("action_count")?,
            c: kv.parse_value("c")?,
            gamma: kv.parse_value("gamma")?,
            z_persistence: kv.parse_value("z_persistence")?,
            x_noise_sd: kv.parse_value("x_noise_sd")?,
            z_noise_scale: kv.parse_value("z_noise_scale")?,
            reward_noise_sd: kv.parse_value("reward_noise_sd")?,
            init_x_sd: kv.parse_value("init_x_sd")?,
            offset_scale: kv.parse_value("offset_scale")?,
            z_signal: kv.parse_value("z_signal")?,
            seed: kv.parse_value("seed")?,
        })
    }
}

/// Covariance of `z` with spectrum `exp(−ζk)` and seeded random eigenvectors:
/// over all of `z` for the dependent setting, per block otherwise.
pub fn make_covariance(settings: &SimSettings) -> Matrix<f64> {
    let m = settings.m();
    let spectrum = |n: usize| -> Vec<f64> { (1..=n).map(|k| (-settings.zeta * k as f64).exp()).collect() };
    let compose = |n: usize, stream: u64| -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(settings.seed, &[SEED_COV, stream]));
        let u = Matrix::<f64>::random_orthonormal(n, &mut rng);
        let mut scaled = u.clone();
        let lambda = spectrum(n);
        for i in 0..n {
            for (j, &l) in lambda.iter().enumerate() {
                scaled[(i, j)] *= l;
            }
        }
        symmetrize(scaled.matmul(&u.transpose()))
    };
    match settings.setting {
        CovarianceSetting::Dependent => compose(m, 0),
        CovarianceSetting::IndependentBlocks => {
            let mut g = Matrix::zeros(m, m);
            let mut offset = 0;
            for (j, &len) in settings.block_lengths.iter().enumerate() {
                let block = compose(len, j as u64);
                for r in 0..len {
                    for c in 0..len {
                        g[(offset + r, offset + c)] = block[(r, c)];
                    }
                }
                offset += len;
            }
            g
        }
    }
}

fn symmetrize(mut g: Matrix<f64>) -> Matrix<f64> {
    for i in 0..g.rows() {
        for j in 0..i {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Simulator with frozen coefficients.
///
/// Transition for action `a` on `s = (x, z)`:
/// `s' = M_a s + b_a + noise`, where the `x` noise is `N(0, σ_x² I)` and the
/// `z` noise is `N(0, scale²·G)`. The `z` rows of `M_a` are `ρI` (no action
/// or `x` feedback), so `z` keeps the eigenvectors and decay of `G`.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub settings: SimSettings,
    pub covariance: Matrix<f64>,
    pub beta_x: Vec<Vec<f64>>,
    pub beta_z: Vec<Vec<f64>>,
    pub transitions: Vec<Matrix<f64>>,
    pub offsets: Vec<Vec<f64>>,
    /// `U·diag(√λ)` of the covariance.
    noise_factor: Matrix<f64>,
    blocks: Arc<[usize]>,
}

impl PartialEq for SimConfig {
    fn eq(&self, other: &Self) -> bool {
        self.settings == other.settings
            && self.covariance == other.covariance
            && self.beta_x == other.beta_x
            && self.beta_z == other.beta_z
            && self.transitions == other.transitions
            && self.offsets == other.offsets
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

impl SimConfig {
    /// Draws every coefficient from the settings' seed.
    ///
    /// `β₁ₐ ~ N(0, I/m0)`, `β₂ₐ ~ N(0, I/m)` rescaled so that `zᵀβ₂ₐ` has
    /// standard deviation `z_signal`, the `x` rows of `M_a` have entries
    /// `N(0, 1/dim)` and `b_a` is `N(0, offset_scale²·I/m0)` on `x` and zero on `z`. All
    /// transition matrices are then shrunk by a common factor if any largest
    /// singular value exceeds 0.9.
    pub fn from_settings(settings: SimSettings) -> Result<Self> {
        settings.validate()?;
        let (m0, m) = (settings.m0, settings.m());
        let d = m0 + m;
        let covariance = make_covariance(&settings);
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(settings.seed, &[SEED_COEF]));
        let inv_sqrt = |n: usize| if n == 0 { 0.0 } else { 1.0 / (n as f64).sqrt() };
        let mut beta_x = Vec::new();
        let mut beta_z = Vec::new();
        let mut transitions = Vec::new();
        let mut offsets = Vec::new();
        for _ in 0..settings.action_count {
            beta_x.push(normal_vec(&mut rng, m0, inv_sqrt(m0)));
            let mut bz = normal_vec(&mut rng, m, inv_sqrt(m));
            let sd = dot(&bz, &covariance.matvec(&bz)).sqrt();
            if sd > 0.0 {
                bz.iter_mut().for_each(|b| *b *= settings.z_signal / sd);
            }
            beta_z.push(bz);
            let mut mat = Matrix::zeros(d, d);
            for i in 0..m0 {
                for j in 0..m0 {
                    mat[(i, j)] = rng.sample::<f64, _>(StandardNormal) * inv_sqrt(m0);
                }
                for j in m0..d {
                    mat[(i, j)] = rng.sample::<f64, _>(StandardNormal) * inv_sqrt(m);
                }
            }
            for i in m0..d {
                mat[(i, i)] = settings.z_persistence;
            }
            transitions.push(mat);
            let mut b = normal_vec(&mut rng, m0, settings.offset_scale * inv_sqrt(m0));
            b.resize(d, 0.0);
            offsets.push(b);
        }
        let largest = transitions.iter().map(Matrix::spectral_norm).fold(0.0, f64::max);
        if largest > STABILITY_BOUND {
            for mat in &mut transitions {
                mat.scale(STABILITY_BOUND / largest);
            }
        }
        Self::with_coefficients(settings, covariance, beta_x, beta_z, transitions, offsets)
    }

    /// Assembles a simulator from explicit coefficients.
    pub fn with_coefficients(
        settings: SimSettings,
        covariance: Matrix<f64>,
        beta_x: Vec<Vec<f64>>,
        beta_z: Vec<Vec<f64>>,
        transitions: Vec<Matrix<f64>>,
        offsets: Vec<Vec<f64>>,
    ) -> Result<Self> {
        settings.validate()?;
        let (m0, m, a) = (settings.m0, settings.m(), settings.action_count);
        let d = m0 + m;
        let shapes_ok = covariance.rows() == m
            && covariance.cols() == m
            && beta_x.len() == a
            && beta_z.len() == a
            && transitions.len() == a
            && offsets.len() == a
            && beta_x.iter().all(|b| b.len() == m0)
            && beta_z.iter().all(|b| b.len() == m)
            && transitions.iter().all(|t| t.rows() == d && t.cols() == d)
            && offsets.iter().all(|b| b.len() == d);
        if !shapes_ok {
            return Err(Error::Dimension("simulator coefficients do not match the settings".into()));
        }
        let basis = eigendecompose(&covariance)?;
        let mut noise_factor = basis.eigenvectors.clone();
        for (j, &l) in basis.eigenvalues.iter().enumerate() {
            let s = l.max(0.0).sqrt();
            for i in 0..m {
                noise_factor[(i, j)] *= s;
            }
        }
        let blocks = Arc::from(settings.block_lengths.clone());
        Ok(Self {
            settings,
            covariance,
            beta_x,
            beta_z,
            transitions,
            offsets,
            noise_factor,
            blocks,
        })
    }

    pub fn block_lengths(&self) -> &Arc<[usize]> {
        &self.blocks
    }

    /// Uniform-behavior dataset of the configured size.
    pub fn generate_dataset<T: crate::scalar::Real>(&self, seed: u64) -> Result<TrajectoryDataset<T>> {
        super::generate_dataset(self, self.settings.n_traj, self.settings.horizon, seed)
    }

    /// Mean next state `M_a s + b_a`.
    pub fn mean_next(&self, x: &[f64], z: &[f64], action: usize) -> Vec<f64> {
        let s: Vec<f64> = x.iter().chain(z).copied().collect();
        let mut out = self.transitions[action].matvec(&s);
        for (o, b) in out.iter_mut().zip(&self.offsets[action]) {
            *o += b;
        }
        out
    }

    fn gaussian_z(&self, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
        let e = normal_vec(rng, self.settings.m(), 1.0);
        let mut z = self.noise_factor.matvec(&e);
        z.iter_mut().for_each(|v| *v *= scale);
        z
    }

    pub fn render(&self) -> String {
        let mut out = self.settings.to_key_values().to_line();
        out.push('\n');
        textio::write_matrix(&mut out, "covariance", &self.covariance);
        for a in 0..self.settings.action_count {
            textio::write_vector(&mut out, &format!("beta_x{a}"), &self.beta_x[a]);
            textio::write_vector(&mut out, &format!("beta_z{a}"), &self.beta_z[a]);
            textio::write_matrix(&mut out, &format!("M{a}"), &self.transitions[a]);
            textio::write_vector(&mut out, &format!("b{a}"), &self.offsets[a]);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = LineReader::new(text);
        let settings = SimSettings::from_key_values(&KeyValues::parse(r.next_line()?, 1)?)?;
        let covariance = r.read_matrix("covariance")?;
        let (mut bx, mut bz, mut ms, mut bs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for a in 0..settings.action_count {
            bx.push(r.read_vector(&format!("beta_x{a}"))?);
            bz.push(r.read_vector(&format!("beta_z{a}"))?);
            ms.push(r.read_matrix(&format!("M{a}"))?);
            bs.push(r.read_vector(&format!("b{a}"))?);
        }
        Self::with_coefficients(settings, covariance, bx, bz, ms, bs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        textio::write_file(path, &self.render())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&textio::read_file(path)?)
    }
}

/// Noise-free reward `l + c·max(l, 0)` with `l = xᵀβ₁ₐ + zᵀβ₂ₐ`.
pub fn reward(cfg: &SimConfig, x: &[f64], z: &[f64], action: usize) -> f64 {
    let lin = dot(x, &cfg.beta_x[action]) + dot(z, &cfg.beta_z[action]);
    lin + cfg.settings.c * lin.max(0.0)
}

impl Environment for SimConfig {
    fn action_count(&self) -> usize {
        self.settings.action_count
    }

    fn gamma(&self) -> f64 {
        self.settings.gamma
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> MixedState<f64> {
        let x = normal_vec(rng, self.settings.m0, self.settings.init_x_sd);
        let z = self.gaussian_z(rng, 1.0);
        MixedState {
            x,
            z,
            block_lengths: self.blocks.clone(),
        }
    }

    fn step(&self, state: &MixedState<f64>, action: usize, rng: &mut ChaCha8Rng) -> (MixedState<f64>, f64) {
        let m0 = self.settings.m0;
        let mut mean = self.mean_next(&state.x, &state.z, action);
        let x_noise = normal_vec(rng, m0, self.settings.x_noise_sd);
        let z_noise = self.gaussian_z(rng, self.settings.z_noise_scale);
        let r_noise: f64 = rng.sample(StandardNormal);
        for (v, e) in mean.iter_mut().zip(x_noise.iter().chain(&z_noise)) {
            *v += e;
        }
        let z = mean.split_off(m0);
        let r = reward(self, &state.x, &state.z, action) + self.settings.reward_noise_sd * r_noise;
        (
            MixedState {
                x: mean,
                z,
                block_lengths: self.blocks.clone(),
            },
            r,
        )
    }
}
