use std::fmt;
use std::str::FromStr;

use crate::dataset::MixedState;
use crate::error::{Error, Result};
use crate::neuralnet::NetworkArchitecture;
use crate::scalar::Real;
use crate::spectral::SpectralBasis;

/// How the high-frequency block enters the Q-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureVariant {
    /// `(x, first κ whitened principal component scores of z)`
    Pca { kappa: usize },
    /// `(x, z)`
    All,
    /// `(x, per-block means of z)`
    Ave,
    /// `(x, z)` with an extra hidden layer of width `m0 + κ` right after the input.
    Bottleneck { kappa: usize },
}

impl FeatureVariant {
    pub fn label(&self) -> &'static str {
        match self {
            FeatureVariant::Pca { .. } => "PCA",
            FeatureVariant::All => "ALL",
            FeatureVariant::Ave => "AVE",
            FeatureVariant::Bottleneck { .. } => "BOTTLE",
        }
    }

    pub fn needs_basis(&self) -> bool {
        matches!(self, FeatureVariant::Pca { .. })
    }

    pub fn kappa(&self) -> Option<usize> {
        match *self {
            FeatureVariant::Pca { kappa } | FeatureVariant::Bottleneck { kappa } => Some(kappa),
            _ => None,
        }
    }

    /// Same variant with κ replaced, for variants that carry one.
    pub fn with_kappa(self, kappa: usize) -> Self {
        match self {
            FeatureVariant::Pca { .. } => FeatureVariant::Pca { kappa },
            FeatureVariant::Bottleneck { .. } => FeatureVariant::Bottleneck { kappa },
            other => other,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa() == Some(0) {
            return Err(Error::Config(format!("{self}: kappa must be at least 1")));
        }
        Ok(())
    }

    pub fn feature_dim(&self, m0: usize, block_lengths: &[usize]) -> usize {
        let m: usize = block_lengths.iter().sum();
        match *self {
            FeatureVariant::Pca { kappa } => m0 + kappa,
            FeatureVariant::All | FeatureVariant::Bottleneck { .. } => m0 + m,
            FeatureVariant::Ave => m0 + block_lengths.len(),
        }
    }

    /// Network architecture for this variant given the shared hidden widths.
    pub fn architecture<T: Real>(
        &self,
        m0: usize,
        block_lengths: &[usize],
        hidden_widths: &[usize],
        dropout_rate: T,
        v_max: T,
    ) -> Result<NetworkArchitecture<T>> {
        self.validate()?;
        let mut hidden = Vec::with_capacity(hidden_widths.len() + 1);
        if let FeatureVariant::Bottleneck { kappa } = *self {
            hidden.push(m0 + kappa);
        }
        hidden.extend_from_slice(hidden_widths);
        NetworkArchitecture::new(self.feature_dim(m0, block_lengths), hidden, dropout_rate, v_max)
    }
}

impl fmt::Display for FeatureVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureVariant::Pca { kappa } => write!(f, "pca:{kappa}"),
            FeatureVariant::All => write!(f, "all"),
            FeatureVariant::Ave => write!(f, "ave"),
            FeatureVariant::Bottleneck { kappa } => write!(f, "bottleneck:{kappa}"),
        }
    }
}

/// Parses `pca:5`, `all`, `ave`, `bottleneck:5`. `pca` and `bottleneck`
/// without a κ parse with `kappa = 0`, meaning "choose by variance explained"
/// to callers that support it.
impl FromStr for FeatureVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, arg) = match lower.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (lower.as_str(), None),
        };
        let kappa = || -> Result<usize> {
            arg.map_or(Ok(0), |a| {
                a.parse()
                    .map_err(|_| Error::Config(format!("invalid kappa in variant {s:?}")))
            })
        };
        match name {
            "pca" => Ok(FeatureVariant::Pca { kappa: kappa()? }),
            "bottleneck" | "bottle" => Ok(FeatureVariant::Bottleneck { kappa: kappa()? }),
            "all" if arg.is_none() => Ok(FeatureVariant::All),
            "ave" | "mean" if arg.is_none() => Ok(FeatureVariant::Ave),
            _ => Err(Error::Config(format!("unknown feature variant {s:?}"))),
        }
    }
}

/// Feature vector for one state.
pub fn build_features<T: Real>(
    variant: &FeatureVariant,
    state: &MixedState<T>,
    basis: Option<&SpectralBasis<T>>,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(variant.feature_dim(state.m0(), &state.block_lengths));
    build_features_into(variant, state, basis, &mut out)?;
    Ok(out)
}

pub(crate) fn build_features_into<T: Real>(
    variant: &FeatureVariant,
    state: &MixedState<T>,
    basis: Option<&SpectralBasis<T>>,
    out: &mut Vec<T>,
) -> Result<()> {
    out.clear();
    out.extend_from_slice(&state.x);
    match *variant {
        FeatureVariant::Pca { kappa } => {
            let basis = basis.ok_or_else(|| {
                Error::Config("PCA features need a spectral basis".into())
            })?;
            out.extend(basis.pc_scores(&state.z, kappa)?);
        }
        FeatureVariant::All | FeatureVariant::Bottleneck { .. } => out.extend_from_slice(&state.z),
        FeatureVariant::Ave => {
            for block in state.blocks() {
                let s: T = block.iter().copied().sum();
                out.push(s / T::from_usize_lossy(block.len()));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::spectral::eigendecompose;
    use std::sync::Arc;

    fn state(x: Vec<f64>, z: Vec<f64>, blocks: Vec<usize>) -> MixedState<f64> {
        MixedState::new(x, z, Arc::from(blocks)).unwrap()
    }

    #[test]
    fn ave_takes_block_means() {
        let s = state(vec![1.0, 2.0], vec![3.0, 5.0], vec![2]);
        assert_eq!(build_features(&FeatureVariant::Ave, &s, None).unwrap(), vec![1.0, 2.0, 4.0]);
        let s = state(vec![], vec![1.0, 3.0, 10.0], vec![2, 1]);
        assert_eq!(build_features(&FeatureVariant::Ave, &s, None).unwrap(), vec![2.0, 10.0]);
    }

    #[test]
    fn all_concatenates() {
        let s = state(vec![1.0, 2.0], vec![3.0, 5.0], vec![2]);
        assert_eq!(
            build_features(&FeatureVariant::All, &s, None).unwrap(),
            vec![1.0, 2.0, 3.0, 5.0]
        );
        assert_eq!(
            build_features(&FeatureVariant::Bottleneck { kappa: 1 }, &s, None).unwrap(),
            vec![1.0, 2.0, 3.0, 5.0]
        );
    }

    #[test]
    fn pca_scores() {
        let basis = eigendecompose(&Matrix::from_diag(&[4.0, 1.0])).unwrap();
        let s = state(vec![], vec![2.0, 0.0], vec![2]);
        let v = FeatureVariant::Pca { kappa: 1 };
        assert_eq!(build_features(&v, &s, Some(&basis)).unwrap(), vec![1.0]);
        assert!(matches!(build_features(&v, &s, None), Err(Error::Config(_))));
    }

    #[test]
    fn dims_and_architectures() {
        let blocks = [27, 27, 27, 27];
        assert_eq!(FeatureVariant::Pca { kappa: 5 }.feature_dim(2, &blocks), 7);
        assert_eq!(FeatureVariant::All.feature_dim(2, &blocks), 110);
        assert_eq!(FeatureVariant::Ave.feature_dim(2, &blocks), 6);
        let arch = FeatureVariant::Bottleneck { kappa: 5 }
            .architecture(2, &blocks, &[15, 5, 5], 0.1, 4.0)
            .unwrap();
        assert_eq!(arch.input_dim, 110);
        assert_eq!(arch.hidden_widths, vec![7, 15, 5, 5]);
        assert!(FeatureVariant::Pca { kappa: 0 }
            .architecture(2, &blocks, &[15], 0.1, 4.0)
            .is_err());
    }

    #[test]
    fn parse_and_display() {
        for v in [
            FeatureVariant::Pca { kappa: 5 },
            FeatureVariant::All,
            FeatureVariant::Ave,
            FeatureVariant::Bottleneck { kappa: 7 },
        ] {
            assert_eq!(v.to_string().parse::<FeatureVariant>().unwrap(), v);
        }
        assert_eq!("PCA".parse::<FeatureVariant>().unwrap(), FeatureVariant::Pca { kappa: 0 });
        assert!("svd".parse::<FeatureVariant>().is_err());
        assert!("all:3".parse::<FeatureVariant>().is_err());
    }
}
