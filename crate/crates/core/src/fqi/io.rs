//! Policy directories: `policy.txt`, `basis.txt` (PCA only), `q{a}.txt`.

use std::path::Path;
use std::sync::Arc;

use super::{FeatureVariant, QEnsemble};
use crate::error::{Error, Result};
use crate::neuralnet::NetworkParameters;
use crate::scalar::{fmt_exact, Real};
use crate::spectral::SpectralBasis;
use crate::textio::{self, KeyValues};

const MANIFEST: &str = "policy.txt";
const BASIS: &str = "basis.txt";

fn network_file(a: usize) -> String {
    format!("q{a}.txt")
}

impl<T: Real> QEnsemble<T> {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut kv = KeyValues::new();
        kv.push("policy", "v1")
            .push("variant", self.variant)
            .push("action_count", self.action_count())
            .push("gamma", fmt_exact(self.gamma));
        textio::write_file(&dir.join(MANIFEST), &(kv.to_line() + "\n"))?;
        if let Some(basis) = &self.basis {
            basis.save(&dir.join(BASIS))?;
        }
        for (a, net) in self.networks.iter().enumerate() {
            net.save(&self.arch, &dir.join(network_file(a)))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = textio::read_file(&dir.join(MANIFEST))?;
        let kv = KeyValues::parse(text.lines().next().unwrap_or(""), 1)?;
        if kv.get("policy").is_none() {
            return Err(Error::Schema(format!("{} is not a policy manifest", MANIFEST)));
        }
        let variant: FeatureVariant = kv.require("variant")?.parse()?;
        let action_count: usize = kv.parse_value("action_count")?;
        let gamma: T = kv.parse_value("gamma")?;
        let basis = if variant.needs_basis() {
            Some(Arc::new(SpectralBasis::load(&dir.join(BASIS))?))
        } else {
            None
        };
        let mut arch = None;
        let mut networks = Vec::with_capacity(action_count);
        for a in 0..action_count {
            let (ar, net) = NetworkParameters::load(&dir.join(network_file(a)))?;
            match &arch {
                None => arch = Some(ar),
                Some(first) if *first != ar => {
                    return Err(Error::Schema(format!("network {a} has a different architecture")));
                }
                Some(_) => {}
            }
            networks.push(net);
        }
        let arch = arch.ok_or_else(|| Error::Schema("policy has no actions".into()))?;
        Ok(Self {
            networks,
            arch,
            gamma,
            variant,
            basis,
        })
    }
}
