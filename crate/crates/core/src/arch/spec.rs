//! Declarative model descriptions.
//!
//! A [`ModelSpec`] is a TOML document. Unknown keys are rejected. Widths are
//! output sizes per layer; for complex branches they count complex
//! channels/units. The last decoder width is always 1.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::norm::InputMode;
use crate::error::{Error, Result};
use crate::layers::CReluVariant;

pub const SPEC_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Convolutional denoising autoencoder.
    Cdae,
    /// Convolutional recurrent network.
    Crn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Real,
    Complex,
    Hybrid,
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Domain::Real => "real",
            Domain::Complex => "complex",
            Domain::Hybrid => "hybrid",
        })
    }
}

/// How the two branches of a hybrid model are joined at the bottleneck.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BottleneckConcat {
    /// Fold the doubled frequency axis into channels and concatenate along
    /// channels.
    #[default]
    ChannelFold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conversion {
    Mag,
    CartR2c,
    CartC2r,
}

impl Domain {
    /// Conversions each topology uses: real models split the complex input
    /// into `[re, im]` and merge their output back; hybrids take the
    /// magnitude at the real input and exchange both ways at the bottleneck.
    pub fn conversions(self) -> Vec<Conversion> {
        match self {
            Domain::Real => vec![Conversion::CartR2c, Conversion::CartC2r],
            Domain::Complex => vec![],
            Domain::Hybrid => vec![Conversion::Mag, Conversion::CartR2c, Conversion::CartC2r],
        }
    }
}

/// Layer widths of one branch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub encoder: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gru: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<usize>,
    pub decoder: Vec<usize>,
}

/// Real-equivalent parameter budgets the spec was derived against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    pub encoder: usize,
    pub decoder: usize,
}

fn default_bins() -> usize {
    crate::dsp::stft::BINS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub version: u32,
    pub name: String,
    pub family: Family,
    pub domain: Domain,
    #[serde(default = "default_bins")]
    pub freq_bins: usize,
    pub kernel_f: usize,
    pub stride_f: usize,
    pub pad_f: usize,
    #[serde(default)]
    pub crelu_variant: CReluVariant,
    #[serde(default)]
    pub input_mode: InputMode,
    #[serde(default)]
    pub bottleneck_concat: BottleneckConcat,
    #[serde(default)]
    pub conversions: Vec<Conversion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<Budget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real: Option<BranchSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complex: Option<BranchSpec>,
}

impl ModelSpec {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<ModelSpec> {
        let mut spec: ModelSpec = toml::from_str(text)?;
        if spec.conversions.is_empty() {
            spec.conversions = spec.domain.conversions();
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<ModelSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelSpec::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical TOML serialisation.
    pub fn hash(&self) -> Result<[u8; 32]> {
        Ok(Sha256::digest(self.to_toml()?.as_bytes()).into())
    }

    pub fn hash_hex(&self) -> Result<String> {
        Ok(self.hash()?.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Branches present for the domain, in (real, complex) order.
    pub fn branches(&self) -> Vec<(crate::arch::LayerDomain, &BranchSpec)> {
        use crate::arch::LayerDomain;
        let mut out = Vec::new();
        if let Some(r) = &self.real {
            out.push((LayerDomain::Real, r));
        }
        if let Some(c) = &self.complex {
            out.push((LayerDomain::Complex, c));
        }
        out
    }

    /// Checks the structural laws; geometry is checked by [`crate::arch::Plan`].
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Spec(format!("{}: {msg}", self.name)));
        if self.version != SPEC_VERSION {
            return fail(format!("unsupported version {} (expected {SPEC_VERSION})", self.version));
        }
        if self.kernel_f == 0 || self.stride_f == 0 {
            return fail("kernel_f and stride_f must be positive".into());
        }
        if self.freq_bins == 0 {
            return fail("freq_bins must be positive".into());
        }
        let (want_real, want_complex) = match self.domain {
            Domain::Real => (true, false),
            Domain::Complex => (false, true),
            Domain::Hybrid => (true, true),
        };
        if self.real.is_some() != want_real || self.complex.is_some() != want_complex {
            return fail(format!(
                "a {} model needs {} branch(es)",
                self.domain,
                match self.domain {
                    Domain::Real => "only the [real]",
                    Domain::Complex => "only the [complex]",
                    Domain::Hybrid => "both [real] and [complex]",
                }
            ));
        }
        let mut conv = self.conversions.clone();
        conv.sort();
        conv.dedup();
        let mut want = self.domain.conversions();
        want.sort();
        if conv != want || conv.len() != self.conversions.len() {
            return fail(format!(
                "conversions {:?} do not match the {} topology, which uses {:?}",
                self.conversions, self.domain, want
            ));
        }
        for (dom, b) in self.branches() {
            let label = format!("{dom:?} branch").to_lowercase();
            if b.encoder.is_empty() {
                return fail(format!("{label}: encoder list is empty"));
            }
            if b.decoder.is_empty() {
                return fail(format!("{label}: decoder list is empty"));
            }
            if b.decoder.len() != b.encoder.len() {
                return fail(format!(
                    "{label}: decoder has {} layers but encoder has {}",
                    b.decoder.len(),
                    b.encoder.len()
                ));
            }
            if b.decoder.last() != Some(&1) {
                return fail(format!("{label}: last decoder width must be 1"));
            }
            if b.encoder.iter().chain(&b.decoder).chain(&b.gru).any(|&w| w == 0) {
                return fail(format!("{label}: widths must be positive"));
            }
            match self.family {
                Family::Cdae => {
                    if !b.gru.is_empty() || b.linear.is_some() {
                        return fail(format!("{label}: CDAE branches have no GRU or linear layers"));
                    }
                }
                Family::Crn => {
                    if b.gru.is_empty() || b.linear.is_none() {
                        return fail(format!("{label}: CRN branches need GRU and linear layers"));
                    }
                }
            }
        }
        if self.domain == Domain::Hybrid {
            let last = *self.real.as_ref().expect("checked").encoder.last().expect("checked");
            if last % 2 != 0 {
                return fail(format!("real bottleneck width {last} must be even to convert into complex"));
            }
        }
        Ok(())
    }
}
