use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vetobargain::primitives::{GridSpec, ProposerUtility, TypeDistribution};
use vetobargain::two_type::TwoTypeParams;

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    #[serde(default)]
    pub delta_list: Vec<f64>,
    pub distribution: Option<DistributionConfig>,
    #[serde(default)]
    pub utility: UtilityConfig,
    #[serde(default)]
    pub grid: GridConfig,
    pub two_type: Option<TwoTypeConfig>,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionConfig {
    Uniform {
        lower: f64,
        upper: f64,
    },
    Triangular {
        lower: f64,
        upper: f64,
        peak: f64,
    },
    TruncatedNormal {
        lower: f64,
        upper: f64,
        mean: f64,
        sd: f64,
    },
    /// `(v, density)` knots; the density is renormalised.
    PiecewiseLinear {
        knots: Vec<(f64, f64)>,
    },
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilityConfig {
    #[default]
    LinearLoss,
    QuadraticLoss,
    Mixture {
        weight: f64,
    },
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Fixed number of type points; when absent the grid scales with patience.
    pub points: Option<usize>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_min_points")]
    pub min_points: usize,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
}

fn default_kappa() -> f64 {
    0.01
}
fn default_min_points() -> usize {
    400
}
fn default_max_points() -> usize {
    40_000
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            points: None,
            kappa: default_kappa(),
            min_points: default_min_points(),
            max_points: default_max_points(),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TwoTypeConfig {
    pub l: f64,
    pub h: f64,
    pub delta: f64,
    pub mu0: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    #[default]
    TwoType,
    Skim,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    #[default]
    None,
    TerminalOffer,
    SkipRung,
    RejectionProbability,
    SkimProbability,
    OffPathBelief,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub profile: ProfileKind,
    #[serde(default)]
    pub mutation: Mutation,
    /// Discount factor for the skim profile; defaults to the first of `delta_list`.
    pub delta: Option<f64>,
    #[serde(default = "default_points")]
    pub offer_points: usize,
    #[serde(default = "default_points")]
    pub type_points: usize,
    #[serde(default = "default_points")]
    pub horizon: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Type grid for the skim profile.
    #[serde(default = "default_skim_points")]
    pub skim_points: usize,
}

fn default_points() -> usize {
    200
}
fn default_eps() -> f64 {
    1e-3
}
fn default_skim_points() -> usize {
    2000
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            profile: ProfileKind::default(),
            mutation: Mutation::default(),
            delta: None,
            offer_points: default_points(),
            type_points: default_points(),
            horizon: default_points(),
            eps: default_eps(),
            skim_points: default_skim_points(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Skim payoff against full delegation.
    #[default]
    Skim,
    /// Leapfrog payoff against the commitment payoff.
    Leapfrog,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub kind: SweepKind,
}

#[derive(
    Clone,
    Copy,
    Debug,
    PartialEq,
    Eq,
    PartialOrd,
    Ord,
    Hash,
    Deserialize,
    Serialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Config> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// SHA-256 of the effective configuration in canonical TOML. The output
    /// section is left out: where results go does not change them.
    pub fn digest(&self) -> anyhow::Result<String> {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        let canon = toml::to_string(&c).context("serialising config")?;
        let hash = Sha256::digest(canon.as_bytes());
        Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn distribution(&self) -> anyhow::Result<TypeDistribution> {
        let Some(d) = &self.distribution else {
            bail!("config has no [distribution] section");
        };
        let f = match d.clone() {
            DistributionConfig::Uniform { lower, upper } => TypeDistribution::uniform(lower, upper),
            DistributionConfig::Triangular { lower, upper, peak } => {
                TypeDistribution::triangular(lower, upper, peak)
            }
            DistributionConfig::TruncatedNormal {
                lower,
                upper,
                mean,
                sd,
            } => TypeDistribution::truncated_normal(lower, upper, mean, sd),
            DistributionConfig::PiecewiseLinear { knots } => {
                TypeDistribution::piecewise_linear(knots)
            }
        };
        Ok(f?)
    }

    pub fn utility(&self) -> anyhow::Result<ProposerUtility> {
        Ok(match self.utility {
            UtilityConfig::LinearLoss => ProposerUtility::LinearLoss,
            UtilityConfig::QuadraticLoss => ProposerUtility::QuadraticLoss,
            UtilityConfig::Mixture { weight } => ProposerUtility::mixture(weight)?,
        })
    }

    pub fn grid_spec(&self) -> GridSpec {
        match self.grid.points {
            Some(n) => GridSpec::Points(n),
            None => GridSpec::Auto {
                kappa: self.grid.kappa,
                min_points: self.grid.min_points,
                max_points: self.grid.max_points,
            },
        }
    }

    pub fn deltas(&self) -> anyhow::Result<&[f64]> {
        if self.delta_list.is_empty() {
            bail!("config has an empty delta_list");
        }
        Ok(&self.delta_list)
    }

    pub fn two_type_params(&self) -> anyhow::Result<TwoTypeParams> {
        let Some(t) = self.two_type else {
            bail!("config has no [two_type] section");
        };
        Ok(TwoTypeParams::new(t.l, t.h, t.delta, t.mu0)?.with_utility(self.utility()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("sed = 3").is_err());
        let bad = "[distribution]\nfamily = \"uniform\"\nlower = 0.0\nupper = 1.0\npeak = 0.5\n";
        assert!(toml::from_str::<Config>(bad).is_err());
    }

    #[test]
    fn defaults_fill_in() {
        let c: Config = toml::from_str(
            "delta_list = [0.9]\n[distribution]\nfamily = \"uniform\"\nlower = 0.2\nupper = 1.0\n",
        )
        .unwrap();
        assert_eq!(c.verify.horizon, 200);
        assert_eq!(c.output.formats, vec![Format::Json, Format::Csv]);
        assert!(matches!(c.grid_spec(), GridSpec::Auto { .. }));
        assert_eq!(c.distribution().unwrap().lower(), 0.2);
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let mut c: Config = toml::from_str("delta_list = [0.9]").unwrap();
        let a = c.digest().unwrap();
        assert_eq!(a, c.digest().unwrap());
        assert_eq!(a.len(), 64);
        c.output.dir = PathBuf::from("elsewhere");
        assert_eq!(a, c.digest().unwrap());
        c.seed = Some(5);
        assert_ne!(a, c.digest().unwrap());
    }
}
