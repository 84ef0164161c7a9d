use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sqfn_core::error::Error;
use sqfn_core::fourier::{BandFamily, MultiplierKind};
use sqfn_core::walsh::FreqFamily;
use sqfn_core::weights::WeightKind;

/// Largest grid exponent a scenario may request.
pub const MAX_N: u32 = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Walsh,
    Fourier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Identities,
    Bessel,
    LayerCake,
    Stopping,
    GoodLambda,
    OperatorNorm,
    Radial,
    Domination,
    Structural,
    Weights,
    Fourier,
}

impl Suite {
    pub const ALL: [Suite; 11] = [
        Suite::Identities,
        Suite::Bessel,
        Suite::LayerCake,
        Suite::Stopping,
        Suite::GoodLambda,
        Suite::OperatorNorm,
        Suite::Radial,
        Suite::Domination,
        Suite::Structural,
        Suite::Weights,
        Suite::Fourier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Bessel => "bessel",
            Suite::LayerCake => "layer_cake",
            Suite::Stopping => "stopping",
            Suite::GoodLambda => "goodlambda",
            Suite::OperatorNorm => "operator_norm",
            Suite::Radial => "radial",
            Suite::Domination => "domination",
            Suite::Structural => "structural",
            Suite::Weights => "weights",
            Suite::Fourier => "fourier",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        let key = s.replace('-', "_");
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown suite '{s}'")))
    }
}

/// Source of the Carleson sequence for the stopping suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceSource {
    /// Cycles through Walsh coefficients, random entries and chains.
    Mixed,
    WalshCoeffs,
    FourierCoeffs,
    Random,
    Chain,
}

impl FromStr for SequenceSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "mixed" => Ok(Self::Mixed),
            "walsh-coeffs" => Ok(Self::WalshCoeffs),
            "fourier-coeffs" => Ok(Self::FourierCoeffs),
            "random" => Ok(Self::Random),
            "chain" => Ok(Self::Chain),
            _ => Err(Error::Config(format!("unknown sequence source '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub identity: f64,
    pub bessel: f64,
    pub layer_cake: f64,
    pub stopping: f64,
    pub eta: f64,
    pub r_squared: f64,
    pub operator_slope: f64,
    pub radial_spread: f64,
    pub radial_slope: f64,
    pub domination_spread: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-12,
            bessel: 1e-12,
            layer_cake: 1e-9,
            stopping: 1e-9,
            eta: 0.75,
            r_squared: 0.8,
            operator_slope: 1.15,
            radial_spread: 10.0,
            radial_slope: 2.2,
            domination_spread: 4.0,
        }
    }
}

/// Everything a run depends on. Echoed verbatim into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub n: u32,
    pub model: Model,
    /// `k:m,...` intervals; integer Walsh frequencies or DFT frequencies.
    pub omega: Option<String>,
    /// JSON file with `[[lo, hi], ...]` or a `"k:m,..."` string.
    pub omega_file: Option<PathBuf>,
    pub multiplier: MultiplierKind,
    /// `kind:param`, e.g. `power:0.5`. Suites that sweep a family use it
    /// in place of the family when set.
    pub weight: Option<String>,
    pub alpha: Option<f64>,
    pub points: usize,
    pub seed: u64,
    /// Random instances per suite; each suite has its own default.
    pub samples: Option<usize>,
    pub source: SequenceSource,
    pub suites: Vec<Suite>,
    pub tolerances: Tolerances,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            n: 10,
            model: Model::Walsh,
            omega: None,
            omega_file: None,
            multiplier: MultiplierKind::Indicator,
            weight: None,
            alpha: None,
            points: 8,
            seed: 1,
            samples: None,
            source: SequenceSource::Mixed,
            suites: Vec::new(),
            tolerances: Tolerances::default(),
        }
    }
}

/// Parsed frequency family for the scenario's model.
#[derive(Debug, Clone)]
pub enum Omega {
    Walsh(FreqFamily),
    Fourier(BandFamily),
}

/// Parsed view of a [`Scenario`]; built before any computation.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub omega: Option<Omega>,
    pub weight: Option<WeightKind>,
}

impl Resolved {
    pub fn walsh_omega(&self) -> Option<&FreqFamily> {
        match &self.omega {
            Some(Omega::Walsh(f)) => Some(f),
            _ => None,
        }
    }

    pub fn fourier_omega(&self) -> Option<&BandFamily> {
        match &self.omega {
            Some(Omega::Fourier(f)) => Some(f),
            _ => None,
        }
    }
}

fn omega_text(file: &PathBuf) -> Result<String, Error> {
    let raw = std::fs::read_to_string(file)
        .map_err(|e| Error::Config(format!("{}: {e}", file.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", file.display())))?;
    match value {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Array(_) => {
            let pairs: Vec<(i64, i64)> =
                serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", file.display())))?;
            Ok(pairs.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(","))
        }
        _ => Err(Error::Config(format!("{}: expected [[lo, hi], ...] or a string", file.display()))),
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))
    }

    /// Validates every field and parses the frequency family and weight.
    pub fn resolve(&self) -> Result<Resolved, Error> {
        if self.n < 2 || self.n > MAX_N {
            return Err(Error::Config(format!("n = {} outside [2, {MAX_N}]", self.n)));
        }
        if self.omega.is_some() && self.omega_file.is_some() {
            return Err(Error::Config("give omega or omega_file, not both".into()));
        }
        let text = match (&self.omega, &self.omega_file) {
            (Some(s), _) => Some(s.clone()),
            (None, Some(file)) => Some(omega_text(file)?),
            (None, None) => None,
        };
        let omega = match text {
            None => None,
            Some(t) => Some(match self.model {
                Model::Walsh => {
                    let f: FreqFamily = t.parse()?;
                    f.check_fits(self.n).map_err(|e| Error::Config(e.to_string()))?;
                    Omega::Walsh(f)
                }
                Model::Fourier => {
                    let f: BandFamily = t.parse()?;
                    f.check_band(self.n).map_err(|e| Error::Config(e.to_string()))?;
                    Omega::Fourier(f)
                }
            }),
        };
        let weight = self.weight.as_deref().map(str::parse::<WeightKind>).transpose()?;
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!("alpha {a} outside (0, 1)")));
            }
        }
        if self.points == 0 {
            return Err(Error::Config("points must be positive".into()));
        }
        if self.samples == Some(0) {
            return Err(Error::Config("samples must be positive".into()));
        }
        Ok(Resolved { omega, weight })
    }

    pub fn samples_or(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }
}
