//! Muckenhoupt characteristics of cell-constant weights.
//!
//! "Full" characteristics take the supremum over every cell-aligned interval
//! `[a/N, b/N)` with `0 <= a < b <= N`; dyadic ones over the standard dyadic
//! intervals of `[0,1)`. `A_∞` is Wilson's `sup_I <M(w 1_I)>_I / <w>_I`, with
//! the matching (full or dyadic) maximal function.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::signal::Signal;

/// Above this many cells the full-grid `A_∞` sweep runs on block averages.
pub const WILSON_FULL_MAX_N: u32 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrid {
    w: Signal,
    averages: Vec<f64>,
}

impl WeightGrid {
    pub fn new(w: Signal) -> Result<Self> {
        if let Some((i, v)) = w.samples().iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(Error::Domain(format!("weight sample {i} = {v} is not positive")));
        }
        let averages = w.dyadic_averages();
        Ok(Self { w, averages })
    }

    pub fn signal(&self) -> &Signal {
        &self.w
    }

    pub fn samples(&self) -> &[f64] {
        self.w.samples()
    }

    pub fn n(&self) -> u32 {
        self.w.n()
    }

    /// Averages over standard dyadic intervals, node indexed.
    pub fn dyadic_averages(&self) -> &[f64] {
        &self.averages
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.w.scaled(c))
    }

    /// `w(E)` for a set of cells.
    pub fn measure(&self, cells: impl IntoIterator<Item = usize>) -> f64 {
        let s = self.samples();
        cells.into_iter().map(|c| s[c]).sum::<f64>() * self.w.cell_len()
    }

    /// `[w]_{A_p}` for `p` in `[1, ∞]` (`f64::INFINITY` selects Wilson's
    /// `A_∞`).
    pub fn characteristic(&self, p: f64, dyadic_only: bool) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::Domain(format!("exponent {p} outside [1, inf]")));
        }
        Ok(match (p, dyadic_only) {
            (p, true) if p == 1.0 => self.a1_dyadic(),
            (p, false) if p == 1.0 => self.a1_full(),
            (p, true) if p.is_infinite() => self.wilson_dyadic(),
            (p, false) if p.is_infinite() => self.wilson_full(),
            (p, true) => self.ap_dyadic(p),
            (p, false) => self.ap_full(p),
        })
    }

    pub fn report(&self) -> CharacteristicReport {
        let c = |p, d| self.characteristic(p, d).expect("valid exponent");
        CharacteristicReport {
            a1: c(1.0, false),
            a2: c(2.0, false),
            a_inf: c(f64::INFINITY, false),
            a1_dyadic: c(1.0, true),
            a2_dyadic: c(2.0, true),
            a_inf_dyadic: c(f64::INFINITY, true),
        }
    }

    fn a1_dyadic(&self) -> f64 {
        let len = self.samples().len();
        let mut mins = vec![0.0; 2 * len - 1];
        mins[len - 1..].copy_from_slice(self.samples());
        for node in (0..len - 1).rev() {
            mins[node] = mins[2 * node + 1].min(mins[2 * node + 2]);
        }
        self.averages
            .iter()
            .zip(&mins)
            .map(|(a, m)| a / m)
            .fold(1.0, f64::max)
    }

    fn a1_full(&self) -> f64 {
        let s = self.samples();
        (0..s.len())
            .into_par_iter()
            .map(|a| {
                let (mut sum, mut min, mut best) = (0.0, f64::INFINITY, 1.0f64);
                for (k, &v) in s[a..].iter().enumerate() {
                    sum += v;
                    min = min.min(v);
                    best = best.max(sum / (k + 1) as f64 / min);
                }
                best
            })
            .reduce(|| 1.0, f64::max)
    }

    fn dual(&self, p: f64) -> Signal {
        self.w.map(|v| v.powf(-1.0 / (p - 1.0)))
    }

    fn ap_dyadic(&self, p: f64) -> f64 {
        let sigma = self.dual(p).dyadic_averages();
        self.averages
            .iter()
            .zip(&sigma)
            .map(|(a, s)| a * s.powf(p - 1.0))
            .fold(1.0, f64::max)
    }

    fn ap_full(&self, p: f64) -> f64 {
        let s = self.samples();
        let sigma = self.dual(p);
        let sig = sigma.samples();
        (0..s.len())
            .into_par_iter()
            .map(|a| {
                let (mut sw, mut ss, mut best) = (0.0, 0.0, 1.0f64);
                for k in a..s.len() {
                    sw += s[k];
                    ss += sig[k];
                    let m = (k - a + 1) as f64;
                    best = best.max(sw / m * (ss / m).powf(p - 1.0));
                }
                best
            })
            .reduce(|| 1.0, f64::max)
    }

    fn wilson_dyadic(&self) -> f64 {
        let len = self.samples().len();
        let n = self.n();
        let mut integral = vec![0.0; 2 * len - 1];
        for cell in 0..len {
            let mut node = len - 1 + cell;
            let mut running = self.averages[node];
            loop {
                running = running.max(self.averages[node]);
                integral[node] += running;
                if node == 0 {
                    break;
                }
                node = (node - 1) / 2;
            }
        }
        let mut best = 1.0f64;
        for (node, total) in integral.iter().enumerate() {
            let scale = usize::BITS - 1 - (node + 1).leading_zeros();
            let cells = (1usize << (n - scale)) as f64;
            best = best.max(total / cells / self.averages[node]);
        }
        best
    }

    fn wilson_full(&self) -> f64 {
        let coarse;
        let s = if self.n() > WILSON_FULL_MAX_N {
            let block = 1usize << (self.n() - WILSON_FULL_MAX_N);
            coarse = self
                .samples()
                .chunks(block)
                .map(|c| c.iter().sum::<f64>() / block as f64)
                .collect::<Vec<_>>();
            &coarse[..]
        } else {
            self.samples()
        };
        wilson_sweep(s)
    }
}

/// Full-grid Wilson characteristic of the cell values `s`.
///
/// For a fixed left end `a`, growing the right end `b` by one cell only adds
/// windows ending at `b`, so the restricted maximal function is updated in
/// place with the prefix maxima of those new window averages.
fn wilson_sweep(s: &[f64]) -> f64 {
    let len = s.len();
    let mut prefix = vec![0.0; len + 1];
    for i in 0..len {
        prefix[i + 1] = prefix[i] + s[i];
    }
    (0..len)
        .into_par_iter()
        .map(|a| {
            let mut m = vec![0.0f64; len - a];
            let mut total_m = 0.0;
            let mut best = 1.0f64;
            for b in a + 1..=len {
                // New windows [t, b) for a <= t < b.
                let mut running = 0.0f64;
                for t in a..b {
                    let avg = (prefix[b] - prefix[t]) / (b - t) as f64;
                    running = running.max(avg);
                    let slot = &mut m[t - a];
                    if running > *slot {
                        total_m += running - *slot;
                        *slot = running;
                    }
                }
                let mass = prefix[b] - prefix[a];
                best = best.max(total_m / mass);
            }
            best
        })
        .reduce(|| 1.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharacteristicReport {
    pub a1: f64,
    pub a2: f64,
    pub a_inf: f64,
    pub a1_dyadic: f64,
    pub a2_dyadic: f64,
    pub a_inf_dyadic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum WeightKind {
    Constant,
    /// `|x - 1/2|^{-alpha}`.
    Power(f64),
    /// `1 + |x - 1/2|^{-alpha}`.
    Radial(f64),
    /// Independent `exp(sigma Z)` per cell.
    LogNormal(f64),
}

impl FromStr for WeightKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let param = || -> Result<f64> {
            arg.ok_or_else(|| Error::Config(format!("weight '{s}' needs a parameter")))?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("weight '{s}': {e}")))
        };
        match name {
            "constant" | "one" => Ok(Self::Constant),
            "power" => Ok(Self::Power(param()?)),
            "radial" => Ok(Self::Radial(param()?)),
            "lognormal" => Ok(Self::LogNormal(param()?)),
            _ => Err(Error::Config(format!("unknown weight kind '{name}'"))),
        }
    }
}

impl TryFrom<String> for WeightKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<WeightKind> for String {
    fn from(k: WeightKind) -> Self {
        k.to_string()
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant => write!(f, "constant"),
            Self::Power(a) => write!(f, "power:{a}"),
            Self::Radial(a) => write!(f, "radial:{a}"),
            Self::LogNormal(s) => write!(f, "lognormal:{s}"),
        }
    }
}

/// Cell averages of `|x - 1/2|^{-alpha}`.
pub fn power_cells(n: u32, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("power exponent {alpha} outside (0, 1)")));
    }
    let len = 1usize << n;
    let e = 1.0 - alpha;
    let primitive = |t: f64| t.signum() * t.abs().powf(e) / e;
    Ok((0..len)
        .map(|i| {
            let x0 = i as f64 / len as f64 - 0.5;
            let x1 = (i + 1) as f64 / len as f64 - 0.5;
            (primitive(x1) - primitive(x0)) * len as f64
        })
        .collect())
}

pub fn weight_family(kind: WeightKind, n: u32, rng: &mut SplitMix64) -> Result<WeightGrid> {
    let samples = match kind {
        WeightKind::Constant => vec![1.0; 1 << n],
        WeightKind::Power(alpha) => power_cells(n, alpha)?,
        WeightKind::Radial(alpha) => power_cells(n, alpha)?.into_iter().map(|v| 1.0 + v).collect(),
        WeightKind::LogNormal(sigma) => {
            if !(sigma >= 0.0) {
                return Err(Error::Domain(format!("lognormal sigma {sigma} is negative")));
            }
            (0..1usize << n)
                .map(|_| (sigma * rng.sample::<f64, _>(StandardNormal)).exp())
                .collect()
        }
    };
    WeightGrid::new(Signal::new(samples)?)
}
