//! Even weights decreasing away from the center `1/2` of the torus.

use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::{DyadicInterval, GridInterval};
use crate::error::{Error, Result};
use crate::signal::{Bump, Signal};
use crate::stats::{fit_loglog, LineFit};
use crate::walsh::{FreqFamily, TileTable};
use crate::weights::WeightGrid;

/// Profile `w_0` on the half-grid: `profile[k]` is the value on the two
/// cells at distance `[k/N, (k+1)/N)` from the center.
#[derive(Debug, Clone, Serialize)]
pub struct RadialWeight {
    n: u32,
    profile: Vec<f64>,
    #[serde(skip)]
    weight: WeightGrid,
    a1: f64,
}

impl RadialWeight {
    pub fn new(n: u32, profile: Vec<f64>) -> Result<Self> {
        if n == 0 || profile.len() != 1 << (n - 1) {
            return Err(Error::Domain(format!("profile of {} values for 2^{n} cells", profile.len())));
        }
        if let Some(k) = (1..profile.len()).find(|&k| profile[k] > profile[k - 1]) {
            return Err(Error::Domain(format!("profile increases at half-cell {k}")));
        }
        let half = profile.len();
        let mut cells = vec![0.0; 2 * half];
        for (k, v) in profile.iter().enumerate() {
            cells[half + k] = *v;
            cells[half - 1 - k] = *v;
        }
        let weight = WeightGrid::new(Signal::new(cells)?)?;
        let a1 = weight.characteristic(1.0, false)?;
        Ok(Self { n, profile, weight, a1 })
    }

    /// `w_0(r) = r^{-alpha}`, averaged over each half-cell.
    pub fn power(n: u32, alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::Domain(format!("power {alpha} is not locally integrable")));
        }
        let len = (1u64 << n) as f64;
        let profile = (0..1usize << (n - 1))
            .map(|k| {
                let (a, b) = (k as f64, k as f64 + 1.0);
                if alpha == 0.0 {
                    1.0
                } else {
                    len.powf(alpha) * (b.powf(1.0 - alpha) - a.powf(1.0 - alpha)) / (1.0 - alpha)
                }
            })
            .collect();
        Self::new(n, profile)
    }

    pub fn constant(n: u32) -> Self {
        Self::new(n, vec![1.0; 1 << (n - 1)]).expect("flat profile")
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    pub fn weight(&self) -> &WeightGrid {
        &self.weight
    }

    /// `[w]_{A_1}` over cell-aligned intervals.
    pub fn a1(&self) -> f64 {
        self.a1
    }

    /// Value on the cell containing `x`.
    pub fn at(&self, x: f64) -> f64 {
        let len = 1usize << self.n;
        let cell = ((x.rem_euclid(1.0)) * len as f64).floor() as usize;
        self.weight.samples()[cell.min(len - 1)]
    }
}

/// Right edge of the last half-cell with `w_0 > lambda / [w]_{A_1}`; zero
/// when there is none.
pub fn b_lambda(w: &RadialWeight, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("level {lambda} must be positive")));
    }
    let bar = lambda / w.a1;
    let count = w.profile.partition_point(|&v| v > bar);
    Ok(count as f64 / (1u64 << w.n) as f64)
}

/// `R_lambda = [1/2 - b_lambda, 1/2 + b_lambda]`, `None` when empty.
pub fn r_lambda(w: &RadialWeight, lambda: f64) -> Result<Option<GridInterval>> {
    let len = 1i64 << w.n;
    let count = w.profile.partition_point(|&v| v > lambda / w.a1) as i64;
    let _ = b_lambda(w, lambda)?;
    if count == 0 {
        return Ok(None);
    }
    Ok(Some(GridInterval::cells(len / 2 - count, len / 2 + count, w.n)?))
}

/// `int_0^inf chi^9_{R_lambda}(x) d lambda`, summed exactly over the steps
/// of `b_lambda`.
pub fn tail_integral(w: &RadialWeight, x: f64) -> f64 {
    let len = (1u64 << w.n) as f64;
    let p = &w.profile;
    let mut total = 0.0;
    for k in 0..p.len() {
        let next = p.get(k + 1).copied().unwrap_or(0.0);
        let width = w.a1 * (p[k] - next);
        if width == 0.0 {
            continue;
        }
        // On this step R_lambda has half-length (k+1)/N.
        let bump = Bump {
            center: 0.5,
            length: 2.0 * (k as f64 + 1.0) / len,
            power: 9.0,
        };
        total += width * bump.value(x);
    }
    total
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SufficientRow {
    pub x: f64,
    pub integral: f64,
    pub weight: f64,
    /// `integral / ([w]_{A_1}^2 w(x))`.
    pub ratio: f64,
    /// `x` lies in one of the two cells next to the center.
    pub singular: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SufficientReport {
    pub a1: f64,
    pub rows: Vec<SufficientRow>,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// `max integral / w(x)` over the regular points.
    pub max_unnormalized: f64,
}

impl SufficientReport {
    pub fn spread(&self) -> f64 {
        self.max_ratio / self.min_ratio
    }
}

/// Points `1/2 ± 2^{-k-1}` for `k = 1..=count`, alternating sides.
pub fn sample_points(count: usize) -> Vec<f64> {
    (1..=count)
        .map(|k| {
            let d = (-(k as f64) - 1.0).exp2();
            if k % 2 == 0 {
                0.5 - d
            } else {
                0.5 + d
            }
        })
        .collect()
}

pub fn sufficient_condition_check(w: &RadialWeight, points: &[f64]) -> SufficientReport {
    let len = 1usize << w.n;
    let rows: Vec<SufficientRow> = points
        .par_iter()
        .map(|&x| {
            let cell = (x.rem_euclid(1.0) * len as f64).floor() as usize;
            let singular = cell == len / 2 || cell + 1 == len / 2;
            let integral = tail_integral(w, x);
            let weight = w.at(x);
            SufficientRow {
                x,
                integral,
                weight,
                ratio: integral / (w.a1 * w.a1 * weight),
                singular,
            }
        })
        .collect();
    let regular = rows.iter().filter(|r| !r.singular);
    let max_ratio = regular.clone().map(|r| r.ratio).fold(0.0, f64::max);
    let min_ratio = regular.clone().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_unnormalized = regular.map(|r| r.integral / r.weight).fold(0.0, f64::max);
    SufficientReport {
        a1: w.a1,
        rows,
        max_ratio,
        min_ratio,
        max_unnormalized,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaSweep {
    pub alphas: Vec<f64>,
    pub reports: Vec<SufficientReport>,
    /// `log max_ratio` against `log [w]_{A_1}`.
    pub ratio_fit: Option<LineFit>,
    /// `log max (integral / w)` against `log [w]_{A_1}`.
    pub unnormalized_fit: Option<LineFit>,
}

pub fn alpha_sweep(n: u32, alphas: &[f64], points: &[f64]) -> Result<AlphaSweep> {
    let reports: Vec<SufficientReport> = alphas
        .iter()
        .map(|&a| RadialWeight::power(n, a).map(|w| sufficient_condition_check(&w, points)))
        .collect::<Result<_>>()?;
    let a1: Vec<f64> = reports.iter().map(|r| r.a1).collect();
    let ratios: Vec<f64> = reports.iter().map(|r| r.max_ratio).collect();
    let raw: Vec<f64> = reports.iter().map(|r| r.max_unnormalized).collect();
    Ok(AlphaSweep {
        alphas: alphas.to_vec(),
        ratio_fit: fit_loglog(&a1, &ratios),
        unnormalized_fit: fit_loglog(&a1, &raw),
        reports,
    })
}

/// Cell-aligned intervals of `[0,1)` (not wrapping) with `w(R)/|R| > lambda`.
pub fn superlevel_intervals(w: &WeightGrid, lambda: f64) -> Vec<GridInterval> {
    let n = w.n();
    let len = 1usize << n;
    let mut prefix = vec![0.0; len + 1];
    for (i, v) in w.samples().iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let mut out = Vec::new();
    for a in 0..len {
        for b in a + 1..=len {
            if (prefix[b] - prefix[a]) / (b - a) as f64 > lambda {
                out.push(GridInterval::cells(a as i64, b as i64, n).expect("nonempty"));
            }
        }
    }
    out
}

/// Members not contained in any other member.
pub fn maximal_elements(family: &[GridInterval]) -> Vec<GridInterval> {
    family
        .iter()
        .filter(|r| !family.iter().any(|s| s != *r && s.contains(r)))
        .copied()
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SubordinationResult {
    pub ok: bool,
    /// `(level index, interval)` of the first member without a container.
    pub witness: Option<(usize, GridInterval)>,
}

/// Whether every member of `family[k]` lies inside some member of
/// `star[k]`, for every level `k`.
pub fn subordination_check(family: &[Vec<GridInterval>], star: &[Vec<GridInterval>]) -> SubordinationResult {
    for (k, (level, cover)) in family.iter().zip(star).enumerate() {
        if let Some(r) = level.iter().find(|r| !cover.iter().any(|s| s.contains(r))) {
            return SubordinationResult {
                ok: false,
                witness: Some((k, *r)),
            };
        }
    }
    if family.len() != star.len() {
        let k = family.len().min(star.len());
        if let Some(r) = family.get(k).and_then(|l| l.first()) {
            return SubordinationResult {
                ok: false,
                witness: Some((k, *r)),
            };
        }
    }
    SubordinationResult { ok: true, witness: None }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReductionReport {
    /// `sum_t |<f, phi_t>|^2 w(R_t)/|R_t|`: the weighted square norm of
    /// the wave packet square function.
    pub direct: f64,
    /// `int_0^inf int_{R_lambda} |f|^2 d lambda`.
    pub subordinate_bound: f64,
    /// `(5/4)^9 int |f|^2 int_0^inf chi^9_{R_lambda} d lambda`.
    pub tail_bound: f64,
}

/// Walks `direct <= subordinate_bound <= tail_bound` for the Walsh wave
/// packet square function with frequency pieces of `family`.
pub fn reduction_check(f: &Signal, w: &RadialWeight, family: &FreqFamily) -> Result<ReductionReport> {
    if f.n() != w.n {
        return Err(Error::Domain("signal and weight on different grids".into()));
    }
    family.check_fits(f.n())?;
    let table = TileTable::new(f);
    let energy = table.energy_by_interval(&family.pieces());
    let avg = w.weight.dyadic_averages();
    let direct: f64 = energy.iter().zip(avg).map(|(e, a)| e * a).sum();

    let len = 1usize << w.n;
    let sq: Vec<f64> = f.samples().iter().map(|v| v * v / len as f64).collect();
    let p = &w.profile;
    let mut subordinate_bound = 0.0;
    let mut inner = 0.0;
    for k in 0..p.len() {
        // R_lambda on this step covers half-cells 0..=k on both sides.
        inner += sq[len / 2 + k] + sq[len / 2 - 1 - k];
        let next = p.get(k + 1).copied().unwrap_or(0.0);
        subordinate_bound += w.a1 * (p[k] - next) * inner;
    }
    let tail: f64 = (0..len)
        .map(|i| sq[i] * tail_integral(w, (i as f64 + 0.5) / len as f64))
        .sum();
    Ok(ReductionReport {
        direct,
        subordinate_bound,
        tail_bound: 1.25f64.powi(9) * tail,
    })
}

/// Dyadic tile intervals with `w(I)/|I| > lambda`.
pub fn dyadic_superlevel(w: &WeightGrid, lambda: f64) -> Vec<DyadicInterval> {
    w.dyadic_averages()
        .iter()
        .enumerate()
        .filter(|(_, a)| **a > lambda)
        .map(|(i, _)| DyadicInterval::from_node(i))
        .collect()
}
