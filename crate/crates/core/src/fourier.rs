//! Periodic DFT model of the trigonometric side.
//!
//! Samples sit at `x_i = i / N` and `f^(xi) = N^{-1} sum_i f(x_i) e^{-2 pi i xi x_i}`
//! for integer `xi` in the band `[-N/2, N/2)`. Frequency intervals are integer
//! half-open ranges inside that band.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicInterval;
use crate::error::{Error, Result};
use crate::rng::{self, SplitMix64};
use crate::signal::Signal;
use crate::walsh;

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    values: Vec<Complex64>,
}

impl ComplexSignal {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if !values.len().is_power_of_two() {
            return Err(Error::Domain(format!("length {} is not a power of two", values.len())));
        }
        Ok(Self { values })
    }

    pub fn from_real(f: &Signal) -> Self {
        Self {
            values: f.samples().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// `e^{2 pi i xi x}` at the sample points.
    pub fn exponential(n: u32, xi: i64) -> Self {
        let len = 1usize << n;
        Self {
            values: (0..len)
                .map(|i| Complex64::from_polar(1.0, TAU * (xi * i as i64).rem_euclid(len as i64) as f64 / len as f64))
                .collect(),
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n(&self) -> u32 {
        self.values.len().trailing_zeros()
    }

    pub fn modulus(&self) -> Signal {
        Signal::new(self.values.iter().map(|z| z.norm()).collect()).expect("power-of-two length")
    }

    pub fn real(&self) -> Signal {
        Signal::new(self.values.iter().map(|z| z.re).collect()).expect("power-of-two length")
    }

    /// `int f conj(g)` with cell weight `1/N`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        s / self.values.len() as f64
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }
}

/// Fourier coefficients in FFT order; [`Spectrum::at`] indexes by frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn at(&self, xi: i64) -> Complex64 {
        self.coeffs[xi.rem_euclid(self.coeffs.len() as i64) as usize]
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }
}

pub fn dft(f: &ComplexSignal) -> Spectrum {
    let mut buf = f.values.clone();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|z| *z *= scale);
    Spectrum { coeffs: buf }
}

pub fn idft(spec: &Spectrum) -> ComplexSignal {
    let mut buf = spec.coeffs.clone();
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    ComplexSignal { values: buf }
}

/// Integer frequency interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FreqInterval {
    pub lo: i64,
    pub hi: i64,
}

impl FreqInterval {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo >= hi {
            return Err(Error::Config(format!("empty frequency interval [{lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    pub fn full(n: u32) -> Self {
        let half = 1i64 << (n - 1);
        Self { lo: -half, hi: half }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn contains(&self, xi: i64) -> bool {
        self.lo <= xi && xi < self.hi
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi) as f64
    }

    pub fn check_band(&self, n: u32) -> Result<()> {
        let half = 1i64 << (n - 1);
        if self.lo < -half || self.hi > half {
            return Err(Error::Range(format!(
                "frequency interval [{}, {}) leaves the band [{}, {half})",
                self.lo, self.hi, -half
            )));
        }
        Ok(())
    }

    /// Maximal dyadic subintervals, left to right.
    pub fn dyadic_pieces(&self) -> Vec<FreqInterval> {
        const OFFSET: i64 = 1 << 40;
        walsh::dyadic_pieces((self.lo + OFFSET) as usize, (self.hi + OFFSET) as usize)
            .into_iter()
            .map(|p| FreqInterval {
                lo: p.lo() as i64 - OFFSET,
                hi: p.hi() as i64 - OFFSET,
            })
            .collect()
    }
}

impl fmt::Display for FreqInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.lo, self.hi)
    }
}

/// Pairwise disjoint frequency intervals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(i64, i64)>", into = "Vec<(i64, i64)>")]
pub struct BandFamily {
    bands: Vec<FreqInterval>,
}

impl BandFamily {
    pub fn new(mut bands: Vec<FreqInterval>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::Config("empty frequency family".into()));
        }
        bands.sort_unstable();
        for w in bands.windows(2) {
            if w[1].lo < w[0].hi {
                return Err(Error::Config(format!("frequency intervals {} and {} overlap", w[0], w[1])));
            }
        }
        Ok(Self { bands })
    }

    /// `[0, 1), [1, 2), [2, 4), ..., [2^{n-2}, 2^{n-1})` and the mirrored negative bands.
    pub fn lacunary(n: u32) -> Self {
        let mut bands = vec![FreqInterval { lo: 0, hi: 1 }];
        for k in 0..n - 1 {
            bands.push(FreqInterval { lo: 1 << k, hi: 2 << k });
            bands.push(FreqInterval { lo: -(2 << k), hi: -(1 << k) });
        }
        Self::new(bands).expect("disjoint")
    }

    /// Random disjoint family of `count` intervals inside the band.
    pub fn random(n: u32, count: usize, rng: &mut SplitMix64) -> Self {
        let len = 1u64 << n;
        let half = 1i64 << (n - 1);
        let mut cuts: Vec<i64> = (0..2 * count)
            .map(|_| rng::below(rng, len + 1) as i64 - half)
            .collect();
        cuts.sort_unstable();
        let bands: Vec<FreqInterval> = cuts
            .chunks(2)
            .filter(|c| c[0] < c[1])
            .map(|c| FreqInterval { lo: c[0], hi: c[1] })
            .collect();
        if bands.is_empty() {
            return Self { bands: vec![FreqInterval::full(n)] };
        }
        Self::new(bands).expect("sorted cuts are disjoint")
    }

    pub fn bands(&self) -> &[FreqInterval] {
        &self.bands
    }

    pub fn check_band(&self, n: u32) -> Result<()> {
        self.bands.iter().try_for_each(|b| b.check_band(n))
    }

    pub fn pieces(&self) -> Vec<FreqInterval> {
        self.bands.iter().flat_map(|b| b.dyadic_pieces()).collect()
    }
}

impl TryFrom<Vec<(i64, i64)>> for BandFamily {
    type Error = Error;
    fn try_from(v: Vec<(i64, i64)>) -> Result<Self> {
        Self::new(v.into_iter().map(|(lo, hi)| FreqInterval::new(lo, hi)).collect::<Result<_>>()?)
    }
}

impl From<BandFamily> for Vec<(i64, i64)> {
    fn from(f: BandFamily) -> Self {
        f.bands.iter().map(|b| (b.lo, b.hi)).collect()
    }
}

impl FromStr for BandFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut bands = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("'{part}' is not of the form lo:hi")))?;
            let parse = |t: &str| {
                t.trim()
                    .parse::<i64>()
                    .map_err(|e| Error::Config(format!("'{part}': {e}")))
            };
            bands.push(FreqInterval::new(parse(a)?, parse(b)?)?);
        }
        Self::new(bands)
    }
}

impl fmt::Display for BandFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.bands.iter().map(|b| b.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

fn restrict(spec: &Spectrum, band: &FreqInterval, values: Option<&[f64]>) -> Spectrum {
    let mut coeffs = vec![Complex64::new(0.0, 0.0); spec.len()];
    let len = spec.len() as i64;
    for (t, xi) in (band.lo..band.hi).enumerate() {
        let idx = xi.rem_euclid(len) as usize;
        let m = values.map_or(1.0, |v| v[t]);
        coeffs[idx] = spec.coeffs[idx] * m;
    }
    Spectrum { coeffs }
}

/// `H_omega f`: inverse DFT of `1_omega f^`.
pub fn dft_projection_complex(f: &ComplexSignal, band: &FreqInterval) -> Result<ComplexSignal> {
    band.check_band(f.n())?;
    Ok(idft(&restrict(&dft(f), band, None)))
}

pub fn dft_projection(f: &Signal, band: &FreqInterval) -> Result<ComplexSignal> {
    dft_projection_complex(&ComplexSignal::from_real(f), band)
}

/// `(sum_omega |H_omega f|^2)^{1/2}`.
pub fn rdf_square_function(f: &Signal, family: &BandFamily) -> Result<Signal> {
    let multipliers: Vec<Multiplier> = family.bands().iter().map(|&b| Multiplier::indicator(b)).collect();
    multiplier_square_function(f, &multipliers, DEFAULT_ORDER)
}

pub const DEFAULT_ORDER: usize = 4;

/// Multiplier supported on the integers of `band`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub band: FreqInterval,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiplierKind {
    Indicator,
    Bump,
}

impl FromStr for MultiplierKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "indicator" => Ok(Self::Indicator),
            "bump" => Ok(Self::Bump),
            other => Err(Error::Config(format!("unknown multiplier '{other}'"))),
        }
    }
}

impl Multiplier {
    pub fn new(band: FreqInterval, values: Vec<f64>) -> Result<Self> {
        if values.len() != band.len() {
            return Err(Error::Config(format!(
                "{} values for a band of {} frequencies",
                values.len(),
                band.len()
            )));
        }
        Ok(Self { band, values })
    }

    pub fn indicator(band: FreqInterval) -> Self {
        Self {
            band,
            values: vec![1.0; band.len()],
        }
    }

    /// `(1 - t^2)^{order+1}` across the band, scaled down until it passes
    /// [`Multiplier::validate`].
    pub fn bump(band: FreqInterval, order: usize) -> Self {
        let half = band.len() as f64 / 2.0;
        let values = (0..band.len())
            .map(|t| {
                let u = (t as f64 + 0.5 - half) / half;
                (1.0 - u * u).powi(order as i32 + 1)
            })
            .collect();
        let mut m = Self { band, values };
        let worst = m.worst_ratio(order).2;
        if worst > 1.0 {
            // High-order differences lose digits; leave room for that.
            let s = (1.0 - 1e-9) / worst;
            m.values.iter_mut().for_each(|v| *v *= s);
        }
        m
    }

    pub fn of_kind(kind: MultiplierKind, band: FreqInterval, order: usize) -> Self {
        match kind {
            MultiplierKind::Indicator => Self::indicator(band),
            MultiplierKind::Bump => Self::bump(band, order),
        }
    }

    /// Largest `d^j |Delta^j m(xi)|` over stencils `xi, ..., xi + j` inside
    /// the band, with `d` the integer distance from the stencil to the
    /// complement; returned as `(xi, j, value)`.
    fn worst_ratio(&self, order: usize) -> (i64, usize, f64) {
        let len = self.values.len();
        let mut diff = self.values.clone();
        let mut worst = (self.band.lo, 0, 0.0);
        for j in 0..=order.min(len.saturating_sub(1)) {
            if j > 0 {
                diff = diff.windows(2).map(|w| w[1] - w[0]).collect();
            }
            for (t, d) in diff.iter().enumerate() {
                let dist = (t + 1).min(len - t - j) as f64;
                let v = dist.powi(j as i32) * d.abs();
                if v > worst.2 {
                    worst = (self.band.lo + t as i64, j, v);
                }
            }
        }
        worst
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        let (xi, j, value) = self.worst_ratio(order);
        if value > 1.0 {
            return Err(Error::MultiplierBound { xi, order: j, value });
        }
        Ok(())
    }
}

/// `T_omega f` for each multiplier, validated against the class bound of
/// the given order.
pub fn multiplier_components(f: &Signal, multipliers: &[Multiplier], order: usize) -> Result<Vec<ComplexSignal>> {
    let mut bands: Vec<FreqInterval> = multipliers.iter().map(|m| m.band).collect();
    bands.sort_unstable();
    for w in bands.windows(2) {
        if w[1].lo < w[0].hi {
            return Err(Error::Config(format!("multiplier supports {} and {} overlap", w[0], w[1])));
        }
    }
    for m in multipliers {
        m.band.check_band(f.n())?;
        m.validate(order)?;
    }
    let spec = dft(&ComplexSignal::from_real(f));
    Ok(multipliers
        .par_iter()
        .map(|m| idft(&restrict(&spec, &m.band, Some(&m.values))))
        .collect())
}

/// `(sum_omega |T_omega f|^2)^{1/2}`.
pub fn multiplier_square_function(f: &Signal, multipliers: &[Multiplier], order: usize) -> Result<Signal> {
    let parts = multiplier_components(f, multipliers, order)?;
    let mut acc = vec![0.0; f.len()];
    for p in &parts {
        for (a, z) in acc.iter_mut().zip(p.values()) {
            *a += z.norm_sqr();
        }
    }
    Signal::new(acc.into_iter().map(f64::sqrt).collect())
}

/// Tile `I x omega` with `|omega| = 1 / |I|`, `omega` dyadic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourierTile {
    pub interval: DyadicInterval,
    pub band: FreqInterval,
}

impl FourierTile {
    pub fn new(interval: DyadicInterval, band: FreqInterval) -> Result<Self> {
        if interval.grid != 0 || interval.scale < 0 || interval.pos < 0 || interval.pos >> interval.scale != 0 {
            return Err(Error::Domain(format!("{interval} is not a dyadic subinterval of [0,1)")));
        }
        if band.len() != 1usize << interval.scale {
            return Err(Error::Domain(format!(
                "{band} does not have length 2^{}",
                interval.scale
            )));
        }
        Ok(Self { interval, band })
    }
}

/// Shape parameters of one packet variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PacketShape {
    /// Envelope support as a fraction of the band.
    pub width: f64,
    /// Linear tilt of the envelope.
    pub tilt: f64,
    /// Offset of the spatial center in units of `|I|`.
    pub shift: f64,
}

const ENVELOPE_POWER: i32 = 8;

impl PacketShape {
    /// Envelope at frequency offset `t` in a band of `len` integers.
    fn envelope(&self, t: usize, len: usize) -> f64 {
        let half = len as f64 / 2.0;
        let u = (t as f64 + 0.5 - half) / (half * self.width);
        if u.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - u * u).powi(ENVELOPE_POWER) * (1.0 + self.tilt * u)
        }
    }
}

/// Finite stand-in for the class of `L^1`-normalized packets adapted to a
/// tile: `phi^(xi) = A psi(xi) e^{-2 pi i xi x0}` on the band, with `A` the
/// largest amplitude meeting the localization bound for derivatives up to
/// `order`.
#[derive(Debug, Clone, Serialize)]
pub struct PacketFamily {
    pub n: u32,
    pub order: usize,
    pub shapes: Vec<PacketShape>,
    /// `amplitude[r][v]`; zero marks a variant discarded at scale `r`.
    pub amplitude: Vec<Vec<f64>>,
}

impl PacketFamily {
    pub fn new(n: u32, size: usize, seed: u64, order: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("packet family needs at least one member".into()));
        }
        let mut rng = SplitMix64::new(seed).fork(0x7061636b);
        let mut shapes = vec![PacketShape {
            width: 1.0,
            tilt: 0.0,
            shift: 0.0,
        }];
        while shapes.len() < size {
            let sign = if shapes.len() % 2 == 0 { 1.0 } else { -1.0 };
            shapes.push(PacketShape {
                width: 0.6 + 0.4 * rng::uniform(&mut rng),
                tilt: sign * 0.5 * rng::uniform(&mut rng),
                shift: 0.5 * rng::uniform(&mut rng) - 0.25,
            });
        }
        let amplitude: Vec<Vec<f64>> = (0..=n)
            .into_par_iter()
            .map(|r| shapes.iter().map(|s| admissible_amplitude(s, r, n, order)).collect())
            .collect();
        let family = Self {
            n,
            order,
            shapes,
            amplitude,
        };
        for r in 0..=n {
            if family.amplitude[r as usize].iter().all(|&a| a == 0.0) {
                return Err(Error::Construction(format!("no admissible packet at scale {r}")));
            }
        }
        Ok(family)
    }

    /// Packet `v` of `tile` on the sample grid.
    pub fn packet(&self, tile: &FourierTile, v: usize) -> Result<ComplexSignal> {
        let r = tile.interval.scale as usize;
        if r > self.n as usize || v >= self.shapes.len() {
            return Err(Error::Range(format!("no packet {v} at scale {r}")));
        }
        tile.band.check_band(self.n)?;
        let shape = &self.shapes[v];
        let amp = self.amplitude[r][v];
        let len = 1usize << self.n;
        let x0 = tile.interval.center() + shape.shift * tile.interval.len();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); len];
        for (t, xi) in (tile.band.lo..tile.band.hi).enumerate() {
            let e = shape.envelope(t, tile.band.len());
            coeffs[xi.rem_euclid(len as i64) as usize] = Complex64::from_polar(amp * e, -TAU * xi as f64 * x0);
        }
        Ok(idft(&Spectrum { coeffs }))
    }

    /// `max_j |I|^{1+j} sup |chi_I^{-D} (e^{-2 pi i c x} phi)^{(j)}|` sampled on
    /// a grid four times finer than the signal grid.
    pub fn localization(&self, tile: &FourierTile, v: usize) -> f64 {
        let r = tile.interval.scale as u32;
        localization_ratio(&self.shapes[v], r, self.n, self.order) * self.amplitude[r as usize][v]
    }
}

fn localization_ratio(shape: &PacketShape, r: u32, n: u32, order: usize) -> f64 {
    let band = 1usize << r;
    let fine = (4usize << n).max(16 * band);
    let ell = (-(r as f64)).exp2();
    let center_offset = band as f64 / 2.0;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(fine);
    let mut worst = 0.0f64;
    for j in 0..=order {
        let mut buf = vec![Complex64::new(0.0, 0.0); fine];
        for (t, slot) in buf.iter_mut().take(band).enumerate() {
            let freq = t as f64 - center_offset;
            *slot = Complex64::new(shape.envelope(t, band) * (TAU * freq).powi(j as i32), 0.0);
        }
        fft.process(&mut buf);
        for (k, z) in buf.iter().enumerate() {
            // Sample k sits at x0 + k / fine; x0 is shift * ell right of c_I.
            let u = k as f64 / fine as f64 + shape.shift * ell;
            let d = u - u.round();
            let weight = (1.0 + (d / ell).powi(2)).powi(order as i32);
            worst = worst.max(ell.powi(1 + j as i32) * z.norm() * weight);
        }
    }
    worst
}

fn admissible_amplitude(shape: &PacketShape, r: u32, n: u32, order: usize) -> f64 {
    let ratio = localization_ratio(shape, r, n, order);
    if ratio.is_finite() && ratio > 0.0 {
        (1.0 - 1e-12) / ratio
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntrinsicCoeff {
    pub tile: FourierTile,
    pub value: f64,
}

fn piece_coefficients(spec: &Spectrum, piece: &FreqInterval, family: &PacketFamily) -> Vec<f64> {
    let band = piece.len();
    let r = band.trailing_zeros() as usize;
    let fft = FftPlanner::new().plan_fft_inverse(band);
    let mut best = vec![0.0f64; band];
    for (shape, &amp) in family.shapes.iter().zip(&family.amplitude[r]) {
        if amp == 0.0 {
            continue;
        }
        let mut h: Vec<Complex64> = (0..band)
            .map(|t| {
                let phase = TAU * t as f64 * (0.5 + shape.shift) / band as f64;
                spec.at(piece.lo + t as i64) * shape.envelope(t, band) * Complex64::from_polar(amp, phase)
            })
            .collect();
        fft.process(&mut h);
        for (b, z) in best.iter_mut().zip(&h) {
            *b = b.max(z.norm());
        }
    }
    best
}

/// `s(f)`: the largest `|<f, phi>|` over the family's packets for `tile`.
pub fn intrinsic_coeff(f: &Signal, tile: &FourierTile, family: &PacketFamily) -> Result<IntrinsicCoeff> {
    if f.n() != family.n {
        return Err(Error::Domain("packet family built for a different grid".into()));
    }
    tile.band.check_band(f.n())?;
    let spec = dft(&ComplexSignal::from_real(f));
    let values = piece_coefficients(&spec, &tile.band, family);
    Ok(IntrinsicCoeff {
        tile: *tile,
        value: values[tile.interval.pos as usize],
    })
}

/// `a_I = sum_{s : I_s = I} s(f)^2` over tiles whose frequency interval is a
/// dyadic piece of the family, node indexed.
pub fn intrinsic_carleson_entries(f: &Signal, family: &BandFamily, packets: &PacketFamily) -> Result<Vec<f64>> {
    if f.n() != packets.n {
        return Err(Error::Domain("packet family built for a different grid".into()));
    }
    family.check_band(f.n())?;
    let spec = dft(&ComplexSignal::from_real(f));
    let pieces = family.pieces();
    let per_piece: Vec<Vec<f64>> = pieces
        .par_iter()
        .map(|p| piece_coefficients(&spec, p, packets))
        .collect();
    let mut a = vec![0.0; (2usize << f.n()) - 1];
    for values in &per_piece {
        let base = values.len() - 1;
        for (p, v) in values.iter().enumerate() {
            a[base + p] += v * v;
        }
    }
    Ok(a)
}

/// `(sum_I a_I 1_I)^{1/2}`, the intrinsic wave packet square function.
pub fn intrinsic_square_function(f: &Signal, family: &BandFamily, packets: &PacketFamily) -> Result<Signal> {
    let a = intrinsic_carleson_entries(f, family, packets)?;
    let len = f.len();
    let mut acc = vec![0.0; len];
    for (node, v) in a.iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        let interval = DyadicInterval::from_node(node);
        for cell in interval.cell_range(f.n()) {
            acc[cell] += v;
        }
    }
    Signal::new(acc.into_iter().map(f64::sqrt).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_signal;
    use proptest::prelude::*;

    fn random(n: u32, seed: u64) -> Signal {
        gaussian_signal(n, &mut SplitMix64::new(seed))
    }

    /// Direct `O(N^2)` DFT.
    fn dft_direct(f: &Signal, xi: i64) -> Complex64 {
        let len = f.len();
        f.samples()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * Complex64::from_polar(1.0, -TAU * (xi * i as i64) as f64 / len as f64))
            .sum::<Complex64>()
            / len as f64
    }

    #[test]
    fn fft_matches_direct_sum() {
        let f = random(6, 1);
        let spec = dft(&ComplexSignal::from_real(&f));
        for xi in -32..32 {
            assert!((spec.at(xi) - dft_direct(&f, xi)).norm() < 1e-14);
        }
        assert!((spec.energy() - f.norm_sq()).abs() < 1e-12 * f.norm_sq());
    }

    #[test]
    fn full_band_is_identity() {
        let f = random(10, 2);
        let p = dft_projection(&f, &FreqInterval::full(10)).unwrap();
        for (z, v) in p.values().iter().zip(f.samples()) {
            assert!((z.re - v).abs() < 1e-12 && z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn exponentials_are_eigenfunctions() {
        let e = ComplexSignal::exponential(8, 17);
        let inside = dft_projection_complex(&e, &FreqInterval::new(10, 20).unwrap()).unwrap();
        for (a, b) in inside.values().iter().zip(e.values()) {
            assert!((a - b).norm() < 1e-12);
        }
        let outside = dft_projection_complex(&e, &FreqInterval::new(-20, 17).unwrap()).unwrap();
        assert!(outside.norm_sq() < 1e-24);
    }

    #[test]
    fn band_overflow_is_a_range_error() {
        let f = random(4, 3);
        assert!(matches!(
            dft_projection(&f, &FreqInterval::new(0, 9).unwrap()),
            Err(Error::Range(_))
        ));
        assert!(dft_projection(&f, &FreqInterval::new(-8, 8).unwrap()).is_ok());
    }

    #[test]
    fn partition_plancherel() {
        let f = random(9, 4);
        let fam: BandFamily = "-256:-40,-40:-3,-3:0,0:1,1:100,100:256".parse().unwrap();
        let total: f64 = fam
            .bands()
            .iter()
            .map(|b| dft_projection(&f, b).unwrap().norm_sq())
            .sum();
        assert!((total - f.norm_sq()).abs() < 1e-12 * f.norm_sq());
        let t = rdf_square_function(&f, &fam).unwrap();
        assert!((t.norm_sq() - f.norm_sq()).abs() < 1e-12 * f.norm_sq());
    }

    #[test]
    fn family_parsing_and_json() {
        let fam: BandFamily = "4:9, -3:2".parse().unwrap();
        assert_eq!(fam.to_string(), "-3:2,4:9");
        assert_eq!(serde_json::to_string(&fam).unwrap(), "[[-3,2],[4,9]]");
        let back: BandFamily = serde_json::from_str("[[4,9],[-3,2]]").unwrap();
        assert_eq!(back, fam);
        assert!(matches!("0:8,4:12".parse::<BandFamily>(), Err(Error::Config(_))));
        assert!(serde_json::from_str::<BandFamily>("[[0,8],[7,9]]").is_err());
    }

    #[test]
    fn dyadic_pieces_cover() {
        for lo in -40i64..10 {
            for hi in lo + 1..40 {
                let pieces = FreqInterval { lo, hi }.dyadic_pieces();
                let mut x = lo;
                for p in pieces {
                    assert_eq!(p.lo, x);
                    assert!(p.len().is_power_of_two());
                    assert_eq!(p.lo.rem_euclid(p.len() as i64), 0);
                    x = p.hi;
                }
                assert_eq!(x, hi);
            }
        }
    }

    #[test]
    fn multiplier_validation() {
        let band = FreqInterval::new(-5, 20).unwrap();
        Multiplier::indicator(band).validate(4).unwrap();
        let bump = Multiplier::bump(band, 4);
        bump.validate(4).unwrap();
        assert!(bump.values.iter().all(|v| *v > 0.0 && *v <= 1.0));
        // A jump inside the band has |Delta m| = 1 at distance > 1.
        let mut values = vec![1.0; band.len()];
        values[10..].iter_mut().for_each(|v| *v = 0.0);
        let step = Multiplier::new(band, values).unwrap();
        assert!(matches!(step.validate(4), Err(Error::MultiplierBound { .. })));
        match step.validate(1) {
            Err(Error::MultiplierBound { xi, order, value }) => {
                assert_eq!((xi, order), (4, 1));
                assert_eq!(value, 10.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(Multiplier::new(band, vec![0.5; 3]).is_err());
        let f = random(6, 5);
        assert!(matches!(
            multiplier_square_function(&f, &[step], 4),
            Err(Error::MultiplierBound { .. })
        ));
    }

    #[test]
    fn indicator_multipliers_match_projections() {
        let f = random(8, 6);
        let fam: BandFamily = "-100:-7,0:30,31:128".parse().unwrap();
        let t = rdf_square_function(&f, &fam).unwrap();
        let mut acc = vec![0.0; f.len()];
        for b in fam.bands() {
            let p = dft_projection(&f, b).unwrap();
            for (a, z) in acc.iter_mut().zip(p.values()) {
                *a += z.norm_sqr();
            }
        }
        for (a, v) in acc.iter().zip(t.samples()) {
            assert!((a.sqrt() - v).abs() < 1e-12);
        }
    }

    #[test]
    fn bump_multiplier_is_a_contraction() {
        let f = random(8, 7);
        let fam: BandFamily = "-64:-1,3:90".parse().unwrap();
        let ms: Vec<Multiplier> = fam.bands().iter().map(|&b| Multiplier::bump(b, 4)).collect();
        for m in &ms {
            let t = multiplier_square_function(&f, std::slice::from_ref(m), 4).unwrap();
            assert!(t.norm_sq() <= f.norm_sq());
        }
        let t = multiplier_square_function(&f, &ms, 4).unwrap();
        assert!(t.norm_sq() <= f.norm_sq());
    }

    fn tile(scale: i32, pos: i64, lo: i64) -> FourierTile {
        FourierTile::new(
            DyadicInterval::standard(scale, pos),
            FreqInterval::new(lo, lo + (1 << scale)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn packets_are_admissible() {
        let fam = PacketFamily::new(8, 8, 3, 4).unwrap();
        for (r, lo) in [(0, 5), (3, -16), (5, 64), (7, -128), (8, -128)] {
            for pos in [0, (1i64 << r) - 1] {
                let t = tile(r, pos, lo);
                for v in 0..8 {
                    let loc = fam.localization(&t, v);
                    assert!(loc <= 1.0, "r={r} v={v} {loc}");
                    assert!(loc > 0.99, "r={r} v={v} {loc}");
                    let p = fam.packet(&t, v).unwrap();
                    let spec = dft(&p);
                    for xi in -128..128 {
                        if !t.band.contains(xi) {
                            assert!(spec.at(xi).norm() < 1e-12);
                        }
                    }
                }
            }
        }
        assert!(FourierTile::new(DyadicInterval::standard(3, 1), FreqInterval::new(4, 11).unwrap()).is_err());
    }

    #[test]
    fn coefficient_matches_direct_pairing() {
        let fam = PacketFamily::new(7, 4, 9, 4).unwrap();
        let f = random(7, 10);
        for t in [tile(2, 3, -8), tile(4, 9, 16), tile(0, 0, 3), tile(7, 0, -64)] {
            let direct = (0..4)
                .map(|v| f.samples().iter().zip(fam.packet(&t, v).unwrap().values()).map(|(a, z)| a * z.conj()).sum::<Complex64>().norm() / f.len() as f64)
                .fold(0.0, f64::max);
            let s = intrinsic_coeff(&f, &t, &fam).unwrap();
            assert!((s.value - direct).abs() < 1e-12 * (1.0 + direct), "{} {}", s.value, direct);
        }
    }

    #[test]
    fn self_pairing_and_disjoint_spectra() {
        let fam = PacketFamily::new(8, 8, 1, 4).unwrap();
        let t = tile(4, 5, 32);
        let p = fam.packet(&t, 0).unwrap();
        // A real signal carries both signs of frequency; pair with the real part.
        let f = p.real().scaled(2.0);
        let s = intrinsic_coeff(&f, &t, &fam).unwrap();
        assert!(s.value >= p.norm_sq() * (1.0 - 1e-12));
        let g = dft_projection(&random(8, 4), &FreqInterval::new(-10, 11).unwrap()).unwrap().real();
        assert!(intrinsic_coeff(&g, &t, &fam).unwrap().value < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn projection_identities(seed in 0u64..100_000, a in -128i64..128, b in -128i64..128, c in -128i64..128) {
            let mut cuts = [a, b, c];
            cuts.sort_unstable();
            prop_assume!(cuts[0] < cuts[1] && cuts[1] < cuts[2]);
            let f = random(8, seed);
            let w1 = FreqInterval::new(cuts[0], cuts[1]).unwrap();
            let w2 = FreqInterval::new(cuts[1], cuts[2]).unwrap();
            let p = dft_projection(&f, &w1).unwrap();
            let q = dft_projection(&f, &w2).unwrap();
            let scale = f.norm_sq();
            prop_assert!(p.inner(&q).norm() <= 1e-12 * scale);
            let pp = dft_projection_complex(&p, &w1).unwrap();
            for (x, y) in pp.values().iter().zip(p.values()) {
                prop_assert!((x - y).norm() <= 1e-12 * (1.0 + y.norm()));
            }
            let pq = dft_projection_complex(&p, &w2).unwrap();
            prop_assert!(pq.norm_sq() <= 1e-24 * (1.0 + scale));
        }

        #[test]
        fn homogeneity(seed in 0u64..100_000, c in -3.0f64..3.0) {
            let f = random(7, seed);
            let fam: BandFamily = "-64:-9,-9:5,20:64".parse().unwrap();
            let packets = PacketFamily::new(7, 4, 2, 4).unwrap();
            let a = rdf_square_function(&f, &fam).unwrap();
            let b = rdf_square_function(&f.scaled(c), &fam).unwrap();
            for (x, y) in a.samples().iter().zip(b.samples()) {
                prop_assert!((c.abs() * x - y).abs() <= 1e-12 * (1.0 + y));
            }
            let s = intrinsic_square_function(&f, &fam, &packets).unwrap();
            let t = intrinsic_square_function(&f.scaled(c), &fam, &packets).unwrap();
            for (x, y) in s.samples().iter().zip(t.samples()) {
                prop_assert!((c.abs() * x - y).abs() <= 1e-12 * (1.0 + y));
            }
        }
    }
}
