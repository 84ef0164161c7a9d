//! Piecewise-constant functions on the torus `[0, 1)`.
//!
//! A [`Signal`] with `N = 2^n` samples represents the function equal to
//! `samples[i]` on the cell `[i/N, (i+1)/N)`. Norms and averages are taken
//! with respect to Lebesgue measure on the torus.

use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicInterval, GridInterval};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Signal {
    samples: Vec<f64>,
    n: u32,
}

impl TryFrom<Vec<f64>> for Signal {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Signal::new(v)
    }
}

impl From<Signal> for Vec<f64> {
    fn from(s: Signal) -> Self {
        s.samples
    }
}

impl Signal {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        let len = samples.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::Domain(format!("length {len} is not a power of two")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("sample {i} is not finite")));
        }
        Ok(Self {
            n: len.trailing_zeros(),
            samples,
        })
    }

    pub fn zeros(n: u32) -> Self {
        Self::constant(n, 0.0)
    }

    pub fn constant(n: u32, c: f64) -> Self {
        Self {
            samples: vec![c; 1 << n],
            n,
        }
    }

    /// Samples `f` at cell midpoints.
    pub fn from_fn(n: u32, f: impl Fn(f64) -> f64) -> Self {
        let len = 1usize << n;
        let samples = (0..len).map(|i| f((i as f64 + 0.5) / len as f64)).collect();
        Self { samples, n }
    }

    /// Indicator of the cells inside `interval` (wrapping around the torus).
    pub fn indicator(n: u32, interval: &GridInterval) -> Self {
        let mut s = Self::zeros(n);
        for c in interval.torus_cells(n) {
            s.samples[c] = 1.0;
        }
        s
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn cell_len(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            samples: self.samples.iter().map(|&v| f(v)).collect(),
            n: self.n,
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.n, other.n, "signals on different grids");
        Self {
            samples: self.samples.iter().zip(&other.samples).map(|(&a, &b)| f(a, b)).collect(),
            n: self.n,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn integral(&self) -> f64 {
        self.samples.iter().sum::<f64>() * self.cell_len()
    }

    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n);
        self.samples.iter().zip(&other.samples).map(|(a, b)| a * b).sum::<f64>() * self.cell_len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.sup();
        }
        (self.samples.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.cell_len()).powf(1.0 / p)
    }

    pub fn sup(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫_I f` for the periodic extension, exact for cell-constant `f`
    /// including partial cells.
    pub fn integral_over(&self, interval: &GridInterval) -> f64 {
        let prefix = self.prefix_sums();
        self.primitive(&prefix, interval.hi.to_f64()) - self.primitive(&prefix, interval.lo.to_f64())
    }

    fn prefix_sums(&self) -> Vec<f64> {
        let mut acc = Vec::with_capacity(self.len() + 1);
        acc.push(0.0);
        let mut s = 0.0;
        for v in &self.samples {
            s += v;
            acc.push(s);
        }
        acc
    }

    /// `∫_0^x f` for the periodic extension, any real `x`.
    fn primitive(&self, prefix: &[f64], x: f64) -> f64 {
        let len = self.len();
        let turns = x.floor();
        let t = (x - turns) * len as f64;
        let cell = (t.floor() as usize).min(len - 1);
        let frac = t - cell as f64;
        let total = prefix[len];
        (turns * total + prefix[cell] + frac * self.samples[cell]) / len as f64
    }

    /// `<f>_{p,I}` or, with `tailed`, `<f>_{p,I,†} = |I|^{-1/p} ||f chi_I^9||_p`.
    ///
    /// The tailed version uses the periodic distance to the center and
    /// evaluates `chi_I` at cell midpoints.
    pub fn local_average(&self, interval: &GridInterval, p: f64, tailed: bool) -> Result<f64> {
        if !(p > 0.0) {
            return Err(Error::Domain(format!("exponent {p} must be positive")));
        }
        let len = interval.len();
        if len <= 0.0 {
            return Err(Error::Domain("interval of zero length".into()));
        }
        let mass = if tailed {
            let bump = Bump::of(interval, 9.0);
            let h = self.cell_len();
            self.samples
                .iter()
                .enumerate()
                .map(|(i, v)| (v.abs() * bump.value((i as f64 + 0.5) * h)).powf(p))
                .sum::<f64>()
                * h
        } else {
            self.map(|v| v.abs().powf(p)).integral_over(interval)
        };
        Ok((mass / len).powf(1.0 / p))
    }

    /// Averages over every standard dyadic interval of `[0,1)` down to the
    /// cells, indexed by [`DyadicInterval::node`].
    pub fn dyadic_averages(&self) -> Vec<f64> {
        let len = self.len();
        let mut out = vec![0.0; 2 * len - 1];
        out[len - 1..].copy_from_slice(&self.samples);
        for node in (0..len - 1).rev() {
            out[node] = 0.5 * (out[2 * node + 1] + out[2 * node + 2]);
        }
        out
    }

    pub fn maximal_function(&self, kind: MaximalKind) -> Signal {
        match kind {
            MaximalKind::Dyadic => self.dyadic_maximal(),
            MaximalKind::Uncentered => self.uncentered_maximal(),
            MaximalKind::P2 => self.map(|v| v * v).uncentered_maximal().map(f64::sqrt),
        }
    }

    fn dyadic_maximal(&self) -> Signal {
        let avg = self.abs().dyadic_averages();
        let len = self.len();
        let mut best = vec![0.0f64; 2 * len - 1];
        best[0] = avg[0];
        for node in 1..2 * len - 1 {
            best[node] = avg[node].max(best[(node - 1) / 2]);
        }
        Signal {
            samples: best[len - 1..].to_vec(),
            n: self.n,
        }
    }

    /// Supremum of averages of `|f|` over all cell-aligned arcs of the torus
    /// containing the cell.
    fn uncentered_maximal(&self) -> Signal {
        let len = self.len();
        let a = self.abs();
        let mut prefix = Vec::with_capacity(2 * len + 1);
        prefix.push(0.0);
        let mut s = 0.0;
        for i in 0..2 * len {
            s += a.samples[i % len];
            prefix.push(s);
        }
        let mut best = vec![0.0f64; len];
        let mut suffix = vec![0.0f64; len + 1];
        for start in 0..len {
            // suffix[d] = max over arc lengths m >= d of the mean of cells start..start+m.
            suffix[len] = (prefix[start + len] - prefix[start]) / len as f64;
            for d in (1..len).rev() {
                let avg = (prefix[start + d] - prefix[start]) / d as f64;
                suffix[d] = suffix[d + 1].max(avg);
            }
            for off in 0..len {
                let cell = (start + off) % len;
                best[cell] = best[cell].max(suffix[off + 1]);
            }
        }
        Signal {
            samples: best,
            n: self.n,
        }
    }

    /// Little-endian encoding: `n` as `u64`, then the samples as `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.len());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        for v in &self.samples {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (head, body) = bytes
            .split_first_chunk::<8>()
            .ok_or_else(|| Error::Domain("missing header".into()))?;
        let n = u64::from_le_bytes(*head);
        if n > 30 || body.len() != 8usize << n {
            return Err(Error::Domain(format!("header n = {n} does not match {} payload bytes", body.len())));
        }
        let samples = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::new(samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaximalKind {
    /// Over standard dyadic intervals of `[0,1)`.
    Dyadic,
    /// Over all cell-aligned arcs.
    Uncentered,
    /// `(M |f|^2)^{1/2}` with the uncentered `M`.
    P2,
}

/// `chi_I^power` with `chi_I(x) = (1 + (d(x, c_I)/l_I)^2)^{-1}` and `d` the
/// distance on the torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub length: f64,
    pub power: f64,
}

impl Bump {
    pub fn of(interval: &GridInterval, power: f64) -> Self {
        Self {
            center: interval.center(),
            length: interval.len(),
            power,
        }
    }

    pub fn of_dyadic(interval: &DyadicInterval, power: f64) -> Self {
        Self {
            center: interval.center(),
            length: interval.len(),
            power,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let d = (x - self.center).rem_euclid(1.0);
        let d = d.min(1.0 - d) / self.length;
        (1.0 + d * d).powf(-self.power)
    }

    pub fn sample(&self, n: u32) -> Signal {
        Signal::from_fn(n, |x| self.value(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_signal, SplitMix64};
    use proptest::prelude::*;

    fn random_signal(n: u32, seed: u64) -> Signal {
        gaussian_signal(n, &mut SplitMix64::new(seed))
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(Signal::new(vec![0.0; 3]).is_err());
        assert!(Signal::new(vec![]).is_err());
        assert!(Signal::new(vec![f64::NAN; 4]).is_err());
    }

    #[test]
    fn constant_averages() {
        let f = Signal::constant(6, 1.0);
        for (a, b) in [(0, 1), (3, 17), (60, 70)] {
            let iv = GridInterval::cells(a, b, 6).unwrap();
            for p in [0.5, 1.0, 2.0, 3.0] {
                assert!((f.local_average(&iv, p, false).unwrap() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn indicator_averages() {
        let iv = GridInterval::cells(16, 32, 6).unwrap();
        let f = Signal::indicator(6, &iv);
        assert!((f.local_average(&iv, 2.0, false).unwrap() - 1.0).abs() < 1e-14);
        let tailed = f.local_average(&iv, 2.0, true).unwrap();
        assert!(tailed > 0.0 && tailed <= 1.0);
        // Mass outside I only raises the tailed average.
        let g = f.map(|v| if v == 0.0 { 1.0 } else { v });
        assert!(g.local_average(&iv, 2.0, true).unwrap() > tailed);
        assert_eq!(g.local_average(&iv, 2.0, false).unwrap(), 1.0);
    }

    #[test]
    fn partial_cells_and_wrapping() {
        let f = Signal::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let iv = GridInterval::cells(1, 3, 3).unwrap(); // [1/8, 3/8)
        assert!((f.integral_over(&iv) - (1.0 / 8.0 + 2.0 / 8.0)).abs() < 1e-15);
        let wrap = GridInterval::cells(-1, 1, 2).unwrap(); // [-1/4, 1/4)
        assert!((f.integral_over(&wrap) - 5.0 / 4.0).abs() < 1e-15);
        let long = GridInterval::cells(0, 8, 2).unwrap();
        assert!((f.integral_over(&long) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn dyadic_maximal_of_indicator() {
        let n = 8;
        let k = 3;
        let support = GridInterval::cells(0, 1, k).unwrap();
        let f = Signal::indicator(n, &support);
        let m = f.maximal_function(MaximalKind::Dyadic);
        for (i, &v) in m.samples().iter().enumerate() {
            // Smallest dyadic interval holding both the cell and the support.
            let mut scale = n as i32;
            let mut pos = i as i64;
            while pos != 0 {
                pos >>= 1;
                scale -= 1;
            }
            let expect = if scale >= k as i32 {
                1.0
            } else {
                ((scale - k as i32) as f64).exp2()
            };
            assert!((v - expect).abs() < 1e-15, "cell {i}: {v} vs {expect}");
        }
    }

    #[test]
    fn maximal_of_constant() {
        let f = Signal::constant(5, -2.5);
        for kind in [MaximalKind::Dyadic, MaximalKind::Uncentered, MaximalKind::P2] {
            for v in f.maximal_function(kind).samples() {
                assert!((v - 2.5).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn uncentered_matches_brute_force() {
        let f = random_signal(4, 3);
        let m = f.maximal_function(MaximalKind::Uncentered);
        let len = f.len();
        for cell in 0..len {
            let mut best = 0.0f64;
            for start in 0..len {
                for l in 1..=len {
                    let covers = (cell + len - start) % len < l;
                    if covers {
                        let s: f64 = (start..start + l).map(|i| f.samples()[i % len].abs()).sum();
                        best = best.max(s / l as f64);
                    }
                }
            }
            assert!((m.samples()[cell] - best).abs() < 1e-12);
        }
    }

    #[test]
    fn p2_dominates_plain() {
        let f = random_signal(7, 11);
        let m = f.maximal_function(MaximalKind::Uncentered);
        let m2 = f.maximal_function(MaximalKind::P2);
        for (a, b) in m.samples().iter().zip(m2.samples()) {
            assert!(b + 1e-12 >= *a);
        }
    }

    #[test]
    fn bytes_roundtrip() {
        let f = random_signal(5, 1);
        let b = f.to_bytes();
        assert_eq!(&b[..8], &5u64.to_le_bytes());
        assert_eq!(Signal::from_bytes(&b).unwrap(), f);
        assert!(Signal::from_bytes(&b[..20]).is_err());
    }

    #[test]
    fn bump_shape() {
        let b = Bump::of(&GridInterval::cells(2, 4, 4).unwrap(), 1.0);
        assert_eq!(b.value(b.center), 1.0);
        assert!((b.value(b.center + 0.1) - b.value(b.center - 0.1)).abs() < 1e-15);
        assert!(b.value(b.center + 0.4) < b.value(b.center + 0.1));
        assert!(b.value(0.9) > 0.0);
    }

    proptest! {
        #[test]
        fn holder_ordering(seed in 0u64..1000, a in 0i64..60, l in 1i64..64) {
            let f = random_signal(6, seed);
            let iv = GridInterval::cells(a, a + l, 6).unwrap();
            let p1 = f.local_average(&iv, 1.0, false).unwrap();
            let p2 = f.local_average(&iv, 2.0, false).unwrap();
            prop_assert!(p1 <= p2 * (1.0 + 1e-12));
        }

        #[test]
        fn average_homogeneous_and_monotone(seed in 0u64..1000, c in -5.0f64..5.0, a in 0i64..30, l in 1i64..30) {
            let f = random_signal(5, seed).abs();
            let iv = GridInterval::cells(a, a + l, 5).unwrap();
            for tailed in [false, true] {
                let base = f.local_average(&iv, 2.0, tailed).unwrap();
                let scaled = f.scaled(c).local_average(&iv, 2.0, tailed).unwrap();
                prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * (1.0 + base * c.abs()));
                let bigger = f.map(|v| v + 0.5).local_average(&iv, 2.0, tailed).unwrap();
                prop_assert!(bigger >= base);
            }
        }

        #[test]
        fn dyadic_maximal_dominates_mean(seed in 0u64..1000) {
            let f = random_signal(6, seed);
            let mean = f.integral().abs();
            for v in f.maximal_function(MaximalKind::Dyadic).samples() {
                prop_assert!(*v + 1e-12 >= mean);
            }
        }
    }
}
