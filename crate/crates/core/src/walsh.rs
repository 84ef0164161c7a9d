//! Walsh analysis on `2^n` cells.
//!
//! Walsh functions are in Paley order: `W_m = prod_k r_{k+1}^{m_k}` with the
//! Rademacher `r_{k+1}(x) = sign sin(2^{k+1} pi x)`. On the cell grid,
//! `W_m(cell i) = (-1)^{popcount(m & rev(i))}` where `rev` reverses the `n`
//! bits of `i`, so `<f, W_m>` is entry `rev(m)` of the natural-order
//! Hadamard transform divided by `N`.
//!
//! Tiles `I x [j 2^r, (j+1) 2^r)` pair a dyadic interval of length `2^-r`
//! with Walsh frequencies; their packets are local Walsh functions, so every
//! tile coefficient is a block Hadamard coefficient.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicInterval;
use crate::error::{Error, Result};
use crate::rng::{self, SplitMix64};
use crate::signal::Signal;
use crate::weights::WeightGrid;

/// In-place unnormalized Hadamard transform in natural order.
pub fn fwht(data: &mut [f64]) {
    let len = data.len();
    assert!(len.is_power_of_two());
    let mut h = 1;
    while h < len {
        for block in data.chunks_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
}

fn fwht_i64(data: &mut [i64]) {
    let len = data.len();
    let mut h = 1;
    while h < len {
        for block in data.chunks_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
}

pub fn bit_reverse(i: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}

/// `W_m` on the cell grid of `2^n` cells (requires `m < 2^n`).
pub fn walsh_function(m: usize, n: u32) -> Result<Signal> {
    if m >> n != 0 {
        return Err(Error::Range(format!("Walsh index {m} needs more than 2^{n} cells")));
    }
    let len = 1usize << n;
    let samples = (0..len)
        .map(|i| {
            if (m & bit_reverse(i, n)).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Signal::new(samples)
}

/// `<f, W_m>` for `m = 0..N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalshSpectrum {
    pub coeffs: Vec<f64>,
}

impl WalshSpectrum {
    pub fn n(&self) -> u32 {
        self.coeffs.len().trailing_zeros()
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// Keeps only the frequencies in `[lo, hi)`.
    pub fn restricted(&self, lo: usize, hi: usize) -> Result<Self> {
        if lo > hi || hi > self.coeffs.len() {
            return Err(Error::Range(format!(
                "frequency band [{lo}, {hi}) outside [0, {})",
                self.coeffs.len()
            )));
        }
        let mut coeffs = vec![0.0; self.coeffs.len()];
        coeffs[lo..hi].copy_from_slice(&self.coeffs[lo..hi]);
        Ok(Self { coeffs })
    }
}

pub fn wht(f: &Signal) -> WalshSpectrum {
    let n = f.n();
    let mut h = f.samples().to_vec();
    fwht(&mut h);
    let scale = f.cell_len();
    let coeffs = (0..h.len()).map(|m| h[bit_reverse(m, n)] * scale).collect();
    WalshSpectrum { coeffs }
}

pub fn iwht(spec: &WalshSpectrum) -> Signal {
    let n = spec.n();
    let mut h: Vec<f64> = (0..spec.coeffs.len())
        .map(|u| spec.coeffs[bit_reverse(u, n)])
        .collect();
    fwht(&mut h);
    Signal::new(h).expect("power-of-two length")
}

/// `N <f, W_m>` in exact integer arithmetic for integer samples.
pub fn wht_exact(samples: &[i64]) -> Result<Vec<i64>> {
    let len = samples.len();
    if !len.is_power_of_two() {
        return Err(Error::Domain(format!("length {len} is not a power of two")));
    }
    let n = len.trailing_zeros();
    let bound = samples.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0);
    if bound.checked_mul(len as u64).is_none_or(|b| b > i64::MAX as u64) {
        return Err(Error::Range("exact transform would overflow".into()));
    }
    let mut h = samples.to_vec();
    fwht_i64(&mut h);
    Ok((0..len).map(|m| h[bit_reverse(m, n)]).collect())
}

/// `H_omega f` for `omega = [lo, hi)`.
pub fn walsh_projection(f: &Signal, lo: usize, hi: usize) -> Result<Signal> {
    Ok(iwht(&wht(f).restricted(lo, hi)?))
}

/// Pairwise disjoint frequency intervals `[k, m)` with integer endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FreqFamily {
    omegas: Vec<(usize, usize)>,
}

impl FreqFamily {
    pub fn new(mut omegas: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(&(k, m)) = omegas.iter().find(|(k, m)| k >= m) {
            return Err(Error::Config(format!("empty frequency interval [{k}, {m})")));
        }
        omegas.sort_unstable();
        for w in omegas.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::Config(format!(
                    "frequency intervals [{}, {}) and [{}, {}) overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(Self { omegas })
    }

    /// `[0, 1), [1, 2), ..., [N-1, N)`.
    pub fn singletons(n: u32) -> Self {
        Self {
            omegas: (0..1usize << n).map(|k| (k, k + 1)).collect(),
        }
    }

    /// Random disjoint family of `count` intervals inside `[0, 2^n)`.
    pub fn random(n: u32, count: usize, rng: &mut SplitMix64) -> Self {
        let len = 1u64 << n;
        let mut cuts: Vec<usize> = (0..2 * count)
            .map(|_| rng::below(rng, len + 1) as usize)
            .collect();
        cuts.sort_unstable();
        let omegas = cuts
            .chunks(2)
            .filter(|c| c[0] < c[1])
            .map(|c| (c[0], c[1]))
            .collect::<Vec<_>>();
        if omegas.is_empty() {
            return Self { omegas: vec![(0, len as usize)] };
        }
        Self::new(omegas).expect("sorted cuts are disjoint")
    }

    pub fn omegas(&self) -> &[(usize, usize)] {
        &self.omegas
    }

    pub fn check_fits(&self, n: u32) -> Result<()> {
        match self.omegas.last() {
            Some(&(_, m)) if m > 1 << n => Err(Error::Range(format!(
                "frequency {m} exceeds the {} available on 2^{n} cells",
                1usize << n
            ))),
            _ => Ok(()),
        }
    }

    /// Maximal dyadic pieces of every member.
    pub fn pieces(&self) -> Vec<DyadicFreq> {
        self.omegas.iter().flat_map(|&(k, m)| dyadic_pieces(k, m)).collect()
    }
}

impl FromStr for FreqFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut omegas = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("'{part}' is not of the form k:m")))?;
            let parse = |t: &str| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Config(format!("'{part}': {e}")))
            };
            omegas.push((parse(a)?, parse(b)?));
        }
        if omegas.is_empty() {
            return Err(Error::Config("empty frequency family".into()));
        }
        Self::new(omegas)
    }
}

impl TryFrom<String> for FreqFamily {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FreqFamily> for String {
    fn from(f: FreqFamily) -> Self {
        f.to_string()
    }
}

impl fmt::Display for FreqFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.omegas.iter().map(|(k, m)| format!("{k}:{m}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Frequency interval `[index 2^log_len, (index+1) 2^log_len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DyadicFreq {
    pub log_len: u32,
    pub index: usize,
}

impl DyadicFreq {
    pub fn lo(&self) -> usize {
        self.index << self.log_len
    }

    pub fn hi(&self) -> usize {
        (self.index + 1) << self.log_len
    }

    /// Upper half of its dyadic parent.
    pub fn is_upper(&self) -> bool {
        self.index % 2 == 1
    }
}

/// Maximal dyadic intervals inside `[k, m)`, left to right.
pub fn dyadic_pieces(k: usize, m: usize) -> Vec<DyadicFreq> {
    let mut out = Vec::new();
    let mut x = k;
    while x < m {
        let mut r = if x == 0 { usize::BITS - 1 } else { x.trailing_zeros() };
        while r > 0 && (x + (1usize << r) > m || x.checked_add(1usize << r).is_none()) {
            r -= 1;
        }
        out.push(DyadicFreq {
            log_len: r,
            index: x >> r,
        });
        x += 1 << r;
    }
    out
}

/// Lower-half pieces of `[k, m)`; they all share the right endpoint's bits
/// and form a tree under the modulation `W_m`.
pub fn down_pieces(k: usize, m: usize) -> Vec<DyadicFreq> {
    dyadic_pieces(k, m).into_iter().filter(|p| !p.is_upper()).collect()
}

pub fn up_pieces(k: usize, m: usize) -> Vec<DyadicFreq> {
    dyadic_pieces(k, m).into_iter().filter(|p| p.is_upper()).collect()
}

/// Tile `I x [freq 2^r, (freq+1) 2^r)` with `|I| = 2^-r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalshTile {
    pub interval: DyadicInterval,
    pub freq: usize,
}

impl WalshTile {
    pub fn new(interval: DyadicInterval, freq: usize) -> Result<Self> {
        if interval.grid != 0 || interval.scale < 0 || interval.pos < 0 || interval.pos >> interval.scale != 0 {
            return Err(Error::Domain(format!("{interval} is not a dyadic subinterval of [0,1)")));
        }
        Ok(Self { interval, freq })
    }

    pub fn frequency_band(&self) -> (usize, usize) {
        let r = self.interval.scale as u32;
        (self.freq << r, (self.freq + 1) << r)
    }

    fn check(&self, n: u32) -> Result<()> {
        let r = self.interval.scale as u32;
        if r > n || self.frequency_band().1 > 1 << n {
            return Err(Error::Range(format!(
                "tile {} x [{}, {}) does not fit 2^{n} cells",
                self.interval,
                self.frequency_band().0,
                self.frequency_band().1
            )));
        }
        Ok(())
    }
}

/// `phi_s = |I|^{-1/2} W_{n(s)}(x / |I|) 1_I` on `2^n` cells.
pub fn wave_packet(tile: &WalshTile, n: u32) -> Result<Signal> {
    tile.check(n)?;
    let r = tile.interval.scale as u32;
    let local_bits = n - r;
    let amp = (r as f64 / 2.0).exp2();
    let mut s = vec![0.0; 1 << n];
    for (t, cell) in tile.interval.cell_range(n).enumerate() {
        let sign = (tile.freq & bit_reverse(t, local_bits)).count_ones() % 2;
        s[cell] = if sign == 0 { amp } else { -amp };
    }
    Signal::new(s)
}

/// `<f, phi_s>` by direct summation.
pub fn wavepacket_coeff(f: &Signal, tile: &WalshTile) -> Result<f64> {
    Ok(f.inner(&wave_packet(tile, f.n())?))
}

/// `<f, phi_s>` for every tile, computed with one block transform per level.
#[derive(Debug, Clone)]
pub struct TileTable {
    n: u32,
    /// `levels[r][p * 2^(n-r) + j]` is the coefficient of the tile with
    /// interval at scale `r`, position `p` and `n(s) = j`.
    levels: Vec<Vec<f64>>,
}

impl TileTable {
    pub fn new(f: &Signal) -> Self {
        let n = f.n();
        let levels = (0..=n)
            .into_par_iter()
            .map(|r| {
                let block = 1usize << (n - r);
                let bits = n - r;
                let amp = (-(r as f64) / 2.0).exp2() / block as f64;
                let mut out = vec![0.0; 1 << n];
                for (chunk, dst) in f.samples().chunks(block).zip(out.chunks_mut(block)) {
                    let mut h = chunk.to_vec();
                    fwht(&mut h);
                    for (j, d) in dst.iter_mut().enumerate() {
                        *d = h[bit_reverse(j, bits)] * amp;
                    }
                }
                out
            })
            .collect();
        Self { n, levels }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn coeff(&self, tile: &WalshTile) -> Result<f64> {
        tile.check(self.n)?;
        let r = tile.interval.scale as u32;
        let block = 1usize << (self.n - r);
        Ok(self.levels[r as usize][tile.interval.pos as usize * block + tile.freq])
    }

    /// Coefficients of the tiles with frequency band `piece`, left to right.
    pub fn piece_coeffs(&self, piece: &DyadicFreq) -> Vec<f64> {
        let r = piece.log_len;
        let block = 1usize << (self.n - r);
        self.levels[r as usize]
            .chunks(block)
            .map(|c| c[piece.index])
            .collect()
    }

    /// Sum of squared coefficients of tiles with frequency in `pieces`,
    /// grouped by the tile's spatial interval (node indexed).
    pub fn energy_by_interval(&self, pieces: &[DyadicFreq]) -> Vec<f64> {
        let len = 1usize << self.n;
        let mut e = vec![0.0; 2 * len - 1];
        for piece in pieces {
            let base = (1usize << piece.log_len) - 1;
            for (p, c) in self.piece_coeffs(piece).iter().enumerate() {
                e[base + p] += c * c;
            }
        }
        e
    }
}

/// `(sum_omega |H_omega f|^2)^{1/2}`.
pub fn rdf_square_function(f: &Signal, family: &FreqFamily) -> Result<Signal> {
    family.check_fits(f.n())?;
    let spec = wht(f);
    let parts: Vec<Signal> = family
        .omegas()
        .par_iter()
        .map(|&(k, m)| iwht(&spec.restricted(k, m).expect("checked band")))
        .collect();
    let mut acc = vec![0.0; f.len()];
    for p in &parts {
        for (a, v) in acc.iter_mut().zip(p.samples()) {
            *a += v * v;
        }
    }
    Signal::new(acc.into_iter().map(f64::sqrt).collect())
}

/// `(sum_s |<f, phi_s>|^2 1_{I_s} / |I_s|)^{1/2}` over tiles with frequency
/// band in `pieces`.
pub fn wp_square_function(table: &TileTable, pieces: &[DyadicFreq]) -> Signal {
    let len = 1usize << table.n;
    let mut acc = vec![0.0; len];
    for piece in pieces {
        let r = piece.log_len;
        let width = len >> r;
        let scale = (r as f64).exp2();
        for (p, c) in table.piece_coeffs(piece).iter().enumerate() {
            for a in &mut acc[p * width..(p + 1) * width] {
                *a += c * c * scale;
            }
        }
    }
    Signal::new(acc.into_iter().map(f64::sqrt).collect()).expect("power-of-two length")
}

/// `a_I = sum_{s : I_s = I} |<f, phi_s>|^2 / |I|`, node indexed; its balayage
/// is the square of the wave packet square function.
pub fn walsh_carleson_entries(table: &TileTable, pieces: &[DyadicFreq]) -> Vec<f64> {
    let mut e = table.energy_by_interval(pieces);
    for (node, v) in e.iter_mut().enumerate() {
        let scale = usize::BITS - 1 - (node + 1).leading_zeros();
        *v *= (scale as f64).exp2();
    }
    e
}

/// Subtree totals of a node-indexed array.
pub(crate) fn subtree_sums(values: &[f64]) -> Vec<f64> {
    let mut s = values.to_vec();
    for node in (1..s.len()).rev() {
        let parent = (node - 1) / 2;
        s[parent] += s[node];
    }
    s
}

/// `int_I |f|^2` for every dyadic interval, node indexed.
pub(crate) fn local_energy(f: &Signal) -> Vec<f64> {
    let len = f.len();
    let mut e = vec![0.0; 2 * len - 1];
    for (i, v) in f.samples().iter().enumerate() {
        e[len - 1 + i] = v * v / len as f64;
    }
    for node in (0..len - 1).rev() {
        e[node] = e[2 * node + 1] + e[2 * node + 2];
    }
    e
}

#[derive(Debug, Clone, Serialize)]
pub struct BesselReport {
    /// `min_I (int_I |f|^2 - sum_{s: I_s ⊆ I} |<f, phi_s>|^2)`.
    pub min_slack: f64,
    pub worst: DyadicInterval,
    pub intervals: usize,
}

/// Local orthogonality of the packets with disjoint frequency bands, checked
/// on every dyadic interval.
pub fn bessel_check(f: &Signal, table: &TileTable, pieces: &[DyadicFreq]) -> BesselReport {
    let tiles = subtree_sums(&table.energy_by_interval(pieces));
    let mass = local_energy(f);
    let (node, min_slack) = mass
        .iter()
        .zip(&tiles)
        .map(|(m, t)| m - t)
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, s)| if s < best.1 { (i, s) } else { best });
    BesselReport {
        min_slack,
        worst: DyadicInterval::from_node(node),
        intervals: mass.len(),
    }
}

/// Haar coefficients `<g, h_I>`, node indexed over intervals of scale
/// `0..n`, with `h_I = |I|^{-1/2} (1_{left half} - 1_{right half})`.
pub fn haar_coeffs(g: &Signal) -> Vec<f64> {
    let len = g.len();
    let mut sums = vec![0.0; 2 * len - 1];
    for (i, v) in g.samples().iter().enumerate() {
        sums[len - 1 + i] = v / len as f64;
    }
    for node in (0..len - 1).rev() {
        sums[node] = sums[2 * node + 1] + sums[2 * node + 2];
    }
    (0..len - 1)
        .map(|node| {
            let scale = usize::BITS - 1 - (node + 1).leading_zeros();
            (scale as f64 / 2.0).exp2() * (sums[2 * node + 1] - sums[2 * node + 2])
        })
        .collect()
}

/// `sum_I d_I h_I` from node-indexed coefficients.
pub fn haar_synthesis(coeffs: &[f64], n: u32) -> Signal {
    let len = 1usize << n;
    assert_eq!(coeffs.len(), len - 1);
    let mut out = vec![0.0; 2 * len - 1];
    for node in 0..len - 1 {
        let scale = usize::BITS - 1 - (node + 1).leading_zeros();
        let amp = coeffs[node] * (scale as f64 / 2.0).exp2();
        out[2 * node + 1] = out[node] + amp;
        out[2 * node + 2] = out[node] - amp;
    }
    Signal::new(out[len - 1..].to_vec()).expect("power-of-two length")
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeIdentityReport {
    pub pieces: Vec<DyadicFreq>,
    pub modulation: usize,
    /// `max_x | |sum_s <f,phi_s> phi_s| - |sum_s <f W, h_{I_s}> h_{I_s}| |`.
    pub discrepancy: f64,
    pub norm: f64,
}

fn upsample(f: &Signal) -> Signal {
    Signal::new(f.samples().iter().flat_map(|&v| [v, v]).collect()).expect("power-of-two length")
}

/// Compares the packet expansion over `pieces` with the Haar expansion of
/// `f W_modulation` restricted to the pieces' scales. Both sides are
/// evaluated on a grid twice as fine so Haar functions at the cell scale are
/// resolved.
pub fn tree_identity(f: &Signal, pieces: &[DyadicFreq], modulation: usize) -> Result<TreeIdentityReport> {
    let n = f.n();
    let fine = upsample(f);
    let spec = wht(&fine);
    let mut kept = vec![0.0; spec.coeffs.len()];
    for p in pieces {
        if p.hi() > 1 << n {
            return Err(Error::Range(format!("piece [{}, {}) beyond 2^{n}", p.lo(), p.hi())));
        }
        kept[p.lo()..p.hi()].copy_from_slice(&spec.coeffs[p.lo()..p.hi()]);
    }
    let packets = iwht(&WalshSpectrum { coeffs: kept });
    let w = walsh_function(modulation, n + 1)?;
    let g = fine.zip_with(&w, |a, b| a * b);
    let d = haar_coeffs(&g);
    let mut selected = vec![0.0; d.len()];
    for p in pieces {
        let r = p.log_len as usize;
        let range = (1usize << r) - 1..(2usize << r) - 1;
        selected[range.clone()].copy_from_slice(&d[range]);
    }
    let haar = haar_synthesis(&selected, n + 1);
    let discrepancy = packets
        .samples()
        .iter()
        .zip(haar.samples())
        .map(|(a, b)| (a.abs() - b.abs()).abs())
        .fold(0.0, f64::max);
    Ok(TreeIdentityReport {
        pieces: pieces.to_vec(),
        modulation,
        discrepancy,
        norm: f.norm(2.0),
    })
}

/// The tree identity for the lower-half pieces of `[k, m)`, modulated by
/// `W_m`.
pub fn tree_identity_check(f: &Signal, k: usize, m: usize) -> Result<TreeIdentityReport> {
    if k >= m || m > f.len() {
        return Err(Error::Range(format!("[{k}, {m}) is not inside [0, {})", f.len())));
    }
    tree_identity(f, &down_pieces(k, m), m)
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleProbe {
    pub b: usize,
    /// `|sum_{n <= b} <f, W_n> W_n|`.
    pub partial_sum: Signal,
    /// `|sum_I eps_I <f W_{b+1}, h_I> h_I|` with the recovered signs.
    pub martingale: Signal,
    /// Recovered `eps` per scale `0..=n`.
    pub eps: Vec<u8>,
    /// Largest distance of a fitted scale multiplier from `{0, 1}`.
    pub eps_residual: f64,
    pub discrepancy: f64,
}

/// Partial Walsh sums as Haar martingale transforms of `f W_{b+1}`.
///
/// The transform multipliers are fitted scale by scale by least squares on
/// the Haar coefficients of `W_{b+1} S_b f` against those of `f W_{b+1}`,
/// then rounded into `{0, 1}`; the rounded multipliers rebuild the right
/// side independently of the partial sum.
pub fn martingale_probe(f: &Signal, b: usize) -> Result<MartingaleProbe> {
    let n = f.n();
    if b >= f.len() {
        return Err(Error::Range(format!("partial sum index {b} outside [0, {})", f.len())));
    }
    let fine = upsample(f);
    let partial = walsh_projection(&fine, 0, b + 1)?;
    let w = walsh_function(b + 1, n + 1)?;
    let d = haar_coeffs(&fine.zip_with(&w, |a, c| a * c));
    let e = haar_coeffs(&partial.zip_with(&w, |a, c| a * c));
    let mut eps = Vec::with_capacity(n as usize + 1);
    let mut residual = 0.0f64;
    let mut selected = vec![0.0; d.len()];
    for r in 0..=n as usize {
        let range = (1usize << r) - 1..(2usize << r) - 1;
        let dd: f64 = d[range.clone()].iter().map(|v| v * v).sum();
        let de: f64 = d[range.clone()].iter().zip(&e[range.clone()]).map(|(x, y)| x * y).sum();
        let fit = if dd > 0.0 { de / dd } else { 0.0 };
        let bit = if fit >= 0.5 { 1u8 } else { 0 };
        residual = residual.max((fit - bit as f64).abs());
        eps.push(bit);
        if bit == 1 {
            selected[range.clone()].copy_from_slice(&d[range]);
        }
    }
    let rebuilt = haar_synthesis(&selected, n + 1);
    let discrepancy = partial
        .samples()
        .iter()
        .zip(rebuilt.samples())
        .map(|(a, c)| (a.abs() - c.abs()).abs())
        .fold(0.0, f64::max);
    let coarse = |s: &Signal| {
        Signal::new(s.samples().chunks(2).map(|c| 0.5 * (c[0].abs() + c[1].abs())).collect())
            .expect("power-of-two length")
    };
    Ok(MartingaleProbe {
        b,
        partial_sum: coarse(&partial),
        martingale: coarse(&rebuilt),
        eps,
        eps_residual: residual,
        discrepancy,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerCakeReport {
    /// `||W f||^2_{L^2(w)}` summed tile by tile.
    pub direct: f64,
    /// The same quantity as `int_0^inf sum_{t : w(I_t)/|I_t| > lambda}
    /// <f, phi_t>^2 d lambda`.
    pub layer_cake: f64,
    /// The integrand enlarged to every tile below a maximal superlevel
    /// interval.
    pub maximal_intervals: f64,
    /// After the local Bessel bound: `int_0^inf int_{U R*_lambda} |f|^2`.
    pub bessel_bound: f64,
    /// `int |f|^2 M_D w`.
    pub maximal_bound: f64,
    pub ratio: f64,
    pub levels: usize,
}

/// Walks the chain
/// `direct = layer_cake <= maximal_intervals <= bessel_bound <= maximal_bound`
/// for the wave packet square function with frequency bands `pieces`.
pub fn layer_cake_bound_check(f: &Signal, w: &WeightGrid, pieces: &[DyadicFreq]) -> Result<LayerCakeReport> {
    if w.n() != f.n() {
        return Err(Error::Domain("weight and signal on different grids".into()));
    }
    let table = TileTable::new(f);
    let energy = table.energy_by_interval(pieces);
    let avg = w.dyadic_averages();
    let nodes = energy.len();
    let direct: f64 = energy.iter().zip(avg).map(|(e, a)| e * a).sum();

    let mut tile_scale = vec![false; f.n() as usize + 1];
    for p in pieces {
        tile_scale[p.log_len as usize] = true;
    }
    let node_scale = |node: usize| (usize::BITS - 1 - (node + 1).leading_zeros()) as usize;
    let candidates: Vec<usize> = (0..nodes).filter(|&i| tile_scale[node_scale(i)]).collect();
    let mut levels: Vec<f64> = candidates.iter().map(|&i| avg[i]).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    let subtree = subtree_sums(&energy);
    let mass = local_energy(f);
    // For lambda in [levels[i-1], levels[i]) the superlevel family is
    // {I : avg(I) >= levels[i]}.
    let per_level: Vec<(f64, f64, f64)> = levels
        .par_iter()
        .map(|&v| {
            let mut covered = vec![false; nodes];
            let (mut exact, mut tiles, mut energy_in) = (0.0, 0.0, 0.0);
            for node in 0..nodes {
                if avg[node] >= v {
                    exact += energy[node];
                }
                let inherited = node > 0 && covered[(node - 1) / 2];
                if inherited {
                    covered[node] = true;
                } else if tile_scale[node_scale(node)] && avg[node] >= v {
                    covered[node] = true;
                    tiles += subtree[node];
                    energy_in += mass[node];
                }
            }
            (exact, tiles, energy_in)
        })
        .collect();
    let (mut layer_cake, mut maximal_intervals, mut bessel_bound, mut prev) = (0.0, 0.0, 0.0, 0.0);
    for (&v, &(x, t, e)) in levels.iter().zip(&per_level) {
        layer_cake += (v - prev) * x;
        maximal_intervals += (v - prev) * t;
        bessel_bound += (v - prev) * e;
        prev = v;
    }
    let m = w.signal().maximal_function(crate::signal::MaximalKind::Dyadic);
    let maximal_bound = f.map(|v| v * v).inner(&m);
    Ok(LayerCakeReport {
        direct,
        layer_cake,
        maximal_intervals,
        bessel_bound,
        maximal_bound,
        ratio: if maximal_bound > 0.0 { direct / maximal_bound } else { 0.0 },
        levels: levels.len(),
    })
}

pub fn weighted_norm_sq(g: &Signal, w: &WeightGrid) -> f64 {
    g.map(|v| v * v).inner(w.signal())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CwwReport {
    pub rdf_norm: f64,
    pub wave_packet_norm: f64,
    pub a_inf_dyadic: f64,
    /// `||T f||_{L^2(w)} / ([w]^{1/2}_{A_inf,D} ||W f||_{L^2(w)})`.
    pub fitted_constant: f64,
}

/// Weighted comparison of the square function with its wave packet model.
pub fn cww_comparison(f: &Signal, w: &WeightGrid, family: &FreqFamily) -> Result<CwwReport> {
    let t = rdf_square_function(f, family)?;
    let table = TileTable::new(f);
    let wp = wp_square_function(&table, &family.pieces());
    let rdf_norm = weighted_norm_sq(&t, w).sqrt();
    let wave_packet_norm = weighted_norm_sq(&wp, w).sqrt();
    let a_inf_dyadic = w.characteristic(f64::INFINITY, true)?;
    Ok(CwwReport {
        rdf_norm,
        wave_packet_norm,
        a_inf_dyadic,
        fitted_constant: rdf_norm / (a_inf_dyadic.sqrt() * wave_packet_norm),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OperatorNormEstimate {
    pub norm: f64,
    pub per_start: Vec<f64>,
    pub iterations: usize,
}

/// `||T^Omega||_{L^2(w) -> L^2(w)}` by power iteration.
///
/// The squared norm is the top eigenvalue of `w^{-1/2} B w^{-1/2}` with
/// `B = sum_omega H_omega w H_omega`; each start runs `iterations` steps and
/// the largest Rayleigh quotient wins.
pub fn weighted_operator_norm(
    w: &WeightGrid,
    family: &FreqFamily,
    starts: usize,
    iterations: usize,
    rng: &mut SplitMix64,
) -> Result<OperatorNormEstimate> {
    let n = w.n();
    family.check_fits(n)?;
    let sqrt_w: Vec<f64> = w.samples().iter().map(|v| v.sqrt()).collect();
    let apply = |u: &[f64]| -> Vec<f64> {
        let x = Signal::new(u.iter().zip(&sqrt_w).map(|(a, s)| a / s).collect()).expect("len");
        let spec = wht(&x);
        let mut out = vec![0.0; u.len()];
        for &(k, m) in family.omegas() {
            let part = iwht(&spec.restricted(k, m).expect("checked band"));
            let weighted = part.zip_with(w.signal(), |a, b| a * b);
            let back = iwht(&wht(&weighted).restricted(k, m).expect("checked band"));
            for (o, v) in out.iter_mut().zip(back.samples()) {
                *o += v;
            }
        }
        out.iter_mut().zip(&sqrt_w).for_each(|(o, s)| *o /= s);
        out
    };
    let seeds: Vec<SplitMix64> = (0..starts as u64).map(|i| rng.fork(i)).collect();
    let per_start: Vec<f64> = seeds
        .into_par_iter()
        .map(|mut r| {
            let mut u: Vec<f64> = rng::gaussian_signal(n, &mut r).into_samples();
            let mut rayleigh = 0.0;
            for _ in 0..iterations {
                let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    break;
                }
                u.iter_mut().for_each(|v| *v /= norm);
                let next = apply(&u);
                rayleigh = u.iter().zip(&next).map(|(a, b)| a * b).sum::<f64>();
                u = next;
            }
            rayleigh.max(0.0).sqrt()
        })
        .collect();
    Ok(OperatorNormEstimate {
        norm: per_start.iter().cloned().fold(0.0, f64::max),
        per_start,
        iterations,
    })
}
