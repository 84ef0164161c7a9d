//! Carleson sequences, balayages and sparse operators on the torus.
//!
//! Carleson sequences live on the standard dyadic intervals of `[0,1)` down
//! to the cells and are stored node indexed (see [`DyadicInterval::node`]).
//! The stopping construction turns such a sequence into a sparse family
//! whose sparse operator dominates the full balayage pointwise with
//! constant equal to the stopping threshold.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{dilate_family, verify_sparse, DyadicInterval, GridInterval, SparseFamily};
use crate::error::{Error, Result};
use crate::fourier::{self, BandFamily, Multiplier, PacketFamily};
use crate::signal::{Bump, Signal};
use crate::stats::{fit_line, LineFit};
use crate::walsh::{self, FreqFamily, TileTable};
use crate::weights::WeightGrid;

/// Whether averages carry the `chi_I^9` tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Localization {
    Tailed,
    Untailed,
}

/// `<|g|>_I` (or `<|g|>_{I,†}`) for every standard dyadic interval down to
/// the cells, node indexed.
pub fn node_averages(g: &Signal, loc: Localization) -> Vec<f64> {
    match loc {
        Localization::Untailed => g.abs().dyadic_averages(),
        Localization::Tailed => {
            let n = g.n();
            let len = g.len();
            let abs: Vec<f64> = g.samples().iter().map(|v| v.abs()).collect();
            let per_scale: Vec<Vec<f64>> = (0..=n)
                .into_par_iter()
                .map(|r| {
                    let block = len >> r;
                    let interval = DyadicInterval::standard(r as i32, 0);
                    let bump = Bump::of_dyadic(&interval, 9.0);
                    // Offsets are measured from the first cell of the interval.
                    let kernel: Vec<f64> = (0..len).map(|d| bump.value((d as f64 + 0.5) / len as f64)).collect();
                    let inv = (r as f64).exp2() / len as f64;
                    (0..1usize << r)
                        .map(|p| {
                            let start = p * block;
                            let (head, tail) = kernel.split_at(len - start);
                            let s: f64 = abs[start..].iter().zip(head).map(|(a, k)| a * k).sum::<f64>()
                                + abs[..start].iter().zip(tail).map(|(a, k)| a * k).sum::<f64>();
                            s * inv
                        })
                        .collect()
                })
                .collect();
            per_scale.into_iter().flatten().collect()
        }
    }
}

/// Nonnegative sequence on the dyadic intervals of `[0,1)` with the
/// function it is subordinated to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CarlesonSeq {
    n: u32,
    entries: Vec<f64>,
    subordinator: Signal,
}

impl CarlesonSeq {
    /// `entries` node indexed over scales `0..=n`.
    pub fn new(entries: Vec<f64>, subordinator: Signal) -> Result<Self> {
        let n = subordinator.n();
        if entries.len() != (2usize << n) - 1 {
            return Err(Error::Domain(format!(
                "{} entries for {} dyadic intervals",
                entries.len(),
                (2usize << n) - 1
            )));
        }
        if let Some((i, v)) = entries.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!(
                "entry {v} at {} is not a finite nonnegative number",
                DyadicInterval::from_node(i)
            )));
        }
        Ok(Self {
            n,
            entries,
            subordinator,
        })
    }

    pub fn from_map(map: &BTreeMap<DyadicInterval, f64>, subordinator: Signal) -> Result<Self> {
        let n = subordinator.n();
        let mut entries = vec![0.0; (2usize << n) - 1];
        for (iv, v) in map {
            if iv.grid != 0 || iv.scale < 0 || iv.scale as u32 > n || iv.pos < 0 || iv.pos >> iv.scale != 0 {
                return Err(Error::Range(format!("{iv} is not a dyadic interval of [0,1) above the cells")));
            }
            entries[iv.node()] = *v;
        }
        Self::new(entries, subordinator)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn subordinator(&self) -> &Signal {
        &self.subordinator
    }

    pub fn get(&self, interval: &DyadicInterval) -> f64 {
        self.entries.get(interval.node()).copied().unwrap_or(0.0)
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (DyadicInterval, f64)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (DyadicInterval::from_node(i), *v))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|v| v * c).collect(),
            subordinator: self.subordinator.clone(),
        }
    }
}

/// `sum_{Q in family} |a_Q| 1_Q`.
pub fn balayage(a: &CarlesonSeq, family: &[DyadicInterval]) -> Signal {
    let mut acc = vec![0.0; 1 << a.n];
    for q in family {
        let v = a.get(q).abs();
        if v != 0.0 {
            acc[q.cell_range(a.n)].iter_mut().for_each(|x| *x += v);
        }
    }
    Signal::new(acc).expect("power-of-two length")
}

/// Balayage over every dyadic interval, `A_D[a]`.
pub fn full_balayage(a: &CarlesonSeq) -> Signal {
    node_balayage(&a.entries, a.n)
}

fn node_balayage(values: &[f64], n: u32) -> Signal {
    let len = 1usize << n;
    let mut chain = vec![0.0; values.len()];
    chain[0] = values[0].abs();
    for node in 1..values.len() {
        chain[node] = chain[(node - 1) / 2] + values[node].abs();
    }
    Signal::new(chain[len - 1..].to_vec()).expect("power-of-two length")
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CarlesonNorm {
    /// `max_I |I|^{-1} sum_{J ⊆ I} |J| |a_J| / <g>_I`; infinite when `g`
    /// vanishes on an interval carrying mass.
    pub norm: f64,
    pub worst: DyadicInterval,
}

pub fn carleson_norm(a: &CarlesonSeq, loc: Localization) -> CarlesonNorm {
    let avg = node_averages(&a.subordinator, loc);
    let mut mass: Vec<f64> = a
        .entries
        .iter()
        .enumerate()
        .map(|(i, v)| v.abs() * (-(DyadicInterval::from_node(i).scale as f64)).exp2())
        .collect();
    for node in (1..mass.len()).rev() {
        let parent = (node - 1) / 2;
        mass[parent] += mass[node];
    }
    let mut best = (0usize, 0.0f64);
    for (node, (m, g)) in mass.iter().zip(&avg).enumerate() {
        if *m == 0.0 {
            continue;
        }
        let len = (-(DyadicInterval::from_node(node).scale as f64)).exp2();
        let ratio = if *g > 0.0 { m / (len * g) } else { f64::INFINITY };
        if ratio > best.1 {
            best = (node, ratio);
        }
    }
    CarlesonNorm {
        norm: best.1,
        worst: DyadicInterval::from_node(best.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseKind {
    /// `T_{p,S} f = sum_Q <f>_{p,Q} 1_Q`.
    Linear,
    /// `G_{p,S} f = (sum_Q <f>_{p,Q}^2 1_Q)^{1/2}`.
    Square,
}

/// Sparse operator over the members of `family`, each counted once.
pub fn sparse_operator(f: &Signal, family: &SparseFamily, p: f64, kind: SparseKind, loc: Localization) -> Result<Signal> {
    if family.n != f.n() {
        return Err(Error::Domain("family and signal on different grids".into()));
    }
    sparse_operator_over(f, &family.members, p, kind, loc)
}

pub fn sparse_operator_over(f: &Signal, members: &[GridInterval], p: f64, kind: SparseKind, loc: Localization) -> Result<Signal> {
    let n = f.n();
    let tailed = loc == Localization::Tailed;
    let avgs: Vec<f64> = members
        .par_iter()
        .map(|q| f.local_average(q, p, tailed))
        .collect::<Result<_>>()?;
    let mut acc = vec![0.0; f.len()];
    for (q, a) in members.iter().zip(&avgs) {
        let v = match kind {
            SparseKind::Linear => *a,
            SparseKind::Square => a * a,
        };
        for c in q.torus_cells(n) {
            acc[c] += v;
        }
    }
    if kind == SparseKind::Square {
        acc.iter_mut().for_each(|v| *v = v.sqrt());
    }
    Signal::new(acc)
}

/// Stopping intervals as a sparse family, carved by removing the next
/// generation.
fn family_from_stopping(n: u32, stopping: &[DyadicInterval], children: &[Vec<usize>]) -> SparseFamily {
    let members: Vec<GridInterval> = stopping.iter().map(|q| q.interval()).collect();
    let carving: Vec<Vec<usize>> = stopping
        .iter()
        .zip(children)
        .map(|(q, kids)| {
            let mut taken = vec![false; q.cell_range(n).len()];
            let start = q.cell_range(n).start;
            for &k in kids {
                for c in stopping[k].cell_range(n) {
                    taken[c - start] = true;
                }
            }
            q.cell_range(n).filter(|c| !taken[c - start]).collect()
        })
        .collect();
    let mut family = SparseFamily {
        n,
        members,
        carving,
        eta: 1.0,
    };
    family.eta = verify_sparse(&family).min_ratio.min(1.0);
    family
}

/// Principal intervals of `|f|`: starting from `[0,1)`, each member `R`
/// spawns the maximal dyadic `J ⊊ R` with `<|f|>_J > threshold <|f|>_R`.
/// The children of `R` cover at most `|R| / threshold`.
pub fn principal_family(f: &Signal, threshold: f64) -> Result<SparseFamily> {
    if !(threshold > 1.0) {
        return Err(Error::Domain(format!("threshold {threshold} must exceed 1")));
    }
    let avg = f.abs().dyadic_averages();
    let nodes = avg.len();
    let mut stopping = vec![0usize];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut k = 0;
    while k < stopping.len() {
        let r = stopping[k];
        let bar = threshold * avg[r];
        let mut stack: Vec<usize> = if 2 * r + 1 < nodes { vec![2 * r + 2, 2 * r + 1] } else { Vec::new() };
        while let Some(node) = stack.pop() {
            if avg[node] > bar {
                children[k].push(stopping.len());
                stopping.push(node);
                children.push(Vec::new());
            } else if 2 * node + 1 < nodes {
                stack.push(2 * node + 2);
                stack.push(2 * node + 1);
            }
        }
        k += 1;
    }
    let intervals: Vec<DyadicInterval> = stopping.into_iter().map(DyadicInterval::from_node).collect();
    Ok(family_from_stopping(f.n(), &intervals, &children))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StoppingParams {
    pub threshold: f64,
    pub localization: Localization,
}

impl Default for StoppingParams {
    fn default() -> Self {
        Self {
            threshold: 4.0,
            localization: Localization::Tailed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PackingRecord {
    pub interval: DyadicInterval,
    pub cells: usize,
    pub stopped_cells: usize,
    /// `threshold * stopped_cells <= cells` in integers.
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SparseConstruction {
    pub family: SparseFamily,
    pub stopping: Vec<DyadicInterval>,
    /// Index of the stopping parent, `None` for the root.
    pub parent: Vec<Option<usize>>,
    pub generations: usize,
    /// Carleson norm the sequence was divided by.
    pub normalization: f64,
    pub packing: Vec<PackingRecord>,
    /// `max_x A[a/||a||](x) / T_{1,Q} g(x)`.
    pub max_ratio: f64,
    /// `min_x (threshold T_{1,Q} g(x) - A[a/||a||](x))`.
    pub min_slack: f64,
    /// Same ratio against the untailed sparse operator over `Q` enlarged by
    /// the dilate families of its members.
    pub untailed_ratio: f64,
}

impl SparseConstruction {
    pub fn packing_ok(&self) -> bool {
        self.packing.iter().all(|p| p.ok)
    }
}

/// Maximal `Z` below `start` whose chain sum, beginning with `base`,
/// exceeds `bar`, left to right.
fn stopping_children(values: &[f64], start: usize, base: f64, bar: f64, nodes: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![(start, base + values[start])];
    while let Some((node, sum)) = stack.pop() {
        if sum > bar {
            out.push(node);
            continue;
        }
        let left = 2 * node + 1;
        if left < nodes {
            // Right first so the left subtree pops first.
            stack.push((left + 1, sum + values[left + 1]));
            stack.push((left, sum + values[left]));
        }
    }
    out
}

/// Stopping-time construction of a sparse family dominating the balayage of
/// a Carleson sequence.
///
/// The sequence is divided by its Carleson norm (with the chosen
/// localization). Starting from `[0,1)`, each stopping interval `R` spawns
/// the maximal `Z ⊊ R` with `sum_{Z ⊆ W ⊆ R} a_W > threshold <g>_R`.
pub fn build_sparse_from_carleson(a: &CarlesonSeq, params: &StoppingParams) -> Result<SparseConstruction> {
    let n = a.n;
    let nodes = a.entries.len();
    let norm = carleson_norm(a, params.localization);
    if norm.norm.is_infinite() {
        return Err(Error::Construction(format!(
            "subordinator vanishes on {} where the sequence has mass",
            norm.worst
        )));
    }
    let normalization = if norm.norm > 0.0 { norm.norm } else { 1.0 };
    let values: Vec<f64> = a.entries.iter().map(|v| v / normalization).collect();
    let avg = node_averages(&a.subordinator, params.localization);

    let mut stopping_nodes = vec![0usize];
    let mut parent = vec![None];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut frontier = vec![0usize];
    let mut generations = 1;
    while !frontier.is_empty() {
        let found: Vec<Vec<usize>> = frontier
            .par_iter()
            .map(|&idx| {
                let root = stopping_nodes[idx];
                let bar = params.threshold * avg[root];
                let left = 2 * root + 1;
                if left >= nodes {
                    return Vec::new();
                }
                let base = values[root];
                let mut kids = stopping_children(&values, left, base, bar, nodes);
                kids.extend(stopping_children(&values, left + 1, base, bar, nodes));
                kids
            })
            .collect();
        let mut next = Vec::new();
        for (&idx, kids) in frontier.iter().zip(found) {
            for node in kids {
                let k = stopping_nodes.len();
                stopping_nodes.push(node);
                parent.push(Some(idx));
                children.push(Vec::new());
                children[idx].push(k);
                next.push(k);
            }
        }
        if !next.is_empty() {
            generations += 1;
        }
        frontier = next;
    }

    let stopping: Vec<DyadicInterval> = stopping_nodes.iter().map(|&i| DyadicInterval::from_node(i)).collect();
    let packing: Vec<PackingRecord> = stopping
        .iter()
        .zip(&children)
        .map(|(q, kids)| {
            let cells = q.cell_range(n).len();
            let stopped_cells: usize = kids.iter().map(|&k| stopping[k].cell_range(n).len()).sum();
            PackingRecord {
                interval: *q,
                cells,
                stopped_cells,
                ok: (params.threshold * stopped_cells as f64) <= cells as f64,
            }
        })
        .collect();
    let family = family_from_stopping(n, &stopping, &children);

    let balay = node_balayage(&values, n);
    let mut sparse = vec![0.0; 1 << n];
    for &node in &stopping_nodes {
        let iv = DyadicInterval::from_node(node);
        sparse[iv.cell_range(n)].iter_mut().for_each(|x| *x += avg[node]);
    }
    let (mut max_ratio, mut min_slack) = (0.0f64, f64::INFINITY);
    for (b, s) in balay.samples().iter().zip(&sparse) {
        min_slack = min_slack.min(params.threshold * s - b);
        if *b > 0.0 {
            max_ratio = max_ratio.max(b / s);
        }
    }

    let mut enlarged: Vec<GridInterval> = Vec::new();
    for q in &stopping {
        enlarged.push(q.interval());
        enlarged.extend(dilate_family(q, n)?.members);
    }
    enlarged.sort_by_key(|g| (g.lo, g.hi));
    enlarged.dedup();
    let untailed = sparse_operator_over(&a.subordinator, &enlarged, 1.0, SparseKind::Linear, Localization::Untailed)?;
    let untailed_ratio = balay
        .samples()
        .iter()
        .zip(untailed.samples())
        .filter(|(b, _)| **b > 0.0)
        .map(|(b, s)| b / s)
        .fold(0.0, f64::max);

    Ok(SparseConstruction {
        family,
        stopping,
        parent,
        generations,
        normalization,
        packing,
        max_ratio,
        min_slack,
        untailed_ratio,
    })
}

/// Shifted-grid interval containing `q` of least length, searching scales
/// from `max_scale` up.
pub fn three_grid_cover(q: &GridInterval, max_scale: i32) -> Result<DyadicInterval> {
    let mut best: Option<DyadicInterval> = None;
    for grid in 0..3u8 {
        for scale in (0..=max_scale).rev() {
            let iv = DyadicInterval::locate(q.lo, grid, scale);
            if iv.hi() >= q.hi {
                if best.is_none_or(|b| iv.scale > b.scale) {
                    best = Some(iv);
                }
                break;
            }
        }
    }
    best.ok_or_else(|| Error::Construction(format!("no shifted-grid interval of length <= 1 contains {q}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct ThreeGridReport {
    /// Images of the members in each of the three grids.
    pub grids: [Vec<DyadicInterval>; 3],
    /// `max_Q (|I_Q| / |Q|)^{1/p}`.
    pub constant: f64,
    /// `min_x (constant sum_j T_{p,S_j} f - T_{p,S} f)`.
    pub min_slack: f64,
}

/// Dominates a sparse operator over arbitrary intervals by the sum of three
/// sparse operators over shifted dyadic intervals.
pub fn three_grid_domination(f: &Signal, members: &[GridInterval], p: f64) -> Result<ThreeGridReport> {
    let n = f.n();
    let mut grids: [Vec<DyadicInterval>; 3] = Default::default();
    let mut constant = 1.0f64;
    for q in members {
        let iv = three_grid_cover(q, n as i32)?;
        constant = constant.max((iv.len() / q.len()).powf(1.0 / p));
        grids[iv.grid as usize].push(iv);
    }
    let original = sparse_operator_over(f, members, p, SparseKind::Linear, Localization::Untailed)?;
    let mut total = vec![0.0; f.len()];
    for g in &grids {
        let images: Vec<GridInterval> = g.iter().map(|iv| iv.interval()).collect();
        let t = sparse_operator_over(f, &images, p, SparseKind::Linear, Localization::Untailed)?;
        total.iter_mut().zip(t.samples()).for_each(|(a, b)| *a += b);
    }
    let min_slack = total
        .iter()
        .zip(original.samples())
        .map(|(t, o)| constant * t - o)
        .fold(f64::INFINITY, f64::min);
    Ok(ThreeGridReport {
        grids,
        constant,
        min_slack,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum DominationModel {
    Walsh { omega: FreqFamily },
    FourierIndicator { omega: BandFamily, packets: usize, seed: u64 },
    FourierMultiplier { omega: BandFamily, packets: usize, seed: u64 },
}

impl DominationModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Walsh { .. } => "walsh",
            Self::FourierIndicator { .. } => "fourier_indicator",
            Self::FourierMultiplier { .. } => "fourier_multiplier",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DominationCertificate {
    pub model: &'static str,
    pub eta: f64,
    /// `max_x T f(x) / T_{2,Q} f(x)` for the model's square function.
    pub c_star: f64,
    /// `max_x W f(x) / (T_{1,Q,†} |f|^2)^{1/2}` for the wave packet
    /// square function built from the same coefficients.
    pub c_wave_packet: f64,
    pub carleson_norm: f64,
    pub construction: SparseConstruction,
}

/// Sparse domination of the model's square function through the stopping
/// construction applied to its wave packet coefficients.
pub fn verify_pointwise_domination(f: &Signal, model: &DominationModel) -> Result<DominationCertificate> {
    let n = f.n();
    let energy = f.map(|v| v * v);
    let (square, entries) = match model {
        DominationModel::Walsh { omega } => {
            let table = TileTable::new(f);
            let entries = walsh::walsh_carleson_entries(&table, &omega.pieces());
            (walsh::rdf_square_function(f, omega)?, entries)
        }
        DominationModel::FourierIndicator { omega, packets, seed } => {
            let family = PacketFamily::new(n, *packets, *seed, fourier::DEFAULT_ORDER)?;
            let entries = fourier::intrinsic_carleson_entries(f, omega, &family)?;
            (fourier::rdf_square_function(f, omega)?, entries)
        }
        DominationModel::FourierMultiplier { omega, packets, seed } => {
            let family = PacketFamily::new(n, *packets, *seed, fourier::DEFAULT_ORDER)?;
            let entries = fourier::intrinsic_carleson_entries(f, omega, &family)?;
            let ms: Vec<Multiplier> = omega
                .bands()
                .iter()
                .map(|&b| Multiplier::bump(b, fourier::DEFAULT_ORDER))
                .collect();
            (fourier::multiplier_square_function(f, &ms, fourier::DEFAULT_ORDER)?, entries)
        }
    };
    let a = CarlesonSeq::new(entries, energy.clone())?;
    let params = StoppingParams::default();
    let construction = build_sparse_from_carleson(&a, &params)?;
    let t2 = sparse_operator(f, &construction.family, 2.0, SparseKind::Linear, Localization::Untailed)?;
    let c_star = square
        .samples()
        .iter()
        .zip(t2.samples())
        .map(|(s, t)| if *t > 0.0 { s / t } else if *s > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max);
    let wp = full_balayage(&a);
    let t1 = sparse_operator(&energy, &construction.family, 1.0, SparseKind::Linear, Localization::Tailed)?;
    let c_wave_packet = wp
        .samples()
        .iter()
        .zip(t1.samples())
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, t)| (w / t).sqrt())
        .fold(0.0, f64::max);
    Ok(DominationCertificate {
        model: model.name(),
        eta: construction.family.eta,
        c_star,
        c_wave_packet,
        carleson_norm: construction.normalization,
        construction,
    })
}

/// `sup_lambda lambda w({|g| > lambda})^{1/p}` over the value set of `g`.
pub fn weak_norm(g: &Signal, w: &WeightGrid, p: f64) -> f64 {
    let cell = g.cell_len();
    let mut pairs: Vec<(f64, f64)> = g
        .samples()
        .iter()
        .zip(w.samples())
        .map(|(v, wt)| (v.abs(), wt * cell))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = 0.0f64;
    let mut mass = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let v = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == v {
            mass += pairs[i].1;
            i += 1;
        }
        // lambda just below v sees every cell with |g| >= v.
        best = best.max(v * mass.powf(1.0 / p));
    }
    best
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GoodLambdaRow {
    pub lambda: f64,
    pub gamma: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GoodLambdaTable {
    pub a_inf: f64,
    pub rows: Vec<GoodLambdaRow>,
    /// Pairs with `w({A > lambda}) = 0`.
    pub skipped_empty: usize,
    /// Pairs with zero ratio, which have no logarithm.
    pub skipped_zero: usize,
    /// `log ratio` against `gamma^2 / [w]_{A_inf}`.
    pub fit: Option<LineFit>,
    /// `log ratio` against `1 / (gamma^2 [w]_{A_inf})`.
    pub fit_inverse: Option<LineFit>,
    /// `sup_lambda ratio` for each `gamma`, in the order given.
    pub sup_ratio: Vec<f64>,
    /// `log sup_lambda ratio` against `gamma^2 / [w]_{A_inf}`, zeros dropped.
    pub sup_fit: Option<LineFit>,
    /// `log sup_lambda ratio` against `1 / (gamma^2 [w]_{A_inf})`.
    pub sup_fit_inverse: Option<LineFit>,
}

/// Exponential good-lambda table for a balayage over a sparse family.
///
/// `values[i]` is the coefficient of `family.members[i]`. For each `lambda`
/// in the value set of `A[a]` (and half of each value) and each `gamma`,
/// records `w({A[a] > 2 lambda, A[a^2]^{1/2} <= gamma lambda}) / w({A[a] > lambda})`.
pub fn good_lambda_check(values: &[f64], family: &SparseFamily, w: &WeightGrid, gammas: &[f64]) -> Result<GoodLambdaTable> {
    let n = family.n;
    if w.n() != n || values.len() != family.members.len() {
        return Err(Error::Domain("sequence, family and weight do not match".into()));
    }
    let verdict = verify_sparse(family);
    if !verdict.ok {
        return Err(Error::Domain(format!("family is not sparse: {}", verdict.diagnostics.join("; "))));
    }
    let len = 1usize << n;
    let (mut lin, mut sq) = (vec![0.0; len], vec![0.0; len]);
    for (q, v) in family.members.iter().zip(values) {
        for c in q.torus_cells(n) {
            lin[c] += v.abs();
            sq[c] += v * v;
        }
    }
    let sq: Vec<f64> = sq.into_iter().map(f64::sqrt).collect();
    let mut lambdas: Vec<f64> = lin.iter().filter(|v| **v > 0.0).flat_map(|&v| [v, v / 2.0]).collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let a_inf = w.characteristic(f64::INFINITY, false)?;
    let cell = 1.0 / len as f64;
    let mut rows = Vec::new();
    let (mut skipped_empty, mut skipped_zero) = (0, 0);
    for &lambda in &lambdas {
        let denominator: f64 = lin
            .iter()
            .zip(w.samples())
            .filter(|(a, _)| **a > lambda)
            .map(|(_, wt)| wt * cell)
            .sum();
        for &gamma in gammas {
            if denominator == 0.0 {
                skipped_empty += 1;
                continue;
            }
            let numerator: f64 = lin
                .iter()
                .zip(&sq)
                .zip(w.samples())
                .filter(|((a, s), _)| **a > 2.0 * lambda && **s <= gamma * lambda)
                .map(|(_, wt)| wt * cell)
                .sum();
            rows.push(GoodLambdaRow {
                lambda,
                gamma,
                numerator,
                denominator,
                // Empty float sums are -0.0.
                ratio: numerator / denominator + 0.0,
            });
        }
    }
    let logged: Vec<&GoodLambdaRow> = rows.iter().filter(|r| r.ratio > 0.0).collect();
    skipped_zero += rows.len() - logged.len();
    let ys: Vec<f64> = logged.iter().map(|r| r.ratio.ln()).collect();
    let xs: Vec<f64> = logged.iter().map(|r| r.gamma * r.gamma / a_inf).collect();
    let xs_inv: Vec<f64> = logged.iter().map(|r| 1.0 / (r.gamma * r.gamma * a_inf)).collect();
    let sup_ratio: Vec<f64> = gammas
        .iter()
        .map(|&g| rows.iter().filter(|r| r.gamma == g).map(|r| r.ratio).fold(0.0, f64::max))
        .collect();
    let kept: Vec<(f64, f64)> = gammas
        .iter()
        .zip(&sup_ratio)
        .filter(|(_, r)| **r > 0.0)
        .map(|(g, r)| (*g, r.ln()))
        .collect();
    let ys_sup: Vec<f64> = kept.iter().map(|k| k.1).collect();
    let xs_sup: Vec<f64> = kept.iter().map(|(g, _)| g * g / a_inf).collect();
    let xs_sup_inv: Vec<f64> = kept.iter().map(|(g, _)| 1.0 / (g * g * a_inf)).collect();
    Ok(GoodLambdaTable {
        a_inf,
        fit: fit_line(&xs, &ys),
        fit_inverse: fit_line(&xs_inv, &ys),
        sup_fit: fit_line(&xs_sup, &ys_sup),
        sup_fit_inverse: fit_line(&xs_sup_inv, &ys_sup),
        sup_ratio,
        rows,
        skipped_empty,
        skipped_zero,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WeakTypeReport {
    pub weak_norm: f64,
    pub square_norm: f64,
    pub a_inf: f64,
    /// `||T_{2,S} f||_{L^{2,inf}(w)} / (||G_{2,S} f||_{L^2(w)} [w]^{1/2}_{A_inf})`.
    pub ratio: f64,
}

/// Weak-type comparison of the linear and square sparse operators.
pub fn weak_type_ratio(f: &Signal, family: &SparseFamily, w: &WeightGrid) -> Result<WeakTypeReport> {
    let t = sparse_operator(f, family, 2.0, SparseKind::Linear, Localization::Untailed)?;
    let g = sparse_operator(f, family, 2.0, SparseKind::Square, Localization::Untailed)?;
    let weak = weak_norm(&t, w, 2.0);
    let square_norm = g.map(|v| v * v).inner(w.signal()).sqrt();
    let a_inf = w.characteristic(f64::INFINITY, false)?;
    Ok(WeakTypeReport {
        weak_norm: weak,
        square_norm,
        a_inf,
        ratio: weak / (square_norm * a_inf.sqrt()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_signal, gaussian_signal_supported, SplitMix64};

    fn random(n: u32, seed: u64) -> Signal {
        gaussian_signal(n, &mut SplitMix64::new(seed))
    }

    #[test]
    fn principal_family_packs() {
        use crate::rng::cascade_signal;
        for seed in 0..4 {
            let f = cascade_signal(10, 0.8, &mut SplitMix64::new(seed));
            for t in [2.0, 4.0] {
                let fam = principal_family(&f, t).unwrap();
                let v = verify_sparse(&fam);
                assert!(v.ok, "{:?}", v.diagnostics);
                assert!(fam.eta >= 1.0 - 1.0 / t, "{}", fam.eta);
                assert!(fam.members.len() > 4);
            }
        }
        assert!(principal_family(&Signal::constant(4, 1.0), 1.0).is_err());
        assert_eq!(principal_family(&Signal::constant(4, 1.0), 2.0).unwrap().members.len(), 1);
    }

    #[test]
    fn tailed_averages_match_direct() {
        let g = random(6, 1).map(|v| v * v);
        let avg = node_averages(&g, Localization::Tailed);
        for node in [0usize, 1, 2, 5, 30, 70, 126] {
            let iv = DyadicInterval::from_node(node);
            let direct = g.local_average(&iv.interval(), 1.0, true).unwrap();
            assert!((avg[node] - direct).abs() < 1e-12 * direct, "{iv}");
        }
        let untailed = node_averages(&g, Localization::Untailed);
        let iv = DyadicInterval::standard(3, 5);
        assert!((untailed[iv.node()] - g.local_average(&iv.interval(), 1.0, false).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn balayage_basics() {
        let g = Signal::constant(5, 1.0);
        let q = DyadicInterval::standard(2, 1);
        let mut map = BTreeMap::new();
        map.insert(q, 1.0);
        let a = CarlesonSeq::from_map(&map, g.clone()).unwrap();
        assert_eq!(balayage(&a, &[q]), Signal::indicator(5, &q.interval()));
        // Chain of k nested intervals through one point.
        let chain: Vec<DyadicInterval> = (0..5).map(|r| DyadicInterval::standard(r, 0)).collect();
        let mut map = BTreeMap::new();
        for c in &chain {
            map.insert(*c, 1.0);
        }
        let a = CarlesonSeq::from_map(&map, g).unwrap();
        assert_eq!(balayage(&a, &chain).samples()[0], 5.0);
        assert_eq!(full_balayage(&a).samples()[0], 5.0);
        assert_eq!(full_balayage(&a).samples()[31], 1.0);
        assert!(CarlesonSeq::new(vec![-1.0; 63], Signal::zeros(5)).is_err());
    }

    #[test]
    fn sparse_operator_is_a_balayage() {
        let f = random(6, 2);
        let stopping = [DyadicInterval::standard(0, 0), DyadicInterval::standard(2, 1), DyadicInterval::standard(4, 9)];
        let family = family_from_stopping(6, &stopping, &[vec![1, 2], vec![], vec![]]);
        let t = sparse_operator(&f, &family, 2.0, SparseKind::Linear, Localization::Untailed).unwrap();
        let mut map = BTreeMap::new();
        for q in &stopping {
            map.insert(*q, f.local_average(&q.interval(), 2.0, false).unwrap());
        }
        let a = CarlesonSeq::from_map(&map, f.abs()).unwrap();
        let b = balayage(&a, &stopping);
        for (x, y) in t.samples().iter().zip(b.samples()) {
            assert!((x - y).abs() < 1e-12);
        }
        let one = family_from_stopping(6, &stopping[..1], &[vec![]]);
        let t = sparse_operator(&Signal::constant(6, 1.0), &one, 2.0, SparseKind::Linear, Localization::Untailed).unwrap();
        assert!(t.samples().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn square_identity() {
        let f = random(8, 3);
        let mut rng = SplitMix64::new(9);
        let g = gaussian_signal(8, &mut rng).map(|v| v * v);
        let a = CarlesonSeq::new(walsh::walsh_carleson_entries(&TileTable::new(&f), &walsh::dyadic_pieces(0, 256)), g).unwrap();
        let c = build_sparse_from_carleson(&a, &StoppingParams::default()).unwrap();
        let g2 = sparse_operator(&f, &c.family, 2.0, SparseKind::Square, Localization::Untailed).unwrap();
        let t1 = sparse_operator(&f.map(|v| v * v), &c.family, 1.0, SparseKind::Linear, Localization::Untailed).unwrap();
        for (x, y) in g2.samples().iter().zip(t1.samples()) {
            assert!((x - y.sqrt()).abs() <= 1e-12 * x.max(1.0));
        }
    }

    #[test]
    fn norm_of_partition_averages() {
        // a_Q = <f>_{2,Q}^2 on the leaves of a partition, subordinated to |f|^2.
        let f = random(7, 4);
        let g = f.map(|v| v * v);
        let leaves = [
            DyadicInterval::standard(1, 0),
            DyadicInterval::standard(2, 2),
            DyadicInterval::standard(3, 6),
            DyadicInterval::standard(3, 7),
        ];
        let mut map = BTreeMap::new();
        for q in &leaves {
            map.insert(*q, g.local_average(&q.interval(), 1.0, false).unwrap());
        }
        let a = CarlesonSeq::from_map(&map, g).unwrap();
        let norm = carleson_norm(&a, Localization::Untailed);
        assert!(norm.norm <= 1.0 + 1e-12);
        assert!(norm.norm >= 1.0 - 1e-12);
    }

    #[test]
    fn norm_of_a_single_term() {
        let f = random(6, 5).map(|v| v * v);
        let q = DyadicInterval::standard(3, 2);
        let value = f.local_average(&q.interval(), 1.0, true).unwrap();
        let mut map = BTreeMap::new();
        map.insert(q, value);
        let a = CarlesonSeq::from_map(&map, f.clone()).unwrap();
        // Only Q and its ancestors see the mass.
        let mut expect = 0.0f64;
        for k in 0..=3 {
            let anc = q.ancestor_up(k);
            let ratio = q.len() * value / (anc.len() * f.local_average(&anc.interval(), 1.0, true).unwrap());
            expect = expect.max(ratio);
        }
        let norm = carleson_norm(&a, Localization::Tailed);
        assert!((norm.norm - expect).abs() < 1e-12 * expect);
        assert!(norm.norm >= 1.0 - 1e-12);
    }

    #[test]
    fn walsh_coefficients_have_unit_norm() {
        for seed in 0..5 {
            let f = random(8, seed);
            let mut rng = SplitMix64::new(seed);
            let fam = FreqFamily::random(8, 4, &mut rng);
            let a = CarlesonSeq::new(walsh::walsh_carleson_entries(&TileTable::new(&f), &fam.pieces()), f.map(|v| v * v)).unwrap();
            assert!(carleson_norm(&a, Localization::Untailed).norm <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn zero_subordinator_is_rejected() {
        let mut map = BTreeMap::new();
        map.insert(DyadicInterval::standard(2, 0), 1.0);
        let a = CarlesonSeq::from_map(&map, Signal::zeros(4)).unwrap();
        assert!(carleson_norm(&a, Localization::Untailed).norm.is_infinite());
        assert!(matches!(
            build_sparse_from_carleson(&a, &StoppingParams::default()),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn single_interval_sequence() {
        let g = random(6, 6).map(|v| v * v);
        let mut map = BTreeMap::new();
        map.insert(DyadicInterval::standard(3, 4), 2.0);
        let a = CarlesonSeq::from_map(&map, g).unwrap();
        let c = build_sparse_from_carleson(&a, &StoppingParams::default()).unwrap();
        assert!(c.packing_ok());
        assert!(c.max_ratio <= 4.0 + 1e-9 && c.min_slack >= -1e-9);
        assert!(c.stopping.len() <= 2);
        assert!(verify_sparse(&c.family).ok);
    }

    #[test]
    fn dense_random_sequence() {
        let f = gaussian_signal_supported(10, 0.25, 0.75, &mut SplitMix64::new(7));
        let fam = FreqFamily::random(10, 6, &mut SplitMix64::new(8));
        let a = CarlesonSeq::new(walsh::walsh_carleson_entries(&TileTable::new(&f), &fam.pieces()), f.map(|v| v * v)).unwrap();
        let c = build_sparse_from_carleson(&a, &StoppingParams::default()).unwrap();
        assert!(c.packing_ok());
        assert!(c.family.eta >= 0.75);
        assert!(verify_sparse(&c.family).ok);
        assert!(c.max_ratio <= 4.0 + 1e-9, "{}", c.max_ratio);
        assert!(c.min_slack >= -1e-9);
        assert!(c.untailed_ratio.is_finite());
    }

    #[test]
    fn adversarial_branch() {
        // All mass on the chain of intervals containing 0.
        let g = Signal::constant(10, 1.0);
        let mut map = BTreeMap::new();
        for r in 0..=10 {
            map.insert(DyadicInterval::standard(r, 0), 1.0);
        }
        let a = CarlesonSeq::from_map(&map, g).unwrap();
        let c = build_sparse_from_carleson(&a, &StoppingParams::default()).unwrap();
        assert!(c.packing_ok());
        assert!(c.generations >= 2, "{}", c.generations);
        assert!(c.max_ratio <= 4.0 + 1e-9);
        assert!(c.min_slack >= -1e-9);
        // Stopping intervals form a chain around 0.
        assert!(c.stopping.iter().all(|q| q.pos == 0));
    }

    #[test]
    fn three_grid_cover_is_small() {
        for a in 0..60i64 {
            for b in a + 1..64 {
                let q = GridInterval::cells(a, b, 6).unwrap();
                let iv = three_grid_cover(&q, 6).unwrap();
                assert!(iv.interval().contains(&q));
                assert!(iv.len() <= 6.0 * q.len(), "{q} -> {iv}");
            }
        }
    }

    #[test]
    fn three_grid_domination_holds() {
        let f = random(7, 11);
        let members: Vec<GridInterval> = [(0, 128), (3, 17), (40, 45), (90, 127), (64, 65)]
            .iter()
            .map(|&(a, b)| GridInterval::cells(a, b, 7).unwrap())
            .collect();
        let rep = three_grid_domination(&f, &members, 2.0).unwrap();
        assert!(rep.constant <= 6f64.sqrt() + 1e-12);
        assert!(rep.min_slack >= -1e-12);
    }

    #[test]
    fn constant_signal_full_band() {
        let f = Signal::constant(8, 1.0);
        let model = DominationModel::Walsh { omega: "0:256".parse().unwrap() };
        let cert = verify_pointwise_domination(&f, &model).unwrap();
        assert!(cert.c_star <= 1.0 + 1e-9);
    }

    #[test]
    fn domination_is_homogeneous() {
        let f = gaussian_signal_supported(8, 0.25, 0.75, &mut SplitMix64::new(12));
        let model = DominationModel::Walsh { omega: "0:7,9:40,100:256".parse().unwrap() };
        let a = verify_pointwise_domination(&f, &model).unwrap();
        let b = verify_pointwise_domination(&f.scaled(2.0), &model).unwrap();
        assert!((a.c_star - b.c_star).abs() < 1e-12 * a.c_star);
        assert!(a.c_wave_packet <= 2.0 * a.carleson_norm.sqrt() + 1e-9);
    }

    #[test]
    fn fourier_models_run() {
        let f = gaussian_signal_supported(8, 0.25, 0.75, &mut SplitMix64::new(13));
        for model in [
            DominationModel::FourierIndicator { omega: BandFamily::lacunary(8), packets: 4, seed: 1 },
            DominationModel::FourierMultiplier { omega: BandFamily::lacunary(8), packets: 4, seed: 1 },
        ] {
            let cert = verify_pointwise_domination(&f, &model).unwrap();
            assert!(cert.c_star.is_finite() && cert.c_star > 0.0);
            assert!(cert.eta >= 0.75);
            assert!(cert.construction.min_slack >= -1e-9);
        }
    }

    #[test]
    fn weak_norm_of_indicator() {
        let w = WeightGrid::new(Signal::constant(6, 1.0)).unwrap();
        let g = Signal::indicator(6, &GridInterval::cells(0, 16, 6).unwrap()).scaled(3.0);
        assert!((weak_norm(&g, &w, 2.0) - 3.0 * 0.5).abs() < 1e-15);
        let w2 = WeightGrid::new(Signal::constant(6, 4.0)).unwrap();
        assert!((weak_norm(&g, &w2, 2.0) - 3.0).abs() < 1e-15);
    }

    /// Chain `[0,1) ⊃ [0,1/2) ⊃ ... ⊃ [0,2^{-(k-1)})` with unit coefficients:
    /// `A = j` on cells at depth `j`, and `A[a^2]^{1/2} = sqrt(j)`.
    #[test]
    fn good_lambda_on_a_chain() {
        let n = 6;
        let k = 5;
        let stopping: Vec<DyadicInterval> = (0..k).map(|r| DyadicInterval::standard(r, 0)).collect();
        let children: Vec<Vec<usize>> = (0..k as usize).map(|i| if i + 1 < k as usize { vec![i + 1] } else { vec![] }).collect();
        let family = family_from_stopping(n, &stopping, &children);
        let w = WeightGrid::new(Signal::constant(n, 1.0)).unwrap();
        let table = good_lambda_check(&vec![1.0; k as usize], &family, &w, &[1.0, 2.0]).unwrap();
        // Measure of {A > t} is 2^{-(floor(t))} for 0 <= t < k, by counting.
        let measure = |t: f64| -> f64 {
            if t < 0.0 {
                1.0
            } else if t >= k as f64 {
                0.0
            } else {
                (-(t.floor() + 1.0) + 1.0f64).exp2()
            }
        };
        for row in &table.rows {
            assert!((row.denominator - measure(row.lambda)).abs() < 1e-15);
            // Cells with A = j > 2 lambda and sqrt(j) <= gamma lambda.
            let mut num = 0.0;
            for j in 1..=k {
                let j = j as f64;
                if j > 2.0 * row.lambda && j.sqrt() <= row.gamma * row.lambda {
                    num += measure(j - 1.0) - measure(j);
                }
            }
            assert!((row.numerator - num).abs() < 1e-15, "{row:?}");
            assert!(row.ratio <= 1.0);
        }
        assert!(table.rows.iter().all(|r| r.lambda < k as f64));
    }

    #[test]
    fn sup_ratio_grows_with_gamma() {
        use crate::rng::cascade_signal;
        let w = WeightGrid::new(Signal::new(crate::weights::power_cells(8, 0.5).unwrap()).unwrap()).unwrap();
        for seed in 0..3 {
            let mut rng = SplitMix64::new(seed);
            let family = principal_family(&cascade_signal(8, 0.8, &mut rng), 4.0).unwrap();
            let values: Vec<f64> = family.members.iter().map(|_| 0.5 + 0.5 * crate::rng::uniform(&mut rng)).collect();
            let table = good_lambda_check(&values, &family, &w, &[1.0, 2.0, 4.0, 8.0]).unwrap();
            // The numerator's set only grows with gamma.
            assert!(table.sup_ratio.windows(2).all(|p| p[0] <= p[1]), "{:?}", table.sup_ratio);
            if let Some(fit) = table.sup_fit {
                assert!(fit.slope >= 0.0);
            }
        }
    }
}
