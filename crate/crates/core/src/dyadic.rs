//! Shifted dyadic grids with exact rational endpoints.
//!
//! The grid `D^j` (`j` in `{0, 1, 2}`) consists of the intervals
//! `2^-n [k + (-1)^n j/3, k + 1 + (-1)^n j/3)`. Every endpoint of every grid
//! with scale in `[MIN_SCALE, MAX_SCALE]` is an integer multiple of
//! `1 / (3 * 2^48)`, so coordinates are stored as `i128` numerators over that
//! fixed denominator and all comparisons are exact.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominator of every [`GridPoint`].
pub const DEN: i128 = 3 << 48;
pub const MIN_SCALE: i32 = -20;
pub const MAX_SCALE: i32 = 40;

const DEN_POW2: u32 = 48;

/// Exact coordinate `num / (3 * 2^48)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridPoint(pub i128);

impl GridPoint {
    pub const ZERO: GridPoint = GridPoint(0);
    pub const ONE: GridPoint = GridPoint(DEN);

    /// The dyadic rational `num * 2^-scale`.
    pub fn dyadic(num: i64, scale: i32) -> Self {
        assert!(scale <= DEN_POW2 as i32 && scale >= MIN_SCALE);
        GridPoint(num as i128 * 3 * (1i128 << (DEN_POW2 as i32 - scale)))
    }

    /// `p / q` if it is representable exactly.
    pub fn ratio(p: i128, q: i128) -> Option<Self> {
        if q == 0 || (p * DEN) % q != 0 {
            None
        } else {
            Some(GridPoint(p * DEN / q))
        }
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / DEN as f64
    }

    fn reduced(self) -> (i128, i128) {
        let g = gcd(self.0.unsigned_abs(), DEN as u128) as i128;
        (self.0 / g, DEN / g)
    }
}

impl std::ops::Add for GridPoint {
    type Output = GridPoint;
    fn add(self, rhs: Self) -> Self {
        GridPoint(self.0 + rhs.0)
    }
}

impl std::ops::Sub for GridPoint {
    type Output = GridPoint;
    fn sub(self, rhs: Self) -> Self {
        GridPoint(self.0 - rhs.0)
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (p, q) = self.reduced();
        if q == 1 {
            write!(f, "{p}")
        } else {
            write!(f, "{p}/{q}")
        }
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn sign(scale: i32) -> i64 {
    if scale.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

/// Interval of the shifted grid `D^grid` with length `2^-scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub grid: u8,
    pub scale: i32,
    pub pos: i64,
}

impl PartialOrd for DyadicInterval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DyadicInterval {
    /// Coarse to fine, then left to right.
    fn cmp(&self, other: &Self) -> Ordering {
        (self.grid, self.scale, self.lo()).cmp(&(other.grid, other.scale, other.lo()))
    }
}

impl DyadicInterval {
    pub fn new(grid: u8, scale: i32, pos: i64) -> Result<Self> {
        if grid > 2 {
            return Err(Error::Range(format!("grid index {grid} outside {{0,1,2}}")));
        }
        if !(MIN_SCALE..=MAX_SCALE).contains(&scale) {
            return Err(Error::Range(format!(
                "scale {scale} outside [{MIN_SCALE}, {MAX_SCALE}]"
            )));
        }
        Ok(Self { grid, scale, pos })
    }

    /// Standard dyadic interval `[pos 2^-scale, (pos+1) 2^-scale)`.
    pub fn standard(scale: i32, pos: i64) -> Self {
        Self::new(0, scale, pos).expect("scale in range")
    }

    /// Unit of the scale, `2^-scale` as a numerator over [`DEN`].
    fn unit(scale: i32) -> i128 {
        1i128 << (DEN_POW2 as i32 - scale)
    }

    fn shift_term(&self) -> i64 {
        sign(self.scale) * self.grid as i64
    }

    pub fn lo(&self) -> GridPoint {
        GridPoint(Self::unit(self.scale) * (3 * self.pos as i128 + self.shift_term() as i128))
    }

    pub fn hi(&self) -> GridPoint {
        GridPoint(self.lo().0 + 3 * Self::unit(self.scale))
    }

    pub fn len(&self) -> f64 {
        (self.scale as f64).exp2().recip()
    }

    pub fn center(&self) -> f64 {
        (self.lo().to_f64() + self.hi().to_f64()) / 2.0
    }

    pub fn interval(&self) -> GridInterval {
        GridInterval {
            lo: self.lo(),
            hi: self.hi(),
        }
    }

    pub fn parent(&self) -> Self {
        Self {
            grid: self.grid,
            scale: self.scale - 1,
            pos: (self.pos + self.shift_term()).div_euclid(2),
        }
    }

    /// Left and right child.
    pub fn children(&self) -> [Self; 2] {
        let first = 2 * self.pos - sign(self.scale + 1) * self.grid as i64;
        [0, 1].map(|d| Self {
            grid: self.grid,
            scale: self.scale + 1,
            pos: first + d,
        })
    }

    /// The ancestor at the coarser `scale` (itself if equal).
    pub fn ancestor(&self, scale: i32) -> Self {
        assert!(scale <= self.scale);
        if self.grid == 0 {
            return Self {
                grid: 0,
                scale,
                pos: self.pos >> (self.scale - scale),
            };
        }
        let mut out = *self;
        while out.scale > scale {
            out = out.parent();
        }
        out
    }

    /// `Q^{(k)}`, the `k`-th dyadic ancestor.
    pub fn ancestor_up(&self, k: u32) -> Self {
        self.ancestor(self.scale - k as i32)
    }

    /// `Q + j * len(Q)`.
    pub fn translate(&self, j: i64) -> Self {
        Self {
            pos: self.pos + j,
            ..*self
        }
    }

    pub fn contains(&self, other: &Self) -> bool {
        self.grid == other.grid
            && other.scale >= self.scale
            && other.ancestor(self.scale).pos == self.pos
    }

    /// The interval of `D^grid` at `scale` containing `x`.
    pub fn locate(x: GridPoint, grid: u8, scale: i32) -> Self {
        let unit = Self::unit(scale);
        let shifted = x.0 - unit * sign(scale) as i128 * grid as i128;
        Self {
            grid,
            scale,
            pos: shifted.div_euclid(3 * unit) as i64,
        }
    }

    /// Node index in a complete binary tree over `D^0([0,1))`.
    pub fn node(&self) -> usize {
        debug_assert!(self.grid == 0 && self.scale >= 0);
        (1usize << self.scale) - 1 + self.pos as usize
    }

    pub fn from_node(node: usize) -> Self {
        let scale = (usize::BITS - 1 - (node + 1).leading_zeros()) as i32;
        Self::standard(scale, (node + 1 - (1 << scale)) as i64)
    }

    /// Grid cells at resolution `2^-n` covered by this standard interval.
    pub fn cell_range(&self, n: u32) -> std::ops::Range<usize> {
        debug_assert!(self.grid == 0 && self.scale >= 0 && self.scale as u32 <= n);
        let w = 1usize << (n - self.scale as u32);
        let start = self.pos as usize * w;
        start..start + w
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "D{}[{}, {})",
            self.grid,
            self.lo(),
            self.hi()
        )
    }
}

/// Half-open interval `[lo, hi)` with exact endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "FractionPair", into = "FractionPair")]
pub struct GridInterval {
    pub lo: GridPoint,
    pub hi: GridPoint,
}

#[derive(Serialize, Deserialize)]
struct FractionPair {
    lo_num: i128,
    lo_den: i128,
    hi_num: i128,
    hi_den: i128,
}

impl From<GridInterval> for FractionPair {
    fn from(iv: GridInterval) -> Self {
        let (lo_num, lo_den) = iv.lo.reduced();
        let (hi_num, hi_den) = iv.hi.reduced();
        Self {
            lo_num,
            lo_den,
            hi_num,
            hi_den,
        }
    }
}

impl TryFrom<FractionPair> for GridInterval {
    type Error = Error;
    fn try_from(p: FractionPair) -> Result<Self> {
        let lo = GridPoint::ratio(p.lo_num, p.lo_den)
            .ok_or_else(|| Error::Range(format!("{}/{} not on the grid", p.lo_num, p.lo_den)))?;
        let hi = GridPoint::ratio(p.hi_num, p.hi_den)
            .ok_or_else(|| Error::Range(format!("{}/{} not on the grid", p.hi_num, p.hi_den)))?;
        GridInterval::new(lo, hi)
    }
}

impl GridInterval {
    pub fn new(lo: GridPoint, hi: GridPoint) -> Result<Self> {
        if lo >= hi {
            return Err(Error::Domain(format!("empty interval [{lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    /// `[a 2^-n, b 2^-n)`.
    pub fn cells(a: i64, b: i64, n: u32) -> Result<Self> {
        Self::new(GridPoint::dyadic(a, n as i32), GridPoint::dyadic(b, n as i32))
    }

    pub fn unit() -> Self {
        Self {
            lo: GridPoint::ZERO,
            hi: GridPoint::ONE,
        }
    }

    pub fn len(&self) -> f64 {
        (self.hi - self.lo).to_f64()
    }

    pub fn len_exact(&self) -> GridPoint {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        (self.lo.to_f64() + self.hi.to_f64()) / 2.0
    }

    pub fn contains(&self, other: &Self) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn contains_point(&self, x: GridPoint) -> bool {
        self.lo <= x && x < self.hi
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }

    /// `c * I`, same center, `c` times the length.
    pub fn dilate(&self, c: i64) -> Result<Self> {
        let c = c as i128;
        let sum = self.lo.0 + self.hi.0;
        let len = self.hi.0 - self.lo.0;
        let lo2 = sum - c * len;
        if lo2 % 2 != 0 {
            return Err(Error::Range(format!("{c}-fold dilate of {self} leaves the grid")));
        }
        Self::new(GridPoint(lo2 / 2), GridPoint((sum + c * len) / 2))
    }

    /// Cells of resolution `2^-n` lying inside the interval, as an unwrapped
    /// half-open index range (reduce mod `2^n` for torus positions).
    pub fn inner_cells(&self, n: u32) -> std::ops::Range<i64> {
        let cell = 3i128 << (DEN_POW2 - n);
        let first = (self.lo.0 + cell - 1).div_euclid(cell);
        let last = self.hi.0.div_euclid(cell);
        first as i64..(last as i64).max(first as i64)
    }

    /// Whether both endpoints are multiples of `2^-n`.
    pub fn on_cells(&self, n: u32) -> bool {
        let cell = 3i128 << (DEN_POW2 - n);
        self.lo.0 % cell == 0 && self.hi.0 % cell == 0
    }

    /// Measure of the image on the torus, `min(len, 1)`.
    pub fn torus_len(&self) -> f64 {
        self.len().min(1.0)
    }

    /// Torus cell indices inside the interval, each listed once.
    pub fn torus_cells(&self, n: u32) -> Vec<usize> {
        let big = 1i64 << n;
        let range = self.inner_cells(n);
        if range.end - range.start >= big {
            return (0..big as usize).collect();
        }
        let mut cells: Vec<usize> = range.map(|c| c.rem_euclid(big) as usize).collect();
        cells.sort_unstable();
        cells
    }
}

impl fmt::Display for GridInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.lo, self.hi)
    }
}

// ---------------------------------------------------------------------------
// Decomposition of the grid around a fixed interval.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecompositionClass {
    /// Inside `Q^{(0,j)}`, `|j| <= 1`.
    Near,
    /// `Q^{(k,j)}` itself, `k >= 1`, `|j| <= 1`.
    Ancestor,
    /// Inside `Q^{(k,j)}`, `k >= 0`, `2 <= |j| <= 3`.
    Far,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub class: DecompositionClass,
    pub k: u32,
    pub j: i64,
}

/// Every class label applying to `interval` relative to `q` with ancestors up
/// to `depth`.
pub fn classify_all(interval: &DyadicInterval, q: &DyadicInterval, depth: u32) -> Vec<Classification> {
    let mut out = Vec::new();
    if interval.grid != 0 || q.grid != 0 {
        return out;
    }
    for k in 0..=depth {
        let top = q.ancestor_up(k);
        if interval.scale < top.scale {
            continue;
        }
        let j = interval.ancestor(top.scale).pos - top.pos;
        match (k, j.abs()) {
            (0, 0..=1) => out.push(Classification {
                class: DecompositionClass::Near,
                k,
                j,
            }),
            (_, 0..=1) if interval.scale == top.scale => out.push(Classification {
                class: DecompositionClass::Ancestor,
                k,
                j,
            }),
            (_, 2..=3) => out.push(Classification {
                class: DecompositionClass::Far,
                k,
                j,
            }),
            _ => {}
        }
    }
    out
}

/// First class label of `interval`, if any.
pub fn classify(interval: &DyadicInterval, q: &DyadicInterval, depth: u32) -> Option<Classification> {
    classify_all(interval, q, depth).into_iter().next()
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub root: DyadicInterval,
    pub depth: u32,
    pub floor_scale: i32,
    pub enumerated: usize,
    pub near: usize,
    pub ancestors: usize,
    pub far: usize,
    /// Intervals reached by more than one `Far` root (harmless, same union).
    pub far_repeats: usize,
    pub unclassified: Vec<DyadicInterval>,
    pub duplicates: Vec<DyadicInterval>,
}

impl DecompositionReport {
    pub fn is_partition(&self) -> bool {
        self.unclassified.is_empty() && self.duplicates.is_empty()
    }
}

/// Sweep every standard dyadic interval with scale between `scale(Q) - depth`
/// and `floor_scale` lying inside `Q^{(depth,-3)} ∪ ... ∪ Q^{(depth,3)}`, and
/// sort each into the three unions.
pub fn decompose_universe(q: &DyadicInterval, depth: u32, floor_scale: i32) -> Result<DecompositionReport> {
    if q.grid != 0 {
        return Err(Error::Domain("root must belong to the standard grid".into()));
    }
    let top_scale = q.scale - depth as i32;
    if top_scale < MIN_SCALE || floor_scale > MAX_SCALE || floor_scale < q.scale {
        return Err(Error::Range(format!(
            "scales [{top_scale}, {floor_scale}] outside [{MIN_SCALE}, {MAX_SCALE}] or floor above the root"
        )));
    }
    if floor_scale - top_scale > 24 {
        return Err(Error::Range("universe too large to enumerate".into()));
    }
    let top = q.ancestor_up(depth);
    let mut report = DecompositionReport {
        root: *q,
        depth,
        floor_scale,
        enumerated: 0,
        near: 0,
        ancestors: 0,
        far: 0,
        far_repeats: 0,
        unclassified: Vec::new(),
        duplicates: Vec::new(),
    };
    for scale in top_scale..=floor_scale {
        let w = 1i64 << (scale - top_scale);
        for pos in (top.pos - 3) * w..(top.pos + 4) * w {
            let iv = DyadicInterval::standard(scale, pos);
            report.enumerated += 1;
            let labels = classify_all(&iv, q, depth);
            let near = labels.iter().any(|c| c.class == DecompositionClass::Near);
            let anc = labels.iter().any(|c| c.class == DecompositionClass::Ancestor);
            let far = labels.iter().filter(|c| c.class == DecompositionClass::Far).count();
            let unions = near as usize + anc as usize + (far > 0) as usize;
            report.near += near as usize;
            report.ancestors += anc as usize;
            report.far += (far > 0) as usize;
            report.far_repeats += far.saturating_sub(1);
            match unions {
                0 => report.unclassified.push(iv),
                1 => {}
                _ => report.duplicates.push(iv),
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Whitney covers.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhitneyParams {
    /// Members satisfy `inner * alpha ⊂ omega`.
    pub inner: i64,
    /// Members satisfy `outer * alpha ⊄ omega`.
    pub outer: i64,
    /// Finest scale searched.
    pub floor_scale: i32,
}

impl Default for WhitneyParams {
    fn default() -> Self {
        Self {
            inner: 343,
            outer: 2401,
            floor_scale: 30,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WhitneyCover {
    /// Each subcollection holds at most one member per scale.
    pub subcollections: Vec<Vec<DyadicInterval>>,
    /// Set when `omega` is shorter than one cell of the floor scale.
    pub warning: Option<String>,
}

impl WhitneyCover {
    pub fn members(&self) -> impl Iterator<Item = &DyadicInterval> {
        self.subcollections.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.subcollections.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Positions at `scale` whose `c`-fold dilate fits inside `omega`.
fn fitting_positions(omega: &GridInterval, c: i64, scale: i32) -> Option<(i64, i64)> {
    // pos*u*3 + (3u - 3cu)/2 >= lo  and  pos*u*3 + (3u + 3cu)/2 <= hi, u = 2^(48-scale).
    let u = DyadicInterval::unit(scale);
    let c = c as i128;
    let lo_off = 3 * u * (1 - c);
    let hi_off = 3 * u * (1 + c);
    let step = 6 * u;
    let first = (2 * omega.lo.0 - lo_off + step - 1).div_euclid(step);
    let last = (2 * omega.hi.0 - hi_off).div_euclid(step);
    (first <= last).then_some((first as i64, last as i64))
}

/// Maximal standard dyadic intervals `alpha` with `inner * alpha ⊂ omega`,
/// down to `params.floor_scale`, grouped so each group has at most one member
/// per scale.
pub fn whitney_cover(omega: &GridInterval, params: &WhitneyParams) -> Result<WhitneyCover> {
    if params.inner < 1 || params.inner % 2 == 0 || params.outer <= params.inner {
        return Err(Error::Config("dilation constants must be odd with inner < outer".into()));
    }
    if params.floor_scale > 46 {
        return Err(Error::Range("floor scale too fine for exact dilates".into()));
    }
    let cell = GridPoint::dyadic(1, params.floor_scale);
    if omega.len_exact() < cell {
        return Ok(WhitneyCover {
            subcollections: Vec::new(),
            warning: Some(format!("{omega} is shorter than one cell of scale {}", params.floor_scale)),
        });
    }
    let mut start = MIN_SCALE;
    while start < params.floor_scale
        && GridPoint::dyadic(params.inner, start) > omega.len_exact()
    {
        start += 1;
    }
    let mut subcollections: Vec<Vec<DyadicInterval>> = Vec::new();
    let mut parent_range = None;
    for scale in start..=params.floor_scale {
        let range = fitting_positions(omega, params.inner, scale);
        if let Some((a, b)) = range {
            // Children of fitting parents form one run; only the ends remain.
            let fresh: Vec<i64> = match parent_range {
                Some((pa, pb)) => {
                    let (ca, cb) = (2 * pa, 2 * pb + 1);
                    (a..=b.min(ca - 1)).chain(a.max(cb + 1)..=b).collect()
                }
                None => (a..=b).collect(),
            };
            let mut rank = 0;
            for pos in fresh {
                if subcollections.len() <= rank {
                    subcollections.push(Vec::new());
                }
                subcollections[rank].push(DyadicInterval::standard(scale, pos));
                rank += 1;
            }
        }
        parent_range = range;
    }
    Ok(WhitneyCover {
        subcollections,
        warning: None,
    })
}

/// Both Whitney containment properties for one member.
pub fn whitney_member_ok(alpha: &DyadicInterval, omega: &GridInterval, params: &WhitneyParams) -> bool {
    let inside = alpha
        .interval()
        .dilate(params.inner)
        .is_ok_and(|d| omega.contains(&d));
    let outside = alpha
        .interval()
        .dilate(params.outer)
        .map_or(true, |d| !omega.contains(&d));
    inside && outside
}

// ---------------------------------------------------------------------------
// Sparse families on the torus.

/// Intervals on the torus, each carrying a set of cells it owns.
#[derive(Debug, Clone, Serialize)]
pub struct SparseFamily {
    /// Cells per unit length are `2^n`.
    pub n: u32,
    pub members: Vec<GridInterval>,
    /// Sorted cell indices owned by each member.
    pub carving: Vec<Vec<usize>>,
    pub eta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SparseVerdict {
    pub ok: bool,
    pub min_ratio: f64,
    pub diagnostics: Vec<String>,
}

/// Checks ownership (`E_I ⊂ I`), proportion (`|E_I| >= eta |I|`) and
/// pairwise disjointness of the carving sets.
pub fn verify_sparse(family: &SparseFamily) -> SparseVerdict {
    let cells = 1usize << family.n;
    let mut owner: Vec<Option<usize>> = vec![None; cells];
    let mut diagnostics = Vec::new();
    let mut min_ratio = f64::INFINITY;
    if family.members.len() != family.carving.len() {
        diagnostics.push(format!(
            "{} members but {} carving sets",
            family.members.len(),
            family.carving.len()
        ));
    }
    for (idx, (member, set)) in family.members.iter().zip(&family.carving).enumerate() {
        let inside = member.torus_cells(family.n);
        for &c in set {
            if c >= cells {
                diagnostics.push(format!("member {idx} {member}: cell {c} out of range"));
                continue;
            }
            if inside.binary_search(&c).is_err() {
                diagnostics.push(format!("member {idx} {member}: cell {c} lies outside the interval"));
            }
            match owner[c] {
                Some(prev) => diagnostics.push(format!(
                    "member {idx} {member}: cell {c} already owned by member {prev}"
                )),
                None => owner[c] = Some(idx),
            }
        }
        let ratio = set.len() as f64 / cells as f64 / member.torus_len();
        min_ratio = min_ratio.min(ratio);
        if ratio < family.eta {
            diagnostics.push(format!(
                "member {idx} {member}: |E|/|I| = {ratio} below eta = {}",
                family.eta
            ));
        }
    }
    SparseVerdict {
        ok: diagnostics.is_empty(),
        min_ratio,
        diagnostics,
    }
}

/// `R(Q)`: the dilates `5 Q^{(k)}` for `k = 0, 1, ...` until one covers the
/// torus, carved by consecutive differences. `Q` is a standard interval
/// with `scale(Q) <= n`.
pub fn dilate_family(q: &DyadicInterval, n: u32) -> Result<SparseFamily> {
    if q.grid != 0 || q.scale < 0 || q.scale as u32 > n || q.pos < 0 || q.pos >= 1 << q.scale {
        return Err(Error::Domain(format!("{q} is not a cell-aligned interval of [0,1)")));
    }
    let big = 1usize << n;
    let mut members = Vec::new();
    let mut carving = Vec::new();
    let mut owned = vec![false; big];
    for k in 0..=q.scale as u32 {
        let anc = q.ancestor_up(k);
        let dil = anc.interval().dilate(5)?;
        let covers = dil.len() >= 1.0;
        let member = if covers { GridInterval::unit() } else { dil };
        let mut set = Vec::new();
        for c in member.torus_cells(n) {
            if !owned[c] {
                owned[c] = true;
                set.push(c);
            }
        }
        members.push(member);
        carving.push(set);
        if covers {
            break;
        }
    }
    let mut family = SparseFamily {
        n,
        members,
        carving,
        eta: 1.0,
    };
    family.eta = verify_sparse(&family).min_ratio.min(1.0);
    Ok(family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_of_shifted_grids() {
        let a = DyadicInterval::new(1, 1, 0).unwrap();
        assert_eq!(a.lo(), GridPoint::ratio(-1, 6).unwrap());
        assert_eq!(a.hi(), GridPoint::ratio(1, 3).unwrap());
        let b = DyadicInterval::new(2, 2, 1).unwrap();
        assert_eq!(b.lo(), GridPoint::ratio(5, 12).unwrap());
    }

    #[test]
    fn parent_and_children_agree() {
        for grid in 0..3u8 {
            for scale in -3..6 {
                for pos in -10..10 {
                    let iv = DyadicInterval::new(grid, scale, pos).unwrap();
                    let p = iv.parent();
                    assert!(p.interval().contains(&iv.interval()), "{iv} not in {p}");
                    assert!(p.children().contains(&iv));
                    for c in iv.children() {
                        assert_eq!(c.parent(), iv);
                    }
                }
            }
        }
    }

    #[test]
    fn locate_finds_containing_interval() {
        let x = GridPoint::ratio(7, 17 * 16).unwrap_or(GridPoint::dyadic(7, 9));
        for grid in 0..3u8 {
            for scale in 0..12 {
                let iv = DyadicInterval::locate(x, grid, scale);
                assert!(iv.interval().contains_point(x));
            }
        }
    }

    #[test]
    fn node_roundtrip() {
        for node in 0..255 {
            assert_eq!(DyadicInterval::from_node(node).node(), node);
        }
        assert_eq!(DyadicInterval::standard(3, 5).node(), 12);
    }

    #[test]
    fn root_is_near() {
        let q = DyadicInterval::standard(5, 9);
        let c = classify(&q, &q, 4).unwrap();
        assert_eq!((c.class, c.k, c.j), (DecompositionClass::Near, 0, 0));
    }

    #[test]
    fn translated_ancestor_is_singleton() {
        let q = DyadicInterval::standard(6, 20);
        let target = q.ancestor_up(3).translate(1);
        let labels = classify_all(&target, &q, 6);
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].class, DecompositionClass::Ancestor);
        assert_eq!((labels[0].k, labels[0].j), (3, 1));
    }

    #[test]
    fn decomposition_is_partition() {
        for (scale, pos) in [(4, 0), (4, 7), (6, 33), (10, 513)] {
            let q = DyadicInterval::standard(scale, pos);
            let report = decompose_universe(&q, 6, 10.max(scale)).unwrap();
            assert!(report.is_partition(), "{report:?}");
            assert_eq!(report.enumerated, report.near + report.ancestors + report.far);
        }
    }

    #[test]
    fn decomposition_rejects_deep_universe() {
        let q = DyadicInterval::standard(0, 0);
        assert!(matches!(decompose_universe(&q, 30, 4), Err(Error::Range(_))));
    }

    #[test]
    fn dilation_is_centered() {
        let iv = DyadicInterval::standard(3, 2).interval();
        let d = iv.dilate(5).unwrap();
        assert_eq!(d.lo, GridPoint::ratio(0, 1).unwrap());
        assert_eq!(d.hi, GridPoint::ratio(5, 8).unwrap());
    }

    #[test]
    fn whitney_empty_when_nothing_fits() {
        let omega = DyadicInterval::standard(1, 0).interval();
        let params = WhitneyParams {
            floor_scale: 8,
            ..Default::default()
        };
        let cover = whitney_cover(&omega, &params).unwrap();
        assert!(cover.is_empty());
        assert!(cover.warning.is_none());
    }

    #[test]
    fn whitney_warns_on_tiny_omega() {
        let omega = GridInterval::cells(3, 4, 12).unwrap();
        let params = WhitneyParams {
            floor_scale: 10,
            ..Default::default()
        };
        let cover = whitney_cover(&omega, &params).unwrap();
        assert!(cover.is_empty() && cover.warning.is_some());
    }

    #[test]
    fn whitney_of_unit_interval() {
        let params = WhitneyParams {
            floor_scale: 24,
            ..Default::default()
        };
        let cover = whitney_cover(&GridInterval::unit(), &params).unwrap();
        assert!(!cover.is_empty());
        let mut all: Vec<_> = cover.members().copied().collect();
        for m in &all {
            assert!(whitney_member_ok(m, &GridInterval::unit(), &params), "{m}");
        }
        all.sort_by_key(|m| m.lo());
        for w in all.windows(2) {
            assert!(w[0].hi() <= w[1].lo());
        }
        for sub in &cover.subcollections {
            let mut scales: Vec<_> = sub.iter().map(|m| m.scale).collect();
            scales.dedup();
            assert_eq!(scales.len(), sub.len());
        }
        // Members hug both endpoints, shrinking toward them.
        let near_zero = all.first().unwrap();
        assert_eq!(near_zero.scale, params.floor_scale);
    }

    #[test]
    fn dilate_family_is_sparse() {
        for (scale, pos) in [(0, 0), (3, 2), (7, 100), (10, 1023)] {
            let q = DyadicInterval::standard(scale, pos);
            let fam = dilate_family(&q, 10).unwrap();
            let v = verify_sparse(&fam);
            assert!(v.ok, "{:?}", v.diagnostics);
            assert!(fam.eta >= 3.0 / 8.0);
        }
    }

    #[test]
    fn identical_members_are_not_sparse() {
        let iv = GridInterval::cells(0, 4, 4).unwrap();
        let fam = SparseFamily {
            n: 4,
            members: vec![iv, iv],
            carving: vec![vec![0, 1, 2], vec![0, 1, 2]],
            eta: 0.5,
        };
        let v = verify_sparse(&fam);
        assert!(!v.ok);
        assert!(v.diagnostics[0].contains("member 1"));
    }

    #[test]
    fn interval_json_shapes() {
        let d = DyadicInterval::standard(3, 5);
        assert_eq!(
            serde_json::to_string(&d).unwrap(),
            r#"{"grid":0,"scale":3,"pos":5}"#
        );
        let g = DyadicInterval::new(1, 1, 0).unwrap().interval();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"lo_num":-1,"lo_den":6,"hi_num":1,"hi_den":3}"#);
        let back: GridInterval = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<GridInterval>(r#"{"lo_num":0,"lo_den":1,"hi_num":1,"hi_den":5}"#).is_err());
    }

    fn arb_interval(grid: u8) -> impl Strategy<Value = DyadicInterval> {
        (-4i32..14, -3000i64..3000).prop_map(move |(scale, pos)| DyadicInterval::new(grid, scale, pos).unwrap())
    }

    proptest! {
        #[test]
        fn nested_or_disjoint(grid in 0u8..3, a in arb_interval(0), b in arb_interval(0)) {
            let a = DyadicInterval { grid, ..a };
            let b = DyadicInterval { grid, ..b };
            let (ia, ib) = (a.interval(), b.interval());
            let nested = ia.contains(&ib) || ib.contains(&ia);
            prop_assert!(nested || !ia.intersects(&ib));
            prop_assert_eq!(a.contains(&b), ia.contains(&ib));
        }

        #[test]
        fn translates_stay_in_grid(grid in 0u8..3, q in arb_interval(0), j in -5i64..5) {
            let q = DyadicInterval { grid, ..q };
            let t = q.translate(j);
            prop_assert_eq!(t.lo().0 - q.lo().0, j as i128 * (q.hi().0 - q.lo().0));
            prop_assert_eq!(DyadicInterval::locate(t.lo(), grid, t.scale), t);
        }

        #[test]
        fn whitney_property_holds(a in 0i64..1 << 12, len in 1i64..1 << 12) {
            let b = (a + len).min(1 << 12);
            prop_assume!(a < b);
            let omega = GridInterval::cells(a, b, 12).unwrap();
            let params = WhitneyParams { floor_scale: 22, ..Default::default() };
            let cover = whitney_cover(&omega, &params).unwrap();
            for m in cover.members() {
                prop_assert!(whitney_member_ok(m, &omega, &params));
            }
        }
    }
}
