//! Convex-hull inequalities for `w = phi(a . y + offset)` over a box, and their separation.
//!
//! Everything is derived in normalized coordinates `z_i in [0, 1]` where
//! `t = a . y + offset = L + r . z` with `r_i > 0`, then mapped back to `y`.
//! The inequality families are:
//!
//! * chain families: for index sets `I` and a pivot `o` with `l_I >= theta > l_I - r_o`,
//!   `w <= v0 + sum_{i in I} r_i z_i + (l_I - theta) z_o` (upper) and its mirror (lower);
//! * pinned secants: for `K` with `L + r(K) <= b`,
//!   `w <= b + (c - b) / (c - L - r(K)) * sum_{i not in K} r_i z_i` for a clip to `[b, c]`,
//!   mirrored for the lower side and mapped through `w = t - clip(t)` for soft-thresholding.
//!
//! Together with a handful of simple rows they describe the convex hull exactly.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HullKind {
    SoftThreshold { lambda: f64 },
    Relu,
    SatLin { b: f64, c: f64 },
}

impl HullKind {
    pub fn apply(&self, t: f64) -> f64 {
        match *self {
            HullKind::SoftThreshold { lambda } => {
                if t > lambda {
                    t - lambda
                } else if t < -lambda {
                    t + lambda
                } else {
                    0.0
                }
            }
            HullKind::Relu => t.max(0.0),
            HullKind::SatLin { b, c } => t.clamp(b, c),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HullKind::SoftThreshold { .. } => "soft_threshold",
            HullKind::Relu => "relu",
            HullKind::SatLin { .. } => "satlin",
        }
    }
}

/// One scalar piecewise-affine component over a box of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct HullQuery {
    pub a: Vec<f64>,
    pub offset: f64,
    pub y_lo: Vec<f64>,
    pub y_hi: Vec<f64>,
    pub kind: HullKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Base,
    UpperChain,
    LowerChain,
    UpperSecant,
    LowerSecant,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Base => "base",
            Family::UpperChain => "upper_chain",
            Family::LowerChain => "lower_chain",
            Family::UpperSecant => "upper_secant",
            Family::LowerSecant => "lower_secant",
        }
    }
}

/// `coef_y . y + coef_w * w <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct HullCut {
    pub coef_y: Vec<f64>,
    pub coef_w: f64,
    pub rhs: f64,
    pub family: Family,
    /// Size of the index set that produced the row.
    pub index_size: usize,
}

impl HullCut {
    pub fn violation(&self, y: &[f64], w: f64) -> f64 {
        crate::linalg::dot(&self.coef_y, y) + self.coef_w * w - self.rhs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Classification {
    /// `w = slope * t + shift` on the whole box.
    Fixed { slope: f64, shift: f64 },
    General,
}

/// Normalized coordinates of a query.
#[derive(Debug, Clone)]
struct ZSpace {
    n: usize,
    active: Vec<usize>,
    l0: Vec<f64>,
    width: Vec<f64>,
    r: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl ZSpace {
    fn new(q: &HullQuery) -> Self {
        let n = q.a.len();
        let mut active = Vec::new();
        let mut l0 = Vec::new();
        let mut width = Vec::new();
        let mut r = Vec::new();
        let mut lo = q.offset;
        for i in 0..n {
            let a = q.a[i];
            if a == 0.0 {
                continue;
            }
            let (l, u) = if a > 0.0 { (q.y_lo[i], q.y_hi[i]) } else { (q.y_hi[i], q.y_lo[i]) };
            lo += a * l;
            let ri = a * (u - l);
            if ri > 0.0 {
                active.push(i);
                l0.push(l);
                width.push(u - l);
                r.push(ri);
            }
        }
        let hi = lo + r.iter().sum::<f64>();
        Self { n, active, l0, width, r, lo, hi }
    }

    fn z_of(&self, y: &[f64]) -> Vec<f64> {
        self.active
            .iter()
            .enumerate()
            .map(|(j, &i)| ((y[i] - self.l0[j]) / self.width[j]).clamp(0.0, 1.0))
            .collect()
    }

    fn to_y(&self, row: ZRow, family: Family, index_size: usize) -> HullCut {
        let mut coef_y = vec![0.0; self.n];
        let mut rhs = row.rhs;
        for (j, &i) in self.active.iter().enumerate() {
            coef_y[i] = row.cz[j] / self.width[j];
            rhs += row.cz[j] * self.l0[j] / self.width[j];
        }
        HullCut { coef_y, coef_w: row.cw, rhs, family, index_size }
    }
}

/// `cz . z + cw * w <= rhs` in normalized coordinates.
#[derive(Debug, Clone)]
struct ZRow {
    cz: Vec<f64>,
    cw: f64,
    rhs: f64,
}

impl ZRow {
    fn le(constant: f64, lin: Vec<f64>) -> Self {
        // w <= constant + lin . z
        Self { cz: lin.iter().map(|v| -v).collect(), cw: 1.0, rhs: constant }
    }

    fn ge(constant: f64, lin: Vec<f64>) -> Self {
        // w >= constant + lin . z
        Self { cz: lin, cw: -1.0, rhs: -constant }
    }

    fn value(&self, z: &[f64], w: f64) -> f64 {
        crate::linalg::dot(&self.cz, z) + self.cw * w - self.rhs
    }

    /// Row in coordinates `(1 - z, -w)` expressed back in `(z, w)`.
    fn mirrored(self) -> Self {
        let s: f64 = self.cz.iter().sum();
        Self { cz: self.cz.iter().map(|v| -v).collect(), cw: -self.cw, rhs: self.rhs - s }
    }

    /// Row in `(z, s)` with `s = t - w`, `t = lo + r . z`, expressed in `(z, w)`.
    fn through_residual(self, lo: f64, r: &[f64]) -> Self {
        let cs = self.cw;
        Self {
            cz: self.cz.iter().zip(r).map(|(c, ri)| c + cs * ri).collect(),
            cw: -cs,
            rhs: self.rhs - cs * lo,
        }
    }
}

/// Range `[L, U]` of `t = a . y + offset` over the box.
pub fn t_range(q: &HullQuery) -> (f64, f64) {
    let z = ZSpace::new(q);
    (z.lo, z.hi)
}

pub fn classify(q: &HullQuery) -> Classification {
    let (lo, hi) = t_range(q);
    let fixed = |slope, shift| Classification::Fixed { slope, shift };
    match q.kind {
        HullKind::Relu if lo >= 0.0 => fixed(1.0, 0.0),
        HullKind::Relu if hi <= 0.0 => fixed(0.0, 0.0),
        HullKind::SoftThreshold { lambda } if lo >= lambda => fixed(1.0, -lambda),
        HullKind::SoftThreshold { lambda } if hi <= -lambda => fixed(1.0, lambda),
        HullKind::SoftThreshold { lambda } if lo >= -lambda && hi <= lambda => fixed(0.0, 0.0),
        HullKind::SatLin { b, .. } if hi <= b => fixed(0.0, b),
        HullKind::SatLin { c, .. } if lo >= c => fixed(0.0, c),
        HullKind::SatLin { b, c } if lo >= b && hi <= c => fixed(1.0, 0.0),
        _ => Classification::General,
    }
}

// ---- chain families -------------------------------------------------------------------

/// All members of the upper chain family with threshold `theta` and value `v0`.
fn upper_chain_all(lo: f64, r: &[f64], theta: f64, v0: f64) -> Vec<(ZRow, usize)> {
    let d = r.len();
    let total: f64 = r.iter().sum();
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << d) {
        let in_i: f64 = (0..d).filter(|&i| mask >> i & 1 == 1).map(|i| r[i]).sum();
        let l_i = lo + total - in_i;
        if l_i < theta {
            continue;
        }
        for o in 0..d {
            if mask >> o & 1 == 1 || l_i - r[o] >= theta {
                continue;
            }
            let mut lin = vec![0.0; d];
            for i in 0..d {
                if mask >> i & 1 == 1 {
                    lin[i] = r[i];
                }
            }
            lin[o] = l_i - theta;
            out.push((ZRow::le(v0, lin), mask.count_ones() as usize));
        }
    }
    out
}

/// Most violated upper chain inequality at `z` by the sorted greedy.
fn upper_chain_greedy(lo: f64, r: &[f64], theta: f64, v0: f64, z: &[f64]) -> Option<(ZRow, usize)> {
    let d = r.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]));
    let mut l_i = lo + r.iter().sum::<f64>();
    if l_i < theta {
        return None;
    }
    let mut lin = vec![0.0; d];
    let mut size = 0;
    for &i in &order {
        if l_i - r[i] >= theta {
            lin[i] = r[i];
            l_i -= r[i];
            size += 1;
        } else {
            lin[i] = l_i - theta;
            return Some((ZRow::le(v0, lin), size));
        }
    }
    None
}

// ---- pinned secant families -----------------------------------------------------------

/// Upper secants of `clip(t, b, c)`, `t = lo + r . z`, for every admissible `K`.
fn clip_secant_all(lo: f64, r: &[f64], b: f64, c: f64) -> Vec<(ZRow, usize)> {
    let d = r.len();
    (0u64..(1u64 << d))
        .filter_map(|mask| clip_secant_row(lo, r, b, c, |i| mask >> i & 1 == 1).map(|row| (row, mask.count_ones() as usize)))
        .collect()
}

fn clip_secant_row(lo: f64, r: &[f64], b: f64, c: f64, in_k: impl Fn(usize) -> bool) -> Option<ZRow> {
    let t_k = lo + (0..r.len()).filter(|&i| in_k(i)).map(|i| r[i]).sum::<f64>();
    if t_k > b {
        return None;
    }
    let rho = (c - b) / (c - t_k);
    let lin = (0..r.len()).map(|i| if in_k(i) { 0.0 } else { rho * r[i] }).collect();
    Some(ZRow::le(b, lin))
}

/// Smallest right-hand side over `K` at `z`: exact for small `d`, sorted-prefix heuristic otherwise.
fn clip_secant_separate(lo: f64, r: &[f64], b: f64, c: f64, z: &[f64], w: f64) -> Option<(ZRow, usize)> {
    const EXACT_DIM: usize = 12;
    let d = r.len();
    let best = |cands: Vec<(ZRow, usize)>| {
        cands.into_iter().max_by(|(a, _), (b2, _)| a.value(z, w).total_cmp(&b2.value(z, w)))
    };
    if d <= EXACT_DIM {
        return best(clip_secant_all(lo, r, b, c));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b2| z[b2].total_cmp(&z[a]));
    let mut in_k = vec![false; d];
    let mut cap = b - lo;
    let mut cands = Vec::new();
    let mut size = 0;
    if let Some(row) = clip_secant_row(lo, r, b, c, |i| in_k[i]) {
        cands.push((row, 0));
    }
    for &i in &order {
        if r[i] <= cap {
            in_k[i] = true;
            cap -= r[i];
            size += 1;
            if let Some(row) = clip_secant_row(lo, r, b, c, |j| in_k[j]) {
                cands.push((row, size));
            }
        }
    }
    best(cands)
}

// ---- per-kind assembly ----------------------------------------------------------------

/// Family generators for one query, in normalized coordinates.
struct Families<'a> {
    zs: &'a ZSpace,
    kind: HullKind,
}

impl Families<'_> {
    /// Simple rows that do not depend on an index set.
    fn base(&self) -> Vec<ZRow> {
        let (lo, hi, r) = (self.zs.lo, self.zs.hi, &self.zs.r);
        let d = r.len();
        let zero = || vec![0.0; d];
        let t = || r.clone();
        let chord = |scale: f64| r.iter().map(|v| v * scale).collect::<Vec<f64>>();
        let span = hi - lo;
        let mut rows = Vec::new();
        match self.kind {
            HullKind::Relu => {
                rows.push(ZRow::ge(0.0, zero()));
                rows.push(ZRow::ge(lo, t()));
                rows.push(ZRow::le(0.0, chord(hi / span)));
            }
            HullKind::SoftThreshold { lambda } => {
                rows.push(ZRow::ge(lo - lambda, t()));
                rows.push(ZRow::le(lo + lambda, t()));
                if hi <= lambda {
                    rows.push(ZRow::le(0.0, zero()));
                } else if lo >= -lambda {
                    rows.push(ZRow::le(0.0, chord((hi - lambda) / span)));
                }
                if lo >= -lambda {
                    rows.push(ZRow::ge(0.0, zero()));
                } else if hi <= lambda {
                    // w >= (L + lambda)(U - t)/(U - L) = (L + lambda) - (L + lambda)/(U - L) r.z
                    rows.push(ZRow::ge(lo + lambda, chord(-(lo + lambda) / span)));
                }
            }
            HullKind::SatLin { b, c } => {
                rows.push(ZRow::ge(b, zero()));
                rows.push(ZRow::le(c, zero()));
                if lo >= b {
                    rows.push(ZRow::le(lo, t()));
                    if hi > c {
                        rows.push(ZRow::ge(lo, chord((c - lo) / span)));
                    }
                } else if hi <= c {
                    rows.push(ZRow::le(b, chord((hi - b) / span)));
                }
                if hi <= c {
                    rows.push(ZRow::ge(lo, t()));
                }
            }
        }
        rows
    }

    /// Chain thresholds `(theta, v0)` for the upper and lower side, when present.
    fn chains(&self) -> (Option<(f64, f64)>, Option<(f64, f64)>) {
        let (lo, hi) = (self.zs.lo, self.zs.hi);
        match self.kind {
            HullKind::Relu => (Some((0.0, 0.0)), None),
            HullKind::SoftThreshold { lambda } => {
                ((hi > lambda).then_some((lambda, 0.0)), (lo < -lambda).then_some((-lambda, 0.0)))
            }
            HullKind::SatLin { b, c } => ((lo < b).then_some((b, b)), (hi > c).then_some((c, c))),
        }
    }

    /// Clip interval whose secants apply, when the function saturates on both sides.
    fn secant_clip(&self) -> Option<(f64, f64)> {
        let (lo, hi) = (self.zs.lo, self.zs.hi);
        match self.kind {
            HullKind::Relu => None,
            HullKind::SoftThreshold { lambda } => (lo < -lambda && hi > lambda).then_some((-lambda, lambda)),
            HullKind::SatLin { b, c } => (lo < b && hi > c).then_some((b, c)),
        }
    }

    /// How the secant family of one side is obtained from the clip's upper secants.
    fn secant_side(&self, upper: bool) -> Option<SecantSide> {
        let (b, c) = self.secant_clip()?;
        let (lo, hi) = (self.zs.lo, self.zs.hi);
        let soft = matches!(self.kind, HullKind::SoftThreshold { .. });
        // Soft-thresholding is w = t - s with s the clip, so its upper side is the clip's lower side.
        let clip_upper = upper != soft;
        let (clip_lo, cb, cc, mirror) = if clip_upper { (lo, b, c, false) } else { (-hi, -c, -b, true) };
        Some(SecantSide { clip_lo, b: cb, c: cc, mirror, residual: soft })
    }
}

/// Secant rows of one side: upper secants of `clip(t', b, c)` with `t' = clip_lo + r . z'`,
/// where `z'` is `z` or `1 - z` and the clipped value is `w`, `-w`, `t - w` or `w - t`.
#[derive(Debug, Clone, Copy)]
struct SecantSide {
    clip_lo: f64,
    b: f64,
    c: f64,
    mirror: bool,
    residual: bool,
}

impl SecantSide {
    fn map_row(&self, row: ZRow, zs: &ZSpace) -> ZRow {
        let row = if self.mirror { row.mirrored() } else { row };
        if self.residual {
            row.through_residual(zs.lo, &zs.r)
        } else {
            row
        }
    }

    fn map_point(&self, zs: &ZSpace, z: &[f64], w: f64) -> (Vec<f64>, f64) {
        let v = if self.residual { zs.lo + crate::linalg::dot(&zs.r, z) - w } else { w };
        if self.mirror {
            (z.iter().map(|x| 1.0 - x).collect(), -v)
        } else {
            (z.to_vec(), v)
        }
    }

    fn all(&self, zs: &ZSpace) -> Vec<(ZRow, usize)> {
        clip_secant_all(self.clip_lo, &zs.r, self.b, self.c)
            .into_iter()
            .map(|(row, k)| (self.map_row(row, zs), k))
            .collect()
    }

    fn empty_set(&self, zs: &ZSpace) -> Option<ZRow> {
        clip_secant_row(self.clip_lo, &zs.r, self.b, self.c, |_| false).map(|row| self.map_row(row, zs))
    }

    fn separate(&self, zs: &ZSpace, z: &[f64], w: f64) -> Option<(ZRow, usize)> {
        let (zc, wc) = self.map_point(zs, z, w);
        clip_secant_separate(self.clip_lo, &zs.r, self.b, self.c, &zc, wc).map(|(row, k)| (self.map_row(row, zs), k))
    }
}

fn box_free_rows_to_y(zs: &ZSpace, rows: Vec<(ZRow, usize)>, family: Family) -> impl Iterator<Item = HullCut> + '_ {
    rows.into_iter().map(move |(row, k)| zs.to_y(row, family, k))
}

fn fixed_rows(q: &HullQuery, slope: f64, shift: f64) -> Vec<HullCut> {
    // w - slope * (a . y + offset) = shift, as two inequalities.
    let coef_y: Vec<f64> = q.a.iter().map(|a| -slope * a).collect();
    let rhs = shift + slope * q.offset;
    vec![
        HullCut { coef_y: coef_y.clone(), coef_w: 1.0, rhs, family: Family::Base, index_size: 0 },
        HullCut {
            coef_y: coef_y.iter().map(|v| -v).collect(),
            coef_w: -1.0,
            rhs: -rhs,
            family: Family::Base,
            index_size: 0,
        },
    ]
}

/// Simple rows plus the index-free secants and chords; valid, cheap, not exact for `d >= 2`.
pub fn base_inequalities(q: &HullQuery) -> Vec<HullCut> {
    if let Classification::Fixed { slope, shift } = classify(q) {
        return fixed_rows(q, slope, shift);
    }
    let zs = ZSpace::new(q);
    let f = Families { zs: &zs, kind: q.kind };
    let mut out: Vec<HullCut> = f.base().into_iter().map(|row| zs.to_y(row, Family::Base, 0)).collect();
    for (upper, family) in [(true, Family::UpperSecant), (false, Family::LowerSecant)] {
        if let Some(row) = f.secant_side(upper).and_then(|side| side.empty_set(&zs)) {
            out.push(zs.to_y(row, family, 0));
        }
    }
    out
}

/// Every inequality of the hull description (exponential in the number of active inputs).
/// Together with the input box these describe the convex hull of the graph.
pub fn enumerate(q: &HullQuery) -> Vec<HullCut> {
    if let Classification::Fixed { slope, shift } = classify(q) {
        return fixed_rows(q, slope, shift);
    }
    let zs = ZSpace::new(q);
    let f = Families { zs: &zs, kind: q.kind };
    let mut out: Vec<HullCut> = f.base().into_iter().map(|row| zs.to_y(row, Family::Base, 0)).collect();
    let (up, down) = f.chains();
    if let Some((theta, v0)) = up {
        out.extend(box_free_rows_to_y(&zs, upper_chain_all(zs.lo, &zs.r, theta, v0), Family::UpperChain));
    }
    if let Some((theta, v0)) = down {
        let rows = upper_chain_all(-zs.hi, &zs.r, -theta, -v0).into_iter().map(|(r, k)| (r.mirrored(), k)).collect();
        out.extend(box_free_rows_to_y(&zs, rows, Family::LowerChain));
    }
    for (upper, family) in [(true, Family::UpperSecant), (false, Family::LowerSecant)] {
        if let Some(side) = f.secant_side(upper) {
            out.extend(box_free_rows_to_y(&zs, side.all(&zs), family));
        }
    }
    out
}

/// Most violated inequality per family at `(y, w)`, keeping those with violation above `tol`.
pub fn separate_all(q: &HullQuery, y: &[f64], w: f64, tol: f64) -> Vec<(HullCut, f64)> {
    let mut found = Vec::new();
    let mut consider = |cut: HullCut| {
        let v = cut.violation(y, w);
        if v > tol {
            found.push((cut, v));
        }
    };
    if let Classification::Fixed { slope, shift } = classify(q) {
        fixed_rows(q, slope, shift).into_iter().for_each(&mut consider);
        return found;
    }
    let zs = ZSpace::new(q);
    let z = zs.z_of(y);
    let f = Families { zs: &zs, kind: q.kind };
    let best_of = |rows: Vec<ZRow>| rows.into_iter().max_by(|a, b| a.value(&z, w).total_cmp(&b.value(&z, w)));
    if let Some(row) = best_of(f.base()) {
        consider(zs.to_y(row, Family::Base, 0));
    }
    let (up, down) = f.chains();
    if let Some((theta, v0)) = up {
        if let Some((row, k)) = upper_chain_greedy(zs.lo, &zs.r, theta, v0, &z) {
            consider(zs.to_y(row, Family::UpperChain, k));
        }
    }
    if let Some((theta, v0)) = down {
        let zm: Vec<f64> = z.iter().map(|v| 1.0 - v).collect();
        if let Some((row, k)) = upper_chain_greedy(-zs.hi, &zs.r, -theta, -v0, &zm) {
            consider(zs.to_y(row.mirrored(), Family::LowerChain, k));
        }
    }
    for (upper, family) in [(true, Family::UpperSecant), (false, Family::LowerSecant)] {
        if let Some((row, k)) = f.secant_side(upper).and_then(|side| side.separate(&zs, &z, w)) {
            consider(zs.to_y(row, family, k));
        }
    }
    found
}

/// The single most violated inequality at `(y, w)`, if any exceeds `tol`.
pub fn separate(q: &HullQuery, y: &[f64], w: f64, tol: f64) -> Option<(HullCut, f64)> {
    separate_all(q, y, w, tol).into_iter().max_by(|a, b| a.1.total_cmp(&b.1))
}
