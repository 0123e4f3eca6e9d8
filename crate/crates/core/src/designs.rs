//! Experimental designs: nested component schedules, multi-index sets,
//! sparse grid designs, and the lattice / Latin hypercube baselines.
//!
//! Every sparse grid point is identified by a tuple of integer slot ids into
//! the per-dimension coordinate pools. Because component designs are nested
//! prefixes of their pool, a point's slot tuple determines the unique
//! multi-index that first introduces it, so the union over lattices is built
//! as a disjoint partition and never compares floating-point coordinates.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::format_f64;

/// A vector of per-dimension levels `j = (j_1, ..., j_d)`, each `>= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() || levels.iter().any(|&l| l == 0) {
            return Err(Error::InvalidDesign(format!(
                "multi-index entries must be >= 1, got {levels:?}"
            )));
        }
        Ok(MultiIndex(levels))
    }

    pub fn levels(&self) -> &[usize] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Entry sum `|j|`.
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, l) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, ")")
    }
}

fn check_level(eta: usize, d: usize) -> Result<()> {
    if d == 0 || eta < d {
        return Err(Error::InvalidLevel { eta, d });
    }
    Ok(())
}

/// All multi-indices with `min_total <= |j| <= max_total`, in lexicographic order.
fn enumerate_indices(d: usize, min_total: usize, max_total: usize) -> Vec<MultiIndex> {
    fn rec(
        d: usize,
        prefix: &mut Vec<usize>,
        used: usize,
        min_total: usize,
        max_total: usize,
        out: &mut Vec<MultiIndex>,
    ) {
        let remaining = d - prefix.len();
        if remaining == 0 {
            if used >= min_total {
                out.push(MultiIndex(prefix.clone()));
            }
            return;
        }
        // leave at least one unit for each remaining dimension after this one
        let max_here = max_total - used - (remaining - 1);
        for l in 1..=max_here {
            prefix.push(l);
            rec(d, prefix, used + l, min_total, max_total, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if max_total >= d {
        rec(d, &mut Vec::with_capacity(d), 0, min_total, max_total, &mut out);
    }
    out
}

/// `J(eta) = { j : |j| <= eta }`, sorted lexicographically.
pub fn index_set_j(eta: usize, d: usize) -> Result<Vec<MultiIndex>> {
    check_level(eta, d)?;
    Ok(enumerate_indices(d, d, eta))
}

/// `P(eta) = { j : max(d, eta - d + 1) <= |j| <= eta }`, sorted lexicographically.
pub fn index_set_p(eta: usize, d: usize) -> Result<Vec<MultiIndex>> {
    check_level(eta, d)?;
    let lo = d.max((eta + 1).saturating_sub(d));
    Ok(enumerate_indices(d, lo, eta))
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Combination coefficient `a(j) = (-1)^(eta - |j|) * C(d - 1, eta - |j|)`.
///
/// Only meaningful for `j` in `P(eta, d)`; outside it the binomial vanishes
/// or the exponent would be negative, and 0 is returned.
pub fn smolyak_coefficient(j: &MultiIndex, eta: usize, d: usize) -> i64 {
    let total = j.total();
    if total > eta {
        return 0;
    }
    let gap = eta - total;
    let magnitude = binomial(d - 1, gap) as i64;
    if gap % 2 == 0 {
        magnitude
    } else {
        -magnitude
    }
}

/// Nested one-dimensional design sequence for a single input dimension.
///
/// Level `j` consists of the first `prefix_sizes[j - 1]` entries of
/// `coordinates`, so `X_{i,j} ⊆ X_{i,j+1}` holds by construction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ComponentSchedule {
    dimension_id: usize,
    coordinates: Vec<f64>,
    prefix_sizes: Vec<usize>,
}

impl ComponentSchedule {
    /// Builds a schedule from per-level increments `X_{i,j} \ X_{i,j-1}`.
    pub fn from_increments(dimension_id: usize, increments: &[Vec<f64>]) -> Result<Self> {
        let mut coordinates = Vec::new();
        let mut prefix_sizes = Vec::with_capacity(increments.len());
        for inc in increments {
            coordinates.extend_from_slice(inc);
            prefix_sizes.push(coordinates.len());
        }
        Self::new(dimension_id, coordinates, prefix_sizes)
    }

    pub fn new(dimension_id: usize, coordinates: Vec<f64>, prefix_sizes: Vec<usize>) -> Result<Self> {
        if prefix_sizes.is_empty() || prefix_sizes[0] == 0 {
            return Err(Error::InvalidSchedule(format!(
                "dimension {dimension_id}: level 1 must contain at least one point"
            )));
        }
        if prefix_sizes.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidSchedule(format!(
                "dimension {dimension_id}: prefix sizes must be nondecreasing"
            )));
        }
        if *prefix_sizes.last().unwrap() > coordinates.len() {
            return Err(Error::InvalidSchedule(format!(
                "dimension {dimension_id}: prefix size exceeds coordinate pool"
            )));
        }
        if let Some(bad) = coordinates
            .iter()
            .find(|c| !c.is_finite() || **c < 0.0 || **c > 1.0)
        {
            return Err(Error::InvalidSchedule(format!(
                "dimension {dimension_id}: coordinate {bad} outside [0, 1]"
            )));
        }
        let mut sorted = coordinates.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidSchedule(format!(
                "dimension {dimension_id}: duplicate coordinate {}",
                w[0]
            )));
        }
        Ok(ComponentSchedule {
            dimension_id,
            coordinates,
            prefix_sizes,
        })
    }

    pub fn dimension_id(&self) -> usize {
        self.dimension_id
    }

    /// Number of defined levels.
    pub fn levels(&self) -> usize {
        self.prefix_sizes.len()
    }

    /// `m(j) = #X_{i,j}`, with `m(0) = 0`. Panics beyond the defined levels.
    pub fn size(&self, level: usize) -> usize {
        if level == 0 {
            0
        } else {
            self.prefix_sizes[level - 1]
        }
    }

    /// `#X_{i,j} - #X_{i,j-1}`.
    pub fn increment_size(&self, level: usize) -> usize {
        self.size(level) - self.size(level - 1)
    }

    /// Points of `X_{i,level}`.
    pub fn points(&self, level: usize) -> &[f64] {
        &self.coordinates[..self.size(level)]
    }

    pub fn increment(&self, level: usize) -> &[f64] {
        &self.coordinates[self.size(level - 1)..self.size(level)]
    }

    /// The full coordinate pool, indexed by slot id.
    pub fn coordinates(&self) -> &[f64] {
        &self.coordinates
    }

    /// Level at which each slot first appears, restricted to the first `levels` levels.
    fn slot_levels(&self, levels: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.size(levels));
        for l in 1..=levels {
            out.extend(std::iter::repeat_n(l, self.increment_size(l)));
        }
        out
    }

    fn require_levels(&self, need: usize) -> Result<()> {
        if self.levels() < need {
            return Err(Error::ScheduleTooShort {
                dim: self.dimension_id,
                need,
                have: self.levels(),
            });
        }
        Ok(())
    }
}

const INTERIOR_FIRST: [&[f64]; 7] = [
    &[0.5],
    &[0.125, 0.875],
    &[0.25, 0.75],
    &[0.0, 1.0],
    &[0.375, 0.625],
    &[0.1875, 0.8125],
    &[0.0625, 0.9375],
];

const BOUNDARY_FIRST: [&[f64]; 5] = [
    &[0.5],
    &[0.0, 1.0],
    &[0.25, 0.75],
    &[0.375, 0.625],
    &[0.125, 0.875],
];

/// The built-in component schedules, identical across dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BuiltinSchedule {
    /// `{.5}, {.125,.875}, {.25,.75}, {0,1}, {.375,.625}, {.1875,.8125}, {.0625,.9375}`,
    /// then symmetric midpoint refinement.
    InteriorFirst,
    /// `{.5}, {0,1}, {.25,.75}, {.375,.625}, {.125,.875}`, then symmetric
    /// midpoint refinement.
    BoundaryFirst,
    /// `X_j = { k / 2^j : 1 <= k <= 2^j - 1 }`.
    HyperbolicCross,
}

impl BuiltinSchedule {
    pub const ALL: [BuiltinSchedule; 3] = [
        BuiltinSchedule::InteriorFirst,
        BuiltinSchedule::BoundaryFirst,
        BuiltinSchedule::HyperbolicCross,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinSchedule::InteriorFirst => "interior-first",
            BuiltinSchedule::BoundaryFirst => "boundary-first",
            BuiltinSchedule::HyperbolicCross => "hyperbolic-cross",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "interior-first" | "fig3" | "default" => Some(BuiltinSchedule::InteriorFirst),
            "boundary-first" | "fig1c" => Some(BuiltinSchedule::BoundaryFirst),
            "hyperbolic-cross" | "hyperbolic" => Some(BuiltinSchedule::HyperbolicCross),
            _ => None,
        }
    }

    /// Per-level increments for the first `levels` levels.
    pub fn increments(self, levels: usize) -> Vec<Vec<f64>> {
        match self {
            BuiltinSchedule::InteriorFirst => extend_by_midpoints(&INTERIOR_FIRST, levels),
            BuiltinSchedule::BoundaryFirst => extend_by_midpoints(&BOUNDARY_FIRST, levels),
            BuiltinSchedule::HyperbolicCross => (1..=levels)
                .map(|j| {
                    let denom = (1u64 << j) as f64;
                    (1..(1u64 << j))
                        .step_by(2)
                        .map(|k| k as f64 / denom)
                        .collect()
                })
                .collect(),
        }
    }

    pub fn component(self, dimension_id: usize, levels: usize) -> ComponentSchedule {
        ComponentSchedule::from_increments(dimension_id, &self.increments(levels))
            .expect("built-in schedules are valid")
    }

    /// `d` identical schedules with enough levels for level of construction `eta`.
    pub fn schedules(self, d: usize, eta: usize) -> Vec<ComponentSchedule> {
        let levels = (eta + 1).saturating_sub(d).max(1);
        (1..=d).map(|i| self.component(i, levels)).collect()
    }
}

impl fmt::Display for BuiltinSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Extends a symmetric listed schedule past its last level: every new level
/// adds the midpoint of the widest gap in `[0, 0.5]` (leftmost on ties)
/// together with its mirror image about 0.5.
fn extend_by_midpoints(listed: &[&[f64]], levels: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = listed.iter().take(levels).map(|s| s.to_vec()).collect();
    let mut half: Vec<f64> = out.iter().flatten().copied().filter(|&x| x <= 0.5).collect();
    half.sort_by(|a, b| a.partial_cmp(b).unwrap());
    while out.len() < levels {
        let mut best = (0.0, 0.0);
        for w in half.windows(2) {
            if w[1] - w[0] > best.1 - best.0 {
                best = (w[0], w[1]);
            }
        }
        let mid = 0.5 * (best.0 + best.1);
        out.push(vec![mid, 1.0 - mid]);
        let pos = half.partition_point(|&x| x < mid);
        half.insert(pos, mid);
    }
    out
}

/// Global index of every point of one lattice `X_{1,j_1} x ... x X_{d,j_d}`.
#[derive(Debug, Clone)]
pub struct LatticeMap {
    pub index: MultiIndex,
    /// `m_i(j_i)` per dimension.
    pub shape: Vec<usize>,
    /// Row-major lattice position (dimension d fastest) to global point index.
    pub global: Vec<usize>,
}

impl LatticeMap {
    pub fn len(&self) -> usize {
        self.global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global.is_empty()
    }
}

/// Sparse grid design `X_SG(eta)` with exact integer point identity.
#[derive(Debug, Clone)]
pub struct SparseGridDesign {
    d: usize,
    eta: usize,
    schedules: Vec<ComponentSchedule>,
    /// Flat `N x d` slot ids.
    slots: Vec<u32>,
    lattices: Vec<LatticeMap>,
    lattice_lookup: HashMap<Vec<usize>, usize>,
}

fn check_schedules(schedules: &[ComponentSchedule], eta: usize) -> Result<usize> {
    let d = schedules.len();
    check_level(eta, d)?;
    let need = eta - d + 1;
    for s in schedules {
        s.require_levels(need)?;
    }
    Ok(need)
}

/// `N_SG(eta) = sum_{j in J(eta)} prod_i (#X_{i,j_i} - #X_{i,j_i-1})`.
pub fn sample_size(schedules: &[ComponentSchedule], eta: usize) -> Result<usize> {
    check_schedules(schedules, eta)?;
    let d = schedules.len();
    Ok(index_set_j(eta, d)?
        .iter()
        .map(|j| {
            j.levels()
                .iter()
                .zip(schedules)
                .map(|(&l, s)| s.increment_size(l))
                .product::<usize>()
        })
        .sum())
}

/// Visits every row-major position of a box with the given shape.
/// `f` receives the position's multi-dimensional coordinates.
fn for_each_position(shape: &[usize], mut f: impl FnMut(&[usize])) {
    if shape.iter().any(|&n| n == 0) {
        return;
    }
    let mut pos = vec![0usize; shape.len()];
    loop {
        f(&pos);
        let mut k = shape.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            pos[k] += 1;
            if pos[k] < shape[k] {
                break;
            }
            pos[k] = 0;
        }
    }
}

/// Builds `X_SG(eta)` as the union of lattices over `J(eta)`.
pub fn build_sparse_grid(schedules: Vec<ComponentSchedule>, eta: usize) -> Result<SparseGridDesign> {
    let max_level = check_schedules(&schedules, eta)?;
    let d = schedules.len();
    let index_set = index_set_j(eta, d)?;
    let slot_levels: Vec<Vec<usize>> = schedules.iter().map(|s| s.slot_levels(max_level)).collect();

    // Points owned by each j: the product of the increments of its levels.
    let mut owner_offset: HashMap<Vec<usize>, usize> = HashMap::with_capacity(index_set.len());
    let mut slots: Vec<u32> = Vec::new();
    let mut n_points = 0usize;
    for j in &index_set {
        owner_offset.insert(j.levels().to_vec(), n_points);
        let lo: Vec<usize> = j.levels().iter().zip(&schedules).map(|(&l, s)| s.size(l - 1)).collect();
        let shape: Vec<usize> = j
            .levels()
            .iter()
            .zip(&schedules)
            .map(|(&l, s)| s.increment_size(l))
            .collect();
        for_each_position(&shape, |pos| {
            slots.extend(pos.iter().zip(&lo).map(|(&p, &o)| (p + o) as u32));
            n_points += 1;
        });
    }

    let mut lattices = Vec::with_capacity(index_set.len());
    let mut lattice_lookup = HashMap::with_capacity(index_set.len());
    let mut owner = vec![0usize; d];
    for j in &index_set {
        let shape: Vec<usize> = j.levels().iter().zip(&schedules).map(|(&l, s)| s.size(l)).collect();
        let mut global = Vec::with_capacity(shape.iter().product());
        for_each_position(&shape, |pos| {
            for i in 0..d {
                owner[i] = slot_levels[i][pos[i]];
            }
            let base = owner_offset[owner.as_slice()];
            let mut local = 0usize;
            for i in 0..d {
                let s = &schedules[i];
                local = local * s.increment_size(owner[i]) + (pos[i] - s.size(owner[i] - 1));
            }
            global.push(base + local);
        });
        lattice_lookup.insert(j.levels().to_vec(), lattices.len());
        lattices.push(LatticeMap {
            index: j.clone(),
            shape,
            global,
        });
    }

    Ok(SparseGridDesign {
        d,
        eta,
        schedules,
        slots,
        lattices,
        lattice_lookup,
    })
}

impl SparseGridDesign {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn eta(&self) -> usize {
        self.eta
    }

    /// Highest component level used, `eta - d + 1`.
    pub fn max_level(&self) -> usize {
        self.eta - self.d + 1
    }

    pub fn len(&self) -> usize {
        self.slots.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn schedules(&self) -> &[ComponentSchedule] {
        &self.schedules
    }

    /// Slot ids of point `k`.
    pub fn point_slots(&self, k: usize) -> &[u32] {
        &self.slots[k * self.d..(k + 1) * self.d]
    }

    pub fn point(&self, k: usize) -> Vec<f64> {
        self.point_slots(k)
            .iter()
            .zip(&self.schedules)
            .map(|(&s, sch)| sch.coordinates()[s as usize])
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Lattices for every `j` in `J(eta)`, in lexicographic order of `j`.
    pub fn lattices(&self) -> &[LatticeMap] {
        &self.lattices
    }

    pub fn lattice(&self, j: &MultiIndex) -> Option<&LatticeMap> {
        self.lattice_lookup.get(j.levels()).map(|&k| &self.lattices[k])
    }
}

/// Full Cartesian product of one-dimensional designs, dimension d fastest.
pub fn build_lattice(designs_1d: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if designs_1d.is_empty() {
        return Err(Error::InvalidDesign("lattice needs at least one dimension".into()));
    }
    for (i, pts) in designs_1d.iter().enumerate() {
        if pts.is_empty() {
            return Err(Error::InvalidDesign(format!("component design {} is empty", i + 1)));
        }
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidDesign(format!(
                "component design {} has duplicate points",
                i + 1
            )));
        }
    }
    let shape: Vec<usize> = designs_1d.iter().map(Vec::len).collect();
    let mut out = Vec::with_capacity(shape.iter().product());
    for_each_position(&shape, |pos| {
        out.push(pos.iter().zip(designs_1d).map(|(&p, xs)| xs[p]).collect());
    });
    Ok(out)
}

/// Latin hypercube sample of `n` points in `[0,1]^d`: each column places
/// exactly one point in each of the `n` equal strata.
pub fn build_lhs(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for i in 0..d {
        perm.shuffle(&mut rng);
        for (k, row) in out.iter_mut().enumerate() {
            let u: f64 = rng.random();
            row[i] = (perm[k] as f64 + u) / n as f64;
        }
    }
    out
}

/// Parses the plain-text schedule format: one `dim level c1 c2 ...` line per
/// level per dimension, listing the increment at that level. Blank lines and
/// lines starting with `#` are ignored.
pub fn parse_schedules(text: &str) -> Result<Vec<ComponentSchedule>> {
    let mut table: Vec<Vec<Option<Vec<f64>>>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let parse_index = |f: Option<&str>, what: &str| -> Result<usize> {
            f.and_then(|s| s.parse::<usize>().ok())
                .filter(|&v| v >= 1)
                .ok_or_else(|| Error::Parse(format!("line {}: bad {what}", lineno + 1)))
        };
        let dim = parse_index(fields.next(), "dimension")?;
        let level = parse_index(fields.next(), "level")?;
        let coords = fields
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad coordinate `{s}`", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if table.len() < dim {
            table.resize(dim, Vec::new());
        }
        let levels = &mut table[dim - 1];
        if levels.len() < level {
            levels.resize(level, None);
        }
        if levels[level - 1].is_some() {
            return Err(Error::InvalidSchedule(format!(
                "dimension {dim} level {level} defined twice"
            )));
        }
        levels[level - 1] = Some(coords);
    }
    if table.is_empty() {
        return Err(Error::InvalidSchedule("schedule file defines no levels".into()));
    }
    table
        .into_iter()
        .enumerate()
        .map(|(i, levels)| {
            let increments = levels
                .into_iter()
                .enumerate()
                .map(|(l, inc)| {
                    inc.ok_or_else(|| {
                        Error::InvalidSchedule(format!("dimension {} is missing level {}", i + 1, l + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            ComponentSchedule::from_increments(i + 1, &increments)
        })
        .collect()
}

pub fn read_schedules(path: &Path) -> Result<Vec<ComponentSchedule>> {
    parse_schedules(&std::fs::read_to_string(path)?)
}

/// Renders schedules in the format accepted by [`parse_schedules`].
pub fn format_schedules(schedules: &[ComponentSchedule]) -> String {
    let mut out = String::new();
    for s in schedules {
        for l in 1..=s.levels() {
            out.push_str(&format!("{} {}", s.dimension_id(), l));
            for c in s.increment(l) {
                out.push(' ');
                out.push_str(&format_f64(*c));
            }
            out.push('\n');
        }
    }
    out
}

/// Writes `id,x1,...,xd` rows with 17 significant digits.
pub fn write_design_csv<W: std::io::Write>(points: &[Vec<f64>], writer: W) -> Result<()> {
    let d = points.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (k, p) in points.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(p.iter().map(|&v| format_f64(v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a design CSV written by [`write_design_csv`], returning points in file order.
pub fn read_design_csv<R: std::io::Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    Ok(read_design_table(reader)?.1)
}

/// Like [`read_design_csv`] but also returns the `id` column. All rows must
/// have the same number of coordinates.
pub fn read_design_table<R: std::io::Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.get(0).map(str::trim) != Some("id") || headers.len() < 2 {
        return Err(Error::Parse("design CSV must start with header `id,x1,...`".into()));
    }
    let mut ids = Vec::new();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let p = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{s}`"))))
            .collect::<Result<Vec<f64>>>()?;
        ids.push(rec.get(0).unwrap_or("").trim().to_string());
        out.push(p);
    }
    Ok((ids, out))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Random point in `[0,1]^d`.
pub fn uniform_point<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn mi(v: &[usize]) -> MultiIndex {
        MultiIndex::new(v.to_vec()).unwrap()
    }

    fn brute_force_j(eta: usize, d: usize) -> Vec<Vec<usize>> {
        // all tuples in {1..eta}^d with sum <= eta
        let mut out = Vec::new();
        let total = eta.pow(d as u32);
        for code in 0..total {
            let mut c = code;
            let mut v = Vec::with_capacity(d);
            for _ in 0..d {
                v.push(c % eta + 1);
                c /= eta;
            }
            if v.iter().sum::<usize>() <= eta {
                out.push(v);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn index_set_j_small() {
        let j = index_set_j(3, 2).unwrap();
        assert_eq!(j, vec![mi(&[1, 1]), mi(&[1, 2]), mi(&[2, 1])]);
        assert_eq!(index_set_j(4, 4).unwrap(), vec![mi(&[1, 1, 1, 1])]);
    }

    #[test]
    fn index_set_j_matches_brute_force() {
        let j: Vec<Vec<usize>> = index_set_j(5, 2).unwrap().iter().map(|m| m.levels().to_vec()).collect();
        assert_eq!(j.len(), 10);
        assert_eq!(j, brute_force_j(5, 2));
        for d in 1..=4 {
            for eta in d..=d + 3 {
                let j: Vec<Vec<usize>> =
                    index_set_j(eta, d).unwrap().iter().map(|m| m.levels().to_vec()).collect();
                assert_eq!(j, brute_force_j(eta, d));
                assert_eq!(j.len() as u128, binomial(eta, d));
            }
        }
    }

    #[test]
    fn invalid_level() {
        assert!(matches!(index_set_j(1, 2), Err(Error::InvalidLevel { eta: 1, d: 2 })));
        assert!(matches!(index_set_p(0, 0), Err(Error::InvalidLevel { .. })));
    }

    #[test]
    fn index_set_p_examples() {
        assert_eq!(index_set_p(3, 2).unwrap(), vec![mi(&[1, 1]), mi(&[1, 2]), mi(&[2, 1])]);
        let p: HashSet<Vec<usize>> = index_set_p(7, 2).unwrap().iter().map(|m| m.levels().to_vec()).collect();
        let expected: HashSet<Vec<usize>> = [
            [1, 5], [5, 1], [2, 4], [4, 2], [3, 3], [1, 6], [6, 1], [2, 5], [5, 2], [3, 4], [4, 3],
        ]
        .iter()
        .map(|v| v.to_vec())
        .collect();
        assert_eq!(p, expected);
        assert_eq!(index_set_p(3, 3).unwrap(), vec![mi(&[1, 1, 1])]);
    }

    #[test]
    fn coefficients() {
        assert_eq!(smolyak_coefficient(&mi(&[1, 2]), 3, 2), 1);
        assert_eq!(smolyak_coefficient(&mi(&[1, 1]), 3, 2), -1);
        assert_eq!(smolyak_coefficient(&mi(&[1, 1, 1]), 5, 3), 1);
        assert_eq!(smolyak_coefficient(&mi(&[1, 1, 2]), 5, 3), -2);
    }

    #[test]
    fn coefficients_partition_of_unity() {
        for d in 1..=6 {
            for eta in d..=d + 5 {
                let s: i64 = index_set_p(eta, d)
                    .unwrap()
                    .iter()
                    .map(|j| smolyak_coefficient(j, eta, d))
                    .sum();
                assert_eq!(s, 1, "d={d} eta={eta}");
            }
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(matches!(
            ComponentSchedule::from_increments(1, &[vec![0.5], vec![0.5, 1.0]]),
            Err(Error::InvalidSchedule(_))
        ));
        assert!(matches!(
            ComponentSchedule::from_increments(1, &[vec![]]),
            Err(Error::InvalidSchedule(_))
        ));
        assert!(matches!(
            ComponentSchedule::from_increments(1, &[vec![1.5]]),
            Err(Error::InvalidSchedule(_))
        ));
        let s = ComponentSchedule::from_increments(1, &[vec![0.5], vec![], vec![0.0, 1.0]]).unwrap();
        assert_eq!(s.size(0), 0);
        assert_eq!(s.size(2), 1);
        assert_eq!(s.points(3), &[0.5, 0.0, 1.0]);
        assert_eq!(s.increment(3), &[0.0, 1.0]);
    }

    #[test]
    fn schedule_too_short() {
        let s = BuiltinSchedule::InteriorFirst.schedules(2, 3);
        assert!(matches!(
            build_sparse_grid(s.clone(), 5),
            Err(Error::ScheduleTooShort { dim: 1, need: 4, have: 2 })
        ));
        assert!(matches!(sample_size(&s, 5), Err(Error::ScheduleTooShort { .. })));
    }

    #[test]
    fn builtin_increments() {
        let inc = BuiltinSchedule::InteriorFirst.increments(9);
        assert_eq!(inc[3], vec![0.0, 1.0]);
        assert_eq!(inc[6], vec![0.0625, 0.9375]);
        assert_eq!(inc[7], vec![0.3125, 0.6875]);
        assert_eq!(inc[8], vec![0.4375, 0.5625]);
        let inc = BuiltinSchedule::BoundaryFirst.increments(6);
        assert_eq!(inc[5], vec![0.0625, 0.9375]);
        let hc = BuiltinSchedule::HyperbolicCross.increments(3);
        assert_eq!(hc, vec![vec![0.5], vec![0.25, 0.75], vec![0.125, 0.375, 0.625, 0.875]]);
        // refinement keeps every pool free of duplicates
        for b in BuiltinSchedule::ALL {
            b.component(1, 12);
        }
    }

    #[test]
    fn figure_one_design_has_41_points() {
        let s = BuiltinSchedule::BoundaryFirst.schedules(2, 6);
        assert_eq!(sample_size(&s, 6).unwrap(), 41);
        assert_eq!(build_sparse_grid(s, 6).unwrap().len(), 41);
    }

    #[test]
    fn single_point_design() {
        let g = build_sparse_grid(BuiltinSchedule::InteriorFirst.schedules(3, 3), 3).unwrap();
        assert_eq!(g.points(), vec![vec![0.5, 0.5, 0.5]]);
    }

    #[test]
    fn sparse_grid_equals_naive_union() {
        let s = BuiltinSchedule::InteriorFirst.schedules(2, 4);
        let g = build_sparse_grid(s.clone(), 4).unwrap();
        let mut naive = HashSet::new();
        for (a, b) in [(1, 3), (3, 1), (1, 1), (2, 2), (1, 2), (2, 1)] {
            for p in build_lattice(&[s[0].points(a).to_vec(), s[1].points(b).to_vec()]).unwrap() {
                naive.insert(p.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            }
        }
        let got: HashSet<Vec<u64>> =
            g.points().iter().map(|p| p.iter().map(|v| v.to_bits()).collect()).collect();
        assert_eq!(got.len(), g.len());
        assert_eq!(got, naive);
        assert_eq!(g.len(), 13);
    }

    #[test]
    fn lattice_maps_are_consistent() {
        let s = BuiltinSchedule::HyperbolicCross.schedules(3, 6);
        let g = build_sparse_grid(s, 6).unwrap();
        for lat in g.lattices() {
            assert_eq!(lat.len(), lat.shape.iter().product::<usize>());
            let uniq: HashSet<usize> = lat.global.iter().copied().collect();
            assert_eq!(uniq.len(), lat.len());
            let lattice_pts = build_lattice(
                &lat.index
                    .levels()
                    .iter()
                    .zip(g.schedules())
                    .map(|(&l, sch)| sch.points(l).to_vec())
                    .collect::<Vec<_>>(),
            )
            .unwrap();
            for (pos, &k) in lat.global.iter().enumerate() {
                assert_eq!(g.point(k), lattice_pts[pos]);
            }
        }
    }

    #[test]
    fn lattice_examples() {
        let corners = build_lattice(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(corners, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(build_lattice(&vec![vec![0.25, 0.75]; 10]).unwrap().len(), 1024);
        assert_eq!(build_lattice(&[vec![0.1], vec![0.1, 0.2, 0.3], vec![0.0, 1.0]]).unwrap().len(), 6);
        assert!(matches!(build_lattice(&[vec![0.1], vec![]]), Err(Error::InvalidDesign(_))));
    }

    #[test]
    fn lhs_strata() {
        assert_eq!(build_lhs(1, 3, 0).len(), 1);
        let pts = build_lhs(4, 2, 11);
        for i in 0..2 {
            let mut strata: Vec<usize> = pts.iter().map(|p| (p[i] * 4.0).floor() as usize).collect();
            strata.sort();
            assert_eq!(strata, vec![0, 1, 2, 3]);
        }
        assert_eq!(build_lhs(7, 3, 5), build_lhs(7, 3, 5));
        assert_ne!(build_lhs(7, 3, 5), build_lhs(7, 3, 6));
    }

    #[test]
    fn schedule_file_round_trip() {
        let s = BuiltinSchedule::InteriorFirst.schedules(2, 5);
        let text = format_schedules(&s);
        assert!(text.starts_with("1 1 5.0000000000000000e-1\n"));
        assert_eq!(parse_schedules(&text).unwrap(), s);
        let bad = "1 1 0.5\n1 3 0.0 1.0\n";
        assert!(matches!(parse_schedules(bad), Err(Error::InvalidSchedule(_))));
        assert!(matches!(parse_schedules("1 1 0.5 0.5\n"), Err(Error::InvalidSchedule(_))));
        assert!(matches!(parse_schedules("x 1 0.5\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn design_csv_round_trip() {
        let g = build_sparse_grid(BuiltinSchedule::InteriorFirst.schedules(2, 5), 5).unwrap();
        let mut buf = Vec::new();
        write_design_csv(&g.points(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,x1,x2\n0,5.0000000000000000e-1,5.0000000000000000e-1\n"));
        assert_eq!(read_design_csv(buf.as_slice()).unwrap(), g.points());
    }

    #[test]
    fn seventy_dimensional_count() {
        for s in [BuiltinSchedule::InteriorFirst, BuiltinSchedule::BoundaryFirst] {
            assert_eq!(sample_size(&s.schedules(70, 73), 73).unwrap(), 467_321);
        }
    }
}
