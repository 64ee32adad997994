//! Uniform lattice on `[-L, L)^d` with midpoint-sampled complex functions and
//! O(1) box integrals through compensated prefix sums.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summation::{ComplexKahanSum, DoubleDouble, KahanSum};
use crate::weights::Weight;

pub type C64 = Complex64;
pub type Point = [f64; 2];

pub const MIN_DEPTH: u32 = 2;
pub const MAX_DEPTH: u32 = 14;
pub const MAX_CELLS: usize = 1 << 28;

const ALIGN_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeDomain {
    dim: usize,
    half_width: f64,
    depth: u32,
}

pub fn build_domain(dim: usize, half_width: f64, depth: u32) -> Result<LatticeDomain> {
    LatticeDomain::new(dim, half_width, depth)
}

impl LatticeDomain {
    pub fn new(dim: usize, half_width: f64, depth: u32) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidDomain(format!("dimension {dim} not in {{1,2}}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidDomain(format!("half width {half_width} must be positive")));
        }
        if !(MIN_DEPTH..=MAX_DEPTH).contains(&depth) {
            return Err(Error::ResourceGuard(format!(
                "depth {depth} outside [{MIN_DEPTH}, {MAX_DEPTH}]"
            )));
        }
        let cells = 1usize << (depth as usize * dim);
        if cells > MAX_CELLS {
            return Err(Error::ResourceGuard(format!("{cells} cells exceeds {MAX_CELLS}")));
        }
        Ok(LatticeDomain {
            dim,
            half_width,
            depth,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Cells per axis.
    pub fn n(&self) -> usize {
        1 << self.depth
    }

    pub fn width(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn cell_width(&self) -> f64 {
        self.width() / self.n() as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_width().powi(self.dim as i32)
    }

    pub fn num_cells(&self) -> usize {
        self.n().pow(self.dim as u32)
    }

    pub fn volume(&self) -> f64 {
        self.width().powi(self.dim as i32)
    }

    pub fn diameter(&self) -> f64 {
        self.width() * (self.dim as f64).sqrt()
    }

    /// Midpoint coordinate of axis index `i`.
    pub fn midpoint(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.cell_width()
    }

    /// Coordinate of the left edge of axis index `i` (`i == n` gives `L`).
    pub fn edge(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.cell_width()
    }

    pub fn cell_coords(&self, cell: usize) -> [usize; 2] {
        if self.dim == 1 {
            [cell, 0]
        } else {
            let n = self.n();
            [cell % n, cell / n]
        }
    }

    pub fn cell_index(&self, coords: [usize; 2]) -> usize {
        if self.dim == 1 {
            coords[0]
        } else {
            coords[1] * self.n() + coords[0]
        }
    }

    pub fn cell_midpoint(&self, cell: usize) -> Point {
        let c = self.cell_coords(cell);
        if self.dim == 1 {
            [self.midpoint(c[0]), 0.0]
        } else {
            [self.midpoint(c[0]), self.midpoint(c[1])]
        }
    }

    pub fn midpoints(&self) -> Vec<Point> {
        (0..self.num_cells()).map(|c| self.cell_midpoint(c)).collect()
    }

    /// The whole domain as a box.
    pub fn full_box(&self) -> AlignedBox {
        let n = self.n();
        if self.dim == 1 {
            AlignedBox {
                lo: [0, 0],
                hi: [n, 1],
            }
        } else {
            AlignedBox {
                lo: [0, 0],
                hi: [n, n],
            }
        }
    }

    /// Lattice index of coordinate `x` if it lies on a cell edge.
    fn aligned_index(&self, x: f64) -> Option<usize> {
        let t = (x + self.half_width) / self.cell_width();
        let r = t.round();
        if (t - r).abs() > ALIGN_TOL || r < 0.0 || r > self.n() as f64 {
            None
        } else {
            Some(r as usize)
        }
    }

    pub(crate) fn same_as(&self, other: &LatticeDomain) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::DomainMismatch)
        }
    }
}

/// Half-open lattice-aligned box stored as cell-index ranges per axis. In one
/// dimension the second axis is the trivial range `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlignedBox {
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

impl AlignedBox {
    pub fn new(domain: &LatticeDomain, lo: [usize; 2], hi: [usize; 2]) -> Result<Self> {
        let n = domain.n();
        let (lo, hi) = if domain.dim() == 1 {
            ([lo[0], 0], [hi[0], 1])
        } else {
            (lo, hi)
        };
        for a in 0..domain.dim() {
            if lo[a] >= hi[a] || hi[a] > n {
                return Err(Error::OutOfDomain(format!("cells {lo:?}..{hi:?} on n={n}")));
            }
        }
        Ok(AlignedBox { lo, hi })
    }

    /// Box from coordinate intervals `[a_i, b_i)`, one per axis.
    pub fn from_coords(domain: &LatticeDomain, intervals: &[(f64, f64)]) -> Result<Self> {
        if intervals.len() != domain.dim() {
            return Err(Error::InvalidParameter(format!(
                "{} intervals for dimension {}",
                intervals.len(),
                domain.dim()
            )));
        }
        let mut lo = [0, 0];
        let mut hi = [1, 1];
        for (a, &(x0, x1)) in intervals.iter().enumerate() {
            let eps = ALIGN_TOL * domain.width();
            if x0 < -domain.half_width() - eps || x1 > domain.half_width() + eps || x0 >= x1 {
                return Err(Error::OutOfDomain(format!("[{x0}, {x1})")));
            }
            lo[a] = domain
                .aligned_index(x0)
                .ok_or_else(|| Error::NotAligned(format!("edge {x0}")))?;
            hi[a] = domain
                .aligned_index(x1)
                .ok_or_else(|| Error::NotAligned(format!("edge {x1}")))?;
        }
        AlignedBox::new(domain, lo, hi)
    }

    pub fn side_cells(&self, axis: usize) -> usize {
        self.hi[axis] - self.lo[axis]
    }

    pub fn num_cells(&self) -> usize {
        self.side_cells(0) * self.side_cells(1)
    }

    pub fn volume(&self, domain: &LatticeDomain) -> f64 {
        self.num_cells() as f64 * domain.cell_volume()
    }

    /// Longest side in cells.
    pub fn max_side_cells(&self, domain: &LatticeDomain) -> usize {
        (0..domain.dim()).map(|a| self.side_cells(a)).max().unwrap_or(0)
    }

    pub fn contains_coords(&self, c: [usize; 2]) -> bool {
        (self.lo[0]..self.hi[0]).contains(&c[0]) && (self.lo[1]..self.hi[1]).contains(&c[1])
    }

    pub fn contains_cell(&self, domain: &LatticeDomain, cell: usize) -> bool {
        self.contains_coords(domain.cell_coords(cell))
    }

    pub fn contains_box(&self, other: &AlignedBox) -> bool {
        (0..2).all(|a| self.lo[a] <= other.lo[a] && other.hi[a] <= self.hi[a])
    }

    pub fn intersects(&self, other: &AlignedBox) -> bool {
        (0..2).all(|a| self.lo[a] < other.hi[a] && other.lo[a] < self.hi[a])
    }

    /// Contiguous runs of linear cell indices, one per row.
    pub fn rows(&self, domain: &LatticeDomain) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = domain.n();
        let dim = domain.dim();
        (self.lo[1]..self.hi[1]).map(move |y| {
            let start = if dim == 1 { self.lo[0] } else { y * n + self.lo[0] };
            (start, start + self.side_cells(0))
        })
    }

    pub fn cells<'a>(&'a self, domain: &'a LatticeDomain) -> impl Iterator<Item = usize> + 'a {
        self.rows(domain).flat_map(|(s, e)| s..e)
    }

    pub fn to_cell_set(&self, domain: &LatticeDomain) -> CellSet {
        CellSet::from_runs(self.rows(domain).collect())
    }

    /// Euclidean distance from the origin to the closed box.
    pub fn dist_to_origin(&self, domain: &LatticeDomain) -> f64 {
        let mut s = 0.0;
        for a in 0..domain.dim() {
            let x0 = domain.edge(self.lo[a]);
            let x1 = domain.edge(self.hi[a]);
            let c = 0.0f64.clamp(x0, x1);
            s += c * c;
        }
        s.sqrt()
    }

    pub fn lower_corner(&self, domain: &LatticeDomain) -> Point {
        [domain.edge(self.lo[0]), if domain.dim() == 2 { domain.edge(self.lo[1]) } else { 0.0 }]
    }
}

/// Sorted, disjoint, non-adjacent half-open runs of linear cell indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSet {
    runs: Vec<(usize, usize)>,
}

impl CellSet {
    pub fn empty() -> Self {
        CellSet { runs: Vec::new() }
    }

    pub fn from_runs(mut runs: Vec<(usize, usize)>) -> Self {
        runs.retain(|&(s, e)| s < e);
        runs.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
        for (s, e) in runs {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        CellSet { runs: merged }
    }

    pub fn from_cells<I: IntoIterator<Item = usize>>(cells: I) -> Self {
        CellSet::from_runs(cells.into_iter().map(|c| (c, c + 1)).collect())
    }

    pub fn runs(&self) -> &[(usize, usize)] {
        &self.runs
    }

    pub fn len(&self) -> usize {
        self.runs.iter().map(|(s, e)| e - s).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        match self.runs.binary_search_by(|&(s, _)| s.cmp(&cell)) {
            Ok(_) => true,
            Err(0) => false,
            Err(i) => cell < self.runs[i - 1].1,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.runs.iter().flat_map(|&(s, e)| s..e)
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        let mut runs = self.runs.clone();
        runs.extend_from_slice(&other.runs);
        CellSet::from_runs(runs)
    }

    pub fn intersection(&self, other: &CellSet) -> CellSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.runs.len() && j < other.runs.len() {
            let (a0, a1) = self.runs[i];
            let (b0, b1) = other.runs[j];
            let s = a0.max(b0);
            let e = a1.min(b1);
            if s < e {
                out.push((s, e));
            }
            if a1 <= b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        CellSet { runs: out }
    }

    pub fn intersection_len(&self, other: &CellSet) -> usize {
        self.intersection(other).len()
    }

    pub fn difference(&self, other: &CellSet) -> CellSet {
        let mut out = Vec::new();
        let mut j = 0;
        for &(s, e) in &self.runs {
            let mut cur = s;
            while j < other.runs.len() && other.runs[j].1 <= cur {
                j += 1;
            }
            let mut k = j;
            while cur < e && k < other.runs.len() && other.runs[k].0 < e {
                let (b0, b1) = other.runs[k];
                if b0 > cur {
                    out.push((cur, b0));
                }
                cur = cur.max(b1);
                k += 1;
            }
            if cur < e {
                out.push((cur, e));
            }
        }
        CellSet { runs: out }
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.difference(other).is_empty()
    }

    /// Run-length encoding as `start:len` pairs separated by `;`.
    pub fn to_rle(&self) -> String {
        self.runs
            .iter()
            .map(|(s, e)| format!("{}:{}", s, e - s))
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Clone, Debug)]
struct PrefixGrid {
    hi: Vec<f64>,
    lo: Vec<f64>,
}

impl PrefixGrid {
    fn build(domain: &LatticeDomain, value: impl Fn(usize) -> f64) -> PrefixGrid {
        let n = domain.n();
        if domain.dim() == 1 {
            let mut hi = vec![0.0; n + 1];
            let mut lo = vec![0.0; n + 1];
            let mut acc = DoubleDouble::ZERO;
            for i in 0..n {
                acc = acc.add_f64(value(i));
                hi[i + 1] = acc.hi;
                lo[i + 1] = acc.lo;
            }
            PrefixGrid { hi, lo }
        } else {
            let s = n + 1;
            let mut grid = vec![DoubleDouble::ZERO; s * s];
            for y in 0..n {
                let mut row = DoubleDouble::ZERO;
                for x in 0..n {
                    row = row.add_f64(value(y * n + x));
                    grid[(y + 1) * s + x + 1] = grid[y * s + x + 1].add(row);
                }
            }
            PrefixGrid {
                hi: grid.iter().map(|d| d.hi).collect(),
                lo: grid.iter().map(|d| d.lo).collect(),
            }
        }
    }

    #[inline]
    fn at(&self, i: usize) -> DoubleDouble {
        DoubleDouble {
            hi: self.hi[i],
            lo: self.lo[i],
        }
    }

    fn query(&self, domain: &LatticeDomain, b: &AlignedBox) -> f64 {
        if domain.dim() == 1 {
            self.at(b.hi[0]).sub(self.at(b.lo[0])).to_f64()
        } else {
            let s = domain.n() + 1;
            let p = |x: usize, y: usize| self.at(y * s + x);
            p(b.hi[0], b.hi[1])
                .sub(p(b.lo[0], b.hi[1]))
                .sub(p(b.hi[0], b.lo[1]))
                .add(p(b.lo[0], b.lo[1]))
                .to_f64()
        }
    }
}

#[derive(Clone, Debug)]
struct PrefixCache {
    re: PrefixGrid,
    im: PrefixGrid,
    abs: PrefixGrid,
}

/// Complex piecewise-constant function sampled at cell midpoints.
#[derive(Clone, Debug)]
pub struct SampledFunction {
    domain: LatticeDomain,
    values: Vec<C64>,
    prefix: OnceLock<Arc<PrefixCache>>,
}

impl PartialEq for SampledFunction {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain && self.values == other.values
    }
}

impl SampledFunction {
    pub fn from_values(domain: &LatticeDomain, values: Vec<C64>) -> Result<Self> {
        if values.len() != domain.num_cells() {
            return Err(Error::InvalidParameter(format!(
                "{} values for {} cells",
                values.len(),
                domain.num_cells()
            )));
        }
        if let Some(cell) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFiniteSymbol { cell });
        }
        Ok(SampledFunction {
            domain: *domain,
            values,
            prefix: OnceLock::new(),
        })
    }

    pub fn from_real(domain: &LatticeDomain, values: Vec<f64>) -> Result<Self> {
        Self::from_values(domain, values.into_iter().map(|x| C64::new(x, 0.0)).collect())
    }

    pub fn from_fn(domain: &LatticeDomain, f: impl Fn(Point) -> C64) -> Result<Self> {
        let values = (0..domain.num_cells()).map(|c| f(domain.cell_midpoint(c))).collect();
        Self::from_values(domain, values)
    }

    pub fn from_real_fn(domain: &LatticeDomain, f: impl Fn(Point) -> f64) -> Result<Self> {
        Self::from_fn(domain, |x| C64::new(f(x), 0.0))
    }

    pub fn constant(domain: &LatticeDomain, c: C64) -> Self {
        SampledFunction {
            domain: *domain,
            values: vec![c; domain.num_cells()],
            prefix: OnceLock::new(),
        }
    }

    pub fn zeros(domain: &LatticeDomain) -> Self {
        Self::constant(domain, C64::new(0.0, 0.0))
    }

    pub fn indicator_box(domain: &LatticeDomain, b: &AlignedBox) -> Self {
        let mut values = vec![C64::new(0.0, 0.0); domain.num_cells()];
        for c in b.cells(domain) {
            values[c] = C64::new(1.0, 0.0);
        }
        SampledFunction {
            domain: *domain,
            values,
            prefix: OnceLock::new(),
        }
    }

    pub fn indicator_set(domain: &LatticeDomain, s: &CellSet) -> Self {
        let mut values = vec![C64::new(0.0, 0.0); domain.num_cells()];
        for c in s.iter() {
            values[c] = C64::new(1.0, 0.0);
        }
        SampledFunction {
            domain: *domain,
            values,
            prefix: OnceLock::new(),
        }
    }

    pub fn domain(&self) -> &LatticeDomain {
        &self.domain
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn value(&self, cell: usize) -> C64 {
        self.values[cell]
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    /// Mutates the samples in place and invalidates the prefix cache.
    pub fn update(&mut self, f: impl FnOnce(&mut [C64])) -> Result<()> {
        f(&mut self.values);
        self.prefix = OnceLock::new();
        if let Some(cell) = self
            .values
            .iter()
            .position(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(Error::NonFiniteSymbol { cell });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Result<Self> {
        Self::from_values(&self.domain, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &SampledFunction, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        self.domain.same_as(&other.domain)?;
        Self::from_values(
            &self.domain,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn add(&self, other: &SampledFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &SampledFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: C64) -> Self {
        SampledFunction {
            domain: self.domain,
            values: self.values.iter().map(|&v| v * c).collect(),
            prefix: OnceLock::new(),
        }
    }

    pub fn abs(&self) -> Self {
        SampledFunction {
            domain: self.domain,
            values: self.values.iter().map(|v| C64::new(v.norm(), 0.0)).collect(),
            prefix: OnceLock::new(),
        }
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    fn prefix(&self) -> &PrefixCache {
        self.prefix.get_or_init(|| {
            let v = &self.values;
            Arc::new(PrefixCache {
                re: PrefixGrid::build(&self.domain, |i| v[i].re),
                im: PrefixGrid::build(&self.domain, |i| v[i].im),
                abs: PrefixGrid::build(&self.domain, |i| v[i].norm()),
            })
        })
    }

    /// Sum of samples over the box (no volume factor).
    pub fn box_sum(&self, b: &AlignedBox) -> C64 {
        let p = self.prefix();
        C64::new(p.re.query(&self.domain, b), p.im.query(&self.domain, b))
    }

    pub fn box_abs_sum(&self, b: &AlignedBox) -> f64 {
        self.prefix().abs.query(&self.domain, b)
    }

    /// Sum of samples over a cell set by direct compensated summation.
    pub fn set_sum(&self, s: &CellSet) -> C64 {
        let mut acc = ComplexKahanSum::new();
        for c in s.iter() {
            acc.add(self.values[c]);
        }
        acc.value()
    }

    pub fn set_abs_sum(&self, s: &CellSet) -> f64 {
        s.iter().map(|c| self.values[c].norm()).collect::<KahanSum>().value()
    }

    /// Writes `cell,x0[,x1],re,im` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if self.domain.dim() == 1 {
            writeln!(w, "cell,x0,re,im")?;
        } else {
            writeln!(w, "cell,x0,x1,re,im")?;
        }
        for (c, v) in self.values.iter().enumerate() {
            let x = self.domain.cell_midpoint(c);
            if self.domain.dim() == 1 {
                writeln!(w, "{c},{},{},{}", fmt_f64(x[0]), fmt_f64(v.re), fmt_f64(v.im))?;
            } else {
                writeln!(
                    w,
                    "{c},{},{},{},{}",
                    fmt_f64(x[0]),
                    fmt_f64(x[1]),
                    fmt_f64(v.re),
                    fmt_f64(v.im)
                )?;
            }
        }
        Ok(())
    }

    /// Stores samples and prefix arrays in a versioned little-endian file.
    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.domain.dim() as u32).to_le_bytes())?;
        w.write_all(&self.domain.depth().to_le_bytes())?;
        w.write_all(&self.domain.half_width().to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        let p = self.prefix();
        for g in [&p.re, &p.im, &p.abs] {
            for x in g.hi.iter().chain(&g.lo) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_cache(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::CorruptCache("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CACHE_VERSION {
            return Err(Error::CorruptCache(format!("version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let depth = read_u32(&mut r)?;
        let half_width = read_f64(&mut r)?;
        let domain = LatticeDomain::new(dim, half_width, depth)
            .map_err(|e| Error::CorruptCache(e.to_string()))?;
        let mut values = Vec::with_capacity(domain.num_cells());
        for _ in 0..domain.num_cells() {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            values.push(C64::new(re, im));
        }
        let len = (domain.n() + 1).pow(dim as u32);
        let mut grids = Vec::with_capacity(3);
        for _ in 0..3 {
            let mut hi = vec![0.0; len];
            let mut lo = vec![0.0; len];
            for x in hi.iter_mut().chain(lo.iter_mut()) {
                *x = read_f64(&mut r)?;
            }
            grids.push(PrefixGrid { hi, lo });
        }
        let abs = grids.pop().unwrap();
        let im = grids.pop().unwrap();
        let re = grids.pop().unwrap();
        let f = SampledFunction::from_values(&domain, values)?;
        let _ = f.prefix.set(Arc::new(PrefixCache { re, im, abs }));
        Ok(f)
    }
}

const CACHE_MAGIC: &[u8; 8] = b"BLMPFX\0\0";
const CACHE_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::CorruptCache(e.to_string()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::CorruptCache(e.to_string()))?;
    Ok(f64::from_le_bytes(b))
}

/// Fixed 17-significant-digit formatting used by every CSV writer.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `h^d * sum over the box` of `f`.
pub fn cube_integral(f: &SampledFunction, b: &AlignedBox) -> C64 {
    f.box_sum(b) * f.domain.cell_volume()
}

pub fn cube_average(f: &SampledFunction, b: &AlignedBox) -> C64 {
    f.box_sum(b) / b.num_cells() as f64
}

pub fn set_integral(f: &SampledFunction, s: &CellSet) -> C64 {
    f.set_sum(s) * f.domain.cell_volume()
}

pub fn set_average(f: &SampledFunction, s: &CellSet) -> Result<C64> {
    if s.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(f.set_sum(s) / s.len() as f64)
}

/// `(h^d Σ |f_i w_i|^p)^{1/p}`: the weight acts as a multiplier.
pub fn weighted_lp_norm(f: &SampledFunction, p: f64, w: &Weight) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidExponent(format!("p = {p} must lie in [1, inf)")));
    }
    f.domain.same_as(w.domain())?;
    Ok(lp_norm_slice(f.values(), p, Some(w.values()), f.domain.cell_volume()))
}

/// `(vol Σ |f_i m_i|^p)^{1/p}` with an optional real multiplier, scaled
/// against overflow.
pub fn lp_norm_slice(f: &[C64], p: f64, multiplier: Option<&[f64]>, vol: f64) -> f64 {
    let val = |i: usize| match multiplier {
        Some(m) => f[i].norm() * m[i],
        None => f[i].norm(),
    };
    let scale = (0..f.len()).map(val).fold(0.0f64, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = (0..f.len())
        .map(|i| (val(i) / scale).powf(p))
        .collect::<KahanSum>()
        .value();
    scale * (vol * s).powf(1.0 / p)
}
