//! Dyadic grids on the lattice, the `3^d` adjacent shifted systems (wrapping
//! on the torus), cube enumeration and maximal functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{AlignedBox, CellSet, LatticeDomain, Point, SampledFunction, C64};

/// Grid `id` of the adjacent family; digit `t_a = (id / 3^a) % 3` shifts axis
/// `a` by `round(t_a * n / 3)` cells. Grid 0 is the canonical grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicGrid {
    pub id: usize,
    pub shift: [usize; 2],
}

impl DyadicGrid {
    pub fn canonical() -> Self {
        DyadicGrid {
            id: 0,
            shift: [0, 0],
        }
    }

    pub fn new(domain: &LatticeDomain, id: usize) -> Result<Self> {
        let count = 3usize.pow(domain.dim() as u32);
        if id >= count {
            return Err(Error::InvalidParameter(format!("grid {id} of {count}")));
        }
        Ok(DyadicGrid {
            id,
            shift: grid_shift(domain, id),
        })
    }

    pub fn is_canonical(&self) -> bool {
        self.id == 0
    }

    /// Shift as a fraction of the domain width, per axis.
    pub fn shift_fraction(&self, domain: &LatticeDomain) -> [f64; 2] {
        let n = domain.n() as f64;
        [self.shift[0] as f64 / n, self.shift[1] as f64 / n]
    }

    pub fn root(&self) -> DyadicCube {
        DyadicCube {
            grid: self.id,
            gen: 0,
            k: [0, 0],
        }
    }
}

fn grid_shift(domain: &LatticeDomain, id: usize) -> [usize; 2] {
    let n = domain.n() as f64;
    let t0 = id % 3;
    let t1 = (id / 3) % 3;
    let s = |t: usize| ((t as f64) * n / 3.0).round() as usize % domain.n();
    if domain.dim() == 1 {
        [s(t0), 0]
    } else {
        [s(t0), s(t1)]
    }
}

pub fn grids(domain: &LatticeDomain) -> Vec<DyadicGrid> {
    (0..3usize.pow(domain.dim() as u32))
        .map(|id| DyadicGrid {
            id,
            shift: grid_shift(domain, id),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub grid: usize,
    pub gen: u32,
    pub k: [usize; 2],
}

impl DyadicCube {
    pub fn canonical(gen: u32, k: [usize; 2]) -> Self {
        DyadicCube { grid: 0, gen, k }
    }

    pub fn side_cells(&self, domain: &LatticeDomain) -> usize {
        domain.n() >> self.gen
    }

    pub fn side_length(&self, domain: &LatticeDomain) -> f64 {
        domain.width() / (1u64 << self.gen) as f64
    }

    pub fn num_cells(&self, domain: &LatticeDomain) -> usize {
        self.side_cells(domain).pow(domain.dim() as u32)
    }

    pub fn volume(&self, domain: &LatticeDomain) -> f64 {
        self.side_length(domain).powi(domain.dim() as i32)
    }

    /// First cell per axis on the torus.
    pub fn start(&self, domain: &LatticeDomain) -> [usize; 2] {
        let n = domain.n();
        let shift = grid_shift(domain, self.grid);
        let side = self.side_cells(domain);
        let mut s = [0, 0];
        for (a, v) in s.iter_mut().enumerate().take(domain.dim()) {
            *v = (shift[a] + self.k[a] * side) % n;
        }
        s
    }

    pub fn wraps(&self, domain: &LatticeDomain) -> bool {
        let side = self.side_cells(domain);
        let s = self.start(domain);
        (0..domain.dim()).any(|a| s[a] + side > domain.n())
    }

    /// The cube as a box, or `None` if it wraps around the torus.
    pub fn as_box(&self, domain: &LatticeDomain) -> Option<AlignedBox> {
        if self.wraps(domain) {
            return None;
        }
        let side = self.side_cells(domain);
        let s = self.start(domain);
        let mut hi = [s[0] + side, 1];
        if domain.dim() == 2 {
            hi[1] = s[1] + side;
        }
        Some(AlignedBox { lo: s, hi })
    }

    /// Up to `2^d` boxes whose union is the (possibly wrapped) cube.
    pub fn pieces(&self, domain: &LatticeDomain) -> Vec<AlignedBox> {
        let n = domain.n();
        let side = self.side_cells(domain);
        let s = self.start(domain);
        let axis_ranges = |a: usize| -> Vec<(usize, usize)> {
            if a >= domain.dim() {
                vec![(0, 1)]
            } else if s[a] + side <= n {
                vec![(s[a], s[a] + side)]
            } else {
                vec![(s[a], n), (0, s[a] + side - n)]
            }
        };
        let mut out = Vec::new();
        for &(x0, x1) in &axis_ranges(0) {
            for &(y0, y1) in &axis_ranges(1) {
                out.push(AlignedBox {
                    lo: [x0, y0],
                    hi: [x1, y1],
                });
            }
        }
        out
    }

    pub fn cell_set(&self, domain: &LatticeDomain) -> CellSet {
        let mut runs = Vec::new();
        for b in self.pieces(domain) {
            runs.extend(b.rows(domain));
        }
        CellSet::from_runs(runs)
    }

    pub fn contains_cell(&self, domain: &LatticeDomain, cell: usize) -> bool {
        let n = domain.n();
        let c = domain.cell_coords(cell);
        let shift = grid_shift(domain, self.grid);
        let side = self.side_cells(domain);
        (0..domain.dim()).all(|a| ((c[a] + n - shift[a]) % n) / side == self.k[a])
    }

    /// Euclidean distance from the origin to the closed cube (minimum over the
    /// wrapped pieces).
    pub fn dist_to_origin(&self, domain: &LatticeDomain) -> f64 {
        self.pieces(domain)
            .iter()
            .map(|b| b.dist_to_origin(domain))
            .fold(f64::INFINITY, f64::min)
    }

    /// Center on the torus, reported inside `[-L, L)^d`.
    pub fn center(&self, domain: &LatticeDomain) -> Point {
        let s = self.start(domain);
        let half = self.side_cells(domain) as f64 / 2.0;
        let n = domain.n() as f64;
        let mut c = [0.0; 2];
        for a in 0..domain.dim() {
            let idx = (s[a] as f64 + half) % n;
            c[a] = -domain.half_width() + idx * domain.cell_width();
        }
        c
    }

    pub fn parent(&self) -> Option<DyadicCube> {
        if self.gen == 0 {
            None
        } else {
            Some(DyadicCube {
                grid: self.grid,
                gen: self.gen - 1,
                k: [self.k[0] / 2, self.k[1] / 2],
            })
        }
    }

    /// The `2^d` children, or none at cell level.
    pub fn children(&self, domain: &LatticeDomain) -> Vec<DyadicCube> {
        if self.gen >= domain.depth() {
            return Vec::new();
        }
        let g = self.gen + 1;
        let mut out = Vec::with_capacity(1 << domain.dim());
        let ys: &[usize] = if domain.dim() == 2 { &[0, 1] } else { &[0] };
        for &dy in ys {
            for dx in 0..2 {
                let k1 = if domain.dim() == 2 { 2 * self.k[1] + dy } else { 0 };
                out.push(DyadicCube {
                    grid: self.grid,
                    gen: g,
                    k: [2 * self.k[0] + dx, k1],
                });
            }
        }
        out
    }

    pub fn ancestor_at(&self, gen: u32) -> Option<DyadicCube> {
        if gen > self.gen {
            return None;
        }
        let s = self.gen - gen;
        Some(DyadicCube {
            grid: self.grid,
            gen,
            k: [self.k[0] >> s, self.k[1] >> s],
        })
    }

    /// Same-grid containment (a cube contains itself).
    pub fn contains(&self, other: &DyadicCube) -> bool {
        self.grid == other.grid && other.ancestor_at(self.gen) == Some(*self)
    }

    pub fn id(&self) -> String {
        format!("{}:{}:{}:{}", self.grid, self.gen, self.k[0], self.k[1])
    }

    /// Linear index inside its generation, used for deterministic ordering.
    pub fn linear_index(&self) -> usize {
        (self.k[1] << self.gen) + self.k[0]
    }

    /// Sort key `(generation, index)`.
    pub fn order_key(&self) -> (u32, usize, usize) {
        (self.gen, self.linear_index(), self.grid)
    }
}

/// Cube selection filters; all bounds inclusive.
#[derive(Clone, Debug, Default)]
pub struct CubeFilter {
    pub ell_min: Option<f64>,
    pub ell_max: Option<f64>,
    pub dist_min: Option<f64>,
    pub dist_max: Option<f64>,
    pub ancestor: Option<DyadicCube>,
    /// Drop cubes that wrap around the torus.
    pub whole_only: bool,
}

impl CubeFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn ell_range(mut self, lo: f64, hi: f64) -> Self {
        self.ell_min = Some(lo);
        self.ell_max = Some(hi);
        self
    }

    pub fn dist_range(mut self, lo: Option<f64>, hi: Option<f64>) -> Self {
        self.dist_min = lo;
        self.dist_max = hi;
        self
    }

    pub fn within(mut self, ancestor: DyadicCube) -> Self {
        self.ancestor = Some(ancestor);
        self
    }

    pub fn whole(mut self) -> Self {
        self.whole_only = true;
        self
    }
}

const REL: f64 = 1e-12;

/// Every cube of the grid passing the filter, ordered by `(generation, index)`.
pub fn enumerate_cubes<'a>(
    domain: &'a LatticeDomain,
    grid: &DyadicGrid,
    filter: &'a CubeFilter,
) -> impl Iterator<Item = DyadicCube> + 'a {
    let gid = grid.id;
    let dim = domain.dim();
    let anc = filter.ancestor.filter(|a| a.grid == gid);
    let anc_mismatch = filter.ancestor.is_some() && anc.is_none();
    (0..=domain.depth())
        .filter(move |&j| {
            let ell = domain.width() / (1u64 << j) as f64;
            !anc_mismatch
                && filter.ell_min.map_or(true, |m| ell >= m * (1.0 - REL))
                && filter.ell_max.map_or(true, |m| ell <= m * (1.0 + REL))
                && anc.map_or(true, |a| j >= a.gen)
        })
        .flat_map(move |j| {
            let (lo, count) = match anc {
                Some(a) => {
                    let s = j - a.gen;
                    ([a.k[0] << s, a.k[1] << s], 1usize << s)
                }
                None => ([0, 0], 1usize << j),
            };
            let ny = if dim == 2 { count } else { 1 };
            (0..ny).flat_map(move |y| {
                (0..count).map(move |x| DyadicCube {
                    grid: gid,
                    gen: j,
                    k: [lo[0] + x, if dim == 2 { lo[1] + y } else { 0 }],
                })
            })
        })
        .filter(move |q| {
            if filter.whole_only && q.wraps(domain) {
                return false;
            }
            if filter.dist_min.is_none() && filter.dist_max.is_none() {
                return true;
            }
            let dist = q.dist_to_origin(domain);
            filter.dist_min.map_or(true, |m| dist >= m)
                && filter.dist_max.map_or(true, |m| dist <= m)
        })
}

/// Smallest cube of the adjacent grids containing the box with side at most
/// three times the box's longest side. Ties go to the smallest grid id, then
/// the smallest side. Wrapped cubes are never accepted.
pub fn enclosing_cube(domain: &LatticeDomain, b: &AlignedBox) -> Result<DyadicCube> {
    let ell = b.max_side_cells(domain);
    if 3 * ell > domain.n() {
        return Err(Error::NoEnclosure(format!(
            "side {ell} cells exceeds a third of the domain ({} cells)",
            domain.n()
        )));
    }
    let n = domain.n();
    for g in grids(domain) {
        for j in (0..=domain.depth()).rev() {
            let side = n >> j;
            if side < ell {
                continue;
            }
            if side > 3 * ell {
                break;
            }
            let mut k = [0, 0];
            let mut ok = true;
            for a in 0..domain.dim() {
                let rel = (b.lo[a] + n - g.shift[a]) % n;
                let ka = rel / side;
                let start = (g.shift[a] + ka * side) % n;
                let end = start + side;
                if end > n || start > b.lo[a] || b.hi[a] > end {
                    ok = false;
                    break;
                }
                k[a] = ka;
            }
            if ok {
                return Ok(DyadicCube { grid: g.id, gen: j, k });
            }
        }
    }
    Err(Error::NoEnclosure(format!("{b:?}")))
}

/// Canonical dyadic maximal function `max_{Q ∋ x} ⟨|f|⟩_Q`.
pub fn dyadic_maximal(f: &SampledFunction, grid: &DyadicGrid) -> Result<SampledFunction> {
    if !grid.is_canonical() {
        return Err(Error::ShiftedGrid(grid.id));
    }
    let domain = *f.domain();
    let m = domain.depth();
    let dim = domain.dim();
    // Running maxima per cube of the current generation, refined top-down.
    let mut best = vec![0.0f64; 1];
    for j in 0..=m {
        let per_axis = 1usize << j;
        let count = per_axis.pow(dim as u32);
        let mut next = vec![0.0f64; count];
        for (idx, slot) in next.iter_mut().enumerate() {
            let k = [idx % per_axis, if dim == 2 { idx / per_axis } else { 0 }];
            let q = DyadicCube::canonical(j, k);
            let b = q.as_box(&domain).expect("canonical cubes never wrap");
            let avg = f.box_abs_sum(&b) / b.num_cells() as f64;
            let parent = if j == 0 {
                0.0
            } else {
                let pk = [k[0] / 2, k[1] / 2];
                best[if dim == 2 { pk[1] * (per_axis / 2) + pk[0] } else { pk[0] }]
            };
            *slot = avg.max(parent);
        }
        best = next;
    }
    // At generation m cubes are cells and the index layout matches cells.
    SampledFunction::from_real(&domain, best)
}

/// Centered maximal function over odd cell boxes centered at each cell, with
/// `f` extended by zero outside the domain.
pub fn centered_maximal(f: &SampledFunction) -> Result<SampledFunction> {
    let domain = *f.domain();
    let n = domain.n() as isize;
    let dim = domain.dim();
    let mut out = vec![0.0; domain.num_cells()];
    for (cell, slot) in out.iter_mut().enumerate() {
        let c = domain.cell_coords(cell);
        let mut best = 0.0f64;
        for k in 0..n {
            let clip = |x: usize| -> (usize, usize) {
                let lo = (x as isize - k).max(0) as usize;
                let hi = (x as isize + k + 1).min(n) as usize;
                (lo, hi)
            };
            let (x0, x1) = clip(c[0]);
            let (y0, y1) = if dim == 2 { clip(c[1]) } else { (0, 1) };
            let b = AlignedBox {
                lo: [x0, y0],
                hi: [x1, y1],
            };
            let full = ((2 * k + 1) as f64).powi(dim as i32);
            best = best.max(f.box_abs_sum(&b) / full);
        }
        *slot = best;
    }
    SampledFunction::from_real(&domain, out)
}

/// Constant `C_M` with `Σ_{Q ⊇ R} (|R|/|Q|) 1_Q ≤ C_M M(1_R)` for the
/// canonical maximal function: the ancestors of the smallest cube containing
/// both `R` and `x` contribute a geometric series of ratio `2^{-d}`.
pub fn ancestor_series_constant(dim: usize) -> f64 {
    let t = (1u32 << dim) as f64;
    t / (t - 1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct DominationReport {
    pub cube: String,
    pub constant: f64,
    pub max_ratio: f64,
    pub violations: usize,
}

/// Checks `Σ_{Q ⊇ R} (|R|/|Q|) 1_Q ≤ C_M M(1_R)` on every cell.
pub fn ancestor_series_check(domain: &LatticeDomain, r: &DyadicCube) -> Result<DominationReport> {
    if r.grid != 0 {
        return Err(Error::ShiftedGrid(r.grid));
    }
    let rb = r.as_box(domain).expect("canonical");
    let ind = SampledFunction::indicator_box(domain, &rb);
    let m = dyadic_maximal(&ind, &DyadicGrid::canonical())?;
    let c = ancestor_series_constant(domain.dim());
    let mut lhs = vec![0.0f64; domain.num_cells()];
    let rv = r.volume(domain);
    for g in 0..=r.gen {
        let q = r.ancestor_at(g).unwrap();
        let ratio = rv / q.volume(domain);
        for cell in q.as_box(domain).unwrap().cells(domain) {
            lhs[cell] += ratio;
        }
    }
    let mut max_ratio = 0.0f64;
    let mut violations = 0;
    for (cell, l) in lhs.iter().enumerate() {
        let rhs = m.value(cell).re;
        max_ratio = max_ratio.max(l / rhs);
        if *l > c * rhs * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    Ok(DominationReport {
        cube: r.id(),
        constant: c,
        max_ratio,
        violations,
    })
}

/// Sum of `|f|` over a possibly wrapped cube.
pub fn cube_abs_sum(f: &SampledFunction, q: &DyadicCube) -> f64 {
    q.pieces(f.domain()).iter().map(|b| f.box_abs_sum(b)).sum()
}

/// Sum of `f` over a possibly wrapped cube.
pub fn cube_sum(f: &SampledFunction, q: &DyadicCube) -> C64 {
    q.pieces(f.domain()).iter().map(|b| f.box_sum(b)).sum()
}
