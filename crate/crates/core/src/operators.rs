//! Discretized Calderón–Zygmund kernels, dense operator matrices, smooth
//! radial windows, commutators and the compact/remainder decomposition.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::centered_maximal;
use crate::error::{Error, Result};
use crate::lattice::{LatticeDomain, Point, SampledFunction, C64};

/// Largest number of matrix entries `n^{2d}` assembled densely.
pub const MAX_MATRIX_ENTRIES: usize = 1 << 26;

/// Number of random pairs used to confirm a size bound.
pub const SIZE_SAMPLES: usize = 10_000;

pub type KernelFn = Arc<dyn Fn(&Point, &Point) -> f64 + Send + Sync>;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelVariant {
    Hilbert,
    Riesz { axis: usize },
    Custom { name: String },
}

/// Smoothness modulus `ω`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modulus {
    /// `scale · t^γ`.
    Power { scale: f64, gamma: f64 },
    /// `(1 + log(1/t))^{-θ}`, Dini for `θ > 1`.
    LogPower { theta: f64 },
}

impl Modulus {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Modulus::Power { scale, gamma } => scale * t.powf(gamma),
            Modulus::LogPower { theta } => (1.0 - t.ln()).powf(-theta),
        }
    }

    /// `ω(e^{-u})`, exact for large `u`.
    fn eval_log(&self, u: f64) -> f64 {
        match *self {
            Modulus::Power { scale, gamma } => scale * (-gamma * u).exp(),
            Modulus::LogPower { theta } => (1.0 + u).powf(-theta),
        }
    }
}

/// `∫_0^1 ω(t) dt/t` by Simpson's rule after `t = exp(1 - e^s)`, with the
/// analytic tail for logarithmic moduli.
pub fn dini_norm(w: &Modulus) -> f64 {
    let s_max: f64 = 40.0;
    let n = 20_000;
    let step = s_max / n as f64;
    let f = |s: f64| {
        w.eval_log(s.exp_m1()) * s.exp()
    };
    let mut acc = f(0.0) + f(s_max);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * step);
    }
    let tail = match *w {
        Modulus::Power { .. } => 0.0,
        Modulus::LogPower { theta } => ((1.0 - theta) * s_max).exp() / (theta - 1.0),
    };
    acc * step / 3.0 + tail
}

#[derive(Clone)]
pub struct KernelSpec {
    pub variant: KernelVariant,
    pub dim: usize,
    /// `C` in `|K(x,y)| ≤ C |x-y|^{-d}`.
    pub size_constant: f64,
    pub modulus: Modulus,
    pub antisymmetric: bool,
    pub nondegenerate: bool,
    /// Largest `|K|·|x-y|^d` seen while sampling the size bound.
    pub sampled_size: f64,
    eval: KernelFn,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("variant", &self.variant)
            .field("dim", &self.dim)
            .field("size_constant", &self.size_constant)
            .field("modulus", &self.modulus)
            .field("antisymmetric", &self.antisymmetric)
            .finish()
    }
}

fn dist(dim: usize, x: &Point, y: &Point) -> f64 {
    (0..dim).map(|a| (x[a] - y[a]).powi(2)).sum::<f64>().sqrt()
}

/// Samples `SIZE_SAMPLES` pairs in `[-4, 4]^d` and returns the largest scaled
/// value, or the first pair exceeding `c`.
fn check_size(dim: usize, c: f64, eval: &KernelFn, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..SIZE_SAMPLES {
        let mut x = [0.0; 2];
        let mut y = [0.0; 2];
        for a in 0..dim {
            x[a] = rng.gen_range(-4.0..4.0);
            y[a] = rng.gen_range(-4.0..4.0);
        }
        let r = dist(dim, &x, &y);
        if r == 0.0 {
            continue;
        }
        let scaled = eval(&x, &y).abs() * r.powi(dim as i32);
        if !(scaled <= c * (1.0 + 1e-12)) {
            return Err(Error::KernelSizeBound { x, y, scaled, bound: c });
        }
        worst = worst.max(scaled);
    }
    Ok(worst)
}

impl KernelSpec {
    pub fn eval(&self, x: &Point, y: &Point) -> f64 {
        (self.eval)(x, y)
    }

    /// Kernel with a declared size constant, verified on random pairs.
    pub fn custom(
        name: &str,
        dim: usize,
        size_constant: f64,
        modulus: Modulus,
        antisymmetric: bool,
        eval: KernelFn,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::KernelDimension {
                variant: name.into(),
                dim,
            });
        }
        let sampled_size = check_size(dim, size_constant, &eval, 0x6b65_726e)?;
        Ok(KernelSpec {
            variant: KernelVariant::Custom { name: name.into() },
            dim,
            size_constant,
            modulus,
            antisymmetric,
            nondegenerate: false,
            sampled_size,
            eval,
        })
    }

    pub fn label(&self) -> String {
        match &self.variant {
            KernelVariant::Hilbert => "hilbert".into(),
            KernelVariant::Riesz { axis } => format!("riesz{}", axis + 1),
            KernelVariant::Custom { name } => name.clone(),
        }
    }

    pub fn dini_norm(&self) -> f64 {
        dini_norm(&self.modulus)
    }
}

/// Hilbert `1/(x-y)` in `d = 1` or Riesz `(x_j - y_j)/|x-y|^{d+1}` in `d = 2`.
pub fn make_kernel(variant: &KernelVariant, dim: usize) -> Result<KernelSpec> {
    let (eval, modulus): (KernelFn, Modulus) = match variant {
        KernelVariant::Hilbert => {
            if dim != 1 {
                return Err(Error::KernelDimension {
                    variant: "hilbert".into(),
                    dim,
                });
            }
            (
                Arc::new(|x: &Point, y: &Point| {
                    let z = x[0] - y[0];
                    if z == 0.0 {
                        0.0
                    } else {
                        1.0 / z
                    }
                }),
                Modulus::Power { scale: 2.0, gamma: 1.0 },
            )
        }
        KernelVariant::Riesz { axis } => {
            if dim != 2 || *axis > 1 {
                return Err(Error::KernelDimension {
                    variant: format!("riesz{}", axis + 1),
                    dim,
                });
            }
            let a = *axis;
            (
                Arc::new(move |x: &Point, y: &Point| {
                    let r2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
                    if r2 == 0.0 {
                        0.0
                    } else {
                        (x[a] - y[a]) / (r2 * r2.sqrt())
                    }
                }),
                Modulus::Power { scale: 8.0, gamma: 1.0 },
            )
        }
        KernelVariant::Custom { name } => return catalog_kernel(name, dim),
    };
    let sampled_size = check_size(dim, 1.0, &eval, 0x6b65_726e)?;
    Ok(KernelSpec {
        variant: variant.clone(),
        dim,
        size_constant: 1.0,
        modulus,
        antisymmetric: true,
        nondegenerate: true,
        sampled_size,
        eval,
    })
}

/// Named kernels: `hilbert`, `riesz1`, `riesz2`, and the one-dimensional
/// `hilbert_cos`, `hilbert_exp`, `variable`, `tempered`.
pub fn kernel_by_name(name: &str, dim: usize) -> Result<KernelSpec> {
    match name {
        "hilbert" => make_kernel(&KernelVariant::Hilbert, dim),
        "riesz1" => make_kernel(&KernelVariant::Riesz { axis: 0 }, dim),
        "riesz2" => make_kernel(&KernelVariant::Riesz { axis: 1 }, dim),
        other => catalog_kernel(other, dim),
    }
}

fn catalog_kernel(name: &str, dim: usize) -> Result<KernelSpec> {
    let one_d = |z: fn(f64, f64) -> f64| -> KernelFn {
        Arc::new(move |x: &Point, y: &Point| if x[0] == y[0] { 0.0 } else { z(x[0], y[0]) })
    };
    let lip = Modulus::Power { scale: 4.0, gamma: 1.0 };
    if dim != 1 {
        return Err(Error::KernelDimension {
            variant: name.into(),
            dim,
        });
    }
    let (eval, c, anti) = match name {
        "hilbert_cos" => (one_d(|x, y| (x - y).cos() / (x - y)), 1.0, true),
        "hilbert_exp" => (one_d(|x, y| (-(x - y).abs()).exp() / (x - y)), 1.0, true),
        "variable" => (one_d(|x, y| (1.0 + 0.5 * x.sin()) / (x - y)), 1.5, false),
        "tempered" => (one_d(|x, y| 1.0 / ((x - y) * (1.0 + (x + y).powi(2)))), 1.0, true),
        _ => {
            return Err(Error::InvalidParameter(format!("unknown kernel {name}")));
        }
    };
    let mut k = KernelSpec::custom(name, dim, c, lip, anti, eval)?;
    k.nondegenerate = true;
    Ok(k)
}

pub const NONDEGENERACY_MIN: f64 = 0.01;

/// A point `x` with `|x - y| ≥ r` maximizing `|K(x,y)| r^d` among the points
/// `y + ρ u`, `ρ ∈ {r, 3r/2, 2r}`, `u` from a fixed direction set, that stay
/// in the closed domain box.
pub fn nondegeneracy_probe(k: &KernelSpec, domain: &LatticeDomain, y: Point, r: f64, c_min: f64) -> Result<(Point, f64)> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius {r}")));
    }
    let l = domain.half_width();
    if (0..k.dim).any(|a| y[a] < -l || y[a] > l) {
        return Err(Error::OutOfDomain(format!("{y:?}")));
    }
    let dirs: Vec<Point> = if k.dim == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..16)
            .map(|i| {
                let t = i as f64 * std::f64::consts::PI / 8.0;
                [t.cos(), t.sin()]
            })
            .collect()
    };
    let mut best: Option<(Point, f64)> = None;
    for rho in [r, 1.5 * r, 2.0 * r] {
        for u in &dirs {
            let x = [y[0] + rho * u[0], y[1] + rho * u[1]];
            if (0..k.dim).any(|a| x[a] < -l - 1e-12 || x[a] > l + 1e-12) {
                continue;
            }
            let c = k.eval(&x, &y).abs() * r.powi(k.dim as i32);
            if best.map_or(true, |(_, b)| c > b) {
                best = Some((x, c));
            }
        }
    }
    match best {
        Some((x, c)) if c >= c_min => Ok((x, c)),
        other => Err(Error::Degenerate {
            y,
            r,
            best: other.map_or(0.0, |(_, c)| c),
            required: c_min,
        }),
    }
}

/// `φ(t) = 1` on `|t| ≤ a`, `0` on `|t| ≥ b`, `cos²(π(|t|-a)/(2(b-a)))` between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bump {
    pub a: f64,
    pub b: f64,
}

impl Default for Bump {
    fn default() -> Self {
        Bump { a: 0.5, b: 1.0 }
    }
}

impl Bump {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(0.0 < a && a < b && b.is_finite()) {
            return Err(Error::InvalidParameter(format!("bump radii ({a}, {b})")));
        }
        Ok(Bump { a, b })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let t = t.abs();
        if t <= self.a {
            1.0
        } else if t >= self.b {
            0.0
        } else {
            (std::f64::consts::PI * (t - self.a) / (2.0 * (self.b - self.a))).cos().powi(2)
        }
    }

    pub fn lipschitz(&self) -> f64 {
        std::f64::consts::PI / (2.0 * (self.b - self.a))
    }
}

/// `φ^{r,R}(z) = (1 - φ(|z|/r)) φ(|z|/R)` with `r = 0` meaning no inner
/// cutoff and `R = ∞` no outer one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RadialWindow {
    pub inner: f64,
    pub outer: Option<f64>,
    pub bump: Bump,
}

impl RadialWindow {
    pub fn annulus(inner: f64, outer: f64) -> Self {
        RadialWindow {
            inner,
            outer: Some(outer),
            bump: Bump::default(),
        }
    }

    pub fn outside(inner: f64) -> Self {
        RadialWindow {
            inner,
            outer: None,
            bump: Bump::default(),
        }
    }

    pub fn ball(outer: f64) -> Self {
        RadialWindow {
            inner: 0.0,
            outer: Some(outer),
            bump: Bump::default(),
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        let lo = if self.inner > 0.0 { 1.0 - self.bump.eval(z / self.inner) } else { 1.0 };
        let hi = self.outer.map_or(1.0, |r| self.bump.eval(z / r));
        lo * hi
    }
}

/// Dense real matrix in row-major order acting on cell vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    domain: LatticeDomain,
    size: usize,
    data: Vec<f64>,
    pub kernel: String,
    pub window: Option<RadialWindow>,
}

fn guard(domain: &LatticeDomain) -> Result<usize> {
    let n = domain.num_cells();
    if n.checked_mul(n).map_or(true, |e| e > MAX_MATRIX_ENTRIES) {
        return Err(Error::ResourceGuard(format!(
            "{n}x{n} matrix exceeds {MAX_MATRIX_ENTRIES} entries"
        )));
    }
    Ok(n)
}

impl OperatorMatrix {
    /// Builds the matrix row by row from `entry(i, j)`; the diagonal is zero.
    pub fn from_entries(
        domain: &LatticeDomain,
        kernel: String,
        window: Option<RadialWindow>,
        entry: impl Fn(usize, usize) -> f64 + Sync,
    ) -> Result<Self> {
        let n = guard(domain)?;
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                if i != j {
                    *slot = entry(i, j);
                }
            }
        });
        Ok(OperatorMatrix {
            domain: *domain,
            size: n,
            data,
            kernel,
            window,
        })
    }

    pub fn domain(&self) -> &LatticeDomain {
        &self.domain
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn apply_slice(&self, f: &[C64]) -> Vec<C64> {
        self.data
            .par_chunks(self.size)
            .map(|row| {
                let mut re = 0.0;
                let mut im = 0.0;
                for (a, v) in row.iter().zip(f) {
                    re += a * v.re;
                    im += a * v.im;
                }
                C64::new(re, im)
            })
            .collect()
    }

    /// `Aᵀ f`.
    pub fn apply_transpose_slice(&self, f: &[C64]) -> Vec<C64> {
        let n = self.size;
        (0..n)
            .into_par_iter()
            .map(|j| {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..n {
                    acc += self.data[i * n + j] * f[i];
                }
                acc
            })
            .collect()
    }

    pub fn apply(&self, f: &SampledFunction) -> Result<SampledFunction> {
        self.domain.same_as(f.domain())?;
        SampledFunction::from_values(&self.domain, self.apply_slice(f.values()))
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.size, self.size, &self.data)
    }

    pub fn is_antisymmetric(&self) -> bool {
        let n = self.size;
        (0..n).all(|i| (i..n).all(|j| self.data[i * n + j] == -self.data[j * n + i]))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A + B - C|` entrywise.
    pub fn sum_residual(&self, b: &OperatorMatrix, c: &OperatorMatrix) -> Result<f64> {
        if self.size != b.size || self.size != c.size {
            return Err(Error::DomainMismatch);
        }
        Ok(self
            .data
            .iter()
            .zip(&b.data)
            .zip(&c.data)
            .fold(0.0, |m, ((x, y), z)| m.max((x + y - z).abs())))
    }

    const MAGIC: &'static [u8; 8] = b"BLMMAT\0\0";
    const VERSION: u32 = 1;

    /// Binary dump: magic, version, dim, depth, half-width, entries (LE).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        w.write_all(&(self.domain.dim() as u32).to_le_bytes())?;
        w.write_all(&self.domain.depth().to_le_bytes())?;
        w.write_all(&self.domain.half_width().to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path, kernel: String) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let corrupt = |m: &str| Error::CorruptCache(format!("{}: {m}", path.display()));
        if bytes.len() < 28 || &bytes[..8] != Self::MAGIC {
            return Err(corrupt("bad header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        if u32_at(8) != Self::VERSION {
            return Err(corrupt("version"));
        }
        let domain = LatticeDomain::new(
            u32_at(12) as usize,
            f64::from_le_bytes(bytes[20..28].try_into().unwrap()),
            u32_at(16),
        )?;
        let n = guard(&domain)?;
        if bytes.len() != 28 + 8 * n * n {
            return Err(corrupt("length"));
        }
        let data = bytes[28..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(OperatorMatrix {
            domain,
            size: n,
            data,
            kernel,
            window: None,
        })
    }
}

/// `A[i][j] = K(x_i, x_j) · window(|x_i - x_j|) · h^d`, zero diagonal.
pub fn assemble(k: &KernelSpec, domain: &LatticeDomain, window: Option<RadialWindow>) -> Result<OperatorMatrix> {
    if k.dim != domain.dim() {
        return Err(Error::KernelDimension {
            variant: k.label(),
            dim: domain.dim(),
        });
    }
    let pts = domain.midpoints();
    let h = domain.cell_volume();
    let dim = domain.dim();
    OperatorMatrix::from_entries(domain, k.label(), window, |i, j| {
        let w = window.map_or(1.0, |win| win.eval(dist(dim, &pts[i], &pts[j])));
        if w == 0.0 {
            0.0
        } else {
            k.eval(&pts[i], &pts[j]) * w * h
        }
    })
}

/// `[b, T] f = b · T f - T(b f)`.
pub fn commutator_apply(b: &SampledFunction, t: &OperatorMatrix, f: &SampledFunction) -> Result<SampledFunction> {
    t.domain().same_as(b.domain())?;
    t.domain().same_as(f.domain())?;
    let tf = t.apply_slice(f.values());
    let bf: Vec<C64> = b.values().iter().zip(f.values()).map(|(x, y)| x * y).collect();
    let tbf = t.apply_slice(&bf);
    let out = b
        .values()
        .iter()
        .zip(tf.iter().zip(&tbf))
        .map(|(bv, (a, c))| bv * a - c)
        .collect();
    SampledFunction::from_values(t.domain(), out)
}

/// `T = T_c + T_ε` with `r = ε`, `R = 1/ε`:
/// `T_c(x,y) = φ^{0,R}(x) K(x,y) φ^{r,10R}(x-y) φ^{0,R}(y)` and `T_ε` the
/// complementary pieces of the partition of unity.
pub fn decompose(k: &KernelSpec, domain: &LatticeDomain, eps: f64) -> Result<(OperatorMatrix, OperatorMatrix)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon {eps} outside (0, 1)")));
    }
    if k.dim != domain.dim() {
        return Err(Error::KernelDimension {
            variant: k.label(),
            dim: domain.dim(),
        });
    }
    let (r, big) = (eps, 1.0 / eps);
    let pts = domain.midpoints();
    let dim = domain.dim();
    let h = domain.cell_volume();
    let ball = RadialWindow::ball(big);
    let local = RadialWindow::annulus(r, 10.0 * big);
    let cut: Vec<f64> = pts.iter().map(|p| ball.eval(dist(dim, p, &[0.0, 0.0]))).collect();
    let tc = OperatorMatrix::from_entries(domain, format!("{}:compact", k.label()), Some(local), |i, j| {
        cut[i] * cut[j] * local.eval(dist(dim, &pts[i], &pts[j])) * k.eval(&pts[i], &pts[j]) * h
    })?;
    let te = OperatorMatrix::from_entries(domain, format!("{}:remainder", k.label()), None, |i, j| {
        let (cx, cy) = (cut[i], cut[j]);
        let w = local.eval(dist(dim, &pts[i], &pts[j]));
        let coef = cx * cy * (1.0 - w) + (1.0 - cx) * (1.0 - cy) + (1.0 - cx) * cy + cx * (1.0 - cy);
        coef * k.eval(&pts[i], &pts[j]) * h
    })?;
    Ok((tc, te))
}

#[derive(Clone, Debug, Serialize)]
pub struct TruncationReport {
    pub r: f64,
    /// `|T_r f - T φ^{r,∞} f|` per cell.
    pub gap: Vec<f64>,
    /// Centered maximal function of `f`.
    pub maximal: Vec<f64>,
    pub constant: f64,
    pub max_ratio: f64,
    pub violations: usize,
}

/// Constant in `|T_r f - T φ^{r,∞} f| ≤ C_cmp M f`.
///
/// The two cutoffs differ only on `r/2 ≤ |x-y| < r`, where `|K| ≤ C (2/r)^d`;
/// the cells with `|x-y| < r` fit in the centered box of side `≤ 2r + h ≤ 5r/2`
/// when `r ≥ 2h`, so `C_cmp = C · 5^d`.
pub fn truncation_constant(k: &KernelSpec) -> f64 {
    k.size_constant * 5f64.powi(k.dim as i32)
}

/// Hard truncation against the smooth cutoff, checked cell by cell against the
/// centered maximal function.
pub fn truncation_comparison(k: &KernelSpec, r: f64, f: &SampledFunction) -> Result<TruncationReport> {
    let domain = *f.domain();
    if k.dim != domain.dim() {
        return Err(Error::KernelDimension {
            variant: k.label(),
            dim: domain.dim(),
        });
    }
    if !(r >= 2.0 * domain.cell_width()) {
        return Err(Error::InvalidParameter(format!(
            "r = {r} below 2h = {}",
            2.0 * domain.cell_width()
        )));
    }
    let pts = domain.midpoints();
    let dim = domain.dim();
    let h = domain.cell_volume();
    let smooth = RadialWindow::outside(r);
    let vals = f.values();
    let gap: Vec<f64> = (0..domain.num_cells())
        .into_par_iter()
        .map(|i| {
            let mut acc = C64::new(0.0, 0.0);
            for (j, v) in vals.iter().enumerate() {
                if i == j {
                    continue;
                }
                let z = dist(dim, &pts[i], &pts[j]);
                let hard = if z >= r { 1.0 } else { 0.0 };
                let diff = hard - smooth.eval(z);
                if diff != 0.0 {
                    acc += k.eval(&pts[i], &pts[j]) * diff * h * v;
                }
            }
            acc.norm()
        })
        .collect();
    let maximal = centered_maximal(f)?.values().iter().map(|v| v.re).collect::<Vec<_>>();
    let constant = truncation_constant(k);
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    for (g, m) in gap.iter().zip(&maximal) {
        if *m > 0.0 {
            max_ratio = max_ratio.max(g / m);
        }
        if *g > constant * m * (1.0 + 1e-12) + 1e-300 {
            violations += 1;
        }
    }
    Ok(TruncationReport {
        r,
        gap,
        maximal,
        constant,
        max_ratio,
        violations,
    })
}
