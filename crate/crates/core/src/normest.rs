//! Weighted `L^p_μ → L^q_λ` operator norms: Lanczos for `p = q = 2`, duality
//! ascent otherwise, the separated-cube lower probe, BMO/norm sweeps and the
//! compactness tails.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::DyadicCube;
use crate::error::{Error, Result};
use crate::lattice::{fmt_f64, lp_norm_slice, LatticeDomain, SampledFunction, C64};
use crate::operators::{decompose, KernelSpec, OperatorMatrix};
use crate::oscillation::{bmo_norm, BmoMode};
use crate::sparse::{anchored_family, origin_anchors, split_family, sparse_apply, SparseFamily, SparseKind};
use crate::weights::{bloom_weight, conjugate, CubeFamily, ExponentSetup, Weight};

/// Square operator on the cells of a lattice.
pub trait LinearOp: Sync {
    fn size(&self) -> usize;
    fn apply(&self, x: &[C64]) -> Vec<C64>;
    /// Conjugate transpose.
    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64>;
}

impl LinearOp for OperatorMatrix {
    fn size(&self) -> usize {
        OperatorMatrix::size(self)
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.apply_slice(x)
    }

    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        self.apply_transpose_slice(x)
    }
}

/// Dense complex matrix, row-major.
#[derive(Clone, Debug)]
pub struct DenseOp {
    n: usize,
    data: Vec<C64>,
}

impl DenseOp {
    pub fn new(n: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidParameter(format!("{} entries for {n}x{n}", data.len())));
        }
        Ok(DenseOp { n, data })
    }

    pub fn from_dmatrix(m: &DMatrix<C64>) -> Self {
        let n = m.nrows();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(m[(i, j)]);
            }
        }
        DenseOp { n, data }
    }

    pub fn to_dmatrix(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    pub fn scale(&self, c: C64) -> DenseOp {
        DenseOp {
            n: self.n,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }
}

impl LinearOp for DenseOp {
    fn size(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.data
            .par_chunks(self.n)
            .map(|row| row.iter().zip(x).map(|(a, v)| a * v).sum())
            .collect()
    }

    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n];
        for (row, xi) in self.data.chunks(self.n).zip(x) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * xi;
            }
        }
        out
    }
}

/// Matrix of `[b, T]`: entries `(b_i - b_j) A_ij`.
pub fn commutator_matrix(b: &SampledFunction, t: &OperatorMatrix) -> Result<DenseOp> {
    t.domain().same_as(b.domain())?;
    let n = t.size();
    let bv = b.values();
    let data = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            (bv[i] - bv[j]) * t.entry(i, j)
        })
        .collect();
    DenseOp::new(n, data)
}

/// A sparse form as an operator; the adjoint of `Star` is `Adjoint`.
pub struct SparseOp<'a> {
    pub domain: LatticeDomain,
    pub kind: SparseKind<'a>,
    pub family: &'a SparseFamily,
}

impl SparseOp<'_> {
    fn run(&self, kind: SparseKind<'_>, x: &[C64]) -> Vec<C64> {
        let f = SampledFunction::from_values(&self.domain, x.to_vec()).expect("finite input");
        sparse_apply(kind, &f, self.family).expect("validated sparse form").into_values()
    }
}

impl LinearOp for SparseOp<'_> {
    fn size(&self) -> usize {
        self.domain.num_cells()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.run(self.kind, x)
    }

    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        let kind = match self.kind {
            SparseKind::Star(b) => SparseKind::Adjoint(b),
            SparseKind::Adjoint(b) => SparseKind::Star(b),
            k => k,
        };
        self.run(kind, x)
    }
}

/// `D_λ A D_μ^{-1}`.
struct Weighted<'a> {
    op: &'a dyn LinearOp,
    mu: &'a [f64],
    lambda: &'a [f64],
}

impl LinearOp for Weighted<'_> {
    fn size(&self) -> usize {
        self.op.size()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let y: Vec<C64> = x.iter().zip(self.mu).map(|(v, m)| v / m).collect();
        self.op.apply(&y).into_iter().zip(self.lambda).map(|(v, l)| v * l).collect()
    }

    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        let y: Vec<C64> = x.iter().zip(self.lambda).map(|(v, l)| v * l).collect();
        self.op.apply_adjoint(&y).into_iter().zip(self.mu).map(|(v, m)| v / m).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SvdExact,
    PowerIteration,
    RandomRestartAscent,
    Probe,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormEstimate {
    /// `‖A f‖_{q,λ} / ‖f‖_{p,μ}` at the witness.
    pub value: f64,
    pub method: Method,
    #[serde(skip)]
    pub witness: Vec<C64>,
    pub iterations: usize,
    /// The operator vanished on every tried vector.
    pub zero: bool,
    /// Lanczos residual relative to the eigenvalue, when applicable.
    pub residual: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Budget {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop a restart once the relative change drops below this.
    pub tol: f64,
    pub seed: u64,
    pub lanczos_steps: usize,
    /// Extra starting vectors for the ascent.
    pub warm: Vec<Vec<C64>>,
    /// Use the ascent even when `p = q = 2`.
    pub force_ascent: bool,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            restarts: 32,
            max_iter: 200,
            tol: 1e-10,
            seed: 0,
            lanczos_steps: 300,
            warm: Vec::new(),
            force_ascent: false,
        }
    }
}

/// `‖A f‖_{q,λ} / ‖f‖_{p,μ}` with the weights acting as multipliers.
pub fn weighted_ratio(
    op: &dyn LinearOp,
    f: &[C64],
    p: f64,
    mu: &Weight,
    q: f64,
    lambda: &Weight,
) -> f64 {
    let h = mu.domain().cell_volume();
    let den = lp_norm_slice(f, p, Some(mu.values()), h);
    if den == 0.0 {
        return 0.0;
    }
    lp_norm_slice(&op.apply(f), q, Some(lambda.values()), h) / den
}

fn random_vector(n: usize, seed: u64, complex: bool) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im = if complex { rng.sample(StandardNormal) } else { 0.0 };
            C64::new(re, im)
        })
        .collect()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm2(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest eigenvalue of `BᴴB` by Lanczos with full reorthogonalization.
fn lanczos_top(op: &dyn LinearOp, steps: usize, seed: u64) -> (f64, Vec<C64>, usize, f64) {
    let n = op.size();
    let steps = steps.min(n).max(1);
    let mut v = random_vector(n, seed, true);
    let s = norm2(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mut basis: Vec<Vec<C64>> = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut best = (0.0, basis[0].clone(), 0usize, f64::INFINITY);
    for k in 0..steps {
        let vk = &basis[k];
        let mut w = op.apply_adjoint(&op.apply(vk));
        let alpha = dot(vk, &w).re;
        alphas.push(alpha);
        for _ in 0..2 {
            for u in &basis {
                let c = dot(u, &w);
                w.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
        }
        let beta = norm2(&w);
        let m = alphas.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (idx, theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &e)| if e > acc.1 { (i, e) } else { acc });
        let svec = eig.eigenvectors.column(idx);
        let resid = beta * svec[m - 1].abs();
        let rel = if theta > 0.0 { resid / theta } else { 0.0 };
        let scale = alphas.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let done = rel <= 1e-13 || beta <= 1e-14 * scale.max(f64::MIN_POSITIVE) || k + 1 == steps;
        if done {
            let mut y = vec![C64::new(0.0, 0.0); n];
            for (j, u) in basis.iter().enumerate() {
                y.iter_mut().zip(u).for_each(|(acc, x)| *acc += svec[j] * x);
            }
            best = (theta.max(0.0), y, k + 1, rel);
            break;
        }
        w.iter_mut().for_each(|x| *x /= beta);
        betas.push(beta);
        basis.push(w);
    }
    best
}

fn dual_map(y: &[C64], q: f64) -> Vec<C64> {
    let nq = y.iter().map(|v| v.norm().powf(q)).sum::<f64>().powf(1.0 / q);
    if nq == 0.0 {
        return vec![C64::new(0.0, 0.0); y.len()];
    }
    y.iter()
        .map(|v| {
            let a = v.norm();
            if a == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                v / a * (a / nq).powf(q - 1.0)
            }
        })
        .collect()
}

fn lp(x: &[C64], p: f64) -> f64 {
    x.iter().map(|v| v.norm().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Normalized duality ascent on `‖B u‖_q / ‖u‖_p` from one start.
fn ascent(op: &dyn LinearOp, p: f64, q: f64, start: Vec<C64>, max_iter: usize, tol: f64) -> (f64, Vec<C64>, usize) {
    let pc = conjugate(p);
    let np = lp(&start, p);
    if np == 0.0 {
        return (0.0, start, 0);
    }
    let mut u: Vec<C64> = start.into_iter().map(|v| v / np).collect();
    let mut val = lp(&op.apply(&u), q);
    let mut best = (val, u.clone());
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let y = op.apply(&u);
        let z = dual_map(&y, q);
        let w = op.apply_adjoint(&z);
        let next = dual_map(&w, pc);
        if lp(&next, p) == 0.0 {
            break;
        }
        let nv = lp(&op.apply(&next), q);
        let change = (nv - val).abs() / nv.abs().max(f64::MIN_POSITIVE);
        u = next;
        val = nv;
        if val > best.0 {
            best = (val, u.clone());
        }
        if change < tol {
            break;
        }
    }
    (best.0, best.1, it)
}

/// Certified lower bound for `‖A‖_{L^p_μ → L^q_λ}`; the largest singular value
/// of `D_λ A D_μ^{-1}` when `p = q = 2`.
pub fn opnorm_estimate(
    op: &dyn LinearOp,
    p: f64,
    mu: &Weight,
    q: f64,
    lambda: &Weight,
    budget: &Budget,
) -> Result<NormEstimate> {
    mu.domain().same_as(lambda.domain())?;
    if !(p > 1.0 && q >= p && q.is_finite()) {
        return Err(Error::InvalidExponent(format!("need 1 < p <= q < inf, got p={p}, q={q}")));
    }
    if op.size() != mu.domain().num_cells() {
        return Err(Error::DomainMismatch);
    }
    if budget.restarts == 0 {
        return Err(Error::InvalidParameter("budget needs at least one restart".into()));
    }
    let b = Weighted {
        op,
        mu: mu.values(),
        lambda: lambda.values(),
    };
    let n = op.size();
    let (u, method, iterations, residual) = if p == 2.0 && q == 2.0 && !budget.force_ascent {
        let (_, u, it, rel) = lanczos_top(&b, budget.lanczos_steps, budget.seed);
        (u, Method::SvdExact, it, Some(rel))
    } else {
        let mut starts: Vec<Vec<C64>> = budget
            .warm
            .iter()
            .filter(|w| w.len() == n)
            .map(|w| w.iter().zip(mu.values()).map(|(v, m)| v * m).collect())
            .collect();
        for r in 0..budget.restarts {
            starts.push(random_vector(n, budget.seed.wrapping_mul(1_000_003).wrapping_add(r as u64), false));
        }
        let results: Vec<(f64, Vec<C64>, usize)> = starts
            .into_par_iter()
            .map(|s| ascent(&b, p, q, s, budget.max_iter, budget.tol))
            .collect();
        let iters = results.iter().map(|r| r.2).sum();
        let best = results
            .into_iter()
            .enumerate()
            .fold(None::<(usize, f64, Vec<C64>)>, |acc, (i, (v, u, _))| match acc {
                Some((_, bv, _)) if bv >= v => acc,
                _ => Some((i, v, u)),
            })
            .unwrap();
        (best.2, Method::RandomRestartAscent, iters, None)
    };
    let witness: Vec<C64> = u.iter().zip(mu.values()).map(|(v, m)| v / m).collect();
    let value = weighted_ratio(op, &witness, p, mu, q, lambda);
    Ok(NormEstimate {
        value,
        method,
        zero: value == 0.0,
        witness,
        iterations,
        residual,
    })
}

/// Repeats each cell value over the `2^d` children one level finer.
pub fn prolongate(coarse: &LatticeDomain, fine: &LatticeDomain, f: &[C64]) -> Result<Vec<C64>> {
    if fine.dim() != coarse.dim() || fine.depth() != coarse.depth() + 1 || fine.half_width() != coarse.half_width() {
        return Err(Error::DomainMismatch);
    }
    Ok((0..fine.num_cells())
        .map(|c| {
            let x = fine.cell_coords(c);
            f[coarse.cell_index([x[0] / 2, x[1] / 2])]
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeCertificate {
    pub value: f64,
    pub cube: DyadicCube,
    pub partner: DyadicCube,
    /// Which test pair won: `1` pairs `[b,T]1_{Q̃}` with a modulation on `Q`,
    /// `2` pairs `[b,T]s` for a modulation `s` on `Q̃` with `1_Q`.
    pub candidate: u8,
    pub pairing: f64,
    /// `min |K|` over the separated block.
    pub kernel_min: f64,
    /// `∫_Q |b - ⟨b⟩_Q|`.
    pub oscillation_mass: f64,
    /// `pairing ≥ kernel_min · |Q̃| · ∫_Q |b - ⟨b⟩_Q| / 4`.
    pub valid: bool,
}

/// Partner cube `Q + 3ℓ` along every axis, or `Q - 3ℓ` when that leaves the
/// domain.
pub fn probe_partner(domain: &LatticeDomain, q: &DyadicCube) -> Result<DyadicCube> {
    let count = 1usize << q.gen;
    let mut k = q.k;
    for a in 0..domain.dim() {
        k[a] = if q.k[a] + 3 < count {
            q.k[a] + 3
        } else if q.k[a] >= 3 {
            q.k[a] - 3
        } else {
            return Err(Error::ProbeRefused(format!("no room for a partner of {}", q.id())));
        };
    }
    Ok(DyadicCube { grid: q.grid, gen: q.gen, k })
}

/// Lower certificate `|⟨[b,T]g, h⟩| / (‖g‖_{p,μ} ‖h‖_{q',λ^{-1}})` for test
/// pairs supported on `Q` and its separated partner.
#[allow(clippy::too_many_arguments)]
pub fn awf_lower_probe(
    b: &SampledFunction,
    t: &OperatorMatrix,
    p: f64,
    mu: &Weight,
    q: f64,
    lambda: &Weight,
    cube: &DyadicCube,
) -> Result<ProbeCertificate> {
    let domain = *t.domain();
    domain.same_as(b.domain())?;
    domain.same_as(mu.domain())?;
    domain.same_as(lambda.domain())?;
    if cube.wraps(&domain) {
        return Err(Error::ProbeRefused(format!("{} wraps", cube.id())));
    }
    let partner = probe_partner(&domain, cube)?;
    let qs: Vec<usize> = cube.cell_set(&domain).iter().collect();
    let ps: Vec<usize> = partner.cell_set(&domain).iter().collect();
    let h = domain.cell_volume();
    let first = t.entry(qs[0], ps[0]);
    let mut kmin = f64::INFINITY;
    for &i in &qs {
        for &j in &ps {
            let a = t.entry(i, j);
            if !(a * first > 0.0) {
                return Err(Error::ProbeRefused(format!(
                    "kernel block between {} and {} is not sign-definite",
                    cube.id(),
                    partner.id()
                )));
            }
            kmin = kmin.min(a.abs() / h);
        }
    }
    let bv = b.values();
    // Candidate 1: g = 1_{Q̃}, h = conj sgn([b,T]g) on Q.
    let c1: Vec<C64> = qs
        .iter()
        .map(|&i| ps.iter().map(|&j| (bv[i] - bv[j]) * t.entry(i, j)).sum())
        .collect();
    let pair1: f64 = c1.iter().map(|v| v.norm()).sum::<f64>() * h;
    let h1_norm = {
        let vals: Vec<C64> = qs.iter().zip(&c1).map(|(&i, v)| if v.norm() > 0.0 { C64::new(1.0 / lambda.value(i), 0.0) } else { C64::new(0.0, 0.0) }).collect();
        lp_norm_slice(&vals, conjugate(q), None, h)
    };
    let g1_norm = lp_norm_slice(&ps.iter().map(|&j| C64::new(mu.value(j), 0.0)).collect::<Vec<_>>(), p, None, h);
    let cert1 = if h1_norm > 0.0 { pair1 / (g1_norm * h1_norm) } else { 0.0 };
    // Candidate 2: g = unimodular s on Q̃, h = 1_Q.
    let c2: Vec<C64> = ps
        .iter()
        .map(|&j| qs.iter().map(|&i| (bv[i] - bv[j]) * t.entry(i, j)).sum::<C64>())
        .collect();
    let pair2: f64 = c2.iter().map(|v| v.norm()).sum::<f64>() * h;
    let g2_norm = lp_norm_slice(
        &ps.iter().zip(&c2).map(|(&j, v)| if v.norm() > 0.0 { C64::new(mu.value(j), 0.0) } else { C64::new(0.0, 0.0) }).collect::<Vec<_>>(),
        p,
        None,
        h,
    );
    let h2_norm = lp_norm_slice(&qs.iter().map(|&i| C64::new(1.0 / lambda.value(i), 0.0)).collect::<Vec<_>>(), conjugate(q), None, h);
    let cert2 = if g2_norm > 0.0 { pair2 / (g2_norm * h2_norm) } else { 0.0 };
    let avg: C64 = qs.iter().map(|&i| bv[i]).sum::<C64>() / qs.len() as f64;
    let osc: f64 = qs.iter().map(|&i| (bv[i] - avg).norm()).sum::<f64>() * h;
    let (value, candidate, pairing) = if cert2 > cert1 { (cert2, 2, pair2) } else { (cert1, 1, pair1) };
    let required = 0.25 * kmin * partner.volume(&domain) * osc;
    Ok(ProbeCertificate {
        value,
        cube: *cube,
        partner,
        candidate,
        pairing,
        kernel_min: kmin,
        oscillation_mass: osc,
        valid: pair1.max(pair2) >= required * (1.0 - 1e-12),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub id: String,
    pub bmo: f64,
    pub norm: f64,
    pub method: Method,
    pub probe: Option<f64>,
    pub norm_over_bmo: f64,
    pub probe_over_bmo: Option<f64>,
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "symbol,bmo,norm,method,probe,norm_over_bmo,probe_over_bmo")?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.id,
            fmt_f64(r.bmo),
            fmt_f64(r.norm),
            serde_json::to_value(r.method).unwrap().as_str().unwrap_or(""),
            opt(r.probe),
            fmt_f64(r.norm_over_bmo),
            opt(r.probe_over_bmo)
        )?;
    }
    Ok(())
}

/// Best probe over the cubes with the largest oscillations; `None` when every
/// probe is refused.
pub fn best_probe(
    b: &SampledFunction,
    t: &OperatorMatrix,
    p: f64,
    mu: &Weight,
    q: f64,
    lambda: &Weight,
    tries: usize,
) -> Result<Option<ProbeCertificate>> {
    let domain = *t.domain();
    let one = Weight::constant(&domain, 1.0);
    let rep = bmo_norm(b, BmoMode::Fractional { nu: &one, alpha: 0.0 }, &CubeFamily::CanonicalDyadic)?;
    let mut vals: Vec<_> = rep.values.into_iter().filter(|v| v.cube.gen >= 2 && v.value > 0.0).collect();
    vals.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.cube.order_key().cmp(&b.cube.order_key())));
    let mut best: Option<ProbeCertificate> = None;
    for v in vals.into_iter().take(tries) {
        match awf_lower_probe(b, t, p, mu, q, lambda, &v.cube) {
            Ok(c) => {
                if best.as_ref().map_or(true, |x| c.value > x.value) {
                    best = Some(c);
                }
            }
            Err(Error::ProbeRefused(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}

/// BMO norm, commutator norm estimate and probe certificate per symbol.
pub fn bmo_vs_norm_sweep(
    symbols: &[(String, SampledFunction)],
    t: &OperatorMatrix,
    mu: &Weight,
    lambda: &Weight,
    setup: &ExponentSetup,
    budget: &Budget,
) -> Result<Vec<SweepRow>> {
    let nu = bloom_weight(mu, lambda, setup)?;
    let mut rows = Vec::with_capacity(symbols.len());
    for (id, b) in symbols {
        let bmo = bmo_norm(b, BmoMode::Fractional { nu: &nu, alpha: setup.alpha }, &CubeFamily::CanonicalDyadic)?.sup;
        let c = commutator_matrix(b, t)?;
        let est = opnorm_estimate(&c, setup.p, mu, setup.q, lambda, budget)?;
        let probe = best_probe(b, t, setup.p, mu, setup.q, lambda, 16)?.map(|c| c.value);
        let ratio = |x: f64| if bmo > 0.0 { x / bmo } else { 0.0 };
        rows.push(SweepRow {
            id: id.clone(),
            bmo,
            norm: est.value,
            method: est.method,
            probe,
            norm_over_bmo: ratio(est.value),
            probe_over_bmo: probe.map(ratio),
        });
    }
    Ok(rows)
}

/// `‖A*_{b, S_k}‖` with `k = 1/ε`, where `S_k` is the anchored family at the
/// origin (every other generation) minus the cubes with `ℓ ∈ [1/k, k]` near
/// the origin. Returns `(ks, tails)`.
pub fn sparse_tail_profile(
    b: &SampledFunction,
    mu: &Weight,
    lambda: &Weight,
    setup: &ExponentSetup,
    eps: &[f64],
    budget: &Budget,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let domain = *b.domain();
    check_eps(&domain, eps)?;
    let family = anchored_family(&domain, &origin_anchors(&domain), 1, 2)?;
    let mut ks = Vec::with_capacity(eps.len());
    let mut tails = Vec::with_capacity(eps.len());
    for &e in eps {
        let k = 1.0 / e;
        let split = split_family(&domain, &family, k)?;
        let op = SparseOp {
            domain,
            kind: SparseKind::Star(b),
            family: &split,
        };
        tails.push(if split.is_empty() {
            0.0
        } else {
            opnorm_estimate(&op, setup.p, mu, setup.q, lambda, budget)?.value
        });
        ks.push(k);
    }
    Ok((ks, tails))
}

fn check_eps(domain: &LatticeDomain, eps: &[f64]) -> Result<()> {
    if eps.is_empty() || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("epsilon list must be nonempty and decreasing".into()));
    }
    if let Some(e) = eps.iter().find(|&&e| e < 4.0 * domain.cell_width()) {
        return Err(Error::InvalidParameter(format!("epsilon {e} below 4h")));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct CompactnessReport {
    pub eps: Vec<f64>,
    /// `‖[b, T_ε]‖` estimates.
    pub tails: Vec<f64>,
    pub ks: Vec<f64>,
    /// `‖A*_{b, S_k}‖` estimates on the anchored family.
    pub sparse_tails: Vec<f64>,
}

impl CompactnessReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "eps,tail,k,sparse_tail")?;
        for i in 0..self.eps.len() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(self.eps[i]),
                fmt_f64(self.tails[i]),
                fmt_f64(self.ks[i]),
                fmt_f64(self.sparse_tails[i])
            )?;
        }
        Ok(())
    }

    /// Last tail over first tail.
    pub fn decay(&self) -> f64 {
        ratio_last_first(&self.tails)
    }

    pub fn sparse_decay(&self) -> f64 {
        ratio_last_first(&self.sparse_tails)
    }
}

fn ratio_last_first(v: &[f64]) -> f64 {
    match (v.first(), v.last()) {
        (Some(&a), Some(&b)) if a > 0.0 => b / a,
        _ => 0.0,
    }
}

/// Tails `‖[b, T_ε]‖` over a decreasing `ε` list together with the sparse
/// tails of [`sparse_tail_profile`] on the same lattice.
#[allow(clippy::too_many_arguments)]
pub fn compactness_profile(
    b: &SampledFunction,
    k: &KernelSpec,
    mu: &Weight,
    lambda: &Weight,
    setup: &ExponentSetup,
    eps: &[f64],
    budget: &Budget,
) -> Result<CompactnessReport> {
    let domain = *b.domain();
    check_eps(&domain, eps)?;
    let mut tails = Vec::with_capacity(eps.len());
    for &e in eps {
        let (_, te) = decompose(k, &domain, e)?;
        let c = commutator_matrix(b, &te)?;
        tails.push(opnorm_estimate(&c, setup.p, mu, setup.q, lambda, budget)?.value);
    }
    let (ks, sparse_tails) = sparse_tail_profile(b, mu, lambda, setup, eps, budget)?;
    Ok(CompactnessReport {
        eps: eps.to_vec(),
        tails,
        ks,
        sparse_tails,
    })
}
