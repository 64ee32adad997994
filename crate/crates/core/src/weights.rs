//! Weights, Muckenhoupt characteristics on cube families, the Bloom weight and
//! the per-cube Bloom sandwich.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{enumerate_cubes, grids, CubeFilter, DyadicCube, DyadicGrid};
use crate::error::{Error, Result};
use crate::lattice::{fmt_f64, AlignedBox, LatticeDomain, Point, SampledFunction};

/// Values above this are reported as capped.
pub const REPORT_CAP: f64 = 1e300;
/// Exponents beyond this magnitude are applied in log space.
pub const LOG_SPACE_EXPONENT: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum WeightTag {
    /// `|x|^beta`.
    Power { beta: f64 },
}

/// Strictly positive real sampled function.
#[derive(Clone, Debug)]
pub struct Weight {
    func: SampledFunction,
    vals: Vec<f64>,
    tag: Option<WeightTag>,
}

impl Weight {
    pub fn from_values(domain: &LatticeDomain, vals: Vec<f64>, tag: Option<WeightTag>) -> Result<Self> {
        if let Some(cell) = vals.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::NonPositiveWeight {
                cell,
                value: vals[cell],
            });
        }
        let func = SampledFunction::from_real(domain, vals.clone())?;
        Ok(Weight { func, vals, tag })
    }

    pub fn from_fn(domain: &LatticeDomain, f: impl Fn(Point) -> f64) -> Result<Self> {
        let vals = domain.midpoints().into_iter().map(f).collect();
        Self::from_values(domain, vals, None)
    }

    pub fn constant(domain: &LatticeDomain, c: f64) -> Self {
        Self::from_values(domain, vec![c; domain.num_cells()], None).expect("positive constant")
    }

    pub fn from_function(f: &SampledFunction) -> Result<Self> {
        if let Some(cell) = f.values().iter().position(|v| v.im != 0.0) {
            return Err(Error::NonPositiveWeight {
                cell,
                value: f64::NAN,
            });
        }
        Self::from_values(f.domain(), f.values().iter().map(|v| v.re).collect(), None)
    }

    pub fn domain(&self) -> &LatticeDomain {
        self.func.domain()
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.vals[cell]
    }

    pub fn tag(&self) -> Option<WeightTag> {
        self.tag
    }

    pub fn as_function(&self) -> &SampledFunction {
        &self.func
    }

    /// `w(B) = ∫_B w`.
    pub fn mass(&self, b: &AlignedBox) -> f64 {
        self.func.box_sum(b).re * self.domain().cell_volume()
    }

    pub fn cube_mass(&self, q: &DyadicCube) -> f64 {
        let d = *self.domain();
        q.pieces(&d).iter().map(|b| self.mass(b)).sum()
    }

    pub fn set_mass(&self, s: &crate::lattice::CellSet) -> f64 {
        self.func.set_sum(s).re * self.domain().cell_volume()
    }

    /// Pointwise power `w^e`.
    pub fn pow(&self, e: f64) -> Result<Weight> {
        let vals: Vec<f64> = if e.abs() > LOG_SPACE_EXPONENT {
            self.vals.iter().map(|v| (e * v.ln()).exp()).collect()
        } else {
            self.vals.iter().map(|v| v.powf(e)).collect()
        };
        if vals.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidExponent(format!(
                "w^{e} leaves the floating-point range; use log-space characteristics"
            )));
        }
        let tag = self.tag.map(|WeightTag::Power { beta }| WeightTag::Power { beta: beta * e });
        Weight::from_values(self.domain(), vals, tag)
    }

    pub fn mul(&self, other: &Weight) -> Result<Weight> {
        self.domain().same_as(other.domain())?;
        Weight::from_values(
            self.domain(),
            self.vals.iter().zip(&other.vals).map(|(a, b)| a * b).collect(),
            None,
        )
    }
}

/// Log-space power masses: `ln Σ_B w^e` from prefix sums of `w^e / max`.
struct PowerMass {
    log_vals: Vec<f64>,
    scale: f64,
    scaled: SampledFunction,
}

impl PowerMass {
    fn new(w: &Weight, e: f64) -> Result<Self> {
        let log_vals: Vec<f64> = w.values().iter().map(|v| e * v.ln()).collect();
        let scale = log_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scaled = SampledFunction::from_real(
            w.domain(),
            log_vals.iter().map(|l| (l - scale).exp()).collect(),
        )?;
        Ok(PowerMass {
            log_vals,
            scale,
            scaled,
        })
    }

    fn log_sum(&self, q: &DyadicCube) -> f64 {
        let d = *self.scaled.domain();
        let pieces = q.pieces(&d);
        let s: f64 = pieces.iter().map(|b| self.scaled.box_sum(b).re).sum();
        if s > 0.0 && s.is_finite() {
            return s.ln() + self.scale;
        }
        // Every sample underflowed relative to the global maximum.
        let cells = pieces.iter().flat_map(|b| b.cells(&d).collect::<Vec<_>>());
        let logs: Vec<f64> = cells.map(|c| self.log_vals[c]).collect();
        log_sum_exp(&logs)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentSetup {
    pub p: f64,
    pub q: f64,
    pub d: usize,
    pub alpha: f64,
    /// `(1 + alpha/d)^{-1}`, the exponent of `μ/λ` in the Bloom weight.
    pub beta_exp: f64,
    pub s: f64,
    pub t: f64,
    pub p_conj: f64,
    pub q_conj: f64,
}

pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

pub fn bloom_exponents(p: f64, q: f64, d: usize) -> Result<ExponentSetup> {
    if !(p > 1.0 && q > 1.0 && p.is_finite() && q.is_finite()) {
        return Err(Error::InvalidExponent(format!("p={p}, q={q} must lie in (1, inf)")));
    }
    if p > q {
        return Err(Error::InvalidExponent(format!("p={p} > q={q} is not supported")));
    }
    if d != 1 && d != 2 {
        return Err(Error::InvalidExponent(format!("dimension {d}")));
    }
    let df = d as f64;
    let p_conj = conjugate(p);
    let q_conj = conjugate(q);
    let alpha = df * (1.0 / p - 1.0 / q);
    let beta_exp = 1.0 / (1.0 + alpha / df);
    let s = 2.0 / (1.0 + alpha / df);
    let t = (1.0 / p + 1.0 / q_conj) / (1.0 / q + 1.0 / p_conj);
    let setup = ExponentSetup {
        p,
        q,
        d,
        alpha,
        beta_exp,
        s,
        t,
        p_conj,
        q_conj,
    };
    debug_assert!((1.0 + alpha / df - (1.0 / p + 1.0 / q_conj)).abs() < 1e-12);
    debug_assert!((s - (1.0 + 1.0 / t)).abs() < 1e-12);
    Ok(setup)
}

impl ExponentSetup {
    /// `1/p + 1/q'`.
    pub fn bloom_sum(&self) -> f64 {
        1.0 / self.p + 1.0 / self.q_conj
    }
}

#[derive(Clone, Debug)]
pub enum CubeFamily {
    /// Every canonical dyadic cube, all generations.
    CanonicalDyadic,
    /// Every non-wrapping cube of all `3^d` adjacent grids.
    AllAdjacent,
    Explicit(Vec<DyadicCube>),
}

impl CubeFamily {
    pub fn cubes(&self, domain: &LatticeDomain) -> Vec<DyadicCube> {
        match self {
            CubeFamily::CanonicalDyadic => {
                enumerate_cubes(domain, &DyadicGrid::canonical(), &CubeFilter::all()).collect()
            }
            CubeFamily::AllAdjacent => {
                let f = CubeFilter::all().whole();
                let mut v: Vec<DyadicCube> = grids(domain)
                    .iter()
                    .flat_map(|g| enumerate_cubes(domain, g, &f).collect::<Vec<_>>())
                    .collect();
                v.sort_by_key(|q| q.order_key());
                v
            }
            CubeFamily::Explicit(v) => v.clone(),
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            CubeFamily::CanonicalDyadic => "canonical-dyadic".into(),
            CubeFamily::AllAdjacent => "all-adjacent".into(),
            CubeFamily::Explicit(v) => format!("explicit({})", v.len()),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CubeValue {
    pub cube: DyadicCube,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CharacteristicReport {
    pub family: String,
    pub values: Vec<CubeValue>,
    pub sup: f64,
    pub argmax: Option<DyadicCube>,
    /// Some per-cube value exceeded the reporting cap.
    pub capped: bool,
}

impl CharacteristicReport {
    /// Max with ties resolved to the first cube in `(generation, index)` order.
    pub fn from_values(family: String, mut values: Vec<CubeValue>) -> Self {
        values.sort_by_key(|v| v.cube.order_key());
        let mut capped = false;
        for v in values.iter_mut() {
            if !(v.value <= REPORT_CAP) {
                v.value = REPORT_CAP;
                capped = true;
            }
        }
        let mut sup = 0.0;
        let mut argmax = None;
        for v in &values {
            if argmax.is_none() || v.value > sup {
                sup = v.value;
                argmax = Some(v.cube);
            }
        }
        CharacteristicReport {
            family,
            values,
            sup,
            argmax,
            capped,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "grid,j,k0,k1,value")?;
        for v in &self.values {
            writeln!(
                w,
                "{},{},{},{},{}",
                v.cube.grid,
                v.cube.gen,
                v.cube.k[0],
                v.cube.k[1],
                fmt_f64(v.value)
            )?;
        }
        Ok(())
    }
}

/// `⟨σ^q⟩_Q^{1/q} ⟨ω^{-p'}⟩_Q^{1/p'}` on every cube of the family.
pub fn apq_characteristic(
    sigma: &Weight,
    omega: &Weight,
    p: f64,
    q: f64,
    family: &CubeFamily,
) -> Result<CharacteristicReport> {
    sigma.domain().same_as(omega.domain())?;
    if !(p > 1.0 && q >= 1.0) {
        return Err(Error::InvalidExponent(format!("p={p}, q={q}")));
    }
    let domain = *sigma.domain();
    let pc = conjugate(p);
    let a = PowerMass::new(sigma, q)?;
    let b = PowerMass::new(omega, -pc)?;
    let values = family
        .cubes(&domain)
        .into_iter()
        .map(|cube| {
            let ln_n = (cube.num_cells(&domain) as f64).ln();
            let ln_v = (a.log_sum(&cube) - ln_n) / q + (b.log_sum(&cube) - ln_n) / pc;
            CubeValue {
                cube,
                value: ln_v.exp(),
            }
        })
        .collect();
    Ok(CharacteristicReport::from_values(family.descriptor(), values))
}

/// `[w]_{A_p} = apq(w^{1/p}, w^{1/p}, p, p)^p`, per cube.
pub fn ap_characteristic(w: &Weight, p: f64, family: &CubeFamily) -> Result<CharacteristicReport> {
    let root = w.pow(1.0 / p)?;
    let r = apq_characteristic(&root, &root, p, p, family)?;
    let values = r
        .values
        .into_iter()
        .map(|v| CubeValue {
            cube: v.cube,
            value: v.value.powf(p),
        })
        .collect();
    Ok(CharacteristicReport::from_values(r.family, values))
}

#[derive(Clone, Debug, Serialize)]
pub struct MembershipReport {
    pub depths: Vec<u32>,
    pub sups: Vec<f64>,
    /// The last two depths agree within 10%.
    pub stable: bool,
    /// Every refinement grew the characteristic by more than 10%.
    pub divergent: bool,
}

/// Stability of `[w]_{A_p}` across lattice depths.
pub fn ap_membership(
    depths: &[u32],
    p: f64,
    build: impl Fn(u32) -> Result<Weight>,
) -> Result<MembershipReport> {
    let mut sups = Vec::with_capacity(depths.len());
    for &m in depths {
        let w = build(m)?;
        sups.push(ap_characteristic(&w, p, &CubeFamily::CanonicalDyadic)?.sup);
    }
    let rel = |a: f64, b: f64| (b - a).abs() / a.abs().max(f64::MIN_POSITIVE);
    let stable = sups.len() >= 2 && rel(sups[sups.len() - 2], sups[sups.len() - 1]) <= 0.1;
    let divergent = sups.len() >= 2 && sups.windows(2).all(|w| w[1] > 1.1 * w[0]);
    Ok(MembershipReport {
        depths: depths.to_vec(),
        sups,
        stable,
        divergent,
    })
}

/// `ν = (μ/λ)^{1/(1/p + 1/q')}`.
pub fn bloom_weight(mu: &Weight, lambda: &Weight, setup: &ExponentSetup) -> Result<Weight> {
    mu.domain().same_as(lambda.domain())?;
    let e = 1.0 / setup.bloom_sum();
    let vals = mu
        .values()
        .iter()
        .zip(lambda.values())
        .map(|(m, l)| (e * (m.ln() - l.ln())).exp())
        .collect();
    let tag = match (mu.tag(), lambda.tag()) {
        (Some(WeightTag::Power { beta: a }), Some(WeightTag::Power { beta: b })) => {
            Some(WeightTag::Power { beta: e * (a - b) })
        }
        _ => None,
    };
    Weight::from_values(mu.domain(), vals, tag)
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport {
    pub family: String,
    /// `[μ]_{A_{p,p}}`.
    pub mu_char: f64,
    /// `[λ]_{A_{q,q}}`.
    pub lambda_char: f64,
    pub bound: f64,
    pub ratios: Vec<CubeValue>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `[ν^{1/s}]_{A_{s,s}}`.
    pub nu_char: f64,
    pub nu_bound: f64,
}

pub const SANDWICH_TOL: f64 = 1e-9;

/// Verifies `1 ≤ R(Q) ≤ [μ]_{A_{p,p}}[λ]_{A_{q,q}}` on every cube with
/// `R(Q) = μ^p(Q)^{1/p} λ^{-q'}(Q)^{1/q'} / ν(Q)^{1/p+1/q'}`, and
/// `[ν^{1/s}]_{A_{s,s}} ≤ ([μ][λ])^{1/2}`.
pub fn bloom_sandwich_report(
    mu: &Weight,
    lambda: &Weight,
    setup: &ExponentSetup,
    family: &CubeFamily,
) -> Result<SandwichReport> {
    let (p, q, qc) = (setup.p, setup.q, setup.q_conj);
    let mu_rep = apq_characteristic(mu, mu, p, p, family)?;
    let la_rep = apq_characteristic(lambda, lambda, q, q, family)?;
    if mu_rep.capped || la_rep.capped || !mu_rep.sup.is_finite() || !la_rep.sup.is_finite() {
        return Err(Error::NotMuckenhoupt);
    }
    let bound = mu_rep.sup * la_rep.sup;
    let nu = bloom_weight(mu, lambda, setup)?;
    let domain = *mu.domain();
    let mp = PowerMass::new(mu, p)?;
    let lq = PowerMass::new(lambda, -qc)?;
    let nm = PowerMass::new(&nu, 1.0)?;
    let e = setup.bloom_sum();
    let mut ratios = Vec::new();
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    for cube in family.cubes(&domain) {
        let ln_n = (cube.num_cells(&domain) as f64).ln();
        let ln_r = (mp.log_sum(&cube) - ln_n) / p + (lq.log_sum(&cube) - ln_n) / qc
            - e * (nm.log_sum(&cube) - ln_n);
        let r = ln_r.exp();
        if r < 1.0 - SANDWICH_TOL || r > bound * (1.0 + SANDWICH_TOL) {
            return Err(Error::SandwichViolation {
                cube: cube.id(),
                ratio: r,
                bound,
            });
        }
        min_ratio = min_ratio.min(r);
        max_ratio = max_ratio.max(r);
        ratios.push(CubeValue { cube, value: r });
    }
    let nu_root = nu.pow(1.0 / setup.s)?;
    let nu_rep = apq_characteristic(&nu_root, &nu_root, setup.s, setup.s, family)?;
    let nu_bound = bound.sqrt();
    if nu_rep.sup > nu_bound * (1.0 + SANDWICH_TOL) {
        return Err(Error::SandwichViolation {
            cube: nu_rep.argmax.map(|c| c.id()).unwrap_or_default(),
            ratio: nu_rep.sup,
            bound: nu_bound,
        });
    }
    Ok(SandwichReport {
        family: family.descriptor(),
        mu_char: mu_rep.sup,
        lambda_char: la_rep.sup,
        bound,
        ratios,
        min_ratio,
        max_ratio,
        nu_char: nu_rep.sup,
        nu_bound,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct AinftyOptions {
    pub samples: usize,
    pub seed: u64,
    /// Largest admissible constant `C` in the fit.
    pub c_cap: f64,
}

impl Default for AinftyOptions {
    fn default() -> Self {
        AinftyOptions {
            samples: 2000,
            seed: 0,
            c_cap: 4.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AinftyFit {
    pub delta: f64,
    pub constant: f64,
    pub pairs: usize,
    pub degenerate: bool,
    pub small_delta: bool,
}

pub const SMALL_DELTA: f64 = 0.25;

/// Fits the largest `δ ∈ [0, 1]` with `w(E)/w(Q) ≤ C (|E|/|Q|)^δ` and
/// `C ≤ c_cap` over sampled pairs `E ⊂ Q`. Samples mix random sub-boxes of
/// random canonical cubes with mass-greedy dyadic descendants.
pub fn ainfty_decay_estimate(w: &Weight, opts: &AinftyOptions) -> Result<AinftyFit> {
    let domain = *w.domain();
    let m = domain.depth();
    let dim = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(opts.samples);
    let top = m.saturating_sub(1);
    for s in 0..opts.samples {
        let gen = rng.gen_range(0..top.max(1));
        let per = 1usize << gen;
        let k = [rng.gen_range(0..per), if dim == 2 { rng.gen_range(0..per) } else { 0 }];
        let q = DyadicCube::canonical(gen, k);
        let qb = q.as_box(&domain).unwrap();
        let wq = w.mass(&qb);
        let (e_mass, e_cells) = if s % 2 == 0 {
            let mut lo = qb.lo;
            let mut hi = qb.hi;
            for a in 0..dim {
                let x0 = rng.gen_range(qb.lo[a]..qb.hi[a]);
                let x1 = rng.gen_range(x0 + 1..=qb.hi[a]);
                lo[a] = x0;
                hi[a] = x1;
            }
            let eb = AlignedBox { lo, hi };
            (w.mass(&eb), eb.num_cells())
        } else {
            let depth = rng.gen_range(1..=(m - gen));
            let mut cur = q;
            for _ in 0..depth {
                cur = cur
                    .children(&domain)
                    .into_iter()
                    .max_by(|a, b| w.cube_mass(a).total_cmp(&w.cube_mass(b)))
                    .unwrap();
            }
            (w.cube_mass(&cur), cur.num_cells(&domain))
        };
        if e_cells < qb.num_cells() {
            pairs.push((e_cells as f64 / qb.num_cells() as f64, e_mass / wq));
        }
    }
    let degenerate = pairs.iter().all(|(f, r)| (r - f).abs() <= 1e-12 * f);
    if degenerate {
        return Ok(AinftyFit {
            delta: 1.0,
            constant: 1.0,
            pairs: pairs.len(),
            degenerate: true,
            small_delta: false,
        });
    }
    let c_of = |delta: f64| {
        pairs
            .iter()
            .map(|(f, r)| r / f.powf(delta))
            .fold(0.0f64, f64::max)
    };
    let delta = if c_of(1.0) <= opts.c_cap {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if c_of(mid) <= opts.c_cap {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    Ok(AinftyFit {
        delta,
        constant: c_of(delta),
        pairs: pairs.len(),
        degenerate: false,
        small_delta: delta < SMALL_DELTA,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{sample_weight, seeded_weight_pair, WeightSpec};
    use proptest::prelude::*;

    fn dom(m: u32) -> LatticeDomain {
        LatticeDomain::new(1, 1.0, m).unwrap()
    }

    #[test]
    fn exponent_examples() {
        let e = bloom_exponents(3.0, 3.0, 2).unwrap();
        assert_eq!(e.alpha, 0.0);
        assert!((e.s - 2.0).abs() < 1e-15);
        assert!((e.beta_exp - 1.0).abs() < 1e-15);
        let e = bloom_exponents(2.0, 4.0, 1).unwrap();
        assert!((e.alpha - 0.25).abs() < 1e-15);
        assert!((e.beta_exp - 0.8).abs() < 1e-15);
        assert!((e.s - 1.6).abs() < 1e-15);
        assert!((e.t - 5.0 / 3.0).abs() < 1e-14);
        assert!(bloom_exponents(4.0, 2.0, 1).is_err());
        assert!(bloom_exponents(1.0, 2.0, 1).is_err());
    }

    #[test]
    fn exponent_identities_on_grid() {
        for i in 0..10 {
            for j in 0..5 {
                let p = 1.1 + 0.3 * i as f64;
                let q = p + 0.7 * j as f64;
                for d in [1, 2] {
                    let e = bloom_exponents(p, q, d).unwrap();
                    let df = d as f64;
                    assert!((1.0 + e.alpha / df - e.bloom_sum()).abs() < 1e-12);
                    assert!((e.s - 2.0 / (1.0 + e.alpha / df)).abs() < 1e-12);
                    assert!((e.s - (1.0 + 1.0 / e.t)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn unit_weights_have_unit_characteristic() {
        let d = dom(8);
        let one = Weight::constant(&d, 1.0);
        let r = apq_characteristic(&one, &one, 2.0, 3.0, &CubeFamily::CanonicalDyadic).unwrap();
        assert!(r.values.iter().all(|v| (v.value - 1.0).abs() < 1e-12));
        assert!((r.sup - 1.0).abs() < 1e-12);
        assert_eq!(r.argmax, Some(DyadicCube::canonical(0, [0, 0])));
    }

    #[test]
    fn characteristic_matches_direct_sum() {
        let d = dom(6);
        let w = Weight::power(&d, 0.5).unwrap();
        let r = ap_characteristic(&w, 2.0, &CubeFamily::CanonicalDyadic).unwrap();
        for v in r.values.iter().step_by(7) {
            let b = v.cube.as_box(&d).unwrap();
            let n = b.num_cells() as f64;
            let a: f64 = b.cells(&d).map(|c| w.value(c)).sum::<f64>() / n;
            let bb: f64 = b.cells(&d).map(|c| 1.0 / w.value(c)).sum::<f64>() / n;
            assert!((v.value - a * bb).abs() < 1e-12 * a * bb);
        }
        assert!(r.sup > 1.0 && r.sup.is_finite());
    }

    #[test]
    fn negative_square_power_diverges() {
        let rep = ap_membership(&[6, 8, 10], 2.0, |m| Weight::power(&dom(m), -2.0)).unwrap();
        assert!(rep.divergent, "{:?}", rep.sups);
        assert!(!rep.stable);
        let rep = ap_membership(&[8, 10], 2.0, |m| Weight::power(&dom(m), 0.5)).unwrap();
        assert!(rep.stable && !rep.divergent, "{:?}", rep.sups);
    }

    #[test]
    fn bloom_weight_examples() {
        let d = dom(8);
        let mu = Weight::power(&d, 0.25).unwrap();
        let one = Weight::power(&d, 0.0).unwrap();
        let setup = bloom_exponents(2.0, 4.0, 1).unwrap();
        let nu = bloom_weight(&mu, &one, &setup).unwrap();
        let expect = Weight::power(&d, 0.2).unwrap();
        for c in 0..d.num_cells() {
            assert!((nu.value(c) - expect.value(c)).abs() < 1e-13);
        }
        match nu.tag() {
            Some(WeightTag::Power { beta }) => assert!((beta - 0.2).abs() < 1e-15),
            other => panic!("{other:?}"),
        }

        let s22 = bloom_exponents(2.0, 2.0, 1).unwrap();
        let la = Weight::power(&d, -0.3).unwrap();
        let nu = bloom_weight(&mu, &la, &s22).unwrap();
        for c in 0..d.num_cells() {
            assert!((nu.value(c) - mu.value(c) / la.value(c)).abs() < 1e-13 * nu.value(c));
        }
        let same = bloom_weight(&mu, &mu, &setup).unwrap();
        assert!(same.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn sandwich_trivial_and_power() {
        let d = dom(10);
        let one = Weight::constant(&d, 1.0);
        let s = bloom_exponents(2.0, 2.0, 1).unwrap();
        let r = bloom_sandwich_report(&one, &one, &s, &CubeFamily::CanonicalDyadic).unwrap();
        assert!((r.max_ratio - 1.0).abs() < 1e-12 && (r.min_ratio - 1.0).abs() < 1e-12);
        assert!((r.nu_char - 1.0).abs() < 1e-12);

        let mu = Weight::power(&d, 0.3).unwrap();
        let r = bloom_sandwich_report(&mu, &one, &s, &CubeFamily::CanonicalDyadic).unwrap();
        assert!(r.max_ratio <= r.mu_char * r.lambda_char * (1.0 + 1e-9));
        assert!(r.min_ratio >= 1.0 - 1e-9);
    }

    #[test]
    fn sandwich_on_seeded_pairs_all_grids() {
        let d = LatticeDomain::new(1, 1.0, 8).unwrap();
        let s = bloom_exponents(2.0, 3.0, 1).unwrap();
        for seed in 0..6 {
            let (mu, la) = seeded_weight_pair(&d, seed).unwrap();
            bloom_sandwich_report(&mu, &la, &s, &CubeFamily::AllAdjacent).unwrap();
        }
    }

    #[test]
    fn family_enlargement_never_decreases_sup() {
        let d = dom(7);
        let w = Weight::power(&d, 0.6).unwrap();
        let a = ap_characteristic(&w, 2.0, &CubeFamily::CanonicalDyadic).unwrap();
        let b = ap_characteristic(&w, 2.0, &CubeFamily::AllAdjacent).unwrap();
        assert!(b.sup >= a.sup);
    }

    #[test]
    fn log_space_powers_survive_large_exponents() {
        let d = dom(6);
        let w = Weight::from_fn(&d, |x| 2.0 + x[0]).unwrap();
        let r = apq_characteristic(&w, &w, 1.01, 400.0, &CubeFamily::CanonicalDyadic).unwrap();
        assert!(r.values.iter().all(|v| v.value.is_finite()));
    }

    #[test]
    fn ainfty_examples() {
        let d = dom(10);
        let one = Weight::constant(&d, 1.0);
        let fit = ainfty_decay_estimate(&one, &AinftyOptions::default()).unwrap();
        assert!(fit.degenerate);
        assert_eq!((fit.delta, fit.constant), (1.0, 1.0));

        let w = Weight::power(&d, 0.5).unwrap();
        let fit = ainfty_decay_estimate(&w, &AinftyOptions::default()).unwrap();
        assert!(fit.delta > 0.0 && fit.delta <= 1.0 && fit.constant.is_finite());
        assert!(!fit.small_delta);

        let spike = sample_weight(
            &d,
            &WeightSpec::Spike {
                cell: 300,
                value: 1e6,
                base: 1.0,
            },
        )
        .unwrap();
        let fit = ainfty_decay_estimate(&spike, &AinftyOptions::default()).unwrap();
        assert!(fit.small_delta, "{fit:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn characteristic_at_least_one(seed in 0u64..1000, p in 1.2f64..4.0, dq in 0.0f64..3.0) {
            let d = dom(7);
            let w = sample_weight(&d, &WeightSpec::LogSmooth { seed, modes: 5, amplitude: 1.0 }).unwrap();
            let r = apq_characteristic(&w, &w, p, p + dq, &CubeFamily::CanonicalDyadic).unwrap();
            prop_assert!(r.values.iter().all(|v| v.value >= 1.0 - 1e-12));
        }

        #[test]
        fn characteristic_rescaling_invariant(seed in 0u64..1000, c in 0.01f64..100.0) {
            let d = dom(7);
            let w = sample_weight(&d, &WeightSpec::LogSmooth { seed, modes: 3, amplitude: 0.8 }).unwrap();
            let cw = Weight::from_values(&d, w.values().iter().map(|v| v * c).collect(), None).unwrap();
            let a = apq_characteristic(&w, &w, 2.0, 3.0, &CubeFamily::CanonicalDyadic).unwrap();
            let b = apq_characteristic(&cw, &cw, 2.0, 3.0, &CubeFamily::CanonicalDyadic).unwrap();
            prop_assert!((a.sup - b.sup).abs() <= 1e-12 * a.sup);
        }

        #[test]
        fn bloom_weights_are_reciprocal(seed in 0u64..1000, p in 1.2f64..3.0, dq in 0.0f64..2.0) {
            let d = dom(7);
            let (mu, la) = seeded_weight_pair(&d, seed).unwrap();
            let s = bloom_exponents(p, p + dq, 1).unwrap();
            let a = bloom_weight(&mu, &la, &s).unwrap();
            let b = bloom_weight(&la, &mu, &s).unwrap();
            for c in 0..d.num_cells() {
                prop_assert!((a.value(c) * b.value(c) - 1.0).abs() < 1e-12);
            }
        }
    }
}
