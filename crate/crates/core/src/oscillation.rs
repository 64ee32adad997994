//! Fractional weighted oscillations, BMO norms, VMO profiles and witnesses,
//! and the John–Nirenberg comparison of `r`- and `1`-oscillations.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dyadic::{enumerate_cubes, CubeFilter, DyadicCube, DyadicGrid};
use crate::error::{Error, Result};
use crate::lattice::{fmt_f64, AlignedBox, CellSet, LatticeDomain, SampledFunction, C64};
use crate::sparse::{almost_orthogonality_check, cz_augment, cz_constant, SparseFamily, ALMOST_ORTHOGONALITY_BOUND};
use crate::summation::{ComplexKahanSum, KahanSum};
use crate::weights::{conjugate, CharacteristicReport, CubeFamily, CubeValue, ExponentSetup, Weight};

/// Where an oscillation is taken.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Box(AlignedBox),
    Cube(DyadicCube),
    Mask(CellSet),
}

impl Region {
    fn runs(&self, domain: &LatticeDomain) -> Vec<(usize, usize)> {
        match self {
            Region::Box(b) => b.rows(domain).collect(),
            Region::Cube(q) => match q.as_box(domain) {
                Some(b) => b.rows(domain).collect(),
                None => q.cell_set(domain).runs().to_vec(),
            },
            Region::Mask(s) => s.runs().to_vec(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct OscillationQuery<'a> {
    pub b: &'a SampledFunction,
    pub w: &'a Weight,
    pub alpha: f64,
    pub r: f64,
    pub region: Region,
}

impl<'a> OscillationQuery<'a> {
    pub fn new(b: &'a SampledFunction, w: &'a Weight, alpha: f64, region: Region) -> Self {
        OscillationQuery { b, w, alpha, r: 1.0, region }
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn evaluate(&self) -> Result<f64> {
        oscillation(self)
    }
}

/// `w(Q)^{-α/d} (w(Q)^{-1} ∫_Q |b - ⟨b⟩_Q|^r w^{1-r})^{1/r}`, with `⟨b⟩_Q`
/// the unweighted average.
pub fn oscillation(q: &OscillationQuery<'_>) -> Result<f64> {
    let domain = *q.b.domain();
    domain.same_as(q.w.domain())?;
    if !(q.r >= 1.0 && q.r.is_finite()) {
        return Err(Error::InvalidExponent(format!("r = {} must be >= 1", q.r)));
    }
    if !(q.alpha >= 0.0 && q.alpha.is_finite()) {
        return Err(Error::InvalidExponent(format!("alpha = {} must be >= 0", q.alpha)));
    }
    let runs = q.region.runs(&domain);
    let count: usize = runs.iter().map(|(s, e)| e - s).sum();
    if count == 0 {
        return Err(Error::EmptyRegion);
    }
    let mut sum = ComplexKahanSum::new();
    let mut mass = KahanSum::new();
    for &(s, e) in &runs {
        for c in s..e {
            sum.add(q.b.value(c));
            mass.add(q.w.value(c));
        }
    }
    let h = domain.cell_volume();
    let mass = mass.value() * h;
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let avg = sum.value() / count as f64;
    let mut dev = KahanSum::new();
    let r = q.r;
    for &(s, e) in &runs {
        for c in s..e {
            let x = (q.b.value(c) - avg).norm();
            if r == 1.0 {
                dev.add(x);
            } else if x > 0.0 {
                dev.add(x.powf(r) * q.w.value(c).powf(1.0 - r));
            }
        }
    }
    let d = domain.dim() as f64;
    let mean = dev.value() * h / mass;
    let core = if r == 1.0 { mean } else { mean.powf(1.0 / r) };
    Ok(mass.powf(-q.alpha / d) * core)
}

/// `O_w^α(b; Q)` with `r = 1`.
pub fn cube_oscillation(b: &SampledFunction, w: &Weight, alpha: f64, q: &DyadicCube) -> Result<f64> {
    oscillation(&OscillationQuery::new(b, w, alpha, Region::Cube(*q)))
}

#[derive(Clone, Copy, Debug)]
pub enum BmoMode<'a> {
    Fractional { nu: &'a Weight, alpha: f64 },
    TwoWeight {
        mu: &'a Weight,
        lambda: &'a Weight,
        setup: &'a ExponentSetup,
    },
}

/// `∫_Q |b - ⟨b⟩_Q|`.
fn abs_deviation(b: &SampledFunction, q: &DyadicCube) -> f64 {
    let domain = b.domain();
    let runs = Region::Cube(*q).runs(domain);
    let n = q.num_cells(domain) as f64;
    let avg = runs
        .iter()
        .flat_map(|&(s, e)| s..e)
        .map(|c| b.value(c))
        .collect::<ComplexKahanSum>()
        .value()
        / n;
    runs.iter()
        .flat_map(|&(s, e)| s..e)
        .map(|c| (b.value(c) - avg).norm())
        .collect::<KahanSum>()
        .value()
        * domain.cell_volume()
}

/// Sup of the fractional oscillation or of the two-weight quotient
/// `∫_Q |b - ⟨b⟩_Q| / (μ^p(Q)^{1/p} λ^{-q'}(Q)^{1/q'})` over the family.
pub fn bmo_norm(b: &SampledFunction, mode: BmoMode<'_>, family: &CubeFamily) -> Result<CharacteristicReport> {
    let domain = *b.domain();
    let cubes = family.cubes(&domain);
    if cubes.is_empty() {
        return Err(Error::InvalidParameter("empty cube family".into()));
    }
    let values = match mode {
        BmoMode::Fractional { nu, alpha } => cubes
            .into_iter()
            .map(|cube| Ok(CubeValue { cube, value: cube_oscillation(b, nu, alpha, &cube)? }))
            .collect::<Result<Vec<_>>>()?,
        BmoMode::TwoWeight { mu, lambda, setup } => {
            domain.same_as(mu.domain())?;
            domain.same_as(lambda.domain())?;
            let mp = mu.pow(setup.p)?;
            let lq = lambda.pow(-setup.q_conj)?;
            cubes
                .into_iter()
                .map(|cube| {
                    let den = mp.cube_mass(&cube).powf(1.0 / setup.p) * lq.cube_mass(&cube).powf(1.0 / setup.q_conj);
                    if !(den > 0.0) {
                        return Err(Error::ZeroMass);
                    }
                    Ok(CubeValue {
                        cube,
                        value: abs_deviation(b, &cube) / den,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(CharacteristicReport::from_values(family.descriptor(), values))
}

#[derive(Clone, Debug, Serialize)]
pub struct BmoSandwich {
    pub two_weight: CharacteristicReport,
    pub fractional: CharacteristicReport,
    /// `[μ]_{A_{p,p}} [λ]_{A_{q,q}}` over the family.
    pub bound: f64,
    /// Extremes of `fractional / two-weight` over cubes with nonzero values.
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub violations: Vec<DyadicCube>,
}

/// Per-cube `two-weight ≤ fractional ≤ [μ][λ] · two-weight` with relative
/// tolerance `1e-9`.
pub fn bmo_sandwich(
    b: &SampledFunction,
    mu: &Weight,
    lambda: &Weight,
    setup: &ExponentSetup,
    family: &CubeFamily,
) -> Result<BmoSandwich> {
    let nu = crate::weights::bloom_weight(mu, lambda, setup)?;
    let two = bmo_norm(b, BmoMode::TwoWeight { mu, lambda, setup }, family)?;
    let frac = bmo_norm(b, BmoMode::Fractional { nu: &nu, alpha: setup.alpha }, family)?;
    let mc = crate::weights::apq_characteristic(mu, mu, setup.p, setup.p, family)?.sup;
    let lc = crate::weights::apq_characteristic(lambda, lambda, setup.q, setup.q, family)?.sup;
    let bound = mc * lc;
    let tol = 1e-9;
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    let mut violations = Vec::new();
    for (t, f) in two.values.iter().zip(&frac.values) {
        debug_assert_eq!(t.cube, f.cube);
        if t.value > 0.0 {
            let r = f.value / t.value;
            min_ratio = min_ratio.min(r);
            max_ratio = max_ratio.max(r);
        }
        let floor = 1e-300;
        if t.value > f.value * (1.0 + tol) + floor || f.value > bound * t.value * (1.0 + tol) + floor {
            violations.push(t.cube);
        }
    }
    Ok(BmoSandwich {
        two_weight: two,
        fractional: frac,
        bound,
        min_ratio: if min_ratio.is_finite() { min_ratio } else { 1.0 },
        max_ratio,
        violations,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct VmoProfile {
    /// `(ℓ, sup over cubes of side ℓ)`, coarse to fine, down to `ℓ = 4h`.
    pub small: Vec<(f64, f64)>,
    /// `(ℓ, sup over cubes of side ≥ ℓ)`.
    pub large: Vec<(f64, f64)>,
    /// `(r, sup over cubes with dist(Q, 0) ≥ r)`.
    pub distance: Vec<(f64, f64)>,
}

impl VmoProfile {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "curve,parameter,value")?;
        for (name, curve) in [("small", &self.small), ("large", &self.large), ("distance", &self.distance)] {
            for (x, y) in curve {
                writeln!(w, "{name},{},{}", fmt_f64(*x), fmt_f64(*y))?;
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        [&self.small, &self.large, &self.distance]
            .iter()
            .all(|c| c.iter().all(|&(_, y)| y == 0.0))
    }
}

/// Canonical cubes with at least four cells per side.
fn profile_cubes(domain: &LatticeDomain) -> Vec<DyadicCube> {
    let f = CubeFilter::all();
    enumerate_cubes(domain, &DyadicGrid::canonical(), &f)
        .filter(|q| q.gen + 2 <= domain.depth())
        .collect()
}

/// Small-scale, large-scale and distance curves of `O_ν^α(b; ·)` on the
/// canonical grid. The distance radii are `kL/8`, `k = 0..=8`.
pub fn vmo_profile(b: &SampledFunction, nu: &Weight, alpha: f64) -> Result<VmoProfile> {
    let domain = *b.domain();
    let cubes = profile_cubes(&domain);
    let mut vals = Vec::with_capacity(cubes.len());
    for q in &cubes {
        vals.push((q.gen, q.dist_to_origin(&domain), cube_oscillation(b, nu, alpha, q)?));
    }
    let gens = domain.depth() - 1;
    let mut per_gen = vec![0.0f64; gens as usize];
    for &(g, _, v) in &vals {
        per_gen[g as usize] = per_gen[g as usize].max(v);
    }
    let ell = |g: u32| domain.width() / (1u64 << g) as f64;
    let small = (0..gens).map(|g| (ell(g), per_gen[g as usize])).collect();
    let mut acc: f64 = 0.0;
    let large = (0..gens)
        .map(|g| {
            acc = acc.max(per_gen[g as usize]);
            (ell(g), acc)
        })
        .collect();
    let distance = (0..=8)
        .map(|k| {
            let r = k as f64 * domain.half_width() / 8.0;
            let s = vals
                .iter()
                .filter(|&&(_, d, _)| d >= r)
                .map(|&(_, _, v)| v)
                .fold(0.0, f64::max);
            (r, s)
        })
        .collect();
    Ok(VmoProfile { small, large, distance })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessMode {
    SmallScale,
    LargeScale,
    FarAway,
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessPair {
    pub cube: DyadicCube,
    pub mask: CellSet,
    /// `O_ν^α(b; E)`.
    pub oscillation: f64,
    /// `O_ν^α(b; Q)`.
    pub cube_oscillation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessFamily {
    pub mode: WitnessMode,
    pub threshold: f64,
    pub theta: f64,
    pub pairs: Vec<WitnessPair>,
    /// Pairs removed because `O(b; E) < threshold/2`.
    pub dropped: usize,
}

impl WitnessFamily {
    /// Cube ids with run-length encoded masks.
    pub fn to_json(&self, domain: &LatticeDomain) -> serde_json::Value {
        json!({
            "mode": self.mode,
            "threshold": self.threshold,
            "theta": self.theta,
            "dropped": self.dropped,
            "pairs": self.pairs.iter().map(|p| json!({
                "cube": p.cube.id(),
                "side": p.cube.side_length(domain),
                "mask": p.mask.to_rle(),
                "mask_fraction": p.mask.len() as f64 / p.cube.num_cells(domain) as f64,
                "oscillation": p.oscillation,
                "cube_oscillation": p.cube_oscillation,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn masks_disjoint(&self) -> bool {
        for (i, a) in self.pairs.iter().enumerate() {
            for b in &self.pairs[i + 1..] {
                if a.mask.intersection_len(&b.mask) > 0 {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Clone, Debug, Serialize)]
pub enum WitnessOutcome {
    Found(WitnessFamily),
    NoneFound { profile: VmoProfile },
}

/// Share of a selected cube that later selections may remove.
pub const WITNESS_THETA: f64 = 0.125;

/// Pairs `(Q_j, E_j)` with pairwise disjoint `E_j` on which the oscillation
/// stays above `c0/2`.
///
/// Small-scale candidates come from the generations below which the
/// small-scale profile never drops under `c0`.
/// Small and large scales: candidates with `O(b; Q) ≥ c0` are scanned from
/// fine to coarse and a cube is kept when the union of kept cubes inside it
/// covers at most `θ|Q|`; `E_Q` is `Q` minus that union. Far away: candidates
/// at distance `≥ L/4` are taken in order of decreasing distance when disjoint
/// from the kept ones, with `E = Q`. Pairs failing the `c0/2` check are
/// dropped and the masks rebuilt.
pub fn vmo_witness(b: &SampledFunction, nu: &Weight, alpha: f64, c0: f64, mode: WitnessMode) -> Result<WitnessOutcome> {
    let domain = *b.domain();
    if !(c0 > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold {c0} must be positive")));
    }
    let m = domain.depth();
    let mut all = Vec::new();
    for q in profile_cubes(&domain) {
        all.push((q, cube_oscillation(b, nu, alpha, &q)?));
    }
    // Small scales must exceed the threshold at every generation down to 4h.
    let mut per_gen = vec![0.0f64; m as usize - 1];
    for (q, o) in &all {
        per_gen[q.gen as usize] = per_gen[q.gen as usize].max(*o);
    }
    let mut persist_from = per_gen.len() as u32;
    while persist_from > 0 && per_gen[persist_from as usize - 1] >= c0 {
        persist_from -= 1;
    }
    let mut candidates = Vec::new();
    for (q, o) in all {
        let keep = match mode {
            WitnessMode::SmallScale => q.gen >= 3.max(persist_from),
            WitnessMode::LargeScale => q.gen <= 2,
            WitnessMode::FarAway => q.gen >= 1 && q.dist_to_origin(&domain) >= domain.half_width() / 4.0,
        };
        if keep && o >= c0 {
            candidates.push((q, o));
        }
    }
    let mut selected: Vec<(DyadicCube, f64)> = Vec::new();
    match mode {
        WitnessMode::FarAway => {
            candidates.sort_by(|a, b| {
                b.0.dist_to_origin(&domain)
                    .total_cmp(&a.0.dist_to_origin(&domain))
                    .then(a.0.order_key().cmp(&b.0.order_key()))
            });
            for (q, o) in candidates {
                if selected.iter().all(|(s, _)| !s.contains(&q) && !q.contains(s)) {
                    selected.push((q, o));
                }
            }
        }
        _ => {
            candidates.sort_by_key(|(q, _)| std::cmp::Reverse(q.order_key()));
            for (q, o) in candidates {
                let inside = union_inside(&domain, &q, selected.iter().map(|(s, _)| s));
                if inside.len() as f64 <= WITNESS_THETA * q.num_cells(&domain) as f64 {
                    selected.push((q, o));
                }
            }
        }
    }
    let mut dropped = 0;
    loop {
        let mut pairs = Vec::with_capacity(selected.len());
        let mut fail = None;
        for (i, (q, o)) in selected.iter().enumerate() {
            let mask = match mode {
                WitnessMode::FarAway => q.cell_set(&domain),
                _ => q
                    .cell_set(&domain)
                    .difference(&union_inside(&domain, q, selected.iter().map(|(s, _)| s))),
            };
            let oe = oscillation(&OscillationQuery::new(b, nu, alpha, Region::Mask(mask.clone())))?;
            if oe < c0 / 2.0 {
                fail = Some(i);
                break;
            }
            pairs.push(WitnessPair {
                cube: *q,
                mask,
                oscillation: oe,
                cube_oscillation: *o,
            });
        }
        match fail {
            Some(i) => {
                selected.remove(i);
                dropped += 1;
            }
            None => {
                if pairs.is_empty() {
                    return Ok(WitnessOutcome::NoneFound {
                        profile: vmo_profile(b, nu, alpha)?,
                    });
                }
                pairs.sort_by_key(|p| p.cube.order_key());
                return Ok(WitnessOutcome::Found(WitnessFamily {
                    mode,
                    threshold: c0,
                    theta: WITNESS_THETA,
                    pairs,
                    dropped,
                }));
            }
        }
    }
}

/// Union of the cubes strictly inside `q`.
fn union_inside<'a>(domain: &LatticeDomain, q: &DyadicCube, cubes: impl Iterator<Item = &'a DyadicCube>) -> CellSet {
    let mut u = CellSet::empty();
    for s in cubes {
        if s != q && q.contains(s) {
            u = u.union(&s.cell_set(domain));
        }
    }
    u
}

#[derive(Clone, Debug, Serialize)]
pub struct JnReport {
    pub r: f64,
    /// `sup O^{r,α}` over the dyadic subcubes of `Q_0`.
    pub sup_r: f64,
    /// `sup O^{1,α}` over the same cubes.
    pub sup_1: f64,
    /// `sup_r / sup_1`, `1` when both vanish.
    pub ratio: f64,
    /// `min O^r(Q)/O^1(Q)` over cubes with nonzero oscillation.
    pub min_cube_ratio: f64,
    pub family_size: usize,
    /// `O^{r,α}(b; Q_0)`.
    pub lhs: f64,
    /// `(w(Q_0)^{-(1+αr/d)} Σ O^{1,α}(Q)^r w(Q)^{1+αr/d})^{1/r}`.
    pub rhs: f64,
    pub c_impl: f64,
    /// Almost-orthogonality ratio measured on this family.
    pub ao_measured: f64,
    /// `max_Q (⟨w⟩_Q^{r-1} ⟨w^{1-r}⟩_Q)^{1/r}` over the family.
    pub weight_factor: f64,
    pub holds: bool,
}

/// Compares `r`- and `1`-oscillations on the dyadic subcubes of `q0` and checks
/// `O^r(b; Q_0) ≤ C_impl · rhs` on the augmented family, where
/// `C_impl = 2^d Λ · A · max_Q (⟨w⟩_Q^{r-1}⟨w^{1-r}⟩_Q)^{1/r}` and `A` is the
/// committed almost-orthogonality ceiling (`1` when `r = 1`).
pub fn jn_verify(b: &SampledFunction, w: &Weight, p: f64, r: f64, alpha: f64, q0: &DyadicCube) -> Result<JnReport> {
    let domain = *b.domain();
    domain.same_as(w.domain())?;
    if !(p > 1.0) {
        return Err(Error::InvalidExponent(format!("p = {p}")));
    }
    if !(r >= 1.0 && r <= conjugate(p) * (1.0 + 1e-12)) {
        return Err(Error::InvalidExponent(format!("r = {r} outside [1, p'] with p = {p}")));
    }
    if q0.wraps(&domain) {
        return Err(Error::Precondition(format!("cube {} wraps", q0.id())));
    }
    let d = domain.dim() as f64;
    let grid = DyadicGrid::new(&domain, q0.grid)?;
    let filter = CubeFilter::all().within(*q0);
    let mut sup_r: f64 = 0.0;
    let mut sup_1: f64 = 0.0;
    let mut min_cube_ratio = f64::INFINITY;
    for q in enumerate_cubes(&domain, &grid, &filter) {
        let o1 = cube_oscillation(b, w, alpha, &q)?;
        let or = oscillation(&OscillationQuery::new(b, w, alpha, Region::Cube(q)).with_r(r))?;
        sup_r = sup_r.max(or);
        sup_1 = sup_1.max(o1);
        if o1 > 0.0 {
            min_cube_ratio = min_cube_ratio.min(or / o1);
        }
    }
    let ratio = if sup_1 > 0.0 { sup_r / sup_1 } else { 1.0 };

    let family: SparseFamily = cz_augment(b, q0)?;
    let lhs = oscillation(&OscillationQuery::new(b, w, alpha, Region::Cube(*q0)).with_r(r))?;
    let e = 1.0 + alpha * r / d;
    let mut sum = KahanSum::new();
    let mut weight_factor: f64 = 0.0;
    let w_dual = w.pow(1.0 - r)?;
    let mut coeffs = Vec::with_capacity(family.len());
    for entry in &family.entries {
        let q = entry.cube;
        let o1 = cube_oscillation(b, w, alpha, &q)?;
        let wq = w.cube_mass(&q);
        sum.add(o1.powf(r) * wq.powf(e));
        let vol = q.volume(&domain);
        let k = (wq / vol).powf(r - 1.0) * (w_dual.cube_mass(&q) / vol);
        weight_factor = weight_factor.max(k.powf(1.0 / r));
        let a = abs_deviation(b, &q) / vol;
        coeffs.push(SampledFunction::indicator_set(&domain, &q.cell_set(&domain)).scale(C64::new(a, 0.0)));
    }
    let rhs = (sum.value() / w.cube_mass(q0).powf(e)).powf(1.0 / r);
    let ao = if r == 1.0 { 1.0 } else { ALMOST_ORTHOGONALITY_BOUND };
    let c_impl = cz_constant(domain.dim()) * ao * weight_factor;
    let ao_measured = if r == 1.0 || coeffs.iter().all(|f| f.values().iter().all(|v| v.norm() == 0.0)) {
        1.0
    } else {
        almost_orthogonality_check(&family, &coeffs, &w_dual, r)?
    };
    let holds = lhs <= c_impl * rhs * (1.0 + 1e-9) + 1e-300;
    Ok(JnReport {
        r,
        sup_r,
        sup_1,
        ratio,
        min_cube_ratio: if min_cube_ratio.is_finite() { min_cube_ratio } else { 1.0 },
        family_size: family.len(),
        lhs,
        rhs,
        c_impl,
        ao_measured,
        weight_factor,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{sample_symbol, seeded_weight_pair, SymbolSpec};
    use crate::weights::bloom_exponents;
    use proptest::prelude::*;

    fn dom(m: u32) -> LatticeDomain {
        LatticeDomain::new(1, 1.0, m).unwrap()
    }

    fn unit(d: &LatticeDomain) -> Weight {
        Weight::constant(d, 1.0)
    }

    fn osc_box(b: &SampledFunction, w: &Weight, alpha: f64, r: f64, lo: f64, hi: f64) -> f64 {
        let bx = AlignedBox::from_coords(b.domain(), &[(lo, hi)]).unwrap();
        oscillation(&OscillationQuery::new(b, w, alpha, Region::Box(bx)).with_r(r)).unwrap()
    }

    #[test]
    fn identity_on_unit_interval_is_a_quarter() {
        for m in [4, 8, 10] {
            let d = dom(m);
            let b = sample_symbol(&d, &SymbolSpec::Coordinate { axis: 0 }).unwrap();
            assert!((osc_box(&b, &unit(&d), 0.0, 1.0, 0.0, 1.0) - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn log_is_scale_invariant() {
        let d = dom(10);
        let b = sample_symbol(&d, &SymbolSpec::LogAbs).unwrap();
        let target = 2.0 / std::f64::consts::E;
        for t in [1.0, 0.5, 0.25] {
            let v = osc_box(&b, &unit(&d), 0.0, 1.0, 0.0, t);
            assert!((v / target - 1.0).abs() < 0.02, "t={t}: {v}");
        }
    }

    #[test]
    fn constant_and_errors() {
        let d = dom(6);
        let b = SampledFunction::constant(&d, C64::new(1.0, -2.0));
        let w = Weight::power(&d, 0.3).unwrap();
        for r in [1.0, 2.0, 3.5] {
            assert_eq!(osc_box(&b, &w, 0.5, r, -1.0, 0.5), 0.0);
        }
        let empty = OscillationQuery::new(&b, &w, 0.0, Region::Mask(CellSet::empty()));
        assert_eq!(empty.evaluate(), Err(Error::EmptyRegion));
        let q = OscillationQuery::new(&b, &w, 0.0, Region::Cube(DyadicCube::canonical(1, [0, 0]))).with_r(0.5);
        assert!(matches!(q.evaluate(), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn unit_weight_matches_side_length_form() {
        let d = dom(8);
        let b = sample_symbol(&d, &SymbolSpec::RandomSmooth { seed: 2, modes: 4 }).unwrap();
        let one = unit(&d);
        for q in profile_cubes(&d) {
            let alpha = 0.3;
            let ell = q.side_length(&d);
            let direct = ell.powf(-alpha) * abs_deviation(&b, &q) / q.volume(&d);
            let v = cube_oscillation(&b, &one, alpha, &q).unwrap();
            assert!((v - direct).abs() <= 1e-12 * direct.max(1e-300));
        }
    }

    #[test]
    fn bmo_sandwich_holds_per_cube() {
        let d = dom(8);
        let setup = bloom_exponents(2.0, 2.0, 1).unwrap();
        for seed in 0..3u64 {
            let (mu, lambda) = seeded_weight_pair(&d, seed).unwrap();
            for spec in [SymbolSpec::LogAbs, SymbolSpec::Coordinate { axis: 0 }, SymbolSpec::RandomCells { seed, amplitude: 1.0 }] {
                let b = sample_symbol(&d, &spec).unwrap();
                let s = bmo_sandwich(&b, &mu, &lambda, &setup, &CubeFamily::CanonicalDyadic).unwrap();
                assert!(s.violations.is_empty(), "{seed} {spec:?}");
                assert!(s.min_ratio >= 1.0 - 1e-9);
            }
        }
        let b = SampledFunction::constant(&d, C64::new(2.0, 0.0));
        let (mu, lambda) = seeded_weight_pair(&d, 1).unwrap();
        let s = bmo_sandwich(&b, &mu, &lambda, &setup, &CubeFamily::CanonicalDyadic).unwrap();
        assert_eq!(s.two_weight.sup, 0.0);
        assert_eq!(s.fractional.sup, 0.0);
    }

    #[test]
    fn complex_symbol_triangle_and_constant_modulus() {
        let d = dom(6);
        let one = unit(&d);
        let fam = CubeFamily::CanonicalDyadic;
        let norm = |b: &SampledFunction| bmo_norm(b, BmoMode::Fractional { nu: &one, alpha: 0.0 }, &fam).unwrap().sup;
        let re = sample_symbol(&d, &SymbolSpec::RandomSmooth { seed: 1, modes: 3 }).unwrap();
        let im = sample_symbol(&d, &SymbolSpec::LogAbs).unwrap();
        let z = re.add(&im.scale(C64::new(0.0, 1.0))).unwrap();
        assert!(norm(&z) <= norm(&re) + norm(&im) + 1e-12);
        let sign = SampledFunction::from_real_fn(&d, |x| if x[0] < 0.0 { -1.0 } else { 1.0 }).unwrap();
        let rot = sign.add(&sign.scale(C64::new(0.0, 1.0))).unwrap();
        assert!((norm(&rot) / norm(&sign) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn profile_examples() {
        let d = dom(10);
        let one = unit(&d);
        let bump = sample_symbol(&d, &SymbolSpec::Bump { center: vec![0.1], radius: 0.5 }).unwrap();
        let lip = bump
            .values()
            .windows(2)
            .map(|w| (w[1] - w[0]).norm() / d.cell_width())
            .fold(0.0, f64::max);
        let p = vmo_profile(&bump, &one, 0.0).unwrap();
        for &(ell, v) in &p.small {
            assert!(v <= lip * ell / 2.0 + 1e-12);
        }
        assert!(p.small.last().unwrap().1 < 0.05 * p.small[0].1);
        for c in [&p.small, &p.large, &p.distance] {
            assert!(c.len() >= 2);
        }
        assert!(p.large.windows(2).all(|w| w[1].1 >= w[0].1));
        assert!(p.distance.windows(2).all(|w| w[1].1 <= w[0].1));
        let log = sample_symbol(&d, &SymbolSpec::LogAbs).unwrap();
        let p = vmo_profile(&log, &one, 0.0).unwrap();
        for &(ell, v) in &p.small {
            if ell >= 32.0 * d.cell_width() {
                assert!(v >= 2.0 / std::f64::consts::E * 0.98, "{ell}: {v}");
            }
        }
        let c = SampledFunction::constant(&d, C64::new(1.0, 0.0));
        assert!(vmo_profile(&c, &one, 0.0).unwrap().is_zero());
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("curve,parameter,value\nsmall,"));
    }

    #[test]
    fn log_small_scale_witness() {
        let d = dom(12);
        let one = unit(&d);
        let b = sample_symbol(&d, &SymbolSpec::LogAbs).unwrap();
        let WitnessOutcome::Found(fam) = vmo_witness(&b, &one, 0.0, 0.5, WitnessMode::SmallScale).unwrap() else {
            panic!("no witness");
        };
        assert!(fam.pairs.len() >= 5, "{}", fam.pairs.len());
        assert!(fam.masks_disjoint());
        for p in &fam.pairs {
            assert!(p.oscillation >= 0.25);
            assert!(p.mask.len() as f64 >= (1.0 - WITNESS_THETA) * p.cube.num_cells(&d) as f64);
            assert!(p.mask.is_subset(&p.cube.cell_set(&d)));
        }
        let j = fam.to_json(&d);
        assert_eq!(j["pairs"].as_array().unwrap().len(), fam.pairs.len());
    }

    #[test]
    fn smooth_and_constant_have_no_witness() {
        let d = dom(10);
        let one = unit(&d);
        let bump = sample_symbol(&d, &SymbolSpec::Bump { center: vec![0.0], radius: 0.5 }).unwrap();
        assert!(matches!(
            vmo_witness(&bump, &one, 0.0, 0.1, WitnessMode::SmallScale).unwrap(),
            WitnessOutcome::NoneFound { .. }
        ));
        let c = SampledFunction::constant(&d, C64::new(3.0, 0.0));
        match vmo_witness(&c, &one, 0.0, 0.1, WitnessMode::SmallScale).unwrap() {
            WitnessOutcome::NoneFound { profile } => assert!(profile.is_zero()),
            _ => panic!(),
        }
    }

    #[test]
    fn far_away_and_large_scale_witnesses() {
        let d = dom(9);
        let one = unit(&d);
        let noise = sample_symbol(&d, &SymbolSpec::RandomCells { seed: 3, amplitude: 1.0 }).unwrap();
        let WitnessOutcome::Found(f) = vmo_witness(&noise, &one, 0.0, 0.3, WitnessMode::FarAway).unwrap() else {
            panic!();
        };
        assert!(f.masks_disjoint() && f.pairs.len() >= 2);
        assert!(f.pairs.iter().all(|p| p.mask == p.cube.cell_set(&d)));
        let WitnessOutcome::Found(f) = vmo_witness(&noise, &one, 0.0, 0.3, WitnessMode::LargeScale).unwrap() else {
            panic!();
        };
        assert!(f.masks_disjoint());
        assert!(f.pairs.iter().all(|p| p.cube.gen <= 2));
    }

    #[test]
    fn john_nirenberg_examples() {
        let d = dom(10);
        let q0 = DyadicCube::canonical(1, [1, 0]);
        let one = unit(&d);
        let c = SampledFunction::constant(&d, C64::new(1.0, 0.0));
        let rep = jn_verify(&c, &one, 2.0, 2.0, 0.0, &q0).unwrap();
        assert_eq!((rep.lhs, rep.rhs, rep.sup_r, rep.sup_1), (0.0, 0.0, 0.0, 0.0));
        assert!(rep.holds);
        let log = sample_symbol(&d, &SymbolSpec::LogAbs).unwrap();
        let rep = jn_verify(&log, &one, 2.0, 2.0, 0.0, &q0).unwrap();
        assert!(rep.ratio >= 1.0 - 1e-9 && rep.ratio.is_finite());
        assert!(rep.min_cube_ratio >= 1.0 - 1e-9);
        assert!(rep.holds, "{rep:?}");
        assert!(rep.ao_measured <= ALMOST_ORTHOGONALITY_BOUND);
        let w = Weight::power(&d, 0.5).unwrap();
        let rep = jn_verify(&log, &w, 2.0, 2.0, 0.0, &q0).unwrap();
        assert!(rep.holds, "{rep:?}");
        assert!(matches!(jn_verify(&log, &w, 2.0, 2.5, 0.0, &q0), Err(Error::InvalidExponent(_))));
        let r1 = jn_verify(&log, &w, 2.0, 1.0, 0.0, &q0).unwrap();
        assert!((r1.c_impl - cz_constant(1) * r1.weight_factor).abs() < 1e-15);
        assert!((r1.weight_factor - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn shift_scale_and_r_monotone(seed in 0u64..5000, re in -5.0f64..5.0, im in -5.0f64..5.0, t in -4.0f64..4.0, g in 1u32..7, k in 0usize..64) {
            let d = dom(7);
            let b = sample_symbol(&d, &SymbolSpec::RandomCells { seed, amplitude: 1.0 }).unwrap();
            let (w, _) = seeded_weight_pair(&d, seed).unwrap();
            let q = DyadicCube::canonical(g, [k % (1 << g), 0]);
            let base = cube_oscillation(&b, &w, 0.25, &q).unwrap();
            let shifted = b.map(|v| v + C64::new(re, im)).unwrap();
            prop_assert!((cube_oscillation(&shifted, &w, 0.25, &q).unwrap() - base).abs() <= 1e-12 * base.max(1.0));
            let scaled = b.scale(C64::new(t, 0.0));
            prop_assert!((cube_oscillation(&scaled, &w, 0.25, &q).unwrap() - t.abs() * base).abs() <= 1e-12 * base.max(1e-300) * t.abs().max(1.0));
            let mut prev = 0.0;
            for r in [1.0, 1.5, 2.0, 3.0] {
                let v = oscillation(&OscillationQuery::new(&b, &w, 0.25, Region::Cube(q)).with_r(r)).unwrap();
                prop_assert!(v >= prev * (1.0 - 1e-12));
                prev = v;
            }
        }
    }
}
