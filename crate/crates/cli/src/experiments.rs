use std::collections::BTreeMap;

use anyhow::Result;
use bloomlab::dyadic::DyadicCube;
use bloomlab::error::Error;
use bloomlab::lattice::{fmt_f64, LatticeDomain};
use bloomlab::normest::{bmo_vs_norm_sweep, compactness_profile, Budget};
use bloomlab::operators::assemble;
use bloomlab::oscillation::{bmo_sandwich, jn_verify, vmo_profile, vmo_witness, WitnessMode, WitnessOutcome};
use bloomlab::sparse::{cz_augment, cz_domination_check, is_sparse};
use bloomlab::weights::{
    ainfty_decay_estimate, ap_characteristic, ap_membership, bloom_weight, bloom_sandwich_report, AinftyOptions, CubeFamily,
    Weight,
};
use serde::Serialize;

use crate::config::{Experiment, Resolved, RunConfig};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&'static str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Everything an experiment produces; written out by the report module.
#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    /// Preformatted artifacts (dumps, JSON) by file name.
    pub files: Vec<(String, String)>,
    pub metrics: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    pub checks: Vec<Check>,
}

impl Outcome {
    fn check(&mut self, name: String, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name,
            pass,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.pass)
    }
}

fn f(x: f64) -> String {
    fmt_f64(x)
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let r = cfg.resolve()?;
    let mut out = Outcome::default();
    match cfg.experiment {
        Experiment::WeightsCheck => weights_check(cfg, &r, &mut out)?,
        Experiment::BloomVerify => bloom_verify(&r, &mut out)?,
        Experiment::BmoCompute => bmo_compute(&r, &mut out)?,
        Experiment::JnVerify => jn(cfg, &r, &mut out)?,
        Experiment::SparseDominate => sparse_dominate(&r, &mut out)?,
        Experiment::CommutatorSweep => commutator(cfg, &r, &mut out)?,
        Experiment::CompactnessProfile => compactness(cfg, &r, &mut out)?,
        Experiment::VmoWitness => witness(cfg, &r, &mut out)?,
    }
    Ok(out)
}

fn budget(cfg: &RunConfig) -> Budget {
    Budget {
        seed: cfg.seed,
        restarts: cfg.options.restarts.unwrap_or(Budget::default().restarts),
        ..Budget::default()
    }
}

fn root() -> DyadicCube {
    DyadicCube::canonical(0, [0, 0])
}

/// Diagnostic only: characteristics, their stability under refinement and the
/// `A_∞` fit. Divergence is reported as a flag, never as a failure.
fn weights_check(cfg: &RunConfig, r: &Resolved, out: &mut Outcome) -> Result<()> {
    let m = cfg.domain.m;
    let depths = cfg
        .options
        .depths
        .clone()
        .unwrap_or_else(|| (m.saturating_sub(2).max(1)..=m).collect());
    let mut chars = Table::new("weights", &["pair", "role", "exponent", "m", "ap_characteristic"]);
    let mut fits = Table::new("ainfty", &["pair", "role", "delta", "constant", "pairs", "small_delta", "degenerate"]);
    for (idx, (label, mu, lambda)) in r.pairs.iter().enumerate() {
        for (role, w, e) in [("mu", mu, cfg.exponents.p), ("lambda", lambda, cfg.exponents.q)] {
            let build = |depth: u32| -> bloomlab::error::Result<Weight> {
                let d = LatticeDomain::new(cfg.domain.d, cfg.domain.half_width, depth)?;
                let pairs = cfg.weight_pairs(&d).map_err(|e| Error::InvalidParameter(e.0))?;
                let (_, a, b) = pairs.into_iter().nth(idx).expect("same pair count at every depth");
                Ok(if role == "mu" { a } else { b })
            };
            let scan = ap_membership(&depths, e, build)?;
            for (depth, s) in scan.depths.iter().zip(&scan.sups) {
                chars.push(vec![label.clone(), role.into(), f(e), depth.to_string(), f(*s)]);
            }
            out.flags.insert(format!("divergent/{label}/{role}"), scan.divergent);
            out.flags.insert(format!("stable/{label}/{role}"), scan.stable);
            let here = ap_characteristic(w, e, &CubeFamily::CanonicalDyadic)?;
            out.metrics.insert(format!("ap/{label}/{role}"), here.sup);
            let fit = ainfty_decay_estimate(
                w,
                &AinftyOptions {
                    seed: cfg.seed,
                    ..AinftyOptions::default()
                },
            )?;
            out.metrics.insert(format!("ainfty_delta/{label}/{role}"), fit.delta);
            fits.push(vec![
                label.clone(),
                role.into(),
                f(fit.delta),
                f(fit.constant),
                fit.pairs.to_string(),
                fit.small_delta.to_string(),
                fit.degenerate.to_string(),
            ]);
        }
    }
    out.tables.push(chars);
    out.tables.push(fits);
    Ok(())
}

fn bloom_verify(r: &Resolved, out: &mut Outcome) -> Result<()> {
    let mut t = Table::new("bloom", &["pair", "cube", "ratio", "bound"]);
    for (label, mu, lambda) in &r.pairs {
        match bloom_sandwich_report(mu, lambda, &r.setup, &CubeFamily::CanonicalDyadic) {
            Ok(rep) => {
                for v in &rep.ratios {
                    t.push(vec![label.clone(), v.cube.id(), f(v.value), f(rep.bound)]);
                }
                out.metrics.insert(format!("min_ratio/{label}"), rep.min_ratio);
                out.metrics.insert(format!("max_ratio/{label}"), rep.max_ratio);
                out.metrics.insert(format!("nu_char/{label}"), rep.nu_char);
                out.check(
                    format!("sandwich/{label}"),
                    true,
                    format!("R in [{}, {}] <= {}", rep.min_ratio, rep.max_ratio, rep.bound),
                );
            }
            Err(e @ (Error::SandwichViolation { .. } | Error::NotMuckenhoupt)) => {
                out.check(format!("sandwich/{label}"), false, e.to_string());
            }
            Err(e) => return Err(e.into()),
        }
    }
    out.tables.push(t);
    Ok(())
}

fn bmo_compute(r: &Resolved, out: &mut Outcome) -> Result<()> {
    let mut t = Table::new("bmo", &["pair", "symbol", "bmo", "two_weight", "argmax", "min_ratio", "max_ratio", "bound"]);
    for (plabel, mu, lambda) in &r.pairs {
        for (slabel, b) in &r.symbols {
            let s = bmo_sandwich(b, mu, lambda, &r.setup, &CubeFamily::CanonicalDyadic)?;
            t.push(vec![
                plabel.clone(),
                slabel.clone(),
                f(s.fractional.sup),
                f(s.two_weight.sup),
                s.fractional.argmax.map(|c| c.id()).unwrap_or_default(),
                f(s.min_ratio),
                f(s.max_ratio),
                f(s.bound),
            ]);
            out.metrics.insert(format!("bmo/{plabel}/{slabel}"), s.fractional.sup);
            out.check(
                format!("bmo-sandwich/{plabel}/{slabel}"),
                s.violations.is_empty(),
                format!("{} violating cubes", s.violations.len()),
            );
        }
    }
    out.tables.push(t);
    Ok(())
}

fn jn(cfg: &RunConfig, r: &Resolved, out: &mut Outcome) -> Result<()> {
    let rr = cfg.options.r.unwrap_or(r.setup.p_conj);
    let mut t = Table::new(
        "jn",
        &["pair", "symbol", "r", "sup_r", "sup_1", "min_cube_ratio", "lhs", "rhs", "c_impl", "ao_measured", "holds"],
    );
    for (plabel, mu, _) in &r.pairs {
        for (slabel, b) in &r.symbols {
            let rep = jn_verify(b, mu, cfg.exponents.p, rr, r.setup.alpha, &root())?;
            t.push(vec![
                plabel.clone(),
                slabel.clone(),
                f(rep.r),
                f(rep.sup_r),
                f(rep.sup_1),
                f(rep.min_cube_ratio),
                f(rep.lhs),
                f(rep.rhs),
                f(rep.c_impl),
                f(rep.ao_measured),
                rep.holds.to_string(),
            ]);
            let key = format!("{plabel}/{slabel}");
            out.metrics.insert(format!("jn_ratio/{key}"), rep.ratio);
            out.check(
                format!("r-monotone/{key}"),
                rep.min_cube_ratio >= 1.0 - 1e-9,
                format!("min cube ratio {}", rep.min_cube_ratio),
            );
            out.check(
                format!("jn-bound/{key}"),
                rep.holds,
                format!("{} <= {} * {}", rep.lhs, rep.c_impl, rep.rhs),
            );
        }
    }
    out.tables.push(t);
    Ok(())
}

fn sparse_dominate(r: &Resolved, out: &mut Outcome) -> Result<()> {
    let mut t = Table::new(
        "sparse",
        &["symbol", "cubes", "min_fraction", "constant", "max_ratio", "violations", "max_selected_fraction"],
    );
    for (i, (label, b)) in r.symbols.iter().enumerate() {
        let fam = cz_augment(b, &root())?;
        let v = is_sparse(&r.domain, &fam, fam.gamma);
        let dom = cz_domination_check(b, &root(), &fam)?;
        t.push(vec![
            label.clone(),
            fam.len().to_string(),
            f(v.min_fraction),
            f(dom.constant),
            f(dom.max_ratio),
            dom.violations.to_string(),
            f(dom.max_selected_fraction),
        ]);
        let mut dump = Vec::new();
        fam.write_dump(&r.domain, &mut dump)?;
        out.files.push((format!("family_{i}.csv"), String::from_utf8(dump)?));
        out.metrics.insert(format!("domination_ratio/{label}"), dom.max_ratio);
        out.check(
            format!("sparse/{label}"),
            v.sparse,
            v.violation.map(|(i, why)| format!("entry {i}: {why}")).unwrap_or_default(),
        );
        out.check(
            format!("domination/{label}"),
            dom.violations == 0,
            format!("{} cells above C = {}", dom.violations, dom.constant),
        );
    }
    out.tables.push(t);
    Ok(())
}

fn commutator(cfg: &RunConfig, r: &Resolved, out: &mut Outcome) -> Result<()> {
    let k = r.kernel.as_ref().expect("validated");
    let t = assemble(k, &r.domain, None)?;
    let mut table = Table::new(
        "commutator",
        &["pair", "symbol", "bmo", "norm", "method", "probe", "norm_over_bmo", "probe_over_bmo"],
    );
    let opt = |x: Option<f64>| x.map(f).unwrap_or_default();
    for (plabel, mu, lambda) in &r.pairs {
        let rows = bmo_vs_norm_sweep(&r.symbols, &t, mu, lambda, &r.setup, &budget(cfg))?;
        for row in rows {
            let key = format!("{plabel}/{}", row.id);
            let method = serde_json::to_value(row.method)?.as_str().unwrap_or_default().to_string();
            table.push(vec![
                plabel.clone(),
                row.id.clone(),
                f(row.bmo),
                f(row.norm),
                method,
                opt(row.probe),
                f(row.norm_over_bmo),
                opt(row.probe_over_bmo),
            ]);
            out.metrics.insert(format!("norm/{key}"), row.norm);
            out.metrics.insert(format!("ratio/{key}"), row.norm_over_bmo);
            if let Some(p) = row.probe {
                out.check(format!("probe-below-norm/{key}"), p <= row.norm * (1.0 + 1e-12), format!("{p} vs {}", row.norm));
            }
            if let Some((lo, hi)) = cfg.options.window {
                if row.bmo > 0.0 {
                    let x = row.norm_over_bmo;
                    out.check(format!("window/{key}"), lo <= x && x <= hi, format!("{x} in [{lo}, {hi}]"));
                }
            }
        }
    }
    out.tables.push(table);
    Ok(())
}

fn compactness(cfg: &RunConfig, r: &Resolved, out: &mut Outcome) -> Result<()> {
    let k = r.kernel.as_ref().expect("validated");
    let floor = 4.0 * r.domain.cell_width();
    let eps = cfg
        .options
        .eps
        .clone()
        .unwrap_or_else(|| (1..=5).map(|j| 0.5f64.powi(j)).filter(|&e| e >= floor).collect());
    let mut t = Table::new("compactness", &["pair", "symbol", "eps", "tail", "k", "sparse_tail"]);
    for (plabel, mu, lambda) in &r.pairs {
        for (slabel, b) in &r.symbols {
            let rep = compactness_profile(b, k, mu, lambda, &r.setup, &eps, &budget(cfg))?;
            for i in 0..rep.eps.len() {
                t.push(vec![
                    plabel.clone(),
                    slabel.clone(),
                    f(rep.eps[i]),
                    f(rep.tails[i]),
                    f(rep.ks[i]),
                    f(rep.sparse_tails[i]),
                ]);
            }
            out.metrics.insert(format!("decay/{plabel}/{slabel}"), rep.decay());
            out.metrics.insert(format!("sparse_decay/{plabel}/{slabel}"), rep.sparse_decay());
        }
    }
    out.tables.push(t);
    Ok(())
}

fn witness(cfg: &RunConfig, r: &Resolved, out: &mut Outcome) -> Result<()> {
    let (_, mu, lambda) = &r.pairs[0];
    let nu = bloom_weight(mu, lambda, &r.setup)?;
    let c0 = cfg.options.c0.unwrap_or(0.1);
    let mode = cfg.options.mode.unwrap_or(WitnessMode::SmallScale);
    let mut profile = Table::new("profile", &["symbol", "curve", "parameter", "value"]);
    let mut summary = Table::new("witness", &["symbol", "mode", "threshold", "pairs", "dropped"]);
    for (i, (label, b)) in r.symbols.iter().enumerate() {
        let prof = vmo_profile(b, &nu, r.setup.alpha)?;
        for (curve, pts) in [("small", &prof.small), ("large", &prof.large), ("distance", &prof.distance)] {
            for (x, y) in pts {
                profile.push(vec![label.clone(), curve.into(), f(*x), f(*y)]);
            }
        }
        let json = match vmo_witness(b, &nu, r.setup.alpha, c0, mode)? {
            WitnessOutcome::Found(fam) => {
                let lower = fam.pairs.iter().all(|p| p.oscillation >= c0 / 2.0);
                out.check(format!("masks-disjoint/{label}"), fam.masks_disjoint(), "");
                out.check(format!("mask-oscillation/{label}"), lower, format!("every O(b; E) >= {}", c0 / 2.0));
                summary.push(vec![label.clone(), format!("{mode:?}"), f(c0), fam.pairs.len().to_string(), fam.dropped.to_string()]);
                out.metrics.insert(format!("witness_pairs/{label}"), fam.pairs.len() as f64);
                fam.to_json(&r.domain)
            }
            WitnessOutcome::NoneFound { .. } => {
                summary.push(vec![label.clone(), format!("{mode:?}"), f(c0), "0".into(), "0".into()]);
                out.metrics.insert(format!("witness_pairs/{label}"), 0.0);
                serde_json::json!({ "mode": mode, "threshold": c0, "pairs": [] })
            }
        };
        out.files.push((format!("witness_{i}.json"), serde_json::to_string_pretty(&json)? + "\n"));
    }
    out.tables.push(profile);
    out.tables.push(summary);
    Ok(())
}
