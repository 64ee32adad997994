//! Closed catalog of symbols and weights, plus seeded generators for random
//! test inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeDomain, Point, SampledFunction, C64};
use crate::weights::{Weight, WeightTag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymbolSpec {
    Constant {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// `x_axis`.
    Coordinate { axis: usize },
    /// `|x|^gamma`, `gamma > -d/2`.
    Power { gamma: f64 },
    LogAbs,
    /// `exp(1 - 1/(1 - |x-c|^2/rho^2))` inside the ball, zero outside.
    Bump { center: Vec<f64>, radius: f64 },
    /// Indicator of the box `[lo, hi)`.
    Indicator { lo: Vec<f64>, hi: Vec<f64> },
    Combination { terms: Vec<Term> },
    Product { factors: Vec<SymbolSpec> },
    /// Random trigonometric sum with `modes` frequencies per axis.
    RandomSmooth { seed: u64, modes: usize },
    /// Independent uniform samples in `[-amplitude, amplitude]` per cell.
    RandomCells { seed: u64, amplitude: f64 },
    /// Sum of `log|x - c_i|` over random centers: singular at several points.
    RandomLogs { seed: u64, count: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    pub symbol: SymbolSpec,
}

impl SymbolSpec {
    pub fn constant(c: f64) -> Self {
        SymbolSpec::Constant { re: c, im: 0.0 }
    }

    pub fn linear(terms: Vec<(C64, SymbolSpec)>) -> Self {
        SymbolSpec::Combination {
            terms: terms
                .into_iter()
                .map(|(c, s)| Term {
                    re: c.re,
                    im: c.im,
                    symbol: s,
                })
                .collect(),
        }
    }

    /// Short stable identifier used in report tables.
    pub fn label(&self) -> String {
        match self {
            SymbolSpec::Constant { re, im } => format!("const({re}{im:+}i)"),
            SymbolSpec::Coordinate { axis } => format!("x{axis}"),
            SymbolSpec::Power { gamma } => format!("abs_pow({gamma})"),
            SymbolSpec::LogAbs => "log_abs".into(),
            SymbolSpec::Bump { center, radius } => format!("bump({center:?},{radius})"),
            SymbolSpec::Indicator { lo, hi } => format!("ind({lo:?},{hi:?})"),
            SymbolSpec::Combination { terms } => format!(
                "comb[{}]",
                terms
                    .iter()
                    .map(|t| format!("({}{:+}i)*{}", t.re, t.im, t.symbol.label()))
                    .collect::<Vec<_>>()
                    .join("+")
            ),
            SymbolSpec::Product { factors } => format!(
                "prod[{}]",
                factors.iter().map(|f| f.label()).collect::<Vec<_>>().join("*")
            ),
            SymbolSpec::RandomSmooth { seed, modes } => format!("rsmooth({seed},{modes})"),
            SymbolSpec::RandomCells { seed, amplitude } => format!("rcells({seed},{amplitude})"),
            SymbolSpec::RandomLogs { seed, count } => format!("rlogs({seed},{count})"),
        }
    }

    fn sample_values(&self, domain: &LatticeDomain) -> Result<Vec<C64>> {
        let d = domain.dim();
        let pts = domain.midpoints();
        let real = |f: &dyn Fn(&Point) -> f64| -> Vec<C64> {
            pts.iter().map(|x| C64::new(f(x), 0.0)).collect()
        };
        let norm = move |x: &Point| (x[0] * x[0] + if d == 2 { x[1] * x[1] } else { 0.0 }).sqrt();
        Ok(match self {
            SymbolSpec::Constant { re, im } => vec![C64::new(*re, *im); pts.len()],
            SymbolSpec::Coordinate { axis } => {
                if *axis >= d {
                    return Err(Error::InvalidParameter(format!("axis {axis} in dimension {d}")));
                }
                real(&|x| x[*axis])
            }
            SymbolSpec::Power { gamma } => {
                if *gamma <= -(d as f64) / 2.0 {
                    return Err(Error::InvalidParameter(format!(
                        "power {gamma} must exceed -d/2"
                    )));
                }
                real(&|x| norm(x).powf(*gamma))
            }
            SymbolSpec::LogAbs => real(&|x| norm(x).ln()),
            SymbolSpec::Bump { center, radius } => {
                if center.len() != d || *radius <= 0.0 {
                    return Err(Error::InvalidParameter("bump center/radius".into()));
                }
                real(&|x| {
                    let s2 = (0..d).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>()
                        / (radius * radius);
                    if s2 < 1.0 {
                        (1.0 - 1.0 / (1.0 - s2)).exp()
                    } else {
                        0.0
                    }
                })
            }
            SymbolSpec::Indicator { lo, hi } => {
                if lo.len() != d || hi.len() != d {
                    return Err(Error::InvalidParameter("indicator bounds".into()));
                }
                real(&|x| {
                    if (0..d).all(|a| lo[a] <= x[a] && x[a] < hi[a]) {
                        1.0
                    } else {
                        0.0
                    }
                })
            }
            SymbolSpec::Combination { terms } => {
                let mut acc = vec![C64::new(0.0, 0.0); pts.len()];
                for t in terms {
                    let c = C64::new(t.re, t.im);
                    for (a, v) in acc.iter_mut().zip(t.symbol.sample_values(domain)?) {
                        *a += c * v;
                    }
                }
                acc
            }
            SymbolSpec::Product { factors } => {
                let mut acc = vec![C64::new(1.0, 0.0); pts.len()];
                for f in factors {
                    for (a, v) in acc.iter_mut().zip(f.sample_values(domain)?) {
                        *a *= v;
                    }
                }
                acc
            }
            SymbolSpec::RandomSmooth { seed, modes } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let l = domain.half_width();
                let coeffs: Vec<(usize, usize, f64, f64)> = (0..d)
                    .flat_map(|a| (1..=*modes).map(move |k| (a, k)))
                    .map(|(a, k)| (a, k, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                real(&|x| {
                    coeffs
                        .iter()
                        .map(|&(a, k, c, s)| {
                            let t = std::f64::consts::PI * k as f64 * x[a] / l;
                            (c * t.cos() + s * t.sin()) / (k * k) as f64
                        })
                        .sum()
                })
            }
            SymbolSpec::RandomCells { seed, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..pts.len())
                    .map(|_| C64::new(rng.gen_range(-1.0..1.0) * amplitude, 0.0))
                    .collect()
            }
            SymbolSpec::RandomLogs { seed, count } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let l = domain.half_width();
                let h = domain.cell_width();
                // Centers sit on cell edges so no midpoint is singular.
                let centers: Vec<(Point, f64)> = (0..*count)
                    .map(|_| {
                        let mut c = [0.0; 2];
                        for v in c.iter_mut().take(d) {
                            let k = rng.gen_range(0..domain.n()) as f64;
                            *v = -l + k * h;
                        }
                        (c, rng.gen_range(0.5..1.5))
                    })
                    .collect();
                real(&|x| {
                    centers
                        .iter()
                        .map(|(c, a)| {
                            let r = (0..d).map(|i| (x[i] - c[i]).powi(2)).sum::<f64>().sqrt();
                            a * r.ln()
                        })
                        .sum()
                })
            }
        })
    }
}

/// Midpoint sampling of a catalog symbol; rejects non-finite samples.
pub fn sample_symbol(domain: &LatticeDomain, spec: &SymbolSpec) -> Result<SampledFunction> {
    SampledFunction::from_values(domain, spec.sample_values(domain)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    Constant { value: f64 },
    /// `|x|^beta`.
    Power { beta: f64 },
    /// `exp(amplitude * s(x))` for a random smooth `s` with unit-scale modes.
    LogSmooth { seed: u64, modes: usize, amplitude: f64 },
    /// `base` everywhere except one cell with `value`.
    Spike { cell: usize, value: f64, base: f64 },
}

impl WeightSpec {
    pub fn label(&self) -> String {
        match self {
            WeightSpec::Constant { value } => format!("const({value})"),
            WeightSpec::Power { beta } => format!("abs_pow({beta})"),
            WeightSpec::LogSmooth {
                seed,
                modes,
                amplitude,
            } => format!("log_smooth({seed},{modes},{amplitude})"),
            WeightSpec::Spike { cell, value, base } => format!("spike({cell},{value},{base})"),
        }
    }
}

pub fn sample_weight(domain: &LatticeDomain, spec: &WeightSpec) -> Result<Weight> {
    match spec {
        WeightSpec::Constant { value } => {
            if !(*value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveWeight {
                    cell: 0,
                    value: *value,
                });
            }
            Ok(Weight::constant(domain, *value))
        }
        WeightSpec::Power { beta } => Weight::power(domain, *beta),
        WeightSpec::LogSmooth {
            seed,
            modes,
            amplitude,
        } => {
            let s = sample_symbol(
                domain,
                &SymbolSpec::RandomSmooth {
                    seed: *seed,
                    modes: *modes,
                },
            )?;
            Weight::from_values(
                domain,
                s.values().iter().map(|v| (amplitude * v.re).exp()).collect(),
                None,
            )
        }
        WeightSpec::Spike { cell, value, base } => {
            if *cell >= domain.num_cells() {
                return Err(Error::InvalidParameter(format!("spike cell {cell}")));
            }
            let mut v = vec![*base; domain.num_cells()];
            v[*cell] = *value;
            Weight::from_values(domain, v, None)
        }
    }
}

impl Weight {
    pub fn power(domain: &LatticeDomain, beta: f64) -> Result<Weight> {
        let d = domain.dim();
        let values = domain
            .midpoints()
            .iter()
            .map(|x| {
                let r2 = x[0] * x[0] + if d == 2 { x[1] * x[1] } else { 0.0 };
                (0.5 * beta * r2.ln()).exp()
            })
            .collect();
        Weight::from_values(domain, values, Some(WeightTag::Power { beta }))
    }
}

/// Pairs of weights used by the Bloom checks: power weights with exponents in
/// `(-d/2, d/2)` and log-smooth random weights, alternating by seed.
pub fn seeded_weight_pair(domain: &LatticeDomain, seed: u64) -> Result<(Weight, Weight)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b100);
    let half = domain.dim() as f64 / 2.0;
    let spec = |rng: &mut ChaCha8Rng, k: u64| -> WeightSpec {
        if seed % 2 == 0 {
            WeightSpec::Power {
                beta: rng.gen_range(-0.95 * half..0.95 * half),
            }
        } else {
            WeightSpec::LogSmooth {
                seed: seed * 31 + k,
                modes: 4,
                amplitude: rng.gen_range(0.2..1.5),
            }
        }
    };
    let a = spec(&mut rng, 1);
    let b = spec(&mut rng, 2);
    Ok((sample_weight(domain, &a)?, sample_weight(domain, &b)?))
}
