use std::path::Path;

use bloomlab::catalog::{sample_symbol, sample_weight, seeded_weight_pair, SymbolSpec, WeightSpec};
use bloomlab::lattice::{LatticeDomain, SampledFunction};
use bloomlab::operators::{kernel_by_name, KernelSpec};
use bloomlab::oscillation::WitnessMode;
use bloomlab::weights::{bloom_exponents, ExponentSetup, Weight};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    WeightsCheck,
    BloomVerify,
    BmoCompute,
    JnVerify,
    SparseDominate,
    CommutatorSweep,
    CompactnessProfile,
    VmoWitness,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub d: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
    pub m: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub mu: Option<WeightSpec>,
    pub lambda: Option<WeightSpec>,
    /// Catalog pairs by seed; replaces `mu`/`lambda` when present.
    #[serde(default)]
    pub seeded: Vec<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub name: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Oscillation exponent for `jn-verify` (default `p'`).
    pub r: Option<f64>,
    /// Decreasing truncation scales for `compactness-profile`.
    pub eps: Option<Vec<f64>>,
    /// Threshold for `vmo-witness`.
    pub c0: Option<f64>,
    pub mode: Option<WitnessMode>,
    /// Lattice depths for the `weights-check` stability scan.
    pub depths: Option<Vec<u32>>,
    /// Accepted `norm / bmo` range for `commutator-sweep`.
    pub window: Option<(f64, f64)>,
    pub restarts: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    M,
    P,
    Q,
    /// `p = q`.
    Pq,
    Symbol,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: Axis,
    #[serde(default)]
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainConfig,
    pub exponents: Exponents,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub symbols: Vec<SymbolSpec>,
    pub kernel: Option<KernelConfig>,
    #[serde(default)]
    pub options: Options,
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Builds every referenced object, so that a config that resolves here
    /// only fails later for numerical reasons.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let domain = LatticeDomain::new(self.domain.d, self.domain.half_width, self.domain.m).map_err(|e| bad(e.to_string()))?;
        let setup = bloom_exponents(self.exponents.p, self.exponents.q, self.domain.d).map_err(|e| bad(e.to_string()))?;
        let pairs = self.weight_pairs(&domain)?;
        let symbols = self
            .symbols
            .iter()
            .map(|s| sample_symbol(&domain, s).map(|f| (s.label(), f)).map_err(|e| bad(format!("symbol {}: {e}", s.label()))))
            .collect::<Result<Vec<_>, _>>()?;
        let kernel = match &self.kernel {
            Some(k) => Some(kernel_by_name(&k.name, self.domain.d).map_err(|e| bad(format!("kernel {}: {e}", k.name)))?),
            None => None,
        };
        use Experiment::*;
        let needs_symbols = !matches!(self.experiment, WeightsCheck | BloomVerify);
        if needs_symbols && symbols.is_empty() {
            return Err(bad("experiment needs at least one [[symbols]] entry"));
        }
        if matches!(self.experiment, CommutatorSweep | CompactnessProfile) && kernel.is_none() {
            return Err(bad("experiment needs a [kernel] table"));
        }
        if let Some(eps) = &self.options.eps {
            if eps.is_empty() || eps.windows(2).any(|w| w[1] >= w[0]) {
                return Err(bad("options.eps must be nonempty and strictly decreasing"));
            }
        }
        if let Some(c0) = self.options.c0 {
            if !(c0 > 0.0) {
                return Err(bad("options.c0 must be positive"));
            }
        }
        if let Some((lo, hi)) = self.options.window {
            if !(0.0 <= lo && lo <= hi) {
                return Err(bad("options.window must satisfy 0 <= lo <= hi"));
            }
        }
        if self.options.restarts == Some(0) {
            return Err(bad("options.restarts must be positive"));
        }
        Ok(Resolved {
            domain,
            setup,
            pairs,
            symbols,
            kernel,
        })
    }

    pub fn weight_pairs(&self, domain: &LatticeDomain) -> Result<Vec<(String, Weight, Weight)>, ConfigError> {
        let w = &self.weights;
        if !w.seeded.is_empty() {
            return w
                .seeded
                .iter()
                .map(|&s| {
                    seeded_weight_pair(domain, s)
                        .map(|(a, b)| (format!("seeded({s})"), a, b))
                        .map_err(|e| bad(format!("seeded pair {s}: {e}")))
                })
                .collect();
        }
        let unit = WeightSpec::Constant { value: 1.0 };
        let mu = w.mu.clone().unwrap_or_else(|| unit.clone());
        let lambda = w.lambda.clone().unwrap_or(unit);
        let sample = |s: &WeightSpec| sample_weight(domain, s).map_err(|e| bad(format!("weight {}: {e}", s.label())));
        Ok(vec![(format!("{}/{}", mu.label(), lambda.label()), sample(&mu)?, sample(&lambda)?)])
    }

    /// This config with the sweep axis set to `value`; on the symbol axis
    /// `value` indexes `symbols`.
    pub fn at_point(&self, axis: Axis, value: f64) -> Result<RunConfig, ConfigError> {
        let mut c = self.clone();
        c.sweep = None;
        match axis {
            Axis::M => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(bad(format!("depth {value} is not a nonnegative integer")));
                }
                c.domain.m = value as u32;
            }
            Axis::P => c.exponents.p = value,
            Axis::Q => c.exponents.q = value,
            Axis::Pq => {
                c.exponents.p = value;
                c.exponents.q = value;
            }
            Axis::Symbol => {
                let i = value as usize;
                if value < 0.0 || value.fract() != 0.0 || i >= self.symbols.len() {
                    return Err(bad(format!("symbol index {value} out of range")));
                }
                c.symbols = vec![self.symbols[i].clone()];
            }
        }
        Ok(c)
    }
}

pub struct Resolved {
    pub domain: LatticeDomain,
    pub setup: ExponentSetup,
    pub pairs: Vec<(String, Weight, Weight)>,
    pub symbols: Vec<(String, SampledFunction)>,
    pub kernel: Option<KernelSpec>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
experiment = "bloom-verify"
[domain]
d = 1
L = 1.0
m = 6
[exponents]
p = 2.0
q = 2.0
"#;

    #[test]
    fn minimal_config_parses_with_unit_weights() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.pairs.len(), 1);
        assert!(r.pairs[0].1.values().iter().all(|&v| v == 1.0));
        assert_eq!(r.domain.num_cells(), 64);
    }

    #[test]
    fn rejects_bad_configs() {
        for (from, to) in [
            ("schema_version = 1", "schema_version = 2"),
            ("q = 2.0", "q = 1.5"),
            ("bloom-verify", "no-such-experiment"),
            ("m = 6", "m = 6\nextra = 1"),
            ("d = 1", "d = 3"),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(RunConfig::parse(&text).is_err(), "{to}");
        }
        let needs_symbols = MINIMAL.replace("bloom-verify", "bmo-compute");
        assert!(RunConfig::parse(&needs_symbols).is_err());
        let bad_kernel = format!("{}\n[[symbols]]\nkind = \"log_abs\"\n[kernel]\nname = \"nope\"\n", MINIMAL.replace("bloom-verify", "commutator-sweep"));
        assert!(RunConfig::parse(&bad_kernel).is_err());
    }

    #[test]
    fn sweep_points_rewrite_one_field() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.symbols = vec![SymbolSpec::LogAbs, SymbolSpec::constant(1.0)];
        assert_eq!(c.at_point(Axis::M, 8.0).unwrap().domain.m, 8);
        let pq = c.at_point(Axis::Pq, 3.0).unwrap();
        assert_eq!((pq.exponents.p, pq.exponents.q), (3.0, 3.0));
        assert_eq!(c.at_point(Axis::Symbol, 1.0).unwrap().symbols, vec![SymbolSpec::constant(1.0)]);
        assert!(c.at_point(Axis::Symbol, 2.0).is_err());
        assert!(c.at_point(Axis::M, 6.5).is_err());
    }
}
