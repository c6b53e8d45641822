use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::asmeasure::RhoRule;
use crate::error::{Error, Result};
use crate::inducing::ReturnSet;
use crate::laws::TargetLaw;
use crate::martingale::Representation;
use crate::renorm::RenormSeq;
use crate::systems::{HolderFn, Observable, ObservableKind, System};

/// One experiment, as read from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub seed: u64,
    pub system: System,
    #[serde(default = "zero_observable")]
    pub observable: Observable,
    #[serde(default = "RenormSeq::sqrt")]
    pub renorm: RenormSeq,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<LawSpec>,
    #[serde(default, skip_serializing_if = "Centering::is_none")]
    pub centering: Centering,
    pub experiment: Experiment,
    #[serde(default, rename = "assert")]
    pub assertions: Vec<Assertion>,
}

fn zero_observable() -> Observable {
    Observable::constant(0.0)
}

/// Where the target law comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", deny_unknown_fields)]
pub enum LawSpec {
    Explicit { law: TargetLaw },
    /// Stable law matching the tail constants of a `HeavyTail` observable.
    DeriveFromTails,
    /// `N(0, sigma^2)` with `sigma^2` the batch-means variance of
    /// `pilot_orbits` pilot orbits of length `pilot_len`.
    BatchMeans {
        pilot_len: u64,
        batch: usize,
        #[serde(default = "one")]
        pilot_orbits: usize,
    },
}

fn one() -> usize {
    1
}

/// How the observable is centered before use.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", deny_unknown_fields)]
pub enum Centering {
    #[default]
    None,
    /// Subtract the closed-form mean.
    Exact,
    /// Subtract the time average over `orbits` pilot orbits of `steps` steps.
    PilotMean {
        steps: u64,
        #[serde(default = "one")]
        orbits: usize,
    },
}

impl Centering {
    fn is_none(&self) -> bool {
        *self == Centering::None
    }
}

/// Experiment kind and its parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum Experiment {
    ClassicalCLT(ReplicaParams),
    StableLimit(StableParams),
    ASCLT(AscltParams),
    TightMaxima(TightParams),
    Inducing(KacParams),
    ASCLTInducing(LiftParams),
    Spectral(SpectralParams),
    EigenConvergence(CharfnParams),
    Gordin(GordinParams),
    ReverseMDASCLT(ReverseMdParams),
    RandomIndex(RandomIndexParams),
    WeightedLogAvg(WeightedParams),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicaParams {
    pub n: u64,
    pub replicas: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableParams {
    pub n: u64,
    pub replicas: usize,
    /// Draws from the target sampler compared with its CDF; 0 skips.
    #[serde(default)]
    pub oracle_samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AscltParams {
    pub n: u64,
    pub seeds: usize,
    /// Earlier horizon at which the per-seed KS is also recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_early: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TightParams {
    pub n: u64,
    pub replicas: usize,
    /// Threshold multiple reported in the summary statistics.
    pub c: f64,
    #[serde(default)]
    pub c_grid: Vec<f64>,
    /// Replace the observable by the martingale part of its exact Fourier
    /// decomposition on the doubling map.
    #[serde(default)]
    pub martingale_part: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KacParams {
    pub y: ReturnSet,
    pub n_returns: usize,
    /// Steps used to estimate `m(Y)` when it has no closed form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure_steps: Option<u64>,
    /// Return times `1..=law_cells` compared with the exact law when known.
    #[serde(default = "ten")]
    pub law_cells: usize,
}

fn ten() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftParams {
    pub y: ReturnSet,
    /// Classical lift: horizon and replica count.
    pub n: u64,
    pub replicas: usize,
    /// Almost-sure lift: horizon and seed count; 0 seeds skips it.
    #[serde(default)]
    pub asclt_n: u64,
    #[serde(default)]
    pub seeds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure_steps: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralParams {
    pub ts: Vec<f64>,
    pub n: u64,
    pub grid: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharfnParams {
    pub t: f64,
    pub n: u64,
    pub replicas: usize,
    pub grid: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GordinParams {
    pub representation: Representation,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Dyadic grid for the transfer-operator and Green-Kubo checks.
    pub ulam_grid: usize,
    #[serde(default = "default_gk_terms")]
    pub gk_terms: usize,
    #[serde(default = "default_identity_samples")]
    pub identity_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_g: Option<Vec<(u32, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_h: Option<Vec<(u32, f64)>>,
}

fn default_k_max() -> usize {
    200
}

fn default_gk_terms() -> usize {
    60
}

fn default_identity_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "generator", deny_unknown_fields)]
pub enum StreamSource {
    Iid { law: TargetLaw },
    /// `h = observable` along orbits of `system`.
    Dynamical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReverseMdParams {
    pub stream: StreamSource,
    pub zeta: f64,
    pub n: u64,
    pub seeds: usize,
    #[serde(default = "default_variation_tolerance")]
    pub variation_tolerance: f64,
}

fn default_variation_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomIndexParams {
    pub n: u64,
    pub replicas: usize,
    /// Bounded perturbation in `t_n = n + floor(sqrt(n) u(x))`.
    pub u: Observable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedParams {
    pub n: u64,
    pub seeds: usize,
    pub phi: Observable,
    #[serde(default = "default_rho")]
    pub rho: RhoRule,
}

fn default_rho() -> RhoRule {
    RhoRule::InverseSqrt
}

/// Comparison used by an assertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cmp {
    Le,
    Lt,
    Ge,
    Gt,
}

impl Cmp {
    pub fn holds(self, observed: f64, value: f64) -> bool {
        match self {
            Cmp::Le => observed <= value,
            Cmp::Lt => observed < value,
            Cmp::Ge => observed >= value,
            Cmp::Gt => observed > value,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Le => "<=",
            Cmp::Lt => "<",
            Cmp::Ge => ">=",
            Cmp::Gt => ">",
        }
    }
}

/// `stat op value`, evaluated against the run's summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertion {
    pub stat: String,
    pub op: Cmp,
    pub value: f64,
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::ClassicalCLT(_) => "ClassicalCLT",
            Experiment::StableLimit(_) => "StableLimit",
            Experiment::ASCLT(_) => "ASCLT",
            Experiment::TightMaxima(_) => "TightMaxima",
            Experiment::Inducing(_) => "Inducing",
            Experiment::ASCLTInducing(_) => "ASCLTInducing",
            Experiment::Spectral(_) => "Spectral",
            Experiment::EigenConvergence(_) => "EigenConvergence",
            Experiment::Gordin(_) => "Gordin",
            Experiment::ReverseMDASCLT(_) => "ReverseMDASCLT",
            Experiment::RandomIndex(_) => "RandomIndex",
            Experiment::WeightedLogAvg(_) => "WeightedLogAvg",
        }
    }

    /// Summary statistics the kind always reports.
    pub fn stat_names(&self) -> &'static [&'static str] {
        match self {
            Experiment::ClassicalCLT(_) => &["ks", "mean", "variance"],
            Experiment::StableLimit(_) => &["ks", "oracle_ks", "median"],
            Experiment::ASCLT(_) => &[
                "median_ks",
                "max_ks",
                "median_ks_early",
                "median_improvement",
                "frac_decreasing",
            ],
            Experiment::TightMaxima(_) => &["max_prob_at_c", "prob_at_c_first", "prob_at_c_last", "prob_growth"],
            Experiment::Inducing(_) => &[
                "kac_product",
                "kac_stderr",
                "kac_z",
                "mean_return_time",
                "measure",
                "return_law_max_abs_error",
                "return_law_max_rel_error",
            ],
            Experiment::ASCLTInducing(_) => &[
                "ks_induced",
                "ks_direct",
                "max_condition",
                "median_ks_induced",
                "median_ks_direct",
            ],
            Experiment::Spectral(_) => &["max_error", "lambda0_defect", "min_gap", "lambda_oracle_error"],
            Experiment::EigenConvergence(_) => &[
                "residual",
                "stderr",
                "residual_over_stderr",
                "residual_minus_3se",
            ],
            Experiment::Gordin(_) => &[
                "coefficient_error",
                "transfer_h_sup",
                "neumann_defect",
                "h_second_moment",
                "green_kubo_sigma2",
                "green_kubo_error",
                "moment_gap",
                "moment_gap_over_error",
                "identity_residual",
            ],
            Experiment::ReverseMDASCLT(_) => &[
                "median_ks",
                "max_ks",
                "frac_negligible_trend",
                "frac_variation_match",
            ],
            Experiment::RandomIndex(_) => &["ks", "ks_exact", "ks_vs_exact", "mean_index_ratio"],
            Experiment::WeightedLogAvg(_) => &[
                "median_max_gap",
                "max_max_gap",
                "median_rescale_gap",
                "max_rescale_gap",
                "rescale_bound",
            ],
        }
    }

    fn needs_law(&self) -> bool {
        !matches!(
            self,
            Experiment::TightMaxima(_)
                | Experiment::Inducing(_)
                | Experiment::EigenConvergence(_)
                | Experiment::Gordin(_)
                | Experiment::ReverseMDASCLT(_)
                | Experiment::WeightedLogAvg(_)
        )
    }
}

fn heavy_tail_index(obs: &Observable) -> Option<f64> {
    match obs.kind {
        ObservableKind::HeavyTail { p, .. } => Some(p),
        _ => None,
    }
}

fn positive<T: PartialOrd + Default + Copy>(path: &str, value: T) -> Result<()> {
    if value > T::default() {
        Ok(())
    } else {
        Err(Error::config(path, "must be positive"))
    }
}

impl ExperimentConfig {
    /// Parses TOML, reporting the failing field path.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| Error::config("<root>", e.message().to_string()))?;
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<root>".into() } else { path }, e.inner().message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<root>", e.to_string()))
    }

    /// Cross-field checks.
    pub fn validate(&self) -> Result<()> {
        let wrap = |path: &'static str| move |e: Error| Error::config(path, e.to_string());
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::config("name", "use letters, digits, '-' and '_' only"));
        }
        self.system.validate().map_err(wrap("system"))?;
        self.observable.validate().map_err(wrap("observable"))?;
        if matches!(self.observable.kind, ObservableKind::Holder(HolderFn::Custom { .. })) {
            return Err(Error::config("observable.kind", "closures cannot be configured"));
        }
        RenormSeq::new(self.renorm.d, self.renorm.slow.clone()).map_err(wrap("renorm"))?;
        match &self.law {
            None if self.experiment.needs_law() => {
                return Err(Error::config(
                    "law",
                    format!("required for kind {}", self.experiment.kind()),
                ))
            }
            Some(LawSpec::Explicit { law }) => law.validate().map_err(wrap("law.law"))?,
            Some(LawSpec::DeriveFromTails) => match heavy_tail_index(&self.observable) {
                Some(p) if p > 1.0 && p < 2.0 => {}
                _ => {
                    return Err(Error::config(
                        "law.source",
                        "DeriveFromTails needs a HeavyTail observable with index in (1, 2)",
                    ))
                }
            },
            Some(LawSpec::BatchMeans {
                pilot_len,
                batch,
                pilot_orbits,
            }) => {
                positive("law.batch", *batch)?;
                positive("law.pilot_orbits", *pilot_orbits)?;
                let sqrt_scaling = self.renorm.d == 0.5
                    && matches!(self.renorm.slow, crate::renorm::SlowVar::Constant { .. });
                if !sqrt_scaling {
                    return Err(Error::config("renorm", "BatchMeans needs B_n = L sqrt(n) with constant L"));
                }
                if *pilot_len < 10 * *batch as u64 {
                    return Err(Error::config("law.pilot_len", "needs at least 10 batches"));
                }
            }
            None => {}
        }
        if let Centering::PilotMean { steps, orbits } = self.centering {
            positive("centering.steps", steps)?;
            positive("centering.orbits", orbits)?;
        }
        self.validate_params()?;
        for (i, a) in self.assertions.iter().enumerate() {
            if !self.experiment.stat_names().contains(&a.stat.as_str()) {
                return Err(Error::config(
                    format!("assert[{i}].stat"),
                    format!(
                        "unknown statistic `{}` for {}; expected one of {:?}",
                        a.stat,
                        self.experiment.kind(),
                        self.experiment.stat_names()
                    ),
                ));
            }
        }
        Ok(())
    }

    fn validate_params(&self) -> Result<()> {
        let doubling = matches!(self.system, System::Doubling);
        match &self.experiment {
            Experiment::ClassicalCLT(p) => {
                positive("experiment.params.n", p.n)?;
                positive("experiment.params.replicas", p.replicas)?;
            }
            Experiment::StableLimit(p) => {
                positive("experiment.params.n", p.n)?;
                positive("experiment.params.replicas", p.replicas)?;
                match heavy_tail_index(&self.observable) {
                    Some(idx) if idx > 1.0 && idx < 2.0 => {}
                    _ => {
                        return Err(Error::config(
                            "observable.kind",
                            "StableLimit needs a HeavyTail observable with index in (1, 2)",
                        ))
                    }
                }
                if let Some(LawSpec::Explicit { law }) = &self.law {
                    if !matches!(law, TargetLaw::Stable { .. }) {
                        return Err(Error::config("law.law.type", "StableLimit needs a stable target"));
                    }
                }
            }
            Experiment::ASCLT(p) => {
                positive("experiment.params.n", p.n)?;
                positive("experiment.params.seeds", p.seeds)?;
                if let Some(e) = p.n_early {
                    if e == 0 || e > p.n {
                        return Err(Error::config("experiment.params.n_early", "must lie in [1, n]"));
                    }
                }
            }
            Experiment::TightMaxima(p) => {
                if p.n < 100 {
                    return Err(Error::config("experiment.params.n", "must be at least 100"));
                }
                positive("experiment.params.replicas", p.replicas)?;
                positive("experiment.params.c", p.c)?;
                if p.martingale_part && !doubling {
                    return Err(Error::config(
                        "experiment.params.martingale_part",
                        "exact decomposition is available on the doubling map only",
                    ));
                }
            }
            Experiment::Inducing(p) => {
                if p.n_returns < 1000 {
                    return Err(Error::config("experiment.params.n_returns", "must be at least 1000"));
                }
                ReturnSet::cylinders(p.y.depth, p.y.codes.clone())
                    .map_err(wrap_path("experiment.params.y"))?;
            }
            Experiment::ASCLTInducing(p) => {
                positive("experiment.params.n", p.n)?;
                positive("experiment.params.replicas", p.replicas)?;
                if p.seeds > 0 && p.asclt_n < 100_000 {
                    return Err(Error::config("experiment.params.asclt_n", "must be at least 1e5"));
                }
                ReturnSet::cylinders(p.y.depth, p.y.codes.clone())
                    .map_err(wrap_path("experiment.params.y"))?;
            }
            Experiment::Spectral(p) => {
                if p.ts.is_empty() {
                    return Err(Error::config("experiment.params.ts", "needs at least one t"));
                }
                positive("experiment.params.n", p.n)?;
            }
            Experiment::EigenConvergence(p) => {
                positive("experiment.params.n", p.n)?;
                if p.replicas < 10_000 {
                    return Err(Error::config("experiment.params.replicas", "must be at least 1e4"));
                }
            }
            Experiment::Gordin(p) => {
                if matches!(p.representation, Representation::FourierExact) && !doubling {
                    return Err(Error::config(
                        "experiment.params.representation",
                        "FourierExact needs the doubling map",
                    ));
                }
                if !p.ulam_grid.is_power_of_two() {
                    return Err(Error::config("experiment.params.ulam_grid", "must be a power of two"));
                }
            }
            Experiment::ReverseMDASCLT(p) => {
                positive("experiment.params.n", p.n)?;
                positive("experiment.params.seeds", p.seeds)?;
                if !(p.zeta >= 0.0) {
                    return Err(Error::config("experiment.params.zeta", "must be nonnegative"));
                }
                if let StreamSource::Iid { law } = &p.stream {
                    law.validate().map_err(wrap_path("experiment.params.stream.law"))?;
                }
            }
            Experiment::RandomIndex(p) => {
                positive("experiment.params.n", p.n)?;
                positive("experiment.params.replicas", p.replicas)?;
                p.u.validate().map_err(wrap_path("experiment.params.u"))?;
                if p.u.sup_norm().is_none() {
                    return Err(Error::config("experiment.params.u", "must be bounded"));
                }
            }
            Experiment::WeightedLogAvg(p) => {
                positive("experiment.params.n", p.n)?;
                positive("experiment.params.seeds", p.seeds)?;
                p.phi.validate().map_err(wrap_path("experiment.params.phi"))?;
            }
        }
        Ok(())
    }
}

fn wrap_path(path: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::config(path, e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "zero"
seed = 1
system = { type = "Doubling" }
law = { source = "Explicit", law = { type = "Dirac0" } }
[experiment]
kind = "ASCLT"
params = { n = 1000, seeds = 2 }
[[assert]]
stat = "median_ks"
op = "le"
value = 0.0
"#;

    #[test]
    fn minimal_config_round_trips() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.experiment.kind(), "ASCLT");
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again.to_toml().unwrap(), c.to_toml().unwrap());
    }

    #[test]
    fn malformed_law_names_the_field() {
        let bad = MINIMAL.replace(r#"law = { type = "Dirac0" }"#, r#"law = { type = "Gaussian", sigma2 = "x" }"#);
        match ExperimentConfig::from_toml(&bad) {
            Err(Error::Config { path, .. }) => assert!(path.starts_with("law"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_statistic_is_rejected() {
        let bad = MINIMAL.replace("median_ks\"", "nonsense\"");
        match ExperimentConfig::from_toml(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "assert[0].stat"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stable_limit_requires_heavy_tails() {
        let bad = MINIMAL.replace(
            "kind = \"ASCLT\"\nparams = { n = 1000, seeds = 2 }",
            "kind = \"StableLimit\"\nparams = { n = 1000, replicas = 2 }",
        );
        match ExperimentConfig::from_toml(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "observable.kind"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_law_is_reported() {
        let bad = MINIMAL.replace("law = { source = \"Explicit\", law = { type = \"Dirac0\" } }\n", "");
        match ExperimentConfig::from_toml(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "law"),
            other => panic!("{other:?}"),
        }
    }
}
