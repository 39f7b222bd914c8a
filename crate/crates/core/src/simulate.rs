//! Piecewise-stationary count series and the catalog of simulation scenarios.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::models::{Decay, FamilyKind, MeanFamily};

/// Conditional distribution of `Y_t` given its mean `λ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Emission {
    Poisson,
    /// `NB(r, p_t)` with `p_t = r / (r + λ_t)`, so the mean is `λ_t` and the
    /// variance `λ_t (1 + λ_t / r)`.
    NegBin {
        r: f64,
    },
    /// Requires `λ_t ∈ (0, 1)`.
    Bernoulli,
}

impl Emission {
    pub fn name(&self) -> &'static str {
        match self {
            Emission::Poisson => "poisson",
            Emission::NegBin { .. } => "negbin",
            Emission::Bernoulli => "bernoulli",
        }
    }

    fn draw<R: Rng + ?Sized>(&self, lambda: f64, rng: &mut R) -> Result<u64> {
        let poisson = |mean: f64, rng: &mut R| -> Result<u64> {
            if mean <= 0.0 {
                return Ok(0);
            }
            let dist = Poisson::new(mean).map_err(|e| config(format!("Poisson({mean}): {e}")))?;
            Ok(dist.sample(rng) as u64)
        };
        match *self {
            Emission::Poisson => poisson(lambda, rng),
            Emission::NegBin { r } => {
                let gamma = Gamma::new(r, lambda / r).map_err(|e| config(format!("Gamma: {e}")))?;
                let mixing = gamma.sample(rng);
                poisson(mixing, rng)
            }
            Emission::Bernoulli => {
                if !(lambda > 0.0 && lambda < 1.0) {
                    return Err(config(format!(
                        "Bernoulli emission needs a mean in (0, 1), got {lambda}"
                    )));
                }
                let dist = Bernoulli::new(lambda).map_err(|e| config(format!("Bernoulli: {e}")))?;
                Ok(u64::from(dist.sample(rng)))
            }
        }
    }
}

/// Default number of discarded warm-up draws.
pub const DEFAULT_BURN_IN: usize = 500;

/// Ground truth for a piecewise-stationary simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub family: MeanFamily,
    pub emission: Emission,
    pub n: usize,
    /// Break fractions `τ*_1 < … < τ*_{K*-1}` in `(0, 1)`.
    pub tau_star: Vec<f64>,
    /// One parameter vector per regime.
    pub theta_star: Vec<Vec<f64>>,
    pub burn_in: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn k_star(&self) -> usize {
        self.theta_star.len()
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `t*_j = ⌊n τ*_j⌋`, as last indices of the first `K*-1` regimes.
    pub fn break_points(&self) -> Vec<usize> {
        // the epsilon keeps ⌊1000 · 0.7⌋ at 700 despite binary rounding
        self.tau_star
            .iter()
            .map(|tau| (self.n as f64 * tau + 1e-9).floor() as usize)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k_star();
        if k == 0 {
            return Err(config("scenario needs at least one regime"));
        }
        if self.tau_star.len() + 1 != k {
            return Err(config(format!(
                "{} break fractions given for {k} regimes",
                self.tau_star.len()
            )));
        }
        if self.tau_star.iter().any(|t| !(*t > 0.0 && *t < 1.0))
            || self.tau_star.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(config(
                "break fractions must be strictly increasing inside (0, 1)",
            ));
        }
        let mut bounds = vec![0];
        bounds.extend(self.break_points());
        bounds.push(self.n);
        if bounds.windows(2).any(|w| w[1] < w[0] + 2) {
            return Err(config(format!(
                "every regime needs at least 2 observations (breaks {bounds:?})"
            )));
        }
        for theta in &self.theta_star {
            self.family
                .check_stationary(theta)
                .map_err(|e| config(format!("regime parameter {theta:?}: {e}")))?;
        }
        if self.theta_star.windows(2).any(|w| w[0] == w[1]) {
            return Err(config("consecutive regimes must have distinct parameters"));
        }
        match self.emission {
            Emission::NegBin { r } if !(r > 0.0 && r.is_finite()) => {
                Err(config("negative binomial size r must be positive"))
            }
            Emission::Bernoulli if self.family.kind() != FamilyKind::BinInarch1 => {
                Err(config("Bernoulli emission requires the bininarch1 family"))
            }
            _ => Ok(()),
        }
    }

    /// Regime index (0-based) of observation `t` (1-based).
    pub fn regime_of(&self, t: usize) -> usize {
        self.break_points().iter().filter(|&&b| t > b).count()
    }
}

/// Simulate the scenario with its own seed (replication 0).
pub fn simulate_piecewise(cfg: &ScenarioConfig) -> Result<Vec<u64>> {
    simulate_replication(cfg, 0)
}

/// Simulate replication `rep` on the independent stream `(cfg.seed, rep)`.
///
/// One recursion runs across the whole path; at each break the parameter
/// switches while the realized past (and, for INGARCH, the previous mean)
/// carries over. The first `burn_in` draws use regime 1 and are discarded.
pub fn simulate_replication(cfg: &ScenarioConfig, rep: u64) -> Result<Vec<u64>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep);

    let total = cfg.burn_in + cfg.n;
    let breaks = cfg.break_points();
    let gamma = match cfg.family.kind() {
        FamilyKind::InarchInf => cfg
            .family
            .decay()
            .unwrap_or(Decay::RIEMANN)
            .coefficients(total),
        _ => Vec::new(),
    };

    let mut path: Vec<u64> = Vec::with_capacity(total);
    let mut lam_prev = f64::NAN;
    let mut regime = 0;
    for step in 0..total {
        if step >= cfg.burn_in {
            let t = step - cfg.burn_in + 1;
            while regime < breaks.len() && t > breaks[regime] {
                regime += 1;
            }
        }
        let theta = &cfg.theta_star[regime];
        let prev = path.last().copied().unwrap_or(0) as f64;
        let lambda = match cfg.family.kind() {
            FamilyKind::Inarch1 | FamilyKind::BinInarch1 => theta[0] + theta[1] * prev,
            FamilyKind::Ingarch11 => {
                let (a0, a, b) = (theta[0], theta[1], theta[2]);
                if step == 0 {
                    a0 / (1.0 - a - b)
                } else {
                    a0 + a * prev + b * lam_prev
                }
            }
            FamilyKind::InarchInf => theta[0] + crate::models::lagged_sum(&gamma, &path),
        };
        lam_prev = lambda;
        path.push(cfg.emission.draw(lambda, &mut rng)?);
    }
    Ok(path.split_off(cfg.burn_in))
}

fn scenario(
    name: &str,
    family: MeanFamily,
    emission: Emission,
    tau_star: &[f64],
    theta_star: &[&[f64]],
) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        family,
        emission,
        n: 1000,
        tau_star: tau_star.to_vec(),
        theta_star: theta_star.iter().map(|t| t.to_vec()).collect(),
        burn_in: DEFAULT_BURN_IN,
        seed: 0,
    }
}

/// The simulation scenarios, keyed by name, instantiated at `n = 1000` and
/// seed 0; adjust with [`ScenarioConfig::with_n`] and
/// [`ScenarioConfig::with_seed`].
pub fn scenario_library() -> BTreeMap<String, ScenarioConfig> {
    let ia = MeanFamily::inarch1;
    let ig = MeanFamily::ingarch11;
    let bin = MeanFamily::bin_inarch1;
    let inf = MeanFamily::inarch_inf;
    let nb = Emission::NegBin { r: 14.0 };
    let p = Emission::Poisson;
    let b = Emission::Bernoulli;
    [
        scenario("IA0", ia(), p, &[], &[&[0.5, 0.6]]),
        scenario("IA1", ia(), p, &[0.5], &[&[0.5, 0.6], &[1.0, 0.6]]),
        scenario(
            "IA2",
            ia(),
            p,
            &[0.3, 0.7],
            &[&[0.5, 0.6], &[1.0, 0.6], &[1.0, 0.25]],
        ),
        scenario("IG0", ig(), p, &[], &[&[1.0, 0.2, 0.15]]),
        scenario(
            "IG1",
            ig(),
            p,
            &[0.5],
            &[&[1.0, 0.2, 0.15], &[1.0, 0.45, 0.15]],
        ),
        scenario(
            "IG2",
            ig(),
            p,
            &[0.3, 0.7],
            &[&[0.1, 0.3, 0.6], &[0.5, 0.3, 0.6], &[0.5, 0.3, 0.2]],
        ),
        scenario("NB-IG0", ig(), nb, &[], &[&[1.0, 0.2, 0.15]]),
        scenario(
            "NB-IG1",
            ig(),
            nb,
            &[0.5],
            &[&[1.0, 0.2, 0.15], &[1.0, 0.45, 0.15]],
        ),
        scenario(
            "NB-IG2",
            ig(),
            nb,
            &[0.3, 0.7],
            &[&[0.1, 0.3, 0.6], &[0.5, 0.3, 0.6], &[0.5, 0.3, 0.2]],
        ),
        scenario("BIN-IA0", bin(), b, &[], &[&[0.15, 0.75]]),
        scenario("BIN-IA1", bin(), b, &[0.5], &[&[0.15, 0.75], &[0.04, 0.60]]),
        scenario(
            "BIN-IA2",
            bin(),
            b,
            &[0.3, 0.7],
            &[&[0.15, 0.75], &[0.04, 0.60], &[0.25, 0.35]],
        ),
        scenario("IA-INF0", inf(), p, &[], &[&[0.5]]),
        scenario("IA-INF1", inf(), p, &[0.5], &[&[0.5], &[0.1]]),
    ]
    .into_iter()
    .map(|s| (s.name.clone(), s))
    .collect()
}

/// Key-value scenario description as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_name")]
    pub name: String,
    pub family: FamilyKind,
    #[serde(default = "default_emission")]
    pub emission: String,
    pub negbin_r: Option<f64>,
    pub n: usize,
    pub k_star: Option<usize>,
    #[serde(default)]
    pub tau_star: Vec<f64>,
    pub theta_star: Vec<Vec<f64>>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "custom".to_string()
}

fn default_emission() -> String {
    "poisson".to_string()
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

impl ScenarioFile {
    pub fn into_config(self) -> Result<ScenarioConfig> {
        let emission = match self.emission.to_ascii_lowercase().as_str() {
            "poisson" => Emission::Poisson,
            "bernoulli" => Emission::Bernoulli,
            "negbin" => Emission::NegBin {
                r: self
                    .negbin_r
                    .ok_or_else(|| config("negbin emission needs negbin_r"))?,
            },
            other => return Err(config(format!("unknown emission '{other}'"))),
        };
        if let Some(k) = self.k_star {
            if k != self.theta_star.len() {
                return Err(config(format!(
                    "k_star = {k} but {} regimes given",
                    self.theta_star.len()
                )));
            }
        }
        let cfg = ScenarioConfig {
            name: self.name,
            family: MeanFamily::new(self.family),
            emission,
            n: self.n,
            tau_star: self.tau_star,
            theta_star: self.theta_star,
            burn_in: self.burn_in,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse a scenario from its TOML text.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| config(format!("scenario file: {e}")))?;
    file.into_config()
}

impl From<&ScenarioConfig> for ScenarioFile {
    fn from(cfg: &ScenarioConfig) -> Self {
        let negbin_r = match cfg.emission {
            Emission::NegBin { r } => Some(r),
            _ => None,
        };
        ScenarioFile {
            name: cfg.name.clone(),
            family: cfg.family.kind(),
            emission: cfg.emission.name().to_string(),
            negbin_r,
            n: cfg.n,
            k_star: Some(cfg.k_star()),
            tau_star: cfg.tau_star.clone(),
            theta_star: cfg.theta_star.clone(),
            burn_in: cfg.burn_in,
            seed: cfg.seed,
        }
    }
}
