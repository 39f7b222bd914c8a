//! Monte Carlo harness: break-detection frequency tables and confidence
//! interval coverage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::models::MeanFamily;
use crate::par::map_indexed;
use crate::qmle::{fit_segment, sandwich_covariance, FitOptions, SegmentRange};
use crate::segment::{build_ml_matrix, detect_with_matrix, DetectionConfig, PenaltySpec};
use crate::simulate::{simulate_replication, Emission, ScenarioConfig, DEFAULT_BURN_IN};

/// 97.5% standard normal quantile.
const Z_975: f64 = 1.959963984540054;

/// Frequencies of `K̂` relative to `K*` and break-fraction accuracy for one
/// scenario and penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub scenario: String,
    pub n: usize,
    pub penalty: String,
    pub k_star: usize,
    pub replications: usize,
    /// Replications where detection failed; excluded from every statistic.
    pub failures: usize,
    pub count_equal: usize,
    pub count_under: usize,
    pub count_over: usize,
    pub freq_equal: f64,
    pub freq_under: f64,
    pub freq_over: f64,
    /// Per break, over the `K̂ = K*` runs.
    pub tau_mean: Vec<Option<f64>>,
    pub tau_sd: Vec<Option<f64>>,
    /// Mean Euclidean `‖τ̂ − τ*‖` over the `K̂ = K*` runs.
    pub mean_tau_error: Option<f64>,
    pub mean_kappa: Option<f64>,
    pub k_hat_counts: BTreeMap<usize, usize>,
}

impl FrequencyReport {
    pub const CSV_HEADER: [&'static str; 11] = [
        "scenario",
        "n",
        "penalty",
        "replications",
        "failures",
        "freq_equal",
        "freq_under",
        "freq_over",
        "tau_mean",
        "tau_sd",
        "mean_tau_error",
    ];

    /// One CSV record; per-break values are joined with `;`.
    pub fn csv_record(&self) -> Vec<String> {
        let opt = |v: &Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "NA".into());
        let join = |v: &[Option<f64>]| v.iter().map(opt).collect::<Vec<_>>().join(";");
        vec![
            self.scenario.clone(),
            self.n.to_string(),
            self.penalty.clone(),
            self.replications.to_string(),
            self.failures.to_string(),
            format!("{:.4}", self.freq_equal),
            format!("{:.4}", self.freq_under),
            format!("{:.4}", self.freq_over),
            join(&self.tau_mean),
            join(&self.tau_sd),
            opt(&self.mean_tau_error),
        ]
    }
}

/// Outcome of one replication under one penalty.
#[derive(Debug, Clone, PartialEq)]
struct Outcome {
    k_hat: usize,
    tau_hat: Vec<f64>,
    kappa: f64,
}

/// Simulate `r` replications of `scenario` (replication `i` on stream
/// `(seed, i)`) and run detection with each penalty. The likelihood matrix of
/// a replication is shared by all penalties; `cfg.penalty` is ignored.
pub fn run_replications(
    scenario: &ScenarioConfig,
    r: usize,
    penalties: &[PenaltySpec],
    cfg: &DetectionConfig,
) -> Result<Vec<FrequencyReport>> {
    run_replications_with_progress(scenario, r, penalties, cfg, &|_| {})
}

/// [`run_replications`] calling `progress` with each finished replication index.
pub fn run_replications_with_progress(
    scenario: &ScenarioConfig,
    r: usize,
    penalties: &[PenaltySpec],
    cfg: &DetectionConfig,
    progress: &(dyn Fn(usize) + Sync),
) -> Result<Vec<FrequencyReport>> {
    if r == 0 {
        return Err(config("at least one replication is required"));
    }
    if penalties.is_empty() {
        return Err(config("at least one penalty is required"));
    }
    scenario.validate()?;
    cfg.validate(scenario.n, scenario.family.dim())?;

    let runs: Vec<Vec<Option<Outcome>>> = map_indexed(r, |rep| {
        let result = (|| -> Result<Vec<Option<Outcome>>> {
            let y = simulate_replication(scenario, rep as u64)?;
            let ml = build_ml_matrix(&y, &scenario.family, cfg)?;
            Ok(penalties
                .iter()
                .map(|p| {
                    let c = cfg.clone().with_penalty(*p);
                    detect_with_matrix(&ml, &y, &scenario.family, &c)
                        .ok()
                        .map(|d| Outcome {
                            k_hat: d.segmentation.k_hat,
                            tau_hat: d.segmentation.tau_hat,
                            kappa: d.kappa,
                        })
                })
                .collect())
        })();
        progress(rep);
        result.unwrap_or_else(|_| vec![None; penalties.len()])
    });

    Ok(penalties
        .iter()
        .enumerate()
        .map(|(j, p)| summarize(scenario, p, runs.iter().map(|row| row[j].as_ref())))
        .collect())
}

fn summarize<'a>(
    scenario: &ScenarioConfig,
    penalty: &PenaltySpec,
    outcomes: impl Iterator<Item = Option<&'a Outcome>>,
) -> FrequencyReport {
    let k_star = scenario.k_star();
    let mut replications = 0;
    let mut failures = 0;
    let (mut eq, mut under, mut over) = (0, 0, 0);
    let mut taus: Vec<&[f64]> = Vec::new();
    let mut kappas = Vec::new();
    let mut k_hat_counts = BTreeMap::new();
    for o in outcomes {
        replications += 1;
        let Some(o) = o else {
            failures += 1;
            continue;
        };
        kappas.push(o.kappa);
        *k_hat_counts.entry(o.k_hat).or_insert(0) += 1;
        match o.k_hat.cmp(&k_star) {
            std::cmp::Ordering::Equal => {
                eq += 1;
                taus.push(&o.tau_hat);
            }
            std::cmp::Ordering::Less => under += 1,
            std::cmp::Ordering::Greater => over += 1,
        }
    }
    let ok = replications - failures;
    let frac = |c: usize| if ok == 0 { 0.0 } else { c as f64 / ok as f64 };
    let breaks = k_star - 1;
    let tau_mean: Vec<Option<f64>> = (0..breaks)
        .map(|b| mean(taus.iter().map(|t| t[b])))
        .collect();
    let tau_sd = (0..breaks)
        .map(|b| sample_sd(taus.iter().map(|t| t[b])))
        .collect();
    let mean_tau_error = mean(taus.iter().map(|t| {
        t.iter()
            .zip(&scenario.tau_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }));
    FrequencyReport {
        scenario: scenario.name.clone(),
        n: scenario.n,
        penalty: penalty.name(),
        k_star,
        replications,
        failures,
        count_equal: eq,
        count_under: under,
        count_over: over,
        freq_equal: frac(eq),
        freq_under: frac(under),
        freq_over: frac(over),
        tau_mean,
        tau_sd,
        mean_tau_error,
        mean_kappa: mean(kappas.into_iter()),
        k_hat_counts,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut c) = (0.0, 0usize);
    for v in values {
        s += v;
        c += 1;
    }
    (c > 0).then(|| s / c as f64)
}

fn sample_sd(values: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let m = mean(values.clone())?;
    let (mut s, mut c) = (0.0, 0usize);
    for v in values {
        s += (v - m) * (v - m);
        c += 1;
    }
    (c > 1).then(|| (s / (c - 1) as f64).sqrt())
}

/// Empirical coverage of `θ̂ ± 1.96 se` for `θ*` on single-regime series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub family: String,
    pub emission: String,
    pub theta_star: Vec<f64>,
    pub n: usize,
    pub replications: usize,
    /// Non-converged fits or singular `Ĵ`; excluded.
    pub failures: usize,
    /// Per coordinate, with sandwich standard errors.
    pub sandwich: Vec<f64>,
    /// Per coordinate, with `Ĵ⁻¹` standard errors.
    pub naive: Vec<f64>,
}

/// Fit `r` single-regime series of length `n` simulated from `θ*` and report
/// per-coordinate confidence-interval coverage.
pub fn normality_check(
    family: &MeanFamily,
    emission: Emission,
    theta_star: &[f64],
    n: usize,
    r: usize,
    seed: u64,
) -> Result<CoverageReport> {
    if r == 0 {
        return Err(config("at least one replication is required"));
    }
    let scenario = ScenarioConfig {
        name: "coverage".into(),
        family: family.clone(),
        emission,
        n,
        tau_star: Vec::new(),
        theta_star: vec![theta_star.to_vec()],
        burn_in: DEFAULT_BURN_IN,
        seed,
    };
    scenario.validate()?;
    let d = family.dim();
    let covered = |est: &[f64], se: &[f64]| -> Vec<bool> {
        (0..d)
            .map(|k| (est[k] - theta_star[k]).abs() <= Z_975 * se[k])
            .collect()
    };
    let runs: Vec<Option<(Vec<bool>, Vec<bool>)>> = map_indexed(r, |rep| {
        let y = simulate_replication(&scenario, rep as u64).ok()?;
        let range = SegmentRange::new(1, n);
        let fit = fit_segment(&y, range, family, &FitOptions::default(), None).ok()?;
        let cov = sandwich_covariance(&y, range, &fit, family).ok()?;
        let naive = cov.naive_std_errors();
        Some((
            covered(&fit.theta_hat, &cov.std_errors),
            covered(&fit.theta_hat, &naive),
        ))
    });
    let ok: Vec<_> = runs.iter().flatten().collect();
    let rate = |pick: &dyn Fn(&(Vec<bool>, Vec<bool>)) -> &Vec<bool>| -> Vec<f64> {
        (0..d)
            .map(|k| {
                if ok.is_empty() {
                    0.0
                } else {
                    ok.iter().filter(|o| pick(o)[k]).count() as f64 / ok.len() as f64
                }
            })
            .collect()
    };
    Ok(CoverageReport {
        family: family.kind().name().into(),
        emission: emission.name().into(),
        theta_star: theta_star.to_vec(),
        n,
        replications: r,
        failures: r - ok.len(),
        sandwich: rate(&|o| &o.0),
        naive: rate(&|o| &o.1),
    })
}
