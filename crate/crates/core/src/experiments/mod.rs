//! Monte Carlo campaigns over `(scenario, N, M, policy)` grids.
//!
//! Every trial draws from its own stream keyed by `(cell seed, trial index)`
//! and writes into its own slot, so results do not depend on the number of
//! workers or on the order in which trials finish.

mod config;
mod report;

pub use config::*;
pub use report::*;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{self, BoundResult};
use crate::constants::{self, ConstantsSettings, SmallBallEstimate};
use crate::erm::{self, CoefficientVector, TieBreakPolicy};
use crate::error::{Error, Result};
use crate::linalg::PsdMatrix;
use crate::models::{self, Design, Noise, Sample, Scenario, Target};
use crate::seed::{self, derive_seed, Purpose};

/// Resamples used for bootstrap standard errors of medians.
pub const BOOTSTRAP_REPS: usize = 200;
pub const MIN_FIT_POINTS: usize = 4;
pub const MIN_FIT_TRIALS: usize = 30;

/// Relative slack when testing `σ̂²_N ≥ x`: a single spike lands on `x` up to
/// rounding.
const FIRE_SLACK: f64 = 1e-9;

/// Absolute slack when comparing an excess risk with a bound.
const COVERAGE_SLACK: f64 = 1e-12;

pub fn trial_seed(cell_seed: u64, trial: usize) -> u64 {
    derive_seed(cell_seed, trial as u64, Purpose::Trial)
}

pub fn cell_seed(campaign_seed: u64, cell: usize) -> u64 {
    derive_seed(campaign_seed, cell as u64, Purpose::Cell)
}

// ---------------------------------------------------------------------------
// summary statistics

fn check_nonempty(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        Err(Error::input("statistic of an empty list"))
    } else {
        Ok(())
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Linearly interpolated sample quantile.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    quantiles(values, &[q]).map(|v| v[0])
}

pub fn quantiles(values: &[f64], qs: &[f64]) -> Result<Vec<f64>> {
    check_nonempty(values)?;
    if let Some(q) = qs.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::input(format!("quantile level {q} outside [0, 1]")));
    }
    let v = sorted(values);
    Ok(qs.iter().map(|&q| quantile_sorted(&v, q)).collect())
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantile(values, 0.5)
}

/// Sample mean and its standard error.
pub fn mean_and_se(values: &[f64]) -> Result<(f64, f64)> {
    check_nonempty(values)?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Bootstrap standard error of the median.
pub fn bootstrap_median_se(values: &[f64], reps: usize, seed: u64) -> Result<f64> {
    check_nonempty(values)?;
    if reps < 2 {
        return Err(Error::input("bootstrap needs at least two resamples"));
    }
    let mut rng = seed::rng(seed);
    let n = values.len();
    let mut buf = vec![0.0; n];
    let medians: Vec<f64> = (0..reps)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = values[rng.random_range(0..n)];
            }
            buf.sort_by(f64::total_cmp);
            quantile_sorted(&buf, 0.5)
        })
        .collect();
    let (_, se) = mean_and_se(&medians)?;
    Ok(se * (reps as f64).sqrt())
}

/// `sqrt(p (1 − p) / n)`.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / n.max(1) as f64).sqrt()
}

fn frequency(hits: usize, total: usize) -> f64 {
    hits as f64 / total.max(1) as f64
}

// ---------------------------------------------------------------------------
// trials

/// One ERM fit on a fresh sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    /// Exact excess risk `(t̂ − t*)ᵀ Σ (t̂ − t*)`.
    pub excess: f64,
    /// Empirical excess loss `R_N(t̂) − R_N(t*)`; at most rounding above zero.
    pub empirical_excess: f64,
    /// Scale of the empirical risks, for relative comparisons.
    pub empirical_scale: f64,
    pub unvisited: usize,
    /// Isomorphy of the empirical quadratic form; `None` when `N < M`.
    pub isomorphic: Option<bool>,
    /// `(1/N) Σ ζ_i²`.
    pub noise_energy: f64,
}

struct Fitter {
    t_star: CoefficientVector,
    gram: PsdMatrix,
}

impl Fitter {
    fn new(scenario: &Scenario) -> Result<Self> {
        Ok(Self {
            t_star: models::oracle_coeffs(scenario)?,
            gram: models::population_gram(scenario),
        })
    }

    fn excess(&self, t: &[f64]) -> Result<f64> {
        let diff: Vec<f64> = t.iter().zip(self.t_star.iter()).map(|(a, b)| a - b).collect();
        Ok(self.gram.quad_form(&diff)?.max(0.0))
    }

    fn trial(&self, sample: &Sample, policy: TieBreakPolicy) -> Result<TrialOutcome> {
        let t = erm::solve_erm(sample, policy)?;
        let loss = erm::empirical_excess_loss(sample, &t, &self.t_star)?;
        let isomorphic = if sample.len() >= sample.dim() {
            Some(constants::isomorphy_check(sample)?.pass)
        } else {
            None
        };
        Ok(TrialOutcome {
            excess: self.excess(&t)?,
            empirical_excess: loss.total,
            empirical_scale: erm::empirical_risk(&sample.w, &sample.y, &self.t_star)?.max(1.0),
            unvisited: erm::unvisited_columns(&sample.w).len(),
            isomorphic,
            noise_energy: sample.noise_energy(),
        })
    }
}

/// Runs `trials` independent fits; the list is ordered by trial index.
pub fn run_cell_trials(
    scenario: &Scenario,
    n: usize,
    policy: TieBreakPolicy,
    trials: usize,
    seed: u64,
) -> Result<Vec<TrialOutcome>> {
    if trials == 0 {
        return Err(Error::input("a cell needs at least one trial"));
    }
    let fitter = Fitter::new(scenario)?;
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = models::sample(scenario, n, trial_seed(seed, i))?;
            fitter.trial(&s, policy)
        })
        .collect()
}

/// Exact excess risks of `trials` independent ERM fits.
pub fn run_cell(
    scenario: &Scenario,
    n: usize,
    policy: TieBreakPolicy,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(run_cell_trials(scenario, n, policy, trials, seed)?
        .iter()
        .map(|o| o.excess)
        .collect())
}

/// ERM consistency: `R_N(t̂) ≤ R_N(t*)` up to rounding on every trial.
pub fn erm_consistent(outcomes: &[TrialOutcome]) -> bool {
    outcomes
        .iter()
        .all(|o| o.empirical_excess <= 1e-10 * o.empirical_scale)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub median: f64,
    pub median_se: f64,
    /// `(level, value)` pairs.
    pub quantiles: Vec<(f64, f64)>,
    pub max_empirical_excess: f64,
    pub erm_consistent: bool,
    pub isomorphy_rate: Option<f64>,
    #[serde(skip)]
    pub excess: Vec<f64>,
}

pub fn summarize_cell(
    n: usize,
    m: usize,
    outcomes: &[TrialOutcome],
    levels: &[f64],
    seed: u64,
) -> Result<CellSummary> {
    let excess: Vec<f64> = outcomes.iter().map(|o| o.excess).collect();
    let (mean, mean_se) = mean_and_se(&excess)?;
    let qs = quantiles(&excess, levels)?;
    let iso: Vec<bool> = outcomes.iter().filter_map(|o| o.isomorphic).collect();
    Ok(CellSummary {
        n,
        m,
        trials: outcomes.len(),
        mean,
        mean_se,
        median: median(&excess)?,
        median_se: bootstrap_median_se(
            &excess,
            BOOTSTRAP_REPS,
            derive_seed(seed, 0, Purpose::Bootstrap),
        )?,
        quantiles: levels.iter().copied().zip(qs).collect(),
        max_empirical_excess: outcomes
            .iter()
            .map(|o| o.empirical_excess)
            .fold(f64::NEG_INFINITY, f64::max),
        erm_consistent: erm_consistent(outcomes),
        isomorphy_rate: (!iso.is_empty())
            .then(|| frequency(iso.iter().filter(|&&b| b).count(), iso.len())),
        excess,
    })
}

// ---------------------------------------------------------------------------
// rate fits

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn fit_log_log(x: &[f64], y: &[f64]) -> Result<RateFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "fit ordinates",
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::FitRefused(format!(
            "need at least 3 points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::FitRefused(
            "log-log fit needs positive finite values".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::FitRefused("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Ok(RateFit {
        slope,
        stderr: (rss / (n - 2.0) / sxx).sqrt(),
        intercept,
        points: lx.len(),
    })
}

/// Log-log fit of median excess risk against the grid variable.
pub fn fit_rate(points: &[(f64, &[f64])]) -> Result<RateFit> {
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::FitRefused(format!(
            "need at least {MIN_FIT_POINTS} grid points, got {}",
            points.len()
        )));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for (x, values) in points {
        if values.len() < MIN_FIT_TRIALS {
            return Err(Error::FitRefused(format!(
                "grid point {x} has {} trials, need {MIN_FIT_TRIALS}",
                values.len()
            )));
        }
        let med = median(values)?;
        if med <= 0.0 {
            return Err(Error::FitRefused(format!(
                "median excess risk at {x} is zero (noiseless scenario?)"
            )));
        }
        xs.push(*x);
        ys.push(med);
    }
    fit_log_log(&xs, &ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateAxis {
    N,
    M,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCampaign {
    pub axis: RateAxis,
    /// The dimension held fixed (`M` for the `N` axis and vice versa).
    pub fixed: usize,
    pub cells: Vec<CellSummary>,
    pub fit: RateFit,
    pub expected_slope: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn rate_campaign(
    template: &ScenarioTemplate,
    axis: RateAxis,
    fixed: usize,
    grid: &[usize],
    policy: TieBreakPolicy,
    trials: usize,
    levels: &[f64],
    tolerance: f64,
    seed: u64,
) -> Result<RateCampaign> {
    let mut cells = Vec::with_capacity(grid.len());
    for (i, &g) in grid.iter().enumerate() {
        let (n, m) = match axis {
            RateAxis::N => (g, fixed),
            RateAxis::M => (fixed, g),
        };
        let scenario = template.instantiate(m)?;
        let cs = cell_seed(seed, i);
        let outcomes = run_cell_trials(&scenario, n, policy, trials, cs)?;
        cells.push(summarize_cell(n, m, &outcomes, levels, cs)?);
    }
    let points: Vec<(f64, &[f64])> = grid
        .iter()
        .zip(&cells)
        .map(|(&g, c)| (g as f64, c.excess.as_slice()))
        .collect();
    let fit = fit_rate(&points)?;
    let expected_slope = match axis {
        RateAxis::N => -1.0,
        RateAxis::M => 1.0,
    };
    Ok(RateCampaign {
        axis,
        fixed,
        pass: (fit.slope - expected_slope).abs() <= tolerance,
        cells,
        fit,
        expected_slope,
        tolerance,
    })
}

/// Mean excess risk of Gaussian-design least squares against `σ² M / N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub m: usize,
    pub n: usize,
    pub sigma: f64,
    pub trials: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub reference: f64,
    /// `σ² M / (N − M − 1)`, the exact expectation.
    pub exact_expectation: f64,
    pub relative_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn ols_oracle_check(
    m: usize,
    n: usize,
    sigma: f64,
    trials: usize,
    tolerance: f64,
    seed: u64,
) -> Result<OracleCheck> {
    if n <= m + 1 {
        return Err(Error::input("the closed form needs N > M + 1"));
    }
    let scenario = Scenario::gaussian(m, vec![1.0; m], sigma)?;
    let excess = run_cell(&scenario, n, TieBreakPolicy::MinNorm, trials, seed)?;
    let (mean, mean_se) = mean_and_se(&excess)?;
    let reference = sigma * sigma * m as f64 / n as f64;
    let relative_error = (mean - reference).abs() / reference;
    Ok(OracleCheck {
        m,
        n,
        sigma,
        trials,
        mean,
        mean_se,
        reference,
        exact_expectation: sigma * sigma * m as f64 / (n - m - 1) as f64,
        relative_error,
        tolerance,
        pass: relative_error <= tolerance,
    })
}

// ---------------------------------------------------------------------------
// coverage of the small-ball oracle inequality

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub x: f64,
    pub bound: BoundResult,
    pub frequency: f64,
    pub se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub n: usize,
    pub m: usize,
    pub sigma: f64,
    pub trials: usize,
    pub kappa0: f64,
    pub beta0: f64,
    /// The sample size meets the bound's own threshold.
    pub valid: bool,
    pub rows: Vec<CoverageRow>,
    pub pass: bool,
}

/// Frequency of `{excess ≤ bound}` per `x`; passes when it is at least the
/// guaranteed probability minus three binomial standard errors.
pub fn theorem_a_coverage(
    scenario: &Scenario,
    n: usize,
    x_grid: &[f64],
    trials: usize,
    small_ball: &SmallBallEstimate,
    seed: u64,
) -> Result<CoverageReport> {
    if !matches!(scenario.target(), Target::InSpan { .. }) {
        log::warn!("coverage campaign on a target outside the span; hypotheses not met");
    }
    let m = scenario.dim();
    let sigma = scenario.sigma_l2();
    let excess = run_cell(scenario, n, TieBreakPolicy::MinNorm, trials, seed)?;
    let (beta0, kappa0) = (small_ball.beta0_hat, small_ball.kappa0);
    let mut valid = true;
    let rows: Vec<CoverageRow> = x_grid
        .iter()
        .map(|&x| {
            let bound = bounds::bound_theorem_a(beta0, kappa0, sigma, m, n, x);
            valid &= bound.valid;
            let hits = excess
                .iter()
                .filter(|&&e| e <= bound.value + COVERAGE_SLACK)
                .count();
            let frequency = frequency(hits, trials);
            let se = binomial_se(bound.probability, trials);
            CoverageRow {
                x,
                pass: frequency >= bound.probability - 3.0 * se,
                bound,
                frequency,
                se,
            }
        })
        .collect();
    Ok(CoverageReport {
        n,
        m,
        sigma,
        trials,
        kappa0,
        beta0,
        valid,
        pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

// ---------------------------------------------------------------------------
// heavy-tailed lower bound

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub x: f64,
    pub threshold: f64,
    pub frequency: f64,
    pub se: f64,
    pub x_times_frequency: f64,
    /// Frequency of `σ̂²_N ≥ x` in the same trials.
    pub fired_frequency: f64,
    pub fired_exact: f64,
    pub fired_z: f64,
    pub isomorphy_rate: f64,
    pub erm_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub c_fit: f64,
    pub calibrated_at: Option<f64>,
    pub ratio_floor: f64,
    pub rows: Vec<TailRow>,
    /// Every `x · frequency(x)` clears the floor.
    pub pass: bool,
    /// Every firing frequency is within five standard errors of the exact tail.
    pub fired_pass: bool,
}

fn fired(energy: f64, x: f64) -> bool {
    energy >= x * (1.0 - FIRE_SLACK)
}

/// Frequency of `{excess ≥ c_fit · x · M / N}` under rare-spike noise tuned
/// to each `x`.
///
/// Without a fixed `c_fit`, the constant is the median of `N·excess/(x₀M)`
/// over the trials at the smallest `x₀` in which a spike fired.
#[allow(clippy::too_many_arguments)]
pub fn tail_probability(
    template: &ScenarioTemplate,
    n: usize,
    m: usize,
    x_grid: &[f64],
    c_fit: Option<f64>,
    trials: usize,
    c0: f64,
    ratio_floor: f64,
    seed: u64,
) -> Result<TailReport> {
    if (n as f64) < c0 * m as f64 {
        return Err(Error::config(
            "tail.n",
            format!("N = {n} is below c0 * M = {}", c0 * m as f64),
        ));
    }
    if x_grid.is_empty() {
        return Err(Error::config("tail.x_grid", "must not be empty"));
    }
    let mut per_x = Vec::with_capacity(x_grid.len());
    for (i, &x) in x_grid.iter().enumerate() {
        let scenario = template.instantiate_with_noise(m, Noise::RareSpike { x, n })?;
        let outcomes = run_cell_trials(
            &scenario,
            n,
            TieBreakPolicy::MinNorm,
            trials,
            cell_seed(seed, i),
        )?;
        per_x.push(outcomes);
    }
    let scale = m as f64 / n as f64;
    let (c_fit, calibrated_at) = match c_fit {
        Some(c) => (c, None),
        None => {
            let (i0, x0) = x_grid
                .iter()
                .copied()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty grid");
            let normalized: Vec<f64> = per_x[i0]
                .iter()
                .filter(|o| fired(o.noise_energy, x0))
                .map(|o| o.excess / (x0 * scale))
                .collect();
            if normalized.is_empty() {
                return Err(Error::FitRefused(format!(
                    "no spike fired at the calibration level x = {x0}"
                )));
            }
            (median(&normalized)?, Some(x0))
        }
    };
    let mut rows = Vec::with_capacity(x_grid.len());
    for (&x, outcomes) in x_grid.iter().zip(&per_x) {
        let threshold = bounds::prop3_threshold(c_fit, x, m, n);
        let hits = outcomes.iter().filter(|o| o.excess >= threshold).count();
        let f = frequency(hits, trials);
        let fired_frequency = frequency(
            outcomes.iter().filter(|o| fired(o.noise_energy, x)).count(),
            trials,
        );
        let fired_exact = bounds::lemma41_tail(x, n)?;
        let fired_se = binomial_se(fired_exact, trials);
        let iso = outcomes.iter().filter(|o| o.isomorphic == Some(true)).count();
        rows.push(TailRow {
            x,
            threshold,
            frequency: f,
            se: binomial_se(f, trials),
            x_times_frequency: x * f,
            fired_frequency,
            fired_exact,
            fired_z: if fired_se > 0.0 {
                (fired_frequency - fired_exact) / fired_se
            } else {
                0.0
            },
            isomorphy_rate: frequency(iso, trials),
            erm_consistent: erm_consistent(outcomes),
        });
    }
    Ok(TailReport {
        n,
        m,
        trials,
        c_fit,
        calibrated_at,
        ratio_floor,
        pass: rows.iter().all(|r| r.x_times_frequency >= ratio_floor),
        fired_pass: rows.iter().all(|r| r.fired_z.abs() <= 5.0),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma41Row {
    pub x: f64,
    pub n: usize,
    pub draws: usize,
    pub exact: f64,
    pub frequency: f64,
    pub se: f64,
    pub z: f64,
    /// `(1 − e^{−1}) / x`.
    pub floor: f64,
    pub pass: bool,
}

/// Frequency of `σ̂²_N ≥ x` for rare-spike noise against the exact tail.
pub fn lemma41_campaign(
    x_grid: &[f64],
    n_grid: &[usize],
    draws: usize,
    seed: u64,
) -> Result<Vec<Lemma41Row>> {
    if draws == 0 {
        return Err(Error::input("need at least one draw"));
    }
    let mut rows = Vec::new();
    let cells = x_grid.iter().flat_map(|&x| n_grid.iter().map(move |&n| (x, n)));
    for (ci, (x, n)) in cells.enumerate() {
        let exact = bounds::lemma41_tail(x, n)?;
        let noise = Noise::RareSpike { x, n };
        let sampler = noise.sampler()?;
        let cs = cell_seed(seed, ci);
        let hits = (0..draws)
            .into_par_iter()
            .filter(|&d| {
                let mut rng = seed::rng(trial_seed(cs, d));
                let energy = (0..n).map(|_| sampler.draw(&mut rng).powi(2)).sum::<f64>() / n as f64;
                fired(energy, x)
            })
            .count();
        let f = frequency(hits, draws);
        let se = binomial_se(exact, draws);
        let z = if se > 0.0 { (f - exact) / se } else { 0.0 };
        let floor = (1.0 - (-1.0_f64).exp()) / x;
        rows.push(Lemma41Row {
            x,
            n,
            draws,
            exact,
            frequency: f,
            se,
            z,
            floor,
            pass: z.abs() <= 5.0 && exact >= floor,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// non-uniqueness lower bound

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop4Xi {
    pub xi: f64,
    /// Largest `|excess − n_unvisited (ξ−1)²/k|` relative to `max(1, formula)`.
    pub max_deviation: f64,
    /// Smallest adversarial excess over trials with an unvisited cell.
    pub min_excess: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop4Report {
    pub m: usize,
    pub n: usize,
    pub eta: f64,
    pub k: u64,
    pub exact_probability: f64,
    pub trials: usize,
    pub unvisited_trials: usize,
    pub unvisited_frequency: f64,
    pub se: f64,
    pub frequency_pass: bool,
    pub xis: Vec<Prop4Xi>,
    pub all_exact: bool,
    pub kappa: f64,
    /// A `ξ` whose adversarial excess provably exceeds `kappa`.
    pub xi_for_kappa: f64,
    pub exceeds_kappa: bool,
    pub min_norm_max_excess: f64,
    pub min_norm_bound: f64,
    pub min_norm_pass: bool,
    pub pass: bool,
}

const PROP4_TOL: f64 = 1e-10;

/// Partition design with `k` chosen so some cell stays empty with
/// probability at least `eta`; compares adversarial and minimum-norm ERM.
pub fn prop4_campaign(
    m: usize,
    n: usize,
    eta: f64,
    xi_grid: &[f64],
    kappa: f64,
    trials: usize,
    seed: u64,
) -> Result<Prop4Report> {
    if trials == 0 {
        return Err(Error::input("need at least one trial"));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::config("prop4.kappa", "must be positive"));
    }
    let k = bounds::smallest_cells_for_unvisited(m, n, eta)?;
    let kf = k as f64;
    let exact_probability = bounds::coupon_unvisited_prob(m, n, kf)?;
    let scenario = Scenario::partition(m, kf)?;
    let fitter = Fitter::new(&scenario)?;
    let xi_for_kappa = 1.0 + 2.0 * (kappa * kf).sqrt();
    let mut all_xi: Vec<f64> = xi_grid.to_vec();
    all_xi.push(xi_for_kappa);

    struct Trial {
        unvisited: usize,
        min_norm: f64,
        adversarial: Vec<f64>,
    }
    let results: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<Trial> {
            let s = models::sample(&scenario, n, trial_seed(seed, i))?;
            let unvisited = erm::unvisited_columns(&s.w).len();
            let min_norm = fitter.excess(&erm::solve_erm(&s, TieBreakPolicy::MinNorm)?)?;
            let adversarial = if unvisited > 0 {
                all_xi
                    .iter()
                    .map(|&xi| fitter.excess(&erm::solve_erm(&s, TieBreakPolicy::AdversarialXi { xi })?))
                    .collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            Ok(Trial {
                unvisited,
                min_norm,
                adversarial,
            })
        })
        .collect::<Result<_>>()?;

    let unvisited_trials = results.iter().filter(|t| t.unvisited > 0).count();
    let unvisited_frequency = frequency(unvisited_trials, trials);
    let se = binomial_se(exact_probability, trials);
    let xis: Vec<Prop4Xi> = xi_grid
        .iter()
        .enumerate()
        .map(|(j, &xi)| {
            let mut max_deviation: f64 = 0.0;
            let mut min_excess = f64::INFINITY;
            for t in results.iter().filter(|t| t.unvisited > 0) {
                let formula = bounds::bound_prop4_floor(xi, kf, t.unvisited);
                let got = t.adversarial[j];
                max_deviation = max_deviation.max((got - formula).abs() / formula.max(1.0));
                min_excess = min_excess.min(got);
            }
            Prop4Xi {
                xi,
                max_deviation,
                min_excess,
                exact: max_deviation <= PROP4_TOL,
            }
        })
        .collect();
    let kappa_idx = all_xi.len() - 1;
    let exceeds_kappa = results
        .iter()
        .filter(|t| t.unvisited > 0)
        .all(|t| t.adversarial[kappa_idx] >= kappa);
    let min_norm_max_excess = results.iter().map(|t| t.min_norm).fold(0.0, f64::max);
    let min_norm_bound = m as f64 / kf;
    let frequency_pass = unvisited_frequency >= eta - 3.0 * se;
    let all_exact = xis.iter().all(|x| x.exact);
    let min_norm_pass = min_norm_max_excess <= min_norm_bound + COVERAGE_SLACK;
    Ok(Prop4Report {
        m,
        n,
        eta,
        k,
        exact_probability,
        trials,
        unvisited_trials,
        unvisited_frequency,
        se,
        frequency_pass,
        xis,
        all_exact,
        kappa,
        xi_for_kappa,
        exceeds_kappa,
        min_norm_max_excess,
        min_norm_bound,
        min_norm_pass,
        pass: frequency_pass && all_exact && exceeds_kappa && min_norm_pass,
    })
}

// ---------------------------------------------------------------------------
// empirical processes

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallBallCampaign {
    pub n: usize,
    pub m: usize,
    pub kappa0: f64,
    pub n_directions: usize,
    pub seeds: usize,
    pub beta0: f64,
    pub beta0_exact: bool,
    pub min_fractions: Vec<f64>,
    pub deviations: Vec<f64>,
    pub hits: usize,
    pub hit_rate: f64,
    pub required_rate: f64,
    pub pass: bool,
}

/// Per seed: does the smallest empirical small-ball fraction over random
/// directions stay above `β₀/2`?
pub fn small_ball_campaign(
    scenario: &Scenario,
    n: usize,
    kappa0: f64,
    n_directions: usize,
    seeds: usize,
    required_rate: f64,
    seed: u64,
) -> Result<SmallBallCampaign> {
    let (beta0, beta0_exact) = if scenario.design().is_gaussian() {
        (constants::gaussian_two_sided_tail(kappa0), true)
    } else {
        let est = constants::estimate_small_ball(
            scenario,
            kappa0,
            n_directions,
            constants::REFERENCE_DRAWS,
            derive_seed(seed, 0, Purpose::Reference),
        )?;
        (est.beta0_hat, false)
    };
    let gram = models::population_gram(scenario);
    let per_seed: Vec<(f64, f64)> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let s = models::sample(scenario, n, trial_seed(seed, i))?;
            let f = constants::empirical_fraction_min(
                &s,
                &gram,
                kappa0,
                n_directions,
                derive_seed(seed, i as u64, Purpose::Directions),
            )?;
            let h = constants::deviation_h(
                &s,
                scenario,
                kappa0,
                n_directions,
                derive_seed(seed, i as u64, Purpose::Reference),
            )?;
            Ok((f, h))
        })
        .collect::<Result<_>>()?;
    let (min_fractions, deviations): (Vec<f64>, Vec<f64>) = per_seed.into_iter().unzip();
    let hits = min_fractions.iter().filter(|&&f| f >= beta0 / 2.0).count();
    let hit_rate = frequency(hits, seeds);
    Ok(SmallBallCampaign {
        n,
        m: scenario.dim(),
        kappa0,
        n_directions,
        seeds,
        beta0,
        beta0_exact,
        min_fractions,
        deviations,
        hits,
        hit_rate,
        required_rate,
        pass: hit_rate >= required_rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierCampaign {
    pub n: usize,
    pub m: usize,
    pub sigma: f64,
    pub x: f64,
    pub seeds: usize,
    /// `2σ√(Mx/N)`.
    pub threshold: f64,
    pub sups: Vec<f64>,
    pub exceed_frequency: f64,
    /// `1/x`.
    pub allowed: f64,
    pub pass: bool,
}

pub fn multiplier_campaign(
    scenario: &Scenario,
    n: usize,
    x: f64,
    seeds: usize,
    seed: u64,
) -> Result<MultiplierCampaign> {
    if !(x >= 1.0 && x.is_finite()) {
        return Err(Error::input(format!("x must be at least 1, got {x}")));
    }
    let m = scenario.dim();
    let sigma = scenario.sigma_l2();
    let gram = models::population_gram(scenario);
    let sups: Vec<f64> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let s = models::sample(scenario, n, trial_seed(seed, i))?;
            constants::multiplier_sup(&s, &gram)
        })
        .collect::<Result<_>>()?;
    let threshold = 2.0 * sigma * (m as f64 * x / n as f64).sqrt();
    let exceed_frequency = frequency(sups.iter().filter(|&&v| v > threshold).count(), seeds);
    Ok(MultiplierCampaign {
        n,
        m,
        sigma,
        x,
        seeds,
        threshold,
        sups,
        exceed_frequency,
        allowed: 1.0 / x,
        pass: exceed_frequency <= 1.0 / x,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsomorphyRow {
    pub m: usize,
    pub n: usize,
    pub seeds: usize,
    pub pass_rate: f64,
    pub lower_pass_rate: f64,
    pub upper_pass_rate: f64,
    pub min_lower: f64,
    pub max_upper: f64,
    pub mean_upper: f64,
    pub required_rate: f64,
    pub pass: bool,
}

/// Isomorphy pass rate of standard Gaussian designs with `N = ratio · M`.
pub fn isomorphy_campaign(
    ratio: usize,
    m_grid: &[usize],
    seeds: usize,
    required_rate: f64,
    seed: u64,
) -> Result<Vec<IsomorphyRow>> {
    m_grid
        .iter()
        .enumerate()
        .map(|(ci, &m)| {
            let n = ratio * m;
            let scenario = Scenario::gaussian(m, vec![0.0; m], 0.0)?;
            let cs = cell_seed(seed, ci);
            let checks: Vec<constants::Isomorphy> = (0..seeds)
                .into_par_iter()
                .map(|i| constants::isomorphy_check(&models::sample(&scenario, n, trial_seed(cs, i))?))
                .collect::<Result<_>>()?;
            let rate = |f: &dyn Fn(&constants::Isomorphy) -> bool| {
                frequency(checks.iter().filter(|c| f(c)).count(), seeds)
            };
            let pass_rate = rate(&|c| c.pass);
            Ok(IsomorphyRow {
                m,
                n,
                seeds,
                pass_rate,
                lower_pass_rate: rate(&|c| c.lower >= 0.5),
                upper_pass_rate: rate(&|c| c.upper <= 1.5),
                min_lower: checks.iter().map(|c| c.lower).fold(f64::INFINITY, f64::min),
                max_upper: checks.iter().map(|c| c.upper).fold(0.0, f64::max),
                mean_upper: checks.iter().map(|c| c.upper).sum::<f64>() / seeds as f64,
                required_rate,
                pass: pass_rate >= required_rate,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// constants campaigns

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BRow {
    pub label: String,
    pub m: usize,
    pub atoms: usize,
    pub value: f64,
    pub effective_dim: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BCampaign {
    pub random: Vec<BRow>,
    /// Uniform measure on the standard basis, where `B = M` exactly.
    pub uniform: Vec<BRow>,
    pub pass: bool,
}

/// Random atoms with Dirichlet(1) weights, `M` uniform in `2..=max_dim`.
pub fn random_discrete_design(max_dim: usize, seed: u64) -> Result<Design> {
    if max_dim < 2 {
        return Err(Error::input("max_dim must be at least 2"));
    }
    let mut rng = seed::rng(seed);
    let m = rng.random_range(2..=max_dim);
    let count = m + rng.random_range(0..=m);
    let atoms: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..m).map(|_| rng.sample(rand_distr::StandardNormal)).collect())
        .collect();
    let raw: Vec<f64> = (0..count).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = raw.iter().sum();
    let probs = raw.iter().map(|p| p / total).collect();
    let design = Design::DiscreteAtoms { atoms, probs };
    design.validate()?;
    Ok(design)
}

pub fn uniform_indicator_design(m: usize) -> Design {
    Design::DiscreteAtoms {
        atoms: (0..m)
            .map(|j| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect(),
        probs: vec![1.0 / m as f64; m],
    }
}

const B_TOL: f64 = 1e-8;

pub fn b_campaign(n_designs: usize, max_dim: usize, seed: u64) -> Result<BCampaign> {
    let random = (0..n_designs)
        .map(|i| {
            let design = random_discrete_design(max_dim, derive_seed(seed, i as u64, Purpose::Design))?;
            let Design::DiscreteAtoms { atoms, .. } = &design else {
                unreachable!("random designs are discrete")
            };
            let b = constants::compute_b_discrete(&design)?;
            let m = design.dim();
            Ok(BRow {
                label: format!("random_{i}"),
                m,
                atoms: atoms.len(),
                value: b.value,
                effective_dim: b.effective_dim,
                pass: b.value >= m as f64 - B_TOL,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let uniform = (2..=max_dim)
        .map(|m| {
            let b = constants::compute_b_discrete(&uniform_indicator_design(m))?;
            Ok(BRow {
                label: format!("uniform_{m}"),
                m,
                atoms: m,
                value: b.value,
                effective_dim: b.effective_dim,
                pass: (b.value - m as f64).abs() <= B_TOL,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BCampaign {
        pass: random.iter().chain(&uniform).all(|r| r.pass),
        random,
        uniform,
    })
}

/// Number of scenarios in [`pz_scenarios`].
pub const PZ_SCENARIO_COUNT: usize = 10;

/// Built-in scenarios with a finite fourth-moment constant.
pub fn pz_scenarios() -> Result<Vec<(String, Scenario)>> {
    let zero = |m: usize| Target::InSpan {
        coeffs: CoefficientVector(vec![0.0; m]),
    };
    let make = |name: &str, design: Design| -> Result<(String, Scenario)> {
        let m = design.dim();
        Ok((name.to_string(), Scenario::new(design, Noise::none(), zero(m))?))
    };
    let cov = PsdMatrix::from_rows(&[[2.0, 0.5, 0.0], [0.5, 1.0, 0.3], [0.0, 0.3, 0.5]])?;
    let cube: Vec<Vec<f64>> = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]
        .iter()
        .map(|a| a.to_vec())
        .collect();
    Ok(vec![
        make("gaussian_m2", Design::GaussianIdentity { dim: 2 })?,
        make("gaussian_m5", Design::GaussianIdentity { dim: 5 })?,
        make("gaussian_m10", Design::GaussianIdentity { dim: 10 })?,
        make("gaussian_correlated", Design::GaussianCov { cov })?,
        make("partition_3_of_6", Design::Partition { dim: 3, cells: 6.0 })?,
        make("partition_2_of_2", Design::Partition { dim: 2, cells: 2.0 })?,
        make(
            "rademacher_square",
            Design::DiscreteAtoms {
                atoms: cube,
                probs: vec![0.25; 4],
            },
        )?,
        make("uniform_indicators_4", uniform_indicator_design(4))?,
        make("student_dof8_m3", Design::HeavyTailedIid { dim: 3, dof: 8.0 })?,
        make("student_dof12_m2", Design::HeavyTailedIid { dim: 2, dof: 12.0 })?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PzRow {
    pub name: String,
    pub theta0_hat: f64,
    pub pz_beta0: f64,
    pub beta0_hat: f64,
    pub std_error: f64,
    pub pass: bool,
}

pub fn pz_campaign(
    scenarios: &[(String, Scenario)],
    settings: &ConstantsSettings,
    seed: u64,
) -> Result<Vec<PzRow>> {
    scenarios
        .iter()
        .enumerate()
        .map(|(i, (name, s))| {
            let r = constants::constants_report(s, settings, cell_seed(seed, i))?;
            Ok(PzRow {
                name: name.clone(),
                theta0_hat: r.theta0_hat,
                pz_beta0: r.pz_beta0,
                beta0_hat: r.small_ball.beta0_hat,
                std_error: r.small_ball.std_error,
                pass: r.theta0_finite && r.pz_consistent(),
            })
        })
        .collect()
}
