//! Campaign drivers that turn a configuration into CSV tables, pass/fail
//! checks and a JSON summary. Rendering happens in memory; writing files is
//! left to the caller.

use serde::Serialize;
use serde_json::json;

use super::*;
use crate::constants::ConstantsSettings;

pub const COMMANDS: [&str; 5] = ["rate", "constants", "lower-bounds", "small-ball", "multiplier"];

mod id {
    pub const RATE_N: u64 = 1;
    pub const RATE_M: u64 = 2;
    pub const ORACLE: u64 = 3;
    pub const COVERAGE: u64 = 4;
    pub const CONSTANTS: u64 = 5;
    pub const B: u64 = 6;
    pub const PZ: u64 = 7;
    pub const TAIL: u64 = 8;
    pub const LEMMA41: u64 = 9;
    pub const PROP4: u64 = 10;
    pub const SMALL_BALL: u64 = 11;
    pub const MULTIPLIER: u64 = 12;
    pub const ISOMORPHY: u64 = 13;
}

fn campaign_seed(master: u64, id: u64) -> u64 {
    derive_seed(master, id, Purpose::Campaign)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub files: Vec<OutputFile>,
    pub checks: Vec<Check>,
    pub summary: serde_json::Value,
}

impl Report {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|f| f.name == name)
            .map(|f| f.contents.as_str())
    }

    /// Pretty JSON with the configuration echoed back.
    pub fn summary_json(&self, config: &ExperimentConfig) -> String {
        let doc = json!({
            "command": self.command,
            "pass": self.pass(),
            "checks": self.checks,
            "results": self.summary,
            "config": config,
        });
        serde_json::to_string_pretty(&doc).expect("summary is serializable") + "\n"
    }
}

/// CSV files each command writes, in order.
pub fn declared_outputs(command: &str) -> Option<&'static [&'static str]> {
    Some(match command {
        "rate" => &[
            "rate_n.csv",
            "rate_m.csv",
            "rate_oracle.csv",
            "rate_coverage.csv",
            "rate_plot.csv",
        ],
        "constants" => &["constants.csv", "b_constant.csv", "paley_zygmund.csv"],
        "lower-bounds" => &[
            "lemma41.csv",
            "prop3_tail.csv",
            "prop4.csv",
            "lower_bounds_plot.csv",
        ],
        "small-ball" => &["small_ball.csv"],
        "multiplier" => &["multiplier.csv", "isomorphy.csv"],
        _ => return None,
    })
}

pub fn run_command(command: &str, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let report = match command {
        "rate" => run_rate(cfg)?,
        "constants" => run_constants(cfg)?,
        "lower-bounds" => run_lower_bounds(cfg)?,
        "small-ball" => run_small_ball(cfg)?,
        "multiplier" => run_multiplier(cfg)?,
        other => return Err(Error::input(format!("unknown command `{other}`"))),
    };
    debug_assert_eq!(
        report.files.iter().map(|f| f.name.as_str()).collect::<Vec<_>>(),
        declared_outputs(command).unwrap().to_vec()
    );
    Ok(report)
}

// ---------------------------------------------------------------------------
// CSV

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LongRow {
    pub campaign: String,
    pub cell: String,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub statistic: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    pub series: String,
}

fn render<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::input(format!("csv rendering failed: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::input(format!("csv rendering failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Long format: `campaign,cell,n,m,statistic,value`.
pub fn render_long(rows: &[LongRow]) -> Result<String> {
    if rows.is_empty() {
        return Ok("campaign,cell,n,m,statistic,value\n".into());
    }
    render(rows)
}

/// Plot format: `x,y,series`.
pub fn render_plot(points: &[PlotPoint]) -> Result<String> {
    if points.is_empty() {
        return Ok("x,y,series\n".into());
    }
    render(points)
}

struct Table {
    campaign: &'static str,
    rows: Vec<LongRow>,
}

impl Table {
    fn new(campaign: &'static str) -> Self {
        Self {
            campaign,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, cell: impl Into<String>, n: Option<usize>, m: Option<usize>, stat: &str, value: f64) {
        self.rows.push(LongRow {
            campaign: self.campaign.to_string(),
            cell: cell.into(),
            n,
            m,
            statistic: stat.to_string(),
            value,
        });
    }

    fn flag(&mut self, cell: impl Into<String>, n: Option<usize>, m: Option<usize>, stat: &str, b: bool) {
        self.push(cell, n, m, stat, if b { 1.0 } else { 0.0 });
    }

    fn file(&self, name: &str) -> Result<OutputFile> {
        Ok(OutputFile {
            name: name.to_string(),
            contents: render_long(&self.rows)?,
        })
    }
}

fn plot_file(name: &str, points: &[PlotPoint]) -> Result<OutputFile> {
    Ok(OutputFile {
        name: name.to_string(),
        contents: render_plot(points)?,
    })
}

fn point(x: f64, y: f64, series: &str) -> PlotPoint {
    PlotPoint {
        x,
        y,
        series: series.to_string(),
    }
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("results are serializable")
}

// ---------------------------------------------------------------------------
// drivers

fn rate_table(c: &RateCampaign, name: &'static str) -> Table {
    let mut t = Table::new(name);
    for (i, cell) in c.cells.iter().enumerate() {
        let (n, m) = (Some(cell.n), Some(cell.m));
        let label = format!("cell_{i}");
        t.push(&label, n, m, "trials", cell.trials as f64);
        t.push(&label, n, m, "mean", cell.mean);
        t.push(&label, n, m, "mean_se", cell.mean_se);
        t.push(&label, n, m, "median", cell.median);
        t.push(&label, n, m, "median_se", cell.median_se);
        for (q, v) in &cell.quantiles {
            t.push(&label, n, m, &format!("q{q}"), *v);
        }
        t.push(&label, n, m, "max_empirical_excess", cell.max_empirical_excess);
        if let Some(r) = cell.isomorphy_rate {
            t.push(&label, n, m, "isomorphy_rate", r);
        }
    }
    t.push("fit", None, None, "slope", c.fit.slope);
    t.push("fit", None, None, "slope_stderr", c.fit.stderr);
    t.push("fit", None, None, "intercept", c.fit.intercept);
    t.push("fit", None, None, "expected_slope", c.expected_slope);
    t.flag("fit", None, None, "pass", c.pass);
    t
}

fn rate_plot(c: &RateCampaign, tag: &str, points: &mut Vec<PlotPoint>) {
    for cell in &c.cells {
        let x = match c.axis {
            RateAxis::N => cell.n,
            RateAxis::M => cell.m,
        } as f64;
        points.push(point(x, cell.median, &format!("median_vs_{tag}")));
        points.push(point(x, cell.mean, &format!("mean_vs_{tag}")));
        points.push(point(
            x,
            (c.fit.intercept + c.fit.slope * x.ln()).exp(),
            &format!("fit_vs_{tag}"),
        ));
    }
}

pub fn run_rate(cfg: &ExperimentConfig) -> Result<Report> {
    let r = &cfg.rate;
    let seed = cfg.master_seed;
    log::info!("rate in N: M = {}, grid {:?}", r.m_fixed, r.n_grid);
    let rate_n = rate_campaign(
        &cfg.scenario,
        RateAxis::N,
        r.m_fixed,
        &r.n_grid,
        cfg.policy,
        cfg.trials,
        &cfg.quantiles,
        r.tolerance,
        campaign_seed(seed, id::RATE_N),
    )?;
    log::info!("rate in M: N = {}, grid {:?}", r.n_fixed, r.m_grid);
    let rate_m = rate_campaign(
        &cfg.scenario,
        RateAxis::M,
        r.n_fixed,
        &r.m_grid,
        cfg.policy,
        cfg.trials,
        &cfg.quantiles,
        r.tolerance,
        campaign_seed(seed, id::RATE_M),
    )?;
    let sigma = cfg.scenario.instantiate(r.oracle_m)?.sigma_l2();
    let oracle = ols_oracle_check(
        r.oracle_m,
        r.oracle_n,
        sigma,
        r.oracle_trials,
        r.oracle_tolerance,
        campaign_seed(seed, id::ORACLE),
    )?;
    let c = &cfg.coverage;
    let cov_scenario = cfg.scenario.instantiate(c.m)?;
    let cov_seed = campaign_seed(seed, id::COVERAGE);
    let small_ball = constants::estimate_small_ball(
        &cov_scenario,
        c.kappa0,
        c.n_directions,
        c.n_samples,
        derive_seed(cov_seed, 0, Purpose::Reference),
    )?;
    let coverage = theorem_a_coverage(&cov_scenario, c.n, &c.x_grid, c.trials, &small_ball, cov_seed)?;

    let mut files = vec![
        rate_table(&rate_n, "rate_n").file("rate_n.csv")?,
        rate_table(&rate_m, "rate_m").file("rate_m.csv")?,
    ];
    let mut t = Table::new("ols_oracle");
    let (n, m) = (Some(oracle.n), Some(oracle.m));
    t.push("oracle", n, m, "trials", oracle.trials as f64);
    t.push("oracle", n, m, "mean", oracle.mean);
    t.push("oracle", n, m, "mean_se", oracle.mean_se);
    t.push("oracle", n, m, "reference", oracle.reference);
    t.push("oracle", n, m, "exact_expectation", oracle.exact_expectation);
    t.push("oracle", n, m, "relative_error", oracle.relative_error);
    t.flag("oracle", n, m, "pass", oracle.pass);
    files.push(t.file("rate_oracle.csv")?);

    let mut t = Table::new("theorem_a_coverage");
    let (n, m) = (Some(coverage.n), Some(coverage.m));
    t.push("constants", n, m, "beta0_hat", coverage.beta0);
    t.push("constants", n, m, "beta0_std_error", small_ball.std_error);
    t.push("constants", n, m, "kappa0", coverage.kappa0);
    t.push("constants", n, m, "sigma", coverage.sigma);
    t.flag("constants", n, m, "valid", coverage.valid);
    for row in &coverage.rows {
        let label = format!("x={}", row.x);
        t.push(&label, n, m, "bound", row.bound.value);
        t.push(&label, n, m, "probability", row.bound.probability);
        t.push(&label, n, m, "frequency", row.frequency);
        t.push(&label, n, m, "se", row.se);
        t.flag(&label, n, m, "pass", row.pass);
    }
    files.push(t.file("rate_coverage.csv")?);

    let mut points = Vec::new();
    rate_plot(&rate_n, "n", &mut points);
    rate_plot(&rate_m, "m", &mut points);
    files.push(plot_file("rate_plot.csv", &points)?);

    let consistent = rate_n
        .cells
        .iter()
        .chain(&rate_m.cells)
        .all(|c| c.erm_consistent);
    let checks = vec![
        Check::new(
            "rate_n_slope",
            rate_n.pass,
            format!("slope {:.4} ± {:.4}, expected -1 ± {}", rate_n.fit.slope, rate_n.fit.stderr, rate_n.tolerance),
        ),
        Check::new(
            "rate_m_slope",
            rate_m.pass,
            format!("slope {:.4} ± {:.4}, expected 1 ± {}", rate_m.fit.slope, rate_m.fit.stderr, rate_m.tolerance),
        ),
        Check::new(
            "ols_oracle",
            oracle.pass,
            format!("mean {:.5} vs {:.5} (relative error {:.3})", oracle.mean, oracle.reference, oracle.relative_error),
        ),
        Check::new(
            "theorem_a_coverage",
            coverage.pass,
            coverage
                .rows
                .iter()
                .map(|r| format!("x={}: {:.4} vs {:.4}", r.x, r.frequency, r.bound.probability))
                .collect::<Vec<_>>()
                .join(", "),
        ),
        Check::new("erm_consistency", consistent, "empirical excess loss at the fit is non-positive"),
    ];
    Ok(Report {
        command: "rate".into(),
        files,
        checks,
        summary: json!({
            "rate_n": to_json(&rate_n),
            "rate_m": to_json(&rate_m),
            "oracle": to_json(&oracle),
            "small_ball": to_json(&small_ball),
            "coverage": to_json(&coverage),
        }),
    })
}

pub fn run_constants(cfg: &ExperimentConfig) -> Result<Report> {
    let k = &cfg.constants;
    let settings = ConstantsSettings {
        kappa0: k.kappa0,
        n_directions: k.n_directions,
        n_samples: k.n_samples,
    };
    let scenario = cfg.scenario.instantiate(k.m)?;
    let report = constants::constants_report(&scenario, &settings, campaign_seed(cfg.master_seed, id::CONSTANTS))?;
    if !report.theta0_finite {
        log::warn!("theta0 is infinite for the configured design");
    }
    let b = b_campaign(k.b_designs, k.b_max_dim, campaign_seed(cfg.master_seed, id::B))?;
    let scenarios = pz_scenarios()?;
    let pz = pz_campaign(
        &scenarios[..k.pz_scenarios],
        &settings,
        campaign_seed(cfg.master_seed, id::PZ),
    )?;

    let mut t = Table::new("constants");
    let m = Some(report.dim);
    let sb = &report.small_ball;
    t.push("scenario", None, m, "kappa0", sb.kappa0);
    t.push("scenario", None, m, "beta0_hat", sb.beta0_hat);
    t.push("scenario", None, m, "beta0_std_error", sb.std_error);
    t.push("scenario", None, m, "n_directions", sb.n_directions as f64);
    t.push("scenario", None, m, "n_samples", sb.n_samples as f64);
    t.push("scenario", None, m, "skipped_directions", sb.skipped as f64);
    t.push("scenario", None, m, "theta0_hat", report.theta0_hat);
    t.flag("scenario", None, m, "theta0_finite", report.theta0_finite);
    t.push("scenario", None, m, "pz_beta0", report.pz_beta0);
    if let Some(bx) = &report.b_exact {
        t.push("scenario", None, m, "b_exact", bx.value);
        t.push("scenario", None, m, "b_effective_dim", bx.effective_dim as f64);
        let ok = report.b_at_least_dim().unwrap_or(true);
        if ok {
            log::info!("B = {} >= M = {}", bx.value, bx.effective_dim);
        } else {
            log::warn!("B = {} is below the effective dimension {}", bx.value, bx.effective_dim);
        }
    }
    let mut files = vec![t.file("constants.csv")?];

    let mut t = Table::new("b_constant");
    for row in b.random.iter().chain(&b.uniform) {
        let m = Some(row.m);
        t.push(&row.label, None, m, "atoms", row.atoms as f64);
        t.push(&row.label, None, m, "b", row.value);
        t.push(&row.label, None, m, "effective_dim", row.effective_dim as f64);
        t.flag(&row.label, None, m, "pass", row.pass);
    }
    files.push(t.file("b_constant.csv")?);

    let mut t = Table::new("paley_zygmund");
    for row in &pz {
        t.push(&row.name, None, None, "theta0_hat", row.theta0_hat);
        t.push(&row.name, None, None, "pz_beta0", row.pz_beta0);
        t.push(&row.name, None, None, "beta0_hat", row.beta0_hat);
        t.push(&row.name, None, None, "std_error", row.std_error);
        t.flag(&row.name, None, None, "pass", row.pass);
    }
    files.push(t.file("paley_zygmund.csv")?);

    let mut checks = vec![
        Check::new(
            "b_at_least_m",
            b.random.iter().all(|r| r.pass),
            format!("{} random discrete designs", b.random.len()),
        ),
        Check::new(
            "b_uniform_equals_m",
            b.uniform.iter().all(|r| r.pass),
            format!("uniform indicator designs, M = 2..={}", k.b_max_dim),
        ),
        Check::new(
            "paley_zygmund",
            pz.iter().all(|r| r.pass),
            format!("{} scenarios with finite theta0", pz.len()),
        ),
    ];
    if let Some(ok) = report.b_at_least_dim() {
        checks.push(Check::new("scenario_b_at_least_dim", ok, "configured design"));
    }
    Ok(Report {
        command: "constants".into(),
        files,
        checks,
        summary: json!({
            "scenario": to_json(&report),
            "b": to_json(&b),
            "paley_zygmund": to_json(&pz),
        }),
    })
}

pub fn run_lower_bounds(cfg: &ExperimentConfig) -> Result<Report> {
    let seed = cfg.master_seed;
    let l = &cfg.lemma41;
    let lemma = lemma41_campaign(&l.x_grid, &l.n_grid, l.draws, campaign_seed(seed, id::LEMMA41))?;
    let t_cfg = &cfg.tail;
    let tail = tail_probability(
        &cfg.scenario,
        t_cfg.n,
        t_cfg.m,
        &t_cfg.x_grid,
        t_cfg.c_fit,
        t_cfg.trials,
        t_cfg.c0,
        t_cfg.ratio_floor,
        campaign_seed(seed, id::TAIL),
    )?;
    let p = &cfg.prop4;
    log::info!("prop4: M = {}, N = {}, eta = {}", p.m, p.n, p.eta);
    let prop4 = prop4_campaign(p.m, p.n, p.eta, &p.xi_grid, p.kappa, p.trials, campaign_seed(seed, id::PROP4))?;
    log::info!("prop4: inverted k = {}", prop4.k);

    let mut t = Table::new("lemma41");
    for r in &lemma {
        let label = format!("x={}", r.x);
        let n = Some(r.n);
        t.push(&label, n, None, "draws", r.draws as f64);
        t.push(&label, n, None, "exact", r.exact);
        t.push(&label, n, None, "frequency", r.frequency);
        t.push(&label, n, None, "se", r.se);
        t.push(&label, n, None, "z", r.z);
        t.push(&label, n, None, "floor", r.floor);
        t.flag(&label, n, None, "pass", r.pass);
    }
    let mut files = vec![t.file("lemma41.csv")?];

    let mut t = Table::new("prop3_tail");
    let (n, m) = (Some(tail.n), Some(tail.m));
    t.push("calibration", n, m, "c_fit", tail.c_fit);
    if let Some(x0) = tail.calibrated_at {
        t.push("calibration", n, m, "calibrated_at_x", x0);
    }
    for r in &tail.rows {
        let label = format!("x={}", r.x);
        t.push(&label, n, m, "threshold", r.threshold);
        t.push(&label, n, m, "frequency", r.frequency);
        t.push(&label, n, m, "se", r.se);
        t.push(&label, n, m, "x_times_frequency", r.x_times_frequency);
        t.push(&label, n, m, "fired_frequency", r.fired_frequency);
        t.push(&label, n, m, "fired_exact", r.fired_exact);
        t.push(&label, n, m, "fired_z", r.fired_z);
        t.push(&label, n, m, "isomorphy_rate", r.isomorphy_rate);
    }
    files.push(t.file("prop3_tail.csv")?);

    let mut t = Table::new("prop4");
    let (n, m) = (Some(prop4.n), Some(prop4.m));
    t.push("design", n, m, "eta", prop4.eta);
    t.push("design", n, m, "k", prop4.k as f64);
    t.push("design", n, m, "exact_probability", prop4.exact_probability);
    t.push("design", n, m, "unvisited_frequency", prop4.unvisited_frequency);
    t.push("design", n, m, "se", prop4.se);
    t.push("design", n, m, "min_norm_max_excess", prop4.min_norm_max_excess);
    t.push("design", n, m, "min_norm_bound", prop4.min_norm_bound);
    t.push("design", n, m, "kappa", prop4.kappa);
    t.push("design", n, m, "xi_for_kappa", prop4.xi_for_kappa);
    t.flag("design", n, m, "exceeds_kappa", prop4.exceeds_kappa);
    for x in &prop4.xis {
        let label = format!("xi={}", x.xi);
        t.push(&label, n, m, "adversarial_min_excess", x.min_excess);
        t.push(&label, n, m, "floor_single_cell", bounds::bound_prop4_floor(x.xi, prop4.k as f64, 1));
        t.push(&label, n, m, "max_deviation", x.max_deviation);
        t.flag(&label, n, m, "exact", x.exact);
    }
    files.push(t.file("prop4.csv")?);

    let mut points = Vec::new();
    for r in &tail.rows {
        points.push(point(r.x, r.frequency, "prop3_frequency"));
        points.push(point(r.x, r.x_times_frequency, "prop3_x_times_frequency"));
    }
    for r in &lemma {
        points.push(point(r.x, r.frequency, &format!("lemma41_frequency_n{}", r.n)));
        points.push(point(r.x, r.exact, &format!("lemma41_exact_n{}", r.n)));
    }
    for x in &prop4.xis {
        points.push(point(x.xi, x.min_excess, "prop4_adversarial_min_excess"));
    }
    files.push(plot_file("lower_bounds_plot.csv", &points)?);

    let checks = vec![
        Check::new(
            "lemma41_tail",
            lemma.iter().all(|r| r.pass),
            lemma
                .iter()
                .map(|r| format!("x={} N={}: z={:.2}", r.x, r.n, r.z))
                .collect::<Vec<_>>()
                .join(", "),
        ),
        Check::new(
            "prop3_polynomial_tail",
            tail.pass,
            tail.rows
                .iter()
                .map(|r| format!("x={}: {:.3}", r.x, r.x_times_frequency))
                .collect::<Vec<_>>()
                .join(", "),
        ),
        Check::new(
            "prop3_firing_frequency",
            tail.fired_pass,
            "spike frequency within 5 standard errors of the exact tail",
        ),
        Check::new(
            "prop3_erm_consistency",
            tail.rows.iter().all(|r| r.erm_consistent),
            "empirical excess loss at the fit is non-positive",
        ),
        Check::new(
            "prop4",
            prop4.pass,
            format!(
                "k={}, unvisited {:.4} vs {}, exact={}, min_norm {:.3e} <= {:.3e}",
                prop4.k,
                prop4.unvisited_frequency,
                prop4.eta,
                prop4.all_exact,
                prop4.min_norm_max_excess,
                prop4.min_norm_bound
            ),
        ),
    ];
    Ok(Report {
        command: "lower-bounds".into(),
        files,
        checks,
        summary: json!({
            "lemma41": to_json(&lemma),
            "tail": to_json(&tail),
            "prop4": to_json(&prop4),
        }),
    })
}

pub fn run_small_ball(cfg: &ExperimentConfig) -> Result<Report> {
    let s = &cfg.small_ball;
    let scenario = cfg.scenario.instantiate(s.m)?;
    let c = small_ball_campaign(
        &scenario,
        s.n,
        s.kappa0,
        s.n_directions,
        s.seeds,
        s.required_rate,
        campaign_seed(cfg.master_seed, id::SMALL_BALL),
    )?;
    let mut t = Table::new("small_ball");
    let (n, m) = (Some(c.n), Some(c.m));
    for (i, (f, h)) in c.min_fractions.iter().zip(&c.deviations).enumerate() {
        let label = format!("seed_{i}");
        t.push(&label, n, m, "min_fraction", *f);
        t.push(&label, n, m, "deviation_h", *h);
    }
    t.push("summary", n, m, "beta0", c.beta0);
    t.flag("summary", n, m, "beta0_exact", c.beta0_exact);
    t.push("summary", n, m, "hit_rate", c.hit_rate);
    t.push("summary", n, m, "required_rate", c.required_rate);
    t.push("summary", n, m, "mean_deviation_h", c.deviations.iter().sum::<f64>() / c.seeds as f64);
    t.flag("summary", n, m, "pass", c.pass);
    let checks = vec![Check::new(
        "small_ball_fraction",
        c.pass,
        format!(
            "{} of {} seeds keep the minimum fraction above beta0/2 = {:.4}",
            c.hits,
            c.seeds,
            c.beta0 / 2.0
        ),
    )];
    Ok(Report {
        command: "small-ball".into(),
        files: vec![t.file("small_ball.csv")?],
        checks,
        summary: json!({ "small_ball": to_json(&c) }),
    })
}

pub fn run_multiplier(cfg: &ExperimentConfig) -> Result<Report> {
    let mu = &cfg.multiplier;
    let scenario = cfg.scenario.instantiate(mu.m)?;
    let c = multiplier_campaign(&scenario, mu.n, mu.x, mu.seeds, campaign_seed(cfg.master_seed, id::MULTIPLIER))?;
    let i = &cfg.isomorphy;
    let iso = isomorphy_campaign(
        i.ratio,
        &i.m_grid,
        i.seeds,
        i.required_rate,
        campaign_seed(cfg.master_seed, id::ISOMORPHY),
    )?;

    let mut t = Table::new("multiplier");
    let (n, m) = (Some(c.n), Some(c.m));
    for (k, v) in c.sups.iter().enumerate() {
        t.push(format!("seed_{k}"), n, m, "sup", *v);
    }
    t.push("summary", n, m, "sigma", c.sigma);
    t.push("summary", n, m, "x", c.x);
    t.push("summary", n, m, "threshold", c.threshold);
    t.push("summary", n, m, "exceed_frequency", c.exceed_frequency);
    t.push("summary", n, m, "allowed", c.allowed);
    t.flag("summary", n, m, "pass", c.pass);
    let mut files = vec![t.file("multiplier.csv")?];

    let mut t = Table::new("isomorphy");
    for row in &iso {
        let (n, m) = (Some(row.n), Some(row.m));
        let label = format!("m={}", row.m);
        t.push(&label, n, m, "seeds", row.seeds as f64);
        t.push(&label, n, m, "pass_rate", row.pass_rate);
        t.push(&label, n, m, "lower_pass_rate", row.lower_pass_rate);
        t.push(&label, n, m, "upper_pass_rate", row.upper_pass_rate);
        t.push(&label, n, m, "min_lower", row.min_lower);
        t.push(&label, n, m, "max_upper", row.max_upper);
        t.push(&label, n, m, "mean_upper", row.mean_upper);
        t.flag(&label, n, m, "pass", row.pass);
    }
    files.push(t.file("isomorphy.csv")?);

    let checks = vec![
        Check::new(
            "multiplier_tail",
            c.pass,
            format!("exceed frequency {:.4} <= {:.4}", c.exceed_frequency, c.allowed),
        ),
        Check::new(
            "isomorphy",
            iso.iter().all(|r| r.pass),
            iso.iter()
                .map(|r| format!("M={}: {:.3}", r.m, r.pass_rate))
                .collect::<Vec<_>>()
                .join(", "),
        ),
    ];
    Ok(Report {
        command: "multiplier".into(),
        files,
        checks,
        summary: json!({ "multiplier": to_json(&c), "isomorphy": to_json(&iso) }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_csv_layout() {
        let rows = vec![LongRow {
            campaign: "c".into(),
            cell: "x=2".into(),
            n: Some(10),
            m: None,
            statistic: "s".into(),
            value: 0.5,
        }];
        assert_eq!(
            render_long(&rows).unwrap(),
            "campaign,cell,n,m,statistic,value\nc,x=2,10,,s,0.5\n"
        );
        assert_eq!(render_plot(&[]).unwrap(), "x,y,series\n");
    }

    #[test]
    fn every_command_declares_outputs() {
        for c in COMMANDS {
            assert!(declared_outputs(c).is_some());
        }
        assert!(declared_outputs("plot").is_none());
    }

    #[test]
    fn small_ball_command_on_ci_preset() {
        let cfg = ExperimentConfig::ci();
        let a = run_command("small-ball", &cfg).unwrap();
        assert!(a.pass(), "{:?}", a.checks);
        let b = run_command("small-ball", &cfg).unwrap();
        assert_eq!(a.files, b.files);
        let json = a.summary_json(&cfg);
        assert!(json.contains("\"master_seed\""));
    }
}
