//! Norm-equivalence and small-ball constants of a design, plus the random
//! quantities the proofs control: the empirical small-ball fraction, its
//! uniform deviation, the multiplier-process supremum and the isomorphy of
//! the empirical quadratic form.
//!
//! Infima and suprema over the whole span are replaced by extrema over
//! finitely many random directions, drawn uniformly on the `L₂` unit sphere
//! `{t : tᵀΣt = 1}`. Reports always carry the direction count.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, PsdMatrix, RANK_TOL};
use crate::models::{self, Design, Sample, Scenario};
use crate::seed::{self, derive_seed, Purpose};

pub const DEFAULT_KAPPA0: f64 = 0.5;

/// Reference draws used for population small-ball probabilities when no
/// closed form is available.
pub const REFERENCE_DRAWS: usize = 100_000;

/// Draws directions uniformly on the `L₂(Σ)` unit sphere inside `range(Σ)`.
#[derive(Debug, Clone)]
pub struct DirectionSampler {
    // rows are v_k / √λ_k for the retained eigenpairs
    basis: Vec<Vec<f64>>,
    dim: usize,
}

impl DirectionSampler {
    pub fn new(gram: &PsdMatrix) -> Self {
        let eig = linalg::eig_sym(gram);
        let top = eig.values.first().copied().unwrap_or(0.0);
        let basis: Vec<Vec<f64>> = eig
            .values
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > RANK_TOL * top && l > 0.0)
            .map(|(k, &l)| eig.vector(k).iter().map(|v| v / l.sqrt()).collect())
            .collect();
        if basis.len() < gram.dim() {
            log::warn!(
                "design Gram matrix has rank {} < {}; directions restricted to its range",
                basis.len(),
                gram.dim()
            );
        }
        Self {
            basis,
            dim: gram.dim(),
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Vec<f64> {
        let g: Vec<f64> = self.basis.iter().map(|_| rng.sample(StandardNormal)).collect();
        let norm = linalg::norm2(&g);
        let mut t = vec![0.0; self.dim];
        for (b, gi) in self.basis.iter().zip(&g) {
            linalg::axpy(gi / norm, b, &mut t);
        }
        t
    }

    pub fn draw_many(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(seed);
        (0..count).map(|_| self.draw(&mut rng)).collect()
    }
}

/// Fraction of rows with `|⟨t, W_i⟩| ≥ κ₀ √(tᵀΣt)`, per direction.
///
/// Directions with `tᵀΣt = 0` are skipped (`None`).
pub fn small_ball_fractions(
    w: &Matrix,
    gram: &PsdMatrix,
    kappa0: f64,
    directions: &[Vec<f64>],
) -> Result<Vec<Option<f64>>> {
    if w.rows() == 0 {
        return Err(Error::input("small-ball fraction of an empty sample"));
    }
    directions
        .iter()
        .map(|t| {
            let norm = gram.quad_form(t)?.max(0.0).sqrt();
            if norm <= 0.0 {
                log::warn!("skipping a direction with zero L2 norm");
                return Ok(None);
            }
            let level = kappa0 * norm;
            let hits = w
                .iter_rows()
                .filter(|r| linalg::dot(r, t).abs() >= level)
                .count();
            Ok(Some(hits as f64 / w.rows() as f64))
        })
        .collect()
}

fn check_kappa(kappa0: f64) -> Result<()> {
    if kappa0 > 0.0 && kappa0.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("kappa0 must be positive, got {kappa0}")))
    }
}

/// Monte Carlo small-ball constant `β̂₀ = min_t P̂(|⟨t,W⟩| ≥ κ₀‖t‖_{L₂})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallBallEstimate {
    pub kappa0: f64,
    pub beta0_hat: f64,
    /// Binomial standard error of `beta0_hat`.
    pub std_error: f64,
    pub n_directions: usize,
    pub n_samples: usize,
    pub skipped: usize,
    pub min_direction: Vec<f64>,
}

pub fn estimate_small_ball(
    scenario: &Scenario,
    kappa0: f64,
    n_directions: usize,
    n_samples: usize,
    seed: u64,
) -> Result<SmallBallEstimate> {
    check_kappa(kappa0)?;
    if n_directions == 0 || n_samples == 0 {
        return Err(Error::input("need at least one direction and one sample"));
    }
    let gram = models::population_gram(scenario);
    let directions = DirectionSampler::new(&gram)
        .draw_many(n_directions, derive_seed(seed, 0, Purpose::Directions));
    let w = models::sample_design(
        scenario.design(),
        n_samples,
        derive_seed(seed, 0, Purpose::Reference),
    )?;
    let fractions = small_ball_fractions(&w, &gram, kappa0, &directions)?;
    let skipped = fractions.iter().filter(|f| f.is_none()).count();
    let (idx, beta0_hat) = fractions
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.map(|f| (i, f)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Unsupported("every probed direction was degenerate".into()))?;
    Ok(SmallBallEstimate {
        kappa0,
        beta0_hat,
        std_error: (beta0_hat * (1.0 - beta0_hat) / n_samples as f64).sqrt(),
        n_directions,
        n_samples,
        skipped,
        min_direction: directions[idx].clone(),
    })
}

/// Minimum over random directions of the empirical small-ball fraction.
pub fn empirical_fraction_min(
    sample: &Sample,
    gram: &PsdMatrix,
    kappa0: f64,
    n_directions: usize,
    seed: u64,
) -> Result<f64> {
    check_kappa(kappa0)?;
    let directions = DirectionSampler::new(gram).draw_many(n_directions, seed);
    small_ball_fractions(&sample.w, gram, kappa0, &directions)?
        .into_iter()
        .flatten()
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Unsupported("every probed direction was degenerate".into()))
}

/// `P(|g| ≥ κ)` for a standard Gaussian `g`.
pub fn gaussian_two_sided_tail(kappa: f64) -> f64 {
    erfc(kappa / std::f64::consts::SQRT_2)
}

/// Largest deviation over random directions between the empirical small-ball
/// fraction and the population small-ball probability.
///
/// Gaussian designs use the closed form; other designs compare against an
/// independent sample of `REFERENCE_DRAWS` rows.
pub fn deviation_h(
    sample: &Sample,
    scenario: &Scenario,
    kappa0: f64,
    n_directions: usize,
    seed: u64,
) -> Result<f64> {
    check_kappa(kappa0)?;
    let gram = models::population_gram(scenario);
    let directions = DirectionSampler::new(&gram)
        .draw_many(n_directions, derive_seed(seed, 0, Purpose::Directions));
    let empirical = small_ball_fractions(&sample.w, &gram, kappa0, &directions)?;
    let population: Vec<Option<f64>> = if scenario.design().is_gaussian() {
        vec![Some(gaussian_two_sided_tail(kappa0)); directions.len()]
    } else {
        let reference = models::sample_design(
            scenario.design(),
            REFERENCE_DRAWS,
            derive_seed(seed, 1, Purpose::Reference),
        )?;
        small_ball_fractions(&reference, &gram, kappa0, &directions)?
    };
    Ok(empirical
        .iter()
        .zip(&population)
        .filter_map(|(e, p)| Some((e.as_ref()? - p.as_ref()?).abs()))
        .fold(0.0, f64::max))
}

/// Largest empirical `‖⟨t,W⟩‖_{L₄} / ‖⟨t,W⟩‖_{L₂}` over random directions.
///
/// Returns `+∞` for heavy-tailed designs without a fourth moment.
pub fn estimate_theta0(
    scenario: &Scenario,
    n_directions: usize,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_directions == 0 || n_samples == 0 {
        return Err(Error::input("need at least one direction and one sample"));
    }
    if let Some(limit) = scenario.design().moment_limit() {
        if limit <= 4.0 {
            log::warn!("design has no finite fourth moment (dof = {limit}); theta0 is infinite");
            return Ok(f64::INFINITY);
        }
    }
    let gram = models::population_gram(scenario);
    let directions = DirectionSampler::new(&gram)
        .draw_many(n_directions, derive_seed(seed, 0, Purpose::Directions));
    let w = models::sample_design(
        scenario.design(),
        n_samples,
        derive_seed(seed, 0, Purpose::Reference),
    )?;
    let mut best: f64 = 0.0;
    for t in &directions {
        let (mut s2, mut s4) = (0.0, 0.0);
        for r in w.iter_rows() {
            let v2 = linalg::dot(r, t).powi(2);
            s2 += v2;
            s4 += v2 * v2;
        }
        if s2 > 0.0 {
            let n = n_samples as f64;
            best = best.max((s4 / n).powf(0.25) / (s2 / n).sqrt());
        }
    }
    Ok(best)
}

/// Paley–Zygmund small-ball constant `(1 − κ₀)² / θ₀⁴`, valid for any class
/// whose `L₄/L₂` ratio is at most `θ₀`.
pub fn paley_zygmund(theta0: f64, kappa0: f64) -> Result<f64> {
    if !(kappa0 > 0.0 && kappa0 < 1.0) {
        return Err(Error::input(format!("kappa0 must lie in (0, 1), got {kappa0}")));
    }
    if !(theta0 >= 1.0) {
        return Err(Error::input(format!("theta0 must be at least 1, got {theta0}")));
    }
    Ok((1.0 - kappa0).powi(2) / theta0.powi(4))
}

/// Squared `L∞/L₂` equivalence constant of a finitely supported design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BConstant {
    pub value: f64,
    /// Rank of the design Gram matrix; `value ≥ effective_dim` always.
    pub effective_dim: usize,
    pub full_rank: bool,
}

/// Orthonormalizes the coordinate functionals under the design law and
/// returns `B = max_atom Σ_j φ_j(atom)²`.
pub fn compute_b_discrete(design: &Design) -> Result<BConstant> {
    design.validate()?;
    let support = design
        .support()
        .ok_or_else(|| Error::Unsupported("B is only computed for finitely supported designs".into()))?;
    let gram = design.population_gram();
    let eig = linalg::eig_sym(&gram);
    let top = eig.values.first().copied().unwrap_or(0.0);
    let basis: Vec<(Vec<f64>, f64)> = eig
        .values
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > RANK_TOL * top && l > 0.0)
        .map(|(k, &l)| (eig.vector(k), l))
        .collect();
    let effective_dim = basis.len();
    if effective_dim < design.dim() {
        log::warn!(
            "design spans only {effective_dim} of {} dimensions; B computed on the span",
            design.dim()
        );
    }
    let value = support
        .iter()
        .map(|(atom, _)| {
            basis
                .iter()
                .map(|(v, l)| linalg::dot(v, atom).powi(2) / l)
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    Ok(BConstant {
        value,
        effective_dim,
        full_rank: effective_dim == design.dim(),
    })
}

/// `sup_{tᵀΣt = 1} |(1/N) Σ ζ_i ⟨t, W_i⟩| = ‖Σ^{-1/2} (1/N) Σ ζ_i W_i‖₂`.
pub fn multiplier_sup(sample: &Sample, gram: &PsdMatrix) -> Result<f64> {
    if sample.zeta.len() != sample.len() {
        return Err(Error::DimensionMismatch {
            what: "realized noise",
            expected: sample.len(),
            found: sample.zeta.len(),
        });
    }
    if gram.dim() != sample.dim() {
        return Err(Error::DimensionMismatch {
            what: "Gram matrix",
            expected: sample.dim(),
            found: gram.dim(),
        });
    }
    let mut avg = sample.w.tr_mul_vec(&sample.zeta)?;
    let n = sample.len() as f64;
    avg.iter_mut().for_each(|v| *v /= n);
    if linalg::rank(gram, RANK_TOL) < gram.dim() {
        log::warn!("singular Gram matrix; multiplier supremum taken on its range");
    }
    let white = linalg::pinv_sqrt_inv(gram, RANK_TOL)?.mul_vec(&avg)?;
    Ok(linalg::norm2(&white))
}

/// Extreme values of `(1/N) Σ ⟨W_i, t⟩²` over `‖t‖₂ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Isomorphy {
    pub lower: f64,
    pub upper: f64,
    /// `lower ≥ 1/2` and `upper ≤ 3/2`.
    pub pass: bool,
}

pub fn isomorphy_check(sample: &Sample) -> Result<Isomorphy> {
    if sample.len() < sample.dim() {
        return Err(Error::input(format!(
            "isomorphy needs N >= M, got N={} M={}",
            sample.len(),
            sample.dim()
        )));
    }
    let (s_min, s_max) = linalg::extreme_singular_values(&sample.w)?;
    let n = sample.len() as f64;
    let lower = s_min * s_min / n;
    let upper = s_max * s_max / n;
    Ok(Isomorphy {
        lower,
        upper,
        pass: lower >= 0.5 && upper <= 1.5,
    })
}

/// Settings shared by the constant estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantsSettings {
    pub kappa0: f64,
    pub n_directions: usize,
    pub n_samples: usize,
}

impl Default for ConstantsSettings {
    fn default() -> Self {
        Self {
            kappa0: DEFAULT_KAPPA0,
            n_directions: 200,
            n_samples: 100_000,
        }
    }
}

/// All constants of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub dim: usize,
    pub small_ball: SmallBallEstimate,
    pub theta0_hat: f64,
    pub theta0_finite: bool,
    pub b_exact: Option<BConstant>,
    /// Paley–Zygmund `β₀` implied by `theta0_hat` at `κ₀ = 1/2`; zero when
    /// `θ₀` is infinite.
    pub pz_beta0: f64,
    pub seed: u64,
}

impl ConstantsReport {
    /// The certified Paley–Zygmund constant does not exceed the Monte Carlo
    /// small-ball estimate by more than three standard errors.
    pub fn pz_consistent(&self) -> bool {
        self.pz_beta0 <= self.small_ball.beta0_hat + 3.0 * self.small_ball.std_error
    }

    pub fn b_at_least_dim(&self) -> Option<bool> {
        self.b_exact
            .as_ref()
            .map(|b| b.value >= b.effective_dim as f64 - 1e-8)
    }
}

pub fn constants_report(
    scenario: &Scenario,
    settings: &ConstantsSettings,
    seed: u64,
) -> Result<ConstantsReport> {
    let small_ball = estimate_small_ball(
        scenario,
        settings.kappa0,
        settings.n_directions,
        settings.n_samples,
        derive_seed(seed, 1, Purpose::Campaign),
    )?;
    let theta0_hat = estimate_theta0(
        scenario,
        settings.n_directions,
        settings.n_samples,
        derive_seed(seed, 2, Purpose::Campaign),
    )?;
    let theta0_finite = theta0_hat.is_finite();
    let pz_beta0 = if theta0_finite {
        paley_zygmund(theta0_hat.max(1.0), DEFAULT_KAPPA0)?
    } else {
        0.0
    };
    let b_exact = match scenario.design().support() {
        Some(_) => Some(compute_b_discrete(scenario.design())?),
        None => None,
    };
    Ok(ConstantsReport {
        dim: scenario.dim(),
        small_ball,
        theta0_hat,
        theta0_finite,
        b_exact,
        pz_beta0,
        seed,
    })
}
