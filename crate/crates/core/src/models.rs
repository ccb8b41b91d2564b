//! Scenarios: the joint law of `(W, Y)` in coefficient space.
//!
//! A dictionary `f_1, …, f_M` only enters through the random vector
//! `W = (f_1(X), …, f_M(X))`, so every design here is a law on `R^M`. Each
//! design knows its exact second-moment matrix and mean, which lets the
//! oracle coefficients and exact excess risks be computed without Monte Carlo.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT, Uniform};
use serde::{Deserialize, Serialize};

use crate::erm::CoefficientVector;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, PsdMatrix, RANK_TOL};
use crate::seed;

const PROB_SUM_TOL: f64 = 1e-12;

/// Law of the design vector `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    /// Standard Gaussian vector in `R^dim`.
    GaussianIdentity { dim: usize },
    /// Centered Gaussian vector with the given covariance.
    GaussianCov { cov: PsdMatrix },
    /// Indicator dictionary on a partition: cell `j < dim` has mass `1/cells`,
    /// the remaining mass `1 - dim/cells` falls on a cell where every `f_j` is 0.
    Partition { dim: usize, cells: f64 },
    /// Finitely many atoms with the given probabilities.
    DiscreteAtoms { atoms: Vec<Vec<f64>>, probs: Vec<f64> },
    /// i.i.d. Student-t coordinates with `dof > 2` degrees of freedom.
    HeavyTailedIid { dim: usize, dof: f64 },
}

impl Design {
    pub fn dim(&self) -> usize {
        match self {
            Design::GaussianIdentity { dim }
            | Design::Partition { dim, .. }
            | Design::HeavyTailedIid { dim, .. } => *dim,
            Design::GaussianCov { cov } => cov.dim(),
            Design::DiscreteAtoms { atoms, .. } => atoms.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::input("design dimension must be at least 1"));
        }
        match self {
            Design::Partition { dim, cells } => {
                if !(cells.is_finite() && *cells >= *dim as f64) {
                    return Err(Error::input(format!(
                        "partition needs cells >= dim, got cells={cells}, dim={dim}"
                    )));
                }
            }
            Design::DiscreteAtoms { atoms, probs } => {
                if atoms.len() != probs.len() {
                    return Err(Error::DimensionMismatch {
                        what: "atom probabilities",
                        expected: atoms.len(),
                        found: probs.len(),
                    });
                }
                let dim = self.dim();
                if atoms.iter().any(|a| a.len() != dim) {
                    return Err(Error::input("all atoms must have the same dimension"));
                }
                if atoms.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::input("atom coordinates must be finite"));
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::input("atom probabilities must be nonnegative"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > PROB_SUM_TOL {
                    return Err(Error::input(format!(
                        "atom probabilities sum to {total}, not 1"
                    )));
                }
            }
            Design::HeavyTailedIid { dof, .. } => {
                if !(*dof > 2.0) {
                    return Err(Error::input(format!("heavy-tailed design needs dof > 2, got {dof}")));
                }
            }
            Design::GaussianIdentity { .. } | Design::GaussianCov { .. } => {}
        }
        Ok(())
    }

    /// Exact `E[W Wᵀ]`.
    pub fn population_gram(&self) -> PsdMatrix {
        let m = self.dim();
        match self {
            Design::GaussianIdentity { .. } => PsdMatrix::identity(m),
            Design::GaussianCov { cov } => cov.clone(),
            Design::Partition { cells, .. } => PsdMatrix::scaled_identity(m, 1.0 / cells),
            Design::HeavyTailedIid { dof, .. } => {
                PsdMatrix::scaled_identity(m, dof / (dof - 2.0))
            }
            Design::DiscreteAtoms { atoms, probs } => {
                let mut data = vec![0.0; m * m];
                for (a, &p) in atoms.iter().zip(probs) {
                    for i in 0..m {
                        for j in 0..m {
                            data[i * m + j] += p * a[i] * a[j];
                        }
                    }
                }
                let acc = Matrix::new(m, m, data).expect("validated atoms are finite");
                PsdMatrix::from_trusted(acc)
            }
        }
    }

    /// Exact `E[W]`.
    pub fn mean(&self) -> Vec<f64> {
        let m = self.dim();
        match self {
            Design::Partition { cells, .. } => vec![1.0 / cells; m],
            Design::DiscreteAtoms { atoms, probs } => {
                let mut out = vec![0.0; m];
                for (a, &p) in atoms.iter().zip(probs) {
                    linalg::axpy(p, a, &mut out);
                }
                out
            }
            _ => vec![0.0; m],
        }
    }

    /// Finite support with probabilities, for designs that have one.
    pub fn support(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        match self {
            Design::Partition { dim, cells } => {
                let mut out: Vec<_> = (0..*dim)
                    .map(|j| {
                        let mut e = vec![0.0; *dim];
                        e[j] = 1.0;
                        (e, 1.0 / cells)
                    })
                    .collect();
                let rest = 1.0 - *dim as f64 / cells;
                if rest > 0.0 {
                    out.push((vec![0.0; *dim], rest));
                }
                Some(out)
            }
            Design::DiscreteAtoms { atoms, probs } => Some(
                atoms
                    .iter()
                    .cloned()
                    .zip(probs.iter().copied())
                    .filter(|(_, p)| *p > 0.0)
                    .collect(),
            ),
            _ => None,
        }
    }

    /// `W` and `-W` have the same law.
    pub fn is_centrally_symmetric(&self) -> bool {
        matches!(
            self,
            Design::GaussianIdentity { .. }
                | Design::GaussianCov { .. }
                | Design::HeavyTailedIid { .. }
        )
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Design::GaussianIdentity { .. } | Design::GaussianCov { .. })
    }

    /// Largest finite absolute moment order, if the design is heavy tailed.
    pub fn moment_limit(&self) -> Option<f64> {
        match self {
            Design::HeavyTailedIid { dof, .. } => Some(*dof),
            _ => None,
        }
    }

    pub(crate) fn sampler(&self) -> Result<DesignSampler<'_>> {
        self.validate()?;
        Ok(match self {
            Design::GaussianIdentity { dim } => DesignSampler::Gaussian {
                dim: *dim,
                factor: None,
            },
            Design::GaussianCov { cov } => DesignSampler::Gaussian {
                dim: cov.dim(),
                factor: Some(linalg::sqrt_psd(cov)),
            },
            Design::Partition { dim, cells } => DesignSampler::Partition {
                dim: *dim,
                cells: *cells,
            },
            Design::DiscreteAtoms { atoms, probs } => DesignSampler::Atoms {
                atoms,
                index: WeightedIndex::new(probs)
                    .map_err(|e| Error::input(format!("atom probabilities: {e}")))?,
            },
            Design::HeavyTailedIid { dof, .. } => DesignSampler::Student {
                dist: StudentT::new(*dof)
                    .map_err(|e| Error::input(format!("student-t design: {e}")))?,
            },
        })
    }
}

/// Per-sample state for drawing design rows.
pub(crate) enum DesignSampler<'a> {
    Gaussian {
        dim: usize,
        factor: Option<PsdMatrix>,
    },
    Partition {
        dim: usize,
        cells: f64,
    },
    Atoms {
        atoms: &'a [Vec<f64>],
        index: WeightedIndex<f64>,
    },
    Student {
        dist: StudentT<f64>,
    },
}

impl DesignSampler<'_> {
    pub(crate) fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            DesignSampler::Gaussian { dim, factor } => {
                let g: Vec<f64> = (0..*dim).map(|_| rng.sample(StandardNormal)).collect();
                match factor {
                    None => out.copy_from_slice(&g),
                    Some(l) => {
                        for (o, r) in out.iter_mut().zip(l.as_matrix().iter_rows()) {
                            *o = linalg::dot(r, &g);
                        }
                    }
                }
            }
            DesignSampler::Partition { dim, cells } => {
                out.fill(0.0);
                let u: f64 = rng.random();
                let cell = (u * cells).floor();
                if cell < *dim as f64 {
                    out[cell as usize] = 1.0;
                }
            }
            DesignSampler::Atoms { atoms, index } => {
                out.copy_from_slice(&atoms[index.sample(rng)]);
            }
            DesignSampler::Student { dist } => {
                for o in out.iter_mut() {
                    *o = dist.sample(rng);
                }
            }
        }
    }
}

/// Additive noise `ζ`, independent of the design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    Gaussian { sigma: f64 },
    /// Uniform on `[-sigma, sigma]`.
    BoundedUniform { sigma: f64 },
    /// `scale · T_dof`.
    StudentT { dof: f64, scale: f64 },
    /// `ζ = R·ε·η` with `ε` a Rademacher sign, `η ~ Bernoulli(δ)`,
    /// `δ = 1/(x·n)` and `R = δ^{-1/2}`: mean zero, variance exactly one,
    /// and `(1/n)Σζ_i² ≥ x` as soon as a single spike fires.
    #[serde(alias = "prop3")]
    RareSpike { x: f64, n: usize },
}

impl Noise {
    pub fn none() -> Self {
        Noise::Gaussian { sigma: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Noise::Gaussian { sigma } | Noise::BoundedUniform { sigma } => {
                sigma.is_finite() && sigma >= 0.0
            }
            Noise::StudentT { dof, scale } => dof > 2.0 && scale.is_finite() && scale > 0.0,
            Noise::RareSpike { x, n } => x.is_finite() && x >= 1.0 && n >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!("invalid noise parameters: {self:?}")))
        }
    }

    /// Spike probability `δ` and amplitude `R` of the rare-spike noise.
    pub fn spike(&self) -> Option<(f64, f64)> {
        match *self {
            Noise::RareSpike { x, n } => {
                let delta = 1.0 / (x * n as f64);
                Some((delta, 1.0 / delta.sqrt()))
            }
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(
            self,
            Noise::Gaussian { sigma: 0.0 } | Noise::BoundedUniform { sigma: 0.0 }
        )
    }

    pub(crate) fn sampler(&self) -> Result<NoiseSampler> {
        self.validate()?;
        Ok(match *self {
            Noise::Gaussian { sigma } => NoiseSampler::Gaussian(sigma),
            Noise::BoundedUniform { sigma } => {
                if sigma == 0.0 {
                    NoiseSampler::Gaussian(0.0)
                } else {
                    NoiseSampler::Uniform(Uniform::new_inclusive(-sigma, sigma).map_err(
                        |e| Error::input(format!("uniform noise: {e}")),
                    )?)
                }
            }
            Noise::StudentT { dof, scale } => NoiseSampler::Student(
                StudentT::new(dof).map_err(|e| Error::input(format!("student-t noise: {e}")))?,
                scale,
            ),
            Noise::RareSpike { .. } => {
                let (delta, amp) = self.spike().expect("rare spike");
                NoiseSampler::Spike { delta, amp }
            }
        })
    }
}

pub(crate) enum NoiseSampler {
    Gaussian(f64),
    Uniform(Uniform<f64>),
    Student(StudentT<f64>, f64),
    Spike { delta: f64, amp: f64 },
}

impl NoiseSampler {
    pub(crate) fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            NoiseSampler::Gaussian(s) => {
                if *s == 0.0 {
                    0.0
                } else {
                    s * rng.sample::<f64, _>(StandardNormal)
                }
            }
            NoiseSampler::Uniform(u) => u.sample(rng),
            NoiseSampler::Student(t, scale) => scale * t.sample(rng),
            NoiseSampler::Spike { delta, amp } => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                if rng.random::<f64>() < *delta {
                    sign * amp
                } else {
                    0.0
                }
            }
        }
    }
}

/// Exact `(E ζ², E ζ⁴)`; the fourth moment is `+∞` when it does not exist.
pub fn noise_moments(noise: &Noise) -> (f64, f64) {
    match *noise {
        Noise::Gaussian { sigma } => {
            let s2 = sigma * sigma;
            (s2, 3.0 * s2 * s2)
        }
        Noise::BoundedUniform { sigma } => {
            let s2 = sigma * sigma;
            (s2 / 3.0, s2 * s2 / 5.0)
        }
        Noise::StudentT { dof, scale } => {
            let s2 = scale * scale;
            let m2 = s2 * dof / (dof - 2.0);
            let m4 = if dof > 4.0 {
                s2 * s2 * 3.0 * dof * dof / ((dof - 2.0) * (dof - 4.0))
            } else {
                f64::INFINITY
            };
            (m2, m4)
        }
        Noise::RareSpike { x, n } => (1.0, x * n as f64),
    }
}

/// Bounded non-linear perturbation `g(W) = clamp(W_first · W_second, ±cap)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub first: usize,
    pub second: usize,
    pub cap: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            first: 0,
            second: 1,
            cap: 10.0,
        }
    }
}

impl Perturbation {
    pub fn eval(&self, w: &[f64]) -> f64 {
        (w[self.first] * w[self.second]).clamp(-self.cap, self.cap)
    }
}

/// Regression target as a function of the design vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    InSpan { coeffs: CoefficientVector },
    /// `Y ≡ 1` (plus noise, if any).
    ConstantOne,
    /// `Y = ⟨coeffs, W⟩ + g(W) + ζ` with `g` outside the span.
    Misspecified {
        coeffs: CoefficientVector,
        #[serde(default)]
        perturbation: Perturbation,
    },
}

impl Target {
    fn eval(&self, w: &[f64]) -> f64 {
        match self {
            Target::InSpan { coeffs } => linalg::dot(coeffs, w),
            Target::ConstantOne => 1.0,
            Target::Misspecified {
                coeffs,
                perturbation,
            } => linalg::dot(coeffs, w) + perturbation.eval(w),
        }
    }
}

/// A joint law of `(W, Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioParts")]
pub struct Scenario {
    design: Design,
    noise: Noise,
    target: Target,
}

#[derive(Deserialize)]
struct ScenarioParts {
    design: Design,
    noise: Noise,
    target: Target,
}

impl TryFrom<ScenarioParts> for Scenario {
    type Error = Error;

    fn try_from(p: ScenarioParts) -> Result<Self> {
        Scenario::new(p.design, p.noise, p.target)
    }
}

impl Scenario {
    pub fn new(design: Design, noise: Noise, target: Target) -> Result<Self> {
        design.validate()?;
        noise.validate()?;
        let m = design.dim();
        match &target {
            Target::InSpan { coeffs } | Target::Misspecified { coeffs, .. } => {
                if coeffs.len() != m {
                    return Err(Error::DimensionMismatch {
                        what: "target coefficients",
                        expected: m,
                        found: coeffs.len(),
                    });
                }
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::input("target coefficients must be finite"));
                }
            }
            Target::ConstantOne => {}
        }
        if let Target::Misspecified { perturbation, .. } = &target {
            if perturbation.first >= m || perturbation.second >= m {
                return Err(Error::input("perturbation index out of range"));
            }
            if !(perturbation.cap > 0.0 && perturbation.cap.is_finite()) {
                return Err(Error::input("perturbation cap must be positive"));
            }
        }
        Ok(Self {
            design,
            noise,
            target,
        })
    }

    /// Gaussian design, in-span target, Gaussian noise.
    pub fn gaussian(dim: usize, coeffs: Vec<f64>, sigma: f64) -> Result<Self> {
        Self::new(
            Design::GaussianIdentity { dim },
            Noise::Gaussian { sigma },
            Target::InSpan {
                coeffs: CoefficientVector(coeffs),
            },
        )
    }

    /// Indicator partition design with `Y ≡ 1` and no noise.
    pub fn partition(dim: usize, cells: f64) -> Result<Self> {
        Self::new(
            Design::Partition { dim, cells },
            Noise::none(),
            Target::ConstantOne,
        )
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn noise(&self) -> &Noise {
        &self.noise
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn dim(&self) -> usize {
        self.design.dim()
    }

    pub fn with_noise(&self, noise: Noise) -> Result<Self> {
        Self::new(self.design.clone(), noise, self.target.clone())
    }

    /// `(E ζ²)^{1/2}` of the additive noise.
    pub fn sigma_l2(&self) -> f64 {
        noise_moments(&self.noise).0.sqrt()
    }

    /// `(E ζ⁴)^{1/4}` of the additive noise.
    pub fn sigma_l4(&self) -> f64 {
        noise_moments(&self.noise).1.powf(0.25)
    }
}

/// `N` i.i.d. draws of `(W, Y)` with the realized noise kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub w: Matrix,
    pub y: Vec<f64>,
    pub zeta: Vec<f64>,
    pub seed: u64,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    /// `σ̂²_N = (1/N) Σ ζ_i²`.
    pub fn noise_energy(&self) -> f64 {
        self.zeta.iter().map(|z| z * z).sum::<f64>() / self.len() as f64
    }
}

/// Draws `n` rows of design, noise and response from one seeded stream.
pub fn sample(scenario: &Scenario, n: usize, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(Error::input("sample size must be at least 1"));
    }
    let m = scenario.dim();
    let design = scenario.design.sampler()?;
    let noise = scenario.noise.sampler()?;
    let mut rng = seed::rng(seed);
    let mut data = vec![0.0; n * m];
    let mut y = Vec::with_capacity(n);
    let mut zeta = Vec::with_capacity(n);
    for row in data.chunks_exact_mut(m) {
        design.draw(&mut rng, row);
        let z = noise.draw(&mut rng);
        y.push(scenario.target.eval(row) + z);
        zeta.push(z);
    }
    Ok(Sample {
        w: Matrix::new(n, m, data)?,
        y,
        zeta,
        seed,
    })
}

/// Draws `n` design rows only.
pub fn sample_design(design: &Design, n: usize, seed: u64) -> Result<Matrix> {
    let m = design.dim();
    let sampler = design.sampler()?;
    let mut rng = seed::rng(seed);
    let mut data = vec![0.0; n * m];
    for row in data.chunks_exact_mut(m) {
        sampler.draw(&mut rng, row);
    }
    Matrix::new(n, m, data)
}

pub fn population_gram(scenario: &Scenario) -> PsdMatrix {
    scenario.design.population_gram()
}

/// Population risk minimizer `t* = Σ⁺ E[Y W]` over `R^M`.
pub fn oracle_coeffs(scenario: &Scenario) -> Result<CoefficientVector> {
    match &scenario.target {
        Target::InSpan { coeffs } => Ok(coeffs.clone()),
        Target::ConstantOne => {
            let gram = scenario.design.population_gram();
            let mean = scenario.design.mean();
            Ok(CoefficientVector(
                linalg::pinv(&gram, RANK_TOL)?.mul_vec(&mean)?,
            ))
        }
        Target::Misspecified {
            coeffs,
            perturbation,
        } => {
            let cross = perturbation_cross_moment(&scenario.design, perturbation)?;
            let gram = scenario.design.population_gram();
            let shift = linalg::pinv(&gram, RANK_TOL)?.mul_vec(&cross)?;
            Ok(CoefficientVector(
                coeffs.iter().zip(&shift).map(|(c, s)| c + s).collect(),
            ))
        }
    }
}

/// Exact `E[g(W) W]` for the perturbation.
///
/// `g` is even, so the cross moment vanishes for centrally symmetric designs;
/// finite designs are summed exactly.
fn perturbation_cross_moment(design: &Design, g: &Perturbation) -> Result<Vec<f64>> {
    if design.is_centrally_symmetric() {
        return Ok(vec![0.0; design.dim()]);
    }
    let support = design.support().ok_or_else(|| {
        Error::Unsupported("perturbation cross moment needs a symmetric or finite design".into())
    })?;
    let mut out = vec![0.0; design.dim()];
    for (atom, p) in support {
        linalg::axpy(p * g.eval(&atom), &atom, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_response_is_target() {
        let s = Scenario::gaussian(2, vec![1.0, 0.0], 0.0).unwrap();
        let smp = sample(&s, 3, 9).unwrap();
        for i in 0..3 {
            assert_eq!(smp.y[i], smp.w.get(i, 0));
        }
    }

    #[test]
    fn partition_cell_frequencies() {
        let s = Scenario::partition(2, 4.0).unwrap();
        let n = 200_000;
        let smp = sample(&s, n, 5).unwrap();
        let mut counts = [0usize; 3];
        for r in smp.w.iter_rows() {
            match (r[0], r[1]) {
                (1.0, 0.0) => counts[0] += 1,
                (0.0, 1.0) => counts[1] += 1,
                (0.0, 0.0) => counts[2] += 1,
                other => panic!("unexpected row {other:?}"),
            }
        }
        for (c, p) in counts.iter().zip([0.25, 0.25, 0.5]) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 5.0 * se);
        }
        assert!(smp.y.iter().all(|&y| y == 1.0));
    }

    #[test]
    fn rare_spike_values() {
        // δ = 1/(4·100) = 1/400, R = 20
        let noise = Noise::RareSpike { x: 4.0, n: 100 };
        let (delta, amp) = noise.spike().unwrap();
        assert_eq!(delta, 1.0 / 400.0);
        assert_eq!(amp, 20.0);
        let s = Scenario::new(
            Design::GaussianIdentity { dim: 1 },
            noise,
            Target::InSpan {
                coeffs: CoefficientVector(vec![0.0]),
            },
        )
        .unwrap();
        let smp = sample(&s, 100_000, 1).unwrap();
        assert!(smp.zeta.iter().all(|&z| z == 0.0 || z == 20.0 || z == -20.0));
        let fired = smp.zeta.iter().filter(|&&z| z != 0.0).count() as f64 / 1e5;
        let se = (delta * (1.0 - delta) / 1e5).sqrt();
        assert!((fired - delta).abs() < 5.0 * se);
    }

    #[test]
    fn population_gram_examples() {
        let g = Design::GaussianIdentity { dim: 3 }.population_gram();
        assert_eq!(g, PsdMatrix::identity(3));
        let p = Design::Partition { dim: 2, cells: 4.0 }.population_gram();
        assert_eq!(p.to_rows(), vec![vec![0.25, 0.0], vec![0.0, 0.25]]);
        let d = Design::DiscreteAtoms {
            atoms: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            probs: vec![0.5, 0.5],
        }
        .population_gram();
        assert_eq!(d.to_rows(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
        let h = Design::HeavyTailedIid { dim: 2, dof: 6.0 }.population_gram();
        assert_eq!(h.get(0, 0), 1.5);
    }

    #[test]
    fn oracle_examples() {
        let s = Scenario::gaussian(2, vec![2.0, -1.0], 1.0).unwrap();
        assert_eq!(oracle_coeffs(&s).unwrap().0, vec![2.0, -1.0]);
        let p = Scenario::partition(3, 6.0).unwrap();
        for c in oracle_coeffs(&p).unwrap().iter() {
            assert!((c - 1.0).abs() < 1e-12);
        }
        let mis = Scenario::new(
            Design::GaussianIdentity { dim: 3 },
            Noise::Gaussian { sigma: 0.5 },
            Target::Misspecified {
                coeffs: CoefficientVector(vec![1.0, 2.0, 3.0]),
                perturbation: Perturbation::default(),
            },
        )
        .unwrap();
        assert_eq!(oracle_coeffs(&mis).unwrap().0, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn misspecified_oracle_on_atoms_is_projection() {
        // atoms (1,1) w.p. 1/2 and (1,-1)·2 w.p. 1/2, g = clamp(w0·w1, ±10)
        let design = Design::DiscreteAtoms {
            atoms: vec![vec![1.0, 1.0], vec![2.0, -2.0]],
            probs: vec![0.5, 0.5],
        };
        let s = Scenario::new(
            design,
            Noise::none(),
            Target::Misspecified {
                coeffs: CoefficientVector(vec![0.0, 0.0]),
                perturbation: Perturbation::default(),
            },
        )
        .unwrap();
        let t = oracle_coeffs(&s).unwrap();
        // g takes the values 1 and -4; the two atoms are linearly independent,
        // so the projection interpolates g exactly.
        assert!((t[0] + t[1] - 1.0).abs() < 1e-12);
        assert!((2.0 * t[0] - 2.0 * t[1] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn noise_moment_examples() {
        assert_eq!(noise_moments(&Noise::Gaussian { sigma: 2.0 }), (4.0, 48.0));
        let (m2, m4) = noise_moments(&Noise::BoundedUniform { sigma: 1.0 });
        assert!((m2 - 1.0 / 3.0).abs() < 1e-15 && (m4 - 0.2).abs() < 1e-15);
        assert_eq!(noise_moments(&Noise::RareSpike { x: 4.0, n: 100 }), (1.0, 400.0));
        assert!(noise_moments(&Noise::StudentT { dof: 3.0, scale: 1.0 }).1.is_infinite());
    }

    #[test]
    fn invalid_scenarios_rejected() {
        assert!(Scenario::partition(5, 4.0).is_err());
        assert!(Scenario::new(
            Design::DiscreteAtoms {
                atoms: vec![vec![1.0]],
                probs: vec![0.9]
            },
            Noise::none(),
            Target::ConstantOne
        )
        .is_err());
        assert!(Scenario::new(
            Design::HeavyTailedIid { dim: 2, dof: 2.0 },
            Noise::none(),
            Target::ConstantOne
        )
        .is_err());
        assert!(Scenario::gaussian(2, vec![1.0], 1.0).is_err());
        assert!(sample(&Scenario::gaussian(1, vec![1.0], 1.0).unwrap(), 0, 0).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let s = Scenario::new(
            Design::HeavyTailedIid { dim: 3, dof: 5.0 },
            Noise::StudentT { dof: 3.0, scale: 1.0 },
            Target::InSpan {
                coeffs: CoefficientVector(vec![1.0, 0.0, -1.0]),
            },
        )
        .unwrap();
        let a = sample(&s, 50, 77).unwrap();
        let b = sample(&s, 50, 77).unwrap();
        let bits = |s: &Sample| -> Vec<u64> {
            s.w.as_slice()
                .iter()
                .chain(&s.y)
                .chain(&s.zeta)
                .map(|v| v.to_bits())
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&sample(&s, 50, 78).unwrap()));
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let s = Scenario::new(
            Design::GaussianCov {
                cov: PsdMatrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap(),
            },
            Noise::RareSpike { x: 2.0, n: 10 },
            Target::InSpan {
                coeffs: CoefficientVector(vec![1.0, 1.0]),
            },
        )
        .unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
        let bad = text.replace("\"n\":10", "\"n\":0");
        assert!(serde_json::from_str::<Scenario>(&bad).is_err());
    }
}
