//! Campaign configuration and the two named presets.

use serde::{Deserialize, Serialize};

use crate::erm::{CoefficientVector, TieBreakPolicy};
use crate::error::{Error, Result};
use crate::models::{Design, Noise, Perturbation, Scenario, Target};

/// Design law, parameterized by the dictionary size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignTemplate {
    GaussianIdentity,
    HeavyTailedIid { dof: f64 },
    /// Partition with `cells_per_dim · M` cells.
    Partition { cells_per_dim: f64 },
}

/// Regression target, parameterized by the dictionary size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetTemplate {
    /// Every coefficient equal to `coeff`.
    InSpan { coeff: f64 },
    ConstantOne,
    Misspecified {
        coeff: f64,
        #[serde(default)]
        perturbation: Perturbation,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioTemplate {
    pub design: DesignTemplate,
    pub noise: Noise,
    pub target: TargetTemplate,
}

impl ScenarioTemplate {
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            design: DesignTemplate::GaussianIdentity,
            noise: Noise::Gaussian { sigma },
            target: TargetTemplate::InSpan { coeff: 1.0 },
        }
    }

    pub fn instantiate(&self, m: usize) -> Result<Scenario> {
        self.instantiate_with_noise(m, self.noise)
    }

    pub fn instantiate_with_noise(&self, m: usize, noise: Noise) -> Result<Scenario> {
        let design = match self.design {
            DesignTemplate::GaussianIdentity => Design::GaussianIdentity { dim: m },
            DesignTemplate::HeavyTailedIid { dof } => Design::HeavyTailedIid { dim: m, dof },
            DesignTemplate::Partition { cells_per_dim } => Design::Partition {
                dim: m,
                cells: cells_per_dim * m as f64,
            },
        };
        let target = match &self.target {
            TargetTemplate::InSpan { coeff } => Target::InSpan {
                coeffs: CoefficientVector(vec![*coeff; m]),
            },
            TargetTemplate::ConstantOne => Target::ConstantOne,
            TargetTemplate::Misspecified {
                coeff,
                perturbation,
            } => {
                if perturbation.first.max(perturbation.second) >= m {
                    return Err(Error::input(format!(
                        "perturbation uses coordinate {} but M = {m}",
                        perturbation.first.max(perturbation.second)
                    )));
                }
                Target::Misspecified {
                    coeffs: CoefficientVector(vec![*coeff; m]),
                    perturbation: *perturbation,
                }
            }
        };
        Scenario::new(design, noise, target)
    }
}

/// Rate fits in `N` and in `M`, plus the closed-form OLS cross-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub m_fixed: usize,
    pub n_grid: Vec<usize>,
    pub n_fixed: usize,
    pub m_grid: Vec<usize>,
    /// Allowed distance of a fitted slope from ±1.
    pub tolerance: f64,
    pub oracle_m: usize,
    pub oracle_n: usize,
    pub oracle_trials: usize,
    pub oracle_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSection {
    pub m: usize,
    pub n: usize,
    pub x_grid: Vec<f64>,
    pub trials: usize,
    pub kappa0: f64,
    pub n_directions: usize,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    pub m: usize,
    pub kappa0: f64,
    pub n_directions: usize,
    pub n_samples: usize,
    /// Random discrete designs for the `B ≥ M` check.
    pub b_designs: usize,
    pub b_max_dim: usize,
    /// Number of built-in scenarios for the Paley–Zygmund check.
    pub pz_scenarios: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSection {
    pub m: usize,
    pub n: usize,
    pub x_grid: Vec<f64>,
    pub trials: usize,
    /// Guard `N ≥ c0 · M`.
    pub c0: f64,
    /// Fixed threshold constant; calibrated at the smallest `x` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_fit: Option<f64>,
    pub ratio_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lemma41Section {
    pub x_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prop4Section {
    pub m: usize,
    pub n: usize,
    pub eta: f64,
    pub xi_grid: Vec<f64>,
    pub kappa: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallBallSection {
    pub m: usize,
    pub n: usize,
    pub kappa0: f64,
    pub n_directions: usize,
    pub seeds: usize,
    pub required_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierSection {
    pub m: usize,
    pub n: usize,
    pub x: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsomorphySection {
    /// `N = ratio · M`.
    pub ratio: usize,
    pub m_grid: Vec<usize>,
    pub seeds: usize,
    pub required_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Trials per rate cell.
    pub trials: usize,
    pub quantiles: Vec<f64>,
    pub policy: TieBreakPolicy,
    pub scenario: ScenarioTemplate,
    pub rate: RateSection,
    pub coverage: CoverageSection,
    pub constants: ConstantsSection,
    pub tail: TailSection,
    pub lemma41: Lemma41Section,
    pub prop4: Prop4Section,
    pub small_ball: SmallBallSection,
    pub multiplier: MultiplierSection,
    pub isomorphy: IsomorphySection,
}

pub const PRESETS: [&str; 2] = ["ci", "desk"];

impl ExperimentConfig {
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "ci" => Some(Self::ci()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    /// Reduced scale for continuous integration.
    pub fn ci() -> Self {
        Self {
            master_seed: 20_240_601,
            trials: 100,
            quantiles: vec![0.5, 0.9, 0.99],
            policy: TieBreakPolicy::MinNorm,
            scenario: ScenarioTemplate::gaussian(1.0),
            rate: RateSection {
                m_fixed: 5,
                n_grid: vec![100, 200, 400, 800],
                n_fixed: 800,
                m_grid: vec![2, 4, 8, 16],
                tolerance: 0.25,
                oracle_m: 5,
                oracle_n: 200,
                oracle_trials: 400,
                oracle_tolerance: 0.2,
            },
            coverage: CoverageSection {
                m: 5,
                n: 200,
                x_grid: vec![2.0, 5.0, 10.0],
                trials: 200,
                kappa0: 0.5,
                n_directions: 50,
                n_samples: 20_000,
            },
            constants: ConstantsSection {
                m: 4,
                kappa0: 0.5,
                n_directions: 50,
                n_samples: 20_000,
                b_designs: 10,
                b_max_dim: 6,
                pz_scenarios: 4,
            },
            tail: TailSection {
                m: 5,
                n: 200,
                x_grid: vec![2.0, 4.0, 8.0, 16.0],
                trials: 500,
                c0: 20.0,
                c_fit: None,
                ratio_floor: 0.3,
            },
            lemma41: Lemma41Section {
                x_grid: vec![2.0, 4.0],
                n_grid: vec![100],
                draws: 10_000,
            },
            prop4: Prop4Section {
                m: 10,
                n: 50,
                eta: 0.9,
                xi_grid: vec![1.0, 11.0, 101.0],
                kappa: 1.0,
                trials: 300,
            },
            small_ball: SmallBallSection {
                m: 5,
                n: 400,
                kappa0: 0.5,
                n_directions: 50,
                seeds: 30,
                required_rate: 0.9,
            },
            multiplier: MultiplierSection {
                m: 10,
                n: 400,
                x: 10.0,
                seeds: 200,
            },
            isomorphy: IsomorphySection {
                ratio: 100,
                m_grid: vec![5],
                seeds: 50,
                required_rate: 0.95,
            },
        }
    }

    /// Full desk scale.
    pub fn desk() -> Self {
        Self {
            master_seed: 20_240_601,
            trials: 300,
            quantiles: vec![0.5, 0.9, 0.99],
            policy: TieBreakPolicy::MinNorm,
            scenario: ScenarioTemplate::gaussian(1.0),
            rate: RateSection {
                m_fixed: 10,
                n_grid: vec![250, 500, 1000, 2000, 4000],
                n_fixed: 4000,
                m_grid: vec![5, 10, 20, 40],
                tolerance: 0.15,
                oracle_m: 5,
                oracle_n: 500,
                oracle_trials: 2000,
                oracle_tolerance: 0.1,
            },
            coverage: CoverageSection {
                m: 5,
                n: 500,
                x_grid: vec![2.0, 5.0, 10.0],
                trials: 1000,
                kappa0: 0.5,
                n_directions: 200,
                n_samples: 100_000,
            },
            constants: ConstantsSection {
                m: 5,
                kappa0: 0.5,
                n_directions: 200,
                n_samples: 100_000,
                b_designs: 50,
                b_max_dim: 10,
                pz_scenarios: 10,
            },
            tail: TailSection {
                m: 5,
                n: 200,
                x_grid: vec![2.0, 4.0, 8.0, 16.0],
                trials: 5000,
                c0: 20.0,
                c_fit: None,
                ratio_floor: 0.3,
            },
            lemma41: Lemma41Section {
                x_grid: vec![2.0, 4.0, 8.0],
                n_grid: vec![100, 1000],
                draws: 100_000,
            },
            prop4: Prop4Section {
                m: 20,
                n: 100,
                eta: 0.9,
                xi_grid: vec![1.0, 11.0, 101.0, 1001.0],
                kappa: 10.0,
                trials: 2000,
            },
            small_ball: SmallBallSection {
                m: 5,
                n: 400,
                kappa0: 0.5,
                n_directions: 200,
                seeds: 100,
                required_rate: 0.95,
            },
            multiplier: MultiplierSection {
                m: 10,
                n: 400,
                x: 10.0,
                seeds: 1000,
            },
            isomorphy: IsomorphySection {
                ratio: 20,
                m_grid: vec![5, 25],
                seeds: 200,
                required_rate: 0.99,
            },
        }
    }

    /// Checks every field; the error names the offending field by its
    /// dotted path.
    pub fn validate(&self) -> Result<()> {
        fn need(ok: bool, field: &str, message: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::config(field, message))
            }
        }
        fn grid<T: PartialOrd + Copy>(v: &[T], floor: T, field: &str) -> Result<()> {
            need(!v.is_empty(), field, "must not be empty")?;
            need(v.iter().all(|&x| x >= floor), field, "contains a value below the minimum")
        }
        fn positive(v: f64, field: &str) -> Result<()> {
            need(v.is_finite() && v > 0.0, field, "must be positive and finite")
        }

        need(self.trials >= 30, "trials", "rate fits need at least 30 trials per cell")?;
        need(!self.quantiles.is_empty(), "quantiles", "must not be empty")?;
        need(
            self.quantiles.iter().all(|q| (0.0..=1.0).contains(q)),
            "quantiles",
            "every quantile must lie in [0, 1]",
        )?;
        if let TieBreakPolicy::AdversarialXi { xi } = self.policy {
            need(xi.is_finite(), "policy", "xi must be finite")?;
        }
        let check_scenario = |m: usize, field: &str| {
            self.scenario
                .instantiate(m)
                .map(|_| ())
                .map_err(|e| Error::config(field, e.to_string()))
        };
        check_scenario(1.max(self.rate.m_fixed), "scenario")?;

        let r = &self.rate;
        need(r.m_fixed >= 1, "rate.m_fixed", "must be at least 1")?;
        grid(&r.n_grid, 1, "rate.n_grid")?;
        need(r.n_grid.len() >= 4, "rate.n_grid", "a rate fit needs at least 4 points")?;
        need(r.n_fixed >= 1, "rate.n_fixed", "must be at least 1")?;
        grid(&r.m_grid, 1, "rate.m_grid")?;
        need(r.m_grid.len() >= 4, "rate.m_grid", "a rate fit needs at least 4 points")?;
        for &m in &r.m_grid {
            check_scenario(m, "rate.m_grid")?;
        }
        positive(r.tolerance, "rate.tolerance")?;
        need(r.oracle_m >= 1, "rate.oracle_m", "must be at least 1")?;
        need(r.oracle_n > r.oracle_m + 1, "rate.oracle_n", "must exceed oracle_m + 1")?;
        need(r.oracle_trials >= 2, "rate.oracle_trials", "must be at least 2")?;
        positive(r.oracle_tolerance, "rate.oracle_tolerance")?;

        let c = &self.coverage;
        need(c.m >= 1, "coverage.m", "must be at least 1")?;
        check_scenario(c.m, "coverage.m")?;
        need(c.n >= 1, "coverage.n", "must be at least 1")?;
        grid(&c.x_grid, f64::MIN_POSITIVE, "coverage.x_grid")?;
        need(c.trials >= 1, "coverage.trials", "must be at least 1")?;
        positive(c.kappa0, "coverage.kappa0")?;
        need(c.n_directions >= 1, "coverage.n_directions", "must be at least 1")?;
        need(c.n_samples >= 1, "coverage.n_samples", "must be at least 1")?;

        let k = &self.constants;
        need(k.m >= 1, "constants.m", "must be at least 1")?;
        check_scenario(k.m, "constants.m")?;
        need(k.kappa0 > 0.0 && k.kappa0 < 1.0, "constants.kappa0", "must lie in (0, 1)")?;
        need(k.n_directions >= 1, "constants.n_directions", "must be at least 1")?;
        need(k.n_samples >= 1, "constants.n_samples", "must be at least 1")?;
        need(k.b_max_dim >= 2, "constants.b_max_dim", "must be at least 2")?;
        need(
            k.pz_scenarios >= 1 && k.pz_scenarios <= super::PZ_SCENARIO_COUNT,
            "constants.pz_scenarios",
            "must lie between 1 and the number of built-in scenarios",
        )?;

        let t = &self.tail;
        need(t.m >= 1, "tail.m", "must be at least 1")?;
        check_scenario(t.m, "tail.m")?;
        need(t.n >= 2, "tail.n", "must be at least 2")?;
        grid(&t.x_grid, 1.0, "tail.x_grid")?;
        need(t.trials >= 1, "tail.trials", "must be at least 1")?;
        positive(t.c0, "tail.c0")?;
        need(
            t.n as f64 >= t.c0 * t.m as f64,
            "tail.n",
            "must satisfy N >= c0 * M",
        )?;
        if let Some(c) = t.c_fit {
            positive(c, "tail.c_fit")?;
        }
        need(t.ratio_floor >= 0.0, "tail.ratio_floor", "must be non-negative")?;

        let l = &self.lemma41;
        grid(&l.x_grid, 1.0, "lemma41.x_grid")?;
        grid(&l.n_grid, 2, "lemma41.n_grid")?;
        need(l.draws >= 1, "lemma41.draws", "must be at least 1")?;

        let p = &self.prop4;
        need(p.m >= 1, "prop4.m", "must be at least 1")?;
        need(p.n >= 1, "prop4.n", "must be at least 1")?;
        need(p.eta > 0.0 && p.eta < 1.0, "prop4.eta", "must lie in (0, 1)")?;
        need(!p.xi_grid.is_empty(), "prop4.xi_grid", "must not be empty")?;
        need(p.xi_grid.iter().all(|x| x.is_finite()), "prop4.xi_grid", "values must be finite")?;
        positive(p.kappa, "prop4.kappa")?;
        need(p.trials >= 1, "prop4.trials", "must be at least 1")?;

        let s = &self.small_ball;
        need(s.m >= 1, "small_ball.m", "must be at least 1")?;
        check_scenario(s.m, "small_ball.m")?;
        need(s.n >= 1, "small_ball.n", "must be at least 1")?;
        positive(s.kappa0, "small_ball.kappa0")?;
        need(s.n_directions >= 1, "small_ball.n_directions", "must be at least 1")?;
        need(s.seeds >= 1, "small_ball.seeds", "must be at least 1")?;
        need((0.0..=1.0).contains(&s.required_rate), "small_ball.required_rate", "must lie in [0, 1]")?;

        let mu = &self.multiplier;
        need(mu.m >= 1, "multiplier.m", "must be at least 1")?;
        check_scenario(mu.m, "multiplier.m")?;
        need(mu.n >= 1, "multiplier.n", "must be at least 1")?;
        need(mu.x >= 1.0 && mu.x.is_finite(), "multiplier.x", "must be at least 1")?;
        need(mu.seeds >= 1, "multiplier.seeds", "must be at least 1")?;

        let i = &self.isomorphy;
        need(i.ratio >= 1, "isomorphy.ratio", "must be at least 1")?;
        grid(&i.m_grid, 1, "isomorphy.m_grid")?;
        need(i.seeds >= 1, "isomorphy.seeds", "must be at least 1")?;
        need((0.0..=1.0).contains(&i.required_rate), "isomorphy.required_rate", "must lie in [0, 1]")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            ExperimentConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(ExperimentConfig::preset("huge").is_none());
    }

    #[test]
    fn empty_grid_names_field() {
        let mut cfg = ExperimentConfig::ci();
        cfg.rate.n_grid.clear();
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "rate.n_grid"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_trials_rejected() {
        let mut cfg = ExperimentConfig::ci();
        cfg.trials = 29;
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "trials"));
    }

    #[test]
    fn tail_guard_enforced() {
        let mut cfg = ExperimentConfig::ci();
        cfg.tail.n = 50;
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "tail.n"));
    }

    #[test]
    fn templates_instantiate() {
        let t = ScenarioTemplate {
            design: DesignTemplate::Partition { cells_per_dim: 3.0 },
            noise: Noise::none(),
            target: TargetTemplate::ConstantOne,
        };
        let s = t.instantiate(4).unwrap();
        assert_eq!(s.design(), &Design::Partition { dim: 4, cells: 12.0 });
        let mis = ScenarioTemplate {
            design: DesignTemplate::GaussianIdentity,
            noise: Noise::none(),
            target: TargetTemplate::Misspecified {
                coeff: 0.0,
                perturbation: Perturbation::default(),
            },
        };
        assert!(mis.instantiate(1).is_err());
        assert!(mis.instantiate(2).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig::desk();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
