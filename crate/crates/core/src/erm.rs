//! Empirical risk minimization over the span of the dictionary.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::models::{self, Sample, Scenario};

/// Coefficients `t ∈ R^M` of `Σ_j t_j f_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoefficientVector(pub Vec<f64>);

impl Deref for CoefficientVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for CoefficientVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for CoefficientVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// How to pick one point from the (possibly non-unique) set of minimizers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TieBreakPolicy {
    #[default]
    MinNorm,
    /// Minimum-norm solution with every coefficient of an unobserved
    /// coordinate (an all-zero design column) set to `xi`.
    AdversarialXi { xi: f64 },
}

/// `(1/N) ‖W t − y‖²`.
pub fn empirical_risk(w: &Matrix, y: &[f64], t: &[f64]) -> Result<f64> {
    if y.len() != w.rows() {
        return Err(Error::DimensionMismatch {
            what: "responses",
            expected: w.rows(),
            found: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::input("empirical risk of an empty sample"));
    }
    let fitted = w.mul_vec(t)?;
    let sse: f64 = fitted.iter().zip(y).map(|(f, y)| (y - f) * (y - f)).sum();
    Ok(sse / y.len() as f64)
}

/// Indices of design columns that are identically zero.
///
/// For the indicator partition design these are exactly the cells no
/// observation landed in.
pub fn unvisited_columns(w: &Matrix) -> Vec<usize> {
    let mut seen = vec![false; w.cols()];
    for r in w.iter_rows() {
        for (s, &v) in seen.iter_mut().zip(r) {
            *s |= v != 0.0;
        }
    }
    seen.iter()
        .enumerate()
        .filter_map(|(j, &s)| (!s).then_some(j))
        .collect()
}

pub fn solve_erm(sample: &Sample, policy: TieBreakPolicy) -> Result<CoefficientVector> {
    let mut t = linalg::lstsq_min_norm(&sample.w, &sample.y)?;
    if let TieBreakPolicy::AdversarialXi { xi } = policy {
        if !xi.is_finite() {
            return Err(Error::input("adversarial xi must be finite"));
        }
        let free = unvisited_columns(&sample.w);
        if free.is_empty() {
            return Err(Error::PolicyInapplicable(
                "every design column is observed, so the minimizer is unique in those coordinates"
                    .into(),
            ));
        }
        for j in free {
            t[j] = xi;
        }
    }
    Ok(CoefficientVector(t))
}

/// `(t − t*)ᵀ Σ (t − t*)`, the exact excess risk `R(t) − R(t*)`.
pub fn excess_risk_exact(t: &[f64], scenario: &Scenario) -> Result<f64> {
    let t_star = models::oracle_coeffs(scenario)?;
    if t.len() != t_star.len() {
        return Err(Error::DimensionMismatch {
            what: "coefficients",
            expected: t_star.len(),
            found: t.len(),
        });
    }
    let diff: Vec<f64> = t.iter().zip(t_star.iter()).map(|(a, b)| a - b).collect();
    let gram = models::population_gram(scenario);
    Ok(gram.quad_form(&diff)?.max(0.0))
}

/// Empirical excess loss `P_N L_t` split into its quadratic and linear parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcessLoss {
    pub total: f64,
    pub quadratic: f64,
    pub linear: f64,
}

pub fn empirical_excess_loss(sample: &Sample, t: &[f64], t_star: &[f64]) -> Result<ExcessLoss> {
    let m = sample.dim();
    for (what, v) in [("coefficients", t), ("oracle coefficients", t_star)] {
        if v.len() != m {
            return Err(Error::DimensionMismatch {
                what,
                expected: m,
                found: v.len(),
            });
        }
    }
    if sample.is_empty() {
        return Err(Error::input("excess loss of an empty sample"));
    }
    let diff: Vec<f64> = t_star.iter().zip(t).map(|(a, b)| a - b).collect();
    let mut quadratic = 0.0;
    let mut linear = 0.0;
    for (r, &y) in sample.w.iter_rows().zip(&sample.y) {
        let gap = linalg::dot(r, &diff);
        let resid = y - linalg::dot(r, t_star);
        quadratic += gap * gap;
        linear += resid * gap;
    }
    let n = sample.len() as f64;
    let quadratic = quadratic / n;
    let linear = 2.0 * linear / n;
    Ok(ExcessLoss {
        total: quadratic + linear,
        quadratic,
        linear,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Design, Noise, Target};
    use proptest::prelude::*;

    fn partition_sample(rows: &[[f64; 3]]) -> Sample {
        let w = Matrix::from_rows(rows).unwrap();
        let n = w.rows();
        Sample {
            w,
            y: vec![1.0; n],
            zeta: vec![0.0; n],
            seed: 0,
        }
    }

    #[test]
    fn empirical_risk_examples() {
        let w = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert_eq!(empirical_risk(&w, &[3.0], &[1.0, 0.0]).unwrap(), 4.0);
        let s = Scenario::gaussian(3, vec![1.0, 2.0, 3.0], 0.0).unwrap();
        let smp = models::sample(&s, 20, 1).unwrap();
        assert!(empirical_risk(&smp.w, &smp.y, &[1.0, 2.0, 3.0]).unwrap() < 1e-28);
        assert!(empirical_risk(&w, &[1.0, 2.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn empirical_risk_matches_loop() {
        let s = Scenario::gaussian(4, vec![0.5, -1.0, 2.0, 0.0], 1.0).unwrap();
        let smp = models::sample(&s, 37, 3).unwrap();
        let t = [0.1, 0.2, 0.3, 0.4];
        let mut acc = 0.0;
        for i in 0..37 {
            let mut f = 0.0;
            for j in 0..4 {
                f += smp.w.get(i, j) * t[j];
            }
            acc += (smp.y[i] - f).powi(2);
        }
        let r = empirical_risk(&smp.w, &smp.y, &t).unwrap();
        assert!((r - acc / 37.0).abs() < 1e-12 * r.max(1.0));
    }

    #[test]
    fn partition_tie_breaks() {
        // cells 1 and 2 visited, cell 3 not, one observation in the zero cell
        let smp = partition_sample(&[
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
        ]);
        let min_norm = solve_erm(&smp, TieBreakPolicy::MinNorm).unwrap();
        let expected = [1.0, 1.0, 0.0];
        for (a, b) in min_norm.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let adv = solve_erm(&smp, TieBreakPolicy::AdversarialXi { xi: 7.0 }).unwrap();
        assert_eq!(adv[2], 7.0);
        assert!((adv[0] - 1.0).abs() < 1e-12 && (adv[1] - 1.0).abs() < 1e-12);
        let r0 = empirical_risk(&smp.w, &smp.y, &min_norm).unwrap();
        let r1 = empirical_risk(&smp.w, &smp.y, &adv).unwrap();
        assert!((r0 - r1).abs() <= 1e-10 * r0.max(1.0));
    }

    #[test]
    fn adversarial_on_full_rank_is_refused() {
        let s = Scenario::gaussian(2, vec![1.0, -1.0], 1.0).unwrap();
        let smp = models::sample(&s, 10, 2).unwrap();
        assert!(matches!(
            solve_erm(&smp, TieBreakPolicy::AdversarialXi { xi: 3.0 }),
            Err(Error::PolicyInapplicable(_))
        ));
    }

    #[test]
    fn noiseless_interpolation() {
        let s = Scenario::gaussian(2, vec![1.0, -1.0], 0.0).unwrap();
        let smp = models::sample(&s, 50, 4).unwrap();
        let t = solve_erm(&smp, TieBreakPolicy::MinNorm).unwrap();
        assert!((t[0] - 1.0).abs() < 1e-9 && (t[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn excess_risk_examples() {
        let s = Scenario::gaussian(2, vec![1.0, 2.0], 1.0).unwrap();
        assert_eq!(excess_risk_exact(&[1.0, 2.0], &s).unwrap(), 0.0);
        let e = excess_risk_exact(&[2.0, 0.0], &s).unwrap();
        assert!((e - 5.0).abs() < 1e-12);
        let p = Scenario::partition(2, 4.0).unwrap();
        let e = excess_risk_exact(&[1.0, 5.0], &p).unwrap();
        assert!((e - 4.0).abs() < 1e-12);
        assert!(excess_risk_exact(&[1.0], &p).is_err());
    }

    #[test]
    fn erm_excess_loss_is_nonpositive() {
        let s = Scenario::gaussian(5, vec![1.0; 5], 2.0).unwrap();
        for seed in 0..20 {
            let smp = models::sample(&s, 40, seed).unwrap();
            let t = solve_erm(&smp, TieBreakPolicy::MinNorm).unwrap();
            let loss = empirical_excess_loss(&smp, &t, &[1.0; 5]).unwrap();
            assert!(loss.total <= 1e-10);
        }
        let smp = models::sample(&s, 10, 0).unwrap();
        let zero = empirical_excess_loss(&smp, &[1.0; 5], &[1.0; 5]).unwrap();
        assert_eq!((zero.total, zero.quadratic, zero.linear), (0.0, 0.0, 0.0));
    }

    fn arb_scenario() -> impl Strategy<Value = (Scenario, u64, usize)> {
        (1usize..6, any::<u64>(), 1usize..30, 0.0f64..3.0, any::<bool>()).prop_map(
            |(m, seed, n, sigma, heavy)| {
                let coeffs: Vec<f64> = (0..m).map(|j| j as f64 - 1.5).collect();
                let design = if heavy {
                    Design::HeavyTailedIid { dim: m, dof: 5.0 }
                } else {
                    Design::GaussianIdentity { dim: m }
                };
                let s = Scenario::new(
                    design,
                    Noise::Gaussian { sigma },
                    Target::InSpan {
                        coeffs: CoefficientVector(coeffs),
                    },
                )
                .unwrap();
                (s, seed, n)
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn decomposition_identity((s, seed, n) in arb_scenario(), shift in -2.0f64..2.0) {
            let smp = models::sample(&s, n, seed).unwrap();
            let t_star = models::oracle_coeffs(&s).unwrap();
            let t: Vec<f64> = t_star.iter().enumerate().map(|(j, v)| v + shift * (j as f64 + 0.5)).collect();
            let loss = empirical_excess_loss(&smp, &t, &t_star).unwrap();
            let direct = empirical_risk(&smp.w, &smp.y, &t).unwrap()
                - empirical_risk(&smp.w, &smp.y, &t_star).unwrap();
            let scale = empirical_risk(&smp.w, &smp.y, &t).unwrap().max(1.0);
            prop_assert!((loss.total - loss.quadratic - loss.linear).abs() <= 1e-10 * scale);
            prop_assert!((loss.total - direct).abs() <= 1e-10 * scale);
        }

        #[test]
        fn minimizer_is_optimal((s, seed, n) in arb_scenario(), dir_seed in any::<u64>()) {
            let smp = models::sample(&s, n, seed).unwrap();
            let t = solve_erm(&smp, TieBreakPolicy::MinNorm).unwrap();
            let base = empirical_risk(&smp.w, &smp.y, &t).unwrap();
            let dirs = models::sample_design(&Design::GaussianIdentity { dim: s.dim() }, 100, dir_seed).unwrap();
            for u in dirs.iter_rows() {
                for eps in [1e-3, -1e-3] {
                    let moved: Vec<f64> = t.iter().zip(u).map(|(a, b)| a + eps * b).collect();
                    prop_assert!(empirical_risk(&smp.w, &smp.y, &moved).unwrap() >= base - 1e-9);
                }
            }
        }
    }
}
