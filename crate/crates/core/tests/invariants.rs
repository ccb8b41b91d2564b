//! Statistical invariants checked against independent Monte Carlo estimates.

use linagg_core::erm::{self, CoefficientVector};
use linagg_core::experiments as ex;
use linagg_core::linalg::{self, Matrix, PsdMatrix};
use linagg_core::models::{self, Design, Noise, Perturbation, Scenario, Target};
use linagg_core::TieBreakPolicy;

/// Mean and standard error of a list.
fn mean_se(v: &[f64]) -> (f64, f64) {
    ex::mean_and_se(v).unwrap()
}

fn zero_target(m: usize) -> Target {
    Target::InSpan {
        coeffs: CoefficientVector(vec![0.0; m]),
    }
}

fn designs() -> Vec<Design> {
    vec![
        Design::GaussianCov {
            cov: PsdMatrix::from_rows(&[[2.0, 0.5, 0.0], [0.5, 1.0, -0.3], [0.0, -0.3, 0.7]]).unwrap(),
        },
        Design::Partition { dim: 3, cells: 7.0 },
        Design::DiscreteAtoms {
            atoms: vec![vec![1.0, 2.0, 0.0], vec![-1.0, 0.5, 3.0], vec![0.0, 0.0, 1.0]],
            probs: vec![0.2, 0.5, 0.3],
        },
        Design::HeavyTailedIid { dim: 3, dof: 9.0 },
    ]
}

#[test]
fn empirical_gram_matches_population() {
    let n = 100_000;
    for (d, design) in designs().into_iter().enumerate() {
        let w = models::sample_design(&design, n, 100 + d as u64).unwrap();
        let pop = design.population_gram();
        for a in 0..3 {
            for b in a..3 {
                let prods: Vec<f64> = w.iter_rows().map(|r| r[a] * r[b]).collect();
                let (m, se) = mean_se(&prods);
                let z = (m - pop.get(a, b)) / se.max(1e-300);
                assert!(z.abs() <= 5.0, "design {d} entry ({a},{b}): z = {z}");
            }
        }
    }
}

#[test]
fn oracle_residual_is_orthogonal_to_the_span() {
    let n = 200_000;
    let atoms = designs().remove(2);
    let scenarios = [
        Scenario::new(
            atoms,
            Noise::Gaussian { sigma: 0.5 },
            Target::Misspecified {
                coeffs: CoefficientVector(vec![1.0, -1.0, 0.5]),
                perturbation: Perturbation::default(),
            },
        )
        .unwrap(),
        Scenario::new(
            Design::GaussianIdentity { dim: 3 },
            Noise::BoundedUniform { sigma: 1.0 },
            Target::Misspecified {
                coeffs: CoefficientVector(vec![0.3, 0.0, 2.0]),
                perturbation: Perturbation::default(),
            },
        )
        .unwrap(),
        Scenario::partition(3, 5.0).unwrap(),
    ];
    for (k, s) in scenarios.iter().enumerate() {
        let t_star = models::oracle_coeffs(s).unwrap();
        let smp = models::sample(s, n, 7 + k as u64).unwrap();
        for j in 0..3 {
            let g: Vec<f64> = smp
                .w
                .iter_rows()
                .zip(&smp.y)
                .map(|(r, y)| (y - linalg::dot(r, &t_star)) * r[j])
                .collect();
            let (m, se) = mean_se(&g);
            if se == 0.0 {
                assert!(m.abs() < 1e-12);
            } else {
                assert!((m / se).abs() <= 5.0, "scenario {k} coordinate {j}: z = {}", m / se);
            }
        }
    }
}

#[test]
fn rare_spike_moments() {
    let (x, n) = (4.0, 250);
    let s = Scenario::new(
        Design::GaussianIdentity { dim: 1 },
        Noise::RareSpike { x, n },
        zero_target(1),
    )
    .unwrap();
    let smp = models::sample(&s, 1_000_000, 3).unwrap();
    let (m1, se1) = mean_se(&smp.zeta);
    assert!((m1 / se1).abs() <= 5.0);
    let sq: Vec<f64> = smp.zeta.iter().map(|z| z * z).collect();
    let (m2, se2) = mean_se(&sq);
    assert!(((m2 - 1.0) / se2).abs() <= 5.0, "second moment {m2} ± {se2}");
    let (_, r) = Noise::RareSpike { x, n }.spike().unwrap();
    assert!(smp.zeta.iter().all(|z| *z == 0.0 || z.abs() == r));
}

#[test]
fn exact_excess_matches_risk_difference() {
    let s = Scenario::new(
        designs().remove(0),
        Noise::Gaussian { sigma: 1.0 },
        Target::InSpan {
            coeffs: CoefficientVector(vec![1.0, 0.0, -1.0]),
        },
    )
    .unwrap();
    let t = [0.7, 0.4, -0.2];
    let exact = erm::excess_risk_exact(&t, &s).unwrap();
    let t_star = models::oracle_coeffs(&s).unwrap();
    let smp = models::sample(&s, 400_000, 11).unwrap();
    let diffs: Vec<f64> = smp
        .w
        .iter_rows()
        .zip(&smp.y)
        .map(|(r, y)| (y - linalg::dot(r, &t)).powi(2) - (y - linalg::dot(r, &t_star)).powi(2))
        .collect();
    let (m, se) = mean_se(&diffs);
    assert!(((m - exact) / se).abs() <= 5.0, "exact {exact}, monte carlo {m} ± {se}");
}

#[test]
fn statistics_do_not_depend_on_execution_order() {
    let s = Scenario::gaussian(4, vec![1.0; 4], 1.0).unwrap();
    let cell = 0xC0FFEE;
    let forward = ex::run_cell_trials(&s, 60, TieBreakPolicy::MinNorm, 50, cell).unwrap();
    // run the trials back to front, writing each into its own slot
    let mut slots = vec![None; 50];
    for i in (0..50).rev() {
        let smp = models::sample(&s, 60, ex::trial_seed(cell, i)).unwrap();
        let t = erm::solve_erm(&smp, TieBreakPolicy::MinNorm).unwrap();
        slots[i] = Some(erm::excess_risk_exact(&t, &s).unwrap());
    }
    let backward: Vec<f64> = slots.into_iter().map(Option::unwrap).collect();
    let fwd: Vec<f64> = forward.iter().map(|o| o.excess).collect();
    assert_eq!(fwd, backward);
    let a = ex::summarize_cell(60, 4, &forward, &[0.5, 0.9], 1).unwrap();
    let b = ex::summarize_cell(60, 4, &forward, &[0.5, 0.9], 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn doubling_trials_keeps_medians_stable() {
    let s = Scenario::gaussian(5, vec![1.0; 5], 1.0).unwrap();
    let small = ex::run_cell(&s, 200, TieBreakPolicy::MinNorm, 200, 21).unwrap();
    let large = ex::run_cell(&s, 200, TieBreakPolicy::MinNorm, 400, 21).unwrap();
    let se = ex::bootstrap_median_se(&small, ex::BOOTSTRAP_REPS, 3).unwrap();
    let gap = (ex::median(&small).unwrap() - ex::median(&large).unwrap()).abs();
    assert!(gap <= 4.0 * se, "gap {gap}, se {se}");
}

#[test]
fn erm_is_consistent_across_scenarios() {
    let scenarios = vec![
        Scenario::partition(6, 10.0).unwrap().with_noise(Noise::Gaussian { sigma: 0.3 }).unwrap(),
        Scenario::new(
            Design::HeavyTailedIid { dim: 4, dof: 3.0 },
            Noise::StudentT { dof: 3.0, scale: 1.0 },
            zero_target(4),
        )
        .unwrap(),
        Scenario::new(
            Design::GaussianIdentity { dim: 5 },
            Noise::RareSpike { x: 8.0, n: 50 },
            zero_target(5),
        )
        .unwrap(),
    ];
    for (k, s) in scenarios.iter().enumerate() {
        let out = ex::run_cell_trials(s, 50, TieBreakPolicy::MinNorm, 100, k as u64).unwrap();
        assert!(ex::erm_consistent(&out), "scenario {k}");
    }
}

#[test]
fn rank_deficient_erm_is_set_valued() {
    // both minimizers have the same empirical risk, different population risk
    let s = Scenario::partition(3, 4.0).unwrap();
    let w = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
    let smp = models::Sample {
        w,
        y: vec![1.0; 3],
        zeta: vec![0.0; 3],
        seed: 0,
    };
    let a = erm::solve_erm(&smp, TieBreakPolicy::MinNorm).unwrap();
    let b = erm::solve_erm(&smp, TieBreakPolicy::AdversarialXi { xi: 7.0 }).unwrap();
    let ra = erm::empirical_risk(&smp.w, &smp.y, &a).unwrap();
    let rb = erm::empirical_risk(&smp.w, &smp.y, &b).unwrap();
    assert!((ra - rb).abs() < 1e-15);
    let ea = erm::excess_risk_exact(&a, &s).unwrap();
    let eb = erm::excess_risk_exact(&b, &s).unwrap();
    assert!((ea - 0.25).abs() < 1e-12 && (eb - 9.0).abs() < 1e-12);
}
