//! Closed-form excess-risk bounds, their validity conditions, and the exact
//! probabilities used by the lower-bound constructions.

use serde::Serialize;

use crate::error::{Error, Result};

/// Evaluated right-hand side of an oracle inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundResult {
    /// Excess-risk bound.
    pub value: f64,
    /// Guaranteed success probability, clamped to `[0, 1]`.
    pub probability: f64,
    /// All sample-size and parameter preconditions hold.
    pub valid: bool,
    /// The raw probability expression left `[0, 1]` and was clamped.
    pub clamped: bool,
    pub detail: String,
}

fn clamp_probability(raw: f64) -> (f64, bool) {
    if raw <= 0.0 {
        (0.0, true)
    } else if raw > 1.0 {
        (1.0, true)
    } else {
        (raw, false)
    }
}

fn join(notes: Vec<String>) -> String {
    if notes.is_empty() {
        "ok".to_string()
    } else {
        notes.join("; ")
    }
}

/// Small-ball bound: `(16/(β₀κ₀²))² σ² M x / N` with probability
/// `1 − exp(−β₀²N/4) − 1/x`, valid for `N ≥ 400² M / β₀²`.
pub fn bound_theorem_a(beta0: f64, kappa0: f64, sigma: f64, m: usize, n: usize, x: f64) -> BoundResult {
    let (m_f, n_f) = (m as f64, n as f64);
    let lead = 16.0 / (beta0 * kappa0 * kappa0);
    let value = lead * lead * sigma * sigma * m_f * x / n_f;
    let raw = 1.0 - (-beta0 * beta0 * n_f / 4.0).exp() - 1.0 / x;
    let (probability, clamped) = clamp_probability(raw);
    let mut notes = Vec::new();
    let positive = beta0 > 0.0 && kappa0 > 0.0 && sigma >= 0.0 && m > 0 && n > 0 && x > 0.0;
    if !positive {
        notes.push("parameters must be positive".to_string());
    }
    let needed = 400.0 * 400.0 * m_f / (beta0 * beta0);
    let size_ok = n_f >= needed;
    if !size_ok {
        notes.push(format!("needs N >= {needed:.0}"));
    }
    if clamped {
        notes.push(format!("probability {raw:.4} clamped"));
    }
    BoundResult {
        value: value.max(0.0),
        probability,
        valid: positive && size_ok,
        clamped,
        detail: join(notes),
    }
}

/// `L∞/L₂`-equivalence bound
/// `1920 B √m4 [(3BM + x)/N + 16B²M²/N²]` with probability `1 − 2e^{−x}`.
///
/// Valid when `2/N ≤ 2e^{−x} ≤ 1` and `N ≥ 1280B²[3BM + x + 16B²M²/N]`.
pub fn bound_catoni(b: f64, m4_noise: f64, m: usize, n: usize, x: f64) -> BoundResult {
    let (m_f, n_f) = (m as f64, n as f64);
    let bracket = (3.0 * b * m_f + x) / n_f + 16.0 * b * b * m_f * m_f / (n_f * n_f);
    let value = 1920.0 * b * m4_noise.sqrt() * bracket;
    let raw = 1.0 - 2.0 * (-x).exp();
    let (probability, clamped) = clamp_probability(raw);
    let mut notes = Vec::new();
    let mut valid = true;
    if b < 1.0 {
        valid = false;
        notes.push("needs B >= 1".to_string());
    }
    if b < m_f {
        log::warn!("B = {b} is below M = {m}; B >= M holds for any rank-M dictionary");
        notes.push("B < M is impossible for a rank-M dictionary".to_string());
    }
    let window = 2.0 * (-x).exp();
    if !(2.0 / n_f <= window && window <= 1.0) {
        valid = false;
        notes.push("x outside 2/N <= 2exp(-x) <= 1".to_string());
    }
    let needed = 1280.0 * b * b * (3.0 * b * m_f + x + 16.0 * b * b * m_f * m_f / n_f);
    if n_f < needed {
        valid = false;
        notes.push(format!("needs N >= {needed:.0}"));
    }
    if clamped {
        notes.push(format!("probability {raw:.4} clamped"));
    }
    BoundResult {
        value: value.max(0.0),
        probability,
        valid,
        clamped,
        detail: join(notes),
    }
}

/// `L₄/L₂`-equivalence bound `256² θ₀¹² σ₄² M x / N` with probability
/// `1 − exp(−N/(64θ₀⁸)) − 1/x`, valid for `N ≥ (1600θ₀⁴)² M`.
pub fn bound_theorem_2(theta0: f64, sigma4: f64, m: usize, n: usize, x: f64) -> BoundResult {
    let (m_f, n_f) = (m as f64, n as f64);
    let value = 65536.0 * theta0.powi(12) * sigma4 * sigma4 * m_f * x / n_f;
    let raw = 1.0 - (-n_f / (64.0 * theta0.powi(8))).exp() - 1.0 / x;
    let (probability, clamped) = clamp_probability(raw);
    let mut notes = Vec::new();
    let positive = theta0 > 0.0 && sigma4 >= 0.0 && m > 0 && n > 0 && x > 0.0;
    if !positive {
        notes.push("parameters must be positive".to_string());
    }
    let needed = (1600.0 * theta0.powi(4)).powi(2) * m_f;
    let size_ok = n_f >= needed;
    if !size_ok {
        notes.push(format!("needs N >= {needed:.0}"));
    }
    if clamped {
        notes.push(format!("probability {raw:.4} clamped"));
    }
    BoundResult {
        value: value.max(0.0),
        probability,
        valid: positive && size_ok,
        clamped,
        detail: join(notes),
    }
}

/// Exact excess risk of the adversarial partition minimizer:
/// `n_unvisited · (ξ − 1)² / k`.
pub fn bound_prop4_floor(xi: f64, k: f64, n_unvisited: usize) -> f64 {
    n_unvisited as f64 * (xi - 1.0) * (xi - 1.0) / k
}

/// Scale-free lower-bound threshold `c · x · M / N` (the constant is fitted).
pub fn prop3_threshold(c: f64, x: f64, m: usize, n: usize) -> f64 {
    c * x * m as f64 / n as f64
}

/// `P(σ̂²_N ≥ x) = 1 − (1 − δ)^N` for the rare-spike noise, `δ = 1/(xN)`.
pub fn lemma41_tail(x: f64, n: usize) -> Result<f64> {
    if !(x >= 1.0 && x.is_finite()) {
        return Err(Error::input(format!("tail needs x >= 1, got {x}")));
    }
    if n < 2 {
        return Err(Error::input(format!("tail needs N >= 2, got {n}")));
    }
    let delta = 1.0 / (x * n as f64);
    if delta > 1.0 {
        return Err(Error::input("spike probability exceeds one"));
    }
    Ok(-(n as f64 * (-delta).ln_1p()).exp_m1())
}

/// Cutoff above which inclusion–exclusion loses too much to cancellation.
pub const INCLUSION_EXCLUSION_MAX: usize = 25;

/// Probability that at least one of the `m` cells of mass `1/k` receives
/// none of `n` independent draws.
pub fn coupon_unvisited_prob(m: usize, n: usize, k: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::input("need at least one cell"));
    }
    if !(k >= m as f64 && k.is_finite()) {
        return Err(Error::input(format!("need k >= M, got k={k}, M={m}")));
    }
    if n == 0 {
        return Ok(1.0);
    }
    let p = if m <= INCLUSION_EXCLUSION_MAX {
        inclusion_exclusion(m, n, k)
    } else {
        1.0 - all_visited_by_occupancy(m, n, k)
    };
    Ok(p.clamp(0.0, 1.0))
}

fn inclusion_exclusion(m: usize, n: usize, k: f64) -> f64 {
    let mut total = 0.0;
    let mut binom = 1.0;
    for j in 1..=m {
        binom *= (m - j + 1) as f64 / j as f64;
        let miss = (1.0 - j as f64 / k).max(0.0).powf(n as f64);
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * binom * miss;
    }
    total
}

/// `P(all m cells visited)` via the chain on the number of distinct cells hit.
pub(crate) fn all_visited_by_occupancy(m: usize, n: usize, k: f64) -> f64 {
    let mut dist = vec![0.0; m + 1];
    dist[0] = 1.0;
    for _ in 0..n {
        for v in (0..=m).rev() {
            let hit_new = (m - v) as f64 / k;
            let stay = dist[v] * (1.0 - hit_new);
            let from_below = if v > 0 {
                dist[v - 1] * (m - v + 1) as f64 / k
            } else {
                0.0
            };
            dist[v] = stay + from_below;
        }
    }
    dist[m]
}

/// Largest cell-mass parameter searched when inverting the coupon probability.
pub const MAX_CELLS: u64 = 1_000_000_000;

/// Smallest integer `k ≥ M` with `coupon_unvisited_prob(M, N, k) ≥ eta`.
pub fn smallest_cells_for_unvisited(m: usize, n: usize, eta: f64) -> Result<u64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::input(format!("eta must lie in (0, 1), got {eta}")));
    }
    let reaches = |k: u64| -> Result<bool> { Ok(coupon_unvisited_prob(m, n, k as f64)? >= eta) };
    let mut lo = m.max(1) as u64;
    if reaches(lo)? {
        return Ok(lo);
    }
    let mut hi = lo;
    loop {
        hi = hi.saturating_mul(2).min(MAX_CELLS);
        if reaches(hi)? {
            break;
        }
        if hi == MAX_CELLS {
            return Err(Error::config(
                "eta",
                format!("no k <= {MAX_CELLS} leaves a cell unvisited with probability {eta}"),
            ));
        }
        lo = hi;
    }
    // invariant: !reaches(lo), reaches(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if reaches(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn theorem_a_examples() {
        let r = bound_theorem_a(1.0, 1.0, 1.0, 1, 160_000, 1.0);
        assert!((r.value - 0.0016).abs() < 1e-15);
        assert!(r.valid);
        assert_eq!(r.probability, 0.0);
        let r = bound_theorem_a(0.5, 0.5, 1.0, 3, 10_000_000, 0.5);
        assert!(r.clamped && r.probability == 0.0);
        let a = bound_theorem_a(0.6, 0.5, 2.0, 4, 1000, 3.0).value;
        let b = bound_theorem_a(0.6, 0.5, 2.0, 4, 2000, 3.0).value;
        assert_eq!(a, 2.0 * b);
        assert!(!bound_theorem_a(0.6, 0.5, 2.0, 4, 1000, 3.0).valid);
    }

    #[test]
    fn theorem_a_linear_in_x() {
        let base = bound_theorem_a(0.617, 0.5, 1.3, 7, 5000, 1.0).value;
        for x in [0.5, 2.0, 5.0, 10.0, 1e6] {
            let v = bound_theorem_a(0.617, 0.5, 1.3, 7, 5000, x).value;
            assert!((v / x - base).abs() <= 1e-15 * base);
        }
    }

    #[test]
    fn catoni_examples() {
        let r = bound_catoni(1.0, 1.0, 1, 1_000_000, 1.0);
        assert!((r.value - 0.00768003072).abs() < 1e-15);
        assert!(r.valid);
        assert!(!bound_catoni(1.0, 1.0, 1, 1_000_000, 0.5).valid);
        let r = bound_catoni(2.0, 1.0, 4, 1_000_000, 1.0);
        assert!(r.detail.contains("B < M"));
    }

    #[test]
    fn theorem_2_examples() {
        let r = bound_theorem_2(1.0, 1.0, 1, 2_560_000, 1.0);
        assert!((r.value - 0.0256).abs() < 1e-15);
        assert!(r.valid);
        let a = bound_theorem_2(1.0, 1.0, 3, 1000, 2.0).value;
        let b = bound_theorem_2(2.0, 1.0, 3, 1000, 2.0).value;
        assert!((b / a - 4096.0).abs() < 1e-9);
        assert!(!bound_theorem_2(1.2, 1.0, 2, 2_560_000, 2.0).valid);
    }

    #[test]
    fn bounds_are_monotone() {
        let ns = [100usize, 1000, 10_000];
        let xs = [1.5, 3.0, 9.0];
        let ms = [1usize, 4, 16];
        let sig = [0.5, 1.0, 2.0];
        type F = fn(usize, usize, f64, f64) -> BoundResult;
        let bounds: [F; 3] = [
            |m, n, x, s| bound_theorem_a(0.6, 0.5, s, m, n, x),
            |m, n, x, s| bound_catoni(20.0, s.powi(4), m, n, x),
            |m, n, x, s| bound_theorem_2(1.3, s, m, n, x),
        ];
        for f in bounds {
            for w in ns.windows(2) {
                assert!(f(4, w[0], 3.0, 1.0).value > f(4, w[1], 3.0, 1.0).value);
            }
            for w in xs.windows(2) {
                assert!(f(4, 1000, w[0], 1.0).value < f(4, 1000, w[1], 1.0).value);
            }
            for w in ms.windows(2) {
                assert!(f(w[0], 1000, 3.0, 1.0).value < f(w[1], 1000, 3.0, 1.0).value);
            }
            for w in sig.windows(2) {
                assert!(f(4, 1000, 3.0, w[0]).value < f(4, 1000, 3.0, w[1]).value);
            }
            assert!(f(4, 1000, 3.0, 1.0).value >= 0.0);
        }
    }

    #[test]
    fn prop4_floor_examples() {
        assert_eq!(bound_prop4_floor(1.0, 10.0, 3), 0.0);
        assert!((bound_prop4_floor(11.0, 100.0, 1) - 1.0).abs() < 1e-15);
        assert_eq!(bound_prop4_floor(11.0, 100.0, 2), 2.0 * bound_prop4_floor(11.0, 100.0, 1));
    }

    #[test]
    fn lemma41_examples() {
        // exact: 1 - (399/400)^100
        assert!((lemma41_tail(4.0, 100).unwrap() - 0.221_442_960_410_281_35).abs() < 1e-14);
        let mut prev = 1.0;
        for x in [1.0, 2.0, 10.0, 100.0, 1e4] {
            let t = lemma41_tail(x, 50).unwrap();
            assert!(t < prev);
            prev = t;
        }
        assert!(lemma41_tail(0.5, 100).is_err());
        assert!(lemma41_tail(2.0, 1).is_err());
    }

    #[test]
    fn lemma41_lower_bound_on_grid() {
        let floor = 1.0 - (-1.0_f64).exp();
        for x in [1.0, 2.0, 4.0, 8.0, 16.0] {
            for n in [10, 100, 1000] {
                let t = lemma41_tail(x, n).unwrap();
                assert!(t > 0.0 && t < 1.0);
                assert!(t >= floor / x);
            }
        }
    }

    #[test]
    fn coupon_examples() {
        assert_eq!(coupon_unvisited_prob(5, 0, 10.0).unwrap(), 1.0);
        assert!((coupon_unvisited_prob(1, 1, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(coupon_unvisited_prob(5, 10, 4.0).is_err());
    }

    #[test]
    fn coupon_routes_agree() {
        for &(m, n, k) in &[(1, 5, 3.0), (10, 100, 400.0), (20, 100, 20.0), (25, 300, 60.0), (7, 40, 7.0)] {
            let ie = inclusion_exclusion(m, n, k);
            let dp = 1.0 - all_visited_by_occupancy(m, n, k);
            assert!((ie - dp).abs() < 1e-10, "m={m} n={n} k={k}: {ie} vs {dp}");
        }
    }

    #[test]
    fn coupon_matches_monte_carlo() {
        // M=10, N=100, k=400 against 10^6 simulated experiments
        let (m, n, k) = (10usize, 100usize, 400.0);
        let exact = coupon_unvisited_prob(m, n, k).unwrap();
        let trials = 1_000_000u64;
        let mut rng = seed::rng(2024);
        let mut hits = 0u64;
        for _ in 0..trials {
            let mut seen = 0u32;
            for _ in 0..n {
                let cell = (rng.random::<f64>() * k).floor() as usize;
                if cell < m {
                    seen |= 1 << cell;
                }
            }
            if seen != (1 << m) - 1 {
                hits += 1;
            }
        }
        let freq = hits as f64 / trials as f64;
        let se = (exact * (1.0 - exact) / trials as f64).sqrt().max(1.0 / trials as f64);
        assert!((freq - exact).abs() <= 5.0 * se, "freq={freq} exact={exact}");
    }

    #[test]
    fn coupon_monotonicity() {
        for m in [3usize, 12, 30] {
            let mut prev = 2.0;
            for n in [10usize, 50, 200, 1000] {
                let p = coupon_unvisited_prob(m, n, 3.0 * m as f64).unwrap();
                assert!(p <= prev);
                prev = p;
            }
            let mut prev = -1.0;
            for k in [1.0, 2.0, 4.0, 8.0] {
                let p = coupon_unvisited_prob(m, 100, k * m as f64).unwrap();
                assert!(p >= prev);
                prev = p;
            }
        }
    }

    #[test]
    fn inversion_finds_smallest_k() {
        let (m, n, eta) = (20usize, 100usize, 0.9);
        let k = smallest_cells_for_unvisited(m, n, eta).unwrap();
        assert!(coupon_unvisited_prob(m, n, k as f64).unwrap() >= eta);
        if k > m as u64 {
            assert!(coupon_unvisited_prob(m, n, (k - 1) as f64).unwrap() < eta);
        }
        let tight = smallest_cells_for_unvisited(3, 2, 0.999).unwrap();
        assert!(coupon_unvisited_prob(3, 2, tight as f64).unwrap() >= 0.999);
        assert!(smallest_cells_for_unvisited(3, 2, 1.0).is_err());
    }
}
