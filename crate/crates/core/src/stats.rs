//! Summary statistics for batches of walks: per-step means with Student-t
//! confidence intervals, Spearman rank correlation and the Kruskal-Wallis H
//! test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub mean: Vec<f64>,
    pub ci95_half_width: Vec<f64>,
    pub run_count: usize,
}

fn t_critical_975(dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Per-step mean and 95% half-width across runs. A single run gets zero width.
pub fn summarize(series: &[Vec<f64>]) -> Result<SeriesSummary> {
    let first = series.first().ok_or(Error::too_few("series batch", 1, 0))?;
    let len = first.len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::RaggedSeries);
    }
    let runs = series.len();
    let t = (runs > 1).then(|| t_critical_975((runs - 1) as f64));
    let mut mean = Vec::with_capacity(len);
    let mut half = Vec::with_capacity(len);
    for step in 0..len {
        let m = series.iter().map(|s| s[step]).sum::<f64>() / runs as f64;
        let w = match t {
            Some(t) => {
                let var = series.iter().map(|s| (s[step] - m).powi(2)).sum::<f64>() / (runs - 1) as f64;
                t * (var / runs as f64).sqrt()
            }
            None => 0.0,
        };
        mean.push(m);
        half.push(w);
    }
    Ok(SeriesSummary {
        mean,
        ci95_half_width: half,
        run_count: runs,
    })
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    /// Two-sided, from the t approximation with `n − 2` degrees of freedom.
    pub p: f64,
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::RaggedSeries);
    }
    if x.len() < 3 {
        return Err(Error::too_few("Spearman correlation", 3, x.len()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let dof = n - 2.0;
    let p = if (1.0 - rho.abs()) < 1e-15 {
        0.0
    } else {
        let t = rho * (dof / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof).expect("n >= 3");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(Correlation { rho, p })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub p: f64,
    pub dof: usize,
}

/// Tie-corrected H statistic with a chi-square p-value on `groups − 1` dof.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KruskalWallis> {
    if groups.len() < 2 {
        return Err(Error::too_few("Kruskal-Wallis groups", 2, groups.len()));
    }
    if let Some(g) = groups.iter().find(|g| g.is_empty()) {
        return Err(Error::too_few("Kruskal-Wallis group", 1, g.len()));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let ranks = average_ranks(&pooled);
    let n = pooled.len() as f64;
    let dof = groups.len() - 1;

    let mut offset = 0;
    let mut rank_term = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        rank_term += r * r / g.len() as f64;
        offset += g.len();
    }
    let h_raw = 12.0 / (n * (n + 1.0)) * rank_term - 3.0 * (n + 1.0);

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(KruskalWallis { h: 0.0, p: 1.0, dof });
    }
    let h = (h_raw / correction).max(0.0);
    Ok(KruskalWallis {
        h,
        p: chi_square_sf(h, dof as f64),
        dof,
    })
}

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Lentz's continued fraction for `Q(a, x)`.
fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    let tiny = f64::MIN_POSITIVE / GAMMA_EPS;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "P(a, x) needs a > 0 and x >= 0");
    if x == 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 − P(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "Q(a, x) needs a > 0 and x >= 0");
    if x == 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    regularized_gamma_q(dof / 2.0, x / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Reference values of Q(a, x) computed with 40-digit arithmetic.
    #[allow(clippy::excessive_precision)]
    const GAMMA_Q_REFERENCE: [(f64, f64, f64); 12] = [
        (0.5, 0.5, 0.317_310_507_862_914_102_83),
        (0.5, 1.928_571_428_571_428_6, 0.049_534_613_435_626_739_092),
        (1.0, 0.1, 0.904_837_418_035_959_568_14),
        (1.5, 3.0, 0.111_610_225_094_712_559_98),
        (2.0, 7.5, 0.004_701_217_146_256_585_456_4),
        (0.5, 10.0, 7.744_216_431_044_083_637_7e-6),
        (3.0, 2.0, 0.676_676_416_183_063_459_47),
        (5.0, 20.0, 0.000_016_944_743_930_067_383_904),
        (10.0, 3.0, 0.998_897_511_869_884_520_26),
        (25.0, 30.0, 0.157_242_027_238_391_603_54),
        (0.5, 1e-6, 0.998_871_621_209_030_763_65),
        (1.5, 0.75, 0.682_270_330_336_212_571_32),
    ];

    #[test]
    fn gamma_q_matches_reference() {
        for (a, x, want) in GAMMA_Q_REFERENCE {
            let got = regularized_gamma_q(a, x);
            assert!((got - want).abs() < 1e-10, "Q({a}, {x}) = {got}, want {want}");
            assert!((regularized_gamma_p(a, x) + got - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(s.mean, vec![1.0, 2.0]);
        assert_eq!(s.ci95_half_width, vec![0.0, 0.0]);
        let s = summarize(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(s.mean, vec![1.0]);
        // t(1) 97.5% quantile is 12.7062; sd = √2, se = 1
        assert!((s.ci95_half_width[0] - 12.706_204_736_174_7).abs() < 1e-6);
        assert!(matches!(
            summarize(&[vec![0.0], vec![]]),
            Err(Error::RaggedSeries)
        ));
        assert!(summarize(&[]).is_err());
        let single = summarize(&[vec![3.0]]).unwrap();
        assert_eq!(single.ci95_half_width, vec![0.0]);
    }

    #[test]
    fn summarize_mean_matches_compensated_sum() {
        let mut rng = crate::seed::rng(17);
        use rand::Rng;
        let runs: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..25).map(|_| rng.random_range(-1e3..1e3)).collect())
            .collect();
        let s = summarize(&runs).unwrap();
        for step in 0..25 {
            // Kahan oracle
            let (mut sum, mut comp) = (0.0f64, 0.0f64);
            for r in &runs {
                let y = r[step] - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            let want = sum / 50.0;
            assert!((s.mean[step] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.5, 4.0, 10.0];
        let up: Vec<f64> = x.iter().map(|v| v * v).collect();
        let down: Vec<f64> = x.iter().map(|v| -v).collect();
        let c = spearman(&x, &up).unwrap();
        assert_eq!((c.rho, c.p), (1.0, 0.0));
        assert_eq!(spearman(&x, &down).unwrap().rho, -1.0);
        assert!(matches!(
            spearman(&x, &[1.0; 5]),
            Err(Error::UndefinedCorrelation)
        ));
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spearman_with_ties_matches_reference() {
        // scipy.stats.spearmanr([1,2,2,3,4,5], [2,1,4,3,6,5])
        let c = spearman(&[1.0, 2.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 6.0, 5.0]).unwrap();
        let ranks_x = average_ranks(&[1.0, 2.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(ranks_x, vec![1.0, 2.5, 2.5, 4.0, 5.0, 6.0]);
        assert!((c.rho - 0.753_702_346_348_183).abs() < 1e-12, "{}", c.rho);
        assert!((c.p - 0.083_523_281_373_259_8).abs() < 1e-9, "{}", c.p);
    }

    #[test]
    fn kruskal_examples() {
        let same = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(same.h.abs() < 1e-12);
        let split = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![101.0, 102.0, 103.0]]).unwrap();
        assert!((split.h - 27.0 / 7.0).abs() < 1e-9);
        let flat = kruskal_wallis(&[vec![4.0, 4.0], vec![4.0]]).unwrap();
        assert_eq!((flat.h, flat.p), (0.0, 1.0));
        assert!(kruskal_wallis(&[vec![1.0]]).is_err());
        assert!(kruskal_wallis(&[vec![1.0], vec![]]).is_err());
    }

    proptest! {
        #[test]
        fn spearman_invariant_under_monotone_maps(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let Ok(c) = spearman(&x, &y) {
                let fx: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0 * v).collect();
                let gy: Vec<f64> = y.iter().map(|v| (v / 50.0).exp()).collect();
                let c2 = spearman(&fx, &gy).unwrap();
                prop_assert!((c.rho - c2.rho).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&c.rho));
            }
        }

        #[test]
        fn kruskal_invariant_under_monotone_maps(
            groups in proptest::collection::vec(proptest::collection::vec(0.0f64..10.0, 1..8), 2..5)
        ) {
            let a = kruskal_wallis(&groups).unwrap();
            let mapped: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|v| v.ln_1p() * 3.0 - 1.0).collect()).collect();
            let b = kruskal_wallis(&mapped).unwrap();
            prop_assert!((a.h - b.h).abs() < 1e-9);
        }

        #[test]
        fn summary_mean_permutation_invariant(
            runs in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 4), 2..10)
        ) {
            let a = summarize(&runs).unwrap();
            let mut rev = runs.clone();
            rev.reverse();
            let b = summarize(&rev).unwrap();
            for (x, y) in a.mean.iter().zip(&b.mean) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
