//! Statistical tests backing the validation and acceptance suites:
//! Kolmogorov-Smirnov one- and two-sample tests, a chi-square goodness of
//! fit, and an energy-distance permutation test for joint laws.

use rand::Rng;

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} e^{-2 k^2 lambda^2}.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..101 {
        let kk = k as f64;
        let term = (-2.0 * kk * kk * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample KS test against an analytic CDF. Returns `(statistic, p)`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> (f64, f64) {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    (d, ks_p_value(d, n))
}

/// Two-sample KS test. Returns `(statistic, p)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (sa.len(), sb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        // advance both sides past the smallest pooled value, so the CDFs
        // are compared at actual sample points even under heavy ties
        let v = sa[i].min(sb[j]);
        while i < n && sa[i] <= v {
            i += 1;
        }
        while j < m && sb[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n as f64 * m as f64) / (n as f64 + m as f64);
    (d, ks_p_value(d, n_eff))
}

/// Regularised upper incomplete gamma Q(a, x), by series or continued
/// fraction.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        // P(a,x) by series
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..500 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-15 {
                break;
            }
        }
        let log_p = -x + a * x.ln() - ln_gamma(a);
        (1.0 - sum * log_p.exp()).clamp(0.0, 1.0)
    } else {
        // Q(a,x) by Lentz continued fraction
        let mut b = x + 1.0 - a;
        let mut c = 1e308;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < 1e-290 {
                d = 1e-290;
            }
            c = b + an / c;
            if c.abs() < 1e-290 {
                c = 1e-290;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-15 {
                break;
            }
        }
        let log_q = -x + a * x.ln() - ln_gamma(a);
        (log_q.exp() * h).clamp(0.0, 1.0)
    }
}

fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Chi-square goodness of fit for binned counts against expected masses.
/// Returns `(statistic, p)`; `dof_loss` accounts for estimated parameters.
pub fn chi2_gof(observed: &[f64], expected: &[f64], dof_loss: usize) -> (f64, f64) {
    assert_eq!(observed.len(), expected.len());
    let mut stat = 0.0;
    let mut dof = 0usize;
    for (&o, &e) in observed.iter().zip(expected) {
        if e > 0.0 {
            stat += (o - e) * (o - e) / e;
            dof += 1;
        }
    }
    let dof = dof.saturating_sub(1 + dof_loss).max(1);
    (stat, gamma_q(dof as f64 / 2.0, stat / 2.0))
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}

fn energy_stat(pool: &[(f64, f64)], idx: &[usize], n: usize) -> f64 {
    // first n indices belong to sample A, the rest to sample B
    let m = idx.len() - n;
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..idx.len() {
        for j in (i + 1)..idx.len() {
            let d = dist2(pool[idx[i]], pool[idx[j]]);
            match (i < n, j < n) {
                (true, true) => aa += d,
                (false, false) => bb += d,
                _ => ab += d,
            }
        }
    }
    2.0 * ab / (n * m) as f64 - 2.0 * aa / (n * n) as f64 - 2.0 * bb / (m * m) as f64
}

/// Energy-distance permutation test for equality of two bivariate laws.
/// Coordinates are standardised on the pooled sample; the p-value is the
/// (add-one) fraction of permutations with a statistic at least as large.
pub fn energy_permutation_test<R: Rng + ?Sized>(
    a: &[(f64, f64)],
    b: &[(f64, f64)],
    n_perm: usize,
    rng: &mut R,
) -> (f64, f64) {
    let mut pool: Vec<(f64, f64)> = a.iter().chain(b.iter()).copied().collect();
    // standardise both coordinates on the pooled sample
    for coord in 0..2 {
        let vals: Vec<f64> =
            pool.iter().map(|p| if coord == 0 { p.0 } else { p.1 }).collect();
        let (mean, var) = mean_var(&vals);
        let sd = var.sqrt().max(1e-12);
        for p in pool.iter_mut() {
            if coord == 0 {
                p.0 = (p.0 - mean) / sd;
            } else {
                p.1 = (p.1 - mean) / sd;
            }
        }
    }
    let n = a.len();
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    let observed = energy_stat(&pool, &idx, n);
    let mut at_least = 1usize;
    for _ in 0..n_perm {
        // Fisher-Yates shuffle
        for i in (1..idx.len()).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        if energy_stat(&pool, &idx, n) >= observed {
            at_least += 1;
        }
    }
    (observed, at_least as f64 / (n_perm + 1) as f64)
}
