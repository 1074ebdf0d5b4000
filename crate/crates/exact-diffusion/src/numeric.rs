//! Scalar numerical utilities: normal distribution special functions with
//! tail-stable log-space variants, an inverse-CDF truncated-normal sampler,
//! adaptive quadrature and monotone inversion.

use crate::error::{Error, Result};

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z - 0.5 * LN_2PI).exp()
}

/// Standard normal CDF via the complementary error function, accurate in
/// both tails down to the underflow threshold.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// log of the standard normal CDF. Switches to the Mills-ratio asymptotic
/// expansion once `erfc` itself would underflow.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z > -37.0 {
        norm_cdf(z).ln()
    } else {
        // log Phi(z) = -z^2/2 - ln(-z) - ln(2*pi)/2 + ln(1 - 1/z^2 + 3/z^4 - ...)
        let zi = 1.0 / (z * z);
        let series = 1.0 - zi * (1.0 - 3.0 * zi * (1.0 - 5.0 * zi * (1.0 - 7.0 * zi)));
        -0.5 * z * z - (-z).ln() - 0.5 * LN_2PI + series.ln()
    }
}

/// Inverse of the standard normal CDF (Wichura's PPND16 rational
/// approximation, good to full double precision over the whole range).
pub fn norm_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "norm_quantile: p out of (0,1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
            + 6.726_577_092_700_870_1e4)
            * r
            + 4.592_195_393_154_987_1e4)
            * r
            + 1.373_169_376_550_946_1e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_854_6e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        let r = r - 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_9e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_8e-15 * r + 1.421_511_758_316_445_9e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 { -val } else { val }
}

/// Inverse of `log_norm_cdf`. Falls back to Newton refinement on the
/// asymptotic expansion when the probability underflows f64.
pub fn norm_quantile_from_log(lp: f64) -> f64 {
    assert!(lp < 0.0, "norm_quantile_from_log: lp must be negative");
    let p = lp.exp();
    if p > 1e-300 && p < 1.0 {
        return norm_quantile(p);
    }
    // Initial guess from log Phi(z) ~ -z^2/2 - ln(-z) - ln(2 pi)/2.
    let mut z = -(-2.0 * (lp + 0.5 * (-2.0 * lp).ln().max(0.0))).sqrt();
    if !z.is_finite() {
        z = -(-2.0 * lp).sqrt();
    }
    for _ in 0..6 {
        let g = log_norm_cdf(z) - lp;
        // d/dz log Phi(z) = pdf/cdf, computed in log space.
        let dlog = (-0.5 * z * z - 0.5 * LN_2PI - log_norm_cdf(z)).exp();
        if !dlog.is_finite() || dlog == 0.0 {
            break;
        }
        z -= g / dlog;
    }
    z
}

/// Exact draw from a normal distribution truncated to `[lo, hi]`, by CDF
/// inversion. Intervals lying entirely beyond ~8 sigma of the mean (or with
/// vanishing probability mass) are handled in log space so the draw stays
/// exact at extreme truncations.
pub fn sample_truncated_normal<R: rand::Rng + ?Sized>(
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(hi > lo) || !(sd > 0.0) {
        return Err(Error::Precondition(format!(
            "truncated normal needs lo < hi and sd > 0, got lo={lo}, hi={hi}, sd={sd}"
        )));
    }
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let u: f64 = rng.random();
    // Work in the lower tail; reflect if the interval sits in the upper one.
    let z = if a > 0.0 {
        -std_truncnorm_lower(-b, -a, u)
    } else {
        std_truncnorm_lower(a, b, u)
    };
    Ok((mean + sd * z).clamp(lo, hi))
}

fn std_truncnorm_lower(a: f64, b: f64, u: f64) -> f64 {
    let pa = norm_cdf(a);
    let pb = norm_cdf(b);
    if b <= -8.0 || pb - pa < 1e-12 {
        let la = log_norm_cdf(a);
        let lb = log_norm_cdf(b);
        let d = (la - lb).min(0.0);
        // lp = log( e^la + u (e^lb - e^la) ) relative to lb
        let lp = lb + (d.exp() + u * (-d.exp_m1())).ln();
        norm_quantile_from_log(lp).clamp(a, b)
    } else {
        norm_quantile((pa + u * (pb - pa)).clamp(f64::MIN_POSITIVE, 1.0 - 1e-16)).clamp(a, b)
    }
}

/// Adaptive Simpson quadrature.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fa = f(lo);
    let fb = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    let v = simpson_rec(f, lo, hi, fa, fm, fb, whole, tol, 60)?;
    Ok(sign * v)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a) < 1e-14 {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numerical(format!(
            "adaptive quadrature failed to converge on [{a}, {b}]"
        )));
    }
    Ok(simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
}

/// Solve f(x) = target for a strictly increasing f, expanding a bracket
/// around `x0` and bisecting.
pub fn invert_monotone<F: Fn(f64) -> Result<f64>>(f: &F, target: f64, x0: f64) -> Result<f64> {
    let mut lo = x0;
    let mut hi = x0;
    let mut step = 1.0_f64.max(x0.abs() * 0.1);
    let mut flo = f(lo)?;
    let mut fhi = flo;
    for _ in 0..200 {
        if flo <= target && fhi >= target {
            break;
        }
        if flo > target {
            lo -= step;
            flo = f(lo)?;
        }
        if fhi < target {
            hi += step;
            fhi = f(hi)?;
        }
        step *= 2.0;
    }
    if !(flo <= target && fhi >= target) {
        return Err(Error::Numerical(format!(
            "could not bracket target {target} for monotone inversion"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Draw from Exp(rate); rate 0 is an infinite holding time.
pub fn sample_exp<R: rand::Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Draw a Poisson count with the given nonnegative rate.
pub fn sample_poisson<R: rand::Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<u64> {
    if rate < 0.0 {
        return Err(Error::Precondition(format!("Poisson rate {rate} < 0")));
    }
    if rate == 0.0 {
        return Ok(0);
    }
    use rand_distr::Distribution;
    let d = rand_distr::Poisson::new(rate)
        .map_err(|e| Error::Precondition(format!("Poisson rate {rate}: {e}")))?;
    Ok(d.sample(rng) as u64)
}

/// Standard normal draw.
pub fn sample_std_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    use rand_distr::Distribution;
    rand_distr::StandardNormal.sample(rng)
}
