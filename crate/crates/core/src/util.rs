//! Small numeric helpers shared across modules.

/// `ln(n!)` for `n = 0..=max`.
pub(crate) fn ln_factorials(max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for n in 1..=max {
        acc += (n as f64).ln();
        out.push(acc);
    }
    out
}

/// `sqrt(C(n, k))` from a log-factorial table.
#[inline]
pub(crate) fn sqrt_binomial(lnf: &[f64], n: usize, k: usize) -> f64 {
    (0.5 * (lnf[n] - lnf[k] - lnf[n - k])).exp()
}

/// Sample mean and (population) variance.
pub fn mean_var(xs: impl IntoIterator<Item = f64>) -> (f64, f64) {
    // Welford
    let mut n = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in xs {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    if n == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    (mean, m2 / n)
}

/// Standard error of a sample variance, from the fourth central moment.
pub fn variance_std_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mean, var) = mean_var(xs.iter().copied());
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    ((m4 - var * var) / n).max(0.0).sqrt()
}

/// Squeezing in dB, `-10 log10(var_y)`.
pub fn db_squeezing(var_y: f64) -> f64 {
    -10.0 * var_y.log10()
}

/// Anti-squeezing in dB, `10 log10(var_x)`.
pub fn db_anti_squeezing(var_x: f64) -> f64 {
    10.0 * var_x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorials() {
        let t = ln_factorials(10);
        assert!((t[5] - 120f64.ln()).abs() < 1e-12);
        assert!((sqrt_binomial(&t, 4, 2) - 6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        let (m, v) = mean_var(xs);
        assert!((m - 3.5).abs() < 1e-12);
        assert!((v - 5.25).abs() < 1e-12);
    }
}
