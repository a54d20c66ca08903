use crate::error::{ensure, Result};

/// Natural log of the gamma function (Lanczos, g = 7, n = 9), x > 0.
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability `P(|T| >= |t|)` of Student's t with `df`
/// degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    /// Differences had zero variance but nonzero mean; `p` is floored at
    /// the smallest positive double.
    pub degenerate: bool,
}

/// Two-sided paired t-test of `a` against `b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    ensure!(a.len() == b.len(), InvalidArgument, "paired samples differ in length: {} vs {}", a.len(), b.len());
    ensure!(a.len() >= 2, InvalidArgument, "paired t-test needs at least two pairs");
    ensure!(
        a.iter().chain(b).all(|v| v.is_finite()),
        InvalidArgument,
        "paired samples must be finite"
    );
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let df = d.len() - 1;
    if var == 0.0 {
        if mean == 0.0 {
            return Ok(TTest { t: 0.0, p: 1.0, df, degenerate: false });
        }
        return Ok(TTest {
            t: mean.signum() * f64::INFINITY,
            p: f64::MIN_POSITIVE,
            df,
            degenerate: true,
        });
    }
    let t = mean / (var / n).sqrt();
    let p = student_t_two_sided(t, df as f64).clamp(f64::MIN_POSITIVE, 1.0);
    Ok(TTest { t, p, df, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn textbook_diffs() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = paired_t_test(&a, &[0.0; 5]).unwrap();
        assert!((r.t - 3.0 / (2.5f64.sqrt() / 5f64.sqrt())).abs() < 1e-12);
        assert!((r.t - 4.243).abs() < 1e-3);
        assert!((r.p - 0.0132).abs() < 1e-4, "{}", r.p);
        assert_eq!(r.df, 4);
    }

    #[test]
    fn identical_and_degenerate() {
        let r = paired_t_test(&[80.0, 90.0], &[80.0, 90.0]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let r = paired_t_test(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(r.degenerate && r.p == f64::MIN_POSITIVE && r.t == f64::INFINITY);
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn tail_matches_reference_distribution() {
        for df in [1.0, 2.0, 3.0, 7.0, 19.0, 49.0, 200.0] {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            for t in [0.0, 0.1, 0.7, 1.5, 2.3, 4.0, 9.0] {
                let want = 2.0 * (1.0 - dist.cdf(t));
                let got = student_t_two_sided(t, df);
                assert!((got - want).abs() < 1e-10, "df {df} t {t}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn incomplete_beta_identities() {
        // I_x(1, 1) = x; I_x(a, b) = 1 - I_{1-x}(b, a)
        assert!((incomplete_beta(1.0, 1.0, 0.3) - 0.3).abs() < 1e-14);
        let (a, b, x) = (2.5, 0.5, 0.71);
        assert!((incomplete_beta(a, b, x) + incomplete_beta(b, a, 1.0 - x) - 1.0).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }
}
