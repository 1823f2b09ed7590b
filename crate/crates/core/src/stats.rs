//! Descriptive statistics and the one-sample t-test.
//!
//! The two-sided p-value of a Student t statistic with `ν` degrees of freedom
//! is `I_{ν/(ν+t²)}(ν/2, 1/2)`, where `I` is the regularized incomplete beta
//! function, evaluated here by Lentz's continued fraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    OneSampleT,
}

/// Two-sided test of `mean == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Real"))]
pub struct TestResult<F = f64> {
    /// `None` when the sample variance is zero and the mean is not.
    pub statistic: Option<F>,
    pub p_value: F,
    pub kind: TestKind,
    pub df: usize,
}

pub fn mean<F: Real>(xs: &[F]) -> Option<F> {
    (!xs.is_empty()).then(|| xs.iter().copied().sum::<F>() / F::from_count(xs.len()))
}

/// Sample standard deviation (`n - 1` denominator).
pub fn stdev<F: Real>(xs: &[F]) -> Option<F> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: F = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    Some((ss / F::from_count(xs.len() - 1)).sqrt())
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
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

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<F: Real>(x: F) -> F {
    let half = F::lit(0.5);
    if x < half {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = F::lit(std::f64::consts::PI);
        return (pi / (pi * x).sin()).abs().ln() - ln_gamma(F::one() - x);
    }
    let x = x - F::one();
    let mut acc = F::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + F::lit(c) / (x + F::from_count(i));
    }
    let t = x + F::lit(LANCZOS_G) + half;
    F::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + acc.ln()
}

fn beta_continued_fraction<F: Real>(x: F, a: F, b: F) -> F {
    const MAX_ITER: usize = 1000;
    let tiny = F::min_positive_value() / F::epsilon();
    let eps = F::epsilon();
    let one = F::one();
    let two = F::lit(2.0);

    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = F::from_count(m);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h = h * del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)` for `a, b > 0`.
pub fn inc_beta<F: Real>(x: F, a: F, b: F) -> F {
    if x.is_nan() || a <= F::zero() || b <= F::zero() {
        return F::nan();
    }
    if x <= F::zero() {
        return F::zero();
    }
    if x >= F::one() {
        return F::one();
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (F::one() - x).ln();
    let front = ln_front.exp();
    if x < (a + F::one()) / (a + b + F::lit(2.0)) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        F::one() - front * beta_continued_fraction(F::one() - x, b, a) / b
    }
}

/// Two-sided tail probability `P(|T| >= |t|)` for Student's t with `df`
/// degrees of freedom.
pub fn student_t_two_sided<F: Real>(t: F, df: F) -> F {
    if t.is_infinite() {
        return F::zero();
    }
    let x = df / (df + t * t);
    inc_beta(x, df * F::lit(0.5), F::lit(0.5))
}

/// Two-sided one-sample t-test of the mean against zero.
///
/// Zero-variance samples are decided directly: `p = 1` when the mean is
/// zero and `p = 0` otherwise.
pub fn one_sample_t_test<F: Real>(xs: &[F]) -> Result<TestResult<F>, StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::TooFewSamples {
            needed: 2,
            got: xs.len(),
        });
    }
    let n = xs.len();
    let df = n - 1;
    let m = mean(xs).expect("non-empty");
    let s = stdev(xs).expect("n >= 2");
    let kind = TestKind::OneSampleT;
    if s == F::zero() {
        return Ok(if m == F::zero() {
            TestResult {
                statistic: Some(F::zero()),
                p_value: F::one(),
                kind,
                df,
            }
        } else {
            TestResult {
                statistic: None,
                p_value: F::zero(),
                kind,
                df,
            }
        });
    }
    let t = m / (s / F::from_count(n).sqrt());
    Ok(TestResult {
        statistic: Some(t),
        p_value: student_t_two_sided(t, F::from_count(df)),
        kind,
        df,
    })
}
