//! Independent reference computations for tests.
//!
//! Nothing here calls into `sade-core`. Each function recomputes a quantity
//! by a different route than the implementation: exact gamma sums and
//! numerical quadrature for t-distribution tails, direct table lookups for
//! mock scores, and position bookkeeping for shuffles.

use std::collections::HashMap;
use std::f64::consts::PI;

/// `ln Γ(k / 2)` for integer `k >= 1`, by exact factorial products.
pub fn ln_gamma_half(k: u32) -> f64 {
    assert!(k >= 1);
    if k.is_multiple_of(2) {
        (1..k / 2).map(|j| (j as f64).ln()).sum()
    } else {
        0.5 * PI.ln()
            + (1..=(k - 1) / 2)
                .map(|j| ((2 * j - 1) as f64 / 2.0).ln())
                .sum::<f64>()
    }
}

/// Student t density with integer degrees of freedom.
pub fn t_pdf(x: f64, df: u32) -> f64 {
    let nu = df as f64;
    let ln_c = ln_gamma_half(df + 1) - ln_gamma_half(df) - 0.5 * (nu * PI).ln();
    (ln_c - (nu + 1.0) / 2.0 * (1.0 + x * x / nu).ln()).exp()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Two-sided p-value `P(|T| >= |t|)` by quadrature of the density.
///
/// For `|t| < 1` integrates the body, otherwise the tail under the
/// substitution `x = |t| / u`.
pub fn t_two_sided_p(t: f64, df: u32) -> f64 {
    let a = t.abs();
    if a == 0.0 {
        return 1.0;
    }
    const PANELS: usize = 400_000;
    if a < 1.0 {
        1.0 - 2.0 * simpson(|x| t_pdf(x, df), 0.0, a, PANELS)
    } else {
        // At u = 0 the integrand tends to 1/(πa) for df = 1 and to 0 otherwise.
        let at_zero = if df == 1 { 1.0 / (PI * a) } else { 0.0 };
        let tail = simpson(
            |u| {
                if u == 0.0 {
                    at_zero
                } else {
                    t_pdf(a / u, df) * a / (u * u)
                }
            },
            0.0,
            1.0,
            PANELS,
        );
        2.0 * tail
    }
}

/// Textbook one-sample t statistic and degrees of freedom.
pub fn t_statistic(xs: &[f64]) -> (f64, u32) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean / (var / n).sqrt(), xs.len() as u32 - 1)
}

/// Mean natural-log probability of `tokens` under a unigram table whose
/// leftover mass `1 - Σp` is split over `unknown_slots` unseen tokens.
pub fn unigram_mean_logprob(
    table: &HashMap<String, f64>,
    unknown_slots: u32,
    tokens: &[String],
) -> f64 {
    let leftover = 1.0 - table.values().sum::<f64>();
    let total: f64 = tokens
        .iter()
        .map(|t| match table.get(&t.to_lowercase()) {
            Some(p) => p.ln(),
            None => (leftover / unknown_slots as f64).ln(),
        })
        .sum();
    total / tokens.len() as f64
}

fn sorted<T: Ord + Clone>(xs: impl IntoIterator<Item = T>) -> Vec<T> {
    let mut v: Vec<T> = xs.into_iter().collect();
    v.sort();
    v
}

/// Checks a shuffle output against its input using only positions.
///
/// `movable_content` marks noun/adjective positions of the input. `strategy`
/// is one of `nouns-adj`, `all-but-nouns-adj`, `within-trigrams`,
/// `trigrams`.
pub fn check_shuffle(
    input: &[String],
    movable_content: &[bool],
    strategy: &str,
    output: &[String],
) -> Result<(), String> {
    if input.len() != output.len() || sorted(input) != sorted(output) {
        return Err("token multiset changed".into());
    }
    let n = input.len();
    match strategy {
        "nouns-adj" | "all-but-nouns-adj" => {
            let moving = strategy == "nouns-adj";
            for i in 0..n {
                if movable_content[i] != moving && input[i] != output[i] {
                    return Err(format!("position {i} should be fixed"));
                }
            }
            let pick = |v: &[String]| {
                sorted(
                    (0..n)
                        .filter(|&i| movable_content[i] == moving)
                        .map(|i| v[i].clone()),
                )
            };
            if pick(input) != pick(output) {
                return Err("movable positions do not hold the movable tokens".into());
            }
            Ok(())
        }
        "within-trigrams" => {
            for start in (0..n).step_by(3) {
                let end = (start + 3).min(n);
                if sorted(&input[start..end]) != sorted(&output[start..end]) {
                    return Err(format!("group at {start} not a permutation of itself"));
                }
            }
            Ok(())
        }
        "trigrams" => {
            let groups: Vec<&[String]> = input.chunks(3).collect();
            let mut used = vec![false; groups.len()];
            if tile(output, &groups, &mut used) {
                Ok(())
            } else {
                Err("output is not a concatenation of intact input trigrams".into())
            }
        }
        other => Err(format!("unknown strategy {other}")),
    }
}

fn tile(rest: &[String], groups: &[&[String]], used: &mut [bool]) -> bool {
    if rest.is_empty() {
        return used.iter().all(|u| *u);
    }
    for g in 0..groups.len() {
        if !used[g] && rest.starts_with(groups[g]) {
            used[g] = true;
            if tile(&rest[groups[g].len()..], groups, used) {
                return true;
            }
            used[g] = false;
        }
    }
    false
}

/// True if `sub` can be obtained from `full` by deleting elements.
pub fn is_subsequence<T: PartialEq>(sub: &[T], full: &[T]) -> bool {
    let mut it = full.iter();
    sub.iter().all(|s| it.any(|f| f == s))
}
