//! Naive reference implementations. Each one enumerates or integrates
//! directly rather than sharing any formula with the library.

use std::collections::BTreeSet;

pub struct NaiveReport {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

fn div0(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Per-class scores from counting prediction pairs one by one.
pub fn class_report(y_true: &[u8], y_pred: &[u8]) -> NaiveReport {
    let labels: BTreeSet<u8> = y_true.iter().chain(y_pred).copied().collect();
    let mut r = NaiveReport { precision: vec![], recall: vec![], f1: vec![], macro_f1: 0.0, weighted_f1: 0.0, accuracy: 0.0 };
    for &l in &labels {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t == l, p == l) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                _ => {}
            }
        }
        let p = div0(tp, tp + fp);
        let rc = div0(tp, tp + fn_);
        let f = div0(2.0 * tp, 2.0 * tp + fp + fn_);
        r.precision.push(p);
        r.recall.push(rc);
        r.f1.push(f);
        r.weighted_f1 += f * (tp + fn_);
    }
    let n = y_true.len() as f64;
    r.macro_f1 = r.f1.iter().sum::<f64>() / labels.len() as f64;
    r.weighted_f1 /= n;
    r.accuracy = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count() as f64 / n;
    r
}

/// Agreement beyond chance from all n² index pairs.
pub fn kappa(y1: &[u8], y2: &[u8]) -> f64 {
    let n = y1.len() as f64;
    let po = y1.iter().zip(y2).filter(|(a, b)| a == b).count() as f64 / n;
    let mut pe = 0.0;
    for a in y1 {
        for b in y2 {
            if a == b {
                pe += 1.0;
            }
        }
    }
    pe /= n * n;
    if pe == 1.0 {
        return 1.0;
    }
    (po - pe) / (1.0 - pe)
}

/// Nominal alpha from enumerating ordered pairs of ratings: within units for
/// the observed disagreement, across all pairable ratings for the expected one.
pub fn alpha(units: &[Vec<Option<u8>>]) -> Option<f64> {
    let pairable: Vec<Vec<u8>> =
        units.iter().map(|u| u.iter().flatten().copied().collect::<Vec<_>>()).filter(|u| u.len() >= 2).collect();
    let pooled: Vec<u8> = pairable.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    if n <= 1.0 {
        return None;
    }
    let mut observed = 0.0;
    for u in &pairable {
        let w = 1.0 / (u.len() as f64 - 1.0);
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j && u[i] != u[j] {
                    observed += w;
                }
            }
        }
    }
    let mut expected = 0.0;
    for i in 0..pooled.len() {
        for j in 0..pooled.len() {
            if i != j && pooled[i] != pooled[j] {
                expected += 1.0;
            }
        }
    }
    if expected == 0.0 {
        return Some(1.0);
    }
    Some(1.0 - (observed / n) / (expected / (n * (n - 1.0))))
}

/// Composite Simpson's rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Upper tail of chi-squared with integer `dof`, integrating the density of
/// `u = sqrt(x)`, which is proportional to `u^(dof-1) exp(-u²/2)`.
pub fn chi2_sf(stat: f64, dof: u32) -> f64 {
    let g = |u: f64| u.powi(dof as i32 - 1) * (-u * u / 2.0).exp();
    let top = 40.0;
    let norm = simpson(g, 0.0, top, 40_000);
    let from = stat.max(0.0).sqrt();
    if from >= top {
        return 0.0;
    }
    simpson(g, from, top, 40_000) / norm
}

/// Two-sided Student t tail. With `s = sqrt(dof) tan θ` the density becomes
/// proportional to `cos^(dof-1) θ`; with `φ = π/2 - θ = w⁴` the remaining
/// integrand is smooth even for fractional `dof`.
pub fn t_two_sided(t: f64, dof: f64) -> f64 {
    let g = |w: f64| {
        let phi = w.powi(4);
        phi.sin().powf(dof - 1.0) * 4.0 * w.powi(3)
    };
    let upper = |phi_max: f64| simpson(g, 0.0, phi_max.powf(0.25), 20_000);
    let theta = (t.abs() / dof.sqrt()).atan();
    upper(std::f64::consts::FRAC_PI_2 - theta) / upper(std::f64::consts::FRAC_PI_2)
}
