//! Univariate polynomials (ascending coefficient order) and companion-matrix root finding.

use nalgebra::DMatrix;

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = b.iter().map(|v| -v).collect();
    add(a, &neg)
}

/// Horner evaluation of the polynomial and its derivative.
pub fn eval_with_derivative(c: &[f64], x: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &coef in c.iter().rev() {
        dp = dp * x + p;
        p = p * x + coef;
    }
    (p, dp)
}

pub fn eval(c: &[f64], x: f64) -> f64 {
    eval_with_derivative(c, x).0
}

/// Real roots via the eigenvalues of the companion matrix.
///
/// Leading coefficients below `1e-14·max|c|` are trimmed. An eigenvalue is kept
/// as real when `|im| < 1e-8·max(1, |re|)`; kept roots are polished with a few
/// Newton steps, accepting a step only when it reduces `|p(x)|`.
pub fn real_roots(c: &[f64]) -> Vec<f64> {
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Vec::new();
    }
    let mut deg = c.len() - 1;
    while deg > 0 && c[deg].abs() <= 1e-14 * scale {
        deg -= 1;
    }
    if deg == 0 {
        return Vec::new();
    }
    let lead = c[deg];
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / lead;
    }
    let eig = comp.complex_eigenvalues();
    let poly = &c[..=deg];
    let mut roots: Vec<f64> = eig
        .iter()
        .filter(|z| z.im.abs() < 1e-8 * z.re.abs().max(1.0))
        .map(|z| polish(poly, z.re))
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

fn polish(c: &[f64], mut x: f64) -> f64 {
    let mut fx = eval(c, x).abs();
    for _ in 0..8 {
        let (p, dp) = eval_with_derivative(c, x);
        if dp == 0.0 || !dp.is_finite() {
            break;
        }
        let next = x - p / dp;
        let fn_ = eval(c, next).abs();
        if fn_ < fx {
            x = next;
            fx = fn_;
        } else {
            break;
        }
    }
    x
}
