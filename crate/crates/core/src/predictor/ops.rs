use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// Exact GELU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Borrowed GLU parameters: `w`, `v` are `h x g` row-major, `b`, `c` have length `g`.
#[derive(Debug, Clone, Copy)]
pub struct GluParams<'a> {
    pub w: &'a [f64],
    pub b: &'a [f64],
    pub v: &'a [f64],
    pub c: &'a [f64],
}

/// `(xW + b) * sigmoid(xV + c)`, elementwise.
pub fn glu(x: &[f64], p: GluParams<'_>) -> Result<Vec<f64>> {
    let h = x.len();
    let g = p.b.len();
    if p.c.len() != g {
        return Err(Error::DimensionMismatch { what: "glu gate bias", expected: g, found: p.c.len() });
    }
    for (what, m) in [("glu W", p.w), ("glu V", p.v)] {
        if m.len() != h * g {
            return Err(Error::DimensionMismatch { what, expected: h * g, found: m.len() });
        }
    }
    let u = affine(x, p.w, p.b);
    let v = affine(x, p.v, p.c);
    Ok(u.iter().zip(&v).map(|(u, v)| u * sigmoid(*v)).collect())
}

/// `x W + b` with `W` stored `x.len() x b.len()` row-major.
pub(crate) fn affine(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let cols = b.len();
    let mut out = b.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * cols..(i + 1) * cols];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
    out
}

/// Huber value for one residual.
pub fn huber(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Derivative of [`huber`] with respect to the residual.
pub fn huber_grad(residual: f64, delta: f64) -> f64 {
    if residual.abs() <= delta {
        residual
    } else {
        delta * residual.signum()
    }
}

/// Mean Huber loss over components.
pub fn huber_loss(pred: &[f64], target: &[f64], delta: f64) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch { what: "huber target", expected: pred.len(), found: target.len() });
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("huber delta must be positive, got {delta}")));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| huber(p - t, delta)).sum();
    Ok(sum / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Simpson's rule on the standard normal density from -12 to x.
    fn phi_by_quadrature(x: f64) -> f64 {
        let a = -12.0;
        let n = 20_000;
        let h = (x - a) / n as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(a) + f(x);
        for i in 1..n {
            let t = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
        }
        s * h / 3.0
    }

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841345).abs() < 1e-6);
        assert!((gelu(-1.0) + 0.158655).abs() < 1e-6);
        for x in [-3.0, -1.0, -0.2, 0.5, 1.0, 2.5] {
            assert!((gelu(x) - x * phi_by_quadrature(x)).abs() < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn gelu_odd_part_identity() {
        let mut x = -6.0;
        while x <= 6.0 {
            let lhs = gelu(x) + gelu(-x);
            let rhs = x * erf(x / std::f64::consts::SQRT_2);
            assert!((lhs - rhs).abs() <= 1e-9, "x = {x}");
            x += 0.01;
        }
    }

    #[test]
    fn gelu_grad_matches_finite_difference() {
        for x in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((gelu_grad(x) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn glu_values() {
        let zero = glu(&[0.0], GluParams { w: &[1.0], b: &[0.0], v: &[1.0], c: &[0.0] }).unwrap();
        assert_eq!(zero, vec![0.0]);
        let saturated = glu(&[2.0], GluParams { w: &[1.0], b: &[0.0], v: &[0.0], c: &[20.0] }).unwrap();
        assert!((saturated[0] - 2.0).abs() < 1e-8);
        let gated = glu(&[1.0], GluParams { w: &[1.0], b: &[0.0], v: &[1.0], c: &[0.0] }).unwrap();
        assert!((gated[0] - 0.731059).abs() < 1e-6);
        assert!(glu(&[1.0, 2.0], GluParams { w: &[1.0], b: &[0.0], v: &[1.0], c: &[0.0] }).is_err());
    }

    #[test]
    fn huber_values() {
        assert!((huber_loss(&[0.1], &[0.0], 0.3).unwrap() - 0.005).abs() < 1e-15);
        assert!((huber_loss(&[1.0], &[0.0], 0.3).unwrap() - 0.255).abs() < 1e-15);
        assert!((huber(0.3, 0.3) - 0.045).abs() < 1e-15);
        assert!((0.3 * (0.3 - 0.15) - 0.045_f64).abs() < 1e-15);
        let below = huber(0.3 - 1e-9, 0.3);
        let above = huber(0.3 + 1e-9, 0.3);
        assert!((below - above).abs() <= 1e-8);
        assert!(huber_loss(&[1.0], &[1.0, 2.0], 0.3).is_err());
        assert!(huber_loss(&[1.0], &[1.0], 0.0).is_err());
    }
}
