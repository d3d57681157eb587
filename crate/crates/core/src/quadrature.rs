//! Double-exponential (tanh-sinh) quadrature, used as an oracle for the
//! closed-form KL terms. Nothing here calls into `specfun`.

use std::f64::consts::PI;

/// A node of the unit-interval rule with precise endpoint distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitPoint {
    pub x: f64,
    /// `1 − x`, computed without cancellation.
    pub one_minus_x: f64,
    pub ln_x: f64,
    pub ln_one_minus_x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    /// Difference between the last two refinement levels.
    pub error_estimate: f64,
    pub levels: usize,
}

const T_MAX: f64 = 4.5;
const MAX_LEVELS: usize = 12;

/// `ln(1 + e^s)` without overflow.
fn log1p_exp(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

fn unit_node(t: f64) -> (UnitPoint, f64) {
    let s = PI * t.sinh();
    let ln_x = -log1p_exp(-s);
    let ln_one_minus_x = -log1p_exp(s);
    let point = UnitPoint {
        x: ln_x.exp(),
        one_minus_x: ln_one_minus_x.exp(),
        ln_x,
        ln_one_minus_x,
    };
    // dx/dt = π·cosh t · x(1−x)
    let weight = PI * t.cosh() * point.x * point.one_minus_x;
    (point, weight)
}

/// Integrates `f` over `(0, 1)`, halving the step until successive levels
/// agree to `tol` (relative to `max(1, |I|)`). Integrable endpoint
/// singularities are fine; `f` is never evaluated at 0 or 1.
pub fn integrate_unit<F: FnMut(UnitPoint) -> f64>(mut f: F, tol: f64) -> QuadResult {
    let mut h = 0.5;
    let mut sum = {
        let (p, w) = unit_node(0.0);
        w * f(p)
    };
    let mut k = 1;
    while k as f64 * h <= T_MAX {
        for t in [k as f64 * h, -(k as f64) * h] {
            let (p, w) = unit_node(t);
            if w > 0.0 {
                sum += w * f(p);
            }
        }
        k += 1;
    }
    let mut estimate = h * sum;
    let mut error = f64::INFINITY;
    let mut levels = 1;
    while levels < MAX_LEVELS {
        h *= 0.5;
        // new nodes are the odd multiples of the halved step
        let mut k = 1;
        while k as f64 * h <= T_MAX {
            for t in [k as f64 * h, -(k as f64) * h] {
                let (p, w) = unit_node(t);
                if w > 0.0 {
                    sum += w * f(p);
                }
            }
            k += 2;
        }
        let next = h * sum;
        error = (next - estimate).abs();
        estimate = next;
        levels += 1;
        if error <= tol * estimate.abs().max(1.0) {
            break;
        }
    }
    QuadResult {
        value: estimate,
        error_estimate: error,
        levels,
    }
}

/// Integrates a smooth `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> QuadResult {
    let width = b - a;
    let mut r = integrate_unit(|p| f(a + width * p.x), tol);
    r.value *= width;
    r.error_estimate *= width;
    r
}

/// `KL(Beta(a, b) ‖ Beta(1, 1))` by quadrature of the unnormalized density
/// `u = x^{a−1}(1−x)^{b−1}`: `E_q[ln u] − ln Z` with `Z = ∫u`.
pub fn beta_kl_uniform(a: f64, b: f64) -> f64 {
    let ln_u = |p: UnitPoint| (a - 1.0) * p.ln_x + (b - 1.0) * p.ln_one_minus_x;
    let z = integrate_unit(|p| ln_u(p).exp(), 1e-15).value;
    let moment = integrate_unit(
        |p| {
            let l = ln_u(p);
            l.exp() * l
        },
        1e-15,
    )
    .value;
    moment / z - z.ln()
}

/// `KL(N(μ, σ²) ‖ N(0, 1))` by quadrature over `μ ± 15σ`.
pub fn gaussian_kl_standard(mu: f64, sigma: f64) -> f64 {
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    integrate(
        |x| {
            let u = (x - mu) / sigma;
            let log_ratio = -0.5 * u * u - sigma.ln() + 0.5 * x * x;
            norm * (-0.5 * u * u).exp() * log_ratio
        },
        mu - 15.0 * sigma,
        mu + 15.0 * sigma,
        1e-15,
    )
    .value
}
