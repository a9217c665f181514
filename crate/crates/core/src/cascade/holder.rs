//! Hölder combinators: how a quadratic bound on pieces of a box turns into a
//! bound on the whole, paying for the leak across the cut.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::primitives::{le_window, QuadCert, ScalingFns};

/// Optimal conjugate pair for `A^2 p + x^2 q` subject to `1/p + 1/q = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderPair {
    pub p: f64,
    pub q: f64,
    pub min_value: f64,
}

/// Minimise `A^2 p + x^2 q` over conjugate exponents. The minimiser is
/// `p = 1 + x/A`, `q = 1 + A/x` with value `(A + x)^2`.
pub fn optimal_holder(a: f64, x: f64) -> Result<HolderPair> {
    if !(a > 0.0) {
        return Err(Error::DegenerateCoefficient(format!(
            "coefficient A = {a} must be positive"
        )));
    }
    if !(x > 0.0) {
        return Err(Error::InvalidArgument(format!("x = {x} must be positive")));
    }
    Ok(HolderPair {
        p: 1.0 + x / a,
        q: 1.0 + a / x,
        min_value: (a + x) * (a + x),
    })
}

/// Conjugate exponent `p / (p - 1)`.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

fn check_p(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "Hölder exponent p = {p} must exceed 1"
        )))
    }
}

fn require(cond: bool, what: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::OutsideWindow(what()))
    }
}

/// The halving bound without window checks:
/// `a p lambda^2 + C1 (p/(p-1)) lambda^2 / (2r)`.
pub fn halving_bound(a: f64, p: f64, leak_constant: f64, r: f64, lambda: f64) -> f64 {
    let l2 = lambda * lambda;
    a * p * l2 + leak_constant * conjugate(p) * l2 / (2.0 * r)
}

/// Bound the CGF of the doubled box `[-r, r] x B` at `lambda` from a certificate
/// on the half box `[0, r] x B` and the leak constant.
///
/// `cross_volume` is the volume of the cross-section `B` (ignored for `d = 1`).
pub fn halve_combine(
    cert_half: &QuadCert,
    p: f64,
    leak_constant: f64,
    r: f64,
    cross_volume: f64,
    dim: usize,
    lambda: f64,
) -> Result<f64> {
    check_p(p)?;
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "half side r = {r} must be positive"
        )));
    }
    let sc = ScalingFns::new(dim);
    let cross = if dim == 1 { 1.0 } else { cross_volume };
    if dim > 1 && !(cross > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "cross-section volume {cross} must exceed 1"
        )));
    }
    let arg = p * lambda / std::f64::consts::SQRT_2;
    require(cert_half.covers(arg), || {
        format!(
            "|p lambda / sqrt 2| = {} > delta = {}",
            arg.abs(),
            cert_half.delta
        )
    })?;
    let v = r * cross;
    let limit = (p - 1.0) / p * (2.0 * v).sqrt() / sc.log_cross(cross);
    let lhs = leak_constant * lambda.abs();
    require(le_window(lhs, limit), || {
        format!("C1 |lambda| = {lhs} > ((p-1)/p) sqrt(2v) log^-(d-1) vol B = {limit}")
    })?;
    Ok(halving_bound(cert_half.a, p, leak_constant, r, lambda))
}

/// The split upper bound without window checks.
pub fn split_upper_bound(
    a1: f64,
    a2: f64,
    a_leak: f64,
    r: f64,
    s: f64,
    p: f64,
    lambda: f64,
) -> f64 {
    let t = r + s;
    let pl2 = (p * lambda).powi(2);
    let leak_arg = conjugate(p) * lambda / t.sqrt();
    a1 * pl2 * r / t / p + a2 * pl2 * s / t / p + (p - 1.0) / p * a_leak * leak_arg * leak_arg
}

/// Upper bound on the CGF of `[-r, s] x B0` from certificates on the two
/// pieces and on the leak through the cut.
pub fn split_combine_upper(
    cert_b1: &QuadCert,
    cert_b2: &QuadCert,
    leak_cert: &QuadCert,
    r: f64,
    s: f64,
    p: f64,
    lambda: f64,
) -> Result<f64> {
    check_p(p)?;
    if !(r > 0.0 && s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "r = {r}, s = {s} must be positive"
        )));
    }
    let t = r + s;
    let arg1 = p * lambda * (r / t).sqrt();
    let arg2 = p * lambda * (s / t).sqrt();
    let leak_arg = conjugate(p) * lambda / t.sqrt();
    require(cert_b1.covers(arg1), || {
        format!(
            "|p lambda sqrt(r/(r+s))| = {} > delta_1 = {}",
            arg1.abs(),
            cert_b1.delta
        )
    })?;
    require(cert_b2.covers(arg2), || {
        format!(
            "|p lambda sqrt(s/(r+s))| = {} > delta_2 = {}",
            arg2.abs(),
            cert_b2.delta
        )
    })?;
    require(leak_cert.covers(leak_arg), || {
        format!(
            "|q lambda / sqrt(r+s)| = {} > leak delta = {}",
            leak_arg.abs(),
            leak_cert.delta
        )
    })?;
    Ok(split_upper_bound(
        cert_b1.a,
        cert_b2.a,
        leak_cert.a,
        r,
        s,
        p,
        lambda,
    ))
}

/// The split lower-side bound without window checks.
pub fn split_lower_bound(a: f64, a_leak: f64, r: f64, s: f64, p: f64, lambda: f64) -> f64 {
    let leak_arg = conjugate(p) * lambda / (r + s).sqrt();
    (p * lambda).powi(2) * a / p + (p - 1.0) / p * a_leak * leak_arg * leak_arg
}

/// Upper bound on `f_{B1}(lambda sqrt(r/(r+s))) + f_{B2}(lambda sqrt(s/(r+s)))`
/// from a certificate on the whole box and on the leak.
pub fn split_combine_lower(
    cert_b: &QuadCert,
    leak_cert: &QuadCert,
    r: f64,
    s: f64,
    p: f64,
    lambda: f64,
) -> Result<f64> {
    check_p(p)?;
    if !(r > 0.0 && s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "r = {r}, s = {s} must be positive"
        )));
    }
    let arg = p * lambda;
    let leak_arg = conjugate(p) * lambda / (r + s).sqrt();
    require(cert_b.covers(arg), || {
        format!("|p lambda| = {} > delta = {}", arg.abs(), cert_b.delta)
    })?;
    require(leak_cert.covers(leak_arg), || {
        format!(
            "|q lambda / sqrt(r+s)| = {} > leak delta = {}",
            leak_arg.abs(),
            leak_cert.delta
        )
    })?;
    Ok(split_lower_bound(cert_b.a, leak_cert.a, r, s, p, lambda))
}
