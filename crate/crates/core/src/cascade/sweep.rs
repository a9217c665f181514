use crate::error::{Error, Result};
use crate::primitives::{round_down, round_up, QuadCert};

/// One axis step of the uniform-goodness sweep: from a certificate `(a, delta)`
/// on the box with side `upper` along the current axis, and the lower-dimensional
/// leak certificate `(a0, delta0)`, certify every box whose side along that axis
/// lies in `[c, upper]`.
pub fn sweep_axis(cert: &QuadCert, lower: &QuadCert, c: f64, upper: f64) -> Result<QuadCert> {
    if !(c > 0.0 && c < upper) {
        return Err(Error::SweepRange { c, upper });
    }
    let a = 2.0 * cert.a * upper / c + 2.0 * lower.a / c;
    let delta = (cert.delta / 2.0 * (c / upper).sqrt()).min(lower.delta / 2.0 * c.sqrt());
    QuadCert::new(round_up(a), round_down(delta))
}

/// Uniform certificate for all boxes `[0, r_1] x ... x [0, r_d]` with every
/// `r_j` in `[c, upper]`, obtained by sweeping the axes one at a time starting
/// from a certificate on the cube `[0, upper]^d`.
pub fn uniform_good_sweep(
    cert_lower_dim: &QuadCert,
    cert_big_cube: &QuadCert,
    c: f64,
    upper: f64,
    dim: usize,
) -> Result<QuadCert> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    (0..dim).try_fold(*cert_big_cube, |cert, _| {
        sweep_axis(&cert, cert_lower_dim, c, upper)
    })
}

/// The lower-dimensional certificate used when `d = 1`, where the leak is a
/// single random variable with `log E exp(lambda Y) <= C1 lambda^2` for
/// `C1 |lambda| <= 1`.
pub fn scalar_leak_cert(leak_constant: f64) -> Result<QuadCert> {
    QuadCert::new(leak_constant, 1.0 / leak_constant)
}

/// Constant of the moderate regime:
/// `max(C, V^(1/d), 2a, C1 sqrt(a), 1 + tol)`.
pub fn moderate_constant(
    leak_constant: f64,
    a: f64,
    delta: f64,
    dim: usize,
    cascade_side: f64,
    volume_floor: f64,
) -> Result<f64> {
    if !(delta > 0.0) || dim == 0 {
        return Err(Error::InvalidArgument(
            "delta must be positive and dimension nonzero".into(),
        ));
    }
    let floor = 1.0 + 1e-9;
    let m = cascade_side
        .max(volume_floor.powf(1.0 / dim as f64))
        .max(2.0 * a)
        .max(leak_constant * a.sqrt())
        .max(floor);
    Ok(round_up(m))
}
