//! Lattice cell fields. Each unit cell `z + [0,1)^d` carries an i.i.d.
//! variable `xi_z`; box integrals are finite weighted sums, and splits and
//! leaks are realised exactly by swapping in independent copies of cells.

mod law;
mod model;

pub use law::Law;
pub use model::{derive_seed, FieldKind, FieldModel, Realisation, RngStream, SplitSpec};

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::mgf;
use crate::primitives::BoxSpec;

/// `sum_z w(z) xi_z` for the original field, reading cells from `stream`.
pub fn sample_box_integral(model: &FieldModel, b: &BoxSpec, stream: &RngStream) -> Result<f64> {
    model.coupled_integral(b, stream, None, Realisation::Original)
}

/// Leak of the cut `x_axis = r` of `[a, b] x crossbox`, where `crossbox`
/// lists the remaining axes in order (`None` when `d = 1`).
pub fn sample_leak(
    model: &FieldModel,
    axis: usize,
    r: f64,
    a: f64,
    b: f64,
    crossbox: Option<&BoxSpec>,
    stream: &RngStream,
) -> Result<f64> {
    if !(a < r && r < b) {
        return Err(Error::InvalidArgument(format!(
            "need a < r < b, got {a}, {r}, {b}"
        )));
    }
    let whole = BoxSpec::with_axis(crossbox, axis, (a, b))?;
    model.coupled_leak(&whole, &SplitSpec { axis, r }, stream)
}

/// Shifts `k / per_axis` in `[0, 1)^d`.
pub fn shift_grid(dim: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..per_axis).map(move |k| {
                    let mut t = s.clone();
                    t.push(k as f64 / per_axis as f64);
                    t
                })
            })
            .collect();
    }
    out
}

/// Largest exact normalized CGF over the shifted boxes, `None` if the cell
/// MGF is not available at the required argument.
pub fn shifted_sup_cgf(
    model: &FieldModel,
    b: &BoxSpec,
    lambda: f64,
    shifts: &[Vec<f64>],
) -> Result<Option<f64>> {
    let mut best: f64 = 0.0;
    for s in shifts {
        match model.exact_cgf(&b.shifted(s), lambda)? {
            Some(v) => best = best.max(v),
            None => return Ok(None),
        }
    }
    Ok(Some(best))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentCheck {
    /// Largest `E exp(eps |int_{B+s} X|)` (or its upper confidence bound) over shifts.
    pub worst: f64,
    pub exact: bool,
    pub pass: bool,
}

const MAX_ENUMERATED_ATOMS: usize = 1 << 16;

/// Exact law of `sum w_i xi_i` for discrete cells, if small enough to list.
fn enumerate_weighted_sum(atoms: &[(f64, f64)], weights: &[f64]) -> Option<Vec<(f64, f64)>> {
    let mut dist = vec![(0.0, 1.0)];
    for &w in weights {
        if dist.len() * atoms.len() > MAX_ENUMERATED_ATOMS {
            return None;
        }
        dist = dist
            .iter()
            .flat_map(|&(x, p)| atoms.iter().map(move |&(y, q)| (x + w * y, p * q)))
            .collect();
    }
    Some(dist)
}

/// Checks `E exp(eps |int_{B+s} X|) <= 2` over the shifted reference boxes.
/// Gaussian and small discrete instances are computed exactly; the rest use
/// the 95% upper confidence bound from `samples` draws.
pub fn verify_reference_moment(
    model: &FieldModel,
    refbox: &BoxSpec,
    eps: f64,
    shifts: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<MomentCheck> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps = {eps} must be positive"
        )));
    }
    let mut worst: f64 = 0.0;
    let mut exact = true;
    for (i, s) in shifts.iter().enumerate() {
        let b = refbox.shifted(s);
        let value = if let Some(sigma) = model.law.gaussian_sigma() {
            let tau = sigma * model.sum_sq_weights(&b)?.sqrt();
            let t = eps * tau;
            2.0 * (0.5 * t * t).exp() * Normal::new(0.0, 1.0).expect("unit normal").cdf(t)
        } else if let Some(dist) = model.law.atoms().and_then(|atoms| {
            let weights: Vec<f64> = model
                .weight_classes(&b)
                .ok()?
                .iter()
                .flat_map(|&(w, n)| std::iter::repeat_n(w, n as usize))
                .collect();
            enumerate_weighted_sum(&atoms, &weights)
        }) {
            dist.iter().map(|&(x, p)| p * (eps * x.abs()).exp()).sum()
        } else {
            exact = false;
            let scale = b.volume().sqrt();
            let vals: Vec<f64> = model
                .normalized_samples(&b, samples, seed.wrapping_add(i as u64))?
                .iter()
                .map(|x| (eps * scale * x.abs()).exp())
                .collect();
            mgf::upper_mean(&vals, mgf::DEFAULT_CONFIDENCE, mgf::DEFAULT_BATCHES)?.1
        };
        worst = worst.max(value);
    }
    let tol = if exact { 1e-12 } else { 0.0 };
    Ok(MomentCheck {
        worst,
        exact,
        pass: worst <= 2.0 + tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_moment_examples() {
        let unit = BoxSpec::cube(1, 1.0).unwrap();
        let none = vec![vec![0.0]];
        let tp = FieldModel::new(1, FieldKind::Cell, Law::symmetric_two_point(2f64.ln())).unwrap();
        let c = verify_reference_moment(&tp, &unit, 1.0, &none, 0, 0).unwrap();
        assert!(c.pass && c.exact);
        assert_relative_eq!(c.worst, 2.0, epsilon = 1e-15);
        let g = FieldModel::new(1, FieldKind::Cell, Law::Gaussian { sigma: 1.0 }).unwrap();
        let c = verify_reference_moment(&g, &unit, 0.1, &none, 0, 0).unwrap();
        assert!(c.pass);
        assert!((c.worst - 1.08506).abs() < 1e-5);
        assert!(
            !verify_reference_moment(&g, &unit, 10.0, &none, 0, 0)
                .unwrap()
                .pass
        );
    }

    #[test]
    fn shifted_two_point_is_exact() {
        let tp = FieldModel::new(2, FieldKind::Cell, Law::symmetric_two_point(0.5)).unwrap();
        let unit = BoxSpec::cube(2, 1.0).unwrap();
        let c = verify_reference_moment(&tp, &unit, 1.0, &shift_grid(2, 4), 0, 0).unwrap();
        assert!(c.exact && c.pass);
        // integer shift is the worst case for a convex functional of the integral
        assert_relative_eq!(c.worst, 0.5f64.exp(), epsilon = 1e-12);
    }

    #[test]
    fn monte_carlo_moment_for_exponential() {
        let m =
            FieldModel::new(1, FieldKind::Cell, Law::CenteredExponential { rate: 1.0 }).unwrap();
        let unit = BoxSpec::cube(1, 1.0).unwrap();
        let eps = m.moment_scale().unwrap() * 0.8;
        let c = verify_reference_moment(&m, &unit, eps, &shift_grid(1, 4), 100_000, 7).unwrap();
        assert!(!c.exact && c.pass, "{c:?}");
    }

    #[test]
    fn shifted_sup_attained_at_integer_alignment() {
        let g = FieldModel::new(2, FieldKind::Cell, Law::Gaussian { sigma: 1.0 }).unwrap();
        let b = BoxSpec::from_sides(&[3.0, 2.0]).unwrap();
        let shifts = shift_grid(2, 32);
        assert_eq!(shifts.len(), 1024);
        let sup = shifted_sup_cgf(&g, &b, 0.7, &shifts).unwrap().unwrap();
        assert_relative_eq!(sup, 0.5 * 0.49, epsilon = 1e-14);
        assert_eq!(shifted_sup_cgf(&g, &b, 0.0, &shifts).unwrap(), Some(0.0));
        for s in &shifts[..50] {
            assert!(g.exact_cgf(&b.shifted(s), 0.7).unwrap().unwrap() >= 0.0);
        }
    }

    #[test]
    fn leak_field_has_moment_scale() {
        let m =
            FieldModel::new(2, FieldKind::Cell, Law::CenteredExponential { rate: 1.0 }).unwrap();
        let leak = m.leak_field(0.5, 2.0).unwrap();
        let eps = leak.moment_scale().unwrap();
        let unit = BoxSpec::cube(1, 1.0).unwrap();
        let c =
            verify_reference_moment(&leak, &unit, eps * 0.9, &shift_grid(1, 2), 50_000, 3).unwrap();
        assert!(c.pass, "{c:?}");
    }

    #[test]
    fn leak_sampler_statistics() {
        let g = FieldModel::new(1, FieldKind::Cell, Law::Gaussian { sigma: 1.0 }).unwrap();
        let n = 20_000;
        let xs: Vec<f64> = (0..n)
            .map(|rep| sample_leak(&g, 0, 0.5, 0.0, 1.0, None, &RngStream::new(1, rep)).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 * (0.5 / n as f64).sqrt());
        assert!((var / 0.5 - 1.0).abs() < 0.05, "{var}");
        assert_relative_eq!(g.leak_law(0.5, 1.0).variance(), 0.5, epsilon = 1e-15);
    }
}
