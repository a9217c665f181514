//! Empirical cumulant generating functions with batched-means confidence
//! bands, the exact quadratic MGF check for laws with `E exp|Z| <= 2`, and
//! extraction of a quadratic certificate from a CGF curve.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::fields::Law;
use crate::primitives::QuadCert;

pub const DEFAULT_BATCHES: usize = 64;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgfEstimate {
    pub lambda: f64,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub samples: usize,
    pub confidence: f64,
}

fn t_quantile(confidence: f64, batches: usize) -> Result<f64> {
    if !(confidence > 0.5 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level {confidence} not in (0.5, 1)"
        )));
    }
    let t = StudentsT::new(0.0, 1.0, (batches - 1) as f64)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(t.inverse_cdf(0.5 + confidence / 2.0))
}

/// Means of `batches` contiguous, nearly equal-sized blocks.
fn batch_means(values: &[f64], batches: usize) -> Vec<f64> {
    let n = values.len();
    (0..batches)
        .map(|j| {
            let (s, e) = (j * n / batches, (j + 1) * n / batches);
            values[s..e].iter().sum::<f64>() / (e - s) as f64
        })
        .collect()
}

/// Returns `(mean, half_width)` of a two-sided batched-means t interval.
fn batched_interval(values: &[f64], confidence: f64, batches: usize) -> Result<(f64, f64)> {
    let needed = 2 * batches;
    if batches < 2 || values.len() < needed {
        return Err(Error::InsufficientSamples {
            got: values.len(),
            needed: needed.max(4),
        });
    }
    let t = t_quantile(confidence, batches)?;
    let means = batch_means(values, batches);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Ok((mean, t * (var / batches as f64).sqrt()))
}

/// Upper confidence bound for `E g` from i.i.d. values of `g`.
pub fn upper_mean(values: &[f64], confidence: f64, batches: usize) -> Result<(f64, f64)> {
    let (mean, half) = batched_interval(values, confidence, batches)?;
    Ok((mean, mean + half))
}

pub fn empirical_cgf(samples: &[f64], lambda: f64, confidence: f64) -> Result<CgfEstimate> {
    empirical_cgf_batched(samples, lambda, confidence, DEFAULT_BATCHES)
}

/// `log mean exp(lambda x)`, shifted by `max(lambda x)` against overflow, with a
/// delta-method band `point +- t se / mean` on the log scale.
pub fn empirical_cgf_batched(
    samples: &[f64],
    lambda: f64,
    confidence: f64,
    batches: usize,
) -> Result<CgfEstimate> {
    let shift = samples
        .iter()
        .map(|x| lambda * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = samples.iter().map(|x| (lambda * x - shift).exp()).collect();
    let (mean, half) = batched_interval(&scaled, confidence, batches)?;
    let point = shift + mean.ln();
    let rel = half / mean;
    Ok(CgfEstimate {
        lambda,
        point,
        lower: point - rel,
        // the true CGF of a centred variable is nonnegative
        upper: (point + rel).max(0.0),
        samples: samples.len(),
        confidence,
    })
}

/// Exact check that `log E exp(lambda Z) <= lambda^2` on a grid in `[-1, 1]`
/// for a centred law with `E exp|Z| <= 2`. A violated hypothesis is an error,
/// distinct from a `false` conclusion.
pub fn quadratic_mgf_check(law: &Law, grid: &[f64]) -> Result<bool> {
    const TOL: f64 = 1e-12;
    let mean = law.mean();
    if mean.abs() > TOL {
        return Err(Error::HypothesisFailed(format!("mean {mean} is not zero")));
    }
    let moment = law
        .abs_exp_moment(1.0)
        .ok_or_else(|| Error::HypothesisFailed("E exp|Z| is infinite or unavailable".into()))?;
    if moment > 2.0 + TOL {
        return Err(Error::HypothesisFailed(format!("E exp|Z| = {moment} > 2")));
    }
    let mut ok = true;
    for &l in grid {
        if l.abs() > 1.0 + TOL {
            return Err(Error::InvalidArgument(format!(
                "grid point {l} outside [-1, 1]"
            )));
        }
        let v = law
            .log_mgf(l)
            .ok_or_else(|| Error::InvalidArgument("law has no closed-form MGF".into()))?;
        ok &= v <= l * l + TOL;
    }
    Ok(ok)
}

/// Smallest `a` with `upper(lambda) <= a lambda^2` on the curve, times
/// `safety`; `delta` is the grid radius.
pub fn fit_quad_cert(curve: &[(f64, f64)], safety: f64) -> Result<QuadCert> {
    if curve.is_empty() || !(safety >= 1.0) {
        return Err(Error::InvalidArgument(
            "need a nonempty curve and safety >= 1".into(),
        ));
    }
    let mut a: f64 = 0.0;
    let mut radius: f64 = 0.0;
    for &(l, up) in curve {
        if l == 0.0 {
            if up > 1e-12 {
                return Err(Error::CurveNotAnchored(up));
            }
            continue;
        }
        a = a.max(up / (l * l));
        radius = radius.max(l.abs());
    }
    QuadCert::new(a * safety, radius)
}

pub fn write_curve_csv<W: Write>(mut w: W, curve: &[CgfEstimate]) -> Result<()> {
    writeln!(w, "lambda,point,lower,upper,samples")?;
    for e in curve {
        writeln!(
            w,
            "{},{},{},{},{}",
            e.lambda, e.point, e.lower, e.upper, e.samples
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{FieldKind, FieldModel};
    use crate::primitives::BoxSpec;
    use approx::assert_relative_eq;

    fn normal_samples(n: usize, seed: u64) -> Vec<f64> {
        let m = FieldModel::new(1, FieldKind::Cell, Law::Gaussian { sigma: 1.0 }).unwrap();
        m.normalized_samples(&BoxSpec::cube(1, 1.0).unwrap(), n, seed)
            .unwrap()
    }

    #[test]
    fn gaussian_estimate_contains_truth() {
        let xs = normal_samples(1_000_000, 1);
        let e = empirical_cgf(&xs, 1.0, 0.95).unwrap();
        assert!((e.point - 0.5).abs() < 0.02);
        assert!(e.lower <= 0.5 && 0.5 <= e.upper, "{e:?}");
    }

    #[test]
    fn degenerate_samples() {
        let e = empirical_cgf(&vec![0.0; 1000], 3.0, 0.95).unwrap();
        assert_eq!((e.point, e.lower, e.upper), (0.0, 0.0, 0.0));
        assert!(matches!(
            empirical_cgf(&[0.0; 100], 1.0, 0.95),
            Err(Error::InsufficientSamples {
                got: 100,
                needed: 128
            })
        ));
    }

    #[test]
    fn exponential_estimate() {
        let m =
            FieldModel::new(1, FieldKind::Cell, Law::CenteredExponential { rate: 1.0 }).unwrap();
        let xs = m
            .normalized_samples(&BoxSpec::cube(1, 1.0).unwrap(), 1_000_000, 2)
            .unwrap();
        let truth = 2f64.ln() - 0.5;
        let e = empirical_cgf(&xs, 0.5, 0.95).unwrap();
        assert!(e.lower <= truth && truth <= e.upper, "{e:?}");
    }

    #[test]
    fn band_widens_with_lambda() {
        let m =
            FieldModel::new(1, FieldKind::Cell, Law::CenteredExponential { rate: 1.0 }).unwrap();
        let xs = m
            .normalized_samples(&BoxSpec::cube(1, 1.0).unwrap(), 200_000, 3)
            .unwrap();
        let widths: Vec<f64> = [0.05, 0.1, 0.2, 0.3, 0.4]
            .iter()
            .map(|&l| {
                let e = empirical_cgf(&xs, l, 0.95).unwrap();
                e.upper - e.lower
            })
            .collect();
        assert!(widths.windows(2).all(|w| w[0] <= w[1]), "{widths:?}");
    }

    #[test]
    fn quadratic_check_examples() {
        let grid: Vec<f64> = (-100..=100).map(|i| i as f64 / 100.0).collect();
        assert!(quadratic_mgf_check(&Law::symmetric_two_point(2f64.ln()), &grid).unwrap());
        assert_relative_eq!(
            Law::symmetric_two_point(2f64.ln()).log_mgf(1.0).unwrap(),
            0.22314355131420976,
            epsilon = 1e-14
        );
        assert!(quadratic_mgf_check(&Law::symmetric_two_point(0.0), &grid).unwrap());
        assert!(matches!(
            quadratic_mgf_check(&Law::symmetric_two_point(1.0), &grid),
            Err(Error::HypothesisFailed(_))
        ));
    }

    #[test]
    fn fit_examples() {
        let grid: Vec<f64> = (-20..=20).map(|i| i as f64 / 20.0).collect();
        let gauss: Vec<(f64, f64)> = grid.iter().map(|&l| (l, 0.5 * l * l)).collect();
        let c = fit_quad_cert(&gauss, 1.0).unwrap();
        assert_eq!((c.a, c.delta), (0.5, 1.0));
        let zero: Vec<(f64, f64)> = grid.iter().map(|&l| (l, 0.0)).collect();
        assert_eq!(fit_quad_cert(&zero, 1.0).unwrap().a, 0.0);
        let exp_law = Law::CenteredExponential { rate: 1.0 };
        let curve: Vec<(f64, f64)> = (-10..=10)
            .map(|i| {
                let l = i as f64 / 20.0;
                (l, exp_law.log_mgf(l).unwrap())
            })
            .collect();
        let c = fit_quad_cert(&curve, 1.0).unwrap();
        assert_relative_eq!(c.a, (2f64.ln() - 0.5) / 0.25, epsilon = 1e-12);
        assert!(matches!(
            fit_quad_cert(&[(0.0, 0.1), (1.0, 1.0)], 1.0),
            Err(Error::CurveNotAnchored(_))
        ));
    }

    #[test]
    fn csv_columns() {
        let e = empirical_cgf(&normal_samples(1000, 4), 0.5, 0.95).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &[e]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("lambda,point,lower,upper,samples\n0.5,"));
    }
}
