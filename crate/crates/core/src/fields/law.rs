//! Cell distributions with closed-form moment generating functions.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::error::{Error, Result};

/// Distribution of a single lattice-cell variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Law {
    Gaussian {
        sigma: f64,
    },
    /// `E - 1/rate` with `E ~ Exp(rate)`.
    CenteredExponential {
        rate: f64,
    },
    /// `+a` or `-a` with probability 1/2 each.
    SymmetricTwoPoint {
        a: f64,
    },
    /// `hi` with probability `p_hi`, else `lo`.
    TwoPoint {
        lo: f64,
        hi: f64,
        p_hi: f64,
    },
    /// Uniform on `[-h, h]`.
    BoundedUniform {
        h: f64,
    },
    Mixture {
        components: Vec<(f64, Law)>,
    },
    /// `scale * (X' - X)` for two independent copies of `base`.
    Difference {
        base: Box<Law>,
        scale: f64,
    },
}

/// `ln(e^x + e^y)` without overflow.
fn log_add_exp(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    let (hi, lo) = if x > y { (x, y) } else { (y, x) };
    hi + (lo - hi).exp().ln_1p()
}

fn ln_cosh(x: f64) -> f64 {
    let ax = x.abs();
    ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2
}

/// `ln(sinh(x)/x)`.
fn ln_sinhc(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1e-4 {
        let x2 = ax * ax;
        x2 / 6.0 - x2 * x2 / 180.0
    } else {
        ax + (-(-2.0 * ax).exp()).ln_1p() - std::f64::consts::LN_2 - ax.ln()
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    StatNormal::new(0.0, 1.0).expect("unit normal").cdf(x)
}

impl Law {
    pub fn symmetric_two_point(a: f64) -> Self {
        Law::SymmetricTwoPoint { a }
    }

    /// Two-point law with the given support, weighted to have mean zero.
    pub fn centered_two_point(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < 0.0 && hi > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "centered two-point law needs lo < 0 < hi, got {lo}, {hi}"
            )));
        }
        Ok(Law::TwoPoint {
            lo,
            hi,
            p_hi: -lo / (hi - lo),
        })
    }

    pub fn difference(&self, scale: f64) -> Self {
        Law::Difference {
            base: Box::new(self.clone()),
            scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match self {
            Law::Gaussian { sigma } if !(*sigma > 0.0) => bad(format!("sigma = {sigma}")),
            Law::CenteredExponential { rate } if !(*rate > 0.0) => bad(format!("rate = {rate}")),
            Law::SymmetricTwoPoint { a } if !(*a >= 0.0) => bad(format!("a = {a}")),
            Law::TwoPoint { lo, hi, p_hi } if !(lo <= hi && (0.0..=1.0).contains(p_hi)) => {
                bad(format!("two-point ({lo}, {hi}, {p_hi})"))
            }
            Law::BoundedUniform { h } if !(*h > 0.0) => bad(format!("h = {h}")),
            Law::Mixture { components } => {
                let total: f64 = components.iter().map(|(w, _)| w).sum();
                if components.is_empty()
                    || components.iter().any(|(w, _)| !(*w >= 0.0))
                    || (total - 1.0).abs() > 1e-12
                {
                    return bad("mixture weights must be nonnegative and sum to 1".into());
                }
                components.iter().try_for_each(|(_, l)| l.validate())
            }
            Law::Difference { base, scale } => {
                if !(*scale >= 0.0) {
                    return bad(format!("scale = {scale}"));
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Law::TwoPoint { lo, hi, p_hi } => p_hi * hi + (1.0 - p_hi) * lo,
            Law::Mixture { components } => components.iter().map(|(w, l)| w * l.mean()).sum(),
            _ => 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Law::Gaussian { sigma } => sigma * sigma,
            Law::CenteredExponential { rate } => 1.0 / (rate * rate),
            Law::SymmetricTwoPoint { a } => a * a,
            Law::TwoPoint { lo, hi, p_hi } => p_hi * (1.0 - p_hi) * (hi - lo).powi(2),
            Law::BoundedUniform { h } => h * h / 3.0,
            Law::Mixture { components } => {
                let m = self.mean();
                components
                    .iter()
                    .map(|(w, l)| w * (l.variance() + (l.mean() - m).powi(2)))
                    .sum()
            }
            Law::Difference { base, scale } => 2.0 * scale * scale * base.variance(),
        }
    }

    /// Standard deviation when the law is Gaussian (including differences of Gaussians).
    pub fn gaussian_sigma(&self) -> Option<f64> {
        match self {
            Law::Gaussian { sigma } => Some(*sigma),
            Law::Difference { base, scale } => base
                .gaussian_sigma()
                .map(|s| s * scale * std::f64::consts::SQRT_2),
            _ => None,
        }
    }

    /// Finite support as `(value, probability)` atoms, when the law is discrete.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Law::SymmetricTwoPoint { a } => Some(vec![(-a, 0.5), (*a, 0.5)]),
            Law::TwoPoint { lo, hi, p_hi } => Some(vec![(*lo, 1.0 - p_hi), (*hi, *p_hi)]),
            Law::Mixture { components } => {
                let mut out = Vec::new();
                for (w, l) in components {
                    out.extend(l.atoms()?.into_iter().map(|(x, p)| (x, w * p)));
                }
                Some(out)
            }
            Law::Difference { base, scale } => {
                let a = base.atoms()?;
                let mut out = Vec::with_capacity(a.len() * a.len());
                for &(x, px) in &a {
                    for &(y, py) in &a {
                        out.push((scale * (x - y), px * py));
                    }
                }
                Some(out)
            }
            _ => None,
        }
    }

    /// `ln E exp(lambda Z)`, or `None` where the MGF is infinite.
    pub fn log_mgf(&self, lambda: f64) -> Option<f64> {
        if lambda == 0.0 {
            return Some(0.0);
        }
        match self {
            Law::Gaussian { sigma } => Some(0.5 * (lambda * sigma).powi(2)),
            Law::CenteredExponential { rate } => {
                let t = lambda / rate;
                (t < 1.0).then(|| -t - (-t).ln_1p())
            }
            Law::SymmetricTwoPoint { a } => Some(ln_cosh(lambda * a)),
            Law::TwoPoint { lo, hi, p_hi } => {
                let a = if *p_hi > 0.0 {
                    p_hi.ln() + lambda * hi
                } else {
                    f64::NEG_INFINITY
                };
                let b = if *p_hi < 1.0 {
                    (1.0 - p_hi).ln() + lambda * lo
                } else {
                    f64::NEG_INFINITY
                };
                Some(log_add_exp(a, b))
            }
            Law::BoundedUniform { h } => Some(ln_sinhc(lambda * h)),
            Law::Mixture { components } => {
                let mut acc = f64::NEG_INFINITY;
                for (w, l) in components {
                    if *w > 0.0 {
                        acc = log_add_exp(acc, w.ln() + l.log_mgf(lambda)?);
                    }
                }
                Some(acc)
            }
            Law::Difference { base, scale } => {
                Some(base.log_mgf(scale * lambda)? + base.log_mgf(-scale * lambda)?)
            }
        }
    }

    /// `E exp(eps |Z|)`, or `None` when infinite or not available in closed form.
    pub fn abs_exp_moment(&self, eps: f64) -> Option<f64> {
        if eps == 0.0 {
            return Some(1.0);
        }
        if let Some(atoms) = self.atoms() {
            return Some(atoms.iter().map(|&(x, p)| p * (eps * x.abs()).exp()).sum());
        }
        if let Some(sigma) = self.gaussian_sigma() {
            let t = eps * sigma;
            return Some(2.0 * (0.5 * t * t).exp() * std_normal_cdf(t));
        }
        match self {
            Law::CenteredExponential { rate } => {
                if eps >= *rate {
                    return None;
                }
                let m = 1.0 / rate;
                let left = rate * (eps * m).exp() * (-(-(rate + eps) * m).exp()).ln_1p().exp()
                    / (rate + eps);
                let right = rate * (-1.0f64).exp() / (rate - eps);
                Some(left + right)
            }
            Law::BoundedUniform { h } => Some((eps * h).exp_m1() / (eps * h)),
            Law::Mixture { components } => components
                .iter()
                .map(|(w, l)| l.abs_exp_moment(eps).map(|m| w * m))
                .sum(),
            Law::Difference { base, scale } => {
                let e = eps * scale;
                match base.as_ref() {
                    // difference of two Exp(rate) is Laplace(rate)
                    Law::CenteredExponential { rate } => (e < *rate).then(|| rate / (rate - e)),
                    // triangular density (2h - |x|) / (4h^2) on [-2h, 2h]
                    Law::BoundedUniform { h } => {
                        let w = 2.0 * h * e;
                        if w < 1e-6 {
                            Some(1.0 + w / 3.0 + w * w / 12.0)
                        } else {
                            Some(2.0 * (w.exp() - 1.0 - w) / (w * w))
                        }
                    }
                    _ => None,
                }
            }
            _ => None,
        }
    }

    /// Largest `eps` with `E exp(eps |Z|) <= 2`, found by bisection and rounded down.
    pub fn moment_scale(&self) -> Option<f64> {
        let ok = |e: f64| self.abs_exp_moment(e).is_some_and(|m| m <= 2.0);
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut grow = 0;
        while ok(hi) {
            lo = hi;
            hi *= 2.0;
            grow += 1;
            if grow > 200 {
                // degenerate law at zero
                return None;
            }
        }
        self.abs_exp_moment(lo.max(1e-300))?;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        (lo > 0.0).then_some(lo * (1.0 - 1e-12))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Law::Gaussian { sigma } => sigma * rng.sample::<f64, _>(rand_distr::StandardNormal),
            Law::CenteredExponential { rate } => {
                rng.sample::<f64, _>(rand_distr::Exp1) / rate - 1.0 / rate
            }
            Law::SymmetricTwoPoint { a } => {
                if rng.random::<bool>() {
                    *a
                } else {
                    -a
                }
            }
            Law::TwoPoint { lo, hi, p_hi } => {
                if rng.random::<f64>() < *p_hi {
                    *hi
                } else {
                    *lo
                }
            }
            Law::BoundedUniform { h } => h * (2.0 * rng.random::<f64>() - 1.0),
            Law::Mixture { components } => {
                let mut u: f64 = rng.random();
                for (w, l) in components {
                    if u < *w {
                        return l.sample(rng);
                    }
                    u -= w;
                }
                components.last().expect("nonempty mixture").1.sample(rng)
            }
            Law::Difference { base, scale } => scale * (base.sample(rng) - base.sample(rng)),
        }
    }

    /// A draw of the sum of `k` independent copies, using closed forms where
    /// the sum has a standard distribution.
    pub fn sample_sum<R: Rng + ?Sized>(&self, k: u64, rng: &mut R) -> f64 {
        match (self, k) {
            (_, 0) => 0.0,
            (_, 1) => self.sample(rng),
            (Law::Gaussian { sigma }, _) => Normal::new(0.0, sigma * (k as f64).sqrt())
                .expect("valid normal")
                .sample(rng),
            (Law::CenteredExponential { rate }, _) => {
                let g = Gamma::new(k as f64, 1.0 / rate).expect("valid gamma");
                g.sample(rng) - k as f64 / rate
            }
            (Law::SymmetricTwoPoint { a }, _) => {
                let ups = Binomial::new(k, 0.5).expect("valid binomial").sample(rng);
                a * (2.0 * ups as f64 - k as f64)
            }
            (Law::TwoPoint { lo, hi, p_hi }, _) => {
                let ups = Binomial::new(k, *p_hi).expect("valid binomial").sample(rng) as f64;
                ups * hi + (k as f64 - ups) * lo
            }
            (Law::Difference { base, scale }, _) => {
                scale * (base.sample_sum(k, rng) - base.sample_sum(k, rng))
            }
            (Law::Mixture { components }, _) => {
                let mut left = k;
                let mut mass = 1.0;
                let mut total = 0.0;
                for (i, (w, l)) in components.iter().enumerate() {
                    let take = if i + 1 == components.len() || mass <= 0.0 {
                        left
                    } else {
                        let p = (w / mass).clamp(0.0, 1.0);
                        Binomial::new(left, p).expect("valid binomial").sample(rng)
                    };
                    total += l.sample_sum(take, rng);
                    left -= take;
                    mass -= w;
                }
                total
            }
            _ => (0..k).map(|_| self.sample(rng)).sum(),
        }
    }
}
