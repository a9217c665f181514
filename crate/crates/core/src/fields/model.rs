use rand::rngs::SmallRng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::law::Law;
use crate::error::{Error, Result};
use crate::primitives::BoxSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    /// `X(x) = xi_z` on each unit cell `z + [0,1)^d`.
    #[default]
    Cell,
    /// `X = sum_z xi_z k(x - z)` with the separable tent kernel on `[0,1]^d`
    /// (density `4u` on `[0,1/2]`, `4(1-u)` on `[1/2,1]`, unit mass per axis).
    Tent,
}

/// A stationary field on `R^d` driven by i.i.d. cell variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldModel {
    pub dim: usize,
    #[serde(default)]
    pub kind: FieldKind,
    pub law: Law,
}

/// Mass of the one-axis profile of cell 0 on `[0, u]`, for `u` in `[0, 1]`.
fn profile_cdf(kind: FieldKind, u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    match kind {
        FieldKind::Cell => u,
        FieldKind::Tent => {
            if u <= 0.5 {
                2.0 * u * u
            } else {
                1.0 - 2.0 * (1.0 - u) * (1.0 - u)
            }
        }
    }
}

/// Splitmix64 finaliser, used to derive independent stream keys.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key(parts: impl IntoIterator<Item = u64>) -> u64 {
    parts.into_iter().fold(0x5EED_u64, |h, p| mix(h ^ mix(p)))
}

/// Deterministic sub-seed for a tagged sub-run of `seed`.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    key(std::iter::once(seed).chain(tags.iter().copied()))
}

/// Counter-based random source: the variable of copy `copy` at cell `z` in
/// replica `replica` is a pure function of `(seed, replica, copy, z)`, so the
/// same realisation can be revisited from any box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub replica: u64,
}

impl RngStream {
    pub fn new(seed: u64, replica: u64) -> Self {
        Self { seed, replica }
    }

    pub fn cell_rng(&self, copy: u32, cell: &[i64]) -> SmallRng {
        let parts = [self.seed, self.replica, copy as u64]
            .into_iter()
            .chain(cell.iter().map(|&c| c as u64));
        SmallRng::seed_from_u64(key(parts))
    }

    /// Independent generator for the `index`-th Monte Carlo sample of a run.
    pub fn sample_rng(seed: u64, index: u64) -> SmallRng {
        SmallRng::seed_from_u64(key([seed, u64::MAX, index]))
    }
}

/// Which of the three coupled realisations of a split to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Realisation {
    /// The original field `X`.
    Original,
    /// Agrees with `X` on cells with `z_axis < r` (including the straddling
    /// cell), independent elsewhere.
    Minus,
    /// Agrees with `X` on cells with `z_axis >= r`, independent elsewhere.
    Plus,
}

/// A cut of the lattice at `x_axis = r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub axis: usize,
    pub r: f64,
}

impl SplitSpec {
    fn copy_for(&self, which: Realisation, cell: &[i64]) -> u32 {
        let left = (cell[self.axis] as f64) < self.r;
        match which {
            Realisation::Original => 0,
            Realisation::Minus => {
                if left {
                    0
                } else {
                    1
                }
            }
            Realisation::Plus => {
                if left {
                    2
                } else {
                    0
                }
            }
        }
    }
}

impl FieldModel {
    pub fn new(dim: usize, kind: FieldKind, law: Law) -> Result<Self> {
        let m = Self { dim, kind, law };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument(
                "field dimension must be positive".into(),
            ));
        }
        self.law.validate()
    }

    /// Cells meeting `[lo, hi]` along one axis, with their profile masses.
    pub fn axis_weights(&self, lo: f64, hi: f64) -> Vec<(i64, f64)> {
        let first = lo.floor() as i64;
        let last = (hi.ceil() as i64).max(first + 1);
        (first..last)
            .map(|z| {
                let zf = z as f64;
                let w = profile_cdf(self.kind, hi - zf) - profile_cdf(self.kind, lo - zf);
                (z, w)
            })
            .filter(|&(_, w)| w > 0.0)
            .collect()
    }

    /// Per-axis weights of a box; the integral is `sum_z prod_j w_j(z_j) xi_z`.
    pub fn box_weights(&self, b: &BoxSpec) -> Result<Vec<Vec<(i64, f64)>>> {
        self.check_dim(b)?;
        Ok(b.intervals()
            .iter()
            .map(|&(lo, hi)| self.axis_weights(lo, hi))
            .collect())
    }

    fn check_dim(&self, b: &BoxSpec) -> Result<()> {
        if b.dim() != self.dim {
            return Err(Error::InvalidBox(format!(
                "box has dimension {}, field has {}",
                b.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `sum_z w(z)^2`, which times the cell variance is `Var(int_B X)`.
    pub fn sum_sq_weights(&self, b: &BoxSpec) -> Result<f64> {
        Ok(self
            .box_weights(b)?
            .iter()
            .map(|ax| ax.iter().map(|(_, w)| w * w).sum::<f64>())
            .product())
    }

    /// `int_B X` for one coupled realisation, summed cell by cell.
    pub fn coupled_integral(
        &self,
        b: &BoxSpec,
        stream: &RngStream,
        split: Option<&SplitSpec>,
        which: Realisation,
    ) -> Result<f64> {
        let weights = self.box_weights(b)?;
        let mut total = 0.0;
        for_each_cell(&weights, |cell, w| {
            let copy = split.map_or(0, |s| s.copy_for(which, cell));
            total += w * self.law.sample(&mut stream.cell_rng(copy, cell));
        });
        Ok(total)
    }

    /// Leak of the split of `[a, b] x cross` at `x_axis = r`:
    /// `int_{B-} X- + int_{B+} X+ - int_B X`, accumulated per cell so that
    /// cells away from the cut cancel exactly.
    pub fn coupled_leak(
        &self,
        whole: &BoxSpec,
        split: &SplitSpec,
        stream: &RngStream,
    ) -> Result<f64> {
        self.check_dim(whole)?;
        let (lo, hi) = whole.intervals()[split.axis];
        if !(lo < split.r && split.r < hi) {
            return Err(Error::InvalidBox(format!(
                "cut {} is not inside ({lo}, {hi})",
                split.r
            )));
        }
        let left = self.box_weights(&whole.with_interval(split.axis, (lo, split.r))?)?;
        let right = self.box_weights(&whole.with_interval(split.axis, (split.r, hi))?)?;
        let full = self.box_weights(whole)?;
        let lookup =
            |axw: &[(i64, f64)], z: i64| axw.iter().find(|(c, _)| *c == z).map_or(0.0, |(_, w)| *w);
        let mut total = 0.0;
        for_each_cell(&full, |cell, w_full| {
            let z = cell[split.axis];
            let along = |ws: &Vec<Vec<(i64, f64)>>| -> f64 {
                let mut p = lookup(&ws[split.axis], z);
                for (j, ax) in ws.iter().enumerate() {
                    if j != split.axis {
                        p *= lookup(ax, cell[j]);
                    }
                }
                p
            };
            let w_minus = along(&left);
            let w_plus = along(&right);
            let xi = |which| {
                self.law
                    .sample(&mut stream.cell_rng(split.copy_for(which, cell), cell))
            };
            let term = if w_minus > 0.0 && w_plus > 0.0 {
                w_minus * xi(Realisation::Minus) + w_plus * xi(Realisation::Plus)
                    - w_full * xi(Realisation::Original)
            } else if w_minus > 0.0 {
                w_minus * xi(Realisation::Minus) - w_full * xi(Realisation::Original)
            } else {
                w_plus * xi(Realisation::Plus) - w_full * xi(Realisation::Original)
            };
            total += term;
        });
        Ok(total)
    }

    /// Mass along the cut axis that the straddling cell carries on `[r, hi]`;
    /// zero when `r` is an integer.
    pub fn straddle_mass(&self, r: f64, hi: f64) -> f64 {
        let z = r.floor();
        if z == r {
            return 0.0;
        }
        profile_cdf(self.kind, hi.min(z + 1.0) - z) - profile_cdf(self.kind, r - z)
    }

    /// Cell law of the leak field on the cross-section: for a cut at `r` the
    /// leak is `sum_cross (xi' - xi) t w_cross` with `t` the straddle mass.
    pub fn leak_law(&self, r: f64, hi: f64) -> Law {
        self.law.difference(self.straddle_mass(r, hi))
    }

    /// The `(d-1)`-dimensional leak field, `None` when `d = 1`.
    pub fn leak_field(&self, r: f64, hi: f64) -> Option<FieldModel> {
        (self.dim > 1).then(|| FieldModel {
            dim: self.dim - 1,
            kind: self.kind,
            law: self.leak_law(r, hi),
        })
    }

    /// Leak constant from the exponential-moment route: with `eps` the
    /// moment scale of `xi' - xi`, `C1 = max(1/eps^2, 1)`.
    pub fn leak_constant(&self) -> Result<f64> {
        let eps = self.law.difference(1.0).moment_scale().ok_or_else(|| {
            Error::InvalidArgument("leak law has no usable exponential moment".into())
        })?;
        Ok((1.0 / (eps * eps)).max(1.0))
    }

    /// Moment scale of the cell variable itself.
    pub fn moment_scale(&self) -> Result<f64> {
        self.law.moment_scale().ok_or_else(|| {
            Error::InvalidArgument("cell law has no usable exponential moment".into())
        })
    }

    /// Weight classes `(weight, count)` of a box, merging equal weights.
    pub fn weight_classes(&self, b: &BoxSpec) -> Result<Vec<(f64, u64)>> {
        let per_axis: Vec<Vec<(f64, u64)>> = self
            .box_weights(b)?
            .iter()
            .map(|ax| {
                let mut classes: Vec<(f64, u64)> = Vec::new();
                for &(_, w) in ax {
                    match classes.iter_mut().find(|(cw, _)| *cw == w) {
                        Some(c) => c.1 += 1,
                        None => classes.push((w, 1)),
                    }
                }
                classes
            })
            .collect();
        let mut out = vec![(1.0, 1u64)];
        for ax in per_axis {
            out = out
                .iter()
                .flat_map(|&(w0, n0)| ax.iter().map(move |&(w, n)| (w0 * w, n0 * n)))
                .collect();
        }
        Ok(out)
    }

    /// A draw of `int_B X` using aggregated sums per weight class. Same law as
    /// the coupled sampler but does not index individual cells.
    pub fn fast_integral(&self, classes: &[(f64, u64)], rng: &mut SmallRng) -> f64 {
        classes
            .iter()
            .map(|&(w, n)| w * self.law.sample_sum(n, rng))
            .sum()
    }

    /// `n` independent draws of `vol(B)^(-1/2) int_B X`, in index order
    /// regardless of thread count.
    pub fn normalized_samples(&self, b: &BoxSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
        let classes = self.weight_classes(b)?;
        let scale = b.volume().sqrt().recip();
        Ok((0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::sample_rng(seed, i);
                scale * self.fast_integral(&classes, &mut rng)
            })
            .collect())
    }

    /// Exact `log E exp(lambda vol^(-1/2) int_B X)` from the cell MGF, when it
    /// exists in closed form.
    pub fn exact_cgf(&self, b: &BoxSpec, lambda: f64) -> Result<Option<f64>> {
        Ok(self.exact_cgf_classes(&self.weight_classes(b)?, b.volume(), lambda))
    }

    /// [`exact_cgf`](Self::exact_cgf) from precomputed weight classes.
    pub fn exact_cgf_classes(&self, classes: &[(f64, u64)], vol: f64, lambda: f64) -> Option<f64> {
        let scale = lambda / vol.sqrt();
        classes
            .iter()
            .map(|&(w, n)| self.law.log_mgf(scale * w).map(|v| n as f64 * v))
            .sum()
    }

    /// Exact normalized CGF for Gaussian cells:
    /// `(lambda^2 / 2) sigma^2 sum_z w(z)^2 / vol(B)`.
    pub fn exact_cgf_gaussian(&self, b: &BoxSpec, lambda: f64) -> Result<f64> {
        let sigma = self
            .law
            .gaussian_sigma()
            .ok_or(Error::OracleRequiresGaussian)?;
        Ok(0.5 * lambda * lambda * sigma * sigma * self.sum_sq_weights(b)? / b.volume())
    }
}

/// Visit every cell of a product of per-axis weight lists with its total weight.
fn for_each_cell(weights: &[Vec<(i64, f64)>], mut f: impl FnMut(&[i64], f64)) {
    let d = weights.len();
    if weights.iter().any(|w| w.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; d];
    let mut cell = vec![0i64; d];
    loop {
        let mut w = 1.0;
        for j in 0..d {
            let (z, wj) = weights[j][idx[j]];
            cell[j] = z;
            w *= wj;
        }
        f(&cell, w);
        let mut j = 0;
        loop {
            if j == d {
                return;
            }
            idx[j] += 1;
            if idx[j] < weights[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gauss(dim: usize, kind: FieldKind) -> FieldModel {
        FieldModel::new(dim, kind, Law::Gaussian { sigma: 1.0 }).unwrap()
    }

    #[test]
    fn tent_profile_has_unit_mass() {
        assert_eq!(profile_cdf(FieldKind::Tent, 1.0), 1.0);
        assert_eq!(profile_cdf(FieldKind::Tent, 0.5), 0.5);
        let m = gauss(1, FieldKind::Tent);
        let total: f64 = m.axis_weights(-3.0, 5.0).iter().map(|(_, w)| w).sum();
        assert_relative_eq!(total, 8.0, epsilon = 1e-15);
    }

    #[test]
    fn variance_examples() {
        let m = gauss(1, FieldKind::Cell);
        let b = BoxSpec::new(vec![(0.0, 2.5)]).unwrap();
        assert_relative_eq!(m.sum_sq_weights(&b).unwrap(), 2.25, epsilon = 1e-15);
        let b = BoxSpec::new(vec![(0.5, 1.5)]).unwrap();
        assert_relative_eq!(m.sum_sq_weights(&b).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(
            m.exact_cgf_gaussian(&b, 2.0).unwrap(),
            0.5 * 4.0 * 0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn integer_cut_has_zero_leak() {
        let m =
            FieldModel::new(2, FieldKind::Cell, Law::CenteredExponential { rate: 1.0 }).unwrap();
        let b = BoxSpec::new(vec![(0.0, 5.0), (0.3, 2.7)]).unwrap();
        for rep in 0..20 {
            let s = RngStream::new(11, rep);
            let leak = m
                .coupled_leak(&b, &SplitSpec { axis: 0, r: 2.0 }, &s)
                .unwrap();
            assert_eq!(leak, 0.0);
        }
    }

    #[test]
    fn leak_matches_straddling_formula() {
        for kind in [FieldKind::Cell, FieldKind::Tent] {
            let m = FieldModel::new(2, kind, Law::symmetric_two_point(1.0)).unwrap();
            let b = BoxSpec::new(vec![(0.0, 3.0), (0.25, 2.0)]).unwrap();
            let split = SplitSpec { axis: 0, r: 1.4 };
            let t = m.straddle_mass(1.4, 3.0);
            let cross = m.axis_weights(0.25, 2.0);
            for rep in 0..10 {
                let s = RngStream::new(3, rep);
                let leak = m.coupled_leak(&b, &split, &s).unwrap();
                let direct: f64 = cross
                    .iter()
                    .map(|&(y, w)| {
                        let cell = [1, y];
                        let plus = m.law.sample(&mut s.cell_rng(2, &cell));
                        let orig = m.law.sample(&mut s.cell_rng(0, &cell));
                        (plus - orig) * t * w
                    })
                    .sum();
                assert_relative_eq!(leak, direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn split_pieces_are_independent_copies() {
        let m = gauss(1, FieldKind::Cell);
        let split = SplitSpec { axis: 0, r: 2.5 };
        let left = BoxSpec::new(vec![(0.0, 2.5)]).unwrap();
        let right = BoxSpec::new(vec![(2.5, 5.0)]).unwrap();
        let n = 4000;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for rep in 0..n {
            let s = RngStream::new(5, rep);
            let x = m
                .coupled_integral(&left, &s, Some(&split), Realisation::Minus)
                .unwrap();
            let y = m
                .coupled_integral(&right, &s, Some(&split), Realisation::Plus)
                .unwrap();
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }

    #[test]
    fn fast_sampler_variance() {
        let m = gauss(2, FieldKind::Tent);
        let b = BoxSpec::new(vec![(0.2, 3.7), (1.1, 2.9)]).unwrap();
        let xs = m.normalized_samples(&b, 40_000, 9).unwrap();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        let truth = m.sum_sq_weights(&b).unwrap() / b.volume();
        assert!((var / truth - 1.0).abs() < 0.03);
    }

    #[test]
    fn samples_do_not_depend_on_thread_count() {
        let m =
            FieldModel::new(1, FieldKind::Cell, Law::CenteredExponential { rate: 1.0 }).unwrap();
        let b = BoxSpec::new(vec![(0.0, 7.5)]).unwrap();
        let a = m.normalized_samples(&b, 500, 42).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = pool.install(|| m.normalized_samples(&b, 500, 42).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn exact_cgf_exponential() {
        let m =
            FieldModel::new(1, FieldKind::Cell, Law::CenteredExponential { rate: 1.0 }).unwrap();
        let b = BoxSpec::new(vec![(0.0, 1.0)]).unwrap();
        assert_relative_eq!(
            m.exact_cgf(&b, 0.5).unwrap().unwrap(),
            2f64.ln() - 0.5,
            epsilon = 1e-15
        );
        assert!(m.exact_cgf(&b, 1.0).unwrap().is_none());
    }

    #[test]
    fn leak_constant_values() {
        let m = FieldModel::new(1, FieldKind::Cell, Law::symmetric_two_point(0.1)).unwrap();
        assert_eq!(m.leak_constant().unwrap(), 1.0);
        let m = FieldModel::new(1, FieldKind::Cell, Law::Gaussian { sigma: 3.0 }).unwrap();
        assert!(m.leak_constant().unwrap() > 1.0);
        assert!(m.leak_field(1.5, 3.0).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn integral_is_additive(
            lo in -5.0f64..5.0, len1 in 0.1f64..4.0, len2 in 0.1f64..4.0,
            ylo in -3.0f64..3.0, ylen in 0.1f64..3.0, seed in 0u64..1000,
            tent in any::<bool>(),
        ) {
            let kind = if tent { FieldKind::Tent } else { FieldKind::Cell };
            let m = FieldModel::new(2, kind, Law::CenteredExponential { rate: 1.0 }).unwrap();
            let mid = lo + len1;
            let y = (ylo, ylo + ylen);
            let s = RngStream::new(seed, 0);
            let f = |a: f64, b: f64| {
                m.coupled_integral(&BoxSpec::new(vec![(a, b), y]).unwrap(), &s, None, Realisation::Original).unwrap()
            };
            let whole = f(lo, mid + len2);
            let parts = f(lo, mid) + f(mid, mid + len2);
            prop_assert!((whole - parts).abs() <= 1e-9 * (1.0 + whole.abs()));
        }

        #[test]
        fn weight_classes_preserve_square_sum(
            lo in -5.0f64..5.0, len in 0.1f64..9.0, ylo in -3.0f64..3.0, ylen in 0.1f64..6.0,
        ) {
            let m = gauss(2, FieldKind::Tent);
            let b = BoxSpec::new(vec![(lo, lo + len), (ylo, ylo + ylen)]).unwrap();
            let from_classes: f64 = m.weight_classes(&b).unwrap().iter().map(|(w, n)| w * w * *n as f64).sum();
            prop_assert!((from_classes - m.sum_sq_weights(&b).unwrap()).abs() < 1e-10);
        }
    }
}
