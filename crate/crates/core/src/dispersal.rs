//! Dispersal densities on `R^d` with closed-form characteristic functions.
//!
//! Characteristic functions use the `exp(+i p.u)` convention:
//! `char_fn(p) = integral exp(i p.u) alpha(u) du`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Neglected lattice-sum mass allowed by [`DispersalKernel::wrapped_density`].
pub const WRAP_TAIL: f64 = 1e-12;
const MAX_WRAP_ORDER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    /// Uniform on the Euclidean ball of the given radius; `d <= 3`.
    UniformBall { radius: f64 },
    /// Uniform on the box `prod [-a_k, a_k]`.
    UniformBox { half_widths: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct DispersalKernel {
    dim: usize,
    family: Family,
    mean: Vec<f64>,
    covariance: DMatrix<f64>,
    // Gaussian only: Cholesky factor, precision matrix and log normalizer.
    chol: Option<DMatrix<f64>>,
    precision: Option<DMatrix<f64>>,
    log_norm: f64,
}

impl PartialEq for DispersalKernel {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.family == other.family
    }
}

impl DispersalKernel {
    pub fn new(dim: usize, family: Family) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid(
                "model.dim",
                "spatial dimension must be >= 1",
            ));
        }
        match &family {
            Family::Gaussian { mean, covariance } => {
                if mean.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: mean.len(),
                    });
                }
                if covariance.len() != dim || covariance.iter().any(|r| r.len() != dim) {
                    return Err(Error::invalid(
                        "model.dispersal.covariance",
                        format!("expected a {dim}x{dim} matrix"),
                    ));
                }
                let cov = DMatrix::from_fn(dim, dim, |i, j| covariance[i][j]);
                if (0..dim).any(|i| (0..dim).any(|j| (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12)) {
                    return Err(Error::invalid(
                        "model.dispersal.covariance",
                        "covariance must be symmetric",
                    ));
                }
                let chol = cov.clone().cholesky().ok_or_else(|| {
                    Error::invalid(
                        "model.dispersal.covariance",
                        "covariance must be positive definite",
                    )
                })?;
                let l = chol.l();
                let log_det: f64 = 2.0 * (0..dim).map(|i| l[(i, i)].ln()).sum::<f64>();
                let precision = chol.inverse();
                Ok(Self {
                    dim,
                    mean: mean.clone(),
                    covariance: cov,
                    chol: Some(l),
                    precision: Some(precision),
                    log_norm: -0.5 * (dim as f64 * (2.0 * PI).ln() + log_det),
                    family,
                })
            }
            Family::UniformBall { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::invalid(
                        "model.dispersal.radius",
                        format!("radius must be positive, got {radius}"),
                    ));
                }
                if dim > 3 {
                    return Err(Error::invalid(
                        "model.dispersal",
                        "uniform-ball dispersal is supported for d <= 3",
                    ));
                }
                let var = radius * radius / (dim as f64 + 2.0);
                Ok(Self {
                    dim,
                    mean: vec![0.0; dim],
                    covariance: DMatrix::from_diagonal_element(dim, dim, var),
                    chol: None,
                    precision: None,
                    log_norm: -ball_volume(dim, *radius).ln(),
                    family,
                })
            }
            Family::UniformBox { half_widths } => {
                if half_widths.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: half_widths.len(),
                    });
                }
                if let Some(a) = half_widths.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
                    return Err(Error::invalid(
                        "model.dispersal.half_widths",
                        format!("half-widths must be positive, got {a}"),
                    ));
                }
                let cov = DMatrix::from_diagonal(&DVector::from_iterator(
                    dim,
                    half_widths.iter().map(|a| a * a / 3.0),
                ));
                Ok(Self {
                    dim,
                    mean: vec![0.0; dim],
                    covariance: cov,
                    chol: None,
                    precision: None,
                    log_norm: -half_widths.iter().map(|a| (2.0 * a).ln()).sum::<f64>(),
                    family,
                })
            }
        }
    }

    pub fn gaussian(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(mean.len(), Family::Gaussian { mean, covariance })
    }

    /// Centered Gaussian with covariance `variance * I`.
    pub fn isotropic_gaussian(dim: usize, variance: f64) -> Result<Self> {
        let covariance = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| if i == j { variance } else { 0.0 })
                    .collect()
            })
            .collect();
        Self::new(
            dim,
            Family::Gaussian {
                mean: vec![0.0; dim],
                covariance,
            },
        )
    }

    pub fn uniform_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::new(dim, Family::UniformBall { radius })
    }

    pub fn uniform_box(half_widths: Vec<f64>) -> Result<Self> {
        Self::new(half_widths.len(), Family::UniformBox { half_widths })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Mean vector and covariance matrix (rows).
    pub fn moments(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let cov = (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.covariance[(i, j)]).collect())
            .collect();
        (self.mean.clone(), cov)
    }

    fn covariance_eigenvalues(&self) -> Vec<f64> {
        self.covariance
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    /// Smallest standard deviation along any direction.
    pub fn min_std(&self) -> f64 {
        self.covariance_eigenvalues()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    /// Largest standard deviation along any direction.
    pub fn max_std(&self) -> f64 {
        self.covariance_eigenvalues()
            .into_iter()
            .fold(0.0, f64::max)
            .sqrt()
    }

    /// Root-mean-square standard deviation, `sqrt(tr C / d)`.
    pub fn rms_std(&self) -> f64 {
        (self.covariance.trace() / self.dim as f64).sqrt()
    }

    pub fn density(&self, u: &[f64]) -> Result<f64> {
        self.check_dim(u.len())?;
        Ok(self.density_unchecked(u))
    }

    fn density_unchecked(&self, u: &[f64]) -> f64 {
        match &self.family {
            Family::Gaussian { .. } => {
                let prec = self.precision.as_ref().expect("gaussian precision");
                let mut quad = 0.0;
                for i in 0..self.dim {
                    let vi = u[i] - self.mean[i];
                    for j in 0..self.dim {
                        quad += vi * prec[(i, j)] * (u[j] - self.mean[j]);
                    }
                }
                (self.log_norm - 0.5 * quad).exp()
            }
            Family::UniformBall { radius } => {
                let r2: f64 = u.iter().map(|x| x * x).sum();
                if r2 <= radius * radius {
                    self.log_norm.exp()
                } else {
                    0.0
                }
            }
            Family::UniformBox { half_widths } => {
                if u.iter().zip(half_widths).all(|(x, a)| x.abs() <= *a) {
                    self.log_norm.exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Closed-form characteristic function.
    pub fn char_fn(&self, p: &[f64]) -> Complex64 {
        debug_assert_eq!(p.len(), self.dim);
        match &self.family {
            Family::Gaussian { .. } => {
                let mut quad = 0.0;
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        quad += p[i] * self.covariance[(i, j)] * p[j];
                    }
                }
                let phase: f64 = p.iter().zip(&self.mean).map(|(a, b)| a * b).sum();
                Complex64::from_polar((-0.5 * quad).exp(), phase)
            }
            Family::UniformBall { radius } => {
                let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                Complex64::new(ball_char(self.dim, norm * radius), 0.0)
            }
            Family::UniformBox { half_widths } => Complex64::new(
                p.iter()
                    .zip(half_widths)
                    .map(|(p, a)| sinc(p * a))
                    .product(),
                0.0,
            ),
        }
    }

    /// Draws one displacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.sample_into(rng, &mut out);
        out
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.family {
            Family::Gaussian { .. } => {
                let l = self.chol.as_ref().expect("gaussian cholesky");
                let z: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(rng)).collect();
                for i in 0..self.dim {
                    out[i] = self.mean[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>();
                }
            }
            Family::UniformBall { radius } => {
                if self.dim == 1 {
                    out[0] = radius * (2.0 * rng.random::<f64>() - 1.0);
                    return;
                }
                let mut norm2 = 0.0;
                while norm2 == 0.0 {
                    for x in out.iter_mut() {
                        *x = StandardNormal.sample(rng);
                    }
                    norm2 = out.iter().map(|x| x * x).sum();
                }
                let r = radius * rng.random::<f64>().powf(1.0 / self.dim as f64) / norm2.sqrt();
                out.iter_mut().for_each(|x| *x *= r);
            }
            Family::UniformBox { half_widths } => {
                for (x, a) in out.iter_mut().zip(half_widths) {
                    *x = a * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
        }
    }

    /// Lattice truncation order `J` such that the mass of the neglected
    /// images in [`Self::wrapped_density`] is below [`WRAP_TAIL`].
    pub fn truncation_order(&self, side: f64) -> Result<usize> {
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::invalid(
                "model.side",
                format!("box side must be positive, got {side}"),
            ));
        }
        // the evaluation point is reduced to (-L/2, L/2]^d around the mean
        let half = 0.5 * side;
        match &self.family {
            Family::UniformBall { radius } => Ok(((radius + half) / side).ceil() as usize),
            Family::UniformBox { half_widths } => {
                let a = half_widths.iter().fold(0.0_f64, |m, a| m.max(*a));
                Ok(((a + half) / side).ceil() as usize)
            }
            Family::Gaussian { .. } => {
                let lambda = self.max_std().powi(2);
                let prefactor = self.log_norm.exp();
                let g = |j: usize| {
                    let dist = (side * j as f64 - half).max(0.0);
                    (-dist * dist / (2.0 * lambda)).exp()
                };
                let tail_sum = |from: usize| {
                    let mut s = 0.0;
                    let mut j = from;
                    loop {
                        let t = g(j);
                        s += t;
                        if t < 1e-300 || j > from + MAX_WRAP_ORDER {
                            break;
                        }
                        j += 1;
                    }
                    s
                };
                let full = 1.0 + 2.0 * tail_sum(1);
                for order in 0..=MAX_WRAP_ORDER {
                    let bound = prefactor
                        * self.dim as f64
                        * 2.0
                        * tail_sum(order + 1)
                        * full.powi(self.dim as i32 - 1);
                    if bound < WRAP_TAIL {
                        return Ok(order);
                    }
                }
                Err(Error::TailBound {
                    target: WRAP_TAIL,
                    max_order: MAX_WRAP_ORDER,
                })
            }
        }
    }

    /// Density of the displacement wrapped onto the torus `[0, L)^d`.
    pub fn wrapped_density(&self, u: &[f64], side: f64) -> Result<f64> {
        self.check_dim(u.len())?;
        let order = self.truncation_order(side)? as i64;
        // minimal image of u - mean, shifted back so lattice terms stay centered
        let base: Vec<f64> = u
            .iter()
            .zip(&self.mean)
            .map(|(x, m)| {
                let v = (x - m).rem_euclid(side);
                let v = if v > 0.5 * side { v - side } else { v };
                v + m
            })
            .collect();
        let span = (2 * order + 1) as usize;
        let total = span.pow(self.dim as u32);
        let mut point = vec![0.0; self.dim];
        let mut sum = 0.0;
        for idx in 0..total {
            let mut rest = idx;
            for k in 0..self.dim {
                let j = (rest % span) as i64 - order;
                rest /= span;
                point[k] = base[k] + side * j as f64;
            }
            sum += self.density_unchecked(&point);
        }
        Ok(sum)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

pub(crate) fn ball_volume(dim: usize, radius: f64) -> f64 {
    match dim {
        1 => 2.0 * radius,
        2 => PI * radius * radius,
        3 => 4.0 / 3.0 * PI * radius.powi(3),
        _ => unreachable!("ball volume only needed for d <= 3"),
    }
}

/// Characteristic function of the uniform unit ball at `|p| R = x`.
fn ball_char(dim: usize, x: f64) -> f64 {
    match dim {
        1 => sinc(x),
        2 => {
            if x < 1e-3 {
                let x2 = x * x;
                1.0 - x2 / 8.0 + x2 * x2 / 192.0
            } else {
                2.0 * bessel_j(1, x) / x
            }
        }
        3 => {
            if x < 1e-2 {
                let x2 = x * x;
                1.0 - x2 / 10.0 + x2 * x2 / 280.0 - x2 * x2 * x2 / 15120.0
            } else {
                3.0 * (x.sin() - x * x.cos()) / (x * x * x)
            }
        }
        _ => unreachable!(),
    }
}

/// Integer-order Bessel function from its integral representation.
///
/// The integrand is periodic and analytic, so the trapezoid rule converges
/// geometrically once the node count exceeds `|x| + n` by a margin.
pub(crate) fn bessel_j(n: u32, x: f64) -> f64 {
    let nodes = (2.0 * (x.abs() + n as f64) + 64.0).ceil() as usize;
    let step = 2.0 * PI / nodes as f64;
    let sum: f64 = (0..nodes)
        .map(|j| {
            let t = j as f64 * step;
            (n as f64 * t - x * t.sin()).cos()
        })
        .sum();
    sum / nodes as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn density_examples() {
        let g = DispersalKernel::isotropic_gaussian(1, 1.0).unwrap();
        assert!((g.density(&[0.0]).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        let b = DispersalKernel::uniform_ball(1, 1.0).unwrap();
        assert_eq!(b.density(&[0.5]).unwrap(), 0.5);
        assert_eq!(b.density(&[1.5]).unwrap(), 0.0);
        assert!(matches!(
            b.density(&[0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn char_fn_examples() {
        let g = DispersalKernel::isotropic_gaussian(1, 1.0).unwrap();
        assert_eq!(g.char_fn(&[0.0]), Complex64::new(1.0, 0.0));
        assert!((g.char_fn(&[1.0]).re - (-0.5f64).exp()).abs() < 1e-15);
        let b = DispersalKernel::uniform_ball(1, 1.0).unwrap();
        assert!(b.char_fn(&[PI]).norm() < 1e-15);
        assert_eq!(b.char_fn(&[0.0]).re, 1.0);
    }

    #[test]
    fn bessel_matches_tabulated_values() {
        // Abramowitz & Stegun table 9.1
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j(1, 1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((bessel_j(1, 10.0) - 0.043_472_746_168_861_44).abs() < 1e-15);
    }

    #[test]
    fn moments_examples() {
        let (m, c) = DispersalKernel::isotropic_gaussian(2, 1.0)
            .unwrap()
            .moments();
        assert_eq!(m, vec![0.0, 0.0]);
        assert_eq!(c, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let (m, c) = DispersalKernel::uniform_ball(1, 1.0).unwrap().moments();
        assert_eq!(m, vec![0.0]);
        assert!((c[0][0] - 1.0 / 3.0).abs() < 1e-15);
        let (m, c) = DispersalKernel::gaussian(vec![2.0], vec![vec![4.0]])
            .unwrap()
            .moments();
        assert_eq!((m[0], c[0][0]), (2.0, 4.0));
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(DispersalKernel::uniform_ball(1, 0.0).is_err());
        assert!(DispersalKernel::uniform_box(vec![1.0, -1.0]).is_err());
        assert!(
            DispersalKernel::gaussian(vec![0.0, 0.0], vec![vec![1.0, 1.0], vec![1.0, 1.0]])
                .is_err()
        );
        assert!(DispersalKernel::uniform_ball(4, 1.0).is_err());
    }

    #[test]
    fn wrapped_density_examples() {
        let b = DispersalKernel::uniform_ball(1, 1.0).unwrap();
        assert_eq!(b.wrapped_density(&[0.0], 10.0).unwrap(), 0.5);
        assert_eq!(b.wrapped_density(&[0.6], 1.5).unwrap(), 1.0);
        let g = DispersalKernel::isotropic_gaussian(1, 1.0).unwrap();
        let d0 = g.density(&[0.0]).unwrap();
        assert!((g.wrapped_density(&[0.0], 100.0).unwrap() - d0).abs() < 1e-15);
    }

    #[test]
    fn wrapped_density_lattice_sum_oracle() {
        // brute-force image sum with many more terms than the truncation uses
        let g = DispersalKernel::gaussian(vec![0.3], vec![vec![2.0]]).unwrap();
        let side = 3.0;
        for &u in &[0.0, 0.7, 1.4, 2.9] {
            let brute: f64 = (-60..=60)
                .map(|j| g.density(&[u + side * j as f64]).unwrap())
                .sum();
            assert!((g.wrapped_density(&[u], side).unwrap() - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_tail_bound_fails_for_tiny_boxes() {
        let g = DispersalKernel::isotropic_gaussian(1, 1.0).unwrap();
        assert!(matches!(
            g.truncation_order(1e-6),
            Err(Error::TailBound { .. })
        ));
    }

    #[test]
    fn samples_are_finite_with_correct_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kernel in [
            DispersalKernel::isotropic_gaussian(3, 2.0).unwrap(),
            DispersalKernel::uniform_ball(2, 1.5).unwrap(),
            DispersalKernel::uniform_box(vec![1.0, 2.0]).unwrap(),
        ] {
            for _ in 0..100 {
                let x = kernel.sample(&mut rng);
                assert_eq!(x.len(), kernel.dim());
                assert!(x.iter().all(|v| v.is_finite()));
                assert!(kernel.density(&x).unwrap() > 0.0);
            }
        }
    }
}
