//! Discretized mark space, the mutation kernel acting on it, and the
//! Perron (Krein–Rutman) eigen-data used to renormalize the kernel.
//!
//! A mark space is a finite set of labels with positive weights; integrals
//! over marks become weighted sums, so the kernel action is
//! `(Qh)(s) = sum_{s'} Q(s, s') h(s') w(s')`.

use crate::error::{Error, Result};

/// Finite mark set with positive quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkSpace {
    labels: Vec<String>,
    weights: Vec<f64>,
}

impl MarkSpace {
    pub fn new(labels: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid(
                "marks.labels",
                "at least one mark is required",
            ));
        }
        if labels.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                got: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid(
                format!("marks.weights[{i}]"),
                format!("weight must be strictly positive, got {}", weights[i]),
            ));
        }
        Ok(Self { labels, weights })
    }

    /// The one-point mark space with unit weight (the unmarked model).
    pub fn point() -> Self {
        Self {
            labels: vec!["0".to_string()],
            weights: vec![1.0],
        }
    }

    /// `m` marks labelled `0..m`, all with weight `weight`.
    pub fn uniform(m: usize, weight: f64) -> Result<Self> {
        Self::new((0..m).map(|i| i.to_string()).collect(), vec![weight; m])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum_s h(s) w(s)`.
    pub fn integrate(&self, h: &[f64]) -> f64 {
        h.iter().zip(&self.weights).map(|(h, w)| h * w).sum()
    }
}

/// Strictly positive kernel `Q(s, s')` on a [`MarkSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct MutationKernel {
    marks: MarkSpace,
    /// Row-major, `entries[s * m + s'] = Q(s, s')`.
    entries: Vec<f64>,
}

impl MutationKernel {
    pub fn new(marks: MarkSpace, rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = marks.len();
        if rows.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: rows.len(),
            });
        }
        let mut entries = Vec::with_capacity(m * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invalid(
                        format!("marks.kernel[{i}][{j}]"),
                        format!("kernel entries must be strictly positive, got {v}"),
                    ));
                }
            }
            entries.extend_from_slice(row);
        }
        Ok(Self { marks, entries })
    }

    /// `Q = [[1]]` on the one-point mark space.
    pub fn unmarked() -> Self {
        Self {
            marks: MarkSpace::point(),
            entries: vec![1.0],
        }
    }

    pub fn marks(&self) -> &MarkSpace {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn entry(&self, s: usize, s_prime: usize) -> f64 {
        self.entries[s * self.len() + s_prime]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .chunks(self.len())
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Row-major matrix of the operator including the mark weights:
    /// `W[s][s'] = Q(s, s') w(s')`.
    pub fn weighted_matrix(&self) -> Vec<f64> {
        let m = self.len();
        let w = self.marks.weights();
        let mut out = self.entries.clone();
        for row in out.chunks_mut(m) {
            for (v, wj) in row.iter_mut().zip(w) {
                *v *= wj;
            }
        }
        out
    }

    /// `(Qh)(s) = sum_{s'} Q(s, s') h(s') w(s')`.
    pub fn apply(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_len(h)?;
        let m = self.len();
        let w = self.marks.weights();
        Ok((0..m)
            .map(|s| (0..m).map(|t| self.entry(s, t) * h[t] * w[t]).sum())
            .collect())
    }

    /// Adjoint action `(Q* h)(s) = sum_{s'} Q(s', s) h(s') w(s')`.
    pub fn apply_adjoint(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_len(h)?;
        let m = self.len();
        let w = self.marks.weights();
        Ok((0..m)
            .map(|s| (0..m).map(|t| self.entry(t, s) * h[t] * w[t]).sum())
            .collect())
    }

    /// Total offspring weight of a parent with mark `parent`:
    /// `B(s') = sum_s Q(s, s') w(s)`.
    pub fn offspring_weight(&self, parent: usize) -> f64 {
        let w = self.marks.weights();
        (0..self.len()).map(|s| self.entry(s, parent) * w[s]).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            marks: self.marks.clone(),
            entries: self.entries.iter().map(|v| v * factor).collect(),
        }
    }

    fn check_len(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: h.len(),
            });
        }
        Ok(())
    }
}

/// Principal eigen-data of a strictly positive kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    /// Principal eigenvalue.
    pub r: f64,
    /// Right eigenfunction, `sum_s q(s) w(s) = 1`.
    pub q: Vec<f64>,
    /// Eigenfunction of the adjoint, scaled so that `sum_s q_adj(s) q(s) w(s) = 1`.
    pub q_adj: Vec<f64>,
    /// `1 / r`.
    pub kappa_cr: f64,
    /// `max(|Qq - rq|_inf, |Q*q_adj - r q_adj|_inf)` at exit.
    pub residual: f64,
    pub iterations: usize,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Power iteration for the Perron eigenpair of `Q` and of `Q*`.
///
/// Stops once both residuals are below `tol`; positivity of the kernel
/// guarantees a spectral gap, so failure to converge means `max_iter` was
/// too small for a nearly degenerate kernel.
pub fn krein_rutman(kernel: &MutationKernel, tol: f64, max_iter: usize) -> Result<SpectralData> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance", "must be positive"));
    }
    let marks = kernel.marks();
    let m = kernel.len();

    let normalize = |v: &mut Vec<f64>| {
        let norm = marks.integrate(v);
        v.iter_mut().for_each(|x| *x /= norm);
    };

    let mut q = vec![1.0; m];
    let mut q_adj = vec![1.0; m];
    normalize(&mut q);
    normalize(&mut q_adj);

    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter {
        let mut next = kernel.apply(&q)?;
        let mut next_adj = kernel.apply_adjoint(&q_adj)?;
        // With sum q w = 1 the weighted mass of Qq is the eigenvalue estimate.
        let r = marks.integrate(&next);
        let r_adj = marks.integrate(&next_adj);
        let res = next
            .iter()
            .zip(&q)
            .map(|(a, b)| (a - r * b).abs())
            .fold(0.0, f64::max);
        let res_adj = next_adj
            .iter()
            .zip(&q_adj)
            .map(|(a, b)| (a - r_adj * b).abs())
            .fold(0.0, f64::max);
        residual = res.max(res_adj);
        if residual <= tol {
            let mut q_adj = q_adj;
            let pairing: f64 = (0..m).map(|s| q_adj[s] * q[s] * marks.weights()[s]).sum();
            q_adj.iter_mut().for_each(|x| *x /= pairing);
            return Ok(SpectralData {
                r,
                kappa_cr: 1.0 / r,
                q,
                q_adj,
                residual,
                iterations: iteration,
            });
        }
        normalize(&mut next);
        normalize(&mut next_adj);
        q = next;
        q_adj = next_adj;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Absorbs the critical value into the kernel: returns `Q / r` and `kappa * r`.
///
/// Rejects `kappa >= kappa_cr`.
pub fn renormalize(kernel: &MutationKernel, kappa: f64) -> Result<(MutationKernel, f64)> {
    let spectral = krein_rutman(kernel, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER)?;
    renormalize_with(kernel, &spectral, kappa)
}

pub fn renormalize_with(
    kernel: &MutationKernel,
    spectral: &SpectralData,
    kappa: f64,
) -> Result<(MutationKernel, f64)> {
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::invalid(
            "model.kappa",
            format!("must be >= 0, got {kappa}"),
        ));
    }
    let effective = kappa * spectral.r;
    if effective >= 1.0 {
        return Err(Error::Supercritical {
            kappa,
            effective,
            kappa_cr: spectral.kappa_cr,
        });
    }
    Ok((kernel.scaled(1.0 / spectral.r), effective))
}
