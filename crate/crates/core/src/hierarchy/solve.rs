use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use super::grid::{storage_len, CorrelationGrid, Representation, SourceTerm};
use super::operator::{apply_slots, apply_slots_real, slot_multipliers};
use super::{HierarchyProblem, POSITIVITY_TOLERANCE};
use crate::error::{Error, Result};
use crate::model::ContactModel;

/// Number of Neumann terms `M` with `kappa^M / (1 - kappa) < tol`.
pub fn neumann_terms(kappa: f64, tol: f64, budget: usize) -> Result<usize> {
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::Supercritical {
            kappa,
            effective: kappa,
            kappa_cr: 1.0,
        });
    }
    if kappa == 0.0 {
        return Ok(1);
    }
    let needed = ((tol * (1.0 - kappa)).ln() / kappa.ln()).floor().max(0.0) as usize + 1;
    let mut terms = needed.saturating_sub(1).max(1);
    while kappa.powi(terms as i32) / (1.0 - kappa) >= tol {
        terms += 1;
    }
    if terms > budget {
        return Err(Error::NeumannBudget {
            needed: terms,
            budget,
        });
    }
    Ok(terms)
}

/// Stationary density `k1 = (1 - kappa Q)^{-1} c` by Neumann series,
/// cross-checked against a dense linear solve.
pub fn solve_k1(model: &ContactModel, tol: f64) -> Result<CorrelationGrid> {
    let m = model.marks();
    let kappa = model.kappa();
    let w = model.kernel().weighted_matrix();
    let c = model.immigration().values();
    let q = model.q();
    // |c| <= scale_c * q, and Q q = q, so the tail is bounded by kappa^M / (1 - kappa) * scale
    let scale = c.iter().zip(q).fold(0.0, |acc: f64, (c, q)| acc.max(c / q))
        * q.iter().copied().fold(0.0, f64::max);
    let terms = neumann_terms(kappa, tol / scale.max(1.0), usize::MAX)?;

    let mut term = c.to_vec();
    let mut sum = term.clone();
    for _ in 1..terms {
        term = apply_slots_real(&w, m, 1, kappa, &term);
        sum.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
    }

    let a = DMatrix::from_fn(m, m, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - kappa * w[i * m + j]
    });
    let direct = a
        .lu()
        .solve(&DVector::from_column_slice(c))
        .ok_or_else(|| Error::Mismatch {
            context: "k1: singular linear system".into(),
            difference: f64::INFINITY,
        })?;
    let norm = sum.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()));
    let difference = sum
        .iter()
        .zip(direct.iter())
        .fold(0.0, |acc: f64, (a, b)| acc.max((a - b).abs()));
    if difference > 10.0 * tol + 1e-12 * norm {
        return Err(Error::Mismatch {
            context: "k1 Neumann series vs direct solve".into(),
            difference,
        });
    }
    Ok(CorrelationGrid::mark_vector(sum))
}

fn check_layout(problem: &HierarchyProblem, k: &CorrelationGrid) -> Result<()> {
    if k.marks() != problem.marks() {
        return Err(Error::DimensionMismatch {
            expected: problem.marks(),
            got: k.marks(),
        });
    }
    if let Some(g) = k.grid() {
        if g != problem.grid() {
            return Err(Error::Representation(
                "grid differs from the problem grid".into(),
            ));
        }
    }
    if k.order() == 0 {
        return Err(Error::Representation("order must be at least 1".into()));
    }
    Ok(())
}

/// `sum_i A_i k` with `A_i = kappa a(x_i, .)` acting on slot `i`.
pub(crate) fn birth_sum(problem: &HierarchyProblem, k: &CorrelationGrid, kappa: f64) -> Vec<f64> {
    let n = k.order();
    let m = problem.marks();
    if k.representation() == Representation::MarkOnly {
        return apply_slots_real(&problem.weighted, m, n, kappa, k.values());
    }
    let mut data = problem.spectral.to_fourier(k);
    let repr = k.representation();
    let grid = k.grid();
    let ml = k.mark_len();
    data.par_chunks_mut(ml).enumerate().for_each_init(
        || {
            (
                vec![Complex64::new(0.0, 0.0); n],
                vec![Complex64::new(0.0, 0.0); ml],
            )
        },
        |(mults, out), (idx, block)| {
            slot_multipliers(repr, n, grid, &problem.multipliers, kappa, idx, mults);
            apply_slots(&problem.weighted, m, n, mults, block, out);
            block.copy_from_slice(out);
        },
    );
    problem.spectral.to_real(data, k)
}

/// `L*_n k = -n k + sum_i A_i k`.
pub fn apply_lstar(problem: &HierarchyProblem, k: &CorrelationGrid) -> Result<CorrelationGrid> {
    check_layout(problem, k)?;
    let n = k.order() as f64;
    let mut values = birth_sum(problem, k, problem.kappa());
    values
        .iter_mut()
        .zip(k.values())
        .for_each(|(v, k)| *v -= n * k);
    Ok(k.with_values(values))
}

fn nonnegative(values: &[f64]) -> bool {
    let scale = values.iter().fold(1.0, |m: f64, v| m.max(v.abs()));
    values.iter().all(|&v| v >= -POSITIVITY_TOLERANCE * scale)
}

/// Zeroes roundoff-level negatives; larger ones are an error.
fn enforce_positivity(order: usize, values: &mut [f64]) -> Result<()> {
    let scale = values.iter().fold(1.0, |m: f64, v| m.max(v.abs()));
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -POSITIVITY_TOLERANCE * scale {
        return Err(Error::Positivity { order, min });
    }
    values.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(())
}

/// `(-L*_n)^{-1} f = (1/n) sum_{m<M} A^m f` with `A = (1/n) sum_i A_i`.
///
/// When `f` is nonnegative the output is checked to be nonnegative as well.
pub fn resolvent_neumann(problem: &HierarchyProblem, f: &SourceTerm) -> Result<CorrelationGrid> {
    check_layout(problem, f)?;
    let n = f.order();
    let nf = n as f64;
    let m = problem.marks();
    let kappa = problem.kappa();
    let settings = problem.settings();
    let terms = neumann_terms(kappa, settings.tolerance, settings.neumann_budget)?;

    let mut values = if f.representation() == Representation::MarkOnly {
        let mut term = f.values().to_vec();
        let mut sum = term.clone();
        for _ in 1..terms {
            term = apply_slots_real(&problem.weighted, m, n, kappa / nf, &term);
            sum.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
        }
        sum.iter_mut().for_each(|s| *s /= nf);
        sum
    } else {
        let mut data = problem.spectral.to_fourier(f);
        let repr = f.representation();
        let grid = f.grid();
        let ml = f.mark_len();
        let zero = Complex64::new(0.0, 0.0);
        data.par_chunks_mut(ml).enumerate().for_each_init(
            || (vec![zero; n], vec![zero; ml], vec![zero; ml]),
            |(mults, term, next), (idx, block)| {
                slot_multipliers(repr, n, grid, &problem.multipliers, kappa / nf, idx, mults);
                term.copy_from_slice(block);
                for _ in 1..terms {
                    apply_slots(&problem.weighted, m, n, mults, term, next);
                    std::mem::swap(term, next);
                    block.iter_mut().zip(term.iter()).for_each(|(b, t)| *b += t);
                }
                block.iter_mut().for_each(|b| *b /= nf);
            },
        );
        problem.spectral.to_real(data, f)
    };
    if nonnegative(f.values()) {
        enforce_positivity(n, &mut values)?;
    }
    Ok(f.with_values(values))
}

/// Source term `f^(n)` built from `k^(n-1)`; `f^(1) = c`.
///
/// `repr` selects the layout of the result for `n >= 2`.
pub fn assemble_source(
    problem: &HierarchyProblem,
    n: usize,
    k_prev: &CorrelationGrid,
    repr: Representation,
) -> Result<SourceTerm> {
    let marks = problem.marks();
    let c = problem.model().immigration().values();
    if n == 0 || k_prev.order() != n - 1 {
        return Err(Error::Representation(format!(
            "source of order {n} needs k of order {}, got order {}",
            n.saturating_sub(1),
            k_prev.order()
        )));
    }
    if k_prev.marks() != marks {
        return Err(Error::DimensionMismatch {
            expected: marks,
            got: k_prev.marks(),
        });
    }
    if n == 1 {
        return Ok(SourceTerm(CorrelationGrid::mark_vector(c.to_vec())));
    }
    if repr == Representation::MarkOnly {
        return Err(Error::Representation(
            "sources of order >= 2 depend on positions; use a difference or full layout".into(),
        ));
    }
    if let Some(g) = k_prev.grid() {
        if g != problem.grid() {
            return Err(Error::Representation(
                "grid differs from the problem grid".into(),
            ));
        }
    }
    let grid = *problem.grid();
    let len = storage_len(n, repr, Some(&grid), marks);
    if len > problem.settings().memory_budget {
        return Err(Error::MemoryBudget {
            order: n,
            values: len,
            budget: problem.settings().memory_budget,
        });
    }
    let template = CorrelationGrid::layout(n, repr, Some(grid), marks);
    let kappa = problem.kappa();
    let alpha = problem.kernel_values();
    let kernel = problem.model().kernel();

    let mut values = vec![0.0; len];
    values.par_iter_mut().enumerate().for_each_init(
        || (vec![0; n], vec![0; n], vec![0; n - 1], vec![0; n - 1]),
        |(cells, ms, rc, rm), (idx, out)| {
            template.decode(idx, cells, ms);
            let mut total = 0.0;
            for i in 0..n {
                let mut pos = 0;
                let mut births = 0.0;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    rc[pos] = cells[j];
                    rm[pos] = ms[j];
                    pos += 1;
                    births += alpha[grid.sub(cells[i], cells[j])] * kernel.entry(ms[i], ms[j]);
                }
                total += k_prev.eval(rc, rm) * (kappa * births + c[ms[i]]);
            }
            *out = total;
        },
    );
    Ok(SourceTerm(CorrelationGrid::from_values(
        n,
        repr,
        Some(grid),
        marks,
        values,
    )?))
}

/// Fourier coefficients of the regular part of the unmarked pair function,
/// `rho kappa s / (2 - kappa s)` with `s = alpha_hat(p) + alpha_hat(-p)`.
pub fn warmup_regular_spectrum(problem: &HierarchyProblem) -> Result<Vec<Complex64>> {
    if problem.marks() != 1 {
        return Err(Error::Representation(
            "the closed form needs a single-point mark space".into(),
        ));
    }
    let kappa = problem.kappa();
    let c = problem.model().immigration().values()[0];
    let rho = c / (1.0 - kappa);
    let grid = problem.grid();
    Ok((0..grid.cells())
        .map(|cell| {
            let s = problem.multipliers[cell] + problem.multipliers[grid.neg(cell)];
            rho * kappa * s / (2.0 - kappa * s)
        })
        .collect())
}

/// Unmarked pair function in closed form: `rho^2` plus the inverse transform of
/// the regular part.
pub fn solve_k2_unmarked(problem: &HierarchyProblem) -> Result<CorrelationGrid> {
    let mut data = warmup_regular_spectrum(problem)?;
    let grid = *problem.grid();
    let c = problem.model().immigration().values()[0];
    let rho = c / (1.0 - problem.kappa());
    problem.spectral.transform(&mut data, grid.dim(), 1, true);
    let scale = (grid.points() as f64 / grid.side()).powi(grid.dim() as i32);
    let values = data.iter().map(|v| rho * rho + v.re * scale).collect();
    CorrelationGrid::from_values(2, Representation::Difference, Some(grid), 1, values)
}

/// Constants of the growth bound `k^(n) <= D H^n n! prod q`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    /// `sup k^(n) / (n! prod q)` for `n = 1..=n_max`.
    pub ratios: Vec<f64>,
    pub h: f64,
    pub d: f64,
}

impl GrowthReport {
    pub fn from_ratios(ratios: Vec<f64>) -> Self {
        let h = if ratios.len() == 1 {
            ratios[0]
        } else {
            // least-squares fit of ln ratio_n = ln D + n ln H
            let pts: Vec<(f64, f64)> = ratios
                .iter()
                .enumerate()
                .map(|(i, r)| ((i + 1) as f64, r.ln()))
                .collect();
            let len = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / len;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            (sxy / sxx).exp()
        };
        let d = ratios
            .iter()
            .enumerate()
            .map(|(i, r)| r / h.powi(i as i32 + 1))
            .fold(0.0, f64::max);
        Self { ratios, h, d }
    }
}

#[derive(Debug, Clone)]
pub struct StationarySolution {
    /// `k^(1)..k^(n_max)`.
    pub orders: Vec<CorrelationGrid>,
    pub growth: GrowthReport,
}

impl StationarySolution {
    pub fn order(&self, n: usize) -> &CorrelationGrid {
        &self.orders[n - 1]
    }

    pub fn k1(&self) -> &[f64] {
        self.orders[0].values()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Solves the stationary hierarchy order by order up to `n_max`; orders
/// `n >= 2` use layout `repr`.
pub fn solve_stationary(
    problem: &HierarchyProblem,
    n_max: usize,
    repr: Representation,
) -> Result<StationarySolution> {
    if n_max == 0 {
        return Err(Error::invalid("solver.n_max", "must be >= 1"));
    }
    let budget = problem.settings().memory_budget;
    for n in 2..=n_max {
        let values = storage_len(n, repr, Some(problem.grid()), problem.marks());
        if values > budget {
            return Err(Error::MemoryBudget {
                order: n,
                values,
                budget,
            });
        }
    }
    let k1 = solve_k1(problem.model(), problem.settings().tolerance)?;
    let mut orders = vec![k1];
    for n in 2..=n_max {
        let f = assemble_source(problem, n, &orders[n - 2], repr)?;
        let mut k = resolvent_neumann(problem, &f)?;
        enforce_positivity(n, k.values_mut())?;
        orders.push(k);
    }
    let q = problem.model().q();
    let ratios = orders
        .iter()
        .map(|k| k.weighted_sup(q) / factorial(k.order()))
        .collect();
    Ok(StationarySolution {
        orders,
        growth: GrowthReport::from_ratios(ratios),
    })
}
