use super::grid::{CorrelationGrid, Representation};
use super::solve::{assemble_source, birth_sum};
use super::HierarchyProblem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CauchySettings {
    pub horizon: f64,
    /// Step size; defaults to `0.1 / (n_max (1 + kappa))`.
    pub dt: Option<f64>,
    /// Record the deviation every this many steps (the last step is always recorded).
    pub record_every: usize,
}

impl Default for CauchySettings {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            dt: None,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    /// `deviations[n - 1][j] = sup |k^(n)(times[j]) - k_c^(n)|`.
    pub deviations: Vec<Vec<f64>>,
    pub final_state: Vec<CorrelationGrid>,
}

impl Trajectory {
    pub fn deviation(&self, n: usize) -> &[f64] {
        &self.deviations[n - 1]
    }

    /// Fitted exponential decay rate of the order-`n` deviation on `[t0, t1]`.
    pub fn decay_rate(&self, n: usize, t0: f64, t1: f64) -> Option<f64> {
        fit_decay_rate(&self.times, self.deviation(n), t0, t1)
    }
}

/// Least-squares slope of `-ln v(t)` over `t` in `[t0, t1]`; values at the
/// roundoff floor (below `1e-11` of the largest) are skipped.
pub fn fit_decay_rate(times: &[f64], values: &[f64], t0: f64, t1: f64) -> Option<f64> {
    let top = values.iter().copied().fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= t0 && **t <= t1 && **v > 1e-11 * top && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let len = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let stv: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
    if stt == 0.0 {
        return None;
    }
    Some(-stv / stt)
}

/// Zero initial data in the layouts of `reference`.
pub fn zero_initial(reference: &[CorrelationGrid]) -> Vec<CorrelationGrid> {
    reference
        .iter()
        .map(|k| k.with_values(vec![0.0; k.values().len()]))
        .collect()
}

/// Poisson-like initial data `k^(n) = v^n`.
pub fn constant_initial(reference: &[CorrelationGrid], v: f64) -> Vec<CorrelationGrid> {
    reference
        .iter()
        .map(|k| k.with_values(vec![v.powi(k.order() as i32); k.values().len()]))
        .collect()
}

/// Integrates `dk^(n)/dt = L*_n k^(n) + f^(n)(t)` from `initial` with an
/// exponential-Euler scheme and records the distance to `reference`.
pub fn evolve_cauchy(
    problem: &HierarchyProblem,
    initial: &[CorrelationGrid],
    reference: &[CorrelationGrid],
    settings: &CauchySettings,
) -> Result<Trajectory> {
    let n_max = initial.len();
    if n_max == 0 {
        return Err(Error::invalid("initial", "at least one order is required"));
    }
    if reference.len() != n_max {
        return Err(Error::DimensionMismatch {
            expected: n_max,
            got: reference.len(),
        });
    }
    for (i, (k0, kc)) in initial.iter().zip(reference).enumerate() {
        if k0.order() != i + 1 || !k0.same_layout(kc) {
            return Err(Error::Representation(format!(
                "initial order {} does not match the reference layout",
                i + 1
            )));
        }
        if i > 0 && k0.representation() == Representation::MarkOnly {
            return Err(Error::Representation(
                "orders >= 2 need a spatial layout".into(),
            ));
        }
    }
    if !(settings.horizon.is_finite() && settings.horizon > 0.0) {
        return Err(Error::invalid("solver.horizon", "must be positive"));
    }
    let kappa = problem.kappa();
    let stiffness = n_max as f64 * (1.0 + kappa);
    let dt = settings.dt.unwrap_or(0.1 / stiffness);
    if !(dt > 0.0 && dt * stiffness < 1.0) {
        return Err(Error::invalid(
            "solver.dt",
            format!(
                "dt * n_max * (1 + kappa) must be in (0, 1), got {}",
                dt * stiffness
            ),
        ));
    }
    let steps = (settings.horizon / dt).ceil().max(1.0) as usize;
    let dt = settings.horizon / steps as f64;
    let every = settings.record_every.max(1);

    let q = problem.model().q();
    let bounds: Vec<f64> = initial
        .iter()
        .zip(reference)
        .map(|(a, b)| 10.0 * (a.weighted_sup(q) + b.weighted_sup(q)) + 1.0)
        .collect();
    let c = problem.model().immigration().values();

    let mut state = initial.to_vec();
    let mut times = vec![0.0];
    let mut deviations: Vec<Vec<f64>> = state
        .iter()
        .zip(reference)
        .map(|(k, r)| vec![k.sup_distance(r).unwrap_or(f64::NAN)])
        .collect();

    for step in 1..=steps {
        let mut next = Vec::with_capacity(n_max);
        for (i, k) in state.iter().enumerate() {
            let n = i + 1;
            let source = if n == 1 {
                c.to_vec()
            } else {
                assemble_source(problem, n, &state[i - 1], k.representation())?
                    .0
                    .into_values()
            };
            let births = birth_sum(problem, k, kappa);
            let decay = (-(n as f64) * dt).exp();
            let gain = (1.0 - decay) / n as f64;
            let values: Vec<f64> = k
                .values()
                .iter()
                .zip(births.iter().zip(&source))
                .map(|(v, (b, f))| decay * v + gain * (b + f))
                .collect();
            let updated = k.with_values(values);
            let norm = updated.weighted_sup(q);
            let finite = updated.values().iter().all(|v| v.is_finite());
            if !finite || norm > bounds[i] {
                return Err(Error::Instability {
                    order: n,
                    time: step as f64 * dt,
                    norm: if finite { norm } else { f64::NAN },
                    bound: bounds[i],
                });
            }
            next.push(updated);
        }
        state = next;
        if step % every == 0 || step == steps {
            times.push(step as f64 * dt);
            for (dev, (k, r)) in deviations.iter_mut().zip(state.iter().zip(reference)) {
                dev.push(k.sup_distance(r)?);
            }
        }
    }
    Ok(Trajectory {
        dt,
        times,
        deviations,
        final_state: state,
    })
}
