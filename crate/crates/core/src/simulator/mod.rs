//! Exact-event simulation of the marked contact process with immigration on
//! the torus `[0, L)^d`.
//!
//! Every particle dies at rate 1. A particle with mark `s'` produces
//! offspring at total rate `kappa B(s')`, `B(s') = sum_s Q(s, s') nu(s)`; the
//! child mark is drawn from `Q(., s') nu / B(s')` and the child is displaced
//! by a dispersal draw wrapped onto the torus. Immigrants arrive at rate
//! `L^d sum_s c(s) nu(s)`, uniformly in space with mark law `c nu`.

mod estimators;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ContactModel;

pub use estimators::{
    estimate_k1, estimate_pair_correlation, Batch, EstimatorAccumulators, EventCounts,
    MarkEstimate, PairBin, PairCorrelation,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub mark: usize,
}

/// Particles grouped by mark, positions stored flat (`d` coordinates each).
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    dim: usize,
    side: f64,
    positions: Vec<Vec<f64>>,
    time: f64,
}

impl Configuration {
    pub fn empty(dim: usize, side: f64, marks: usize) -> Self {
        Self {
            dim,
            side,
            positions: vec![Vec::new(); marks],
            time: 0.0,
        }
    }

    pub fn from_particles(
        dim: usize,
        side: f64,
        marks: usize,
        particles: &[Particle],
    ) -> Result<Self> {
        let mut cfg = Self::empty(dim, side, marks);
        for p in particles {
            cfg.insert(p)?;
        }
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.positions.iter().map(|p| p.len()).sum::<usize>() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn marks(&self) -> usize {
        self.positions.len()
    }

    /// Number of particles carrying `mark`.
    pub fn count(&self, mark: usize) -> usize {
        self.positions[mark].len() / self.dim
    }

    /// Flat coordinates of the particles with `mark`.
    pub fn positions(&self, mark: usize) -> &[f64] {
        &self.positions[mark]
    }

    pub fn particles(&self) -> impl Iterator<Item = Particle> + '_ {
        self.positions
            .iter()
            .enumerate()
            .flat_map(move |(mark, flat)| {
                flat.chunks_exact(self.dim).map(move |x| Particle {
                    position: x.to_vec(),
                    mark,
                })
            })
    }

    pub fn insert(&mut self, particle: &Particle) -> Result<()> {
        if particle.position.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: particle.position.len(),
            });
        }
        if particle.mark >= self.marks() {
            return Err(Error::invalid("particle.mark", "mark index out of range"));
        }
        if particle
            .position
            .iter()
            .any(|x| !(x.is_finite() && *x >= 0.0 && *x < self.side))
        {
            return Err(Error::invalid("particle.position", "must lie in [0, L)^d"));
        }
        self.positions[particle.mark].extend_from_slice(&particle.position);
        Ok(())
    }

    /// Removes the `index`-th particle of `mark` (swap-remove).
    pub fn remove(&mut self, mark: usize, index: usize) -> Particle {
        let d = self.dim;
        let flat = &mut self.positions[mark];
        let last = flat.len() / d - 1;
        let position = flat[index * d..(index + 1) * d].to_vec();
        if index != last {
            let (head, tail) = flat.split_at_mut(last * d);
            head[index * d..(index + 1) * d].copy_from_slice(tail);
        }
        flat.truncate(last * d);
        Particle { position, mark }
    }
}

/// Simulation settings on top of the (renormalized) model.
#[derive(Debug, Clone)]
pub struct SimParams {
    pub model: ContactModel,
    pub seed: u64,
    pub horizon: f64,
    pub burn_in: f64,
    pub replicas: usize,
    pub population_cap: usize,
    /// Pair histogram bin width.
    pub bin_width: f64,
    /// Histogram range `(0, max_radius]`; at most `L/2`.
    pub max_radius: f64,
    /// Spacing of the configuration snapshots used for pair counts.
    pub snapshot_interval: f64,
    /// Batches per replica for the standard errors.
    pub batches: usize,
}

impl SimParams {
    /// Defaults: cap `1e6`, bins of a tenth of the dispersal scale up to `L/2`,
    /// one snapshot per unit time, five batches.
    pub fn new(
        model: ContactModel,
        seed: u64,
        horizon: f64,
        burn_in: f64,
        replicas: usize,
    ) -> Self {
        let bin_width = model.dispersal().rms_std() / 10.0;
        let max_radius = model.side() / 2.0;
        Self {
            model,
            seed,
            horizon,
            burn_in,
            replicas,
            population_cap: 1_000_000,
            bin_width,
            max_radius,
            snapshot_interval: 1.0,
            batches: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.burn_in >= 0.0 && self.horizon.is_finite() && self.horizon > self.burn_in) {
            return Err(Error::invalid(
                "simulation.horizon",
                format!(
                    "need horizon > burn_in >= 0, got {} and {}",
                    self.horizon, self.burn_in
                ),
            ));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("simulation.replicas", "must be >= 1"));
        }
        if self.batches == 0 {
            return Err(Error::invalid("simulation.batches", "must be >= 1"));
        }
        if self.population_cap == 0 {
            return Err(Error::invalid("simulation.population_cap", "must be >= 1"));
        }
        if !(self.bin_width > 0.0) {
            return Err(Error::invalid("simulation.bin_width", "must be positive"));
        }
        if !(self.max_radius > 0.0 && self.max_radius <= self.model.side() / 2.0 * (1.0 + 1e-12)) {
            return Err(Error::invalid(
                "simulation.max_radius",
                "must be in (0, L/2]",
            ));
        }
        if !(self.snapshot_interval > 0.0) {
            return Err(Error::invalid(
                "simulation.snapshot_interval",
                "must be positive",
            ));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        (self.max_radius / self.bin_width - 1e-9).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub death: f64,
    pub contact: f64,
    pub immigration: f64,
}

impl Rates {
    pub fn total(&self) -> f64 {
        self.death + self.contact + self.immigration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Death,
    Birth,
    Immigration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub kind: EventKind,
    pub time: f64,
    pub particle: Particle,
    /// Mark of the parent for births.
    pub parent_mark: Option<usize>,
}

/// Precomputed rate tables of a model.
#[derive(Debug, Clone)]
pub struct Dynamics {
    model: ContactModel,
    offspring: Vec<f64>,
    child_cdf: Vec<Vec<f64>>,
    immigration_cdf: Vec<f64>,
    immigration_rate: f64,
}

fn cdf(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    let total = acc;
    out.iter_mut().for_each(|v| *v /= total);
    out
}

fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

impl Dynamics {
    pub fn new(model: &ContactModel) -> Self {
        let kernel = model.kernel();
        let nu = kernel.marks().weights();
        let m = kernel.len();
        let offspring = (0..m).map(|s| kernel.offspring_weight(s)).collect();
        let child_cdf = (0..m)
            .map(|parent| cdf((0..m).map(|s| kernel.entry(s, parent) * nu[s])))
            .collect();
        let c = model.immigration().values();
        let immigration_cdf = cdf(c.iter().zip(nu).map(|(c, n)| c * n));
        let immigration_rate = model.volume() * c.iter().zip(nu).map(|(c, n)| c * n).sum::<f64>();
        Self {
            model: model.clone(),
            offspring,
            child_cdf,
            immigration_cdf,
            immigration_rate,
        }
    }

    pub fn model(&self) -> &ContactModel {
        &self.model
    }

    /// `B(s')`, the total offspring weight of a parent with mark `s'`.
    pub fn offspring_weight(&self, mark: usize) -> f64 {
        self.offspring[mark]
    }

    /// Law of the child mark for a parent with mark `parent`.
    pub fn child_mark_law(&self, parent: usize) -> Vec<f64> {
        let c = &self.child_cdf[parent];
        (0..c.len())
            .map(|i| c[i] - if i == 0 { 0.0 } else { c[i - 1] })
            .collect()
    }

    pub fn total_rates(&self, cfg: &Configuration) -> Rates {
        let contact = self.model.kappa()
            * (0..cfg.marks())
                .map(|s| cfg.count(s) as f64 * self.offspring[s])
                .sum::<f64>();
        Rates {
            death: cfg.len() as f64,
            contact,
            immigration: self.immigration_rate,
        }
    }

    /// One Gillespie step: advances the clock and applies one event.
    pub fn step<R: Rng + ?Sized>(
        &self,
        cfg: &mut Configuration,
        rng: &mut R,
    ) -> Result<EventRecord> {
        let rates = self.total_rates(cfg);
        cfg.time += self.waiting_time(&rates, rng)?;
        Ok(self.apply_event(cfg, &rates, rng))
    }

    fn waiting_time<R: Rng + ?Sized>(&self, rates: &Rates, rng: &mut R) -> Result<f64> {
        let total = rates.total();
        if !(total > 0.0) {
            return Err(Error::invalid(
                "model.immigration",
                "total event rate is zero",
            ));
        }
        Ok(Exp::new(total)
            .map_err(|e| Error::invalid("rates", e.to_string()))?
            .sample(rng))
    }

    /// Applies one event drawn from `rates` at the current clock of `cfg`.
    fn apply_event<R: Rng + ?Sized>(
        &self,
        cfg: &mut Configuration,
        rates: &Rates,
        rng: &mut R,
    ) -> EventRecord {
        let time = cfg.time;
        let u = rng.random::<f64>() * rates.total();
        let d = cfg.dim;
        let side = cfg.side;
        if u < rates.death {
            let mark = self.pick_by(cfg, rng, |_| 1.0);
            let index = rng.random_range(0..cfg.count(mark));
            let particle = cfg.remove(mark, index);
            EventRecord {
                kind: EventKind::Death,
                time,
                particle,
                parent_mark: None,
            }
        } else if u < rates.death + rates.contact {
            let parent = self.pick_by(cfg, rng, |s| self.offspring[s]);
            let index = rng.random_range(0..cfg.count(parent));
            let mut position = cfg.positions[parent][index * d..(index + 1) * d].to_vec();
            let mut jump = vec![0.0; d];
            self.model.dispersal().sample_into(rng, &mut jump);
            for (x, j) in position.iter_mut().zip(&jump) {
                *x = wrap(*x + j, side);
            }
            let mark = pick(&self.child_cdf[parent], rng.random::<f64>());
            cfg.positions[mark].extend_from_slice(&position);
            EventRecord {
                kind: EventKind::Birth,
                time,
                particle: Particle { position, mark },
                parent_mark: Some(parent),
            }
        } else {
            let position: Vec<f64> = (0..d)
                .map(|_| wrap(rng.random::<f64>() * side, side))
                .collect();
            let mark = pick(&self.immigration_cdf, rng.random::<f64>());
            cfg.positions[mark].extend_from_slice(&position);
            EventRecord {
                kind: EventKind::Immigration,
                time,
                particle: Particle { position, mark },
                parent_mark: None,
            }
        }
    }

    /// Mark drawn with probability proportional to `count(s) * weight(s)`.
    fn pick_by<R: Rng + ?Sized>(
        &self,
        cfg: &Configuration,
        rng: &mut R,
        weight: impl Fn(usize) -> f64,
    ) -> usize {
        let m = cfg.marks();
        let total: f64 = (0..m).map(|s| cfg.count(s) as f64 * weight(s)).sum();
        let mut u = rng.random::<f64>() * total;
        let mut last = 0;
        for s in 0..m {
            let w = cfg.count(s) as f64 * weight(s);
            if w > 0.0 {
                last = s;
                if u < w {
                    return s;
                }
                u -= w;
            }
        }
        last
    }
}

fn wrap(x: f64, side: f64) -> f64 {
    let y = x.rem_euclid(side);
    // rem_euclid can round up to `side` for tiny negative inputs
    if y >= side {
        0.0
    } else {
        y
    }
}

/// Rates of `cfg` under `params`.
pub fn total_rates(cfg: &Configuration, params: &SimParams) -> Rates {
    Dynamics::new(&params.model).total_rates(cfg)
}

/// Random stream of one replica: the master seed with the replica index as stream id.
pub fn replica_rng(seed: u64, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica as u64);
    rng
}

/// Simulates one replica from `initial` (empty if `None`) up to the horizon.
pub fn run_replica(
    params: &SimParams,
    replica: usize,
    initial: Option<&Configuration>,
) -> Result<EstimatorAccumulators> {
    params.validate()?;
    let dynamics = Dynamics::new(&params.model);
    let model = &params.model;
    let mut cfg = match initial {
        Some(c) => {
            if c.dim() != model.dim() || c.marks() != model.marks() || c.side() != model.side() {
                return Err(Error::invalid(
                    "initial",
                    "configuration does not match the model",
                ));
            }
            let mut c = c.clone();
            c.time = 0.0;
            c
        }
        None => Configuration::empty(model.dim(), model.side(), model.marks()),
    };
    let mut rng = replica_rng(params.seed, replica);
    let mut acc = EstimatorAccumulators::new(params, replica, &cfg);

    loop {
        let rates = dynamics.total_rates(&cfg);
        let t0 = cfg.time;
        let t1 = t0 + dynamics.waiting_time(&rates, &mut rng)?;
        acc.observe_interval(&cfg, &rates, t0, t1.min(params.horizon));
        if t1 >= params.horizon {
            cfg.time = params.horizon;
            break;
        }
        cfg.time = t1;
        let record = dynamics.apply_event(&mut cfg, &rates, &mut rng);
        acc.record_event(&record);
        if cfg.len() > params.population_cap {
            return Err(Error::PopulationCap {
                replica,
                cap: params.population_cap,
                time: cfg.time,
            });
        }
    }
    acc.finish(&cfg);
    Ok(acc)
}

/// Runs all replicas in parallel and merges them in replica order.
pub fn run_replicas(params: &SimParams) -> Result<EstimatorAccumulators> {
    params.validate()?;
    let results: Vec<Result<EstimatorAccumulators>> = (0..params.replicas)
        .into_par_iter()
        .map(|r| run_replica(params, r, None))
        .collect();
    let mut merged: Option<EstimatorAccumulators> = None;
    for r in results {
        let acc = r?;
        merged = Some(match merged {
            None => acc,
            Some(m) => m.merge(acc)?,
        });
    }
    merged.ok_or_else(|| Error::invalid("simulation.replicas", "must be >= 1"))
}

#[cfg(test)]
mod tests;
