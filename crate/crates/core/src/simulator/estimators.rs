use super::{Configuration, EventKind, EventRecord, Rates, SimParams};
use crate::dispersal::ball_volume;
use crate::error::{Error, Result};

/// Accumulators of one time batch `[burn_in + b w, burn_in + (b + 1) w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub time: f64,
    /// `int n_s(t) dt` per mark.
    pub counts: Vec<f64>,
    pub snapshots: u64,
    /// Ordered-pair counts, indexed `(mark_i * m + mark_j) * bins + bin`.
    pub pairs: Vec<u64>,
    /// Ordered pairs farther apart than the histogram range.
    pub overflow: u64,
    /// All ordered pairs seen, `sum N (N - 1)` over snapshots.
    pub pair_total: u64,
}

/// Event bookkeeping of one replica over the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct EventCounts {
    pub replica: usize,
    pub births: u64,
    pub deaths: u64,
    pub immigrations: u64,
    pub initial_size: usize,
    pub final_size: usize,
    pub max_population: usize,
    /// `int rate dt` of deaths, contact births and immigrations.
    pub rate_integrals: [f64; 3],
    /// Birth counts indexed `parent * m + child`.
    pub offspring: Vec<u64>,
}

impl EventCounts {
    /// `births + immigrations - deaths == final - initial`.
    pub fn balanced(&self) -> bool {
        self.births as i128 + self.immigrations as i128 - self.deaths as i128
            == self.final_size as i128 - self.initial_size as i128
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorAccumulators {
    pub marks: usize,
    pub dim: usize,
    pub side: f64,
    pub weights: Vec<f64>,
    pub bin_width: f64,
    pub max_radius: f64,
    pub bins: usize,
    pub batches: Vec<Batch>,
    pub events: Vec<EventCounts>,
    burn_in: f64,
    horizon: f64,
    batch_width: f64,
    snapshot_interval: f64,
    next_snapshot: usize,
}

impl EstimatorAccumulators {
    pub(crate) fn new(params: &SimParams, replica: usize, initial: &Configuration) -> Self {
        let m = params.model.marks();
        let bins = params.bins();
        let batch = Batch {
            time: 0.0,
            counts: vec![0.0; m],
            snapshots: 0,
            pairs: vec![0; m * m * bins],
            overflow: 0,
            pair_total: 0,
        };
        Self {
            marks: m,
            dim: params.model.dim(),
            side: params.model.side(),
            weights: params.model.kernel().marks().weights().to_vec(),
            bin_width: params.bin_width,
            max_radius: params.max_radius,
            bins,
            batches: vec![batch; params.batches],
            events: vec![EventCounts {
                replica,
                births: 0,
                deaths: 0,
                immigrations: 0,
                initial_size: initial.len(),
                final_size: initial.len(),
                max_population: initial.len(),
                rate_integrals: [0.0; 3],
                offspring: vec![0; m * m],
            }],
            burn_in: params.burn_in,
            horizon: params.horizon,
            batch_width: (params.horizon - params.burn_in) / params.batches as f64,
            snapshot_interval: params.snapshot_interval,
            next_snapshot: 0,
        }
    }

    fn live(&mut self) -> &mut EventCounts {
        self.events.last_mut().expect("one replica")
    }

    /// The configuration `cfg` held on `[t0, t1)` under `rates`.
    pub(crate) fn observe_interval(
        &mut self,
        cfg: &Configuration,
        rates: &Rates,
        t0: f64,
        t1: f64,
    ) {
        let span = t1 - t0;
        let n = cfg.len();
        {
            let live = self.live();
            live.rate_integrals[0] += rates.death * span;
            live.rate_integrals[1] += rates.contact * span;
            live.rate_integrals[2] += rates.immigration * span;
            live.max_population = live.max_population.max(n);
        }
        let start = t0.max(self.burn_in);
        if t1 > start {
            let nb = self.batches.len();
            let first = (((start - self.burn_in) / self.batch_width) as usize).min(nb - 1);
            for b in first..nb {
                let lo = self.burn_in + b as f64 * self.batch_width;
                let hi = if b + 1 == nb {
                    self.horizon
                } else {
                    lo + self.batch_width
                };
                if lo >= t1 {
                    break;
                }
                let overlap = t1.min(hi) - start.max(lo);
                if overlap > 0.0 {
                    let batch = &mut self.batches[b];
                    batch.time += overlap;
                    for (s, c) in batch.counts.iter_mut().enumerate() {
                        *c += cfg.count(s) as f64 * overlap;
                    }
                }
            }
        }
        loop {
            let tau = self.burn_in + (self.next_snapshot as f64 + 0.5) * self.snapshot_interval;
            if tau >= t1 || tau >= self.horizon {
                break;
            }
            if tau >= t0 {
                let b = (((tau - self.burn_in) / self.batch_width) as usize)
                    .min(self.batches.len() - 1);
                self.snapshot(cfg, b);
            }
            self.next_snapshot += 1;
        }
    }

    fn snapshot(&mut self, cfg: &Configuration, b: usize) {
        let d = self.dim;
        let m = self.marks;
        let side = self.side;
        let bins = self.bins;
        let (width, max_r) = (self.bin_width, self.max_radius);
        let batch = &mut self.batches[b];
        batch.snapshots += 1;
        let n = cfg.len() as u64;
        batch.pair_total += n * n.saturating_sub(1);
        for si in 0..m {
            let xi = cfg.positions(si);
            for sj in si..m {
                let xj = cfg.positions(sj);
                for (a, pa) in xi.chunks_exact(d).enumerate() {
                    let start = if si == sj { a + 1 } else { 0 };
                    for pb in xj.chunks_exact(d).skip(start) {
                        let r2: f64 = pa
                            .iter()
                            .zip(pb)
                            .map(|(x, y)| {
                                let dx = (x - y).abs();
                                let dx = dx.min(side - dx);
                                dx * dx
                            })
                            .sum();
                        let r = r2.sqrt();
                        if r <= max_r {
                            let bin = ((r / width) as usize).min(bins - 1);
                            batch.pairs[(si * m + sj) * bins + bin] += 1;
                            batch.pairs[(sj * m + si) * bins + bin] += 1;
                        } else {
                            batch.overflow += 2;
                        }
                    }
                }
            }
        }
    }

    pub(crate) fn record_event(&mut self, record: &EventRecord) {
        let m = self.marks;
        let live = self.live();
        match record.kind {
            EventKind::Death => live.deaths += 1,
            EventKind::Immigration => live.immigrations += 1,
            EventKind::Birth => {
                live.births += 1;
                if let Some(parent) = record.parent_mark {
                    live.offspring[parent * m + record.particle.mark] += 1;
                }
            }
        }
    }

    pub(crate) fn finish(&mut self, cfg: &Configuration) {
        self.live().final_size = cfg.len();
    }

    /// Pools two runs of the same model; batches and event logs are concatenated.
    pub fn merge(mut self, other: Self) -> Result<Self> {
        if self.marks != other.marks
            || self.dim != other.dim
            || self.side != other.side
            || self.bins != other.bins
            || self.bin_width != other.bin_width
            || self.max_radius != other.max_radius
        {
            return Err(Error::Statistics(
                "cannot merge accumulators of different runs".into(),
            ));
        }
        self.batches.extend(other.batches);
        self.events.extend(other.events);
        Ok(self)
    }

    /// Histogram edges `0, w, 2w, ..., max_radius`.
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins)
            .map(|b| (b as f64 * self.bin_width).min(self.max_radius))
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    /// Time-averaged particle number after burn-in.
    pub fn mean_population(&self) -> f64 {
        let time: f64 = self.batches.iter().map(|b| b.time).sum();
        let count: f64 = self.batches.iter().flat_map(|b| &b.counts).sum();
        count / time
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkEstimate {
    pub mark: usize,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairBin {
    pub r_lo: f64,
    pub r_hi: f64,
    pub mark_i: usize,
    pub mark_j: usize,
    /// `None` for bins without any pair.
    pub estimate: Option<f64>,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairCorrelation {
    pub edges: Vec<f64>,
    pub bins: Vec<PairBin>,
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-mark density `int n_s dt / (T L^d nu(s))` with batch-means standard errors.
pub fn estimate_k1(acc: &EstimatorAccumulators) -> Result<Vec<MarkEstimate>> {
    let batches: Vec<&Batch> = acc.batches.iter().filter(|b| b.time > 0.0).collect();
    if batches.is_empty() {
        return Err(Error::Statistics(
            "no accumulated time after burn-in".into(),
        ));
    }
    if batches.len() < 2 {
        return Err(Error::Statistics(
            "standard errors need at least two batches".into(),
        ));
    }
    let vol = acc.volume();
    Ok((0..acc.marks)
        .map(|s| {
            let samples: Vec<f64> = batches
                .iter()
                .map(|b| b.counts[s] / (b.time * vol * acc.weights[s]))
                .collect();
            let (estimate, stderr) = mean_and_stderr(&samples);
            MarkEstimate {
                mark: s,
                estimate,
                stderr,
            }
        })
        .collect())
}

/// Binned pair correlation per ordered mark pair: pair counts normalized by
/// snapshots, `L^d`, shell volume and `nu(i) nu(j)`, so a Poisson field of
/// density `rho` gives `rho^2`.
pub fn estimate_pair_correlation(acc: &EstimatorAccumulators) -> Result<PairCorrelation> {
    let batches: Vec<&Batch> = acc.batches.iter().filter(|b| b.snapshots > 0).collect();
    if batches.len() < 2 {
        return Err(Error::Statistics(
            "pair estimates need snapshots in at least two batches".into(),
        ));
    }
    let edges = acc.edges();
    let vol = acc.volume();
    let m = acc.marks;
    let mut out = Vec::with_capacity(m * m * acc.bins);
    for i in 0..m {
        for j in 0..m {
            for b in 0..acc.bins {
                let (lo, hi) = (edges[b], edges[b + 1]);
                let shell = ball_volume(acc.dim, hi) - ball_volume(acc.dim, lo);
                let norm = vol * shell * acc.weights[i] * acc.weights[j];
                let idx = (i * m + j) * acc.bins + b;
                let total: u64 = batches.iter().map(|x| x.pairs[idx]).sum();
                let (estimate, stderr) = if total == 0 {
                    (None, None)
                } else {
                    let samples: Vec<f64> = batches
                        .iter()
                        .map(|x| x.pairs[idx] as f64 / (x.snapshots as f64 * norm))
                        .collect();
                    let (mean, se) = mean_and_stderr(&samples);
                    (Some(mean), Some(se))
                };
                out.push(PairBin {
                    r_lo: lo,
                    r_hi: hi,
                    mark_i: i,
                    mark_j: j,
                    estimate,
                    stderr,
                });
            }
        }
    }
    Ok(PairCorrelation { edges, bins: out })
}
