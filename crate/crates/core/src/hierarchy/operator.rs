//! Fourier-space action of the birth operators `A_i`.
//!
//! Spatial slots are transformed with a multi-dimensional FFT; in Fourier
//! space each `A_i` is a scalar multiplier on the frequency of slot `i`
//! times the weighted kernel acting on mark `i`, so every spatial
//! frequency carries an independent `m^n` block.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::{CorrelationGrid, Representation, TorusGrid};

pub(crate) struct Spectral {
    grid: TorusGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("grid", &self.grid)
            .finish()
    }
}

impl Spectral {
    pub(crate) fn new(grid: TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(grid.points()),
            inverse: planner.plan_fft_inverse(grid.points()),
            grid,
        }
    }

    /// In-place FFT over `axes` leading axes of length `N`, each followed by a
    /// contiguous trailing block of `block` elements.
    pub(crate) fn transform(
        &self,
        data: &mut [Complex64],
        axes: usize,
        block: usize,
        inverse: bool,
    ) {
        let n = self.grid.points();
        let fft = if inverse {
            &self.inverse
        } else {
            &self.forward
        };
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let total = data.len();
        for axis in 0..axes {
            let stride = n.pow((axes - 1 - axis) as u32) * block;
            let outer = total / (n * stride);
            for o in 0..outer {
                let base = o * n * stride;
                for inner in 0..stride {
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = data[base + j * stride + inner];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        data[base + j * stride + inner] = *v;
                    }
                }
            }
        }
        if inverse {
            let scale = 1.0 / (n.pow(axes as u32) as f64);
            data.iter_mut().for_each(|v| *v *= scale);
        }
    }

    pub(crate) fn to_fourier(&self, k: &CorrelationGrid) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = k.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let axes = k.spatial_slots() * self.grid.dim();
        self.transform(&mut data, axes, k.mark_len(), false);
        data
    }

    pub(crate) fn to_real(&self, mut data: Vec<Complex64>, like: &CorrelationGrid) -> Vec<f64> {
        let axes = like.spatial_slots() * self.grid.dim();
        self.transform(&mut data, axes, like.mark_len(), true);
        data.into_iter().map(|c| c.re).collect()
    }
}

/// Per-slot Fourier multipliers `kappa * alpha_hat` for one spatial frequency.
pub(crate) fn slot_multipliers(
    repr: Representation,
    order: usize,
    grid: Option<&TorusGrid>,
    table: &[Complex64],
    kappa: f64,
    spatial_index: usize,
    out: &mut [Complex64],
) {
    let out = &mut out[..order];
    match (repr, grid) {
        (Representation::MarkOnly, _) | (_, None) => {
            out.iter_mut().for_each(|m| *m = Complex64::new(kappa, 0.0))
        }
        (Representation::Full, Some(g)) => {
            let nc = g.cells();
            let mut rest = spatial_index;
            for m in out.iter_mut().rev() {
                *m = table[rest % nc] * kappa;
                rest /= nc;
            }
        }
        (Representation::Difference, Some(g)) => {
            let nc = g.cells();
            let mut rest = spatial_index;
            let mut sum = 0;
            for m in out[..order - 1].iter_mut().rev() {
                let f = rest % nc;
                rest /= nc;
                sum = g.add(sum, f);
                *m = table[f] * kappa;
            }
            // the last point moves every relative coordinate at once
            out[order - 1] = table[g.neg(sum)] * kappa;
        }
    }
}

/// `out = sum_i mult_i * W_i(input)` on one `m^n` mark block, where `W_i`
/// applies the weighted kernel to mark axis `i`.
pub(crate) fn apply_slots(
    weighted: &[f64],
    marks: usize,
    order: usize,
    mults: &[Complex64],
    input: &[Complex64],
    out: &mut [Complex64],
) {
    out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    if marks == 1 {
        let w = weighted[0];
        let total: Complex64 = mults[..order].iter().sum::<Complex64>() * w;
        for (o, i) in out.iter_mut().zip(input) {
            *o = total * i;
        }
        return;
    }
    let len = input.len();
    for (slot, &mult) in mults[..order].iter().enumerate() {
        let stride = marks.pow((order - 1 - slot) as u32);
        for idx in 0..len {
            let s = (idx / stride) % marks;
            let base = idx - s * stride;
            let row = &weighted[s * marks..(s + 1) * marks];
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, w) in row.iter().enumerate() {
                acc += input[base + t * stride] * w;
            }
            out[idx] += acc * mult;
        }
    }
}

/// Real-valued counterpart of [`apply_slots`] for mark-only data.
pub(crate) fn apply_slots_real(
    weighted: &[f64],
    marks: usize,
    order: usize,
    kappa: f64,
    input: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; input.len()];
    for slot in 0..order {
        let stride = marks.pow((order - 1 - slot) as u32);
        for idx in 0..input.len() {
            let s = (idx / stride) % marks;
            let base = idx - s * stride;
            let acc: f64 = (0..marks)
                .map(|t| weighted[s * marks + t] * input[base + t * stride])
                .sum();
            out[idx] += kappa * acc;
        }
    }
    out
}
