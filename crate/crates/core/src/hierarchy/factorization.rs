use rayon::prelude::*;

use super::grid::{CorrelationGrid, Representation};
use crate::error::{Error, Result};

/// Deviation from the product of one-point densities, as a function of the
/// minimal pairwise separation.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationReport {
    pub order: usize,
    pub radii: Vec<f64>,
    /// `max |k^(n) - prod k1|` over stored configurations whose points are
    /// pairwise at least `radii[j]` apart; `None` if no configuration qualifies.
    pub deviations: Vec<Option<f64>>,
}

impl FactorizationReport {
    pub fn is_non_increasing(&self) -> bool {
        let vals: Vec<f64> = self.deviations.iter().flatten().copied().collect();
        vals.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn at(&self, radius: f64) -> Option<f64> {
        self.radii
            .iter()
            .position(|r| (r - radius).abs() <= 1e-12 * radius.abs().max(1.0))
            .and_then(|j| self.deviations[j])
    }
}

pub fn check_factorization(
    k: &CorrelationGrid,
    k1: &[f64],
    radii: &[f64],
) -> Result<FactorizationReport> {
    let n = k.order();
    if n < 2 {
        return Err(Error::Representation(
            "factorization needs order >= 2".into(),
        ));
    }
    if k1.len() != k.marks() {
        return Err(Error::DimensionMismatch {
            expected: k.marks(),
            got: k1.len(),
        });
    }
    let grid = match (k.representation(), k.grid()) {
        (Representation::MarkOnly, _) | (_, None) => {
            return Err(Error::Representation(
                "factorization needs a spatial layout".into(),
            ))
        }
        (_, Some(g)) => *g,
    };
    let slack = 1e-9 * grid.spacing();
    let deviations = k
        .values()
        .par_iter()
        .enumerate()
        .fold(
            || (vec![None::<f64>; radii.len()], vec![0; n], vec![0; n]),
            |(mut acc, mut cells, mut marks), (idx, v)| {
                k.decode(idx, &mut cells, &mut marks);
                let mut sep = f64::INFINITY;
                for i in 0..n {
                    for j in i + 1..n {
                        sep = sep.min(grid.torus_norm(grid.sub(cells[i], cells[j])));
                    }
                }
                let product: f64 = marks.iter().map(|&s| k1[s]).product();
                let dev = (v - product).abs();
                for (a, r) in acc.iter_mut().zip(radii) {
                    if sep >= r - slack {
                        *a = Some(a.map_or(dev, |x: f64| x.max(dev)));
                    }
                }
                (acc, cells, marks)
            },
        )
        .map(|(acc, _, _)| acc)
        .reduce(
            || vec![None; radii.len()],
            |a, b| {
                a.into_iter()
                    .zip(b)
                    .map(|(x, y)| match (x, y) {
                        (Some(x), Some(y)) => Some(x.max(y)),
                        (x, None) => x,
                        (None, y) => y,
                    })
                    .collect()
            },
        );
    Ok(FactorizationReport {
        order: n,
        radii: radii.to_vec(),
        deviations,
    })
}

/// Average of an order-2 difference grid over separation shells `[edges[b], edges[b+1])`
/// for the mark pair `(i, j)`. Grid points on a shell edge count half to each side.
pub fn shell_average(
    k: &CorrelationGrid,
    marks: (usize, usize),
    edges: &[f64],
) -> Result<Vec<Option<f64>>> {
    let grid = match (k.order(), k.representation(), k.grid()) {
        (2, Representation::Difference, Some(g)) => *g,
        _ => {
            return Err(Error::Representation(
                "shell averages need an order-2 difference grid".into(),
            ))
        }
    };
    if marks.0 >= k.marks() || marks.1 >= k.marks() {
        return Err(Error::invalid("marks", "mark index out of range"));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "edges",
            "need at least two increasing bin edges",
        ));
    }
    let bins = edges.len() - 1;
    let mut sum = vec![0.0; bins];
    let mut weight = vec![0.0; bins];
    let slack = 1e-9 * grid.spacing();
    let ml = k.mark_len();
    let offset = marks.0 * k.marks() + marks.1;
    for cell in 0..grid.cells() {
        let r = grid.torus_norm(cell);
        let v = k.values()[cell * ml + offset];
        for b in 0..bins {
            let (lo, hi) = (edges[b], edges[b + 1]);
            let w = if (r - lo).abs() <= slack || (r - hi).abs() <= slack {
                0.5
            } else if r > lo && r < hi {
                1.0
            } else {
                0.0
            };
            sum[b] += w * v;
            weight[b] += w;
        }
    }
    Ok(sum
        .iter()
        .zip(&weight)
        .map(|(s, w)| if *w > 0.0 { Some(s / w) } else { None })
        .collect())
}
