use super::*;
use crate::dispersal::DispersalKernel;
use crate::markspace::{MarkSpace, MutationKernel};
use crate::model::ImmigrationRate;

macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {:e})", $tol);
    }};
}

fn unmarked(
    kappa: f64,
    c: f64,
    alpha: DispersalKernel,
    side: f64,
    points: usize,
) -> HierarchyProblem {
    let dim = alpha.dim();
    let model = ContactModel::unmarked(kappa, c, alpha, side).unwrap();
    let grid = TorusGrid::new(dim, side, points).unwrap();
    HierarchyProblem::new(model, grid, SolverSettings::default()).unwrap()
}

fn skewed_kernel() -> MutationKernel {
    let marks = MarkSpace::new(vec!["a".into(), "b".into()], vec![0.7, 1.3]).unwrap();
    MutationKernel::new(marks, vec![vec![2.0, 1.0], vec![0.5, 3.0]]).unwrap()
}

/// Two marks, non-symmetric kernel and a shifted Gaussian dispersal.
fn marked(effective_kappa: f64, side: f64, points: usize) -> HierarchyProblem {
    let alpha = DispersalKernel::gaussian(vec![0.7], vec![vec![1.0]]).unwrap();
    let kernel = skewed_kernel();
    let r = crate::markspace::krein_rutman(&kernel, 1e-12, 100_000)
        .unwrap()
        .r;
    let model = ContactModel::new(
        kernel,
        effective_kappa / r,
        ImmigrationRate::new(vec![1.0, 2.0]).unwrap(),
        alpha,
        side,
    )
    .unwrap();
    let grid = TorusGrid::new(1, side, points).unwrap();
    HierarchyProblem::new(model, grid, SolverSettings::default()).unwrap()
}

fn gaussian(var: f64) -> DispersalKernel {
    DispersalKernel::isotropic_gaussian(1, var).unwrap()
}

#[test]
fn neumann_term_count() {
    // 0.5^41 / 0.5 < 1e-12 <= 0.5^40 / 0.5
    assert_eq!(neumann_terms(0.5, 1e-12, 1000).unwrap(), 41);
    assert_eq!(neumann_terms(0.0, 1e-12, 1000).unwrap(), 1);
    assert!(matches!(
        neumann_terms(0.99, 1e-12, 100),
        Err(Error::NeumannBudget { .. })
    ));
    assert!(neumann_terms(1.0, 1e-12, 100).is_err());
}

#[test]
fn k1_on_a_point() {
    let model = ContactModel::unmarked(0.5, 0.5, gaussian(1.0), 20.0).unwrap();
    let k1 = solve_k1(&model, 1e-12).unwrap();
    assert_close!(k1.values()[0], 1.0, 1e-12);

    let model = ContactModel::unmarked(0.0, 0.3, gaussian(1.0), 20.0).unwrap();
    assert_eq!(solve_k1(&model, 1e-12).unwrap().values(), &[0.3]);
}

#[test]
fn k1_matches_hand_inverse() {
    // Q' = [[2,1],[1,2]] / 3, kappa' = 0.6: (I - kappa' Q') = [[0.6,-0.2],[-0.2,0.6]]
    let marks = MarkSpace::uniform(2, 1.0).unwrap();
    let kernel = MutationKernel::new(marks, vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
    let model = ContactModel::new(
        kernel,
        0.2,
        ImmigrationRate::new(vec![1.0, 2.0]).unwrap(),
        gaussian(1.0),
        20.0,
    )
    .unwrap();
    assert_close!(model.kappa(), 0.6, 1e-12);
    let k1 = solve_k1(&model, 1e-12).unwrap();
    assert_close!(k1.values()[0], 1.0 / 0.32, 1e-12);
    assert_close!(k1.values()[1], 1.4 / 0.32, 1e-12);
}

#[test]
fn aliasing_policy() {
    let model = ContactModel::unmarked(
        0.5,
        0.5,
        DispersalKernel::uniform_ball(1, 1.0).unwrap(),
        15.0,
    )
    .unwrap();
    // at side 16 the Nyquist frequency 4 pi hits a zero of sin(p)/p
    let grid = TorusGrid::new(1, 15.0, 64).unwrap();
    let strict = SolverSettings {
        aliasing: AliasingPolicy::Fail,
        ..SolverSettings::default()
    };
    assert!(matches!(
        HierarchyProblem::new(model.clone(), grid, strict),
        Err(Error::Aliasing { .. })
    ));
    let p = HierarchyProblem::new(model, grid, SolverSettings::default()).unwrap();
    assert!(p.nyquist_char() > ALIASING_LIMIT);
}

#[test]
fn grid_kernel_matches_wrapped_density() {
    let p = marked(0.5, 20.0, 64);
    let alpha = p.model().dispersal();
    for cell in 0..p.grid().cells() {
        let x = p.grid().position(cell);
        let exact = alpha.wrapped_density(&x, 20.0).unwrap();
        assert_close!(p.kernel_values()[cell], exact, 1e-10);
    }
    assert_close!(p.grid_char_fn(0).re, 1.0, 1e-15);
}

#[test]
fn convolution_sign_matches_direct_sum() {
    // A_1 g(x) = kappa * h * sum_y alpha(x - y) g(y) for a shifted kernel
    let p = marked(0.5, 20.0, 64);
    let g = *p.grid();
    let values: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 / 7.0).collect();
    let fine = p.model().with_effective_kappa(0.5).unwrap();
    let unm = HierarchyProblem::new(
        ContactModel::unmarked(0.5, 1.0, fine.dispersal().clone(), 20.0).unwrap(),
        g,
        SolverSettings::default(),
    )
    .unwrap();
    let k =
        CorrelationGrid::from_values(1, Representation::Full, Some(g), 1, values.clone()).unwrap();
    let out = apply_lstar(&unm, &k).unwrap();
    let alpha = unm.kernel_values();
    for x in 0..64 {
        let direct: f64 =
            (0..64).map(|y| alpha[g.sub(x, y)] * values[y]).sum::<f64>() * g.spacing();
        assert_close!(out.values()[x] + values[x], 0.5 * direct, 1e-12);
    }
}

#[test]
fn warmup_spectrum_at_zero_frequency() {
    let p = unmarked(0.5, 0.5, gaussian(1.0), 20.0, 64);
    let spec = warmup_regular_spectrum(&p).unwrap();
    assert_close!(spec[0].re, 1.0, 1e-14);
    assert_close!(spec[0].im, 0.0, 1e-14);
}

#[test]
fn warmup_pair_function_tail() {
    let p = unmarked(0.5, 0.5, gaussian(1.0), 50.0, 256);
    let k2 = solve_k2_unmarked(&p).unwrap();
    assert_close!(k2.values()[128], 1.0, 1e-6);
    assert!(k2.values()[0] > 1.1);
}

#[test]
fn closed_form_matches_neumann_for_ball_kernel() {
    let p = unmarked(
        0.5,
        0.5,
        DispersalKernel::uniform_ball(1, 1.0).unwrap(),
        16.0,
        64,
    );
    let closed = solve_k2_unmarked(&p).unwrap();
    let k1 = solve_k1(p.model(), 1e-12).unwrap();
    let f = assemble_source(&p, 2, &k1, Representation::Difference).unwrap();
    let neumann = resolvent_neumann(&p, &f).unwrap();
    assert!(closed.sup_distance(&neumann).unwrap() <= 1e-8);
}

#[test]
fn source_examples() {
    let p = unmarked(0.5, 0.5, gaussian(1.0), 20.0, 64);
    let f1 = assemble_source(&p, 1, &CorrelationGrid::unit(1), Representation::MarkOnly).unwrap();
    assert_eq!(f1.values(), &[0.5]);

    let rho = 1.0;
    let k1 = CorrelationGrid::mark_vector(vec![rho]);
    let f2 = assemble_source(&p, 2, &k1, Representation::Difference).unwrap();
    let g = p.grid();
    let alpha = p.kernel_values();
    for u in 0..g.cells() {
        let expected = 0.5 * rho * (alpha[u] + alpha[g.neg(u)]) + 2.0 * rho * 0.5;
        assert_close!(f2.values()[u], expected, 1e-14);
    }

    let p0 = unmarked(0.0, 0.5, gaussian(1.0), 20.0, 64);
    let k1 = CorrelationGrid::mark_vector(vec![0.5]);
    let f2 = assemble_source(&p0, 2, &k1, Representation::Difference).unwrap();
    assert!(f2.values().iter().all(|&v| v == 0.5));

    assert!(assemble_source(&p, 3, &k1, Representation::Difference).is_err());
    assert!(assemble_source(&p, 2, &k1, Representation::MarkOnly).is_err());
}

#[test]
fn pure_mortality_without_contact() {
    let p = unmarked(0.0, 0.5, gaussian(1.0), 20.0, 32);
    for (n, repr) in [
        (1, Representation::Full),
        (2, Representation::Difference),
        (3, Representation::Full),
    ] {
        let k = CorrelationGrid::constant(n, repr, Some(*p.grid()), 1, 2.5).unwrap();
        let out = apply_lstar(&p, &k).unwrap();
        for v in out.values() {
            assert_close!(*v, -(n as f64) * 2.5, 1e-12);
        }
    }
}

#[test]
fn k1_is_stationary() {
    let p = marked(0.6, 20.0, 32);
    let k1 = solve_k1(p.model(), 1e-12).unwrap();
    let out = apply_lstar(&p, &k1).unwrap();
    for (v, c) in out.values().iter().zip(p.model().immigration().values()) {
        assert_close!(*v, -c, 1e-10);
    }
}

#[test]
fn product_identity() {
    let p = marked(0.6, 20.0, 32);
    let k1 = solve_k1(p.model(), 1e-12).unwrap();
    let k1v = k1.values().to_vec();
    let c = p.model().immigration().values().to_vec();
    for repr in [Representation::Difference, Representation::Full] {
        let k2 = CorrelationGrid::from_values(2, repr, Some(*p.grid()), 2, {
            let len = p.grid().cells().pow(repr.spatial_slots(2) as u32);
            (0..len)
                .flat_map(|_| {
                    [
                        k1v[0] * k1v[0],
                        k1v[0] * k1v[1],
                        k1v[1] * k1v[0],
                        k1v[1] * k1v[1],
                    ]
                })
                .collect()
        })
        .unwrap();
        let out = apply_lstar(&p, &k2).unwrap();
        for (idx, v) in out.values().iter().enumerate() {
            let (s1, s2) = ((idx % 4) / 2, idx % 2);
            let expected = c[s1] * k1v[s2] + c[s2] * k1v[s1];
            assert_close!(-v, expected, 1e-10);
        }
    }
}

#[test]
fn stationary_hierarchy_is_stationary_and_positive() {
    let p = marked(0.5, 8.0, 16);
    let sol = solve_stationary(&p, 3, Representation::Difference).unwrap();
    assert_eq!(sol.orders.len(), 3);
    for n in 1..=3 {
        let k = sol.order(n);
        assert!(k.min() >= 0.0);
        let f = assemble_source(
            &p,
            n,
            &if n == 1 {
                CorrelationGrid::unit(2)
            } else {
                sol.order(n - 1).clone()
            },
            k.representation(),
        )
        .unwrap();
        let residual = apply_lstar(&p, k).unwrap();
        let worst = residual
            .values()
            .iter()
            .zip(f.values())
            .fold(0.0, |m: f64, (a, b)| m.max((a + b).abs()));
        assert!(
            worst <= 1e-9 * k.sup_norm(),
            "order {n}: residual {worst:e}"
        );
    }
    assert!(sol.growth.h.is_finite() && sol.growth.h > 0.0);
    assert!(sol.growth.d.is_finite() && sol.growth.d > 0.0);
    for (i, r) in sol.growth.ratios.iter().enumerate() {
        assert!(*r <= sol.growth.d * sol.growth.h.powi(i as i32 + 1) * (1.0 + 1e-12));
    }
}

#[test]
fn difference_and_full_layouts_agree() {
    let p = marked(0.5, 8.0, 16);
    let diff = solve_stationary(&p, 3, Representation::Difference).unwrap();
    let full = solve_stationary(&p, 3, Representation::Full).unwrap();
    for n in 2..=3 {
        let expanded = diff.order(n).to_full(*p.grid()).unwrap();
        let gap = expanded.sup_distance(full.order(n)).unwrap();
        assert!(
            gap <= 1e-10 * full.order(n).sup_norm(),
            "order {n}: {gap:e}"
        );
    }
}

#[test]
fn memory_budget_is_enforced() {
    let model = ContactModel::unmarked(0.5, 0.5, gaussian(1.0), 20.0).unwrap();
    let grid = TorusGrid::new(1, 20.0, 64).unwrap();
    let settings = SolverSettings {
        memory_budget: 1000,
        ..SolverSettings::default()
    };
    let p = HierarchyProblem::new(model, grid, settings).unwrap();
    assert!(matches!(
        solve_stationary(&p, 3, Representation::Full),
        Err(Error::MemoryBudget { order: 2, .. })
    ));
}

#[test]
fn resolvent_bound_on_a_dominated_source() {
    let p = marked(0.7, 20.0, 32);
    let q = p.model().q().to_vec();
    let g = *p.grid();
    for n in 1..=2 {
        let repr = if n == 1 {
            Representation::MarkOnly
        } else {
            Representation::Difference
        };
        let template = CorrelationGrid::constant(n, repr, Some(g), 2, 0.0).unwrap();
        let mut cells = vec![0; n];
        let mut marks = vec![0; n];
        let values: Vec<f64> = (0..template.values().len())
            .map(|i| {
                template.decode(i, &mut cells, &mut marks);
                let w: f64 = marks.iter().map(|&s| q[s]).product();
                3.0 * w * (((i * 7919) % 13) as f64 / 12.0)
            })
            .collect();
        let f = SourceTerm(template.with_values(values));
        let k = resolvent_neumann(&p, &f).unwrap();
        let bound = 3.0 / (n as f64 * (1.0 - 0.7));
        assert!(k.min() >= 0.0);
        assert!(k.weighted_sup(&q) <= bound * (1.0 + 1e-9));
    }
}

#[test]
fn factorization_reports() {
    let p = unmarked(0.5, 0.5, gaussian(1.0), 50.0, 256);
    let k2 = solve_k2_unmarked(&p).unwrap();
    let report = check_factorization(&k2, &[1.0], &[0.0, 12.5, 25.0]).unwrap();
    assert!(report.at(25.0).unwrap() <= 1e-6);
    assert!(report.is_non_increasing());

    let p0 = unmarked(0.0, 0.5, gaussian(1.0), 20.0, 64);
    let sol = solve_stationary(&p0, 2, Representation::Difference).unwrap();
    let report = check_factorization(sol.order(2), sol.k1(), &[0.0, 10.0]).unwrap();
    assert!(report.deviations.iter().all(|d| d.unwrap() <= 1e-14));

    let p3 = marked(0.5, 16.0, 32);
    let sol = solve_stationary(&p3, 3, Representation::Difference).unwrap();
    let report = check_factorization(sol.order(3), sol.k1(), &[2.0, 4.0]).unwrap();
    assert!(report.at(4.0).unwrap() < report.at(2.0).unwrap());
    // no three points on a line of length 16 are pairwise 8 apart
    let report = check_factorization(sol.order(3), sol.k1(), &[8.0]).unwrap();
    assert_eq!(report.deviations, vec![None]);
}

#[test]
fn shell_average_of_a_constant_and_bins() {
    let g = TorusGrid::new(1, 8.0, 16).unwrap();
    let k = CorrelationGrid::constant(2, Representation::Difference, Some(g), 2, 1.5).unwrap();
    let avg = shell_average(&k, (0, 1), &[0.0, 1.0, 2.0, 4.0]).unwrap();
    assert_eq!(avg, vec![Some(1.5); 3]);
    let avg = shell_average(&k, (0, 1), &[4.5, 5.0]).unwrap();
    assert_eq!(avg, vec![None]);
}

#[test]
fn cauchy_scalar_relaxation() {
    let p = unmarked(0.5, 0.5, gaussian(1.0), 20.0, 32);
    let reference = vec![solve_k1(p.model(), 1e-12).unwrap()];
    let settings = CauchySettings {
        horizon: 2.0,
        dt: Some(0.001),
        record_every: 1,
    };
    let traj = evolve_cauchy(&p, &zero_initial(&reference), &reference, &settings).unwrap();
    let value = traj.final_state[0].values()[0];
    let exact = 1.0 - (-1.0f64).exp();
    assert_close!(value, exact, 1e-3);
    for (t, d) in traj.times.iter().zip(traj.deviation(1)) {
        assert_close!(*d, (-0.5 * t).exp(), 2e-3);
    }
    let rate = traj.decay_rate(1, 0.5, 2.0).unwrap();
    assert_close!(rate, 0.5, 0.025);
}

#[test]
fn cauchy_default_step_and_precondition() {
    let p = unmarked(0.5, 0.5, gaussian(1.0), 20.0, 32);
    let reference = vec![solve_k1(p.model(), 1e-12).unwrap()];
    let traj = evolve_cauchy(
        &p,
        &zero_initial(&reference),
        &reference,
        &CauchySettings::default(),
    )
    .unwrap();
    assert!(traj.dt <= 0.1 / 1.5 + 1e-15);
    let bad = CauchySettings {
        dt: Some(1.0),
        ..CauchySettings::default()
    };
    assert!(evolve_cauchy(&p, &zero_initial(&reference), &reference, &bad).is_err());
}

#[test]
fn cauchy_stationary_start_stays_put() {
    let p = marked(0.5, 20.0, 32);
    let sol = solve_stationary(&p, 2, Representation::Difference).unwrap();
    let settings = CauchySettings {
        horizon: 10.0,
        ..CauchySettings::default()
    };
    let traj = evolve_cauchy(&p, &sol.orders, &sol.orders, &settings).unwrap();
    for n in 1..=2 {
        assert!(traj.deviation(n).iter().all(|d| *d <= 1e-10), "order {n}");
    }
}

#[test]
fn cauchy_pair_rate() {
    let p = unmarked(0.5, 0.5, gaussian(1.0), 20.0, 64);
    let sol = solve_stationary(&p, 2, Representation::Difference).unwrap();
    let mut start = zero_initial(&sol.orders);
    start[0] = sol.orders[0].clone();
    let settings = CauchySettings {
        horizon: 10.0,
        ..CauchySettings::default()
    };
    let traj = evolve_cauchy(&p, &start, &sol.orders, &settings).unwrap();
    let rate = traj.decay_rate(2, 5.0, 10.0).unwrap();
    assert!(rate >= 0.95 * 2.0 * 0.5, "rate {rate}");
}

#[test]
fn instability_is_reported() {
    let p = unmarked(0.5, 0.5, gaussian(1.0), 20.0, 32);
    let reference = vec![solve_k1(p.model(), 1e-12).unwrap()];
    let start = vec![CorrelationGrid::mark_vector(vec![f64::NAN])];
    assert!(matches!(
        evolve_cauchy(&p, &start, &reference, &CauchySettings::default()),
        Err(Error::Instability { .. })
    ));
}
