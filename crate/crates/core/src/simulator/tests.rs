use super::*;
use crate::dispersal::DispersalKernel;
use crate::markspace::{MarkSpace, MutationKernel};
use crate::model::ImmigrationRate;

fn warmup(kappa: f64, c: f64, side: f64) -> ContactModel {
    let alpha = DispersalKernel::uniform_ball(1, 1.0).unwrap();
    ContactModel::unmarked(kappa, c, alpha, side).unwrap()
}

fn two_marks(raw_kappa: f64) -> ContactModel {
    let marks = MarkSpace::new(vec!["a".into(), "b".into()], vec![1.0, 1.0]).unwrap();
    let kernel = MutationKernel::new(marks, vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
    ContactModel::new(
        kernel,
        raw_kappa,
        ImmigrationRate::new(vec![0.3, 0.6]).unwrap(),
        DispersalKernel::isotropic_gaussian(1, 1.0).unwrap(),
        30.0,
    )
    .unwrap()
}

fn particle(x: f64, mark: usize) -> Particle {
    Particle {
        position: vec![x],
        mark,
    }
}

#[test]
fn rates_examples() {
    let model = warmup(0.5, 0.5, 50.0);
    let params = SimParams::new(model, 1, 10.0, 0.0, 1);
    let empty = Configuration::empty(1, 50.0, 1);
    let r = total_rates(&empty, &params);
    assert_eq!((r.death, r.contact), (0.0, 0.0));
    assert!((r.immigration - 25.0).abs() < 1e-12);

    let ten: Vec<Particle> = (0..10).map(|i| particle(i as f64, 0)).collect();
    let cfg = Configuration::from_particles(1, 50.0, 1, &ten).unwrap();
    let r = total_rates(&cfg, &params);
    assert_eq!(r.death, 10.0);
    assert!((r.contact - 5.0).abs() < 1e-12);

    let model = two_marks(0.2);
    let params = SimParams::new(model, 1, 10.0, 0.0, 1);
    let cfg = Configuration::from_particles(1, 30.0, 2, &[particle(3.0, 0)]).unwrap();
    let r = total_rates(&cfg, &params);
    assert!((r.contact - 0.6).abs() < 1e-12);
}

#[test]
fn configuration_insert_and_remove() {
    let mut cfg = Configuration::empty(1, 10.0, 2);
    for (i, x) in [1.0, 2.0, 3.0].iter().enumerate() {
        cfg.insert(&particle(*x, i % 2)).unwrap();
    }
    assert_eq!(cfg.len(), 3);
    assert_eq!(cfg.count(0), 2);
    let p = cfg.remove(0, 0);
    assert_eq!(p, particle(1.0, 0));
    assert_eq!(cfg.positions(0), &[3.0]);
    assert!(cfg.insert(&particle(10.0, 0)).is_err());
    assert!(cfg.insert(&particle(1.0, 2)).is_err());
    let all: Vec<Particle> = cfg.particles().collect();
    assert_eq!(all, vec![particle(3.0, 0), particle(2.0, 1)]);
}

#[test]
fn step_keeps_particles_on_the_torus() {
    let dynamics = Dynamics::new(&two_marks(0.3));
    let mut cfg = Configuration::empty(1, 30.0, 2);
    let mut rng = replica_rng(3, 0);
    let mut last = 0.0;
    for _ in 0..5000 {
        let ev = dynamics.step(&mut cfg, &mut rng).unwrap();
        assert!(ev.time > last);
        last = ev.time;
        assert!(ev.particle.position[0] >= 0.0 && ev.particle.position[0] < 30.0);
    }
    assert!(cfg
        .particles()
        .all(|p| p.position[0] >= 0.0 && p.position[0] < 30.0));
}

#[test]
fn replicas_are_deterministic_and_distinct() {
    let params = SimParams::new(warmup(0.5, 0.5, 20.0), 42, 30.0, 5.0, 2);
    let a = run_replica(&params, 0, None).unwrap();
    let b = run_replica(&params, 0, None).unwrap();
    assert_eq!(a, b);
    let c = run_replica(&params, 1, None).unwrap();
    assert_ne!(a.batches, c.batches);
    assert_eq!(
        run_replicas(&params).unwrap(),
        run_replicas(&params).unwrap()
    );
}

#[test]
fn accounting_and_histogram_mass() {
    let mut params = SimParams::new(two_marks(0.25), 7, 60.0, 10.0, 3);
    params.max_radius = 5.0;
    let acc = run_replicas(&params).unwrap();
    assert_eq!(acc.events.len(), 3);
    for e in &acc.events {
        assert!(e.balanced(), "{e:?}");
        assert_eq!(e.births, e.offspring.iter().sum::<u64>());
    }
    for b in &acc.batches {
        assert_eq!(b.pairs.iter().sum::<u64>() + b.overflow, b.pair_total);
        assert!(b.overflow > 0);
    }
    let start =
        Configuration::from_particles(1, 30.0, 2, &[particle(1.0, 0), particle(2.0, 1)]).unwrap();
    let acc = run_replica(&params, 0, Some(&start)).unwrap();
    assert_eq!(acc.events[0].initial_size, 2);
    assert!(acc.events[0].balanced());
}

#[test]
fn population_cap_is_reported() {
    let mut params = SimParams::new(warmup(0.5, 0.5, 50.0), 1, 50.0, 0.0, 1);
    params.population_cap = 5;
    assert!(matches!(
        run_replica(&params, 0, None),
        Err(Error::PopulationCap { cap: 5, .. })
    ));
}

#[test]
fn immigration_death_density_is_c() {
    let model = two_marks(0.0);
    let params = SimParams::new(model, 11, 400.0, 20.0, 4);
    let acc = run_replicas(&params).unwrap();
    for (est, c) in estimate_k1(&acc).unwrap().iter().zip([0.3, 0.6]) {
        assert!((est.estimate - c).abs() <= 3.0 * est.stderr, "{est:?}");
    }
}

#[test]
fn warmup_density() {
    let params = SimParams::new(warmup(0.5, 0.5, 50.0), 5, 400.0, 20.0, 4);
    let acc = run_replicas(&params).unwrap();
    let est = estimate_k1(&acc).unwrap()[0];
    assert!((est.estimate - 1.0).abs() <= 3.0 * est.stderr, "{est:?}");
    assert!(est.stderr < 0.05);
}

#[test]
fn events_match_integrated_rates() {
    // each counting process minus its compensator is a martingale with variance E int rate dt
    let params = SimParams::new(two_marks(0.25), 19, 300.0, 10.0, 1);
    let acc = run_replica(&params, 0, None).unwrap();
    let e = &acc.events[0];
    for (count, integral) in [e.deaths, e.births, e.immigrations]
        .iter()
        .zip(e.rate_integrals)
    {
        let z = (*count as f64 - integral) / integral.sqrt();
        assert!(z.abs() < 3.0, "count {count} vs {integral}");
    }
}

#[test]
fn offspring_marks_follow_the_kernel() {
    let params = SimParams::new(two_marks(0.3), 23, 400.0, 0.0, 1);
    let acc = run_replica(&params, 0, None).unwrap();
    let dynamics = Dynamics::new(&params.model);
    let e = &acc.events[0];
    for parent in 0..2 {
        let law = dynamics.child_mark_law(parent);
        let n: u64 = e.offspring[parent * 2..parent * 2 + 2].iter().sum();
        assert!(n > 500);
        for child in 0..2 {
            let p = law[child];
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let freq = e.offspring[parent * 2 + child] as f64 / n as f64;
            assert!(
                (freq - p).abs() <= 3.0 * se,
                "parent {parent} child {child}: {freq} vs {p}"
            );
        }
    }
    // Q'(s, s') nu(s) / B(s') with Q' = [[2,1],[1,2]] / 3
    let law = dynamics.child_mark_law(0);
    assert!((law[0] - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn burn_in_reduces_transient_bias() {
    let short = SimParams::new(warmup(0.5, 0.5, 50.0), 8, 10.0, 0.0, 16);
    let burned = SimParams {
        burn_in: 5.0,
        ..short.clone()
    };
    let a = estimate_k1(&run_replicas(&short).unwrap()).unwrap()[0].estimate;
    let b = estimate_k1(&run_replicas(&burned).unwrap()).unwrap()[0].estimate;
    assert!((b - 1.0).abs() < (a - 1.0).abs(), "{a} vs {b}");
}

#[test]
fn poisson_field_has_flat_pair_correlation() {
    let mut params = SimParams::new(warmup(0.0, 0.5, 20.0), 31, 500.0, 10.0, 4);
    params.bin_width = 1.0;
    let acc = run_replicas(&params).unwrap();
    let pc = estimate_pair_correlation(&acc).unwrap();
    assert_eq!(pc.bins.len(), 10);
    for bin in &pc.bins {
        let (est, se) = (bin.estimate.unwrap(), bin.stderr.unwrap());
        // 10 bins: two-sided Bonferroni threshold at family-wise 0.0027 is about 3.64
        assert!((est - 0.25).abs() <= 3.64 * se, "{bin:?}");
    }
}

#[test]
fn empty_bins_are_missing() {
    let mut params = SimParams::new(warmup(0.0, 0.01, 20.0), 2, 12.0, 1.0, 1);
    params.bin_width = 0.01;
    let acc = run_replica(&params, 0, None).unwrap();
    let pc = estimate_pair_correlation(&acc).unwrap();
    assert!(pc
        .bins
        .iter()
        .any(|b| b.estimate.is_none() && b.stderr.is_none()));
}

#[test]
fn invalid_params_are_rejected() {
    let base = SimParams::new(warmup(0.5, 0.5, 20.0), 1, 10.0, 0.0, 1);
    let bad = [
        SimParams {
            burn_in: 10.0,
            ..base.clone()
        },
        SimParams {
            replicas: 0,
            ..base.clone()
        },
        SimParams {
            max_radius: 11.0,
            ..base.clone()
        },
        SimParams {
            bin_width: 0.0,
            ..base.clone()
        },
    ];
    for p in bad {
        assert!(p.validate().is_err());
    }
}
