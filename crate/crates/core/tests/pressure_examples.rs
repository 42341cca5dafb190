use std::time::Instant;
use uthermo::rds::*;
use uthermo::thermo::*;

const H: f64 = 0.9624236501192069;

fn cat_grids() -> PressureGrids {
    PressureGrids {
        delta: 0.1,
        n_grid: (2..=14).collect(),
        eps_grid: vec![0.02, 0.04],
        omega_samples: 1,
        base_grid: 3,
    }
}

fn switching_grids() -> PressureGrids {
    PressureGrids {
        delta: 0.1,
        n_grid: (1..=10).map(|k| 20 * k).collect(),
        eps_grid: vec![0.02, 0.04],
        omega_samples: 16,
        base_grid: 3,
    }
}

fn iid() -> DrivingSystem {
    DrivingSystem::iid(vec![0.5, 0.5], 0).unwrap()
}

#[test]
fn cat_topological_entropy() {
    assert!((cat_lambda().ln() - H).abs() < 1e-12);
    let t = Instant::now();
    let e =
        topological_entropy(&cat_cocycle(), &DrivingSystem::trivial(0), &cat_grids(), 1).unwrap();
    assert!(t.elapsed().as_secs() < 120);
    assert!((e.value - H).abs() <= 0.05 * H, "{}", e.value);
    assert!(e.value <= e.upper_value + 1e-12);
    assert!(e.cells.iter().all(|c| c.log_lower <= c.log_upper + 1e-12));
}

#[test]
fn switching_topological_entropy() {
    let e = topological_entropy(&cat_switching_cocycle(), &iid(), &switching_grids(), 1).unwrap();
    let oracle = 1.5 * H;
    assert!((e.value - oracle).abs() <= 0.07 * oracle, "{}", e.value);
    assert_eq!(e.per_omega.len(), 16);
    assert!(e.relative_spread <= 0.10, "{}", e.relative_spread);
}

#[test]
fn product_with_rotation_entropy() {
    let grids = PressureGrids {
        base_grid: 2,
        omega_samples: 4,
        ..cat_grids()
    };
    let e = topological_entropy(
        &cat_times_rotation_cocycle(&[0.1234, 0.377]),
        &iid(),
        &grids,
        1,
    )
    .unwrap();
    assert!((e.value - H).abs() <= 0.05 * H, "{}", e.value);
}

#[test]
fn halving_delta_and_eps_is_stable() {
    for (c, sys, g) in [
        (cat_cocycle(), DrivingSystem::trivial(0), cat_grids()),
        (cat_switching_cocycle(), iid(), switching_grids()),
    ] {
        let base = topological_entropy(&c, &sys, &g, 1).unwrap();
        for other in [
            g.with_delta(g.delta / 2.0),
            g.with_eps(g.eps_grid.iter().map(|e| e / 2.0).collect()),
        ] {
            let e = topological_entropy(&c, &sys, &other, 1).unwrap();
            let ci = base.slope_ci.hypot(e.slope_ci);
            assert!(
                (e.value - base.value).abs() < 2.0 * ci.max(1e-9),
                "{} vs {}",
                e.value,
                base.value
            );
        }
    }
}

#[test]
fn lower_never_exceeds_upper() {
    let g = PressureGrids {
        n_grid: (2..=8).collect(),
        ..cat_grids()
    };
    let phi = Potential::coordinate_cos(0, 1.0);
    let e = pressure_estimate(&cat_cocycle(), &DrivingSystem::trivial(0), &phi, &g, 3).unwrap();
    assert!(!e.cells.is_empty());
    for c in &e.cells {
        assert!(c.log_lower <= c.log_upper + 1e-12, "{c:?}");
    }
}

#[test]
fn property_suite_on_cat() {
    let family = [
        Potential::zero(),
        Potential::constant(0.3),
        Potential::coordinate_cos(0, 1.0).with_id("cos"),
        Potential::coordinate_sin(1, 0.5).with_id("sin"),
        Potential::geometric_u(1),
    ];
    let sigma = Potential::coordinate_sin(0, 1.0).with_id("sigma");
    let g = PressureGrids {
        n_grid: (2..=8).collect(),
        ..cat_grids()
    };
    let r = pressure_property_suite(
        &cat_cocycle(),
        &DrivingSystem::trivial(0),
        &family,
        &sigma,
        &g,
        1,
    )
    .unwrap();
    for c in &r.checks {
        assert!(
            c.pass,
            "{} {} slack {} tol {}",
            c.item, c.detail, c.slack, c.tolerance
        );
    }
    for prefix in ["i-", "ii-", "iii-", "iv-", "v-", "vi-", "vii-"] {
        assert!(r.item(prefix).count() > 0, "{prefix}");
    }
}
