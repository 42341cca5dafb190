use uthermo::equilibria::*;
use uthermo::measures::*;
use uthermo::rds::*;
use uthermo::thermo::*;

const H: f64 = 0.9624236501192069;

fn grids() -> PressureGrids {
    PressureGrids {
        delta: 0.1,
        n_grid: (2..=8).collect(),
        eps_grid: vec![0.02, 0.04],
        omega_samples: 1,
        base_grid: 3,
    }
}

fn settings() -> EntropySettings {
    EntropySettings {
        method: EntropyMethod::BowenBall,
        delta: 0.25,
        n_grid: (4..=32).step_by(4).collect(),
        eps: 0.05,
        grid_k: 6,
        samples: 100,
        orbit_length: 200,
    }
}

fn candidates() -> Vec<MeasureSampler> {
    let haar = MeasureSampler::haar();
    let fixed = MeasureSampler::fixed_point(2);
    let combo =
        MeasureSampler::convex_combo("combo", vec![(0.5, haar.clone()), (0.5, fixed.clone())])
            .unwrap();
    vec![haar, fixed, combo]
}

fn trivial() -> DrivingSystem {
    DrivingSystem::trivial(0)
}

#[test]
fn haar_is_gibbs_for_the_geometric_potential() {
    let c = cat_cocycle();
    let g = gibbs_defect(
        &c,
        &trivial(),
        &MeasureSampler::haar(),
        &grids(),
        &settings(),
        1,
    )
    .unwrap();
    assert!(
        g.pressure_at_phiu.abs() <= g.pressure_ci.max(1e-3),
        "{}",
        g.pressure_at_phiu
    );
    assert!(
        g.pesin_gap.abs() <= g.pesin_ci.max(1e-9),
        "{} ± {}",
        g.pesin_gap,
        g.pesin_ci
    );
    assert!((g.integral_neg_phiu - H).abs() < 1e-9);

    let a = gibbs_defect(
        &c,
        &trivial(),
        &MeasureSampler::fixed_point(2),
        &grids(),
        &settings(),
        1,
    )
    .unwrap();
    assert!((a.pesin_gap - H).abs() < 1e-3, "{}", a.pesin_gap);
}

#[test]
fn zero_potential_scan_selects_haar() {
    let r = equilibrium_scan(
        &cat_cocycle(),
        &trivial(),
        &Potential::zero(),
        &candidates(),
        &grids(),
        &settings(),
        2,
    )
    .unwrap();
    assert_eq!(r.best, "haar");
    assert!(r.variational_inequality_holds());
    assert!(r.candidate("haar").unwrap().near_equilibrium);
    assert!((r.candidate("atomic-fixed").unwrap().defect - H).abs() < 1e-3);
}

#[test]
fn convex_combination_is_affine() {
    let r = equilibrium_scan(
        &cat_cocycle(),
        &trivial(),
        &Potential::zero(),
        &candidates(),
        &grids(),
        &settings(),
        3,
    )
    .unwrap();
    let d = |id: &str| r.candidate(id).unwrap().defect;
    assert!((d("combo") - 0.5 * (d("haar") + d("atomic-fixed"))).abs() < 1e-9);
    assert!(d("combo") >= d("haar").min(d("atomic-fixed")));
}

#[test]
fn cohomologous_potentials_share_the_argmax() {
    let c = cat_cocycle();
    let phi = Potential::coordinate_cos(0, 0.5).with_id("cos");
    let sigma = Potential::coordinate_sin(1, 1.0).with_id("sigma");
    let family = [
        phi.clone(),
        cohomologous_transform(&phi, &sigma, &[0.0]),
        cohomologous_transform(&phi, &Potential::zero(), &[0.3]),
    ];
    let reports = equilibrium_scans(
        &c,
        &trivial(),
        &family,
        &candidates(),
        &grids(),
        &settings(),
        4,
    )
    .unwrap();
    assert!(reports.iter().all(|r| r.best == reports[0].best));
    let (p0, p1, p2) = (
        &reports[0].pressure,
        &reports[1].pressure,
        &reports[2].pressure,
    );
    assert!(
        (p0.value - p1.value).abs() <= 2.0 * p0.slope_ci.hypot(p1.slope_ci),
        "{} vs {}",
        p0.value,
        p1.value
    );
    assert!((p0.value - p2.value - 0.3).abs() < 1e-9);
    for r in &reports {
        assert!(r.variational_inequality_holds(), "{}", r.potential_id);
    }
}

#[test]
fn dual_variational_principle() {
    let c = cat_cocycle();
    let family = [
        Potential::zero(),
        Potential::coordinate_cos(0, 0.5).with_id("cos"),
        Potential::coordinate_sin(1, 0.5).with_id("sin"),
        Potential::constant(0.3),
    ];
    let haar = dual_vp_check(
        &c,
        &trivial(),
        &MeasureSampler::haar(),
        &family,
        &grids(),
        &settings(),
        5,
    )
    .unwrap();
    assert!(
        haar.min_gap.abs() <= haar.ci,
        "{} ± {}",
        haar.min_gap,
        haar.ci
    );
    assert!((haar.entropy - H).abs() < 0.05 * H);
    let atomic = dual_vp_check(
        &c,
        &trivial(),
        &MeasureSampler::fixed_point(2),
        &family,
        &grids(),
        &settings(),
        5,
    )
    .unwrap();
    assert!(atomic.entropy.abs() < 1e-9);
    assert!(
        atomic.min_gap >= atomic.entropy - atomic.ci,
        "{}",
        atomic.min_gap
    );
    assert!(atomic.min_gap > haar.min_gap + haar.ci);
    assert!(atomic.gaps.iter().all(|(_, g)| *g >= atomic.min_gap));
}

#[test]
fn mixing_inequality_on_a_grid() {
    for p0 in [0.0, 0.1, 0.5, 0.9, 1.0] {
        for a in [-3.0, 0.0, 2.5] {
            let m = mixing_inequality_check(&[p0, 1.0 - p0], &[a, -a]).unwrap();
            assert!(m.holds && m.slack >= -MIXING_TOL);
        }
    }
}
