use flexbal::numeric::{dot, norm_l1};
use flexbal::problem::hoeffding_radius;
use flexbal::simgen::{column_names, generate, SimKind, SimSpec};

#[test]
fn subgroup_counts_and_zero_effect() {
    let ds = generate(&SimSpec::new(SimKind::Subgroup, 40, 3, 5)).unwrap();
    assert_eq!((ds.treated.y.len(), ds.control.y.len()), (20, 20));
    let white_t = ds.treated.x.column(0).iter().filter(|&&v| v == 10.0).count();
    let black_t = ds.treated.x.column(0).iter().filter(|&&v| v == -10.0).count();
    assert_eq!((white_t, black_t), (19, 1));
    for i in 0..20 {
        let expected = if ds.treated.x.get(i, 0) > 0.0 { 1.0 } else { -1.0 };
        assert_eq!(ds.treated.y[i], expected);
    }
    assert!(ds.control.y.iter().all(|&v| v == 0.0));
    // Half the combined sample is white, so the race target is zero.
    assert!(ds.target[0].abs() < 1e-12);
    assert_eq!((ds.truth.mu1, ds.truth.mu0, ds.truth.ate), (0.0, 0.0, 0.0));
    assert_eq!(ds.covariate_bound, 10.0);
}

#[test]
fn celebrity_rows_and_effect_sum_to_zero() {
    let spec = SimSpec::new(SimKind::Celebrity, 400, 5, 6);
    let ds = generate(&spec).unwrap();
    for g in [&ds.treated, &ds.control] {
        let celebs: Vec<usize> = (0..g.x.rows()).filter(|&i| g.x.row(i)[..5].iter().all(|&v| v == 0.0)).collect();
        assert_eq!(celebs.len(), 10);
        assert!((0..g.x.rows()).all(|i| g.x.row(i)[..5].iter().all(|v| v.abs() <= 10.0)));
    }
    let mean_effect: f64 = ds.treated.y.iter().sum::<f64>() / ds.treated.y.len() as f64;
    assert!(mean_effect.abs() < 1e-12, "{mean_effect}");
    assert!(ds.control.y.iter().all(|&v| v == 0.0));
}

#[test]
fn linear_design_is_exactly_linear_with_the_stated_truth() {
    let spec = SimSpec::new(SimKind::LinearSparse, 500, 30, 7);
    let ds = generate(&spec).unwrap();
    let v = ds.truth.v_star.as_ref().unwrap();
    let u = ds.truth.u_star.as_ref().unwrap();
    assert!((norm_l1(v) - spec.k_true).abs() < 1e-12);
    assert!((norm_l1(u) - spec.k_true).abs() < 1e-12);
    assert_eq!(v.iter().filter(|c| **c != 0.0).count(), spec.support);
    for i in 0..ds.treated.y.len() {
        assert!((dot(v, ds.treated.x.row(i)) - ds.treated.y[i]).abs() < 1e-12);
    }
    for i in 0..ds.control.y.len() {
        assert!((dot(u, ds.control.x.row(i)) - ds.control.y[i]).abs() < 1e-12);
    }
    let pop = ds.truth.population_mean.as_ref().unwrap();
    assert!((ds.truth.mu1 - dot(v, pop)).abs() < 1e-15);
    assert!((ds.truth.ate - (ds.truth.mu1 - ds.truth.mu0)).abs() < 1e-15);
    // The treated mean at the sample target differs from μ₁ by at most k·‖M̂ − M‖∞.
    let gap = ds.target.iter().zip(pop).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!((dot(v, &ds.target) - ds.truth.mu1).abs() <= spec.k_true * gap + 1e-12);
    assert!(gap <= hoeffding_radius(ds.target.len(), ds.n_total, 0.01));
    let props = ds.propensity.as_ref().unwrap();
    assert_eq!(props.len(), 500);
    assert!(props.iter().all(|&p| (spec.overlap..=1.0 - spec.overlap).contains(&p)));
}

#[test]
fn generation_is_deterministic_and_seed_sensitive() {
    for kind in [SimKind::Subgroup, SimKind::Celebrity, SimKind::LinearSparse] {
        let a = SimSpec::new(kind, 120, 6, 11);
        let b = SimSpec { seed: 12, ..a.clone() };
        assert_eq!(generate(&a).unwrap(), generate(&a).unwrap());
        assert_ne!(generate(&a).unwrap().treated.x, generate(&b).unwrap().treated.x);
    }
}

#[test]
fn columns_do_not_depend_on_dimension() {
    let small = generate(&SimSpec::new(SimKind::Celebrity, 80, 3, 4)).unwrap();
    let large = generate(&SimSpec::new(SimKind::Celebrity, 80, 9, 4)).unwrap();
    for j in 0..3 {
        assert_eq!(small.treated.x.column(j), large.treated.x.column(j));
    }
}

#[test]
fn constant_column_and_names() {
    let spec = SimSpec::new(SimKind::Subgroup, 40, 4, 1);
    let ds = generate(&spec).unwrap();
    assert_eq!(column_names(&spec), vec!["x0", "x1", "x2", "x3", "const"]);
    assert!(ds.treated.x.column(4).iter().all(|&v| v == 1.0));
    assert_eq!(ds.target[4], 1.0);
    let raw = ds.to_raw().unwrap();
    assert_eq!((raw.n(), raw.d()), (40, 4));
    assert_eq!(raw.treatment.iter().filter(|&&t| t == 1).count(), 20);
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(generate(&SimSpec::new(SimKind::Subgroup, 10, 3, 0)).is_err());
    assert!(generate(&SimSpec::new(SimKind::LinearSparse, 2, 3, 0)).is_err());
    let mut s = SimSpec::new(SimKind::LinearSparse, 100, 3, 0);
    s.overlap = 0.6;
    assert!(generate(&s).is_err());
    assert!("nope".parse::<SimKind>().is_err());
    assert_eq!("linear".parse::<SimKind>().unwrap(), SimKind::LinearSparse);
}
