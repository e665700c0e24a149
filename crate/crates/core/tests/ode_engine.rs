use nalgebra::DMatrix;

use gmmdyn::asymptotics::{lr_threshold_mse, measure_cw};
use gmmdyn::moments::{LogisticQuadrature, SoftmaxIntegration};
use gmmdyn::ode::{
    integrate_general, integrate_mse, integrate_task, LearningCurve, OdeOptions, OdeState,
    SolverSettings, TimeGrid,
};
use gmmdyn::spectral::{build_identity, build_power_law, build_power_law_multiclass, SpectralMixture};
use gmmdyn::task::{random_target, Task};
use gmmdyn::Schedule;

fn run(model: &SpectralMixture, task: &Task, gamma: f64, grid: &TimeGrid) -> LearningCurve {
    integrate_task(
        model,
        task,
        &Schedule::constant(gamma).unwrap(),
        grid,
        &SolverSettings::default(),
        OdeOptions::default(),
    )
    .unwrap()
}

fn col(c: &LearningCurve, name: &str) -> Vec<f64> {
    c.column(name).unwrap()
}

#[test]
fn zero_rate_freezes_every_system() {
    let grid = TimeGrid::linear(2.0, 5).unwrap();
    let model = build_power_law(30, &[1.0, 1.0], 0.5, 1.0).unwrap();
    let x0 = DMatrix::from_fn(30, 1, |r, _| 0.1 * ((r % 7) as f64 - 3.0) / 30f64.sqrt());
    let x02 = DMatrix::from_fn(30, 2, |r, c| x0[(r, 0)] * if c == 0 { 1.0 } else { -0.5 });
    let mse = Task::Mse {
        target: random_target(30, 1, 3),
        sigma: 0.1,
    };
    let cases: [(&Task, &DMatrix<f64>); 3] = [
        (&Task::BinaryLogistic, &x0),
        (&Task::cross_entropy(2), &x02),
        (&mse, &x0),
    ];
    for (task, init) in cases {
        let curve = integrate_task(
            &model,
            task,
            &Schedule::constant(0.0).unwrap(),
            &grid,
            &SolverSettings::default(),
            OdeOptions {
                initial: Some(init),
                ..Default::default()
            },
        )
        .unwrap();
        let first = &curve.rows[0];
        assert!(first.v > 0.0, "{}", task.name());
        for row in &curve.rows {
            assert_eq!((row.loss, row.m, row.v), (first.loss, first.m, first.v), "{}", task.name());
        }
    }
}

#[test]
fn two_class_softmax_matches_binary_at_double_rate() {
    // With X_0 = 0 the two softmax columns stay opposite, so the logit gap
    // 2 x_1 follows binary logistic regression run at rate 2 gamma.
    let model = build_power_law(200, &[1.0, 1.0], 0.5, 1.0).unwrap();
    let grid = TimeGrid::linear(10.0, 21).unwrap();
    let gamma = 0.4;
    let ce = run(&model, &Task::cross_entropy(2), gamma, &grid);
    let bin = run(&model, &Task::BinaryLogistic, 2.0 * gamma, &grid);
    for (a, b) in ce.rows.iter().zip(&bin.rows) {
        assert!((a.loss - b.loss).abs() < 1e-4, "t = {}: {} vs {}", a.t, a.loss, b.loss);
        assert!((2.0 * a.m - b.m).abs() < 1e-4);
        assert!((2.0 * a.v - b.v).abs() < 1e-4);
    }
}

#[test]
fn single_class_soft_labels_match_reduced_system() {
    let model = build_power_law(60, &[1.3], 0.4, 0.5).unwrap();
    let task = Task::Mse {
        target: random_target(60, 1, 9),
        sigma: 0.2,
    };
    let grid = TimeGrid::linear(10.0, 11).unwrap();
    let schedule = Schedule::constant(0.7).unwrap();
    let settings = SolverSettings::default();
    let oracle = task.oracle(&model).unwrap();
    let general = integrate_general(
        &model,
        &task,
        oracle.as_ref(),
        &schedule,
        &grid,
        &settings,
        OdeOptions::default(),
    )
    .unwrap();
    let Task::Mse { target, sigma } = &task else { unreachable!() };
    let reduced = integrate_mse(&model, target, *sigma, &schedule, &grid, &settings, OdeOptions::default())
        .unwrap();
    for (a, b) in general.rows.iter().zip(&reduced.rows) {
        for (x, y) in [(a.loss, b.loss), (a.v, b.v), (a.m, b.m), (a.b[0], b.b[0])] {
            assert!((x - y).abs() <= 1e-8 * (1.0 + y.abs()), "t = {}: {x} vs {y}", a.t);
        }
    }
}

#[test]
fn centred_hard_labels_never_build_overlap() {
    let d = 40;
    let model =
        SpectralMixture::new(vec![0.5, 0.5], vec![vec![1.0; d], vec![0.5; d]], vec![vec![0.0; d]; 2])
            .unwrap();
    let grid = TimeGrid::linear(5.0, 6).unwrap();
    let mut overlaps = 0.0f64;
    let mut obs = |s: &OdeState| {
        for r in 0..d {
            for j in 0..2 {
                overlaps = overlaps.max(s.overlap(r, j).iter().map(|x| x.abs()).fold(0.0, f64::max));
            }
        }
        Ok(())
    };
    let task = Task::CrossEntropy {
        integration: SoftmaxIntegration::Tensor { nodes_per_axis: 24 },
    };
    integrate_task(
        &model,
        &task,
        &Schedule::constant(0.8).unwrap(),
        &grid,
        &SolverSettings::default(),
        OdeOptions {
            observer: Some(&mut obs),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(overlaps, 0.0);
}

#[test]
fn risk_stays_between_logistic_bounds() {
    let grid = TimeGrid::log(0.01, 100.0, 8).unwrap();
    for model in [
        build_identity(100, 1.0).unwrap(),
        build_power_law(100, &[1.0, 1.0], 0.0, 1.0).unwrap(),
    ] {
        let curve = run(&model, &Task::BinaryLogistic, 0.8, &grid);
        for r in &curve.rows {
            let lo = (-r.m).exp().ln_1p();
            let hi = (-r.m + r.b[0] / 2.0).exp().ln_1p();
            assert!(r.loss >= lo - 1e-12 && r.loss <= hi + 1e-12, "t = {}", r.t);
        }
    }
}

#[test]
fn identity_overlap_climbs_to_cw_times_mean_norm() {
    let model = build_identity(200, 1.0).unwrap();
    let grid = TimeGrid::log(0.01, 1e3, 16).unwrap();
    let gamma = 0.5;
    let curve = run(&model, &Task::BinaryLogistic, gamma, &grid);
    let m = col(&curve, "m");
    assert!(m.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    let cw = measure_cw(&curve, LogisticQuadrature::shared()).unwrap();
    assert!(cw.plateau >= 2.0);
    // omega_1(t) = int S ds with S = W1 at (m, B); trapezoid on the recorded grid.
    let q = LogisticQuadrature::shared();
    let s: Vec<f64> = curve.rows.iter().map(|r| q.moments(r.m, r.b[0]).unwrap().w1).collect();
    let t = curve.times();
    let mut omega = 0.0;
    for k in 1..t.len() {
        omega += 0.5 * (t[k] - t[k - 1]) * (s[k] + s[k - 1]);
        // the trapezoid overestimates a convex decreasing S; allow for it
        assert!(m[k] >= (1.0 - (-gamma * omega).exp()) - 1e-3, "t = {}", t[k]);
    }
    let terminal = *m.last().unwrap();
    assert!(terminal <= cw.sup * 1.0 + 1e-9);
    assert!((terminal - cw.plateau).abs() < 1e-6);
}

#[test]
fn power_law_modes_respect_overlap_bounds() {
    let model = build_power_law(300, &[1.2, 1.2], 0.2, 1.0).unwrap();
    let d = 300.0;
    let grid = TimeGrid::linear(20.0, 401).unwrap();
    let gamma = 0.9;
    let q = LogisticQuadrature::shared();
    let mut states = Vec::new();
    let mut obs = |s: &OdeState| {
        states.push(s.clone());
        Ok(())
    };
    let curve = integrate_task(
        &model,
        &Task::BinaryLogistic,
        &Schedule::constant(gamma).unwrap(),
        &grid,
        &SolverSettings::default(),
        OdeOptions {
            observer: Some(&mut obs),
            ..Default::default()
        },
    )
    .unwrap();
    let s: Vec<f64> = curve.rows.iter().map(|r| q.moments(r.m, r.b[0]).unwrap().w1).collect();
    let mut omega = 0.0;
    for k in 0..states.len() {
        if k > 0 {
            omega += 0.5 * (curve.rows[k].t - curve.rows[k - 1].t) * (s[k] + s[k - 1]);
        }
        let st = &states[k];
        for r in 0..300 {
            let (v, m) = (st.norm(r)[0], st.overlap(r, 0)[0]);
            let mu = model.mean_sq(0, r) * d;
            let lam = model.eigvals(0)[r];
            assert!(v >= -1e-10 && m >= 0.0);
            assert!(m * m <= mu * v + 1e-8 * (1.0 + v));
            let floor = mu / lam * (1.0 - (-gamma * lam * omega).exp());
            assert!(m >= floor - 1e-6 * (1.0 + floor), "t = {}, mode {r}: {m} < {floor}", st.t);
        }
    }
}

#[test]
fn square_loss_decreases_below_threshold() {
    let d = 300;
    let model = build_power_law_multiclass(d, 1.3, 10, 4).unwrap();
    let task = Task::Mse {
        target: random_target(d, 10, 5),
        sigma: 0.0,
    };
    let gamma = lr_threshold_mse(&model).unwrap();
    let curve = run(&model, &task, gamma, &TimeGrid::linear(20.0, 201).unwrap());
    let loss = col(&curve, "loss");
    assert!(loss.windows(2).all(|w| w[1] <= w[0]));
    assert!(loss.last().unwrap() < &(0.5 * loss[0]));
}

#[test]
fn general_integration_ignores_thread_count() {
    let model = build_power_law(4096, &[1.0, 1.0], 0.5, 1.0).unwrap();
    let grid = TimeGrid::linear(1.0, 3).unwrap();
    let task = Task::cross_entropy(2);
    let go = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run(&model, &task, 0.5, &grid))
    };
    assert_eq!(go(1), go(4));
}
