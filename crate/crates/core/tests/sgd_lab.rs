use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use gmmdyn::ode::{SolverSettings, TimeGrid};
use gmmdyn::sgd::{concentration_sweep, run_sgd, sgd_step, SgdOptions, SgdState};
use gmmdyn::spectral::{build_identity, build_power_law, SpectralMixture};
use gmmdyn::task::{random_target, Task};
use gmmdyn::Schedule;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn rotated_coordinates_give_the_same_statistics() {
    // Run binary logistic SGD in a random orthonormal basis on the same draws
    // as the library's eigenbasis run; the basis-free statistics must agree.
    let d = 24;
    let model = build_power_law(d, &[1.0, 1.0], 0.5, 1.0).unwrap();
    let task = Task::BinaryLogistic;
    let gamma = 0.8;
    let seed = 17;
    let mut gen = ChaCha8Rng::seed_from_u64(99);
    let raw = DMatrix::from_fn(d, d, |_, _| gen.sample::<f64, _>(StandardNormal));
    let q = raw.qr().q();

    let mut lib = SgdState::zeros(&model, &task, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DVector::<f64>::zeros(d);
    for _ in 0..(20 * d) {
        sgd_step(&mut lib, &model, &task, gamma).unwrap();
        let class = if rng.random::<f64>() < model.probs()[0] { 0 } else { 1 };
        let lam = model.eigvals(class);
        let mu = model.means(class);
        let a = DVector::from_fn(d, |r, _| {
            let z: f64 = rng.sample(StandardNormal);
            lam[r].sqrt() * z + mu[r]
        });
        let a_rot = &q * a;
        let s = logistic(w.dot(&a_rot));
        let g = if class == 0 { s - 1.0 } else { s };
        w -= a_rot * (gamma / d as f64 * g);
    }
    let w_eig = q.transpose() * &w;
    let x = lib.x.column(0);
    let mean0 = DVector::from_column_slice(model.means(0));
    assert!((w.norm_squared() - x.norm_squared()).abs() < 1e-10);
    assert!((w_eig.dot(&mean0) - x.dot(&mean0)).abs() < 1e-10);
    assert!((&w_eig - x).amax() < 1e-10);
}

#[test]
fn runs_are_reproducible_and_one_pass() {
    let model = build_identity(50, 1.0).unwrap();
    let task = Task::BinaryLogistic;
    let schedule = Schedule::constant(0.5).unwrap();
    let grid = TimeGrid::linear(3.3, 12).unwrap();
    let mut steps = Vec::new();
    let mut obs = |_: f64, s: &SgdState| {
        steps.push(s.step);
        Ok(())
    };
    let a = run_sgd(&model, &task, &schedule, &grid, 5, SgdOptions {
        observer: Some(&mut obs),
        ..Default::default()
    })
    .unwrap();
    assert_eq!(*steps.last().unwrap(), 165);
    let b = run_sgd(&model, &task, &schedule, &grid, 5, SgdOptions::default()).unwrap();
    let c = run_sgd(&model, &task, &schedule, &grid, 6, SgdOptions::default()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn noiseless_square_loss_trends_down() {
    let d = 500;
    let model = SpectralMixture::new(vec![1.0], vec![vec![1.0; d]], vec![vec![0.0; d]]).unwrap();
    let task = Task::Mse {
        target: random_target(d, 1, 2),
        sigma: 0.0,
    };
    let grid = TimeGrid::linear(10.0, 201).unwrap();
    let curve = run_sgd(&model, &task, &Schedule::constant(0.9).unwrap(), &grid, 3, SgdOptions::default())
        .unwrap();
    // windows of width 0.5 over a grid with spacing 0.05
    let v = curve.column("V").unwrap();
    let means: Vec<f64> = v[1..].chunks(10).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    for pair in means.windows(2) {
        assert!(pair[1] <= pair[0], "{means:?}");
    }
}

#[test]
fn concentration_table_ignores_thread_count() {
    let schedule = Schedule::constant(0.5).unwrap();
    let grid = TimeGrid::linear(2.0, 9).unwrap();
    let settings = SolverSettings::default();
    let build = |d: usize| Ok((build_identity(d, 1.0)?, Task::BinaryLogistic));
    let go = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                concentration_sweep(build, &schedule, &grid, &[32, 64], &[0, 1, 2], &settings).unwrap()
            })
    };
    assert_eq!(go(1), go(4));
}
