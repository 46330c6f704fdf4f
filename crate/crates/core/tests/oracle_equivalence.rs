use descest::fixtures::{feasible_instance, gaussian_vector, scalar_chain, Instance};
use descest::matalg::{solve_spd, Matrix, Vector};
use descest::model::{disturbance_cost, simulate, DisturbanceRealization};
use descest::oracle::{direction_interval, stacked_minimize};
use descest::{DescriptorModel, MeasurementSequence, MinimaxFilter, UncertaintyWeights};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn rel_gap_m(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

fn rel_gap_v(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

fn check_against_oracle(inst: &Instance, rng: &mut impl Rng) {
    let filter = MinimaxFilter::new(&inst.model, &inst.weights).unwrap();
    let state = filter.run(&inst.y).unwrap();
    let oracle = stacked_minimize(&inst.model, &inst.weights, &inst.y).unwrap();
    let n = inst.model.n;

    assert!(rel_gap_m(&state.q, &oracle.marginal_q) <= 1e-8);
    let center = state.center().unwrap();
    assert!(rel_gap_v(&center, &oracle.marginal_center) <= 1e-8);
    // alpha and (Q c, c) nearly cancel in the bracket; compare the form.
    let form = state.posterior_ellipsoid().unwrap();
    for _ in 0..4 {
        let x = &center + gaussian_vector(rng, n);
        assert!(rel_gap(form.form(&x), oracle.marginal_form(&x)) <= 1e-8);
    }

    let mut dirs: Vec<Vector> = (0..n)
        .map(|i| Vector::from_fn(n, |j, _| (i == j) as u8 as f64))
        .collect();
    dirs.push(gaussian_vector(rng, n));
    for ell in dirs {
        let est = state.estimate(&ell).unwrap();
        let interval = direction_interval(&oracle, &ell).unwrap();
        assert!(est.observable);
        assert!((est.value - interval.center()).abs() <= 1e-8 * (1.0 + interval.center().abs()));
        assert!(rel_gap(est.error, interval.half_width()) <= 1e-8);
    }
}

#[test]
fn scalar_chain_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    check_against_oracle(&scalar_chain(), &mut rng);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recursion_matches_oracle(seed in any::<u64>(), n in 1usize..=4, steps in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = feasible_instance(&mut rng, n, steps, 0.5);
        check_against_oracle(&inst, &mut rng);
    }

    #[test]
    fn estimate_is_linear_in_measurements(seed in any::<u64>(), n in 1usize..=3, steps in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = feasible_instance(&mut rng, n, steps, 0.2);
        let b_y: Vec<Vector> = a.y.y.iter().map(|v| gaussian_vector(&mut rng, v.len())).collect();
        let b = MeasurementSequence::new(b_y);
        let sum = MeasurementSequence::new(a.y.y.iter().zip(&b.y).map(|(u, v)| u + v * 0.5).collect());
        let filter = MinimaxFilter::new(&a.model, &a.weights).unwrap();
        let ca = filter.run(&a.y).unwrap().center().unwrap();
        let cb = filter.run(&b).unwrap().center().unwrap();
        let cs = filter.run(&sum).unwrap().center().unwrap();
        let expect = &ca + &cb * 0.5;
        prop_assert!((&cs - &expect).norm() <= 1e-8 * (1.0 + expect.norm()));
    }

    #[test]
    fn generating_state_is_compatible(seed in any::<u64>(), n in 1usize..=3, steps in 1usize..=8) {
        // Any disturbance of cost <= 1 generates a state inside the
        // posterior set and within the guaranteed error of every estimate.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = feasible_instance(&mut rng, n, steps, 0.5);
        let model = &inst.model;
        let mut d = DisturbanceRealization::zeros(model);
        d.q = gaussian_vector(&mut rng, model.rows_f(0));
        d.f = (0..steps).map(|k| gaussian_vector(&mut rng, model.rows_f(k + 1))).collect();
        d.g = (0..=steps).map(|k| gaussian_vector(&mut rng, model.rows_h(k))).collect();
        let cost = disturbance_cost(&inst.weights, &d).unwrap();
        let d = d.scaled((0.9 / cost).sqrt());
        let free = gaussian_vector(&mut rng, n);
        let Ok((traj, y)) = simulate(model, &d, &free) else {
            // rank-deficient F_k may make the draw infeasible
            return Ok(());
        };
        let state = MinimaxFilter::new(model, &inst.weights).unwrap().run(&y).unwrap();
        let x_n = &traj.x[steps];
        let ellipsoid = state.posterior_ellipsoid().unwrap();
        prop_assert!(ellipsoid.form(x_n) <= 1.0 + 1e-8);
        let ell = gaussian_vector(&mut rng, n);
        let est = state.estimate(&ell).unwrap();
        prop_assert!((ell.dot(x_n) - est.value).abs() <= est.error * (1.0 + 1e-8) + 1e-10);
        let oracle = stacked_minimize(model, &inst.weights, &y).unwrap();
        prop_assert!(oracle.min_cost <= 0.9 + 1e-9);
    }
}

/// Least squares `min |A x - b|^2` through the normal equations.
fn least_squares(a: &Matrix, b: &Vector) -> Vector {
    solve_spd(&(a.transpose() * a), &(a.transpose() * b)).unwrap()
}

#[test]
fn nonsingular_dynamics_reduce_to_weighted_least_squares() {
    // With F = I every trajectory is determined by (x_0, f), so the center
    // is the last state of the weighted least-squares fit of all residuals.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..10 {
        let n = rng.random_range(1..=3);
        let steps = rng.random_range(1..=6);
        let c = descest::fixtures::gaussian_matrix(&mut rng, n, n) * 0.7;
        let h = descest::fixtures::gaussian_matrix(&mut rng, 1, n);
        let model =
            DescriptorModel::time_invariant(steps, Matrix::identity(n, n), c.clone(), h.clone());
        let s = descest::fixtures::random_spd(&mut rng, n, 1.0);
        let si = descest::fixtures::random_spd(&mut rng, n, 1.0);
        let ri = Matrix::from_element(1, 1, 2.0);
        let weights = UncertaintyWeights::constant(s.clone(), si.clone(), ri.clone());
        let y = MeasurementSequence::new(
            (0..=steps)
                .map(|_| gaussian_vector(&mut rng, 1) * 0.1)
                .collect(),
        );

        // Rows of the whitened residual operator on the stacked trajectory.
        let dim = n * (steps + 1);
        let rows = n + steps * n + (steps + 1);
        let mut a = Matrix::zeros(rows, dim);
        let mut b = Vector::zeros(rows);
        let s_half = s.clone().cholesky().unwrap().l().transpose();
        let si_half = si.clone().cholesky().unwrap().l().transpose();
        a.view_mut((0, 0), (n, n)).copy_from(&s_half);
        for k in 0..steps {
            let r0 = n + k * n;
            a.view_mut((r0, (k + 1) * n), (n, n)).copy_from(&si_half);
            a.view_mut((r0, k * n), (n, n))
                .copy_from(&(-(&si_half * &c)));
        }
        let r_half = 2.0_f64.sqrt();
        for k in 0..=steps {
            let r0 = n + steps * n + k;
            a.view_mut((r0, k * n), (1, n)).copy_from(&(&h * r_half));
            b[r0] = r_half * y.y[k][0];
        }
        let x = least_squares(&a, &b);
        let expect = x.rows(steps * n, n).into_owned();

        let center = MinimaxFilter::new(&model, &weights)
            .unwrap()
            .run(&y)
            .unwrap()
            .center()
            .unwrap();
        assert!((center - &expect).norm() <= 1e-9 * (1.0 + expect.norm()));
    }
}
