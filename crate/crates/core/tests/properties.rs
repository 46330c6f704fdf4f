use descest::fixtures::{gaussian_matrix, gaussian_vector, random_instance, random_low_rank};
use descest::matalg::{eig_sym, pinv, rank, svd_factor, symmetrize, BandMatrix, Matrix};
use descest::model::{disturbance_cost, residuals_of, simulate, DisturbanceRealization};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(1..=6);
    let n = rng.random_range(1..=6);
    let r = rng.random_range(0..=m.min(n));
    if rng.random_bool(0.5) {
        random_low_rank(&mut rng, m, n, r)
    } else {
        gaussian_matrix(&mut rng, m, n)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn penrose_conditions(seed in any::<u64>()) {
        let a = random_matrix(seed);
        let p = pinv(&a, 0.0).unwrap();
        let ap = &a * &p;
        let pa = &p * &a;
        prop_assert!((&ap * &a - &a).norm() <= 1e-10 * a.norm());
        prop_assert!((&pa * &p - &p).norm() <= 1e-10 * p.norm());
        prop_assert!((&ap - ap.transpose()).norm() <= 1e-10 * ap.norm());
        prop_assert!((&pa - pa.transpose()).norm() <= 1e-10 * pa.norm());
        prop_assert_eq!(rank(&p, 0.0).unwrap(), rank(&a, 0.0).unwrap());
    }

    #[test]
    fn svd_reconstructs(seed in any::<u64>()) {
        let a = random_matrix(seed);
        let svd = svd_factor(&a).unwrap();
        prop_assert!((svd.reconstruct() - &a).norm() <= 1e-12 * a.norm().max(1.0));
        let (m, n) = a.shape();
        prop_assert!((svd.left.transpose() * &svd.left - Matrix::identity(m, m)).norm() <= 1e-12);
        prop_assert!((&svd.right * svd.right.transpose() - Matrix::identity(n, n)).norm() <= 1e-12);
        let s = svd.singular_values();
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn symmetric_eigen_residual(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=6);
        let a = symmetrize(&gaussian_matrix(&mut rng, n, n));
        let (vals, vecs) = eig_sym(&a).unwrap();
        prop_assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        for (i, &l) in vals.iter().enumerate() {
            let v = vecs.column(i);
            prop_assert!((&a * v - v * l).norm() <= 1e-12 * a.norm().max(1.0));
        }
    }

    #[test]
    fn band_solve_matches_dense(seed in any::<u64>(), n in 1usize..=30, kl in 0usize..=4, ku in 0usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                let v: f64 = rng.random_range(-1.0..1.0);
                triplets.push((i, j, if i == j { v + 4.0 } else { v }));
            }
        }
        let dense = Matrix::from_fn(n, n, |i, j| {
            triplets.iter().filter(|t| t.0 == i && t.1 == j).map(|t| t.2).sum()
        });
        let b = gaussian_vector(&mut rng, n);
        let x = BandMatrix::from_triplets(n, &triplets).solve(b.as_slice()).unwrap();
        let x = descest::Vector::from_vec(x);
        prop_assert!((&dense * &x - &b).norm() <= 1e-10 * (1.0 + b.norm()));
    }

    #[test]
    fn simulate_then_residuals_round_trip(seed in any::<u64>(), n in 1usize..=4, steps in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inst = random_instance(&mut rng, n, steps);
        // Square invertible F_k keep every step feasible.
        inst.model.f = (0..=steps).map(|_| gaussian_matrix(&mut rng, n, n) + Matrix::identity(n, n) * 4.0).collect();
        let model = &inst.model;
        let mut d = DisturbanceRealization::zeros(model);
        d.q = gaussian_vector(&mut rng, n);
        d.f = (0..steps).map(|_| gaussian_vector(&mut rng, n)).collect();
        d.g = (0..=steps).map(|k| gaussian_vector(&mut rng, model.rows_h(k))).collect();
        let (traj, y) = simulate(model, &d, &descest::Vector::zeros(n)).unwrap();
        let back = residuals_of(model, &traj, &y).unwrap();
        let scale = 1.0 + traj.x.iter().map(|x| x.norm()).fold(0.0, f64::max);
        prop_assert!((&back.q - &d.q).norm() <= 1e-9 * scale);
        for (a, b) in back.f.iter().zip(&d.f) {
            prop_assert!((a - b).norm() <= 1e-9 * scale);
        }
        let c1 = disturbance_cost(&inst.weights, &d).unwrap();
        let c2 = disturbance_cost(&inst.weights, &back).unwrap();
        prop_assert!((c1 - c2).abs() <= 1e-7 * (1.0 + c1) * scale * scale);
    }
}
