//! Dense kernels and the factorization objective checked against nalgebra.

use genoseq::geno::GenotypeMatrix;
use genoseq::linalg::{InitSpec, Matrix, Rng};
use genoseq::mf::{mf_cost, mf_gradients, mf_reconstruct, FactorPair};
use nalgebra::DMatrix;

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn assert_close(ours: &Matrix, theirs: &DMatrix<f64>, tol: f64) {
    assert_eq!(ours.shape(), theirs.shape());
    for r in 0..ours.rows() {
        for c in 0..ours.cols() {
            let (a, b) = (ours.get(r, c), theirs[(r, c)]);
            assert!(
                (a - b).abs() <= tol * (1.0 + b.abs()),
                "({r},{c}): {a} vs {b}"
            );
        }
    }
}

#[test]
fn products_match_nalgebra() {
    let mut rng = Rng::new(17);
    for _ in 0..25 {
        let (m, k, n) = (1 + rng.below(9), 1 + rng.below(9), 1 + rng.below(9));
        let a = Matrix::new(m, k, InitSpec::gaussian(0.0, 1.0, rng.next_u64())).unwrap();
        let b = Matrix::new(k, n, InitSpec::gaussian(0.0, 1.0, rng.next_u64())).unwrap();
        let c = Matrix::new(n, k, InitSpec::uniform(-2.0, 2.0, rng.next_u64())).unwrap();
        assert_close(&a.matmul(&b).unwrap(), &(to_na(&a) * to_na(&b)), 1e-12);
        assert_close(
            &a.matmul_transposed(&c).unwrap(),
            &(to_na(&a) * to_na(&c).transpose()),
            1e-12,
        );
        assert_close(&a.transpose(), &to_na(&a).transpose(), 0.0);
        let x: Vec<f64> = (0..k).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let na_x = nalgebra::DVector::from_column_slice(&x);
        let ours = a.matvec(&x);
        let theirs = to_na(&a) * na_x;
        for (o, t) in ours.iter().zip(theirs.iter()) {
            assert!((o - t).abs() <= 1e-12 * (1.0 + t.abs()));
        }
        let fro = to_na(&a).norm_squared();
        assert!((a.frobenius_sq() - fro).abs() <= 1e-12 * fro);
    }
}

/// Objective and gradients from the closed forms
/// `R = M o (G - P Q^T)`, `dP = -2 R Q + beta P`, `dQ = -2 R^T P + beta Q`.
#[test]
fn factorization_objective_matches_closed_form() {
    let mut rng = Rng::new(5);
    for _ in 0..20 {
        let (u, v, f) = (2 + rng.below(10), 2 + rng.below(10), 1 + rng.below(4));
        let codes: Vec<u8> = (0..u * v)
            .map(|_| {
                if rng.bernoulli(0.25) {
                    5
                } else {
                    rng.below(3) as u8
                }
            })
            .collect();
        let g = GenotypeMatrix::from_codes(u, v, codes).unwrap();
        let fp = FactorPair::new(
            Matrix::new(u, f, InitSpec::uniform(0.0, 1.0, rng.next_u64())).unwrap(),
            Matrix::new(v, f, InitSpec::uniform(0.0, 1.0, rng.next_u64())).unwrap(),
        )
        .unwrap();
        let beta = rng.uniform(0.0, 0.1);

        let (p, q) = (to_na(&fp.p), to_na(&fp.q));
        let target = DMatrix::from_fn(u, v, |r, c| g.get(r, c).map_or(0.0, f64::from));
        let mask = DMatrix::from_fn(u, v, |r, c| if g.is_observed(r, c) { 1.0 } else { 0.0 });
        let approx = &p * q.transpose();
        let resid = (&target - &approx).component_mul(&mask);
        let sse = resid.norm_squared();
        let objective = sse + 0.5 * beta * (p.norm_squared() + q.norm_squared());
        let dp = &resid * &q * -2.0 + &p * beta;
        let dq = resid.transpose() * &p * -2.0 + &q * beta;

        assert_close(&mf_reconstruct(&fp), &approx, 1e-12);
        let (our_sse, our_obj) = mf_cost(&g, &fp, beta).unwrap();
        assert!((our_sse - sse).abs() <= 1e-10 * (1.0 + sse));
        assert!((our_obj - objective).abs() <= 1e-10 * (1.0 + objective));
        let (our_dp, our_dq) = mf_gradients(&g, &fp, beta).unwrap();
        assert_close(&our_dp, &dp, 1e-10);
        assert_close(&our_dq, &dq, 1e-10);
    }
}
