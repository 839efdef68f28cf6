//! Symmetric 3x3 eigendecomposition by cyclic Jacobi rotations.

use nalgebra::{Matrix3, Vector3};

/// Eigenvalues in ascending order with matching unit eigenvectors.
///
/// Cyclic Jacobi converges quadratically for symmetric input; a handful of
/// sweeps reaches machine precision for 3x3 systems.
pub(crate) fn sym_eigen_3x3(mat: &Matrix3<f64>) -> ([f64; 3], [Vector3<f64>; 3]) {
    let mut a = *mat;
    let mut v = Matrix3::identity();
    let scale = a.norm().max(f64::MIN_POSITIVE);

    for _sweep in 0..64 {
        let off = (a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2)).sqrt();
        if off <= f64::EPSILON * scale {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = if tau >= 0.0 {
                1.0 / (tau + (1.0 + tau * tau).sqrt())
            } else {
                -1.0 / (-tau + (1.0 + tau * tau).sqrt())
            };
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = t * c;

            let g = nalgebra::Matrix3::<f64>::from_fn(|i, j| {
                if (i, j) == (p, p) || (i, j) == (q, q) {
                    c
                } else if (i, j) == (p, q) {
                    s
                } else if (i, j) == (q, p) {
                    -s
                } else if i == j {
                    1.0
                } else {
                    0.0
                }
            });
            a = g.transpose() * a * g;
            // Clear the annihilated element exactly to stop rounding creep.
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= g;
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
    let values = [a[(order[0], order[0])], a[(order[1], order[1])], a[(order[2], order[2])]];
    let vectors = [
        v.column(order[0]).into_owned(),
        v.column(order[1]).into_owned(),
        v.column(order[2]).into_owned(),
    ];
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut impl Rng, scale: f64) -> Matrix3<f64> {
        let m = Matrix3::from_fn(|_, _| rng.random_range(-scale..scale));
        (m + m.transpose()) / 2.0
    }

    #[test]
    fn reconstructs_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let m = random_symmetric(&mut rng, 100.0);
            let (vals, vecs) = sym_eigen_3x3(&m);
            assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
            for k in 0..3 {
                let residual = m * vecs[k] - vals[k] * vecs[k];
                assert!(
                    residual.norm() <= 1e-12 * m.norm().max(1.0),
                    "residual {} too large for {:?}",
                    residual.norm(),
                    m
                );
                assert!((vecs[k].norm() - 1.0).abs() < 1e-13);
            }
            // orthogonality
            assert!(vecs[0].dot(&vecs[1]).abs() < 1e-12);
            assert!(vecs[0].dot(&vecs[2]).abs() < 1e-12);
            assert!(vecs[1].dot(&vecs[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_library_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let m = random_symmetric(&mut rng, 10.0);
            let (vals, _) = sym_eigen_3x3(&m);
            let mut reference: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
            reference.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (got, want) in vals.iter().zip(&reference) {
                assert!(
                    (got - want).abs() <= 1e-10 * m.norm().max(1.0),
                    "{got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn diagonal_passthrough() {
        let m = Matrix3::from_diagonal(&Vector3::new(3.0, -1.0, 2.0));
        let (vals, vecs) = sym_eigen_3x3(&m);
        assert_eq!(vals, [-1.0, 2.0, 3.0]);
        assert!((vecs[0].dot(&Vector3::new(0.0, 1.0, 0.0))).abs() > 0.999_999);
    }
}
