//! Spectral reference path for the graph convolution: normalized Laplacian,
//! Jacobi eigendecomposition, exact spectral filtering, and the first-order
//! Chebyshev / renormalized propagation operators it verifies.
//!
//! Everything here is oracle-scale (n <= 64) and never sits on the training
//! path.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::tensor::Tensor;

/// Ascending eigenvalues with orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    /// n x n, column k is the eigenvector of eigenvalues[k].
    pub eigenvectors: Tensor,
}

/// L = I - D^{-1/2} A D^{-1/2}, with D_ii = sum_j A_ij. Degree-0 rows use
/// the convention D^{-1/2}_ii = 0, so isolated nodes get L_ii = 1.
pub fn normalized_laplacian(a: &SparseMatrix) -> Result<Tensor> {
    if !a.is_symmetric(1e-12) {
        return Err(Error::NotSymmetric { max_dev: f64::NAN });
    }
    let n = a.rows();
    let deg = a.row_sums();
    let dinv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut l = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        l.data_mut()[i * n + i] = 1.0;
    }
    for &(r, c, w) in a.entries() {
        l.data_mut()[r * n + c] -= dinv_sqrt[r] * w * dinv_sqrt[c];
    }
    Ok(l)
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// 1e-12. Eigenvalues come back sorted ascending.
pub fn eigendecompose(m: &Tensor) -> Result<EigenSystem> {
    if m.shape().len() != 2 || m.shape()[0] != m.shape()[1] {
        return Err(Error::Parameter(format!(
            "eigendecompose needs a square matrix, got {:?}",
            m.shape()
        )));
    }
    let n = m.shape()[0];
    let mut max_dev = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            max_dev = max_dev.max((m.at2(i, j) - m.at2(j, i)).abs());
        }
    }
    if max_dev > 1e-10 {
        return Err(Error::NotSymmetric { max_dev });
    }

    let mut a: Vec<f64> = m.data().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off(&a) >= 1e-12 && sweeps < 100 {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vecs = Tensor::zeros(vec![n, n]);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vecs.data_mut()[row * n + col] = v[row * n + src];
        }
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors: vecs,
    })
}

/// Exact spectral filtering U g(Lambda) U^T x.
pub fn spectral_filter<G>(l: &Tensor, x: &[f64], g: G) -> Result<Vec<f64>>
where
    G: Fn(f64) -> f64,
{
    let eig = eigendecompose(l)?;
    let n = eig.eigenvalues.len();
    if x.len() != n {
        return Err(Error::ShapeMismatch {
            op: "spectral_filter",
            lhs: vec![n],
            rhs: vec![x.len()],
        });
    }
    let u = &eig.eigenvectors;
    // y = U diag(g(lambda)) U^T x
    let mut ut_x = vec![0.0; n];
    for k in 0..n {
        for i in 0..n {
            ut_x[k] += u.at2(i, k) * x[i];
        }
    }
    for (k, c) in ut_x.iter_mut().enumerate() {
        *c *= g(eig.eigenvalues[k]);
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        for k in 0..n {
            y[i] += u.at2(i, k) * ut_x[k];
        }
    }
    Ok(y)
}

/// theta0 (I + D^{-1/2} A D^{-1/2}) x, computed without any
/// eigendecomposition. Algebraically equal to spectral filtering with
/// g(lambda) = theta0 (2 - lambda).
pub fn chebyshev_first_order(a: &SparseMatrix, x: &[f64], theta0: f64) -> Result<Vec<f64>> {
    if !a.is_symmetric(1e-12) {
        return Err(Error::NotSymmetric { max_dev: f64::NAN });
    }
    let n = a.rows();
    if x.len() != n {
        return Err(Error::ShapeMismatch {
            op: "chebyshev_first_order",
            lhs: vec![n],
            rhs: vec![x.len()],
        });
    }
    let deg = a.row_sums();
    let dinv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut y = x.to_vec();
    for &(r, c, w) in a.entries() {
        y[r] += dinv_sqrt[r] * w * dinv_sqrt[c] * x[c];
    }
    for v in &mut y {
        *v *= theta0;
    }
    Ok(y)
}

/// Renormalized propagation operator: Ahat = Dhat^{-1/2} (I + A)
/// Dhat^{-1/2} with Dhat the degree matrix of I + A.
pub fn renormalized_propagation(a: &SparseMatrix) -> Result<SparseMatrix> {
    if !a.is_symmetric(1e-12) {
        return Err(Error::NotSymmetric { max_dev: f64::NAN });
    }
    if a.entries().iter().any(|&(r, c, _)| r == c) {
        return Err(Error::Parameter(
            "adjacency must have a zero diagonal".into(),
        ));
    }
    let n = a.rows();
    let mut dhat = a.row_sums();
    for d in &mut dhat {
        *d += 1.0; // self loop
    }
    let dinv_sqrt: Vec<f64> = dhat.iter().map(|&d| 1.0 / d.sqrt()).collect();
    let mut entries: Vec<(usize, usize, f64)> = (0..n)
        .map(|i| (i, i, dinv_sqrt[i] * dinv_sqrt[i]))
        .collect();
    for &(r, c, w) in a.entries() {
        entries.push((r, c, dinv_sqrt[r] * w * dinv_sqrt[c]));
    }
    SparseMatrix::from_entries(n, n, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> SparseMatrix {
        SparseMatrix::from_entries(
            3,
            3,
            vec![(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn laplacian_two_node() {
        let a = SparseMatrix::from_entries(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let l = normalized_laplacian(&a).unwrap();
        assert_eq!(l.data(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn laplacian_isolated_nodes() {
        let l = normalized_laplacian(&SparseMatrix::zero(3, 3)).unwrap();
        assert_eq!(l, SparseMatrix::identity(3).to_dense());
    }

    #[test]
    fn path_laplacian_eigenvalues() {
        let l = normalized_laplacian(&path3()).unwrap();
        let eig = eigendecompose(&l).unwrap();
        let expect = [0.0, 1.0, 2.0];
        for (got, want) in eig.eigenvalues.iter().zip(expect) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn eigen_identity_and_diag() {
        let eig = eigendecompose(&SparseMatrix::identity(4).to_dense()).unwrap();
        assert!(eig.eigenvalues.iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let d = Tensor::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]);
        let eig = eigendecompose(&d).unwrap();
        assert!((eig.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((eig.eigenvalues[1] - 3.0).abs() < 1e-12);
        // axis-aligned eigenvectors
        for col in 0..2 {
            let v0 = eig.eigenvectors.at2(0, col).abs();
            let v1 = eig.eigenvectors.at2(1, col).abs();
            assert!((v0.max(v1) - 1.0).abs() < 1e-12 && v0.min(v1) < 1e-12);
        }
    }

    #[test]
    fn eigen_rejects_asymmetric() {
        let m = Tensor::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert!(eigendecompose(&m).is_err());
    }

    #[test]
    fn eigen_reconstruction_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 6;
        let mut m = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.random_range(-1.0..1.0);
                m.data_mut()[i * n + j] = v;
                m.data_mut()[j * n + i] = v;
            }
        }
        let eig = eigendecompose(&m).unwrap();
        let u = &eig.eigenvectors;
        // reconstruction and orthonormality
        for i in 0..n {
            for j in 0..n {
                let mut rec = 0.0;
                let mut dot = 0.0;
                for k in 0..n {
                    rec += u.at2(i, k) * eig.eigenvalues[k] * u.at2(j, k);
                    dot += u.at2(k, i) * u.at2(k, j);
                }
                assert!((rec - m.at2(i, j)).abs() < 1e-8);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn identity_filter_returns_input() {
        let l = normalized_laplacian(&path3()).unwrap();
        let x = [1.0, -2.0, 0.5];
        let y = spectral_filter(&l, &x, |_| 1.0).unwrap();
        for (a, b) in y.iter().zip(x) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn lambda_filter_is_laplacian_product() {
        let l = normalized_laplacian(&path3()).unwrap();
        let x = [1.0, -2.0, 0.5];
        let y = spectral_filter(&l, &x, |lam| lam).unwrap();
        for i in 0..3 {
            let mut lx = 0.0;
            for j in 0..3 {
                lx += l.at2(i, j) * x[j];
            }
            assert!((y[i] - lx).abs() < 1e-8);
        }
    }

    #[test]
    fn chebyshev_trivial_cases() {
        let x = [1.0, 2.0, 3.0];
        let y = chebyshev_first_order(&SparseMatrix::zero(3, 3), &x, 2.0).unwrap();
        assert_eq!(y, vec![2.0, 4.0, 6.0]);
        let y = chebyshev_first_order(&path3(), &x, 0.0).unwrap();
        assert_eq!(y, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn propagation_trivial_cases() {
        let ahat = renormalized_propagation(&SparseMatrix::zero(1, 1)).unwrap();
        assert_eq!(ahat.to_dense().data(), &[1.0]);

        let a = SparseMatrix::from_entries(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let ahat = renormalized_propagation(&a).unwrap();
        for &v in ahat.to_dense().data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn propagation_rejects_diagonal() {
        let a = SparseMatrix::from_entries(2, 2, vec![(0, 0, 1.0)]).unwrap();
        assert!(renormalized_propagation(&a).is_err());
    }

    /// Random connected undirected graph: a spanning tree plus extra edges.
    fn random_connected(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> SparseMatrix {
        use rand::Rng;
        use std::collections::BTreeMap;
        let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for v in 1..n {
            let u = rng.random_range(0..v);
            edges.insert((u, v), 1.0);
        }
        for _ in 0..n {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u != v {
                edges.insert((u.min(v), u.max(v)), 1.0);
            }
        }
        let mut entries = Vec::new();
        for (&(u, v), &w) in &edges {
            entries.push((u, v, w));
            entries.push((v, u, w));
        }
        SparseMatrix::from_entries(n, n, entries).unwrap()
    }

    #[test]
    fn laplacian_spectrum_lies_in_zero_two() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(2..10);
            let a = random_connected(&mut rng, n);
            let l = normalized_laplacian(&a).unwrap();
            let eig = eigendecompose(&l).unwrap();
            for &lam in &eig.eigenvalues {
                assert!((-1e-9..=2.0 + 1e-9).contains(&lam), "eigenvalue {lam}");
            }
            // connected graphs have a simple zero eigenvalue
            assert!(eig.eigenvalues[0].abs() < 1e-9);
            assert!(eig.eigenvalues.len() < 2 || eig.eigenvalues[1] > 1e-9);
        }
    }

    #[test]
    fn chebyshev_matches_exact_spectral_filter() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let n = rng.random_range(2..10);
            let a = random_connected(&mut rng, n);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let theta0: f64 = rng.random_range(-2.0..2.0);
            let fast = chebyshev_first_order(&a, &x, theta0).unwrap();
            let l = normalized_laplacian(&a).unwrap();
            let exact = spectral_filter(&l, &x, |lam| theta0 * (2.0 - lam)).unwrap();
            for (f, e) in fast.iter().zip(&exact) {
                assert!((f - e).abs() < 1e-8, "{f} vs {e}");
            }
        }
    }

    #[test]
    fn propagation_spectrum_bounded_with_unit_top() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let n = rng.random_range(2..10);
            let a = random_connected(&mut rng, n);
            let ahat = renormalized_propagation(&a).unwrap();
            let eig = eigendecompose(&ahat.to_dense()).unwrap();
            for &lam in &eig.eigenvalues {
                assert!(lam.abs() <= 1.0 + 1e-9, "eigenvalue {lam}");
            }
            assert!((eig.eigenvalues.last().unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn propagation_fixes_sqrt_degree_vector() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        for _ in 0..30 {
            let n = rng.random_range(1..10);
            let a = if n == 1 {
                SparseMatrix::zero(1, 1)
            } else {
                random_connected(&mut rng, n)
            };
            let ahat = renormalized_propagation(&a).unwrap();
            let sd: Vec<f64> = a.row_sums().iter().map(|d| (d + 1.0).sqrt()).collect();
            let out = ahat.mul_vec(&sd);
            for (o, s) in out.iter().zip(&sd) {
                assert!((o - s).abs() < 1e-10, "{o} vs {s}");
            }
        }
    }

    #[test]
    fn repeated_propagation_oversmooths_to_degree_profile() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let n = rng.random_range(3..8);
            let a = random_connected(&mut rng, n);
            let ahat = renormalized_propagation(&a).unwrap();
            // strictly positive input guarantees overlap with the top
            // eigenvector
            let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
            for _ in 0..200 {
                x = ahat.mul_vec(&x);
            }
            let ratios: Vec<f64> = x
                .iter()
                .zip(a.row_sums())
                .map(|(v, d)| v / (d + 1.0).sqrt())
                .collect();
            let mean = ratios.iter().sum::<f64>() / n as f64;
            for r in &ratios {
                assert!((r - mean).abs() <= 1e-6 * mean.abs(), "{ratios:?}");
            }
        }
    }
}
