//! Gauss–Hermite rules for Gaussian averages.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes `z_i` and weights `w_i` (summing to 1) with
/// `E[f(Z)] ≈ Σ w_i f(z_i)` for a standard normal `Z`, exact for
/// polynomials of degree below `2n`.
///
/// Built by Golub–Welsch from the Jacobi matrix of the Hermite
/// polynomials; nodes are returned in increasing order.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "at least one node is required");
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k] * std::f64::consts::SQRT_2, v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize away eigen-solver round-off.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let z = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-z, w);
        pairs[j] = (z, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(z, w)| (z, w / total)).unzip()
}

/// Nodes and weights for averaging over `N(mean, sigma²)` restricted to
/// nonnegative values: nodes below zero are dropped and the remaining
/// weights renormalized. `sigma = 0` gives the single node `mean`.
pub fn gaussian_nodes(mean: f64, sigma: f64, n: usize) -> Vec<(f64, f64)> {
    if sigma == 0.0 {
        return vec![(mean, 1.0)];
    }
    let (z, w) = gauss_hermite(n);
    let kept: Vec<(f64, f64)> = z
        .iter()
        .zip(&w)
        .map(|(z, w)| (mean + sigma * z, *w))
        .filter(|(x, _)| *x >= 0.0)
        .collect();
    let total: f64 = kept.iter().map(|p| p.1).sum();
    kept.into_iter().map(|(x, w)| (x, w / total)).collect()
}
