//! Alignment and distribution metrics.
//!
//! The two scalar observables of every experiment are the cosine similarity
//! Q between the running estimate and the planted signal, and the norm
//! parameter λ = ‖x‖/√p. Subspace experiments additionally report the
//! Grassmann distance (the ℓ2 norm of the principal angles between two
//! spans), and the density experiments compare empirical coordinate
//! histograms against solver output in L1.

use crate::error::{Error, Result};
use crate::linalg;

/// Cosine similarity between an estimate and a reference direction,
/// Q = ξᵀx / (‖ξ‖·‖x‖). Under the crate's conventions (‖ξ‖ = √p,
/// ‖x‖ = √p·λ) this is exactly ξᵀx/(p·λ).
pub fn cosine_similarity(x: &[f64], xi: &[f64]) -> Result<f64> {
    if x.len() != xi.len() {
        return Err(Error::Domain(format!(
            "cosine similarity: dimension mismatch ({} vs {})",
            x.len(),
            xi.len()
        )));
    }
    let nx = linalg::norm(x);
    let nxi = linalg::norm(xi);
    if nx == 0.0 || nxi == 0.0 {
        return Err(Error::Domain("cosine similarity of a zero vector".into()));
    }
    Ok(linalg::dot(x, xi) / (nx * nxi))
}

/// Norm parameter λ = ‖x‖ / √p.
pub fn norm_parameter(x: &[f64]) -> f64 {
    linalg::norm(x) / (x.len() as f64).sqrt()
}

fn check_uniform_grid(grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::Domain("histogram grid needs at least two points".into()));
    }
    let dx = grid[1] - grid[0];
    if dx <= 0.0 {
        return Err(Error::Domain("histogram grid must be strictly increasing".into()));
    }
    for w in grid.windows(2) {
        let step = w[1] - w[0];
        if (step - dx).abs() > 1e-9 * dx {
            return Err(Error::Domain("histogram grid must be uniformly spaced".into()));
        }
    }
    Ok(dx)
}

/// Bins `values` onto a uniform grid of cell centers and normalizes so the
/// histogram integrates to one (Σ hᵢ·Δx = 1). Values falling outside the
/// grid are counted into the end bins; a warning reports how many.
pub fn empirical_histogram(values: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let dx = check_uniform_grid(grid)?;
    if values.is_empty() {
        return Err(Error::Domain("cannot build a histogram from zero samples".into()));
    }
    let m = grid.len();
    let lo = grid[0] - 0.5 * dx;
    let mut counts = vec![0u64; m];
    let mut clamped = 0u64;
    for &v in values {
        if !v.is_finite() {
            return Err(Error::Domain(format!("non-finite sample {v} in histogram input")));
        }
        let raw = ((v - lo) / dx).floor();
        let idx = if raw < 0.0 {
            clamped += 1;
            0
        } else if raw >= m as f64 {
            clamped += 1;
            m - 1
        } else {
            raw as usize
        };
        counts[idx] += 1;
    }
    if clamped > 0 {
        log::warn!(
            "{clamped} of {} samples fell outside the histogram grid [{:.3}, {:.3}] and were clamped to the end bins",
            values.len(),
            lo,
            grid[m - 1] + 0.5 * dx,
        );
    }
    let scale = 1.0 / (values.len() as f64 * dx);
    Ok(counts.into_iter().map(|c| c as f64 * scale).collect())
}

/// L1 distance ∫|h − d| between two densities tabulated on a shared,
/// strictly increasing grid, by the trapezoid rule. For two probability
/// densities the value lies in [0, 2].
pub fn l1_density_distance(h: &[f64], d: &[f64], grid: &[f64]) -> Result<f64> {
    if h.len() != grid.len() || d.len() != grid.len() {
        return Err(Error::Domain(format!(
            "L1 distance: grid mismatch (lengths {}, {} on a grid of {})",
            h.len(),
            d.len(),
            grid.len()
        )));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("L1 distance: grid must be strictly increasing".into()));
    }
    let abs_diff: Vec<f64> = h.iter().zip(d).map(|(a, b)| (a - b).abs()).collect();
    Ok(linalg::trapezoid(grid, &abs_diff))
}

/// Grassmann distance between the spans of two r-frames: orthonormalize
/// both, take the singular values of the r×r cross-Gram matrix, clamp them
/// to [0, 1], and return the ℓ2 norm of the principal angles
/// θᵢ = arccos σᵢ. Ranges over [0, √r·π/2].
///
/// Working on the cross-Gram keeps the factorization at r×r, so no p×p
/// matrix is ever formed.
pub fn grassmann_distance(u: &[Vec<f64>], v: &[Vec<f64>]) -> Result<f64> {
    let r = u.len();
    if r == 0 || v.len() != r {
        return Err(Error::Domain(format!(
            "Grassmann distance: need matching nonzero frame sizes, got {} and {}",
            r,
            v.len()
        )));
    }
    let p = u[0].len();
    if u.iter().chain(v.iter()).any(|col| col.len() != p) {
        return Err(Error::Domain("Grassmann distance: ambient dimensions differ".into()));
    }
    if r > p {
        return Err(Error::Domain(format!(
            "Grassmann distance: frame size {r} exceeds ambient dimension {p}"
        )));
    }
    let mut ub = u.to_vec();
    let mut vb = v.to_vec();
    linalg::orthonormalize(&mut ub)?;
    linalg::orthonormalize(&mut vb)?;
    // Cross-Gram columns g_j = (ûᵢᵀv̂_j)_i.
    let gram: Vec<Vec<f64>> = vb
        .iter()
        .map(|vj| ub.iter().map(|ui| linalg::dot(ui, vj)).collect())
        .collect();
    let sigma = linalg::singular_values(&gram);
    let sum: f64 = sigma
        .iter()
        .map(|&s| {
            let c = s.clamp(0.0, 1.0);
            let theta = c.acos();
            theta * theta
        })
        .sum();
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    #[test]
    fn cosine_is_one_for_collinear_vectors() {
        let xi = vec![1.0, -2.0, 0.5, 3.0];
        let x: Vec<f64> = xi.iter().map(|v| 2.0 * v).collect();
        assert!((cosine_similarity(&x, &xi).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_is_zero_for_orthogonal_vectors() {
        let a = vec![1.0, 1.0, 0.0, 0.0];
        let b = vec![1.0, -1.0, 3.0, 0.0];
        assert!(cosine_similarity(&a, &b).unwrap().abs() < 1e-15);
    }

    #[test]
    fn cosine_rejects_zero_and_mismatched_input() {
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn norm_parameter_is_one_on_the_sqrt_p_sphere() {
        let x = vec![1.0; 64];
        assert_eq!(norm_parameter(&x), 1.0);
        let y = vec![3.0; 16];
        assert!((norm_parameter(&y) - 3.0).abs() < 1e-15);
    }

    fn centers(lo: f64, hi: f64, m: usize) -> Vec<f64> {
        let dx = (hi - lo) / m as f64;
        (0..m).map(|i| lo + (i as f64 + 0.5) * dx).collect()
    }

    #[test]
    fn histogram_mass_is_one() {
        let grid = centers(-4.0, 4.0, 32);
        let values: Vec<f64> = (0..1000).map(|i| -3.9 + 7.8 * (i as f64) / 999.0).collect();
        let h = empirical_histogram(&values, &grid).unwrap();
        let dx = grid[1] - grid[0];
        let mass: f64 = h.iter().map(|v| v * dx).sum();
        assert!((mass - 1.0).abs() < 1e-6, "mass = {mass}");
    }

    #[test]
    fn histogram_clamps_outliers_into_end_bins() {
        let grid = centers(-1.0, 1.0, 4);
        let h = empirical_histogram(&[-5.0, 5.0, 0.1, 0.2], &grid).unwrap();
        let dx = 0.5;
        // Two samples clamped (one per side), two interior.
        assert!((h.iter().map(|v| v * dx).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(h[0] > 0.0 && h[3] > 0.0);
    }

    #[test]
    fn histogram_of_gaussian_samples_approximates_the_density() {
        // 2·10⁵ standard normal draws should land within 0.03 of the
        // normal density in L1 on a moderately coarse grid.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let values: Vec<f64> =
            (0..200_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let grid = centers(-6.0, 6.0, 96);
        let h = empirical_histogram(&values, &grid).unwrap();
        let phi: Vec<f64> = grid
            .iter()
            .map(|x| (-0.5 * x * x).exp() / (2.0 * PI).sqrt())
            .collect();
        let l1 = l1_density_distance(&h, &phi, &grid).unwrap();
        assert!(l1 <= 0.03, "L1 to normal density = {l1}");
    }

    #[test]
    fn l1_distance_of_identical_densities_is_zero() {
        let grid = centers(-2.0, 2.0, 10);
        let d: Vec<f64> = grid.iter().map(|x| (-x * x).exp()).collect();
        assert_eq!(l1_density_distance(&d, &d, &grid).unwrap(), 0.0);
    }

    #[test]
    fn l1_distance_of_shifted_gaussians_matches_quadrature() {
        // Two unit Gaussians one mean apart: ∫|φ(x) − φ(x−1)| dx
        // = 4Φ(1/2) − 2 ≈ 0.76585 (value frozen from an independent
        // quadrature of the integrand).
        let m = 3400;
        let grid: Vec<f64> = (0..m).map(|i| -8.0 + 17.0 * (i as f64) / (m - 1) as f64).collect();
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        let a: Vec<f64> = grid.iter().map(|&x| phi(x)).collect();
        let b: Vec<f64> = grid.iter().map(|&x| phi(x - 1.0)).collect();
        let l1 = l1_density_distance(&a, &b, &grid).unwrap();
        assert!((l1 - 0.7658498).abs() < 1e-3, "L1 = {l1}");
    }

    #[test]
    fn l1_distance_rejects_grid_mismatch() {
        let grid = centers(0.0, 1.0, 5);
        assert!(l1_density_distance(&[1.0; 4], &[1.0; 5], &grid).is_err());
    }

    fn gaussian_frame(p: usize, r: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..r).map(|_| (0..p).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn grassmann_is_zero_for_equal_spans() {
        let u = gaussian_frame(30, 3, 1);
        // Same span, different (invertible) mixing.
        let v: Vec<Vec<f64>> = vec![
            u[0].iter().zip(&u[1]).map(|(a, b)| 2.0 * a - b).collect(),
            u[1].iter().zip(&u[2]).map(|(a, b)| 0.3 * a + b).collect(),
            u[0].iter().zip(&u[2]).map(|(a, b)| a + 4.0 * b).collect(),
        ];
        // arccos is ill-conditioned at σ = 1 (θ ≈ √(2ε) for σ = 1 − ε), so
        // round-off in the cross-Gram shows up at the 1e-7 scale even
        // though the spans are identical.
        assert!(grassmann_distance(&u, &v).unwrap() < 1e-6);
    }

    #[test]
    fn grassmann_of_orthogonal_planes_is_sqrt2_pi_over_2() {
        let mut e = vec![vec![0.0; 4]; 4];
        for (i, col) in e.iter_mut().enumerate() {
            col[i] = 1.0;
        }
        let d = grassmann_distance(&e[0..2], &e[2..4]).unwrap();
        assert!((d - (2.0f64).sqrt() * PI / 2.0).abs() < 1e-12, "d = {d}");
    }

    #[test]
    fn grassmann_of_lines_is_the_principal_angle() {
        let u = vec![vec![1.0, 0.0, 0.0]];
        let v = vec![vec![1.0, 1.0, 0.0]];
        let d = grassmann_distance(&u, &v).unwrap();
        assert!((d - (PI / 4.0)).abs() < 1e-12);
        // Sign of the direction is irrelevant: same line, zero distance.
        let w = vec![vec![-2.0, 0.0, 0.0]];
        assert!(grassmann_distance(&u, &w).unwrap() < 1e-12);
    }

    #[test]
    fn grassmann_is_symmetric_and_bounded() {
        let u = gaussian_frame(25, 4, 7);
        let v = gaussian_frame(25, 4, 8);
        let duv = grassmann_distance(&u, &v).unwrap();
        let dvu = grassmann_distance(&v, &u).unwrap();
        assert!((duv - dvu).abs() < 1e-10);
        // Range bound for r = 4 frames: √r·π/2.
        assert!(duv >= 0.0 && duv <= 2.0 * PI / 2.0 + 1e-12);
    }

    #[test]
    fn grassmann_rejects_rank_deficient_frames() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        let u = vec![a, b];
        let v = gaussian_frame(4, 2, 3);
        assert!(matches!(grassmann_distance(&u, &v), Err(Error::Domain(_))));
    }
}
