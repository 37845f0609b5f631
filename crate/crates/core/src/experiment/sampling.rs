//! Deterministic data sampling from the exact thermal density.
//!
//! The generator is xoshiro256++ seeded with `seed_from_u64`, which expands
//! the 64-bit seed with SplitMix64 into the 256-bit state. Each draw takes the top
//! 53 bits of `next_u64` as `u` in `[0, 1)` and returns the first node whose
//! cumulative trapezoid mass exceeds `u`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::model::{Grid, MeshFunction, PhysicsParams, PotentialField};
use crate::reconstruction::Dataset;
use crate::spectral::exact_density;

/// `u = (next_u64 >> 11) 2^-53`.
pub fn unit_uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF draws of mesh nodes from a density sampled on the mesh.
pub fn sample_nodes(density: &MeshFunction, grid: &Grid, n: usize, seed: u64) -> Result<Vec<usize>> {
    crate::error::check_len(grid.n_x(), density.len())?;
    let w = grid.weights();
    let mut cdf = Vec::with_capacity(density.len());
    let mut acc = 0.0;
    for (p, wj) in density.values.iter().zip(&w) {
        if !(*p >= 0.0 && p.is_finite()) {
            return Err(Error::Domain(format!("density has invalid entry {p}")));
        }
        acc += p * wj;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::Domain("density has zero mass".into()));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let u = unit_uniform(&mut rng) * acc;
            // first node whose cumulative mass exceeds u; empty cells are never chosen
            cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
        })
        .collect())
}

/// `n` positions drawn from the exact normalized density of `truth`.
pub fn sample_dataset(
    truth: &PotentialField,
    grid: &Grid,
    params: &PhysicsParams,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    let density = exact_density(truth, grid, params)?;
    let nodes = sample_nodes(&density, grid, n, seed)?;
    Dataset::from_nodes(nodes, grid, Some(seed))
}

/// Relative frequencies `count_j / N`.
pub fn empirical_frequencies(data: &Dataset, n_x: usize) -> Vec<f64> {
    let n = data.len().max(1) as f64;
    data.counts(n_x).into_iter().map(|c| c as f64 / n).collect()
}

/// Empirical density `count_j / (N dx)`; integrates to one when no datum
/// sits on an end node.
pub fn empirical_density(data: &Dataset, grid: &Grid) -> Vec<f64> {
    empirical_frequencies(data, grid.n_x())
        .into_iter()
        .map(|f| f / grid.dx())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, MeshRole};

    #[test]
    fn point_mass_density() {
        let p = PhysicsParams::new(1.0, 1.0).unwrap();
        let g = build_grid(10, 0.0, 9.0, 4, &p).unwrap();
        let mut d = vec![0.0; 10];
        d[6] = 1.0;
        let nodes = sample_nodes(&MeshFunction::new(d, MeshRole::Density), &g, 500, 3).unwrap();
        assert!(nodes.iter().all(|&j| j == 6));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let p = PhysicsParams::new(1.0, 10.0).unwrap();
        let g = build_grid(30, 0.0, 29.0, 30, &p).unwrap();
        let v = crate::experiment::potentials::builtin_potential(
            crate::experiment::potentials::BuiltinPotential::CosineWell,
            &g,
        )
        .unwrap();
        let a = sample_dataset(&v, &g, &p, 15, 42).unwrap();
        let b = sample_dataset(&v, &g, &p, 15, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_dataset(&v, &g, &p, 15, 43).unwrap();
        assert_ne!(a.nodes, c.nodes);
        assert!(sample_dataset(&v, &g, &p, 0, 42).is_err());
    }

    #[test]
    fn uniform_density_histogram() {
        // interior-uniform density; end nodes carry zero mass
        let p = PhysicsParams::new(1.0, 1.0).unwrap();
        let g = build_grid(12, 0.0, 11.0, 4, &p).unwrap();
        let mut d = vec![0.1; 12];
        d[0] = 0.0;
        d[11] = 0.0;
        let n = 100_000;
        let nodes = sample_nodes(&MeshFunction::new(d, MeshRole::Density), &g, n, 9).unwrap();
        let mut counts = [0usize; 12];
        for j in nodes {
            counts[j] += 1;
        }
        assert_eq!(counts[0] + counts[11], 0);
        let expect = n as f64 / 10.0;
        let sigma = (n as f64 * 0.1 * 0.9).sqrt();
        for &c in &counts[1..11] {
            assert!((c as f64 - expect).abs() < 3.0 * sigma + 1.0, "count {c}");
        }
        let chi2: f64 = counts[1..11]
            .iter()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        // 9 degrees of freedom, 99.9% quantile
        assert!(chi2 < 27.9, "chi2 {chi2}");
    }
}
