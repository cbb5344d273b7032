//! Synthetic test scenes: unions of low-dimensional spectral subspaces.
//!
//! Each class gets a random 3-dimensional nonnegative spectral basis; each
//! pixel's spectrum is a nonnegative combination of its class basis, so the
//! class spectra lie exactly in a 3-dimensional linear subspace while staying
//! valid (nonnegative) radiance. Pixels are assigned to classes in
//! spatially contiguous row-major blocks so spatial regularization has
//! structure to exploit. Optional Gaussian noise is clamped at zero to keep
//! the cube nonnegative.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cube::{LabelMap, SpectralCube};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};

/// Intrinsic dimension of every synthetic class subspace.
pub const SUBSPACE_DIM: usize = 3;

/// Generates a synthetic `(cube, labels)` pair, deterministic in `seed`.
pub fn synth_cube(
    seed: u64,
    rows: usize,
    cols: usize,
    bands: usize,
    classes: usize,
    noise_sigma: f64,
) -> Result<(SpectralCube, LabelMap)> {
    let pixels = rows * cols;
    if classes == 0 {
        return Err(Error::invalid("need at least one class"));
    }
    if classes > pixels {
        return Err(Error::invalid(format!(
            "{classes} classes cannot cover {pixels} pixels"
        )));
    }
    if bands < classes {
        return Err(Error::invalid(format!(
            "need at least as many bands ({bands}) as classes ({classes})"
        )));
    }
    if bands < SUBSPACE_DIM {
        return Err(Error::invalid(format!(
            "need at least {SUBSPACE_DIM} bands for {SUBSPACE_DIM}-dimensional subspaces"
        )));
    }
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(Error::invalid("noise sigma must be finite and nonnegative"));
    }

    // One unit-norm nonnegative basis column at a time, all classes from a
    // single stream so the draw order is fixed.
    let mut basis_rng = stream_rng(seed, streams::SYNTH_BASIS);
    let mut bases = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut basis = vec![[0.0f64; SUBSPACE_DIM]; bands];
        for d in 0..SUBSPACE_DIM {
            let mut norm2 = 0.0;
            for row in basis.iter_mut() {
                let v: f64 = basis_rng.random::<f64>();
                row[d] = v;
                norm2 += v * v;
            }
            let norm = norm2.sqrt().max(f64::MIN_POSITIVE);
            for row in basis.iter_mut() {
                row[d] /= norm;
            }
        }
        bases.push(basis);
    }

    // Contiguous row-major index blocks; block q covers
    // [q*P/k, (q+1)*P/k), i.e. bands of image rows.
    let class_of = |p: usize| -> usize { (p * classes) / pixels };

    let mut coeff_rng = stream_rng(seed, streams::SYNTH_COEFF);
    let mut noise_rng = stream_rng(seed, streams::SYNTH_NOISE);
    let normal = if noise_sigma > 0.0 {
        Some(Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };

    let mut values = Vec::with_capacity(pixels * bands);
    let mut labels = Vec::with_capacity(pixels);
    for p in 0..pixels {
        let q = class_of(p);
        labels.push(q as u32 + 1);
        let basis = &bases[q];
        let mut coeff = [0.0f64; SUBSPACE_DIM];
        for c in coeff.iter_mut() {
            *c = coeff_rng.random_range(0.2..1.0);
        }
        for row in basis.iter().take(bands) {
            let mut v = 0.0;
            for (d, c) in coeff.iter().enumerate() {
                v += row[d] * c;
            }
            if let Some(n) = &normal {
                v += n.sample(&mut noise_rng);
            }
            values.push(v.max(0.0));
        }
    }

    let cube = SpectralCube::new(rows, cols, bands, values)?;
    let map = LabelMap::new(rows, cols, labels)?;
    Ok((cube, map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    /// Singular values of the class data matrix (bands x class pixels).
    fn class_singular_values(
        cube: &SpectralCube,
        map: &LabelMap,
        class: u32,
    ) -> Vec<f64> {
        let idx: Vec<usize> = (0..cube.num_pixels())
            .filter(|&p| map.labels()[p] == class)
            .collect();
        let mut m = DMatrix::zeros(cube.bands(), idx.len());
        for (c, &p) in idx.iter().enumerate() {
            for (r, &v) in cube.spectrum(p).iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv
    }

    #[test]
    fn noiseless_groups_have_exact_rank_three() {
        let (cube, map) = synth_cube(7, 4, 4, 8, 2, 0.0).unwrap();
        for class in 1..=2 {
            let count = map.labels().iter().filter(|&&l| l == class).count();
            assert_eq!(count, 8, "balanced 8-pixel groups");
            let sv = class_singular_values(&cube, &map, class);
            assert!(sv[2] > 1e-9, "third singular value present: {:?}", sv);
            assert!(
                sv[3] < 1e-9 * sv[0],
                "rank must be exactly 3, got sv = {:?}",
                sv
            );
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = synth_cube(7, 3, 5, 6, 3, 0.0).unwrap();
        let b = synth_cube(7, 3, 5, 6, 3, 0.0).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = synth_cube(8, 3, 5, 6, 3, 0.0).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn noisy_groups_have_three_dominant_singular_values() {
        let (cube, map) = synth_cube(7, 20, 20, 32, 4, 0.01).unwrap();
        for class in 1..=4 {
            let sv = class_singular_values(&cube, &map, class);
            assert!(
                sv[2] >= 10.0 * sv[3],
                "class {class}: expected 3 dominant singular values, got {:?}",
                &sv[..5.min(sv.len())]
            );
        }
    }

    #[test]
    fn labels_form_contiguous_blocks() {
        let (_, map) = synth_cube(3, 6, 6, 8, 3, 0.0).unwrap();
        // Row-major labels must be non-decreasing for block assignment.
        let l = map.labels();
        assert!(l.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(map.k(), 3);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(synth_cube(0, 2, 2, 8, 5, 0.0).is_err()); // k > MN
        assert!(synth_cube(0, 2, 2, 2, 3, 0.0).is_err()); // L < k
        assert!(synth_cube(0, 2, 2, 2, 2, 0.0).is_err()); // L < subspace dim
        assert!(synth_cube(0, 2, 2, 8, 2, -1.0).is_err());
        assert!(synth_cube(0, 2, 2, 8, 2, f64::NAN).is_err());
    }

    #[test]
    fn values_are_nonnegative_under_noise() {
        let (cube, _) = synth_cube(11, 5, 5, 6, 2, 0.5).unwrap();
        assert!(cube.values().iter().all(|&v| v >= 0.0));
    }
}
