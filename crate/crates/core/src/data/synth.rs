use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use super::{DataError, Dataset};
use crate::scalar::Scalar;
use crate::seed;

/// Unit-variance Gaussian clusters; class `c` is centred at `separation * e_{c mod d}`.
///
/// Rows are interleaved by class (row `r` has label `r % num_classes`), so any
/// prefix is balanced.
pub fn synth_blobs<T: Scalar>(
    n_per_class: usize,
    num_classes: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset<T>, DataError> {
    if n_per_class == 0 || num_classes == 0 || d == 0 {
        return Err(DataError::InvalidArgument("blob sizes must be positive".into()));
    }
    if !(separation.is_finite() && separation > 0.0) {
        return Err(DataError::InvalidArgument(format!("separation must be positive, got {separation}")));
    }
    let m = n_per_class * num_classes;
    let mut rng = seed::rng(seed);
    let mut features = Array2::zeros((m, d));
    let mut labels = Vec::with_capacity(m);
    for (r, mut row) in features.rows_mut().into_iter().enumerate() {
        let c = r % num_classes;
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = T::lit(z);
        }
        row[c % d] += T::lit(separation);
        labels.push(c);
    }
    Dataset::new(features, Some(labels), num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced() {
        let d: Dataset<f64> = synth_blobs(10, 2, 4, 1.0, 0).unwrap();
        assert_eq!(d.len(), 20);
        let ones = d.labels().unwrap().iter().filter(|&&l| l == 1).count();
        assert_eq!(ones, 10);
    }

    #[test]
    fn far_blobs_are_nearest_centroid_separable() {
        let d: Dataset<f64> = synth_blobs(50, 3, 3, 100.0, 5).unwrap();
        let labels = d.labels().unwrap();
        for (r, row) in d.features().rows().into_iter().enumerate() {
            let nearest = (0..3)
                .map(|c| {
                    let dist: f64 = row
                        .iter()
                        .enumerate()
                        .map(|(k, v)| (v - if k == c { 100.0 } else { 0.0 }).powi(2))
                        .sum();
                    (dist, c)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap()
                .1;
            assert_eq!(nearest, labels[r]);
        }
    }

    #[test]
    fn deterministic() {
        let a: Dataset<f32> = synth_blobs(7, 3, 5, 2.0, 99).unwrap();
        let b: Dataset<f32> = synth_blobs(7, 3, 5, 2.0, 99).unwrap();
        assert_eq!(a, b);
        assert!(synth_blobs::<f32>(0, 3, 5, 2.0, 99).is_err());
    }
}
