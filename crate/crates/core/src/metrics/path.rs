use crate::denoiser::Image;
use crate::error::{Error, Result};

use super::providers::DistanceProvider;

fn steps(path: &[Image], dist: &dyn DistanceProvider) -> Result<Vec<f64>> {
    if path.len() < 2 {
        return Err(Error::invalid(format!(
            "path has {} points, need at least 2",
            path.len()
        )));
    }
    path.windows(2).map(|w| dist.distance(&w[0], &w[1])).collect()
}

/// Sum of consecutive distances along `A, frames.., B`.
pub fn lpips_path(path: &[Image], dist: &dyn DistanceProvider) -> Result<f64> {
    Ok(steps(path, dist)?.iter().sum())
}

/// Mean over the path of distance divided by the squared latent step.
/// A zero latent step with zero distance contributes nothing; a zero step
/// with a nonzero distance has no finite ratio and is an error.
pub fn ppl(path: &[Image], latents: &[Vec<f64>], dist: &dyn DistanceProvider) -> Result<f64> {
    if latents.len() != path.len() {
        return Err(Error::invalid(format!(
            "{} latents for {} path points",
            latents.len(),
            path.len()
        )));
    }
    let d = steps(path, dist)?;
    let mut total = 0.0;
    for (n, w) in latents.windows(2).enumerate() {
        if w[0].len() != w[1].len() {
            return Err(Error::shape(format!("latent {n} and {} differ in size", n + 1)));
        }
        let step: f64 = w[0].iter().zip(&w[1]).map(|(a, b)| (a - b) * (a - b)).sum();
        if step == 0.0 {
            if d[n] != 0.0 {
                return Err(Error::Numerical(format!("zero latent step {n} with distance {}", d[n])));
            }
            continue;
        }
        total += d[n] / step;
    }
    Ok(total / d.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::providers::EuclideanDistance;

    #[test]
    fn identical_path_is_zero() {
        let p = vec![Image::filled([1, 2, 2], 0.3); 4];
        let w = vec![vec![0.0, 1.0]; 4];
        assert_eq!(lpips_path(&p, &EuclideanDistance).unwrap(), 0.0);
        assert_eq!(ppl(&p, &w, &EuclideanDistance).unwrap(), 0.0);
    }

    #[test]
    fn two_point_ratio() {
        let p = vec![Image::filled([1, 1, 1], 0.0), Image::filled([1, 1, 1], 0.5)];
        let w = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        assert!((ppl(&p, &w, &EuclideanDistance).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        let one = vec![Image::filled([1, 1, 1], 0.0)];
        assert!(lpips_path(&one, &EuclideanDistance).is_err());
        let p = vec![Image::filled([1, 1, 1], 0.0), Image::filled([1, 1, 1], 0.5)];
        assert!(ppl(&p, &[vec![1.0], vec![1.0]], &EuclideanDistance).is_err());
        assert!(ppl(&p, &[vec![1.0]], &EuclideanDistance).is_err());
    }
}
