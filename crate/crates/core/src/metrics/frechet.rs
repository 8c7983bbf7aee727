use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues down to this far below zero are treated as round-off.
pub const NEG_EIG_TOL: f64 = 1e-6;

/// Embedding vectors with their sample mean and unbiased covariance.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    vectors: Vec<Vec<f64>>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl FeatureSet {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(Error::invalid("feature set is empty"));
        };
        let d = first.len();
        if d == 0 {
            return Err(Error::invalid("feature vectors have zero dimension"));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != d) {
            return Err(Error::invalid(format!("mixed feature dimensions {d} and {}", v.len())));
        }
        let n = vectors.len();
        let mut mean = DVector::zeros(d);
        for v in &vectors {
            mean += DVector::from_column_slice(v);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        if n > 1 {
            for v in &vectors {
                let c = DVector::from_column_slice(v) - &mean;
                cov += &c * c.transpose();
            }
            cov /= (n - 1) as f64;
        }
        Ok(Self { vectors, mean, cov })
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

fn checked_eigenvalues(m: DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (&m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    for l in eig.eigenvalues.iter_mut() {
        if *l < -NEG_EIG_TOL {
            return Err(Error::Numerical(format!("{what} has eigenvalue {l:e}")));
        }
        if *l < 0.0 {
            *l = 0.0;
        }
    }
    Ok(eig)
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = checked_eigenvalues(m.clone(), "covariance")?;
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * root * eig.eigenvectors.transpose())
}

/// `|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2))`, with the trace of the
/// cross root taken from the eigenvalues of `S1^(1/2) S2 S1^(1/2)`.
pub fn frechet_distance(real: &FeatureSet, gen: &FeatureSet) -> Result<f64> {
    if real.dim() != gen.dim() {
        return Err(Error::invalid(format!(
            "feature dimensions {} and {}",
            real.dim(),
            gen.dim()
        )));
    }
    let dmu = (&real.mean - &gen.mean).norm_squared();
    let s1 = psd_sqrt(&real.cov)?;
    let inner = &s1 * &gen.cov * &s1;
    let cross: f64 = checked_eigenvalues(inner, "covariance product")?
        .eigenvalues
        .iter()
        .map(|l| l.sqrt())
        .sum();
    let d = dmu + real.cov.trace() + gen.cov.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}
