use super::MetricsError;
use crate::numerics::psd_sqrt;
use crate::Tensor;

/// Tolerated negative round-off in a Fréchet distance before it is an error.
const NEGATIVE_CLAMP: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    pub cov: Tensor,
    pub n: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased covariance (two-pass, symmetrized).
pub fn fit_gaussian(vectors: &[Vec<f64>]) -> Result<GaussianStats, MetricsError> {
    let n = vectors.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    let d = vectors[0].len();
    if d == 0 || vectors.iter().any(|v| v.len() != d) {
        return Err(MetricsError::DimensionMismatch(format!("vectors must share a positive dimension {d}")));
    }
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![0.0; d * d];
    for v in vectors {
        let c: Vec<f64> = v.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += c[i] * c[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Ok(GaussianStats {
        mean,
        cov: Tensor::matrix(d, d, cov)?,
        n,
    })
}

fn trace(t: &Tensor) -> f64 {
    (0..t.rows()).map(|i| t.at(i, i)).sum()
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa^{1/2} Σb Σa^{1/2})^{1/2})`.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() || a.cov.shape() != b.cov.shape() {
        return Err(MetricsError::DimensionMismatch(format!("{} vs {}", a.dim(), b.dim())));
    }
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let ra = psd_sqrt(&a.cov)?;
    let m = ra.matmul(&b.cov)?.matmul(&ra)?;
    let sym = m.add(&m.transpose()?)?.scale(0.5);
    let cross = trace(&psd_sqrt(&sym)?);
    let fd = mean_term + trace(&a.cov) + trace(&b.cov) - 2.0 * cross;
    if fd >= 0.0 {
        Ok(fd)
    } else if fd >= -NEGATIVE_CLAMP {
        Ok(0.0)
    } else {
        Err(MetricsError::NegativeDistance(fd))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_1d(mu: f64, var: f64) -> GaussianStats {
        GaussianStats {
            mean: vec![mu],
            cov: Tensor::matrix(1, 1, vec![var]).unwrap(),
            n: 2,
        }
    }

    #[test]
    fn small_fits() {
        let s = fit_gaussian(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(s.cov.data().iter().all(|&x| x == 0.0));
        let s = fit_gaussian(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(s.mean, vec![1.0]);
        assert_eq!(s.cov.data(), &[2.0]);
        assert!(matches!(fit_gaussian(&[vec![1.0]]), Err(MetricsError::TooFewSamples(1))));
        assert!(fit_gaussian(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn closed_forms() {
        let fd = frechet_distance(&stats_1d(0.0, 1.0), &stats_1d(3.0, 4.0)).unwrap();
        assert!((fd - 10.0).abs() < 1e-12);
        let a = GaussianStats {
            mean: vec![0.0, 0.0],
            cov: Tensor::diag(&[1.0, 4.0]),
            n: 2,
        };
        let b = GaussianStats {
            cov: Tensor::diag(&[4.0, 1.0]),
            ..a.clone()
        };
        assert!((frechet_distance(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        assert!(frechet_distance(&a, &a).unwrap() < 1e-9);
        assert!(frechet_distance(&a, &stats_1d(0.0, 1.0)).is_err());
    }
}
