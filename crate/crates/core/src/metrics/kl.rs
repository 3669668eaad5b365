use super::MetricsError;

/// Floor applied to the second argument of [`kl_divergence`] before the log.
pub const KL_FLOOR: f64 = 1e-10;
const NORMALIZATION_TOL: f64 = 1e-8;

fn check_distribution(p: &[f64], which: &str) -> Result<(), MetricsError> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(MetricsError::InvalidDistribution(format!("{which} has negative or non-finite entries")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(MetricsError::InvalidDistribution(format!("{which} sums to {total}")));
    }
    Ok(())
}

/// `Σ p_i ln(p_i / max(q_i, 1e-10))` with `0 · ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, MetricsError> {
    if p.len() != q.len() || p.is_empty() {
        return Err(MetricsError::DimensionMismatch(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let kl: f64 = p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(KL_FLOOR)).ln())
        .sum();
    // the floor adds at most len·1e-10 mass to q, which can push an exact
    // zero slightly negative
    Ok(kl.max(0.0))
}

/// Elementwise mean of probability vectors.
pub fn mean_distribution(dists: &[Vec<f64>]) -> Result<Vec<f64>, MetricsError> {
    let first = dists.first().ok_or(MetricsError::EmptyPool)?;
    let mut out = vec![0.0; first.len()];
    for d in dists {
        if d.len() != out.len() {
            return Err(MetricsError::DimensionMismatch("distribution lengths differ".into()));
        }
        for (o, x) in out.iter_mut().zip(d) {
            *o += x;
        }
    }
    let n = dists.len() as f64;
    for o in &mut out {
        *o /= n;
    }
    Ok(out)
}
