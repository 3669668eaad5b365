use super::error::{NumericsError, Result};
use super::scalar::Scalar;
use super::tensor::Tensor;

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-9;
const PSD_CLAMP_TOL: f64 = 1e-6;

/// Eigendecomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEig<S> {
    /// Ascending.
    pub values: Vec<S>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: Tensor<S>,
}

fn square_dim<S: Scalar>(a: &Tensor<S>, op: &'static str) -> Result<usize> {
    match a.shape() {
        [r, c] if r == c => Ok(*r),
        s => Err(NumericsError::ShapeMismatch {
            op,
            left: s.to_vec(),
            right: vec![],
        }),
    }
}

/// Cyclic Jacobi eigensolver.
///
/// The input must be symmetric to within `1e-9` (relative to its largest
/// entry when that exceeds one); it is symmetrized before iterating.
pub fn sym_eig<S: Scalar>(a: &Tensor<S>) -> Result<SymEig<S>> {
    let n = square_dim(a, "sym_eig")?;
    a.check_finite("sym_eig input")?;
    let scale = a.max_abs().max(S::one());
    let mut asym = S::zero();
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((a.at(i, j) - a.at(j, i)).abs());
        }
    }
    if asym > S::lit(SYMMETRY_TOL) * scale {
        return Err(NumericsError::NotSymmetric(asym.to_f64_lossy()));
    }

    let mut m: Vec<S> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            (a.at(i, j) + a.at(j, i)) * S::lit(0.5)
        })
        .collect();
    let mut v = Tensor::<S>::eye(n).into_data();

    let total: S = m.iter().map(|&x| x * x).sum();
    let n_s = S::from_usize_lossy(n.max(1));
    let tol = (S::epsilon() * n_s) * (S::epsilon() * n_s) * total.max(S::min_positive_value());
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let off: S = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == S::zero() {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (S::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
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
    if !converged {
        return Err(NumericsError::NoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].partial_cmp(&m[j * n + j]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![S::zero(); n * n];
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[k * n + dst] = v[k * n + src];
        }
    }
    Ok(SymEig {
        values,
        vectors: Tensor::matrix(n, n, vectors)?,
    })
}

/// `Q · diag(f(λ)) · Qᵀ` for a decomposition `Q Λ Qᵀ`.
fn spectral_map<S: Scalar>(eig: &SymEig<S>, f: impl Fn(S) -> S) -> Tensor<S> {
    let n = eig.values.len();
    let q = eig.vectors.data();
    let fl: Vec<S> = eig.values.iter().map(|&l| f(l)).collect();
    let mut out = vec![S::zero(); n * n];
    for i in 0..n {
        for j in i..n {
            let mut acc = S::zero();
            for k in 0..n {
                acc += q[i * n + k] * fl[k] * q[j * n + k];
            }
            out[i * n + j] = acc;
            out[j * n + i] = acc;
        }
    }
    Tensor::matrix(n, n, out).expect("square")
}

/// Symmetric PSD square root.
///
/// Eigenvalues down to `-1e-6` are treated as round-off and clamped to zero;
/// anything more negative is a [`NumericsError::NotPsd`].
pub fn psd_sqrt<S: Scalar>(a: &Tensor<S>) -> Result<Tensor<S>> {
    let eig = sym_eig(a)?;
    if let Some(&min) = eig.values.first() {
        if min < -S::lit(PSD_CLAMP_TOL) {
            return Err(NumericsError::NotPsd(min.to_f64_lossy()));
        }
    }
    Ok(spectral_map(&eig, |l| l.max(S::zero()).sqrt()))
}

/// Rebuilds `Q Λ Qᵀ`.
pub fn reconstruct<S: Scalar>(eig: &SymEig<S>) -> Tensor<S> {
    spectral_map(eig, |l| l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
        Tensor::matrix(r, c, (0..r * c).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
    }

    #[test]
    fn diagonal_eigenvalues() {
        let e = sym_eig(&Tensor::diag(&[9.0, 1.0, 4.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 4.0, 9.0]);
    }

    #[test]
    fn two_by_two_characteristic_polynomial() {
        // λ² − 4λ + 3 = 0 → λ ∈ {1, 3}
        let a = Tensor::<f64>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = sym_eig(&a).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn random_symmetric_orthonormal_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = random_matrix(&mut rng, 8, 8);
        let a = b.add(&b.transpose().unwrap()).unwrap();
        let e = sym_eig(&a).unwrap();
        let q = &e.vectors;
        let qtq = q.transpose().unwrap().matmul(q).unwrap();
        assert!(qtq.max_abs_diff(&Tensor::eye(8)) < 1e-10);
        assert!(reconstruct(&e).max_abs_diff(&a) < 1e-8);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn asymmetric_input_rejected() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&a), Err(NumericsError::NotSymmetric(_))));
    }

    #[test]
    fn psd_sqrt_examples() {
        assert!(psd_sqrt(&Tensor::<f64>::eye(3)).unwrap().max_abs_diff(&Tensor::eye(3)) < 1e-15);
        let r = psd_sqrt(&Tensor::diag(&[4.0, 9.0])).unwrap();
        assert!(r.max_abs_diff(&Tensor::diag(&[2.0, 3.0])) < 1e-15);
        assert!(matches!(
            psd_sqrt(&Tensor::diag(&[1.0, -0.5])),
            Err(NumericsError::NotPsd(_))
        ));
        // tiny negative eigenvalue from round-off is clamped
        let r = psd_sqrt(&Tensor::diag(&[1.0, -1e-12])).unwrap();
        assert_eq!(r.at(1, 1), 0.0);
    }

    #[test]
    fn psd_sqrt_squares_back_up_to_32() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 13, 32] {
            let b = random_matrix(&mut rng, n, n);
            let a = b.matmul(&b.transpose().unwrap()).unwrap();
            let r = psd_sqrt(&a).unwrap();
            assert!(r.max_abs_diff(&r.transpose().unwrap()) == 0.0);
            assert!(r.matmul(&r).unwrap().max_abs_diff(&a) < 1e-8, "n = {n}");
        }
    }
}
