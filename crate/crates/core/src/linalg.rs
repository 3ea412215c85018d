//! Dense real matrix utilities shared by every stage of the pipeline.
//!
//! Vectorization is column-major throughout: `vectorize(M)` stacks the columns
//! of `M`, so that `vec(AXB) = (Bᵀ ⊗ A) vec(X)` holds in its textbook form.
//! nalgebra's `DMatrix` stores column-major as well, which makes `vectorize`
//! a plain copy.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{IocError, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative cutoff for [`pinv`].
pub const PINV_RTOL: f64 = 1e-12;

const EIGEN_MAX_ITER: usize = 10_000;

pub fn vectorize(m: &Mat) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Inverse of [`vectorize`]. Panics if `v.len() != rows * cols`.
pub fn unvectorize(v: &[f64], rows: usize, cols: usize) -> Mat {
    assert_eq!(v.len(), rows * cols, "unvectorize: length mismatch");
    Mat::from_column_slice(rows, cols, v)
}

/// The `n² × n²` permutation `Y` with `Y vec(Z) = vec(Zᵀ)` for every `n × n` matrix `Z`.
pub fn commutation_matrix(n: usize) -> Mat {
    let mut y = Mat::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            // vec(Zᵀ)[j n + i] = Zᵀ(i, j) = Z(j, i) = vec(Z)[i n + j]
            y[(j * n + i, i * n + j)] = 1.0;
        }
    }
    y
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

fn ensure_finite(m: &Mat, what: &str) -> Result<()> {
    if is_finite(m) {
        Ok(())
    } else {
        Err(IocError::NumericalBreakdown(format!("{what}: non-finite entries")))
    }
}

fn ensure_square(m: &Mat, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(IocError::Argument(format!(
            "{what}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Eigendecomposition of `(S + Sᵀ)/2`; eigenvalues are not sorted.
pub fn sym_eigen(s: &Mat) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    ensure_square(s, "sym_eigen")?;
    ensure_finite(s, "sym_eigen")?;
    SymmetricEigen::try_new(symmetrize(s), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| IocError::NumericalBreakdown("symmetric eigensolver did not converge".into()))
}

/// Frobenius-nearest symmetric PSD matrix to `(S + Sᵀ)/2`.
pub fn psd_project(s: &Mat) -> Result<Mat> {
    let eig = sym_eigen(s)?;
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let out = v * Mat::from_diagonal(&clamped) * v.transpose();
    Ok(symmetrize(&out))
}

pub fn max_eig_sym(s: &Mat) -> Result<f64> {
    if s.is_empty() {
        return Ok(0.0);
    }
    Ok(sym_eigen(s)?.eigenvalues.max())
}

pub fn min_eig_sym(s: &Mat) -> Result<f64> {
    if s.is_empty() {
        return Ok(0.0);
    }
    Ok(sym_eigen(s)?.eigenvalues.min())
}

fn svd(m: &Mat) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    ensure_finite(m, "svd")?;
    SVD::try_new(m.clone(), true, true, f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| IocError::NumericalBreakdown("SVD did not converge".into()))
}

pub fn singular_values(m: &Mat) -> Result<Vector> {
    if m.is_empty() {
        return Ok(Vector::zeros(0));
    }
    ensure_finite(m, "singular_values")?;
    nalgebra::linalg::SVD::try_new(m.clone(), false, false, f64::EPSILON, EIGEN_MAX_ITER)
        .map(|s| s.singular_values)
        .ok_or_else(|| IocError::NumericalBreakdown("SVD did not converge".into()))
}

/// Numerical rank: singular values above `rtol · σ_max`.
pub fn rank(m: &Mat, rtol: f64) -> Result<usize> {
    let sv = singular_values(m)?;
    if sv.is_empty() {
        return Ok(0);
    }
    let cut = rtol * sv.max();
    Ok(sv.iter().filter(|&&s| s > cut && s > 0.0).count())
}

/// Moore–Penrose pseudoinverse with singular values below `rtol · σ_max` treated as zero.
pub fn pinv(m: &Mat, rtol: f64) -> Result<Mat> {
    if !(rtol > 0.0) {
        return Err(IocError::Argument(format!("pinv: rtol must be positive, got {rtol}")));
    }
    if m.is_empty() {
        return Ok(Mat::zeros(m.ncols(), m.nrows()));
    }
    let svd = svd(m)?;
    let smax = svd.singular_values.max();
    let cut = rtol * smax;
    let inv_s = svd
        .singular_values
        .map(|s| if s > cut && s > 0.0 { 1.0 / s } else { 0.0 });
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    Ok(vt.transpose() * Mat::from_diagonal(&inv_s) * u.transpose())
}

/// Matrix exponential (scaling and squaring with a Padé approximant).
pub fn expm(m: &Mat) -> Result<Mat> {
    ensure_square(m, "expm")?;
    ensure_finite(m, "expm")?;
    let e = m.exp();
    if !is_finite(&e) {
        return Err(IocError::NumericalBreakdown(format!(
            "expm overflow (1-norm of input {:.3e})",
            m.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max)
        )));
    }
    Ok(e)
}

/// LU-based inverse with an explicit error on singularity.
pub fn inverse(m: &Mat) -> Result<Mat> {
    ensure_square(m, "inverse")?;
    ensure_finite(m, "inverse")?;
    m.clone()
        .try_inverse()
        .ok_or_else(|| IocError::NumericalBreakdown("matrix is singular".into()))
}

/// Solve `A X = B` by LU.
pub fn solve(a: &Mat, b: &Mat) -> Result<Mat> {
    ensure_square(a, "solve")?;
    ensure_finite(a, "solve")?;
    a.clone()
        .lu()
        .solve(b)
        .filter(is_finite)
        .ok_or_else(|| IocError::NumericalBreakdown("linear system is singular".into()))
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(IocError::Format("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn m(r: usize, c: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(r, c, v)
    }

    /// Cyclic Jacobi eigensolver; independent of nalgebra's symmetric QR.
    fn jacobi_eigen(s: &Mat) -> (Vec<f64>, Mat) {
        let n = s.nrows();
        let mut a = symmetrize(s);
        let mut v = Mat::identity(n, n);
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * c;
                    let mut rot = Mat::identity(n, n);
                    rot[(p, p)] = c;
                    rot[(q, q)] = c;
                    rot[(p, q)] = sn;
                    rot[(q, p)] = -sn;
                    a = rot.transpose() * &a * &rot;
                    v = &v * &rot;
                }
            }
        }
        ((0..n).map(|i| a[(i, i)]).collect(), v)
    }

    fn brute_psd(s: &Mat) -> Mat {
        let (w, v) = jacobi_eigen(s);
        let n = s.nrows();
        let mut out = Mat::zeros(n, n);
        for k in 0..n {
            let col = v.column(k);
            out += col * col.transpose() * w[k].max(0.0);
        }
        out
    }

    #[test]
    fn vectorize_is_column_major() {
        let a = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vectorize(&a).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(vectorize(&Mat::zeros(2, 3)), Vector::zeros(6));
        assert_eq!(vectorize(&m(1, 1, &[7.5])).as_slice(), &[7.5]);
    }

    #[test]
    fn commutation_examples() {
        assert_eq!(commutation_matrix(1), Mat::identity(1, 1));
        let y = commutation_matrix(2);
        let z = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((y * vectorize(&z)).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        let y3 = commutation_matrix(3);
        assert_eq!(&y3 * &y3, Mat::identity(9, 9));
    }

    #[test]
    fn commutation_is_involutory_permutation() {
        for n in 1..=6 {
            let y = commutation_matrix(n);
            assert_eq!(&y * &y, Mat::identity(n * n, n * n));
            for r in 0..n * n {
                assert_eq!(y.row(r).iter().filter(|&&x| x == 1.0).count(), 1);
                assert_eq!(y.row(r).sum(), 1.0);
            }
        }
    }

    #[test]
    fn kron_examples() {
        assert_eq!(
            kron(&Mat::identity(2, 2), &m(1, 1, &[5.0])),
            m(2, 2, &[5.0, 0.0, 0.0, 5.0])
        );
        let b = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let k = kron(&Mat::identity(2, 2), &b);
        assert_eq!(k.view((0, 0), (2, 2)), b);
        assert_eq!(k.view((2, 2), (2, 2)), b);
        assert_eq!(k.view((0, 2), (2, 2)), Mat::zeros(2, 2));
    }

    #[test]
    fn psd_project_examples() {
        let d = m(2, 2, &[3.0, 0.0, 0.0, -1.0]);
        assert_relative_eq!(psd_project(&d).unwrap(), m(2, 2, &[3.0, 0.0, 0.0, 0.0]), epsilon = 1e-14);
        // eigenpair (1, (1,1)/√2) survives, (−1, (1,−1)/√2) is clamped
        let x = m(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_relative_eq!(psd_project(&x).unwrap(), m(2, 2, &[0.5, 0.5, 0.5, 0.5]), epsilon = 1e-14);
        let psd = m(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert_relative_eq!(psd_project(&psd).unwrap(), psd, epsilon = 1e-14);
    }

    #[test]
    fn psd_project_rejects_nan() {
        let bad = m(1, 1, &[f64::NAN]);
        assert!(matches!(psd_project(&bad), Err(IocError::NumericalBreakdown(_))));
    }

    #[test]
    fn pinv_examples() {
        assert_relative_eq!(pinv(&Mat::identity(3, 3), PINV_RTOL).unwrap(), Mat::identity(3, 3), epsilon = 1e-14);
        let d = m(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(pinv(&d, PINV_RTOL).unwrap(), m(2, 2, &[0.5, 0.0, 0.0, 0.0]), epsilon = 1e-14);
        assert!(pinv(&d, 0.0).is_err());
    }

    #[test]
    fn eig_extremes() {
        let d = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 5.0, 2.0]));
        assert_relative_eq!(max_eig_sym(&d).unwrap(), 5.0, epsilon = 1e-14);
        assert_relative_eq!(min_eig_sym(&d).unwrap(), 1.0, epsilon = 1e-14);
        assert_eq!(max_eig_sym(&Mat::zeros(3, 3)).unwrap(), 0.0);
        assert_eq!(min_eig_sym(&Mat::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn expm_examples() {
        assert_relative_eq!(expm(&Mat::zeros(3, 3)).unwrap(), Mat::identity(3, 3), epsilon = 1e-15);
        let d = Mat::from_diagonal(&Vector::from_vec(vec![0.3, -1.7]));
        let e = expm(&d).unwrap();
        assert_relative_eq!(e[(0, 0)], 0.3f64.exp(), max_relative = 1e-13);
        assert_relative_eq!(e[(1, 1)], (-1.7f64).exp(), max_relative = 1e-13);
        assert_eq!(e[(0, 1)], 0.0);
        assert!(expm(&Mat::zeros(2, 3)).is_err());
        assert!(matches!(
            expm(&m(1, 1, &[1e6])),
            Err(IocError::NumericalBreakdown(_))
        ));
    }

    fn mat_strategy(r: usize, c: usize) -> impl Strategy<Value = Mat> {
        proptest::collection::vec(-2.0f64..2.0, r * c).prop_map(move |v| Mat::from_vec(r, c, v))
    }

    fn sym_strategy(n: usize) -> impl Strategy<Value = Mat> {
        mat_strategy(n, n).prop_map(|a| symmetrize(&a))
    }

    proptest! {
        #[test]
        fn vec_roundtrip(r in 1usize..6, c in 1usize..6, seed in proptest::collection::vec(-5.0f64..5.0, 36)) {
            let a = Mat::from_fn(r, c, |i, j| seed[i * 6 + j]);
            prop_assert_eq!(unvectorize(vectorize(&a).as_slice(), r, c), a);
        }

        #[test]
        fn kron_vectorization_identity(a in mat_strategy(3, 3), x in mat_strategy(3, 3), b in mat_strategy(3, 3)) {
            let lhs = vectorize(&(&a * &x * &b));
            let rhs = kron(&b.transpose(), &a) * vectorize(&x);
            prop_assert!((lhs - rhs).amax() <= 1e-12);
        }

        #[test]
        fn commutation_transposes(z in mat_strategy(4, 4)) {
            let y = commutation_matrix(4);
            prop_assert_eq!(y * vectorize(&z), vectorize(&z.transpose()));
        }

        #[test]
        fn psd_projection_matches_jacobi_2x2(s in sym_strategy(2)) {
            let p = psd_project(&s).unwrap();
            prop_assert!((&p - brute_psd(&s)).amax() <= 1e-10);
        }

        #[test]
        fn psd_projection_matches_jacobi_3x3(s in sym_strategy(3)) {
            let p = psd_project(&s).unwrap();
            prop_assert!((&p - brute_psd(&s)).amax() <= 1e-10);
        }

        #[test]
        fn psd_projection_idempotent_and_moreau(s in mat_strategy(4, 4)) {
            let p = psd_project(&s).unwrap();
            prop_assert!(min_eig_sym(&p).unwrap() >= -1e-10);
            prop_assert!((psd_project(&p).unwrap() - &p).amax() <= 1e-10);
            // Moreau: S_sym − P is NSD and orthogonal to P
            let rest = symmetrize(&s) - &p;
            prop_assert!(max_eig_sym(&rest).unwrap() <= 1e-10);
            prop_assert!(p.dot(&rest).abs() <= 1e-10);
        }

        #[test]
        fn moore_penrose_identities(a in mat_strategy(5, 3)) {
            let p = pinv(&a, PINV_RTOL).unwrap();
            let scale = a.norm().max(1e-300);
            prop_assert!((&a * &p * &a - &a).amax() <= 1e-9 * scale);
            prop_assert!((&p * &a * &p - &p).amax() <= 1e-9 * p.norm().max(1.0));
            let ap = &a * &p;
            let pa = &p * &a;
            prop_assert!((&ap - ap.transpose()).amax() <= 1e-9);
            prop_assert!((&pa - pa.transpose()).amax() <= 1e-9);
        }

        #[test]
        fn pinv_left_inverse_full_column_rank(a in mat_strategy(5, 3)) {
            let sv = singular_values(&a).unwrap();
            prop_assume!(sv.min() > 1e-3 * sv.max());
            let p = pinv(&a, PINV_RTOL).unwrap();
            prop_assert!((p * &a - Mat::identity(3, 3)).amax() <= 1e-10);
        }

        #[test]
        fn expm_inverse_identity(a in mat_strategy(3, 3)) {
            let e = expm(&a).unwrap();
            let f = expm(&(-&a)).unwrap();
            let scale = (e.norm() * f.norm()).max(1.0);
            prop_assert!((e * f - Mat::identity(3, 3)).amax() <= 1e-12 * scale);
        }
    }
}
