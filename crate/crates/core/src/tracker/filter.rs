use nalgebra::{Matrix2, SMatrix, SVector, Vector2};

use super::{Measurement, TrackerError};

pub(crate) fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn min_eigenvalue<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    nalgebra::DMatrix::from_column_slice(N, N, m.as_slice())
        .symmetric_eigen()
        .eigenvalues
        .min()
}

pub(crate) fn gaussian_likelihood(innovation: &Vector2<f64>, s: &Matrix2<f64>) -> Option<f64> {
    let det = s.determinant();
    let s_inv = s.try_inverse()?;
    if det <= 0.0 {
        return None;
    }
    let m = (innovation.transpose() * s_inv * innovation)[(0, 0)];
    Some((-0.5 * m).exp() / (std::f64::consts::TAU * det.sqrt()))
}

/// Linear correction observing the first two state components, Joseph form.
/// Returns the corrected mean/covariance and the measurement likelihood.
pub(crate) fn position_update<const N: usize>(
    mean: &SVector<f64, N>,
    cov: &SMatrix<f64, N, N>,
    z: &Measurement,
) -> Result<(SVector<f64, N>, SMatrix<f64, N, N>, f64), TrackerError> {
    let innovation = Vector2::new(z.z.x - mean[0], z.z.y - mean[1]);
    let s = cov.fixed_view::<2, 2>(0, 0).into_owned() + z.r;
    let s_inv = s.try_inverse().ok_or(TrackerError::NumericalFault("singular innovation covariance"))?;
    let pht: SMatrix<f64, N, 2> = cov.fixed_view::<N, 2>(0, 0).into_owned();
    let k: SMatrix<f64, N, 2> = pht * s_inv;
    let mut i_kh = SMatrix::<f64, N, N>::identity();
    for r in 0..N {
        i_kh[(r, 0)] -= k[(r, 0)];
        i_kh[(r, 1)] -= k[(r, 1)];
    }
    let new_mean = mean + k * innovation;
    let new_cov = symmetrize(&(i_kh * cov * i_kh.transpose() + k * z.r * k.transpose()));
    if !new_cov.iter().all(|v| v.is_finite()) || min_eigenvalue(&new_cov) < -1e-9 {
        return Err(TrackerError::NumericalFault("covariance lost positive semi-definiteness"));
    }
    let likelihood =
        gaussian_likelihood(&innovation, &s).ok_or(TrackerError::NumericalFault("non-positive innovation determinant"))?;
    Ok((new_mean, new_cov, likelihood))
}
