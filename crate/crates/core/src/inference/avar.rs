use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::score::ScorePieces;
use crate::error::{Error, Result};

/// Asymptotic variance matrices of `sqrt(N) (theta_hat - theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AvarSet {
    pub opg: DMatrix<f64>,
    pub hessian: DMatrix<f64>,
    pub sandwich: DMatrix<f64>,
    pub sigma2_hat: f64,
    /// `phi` (Gamma) or `V` (log-normal).
    pub shape_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvarVariant {
    Opg,
    Hessian,
    Sandwich,
}

impl AvarSet {
    pub fn get(&self, v: AvarVariant) -> &DMatrix<f64> {
        match v {
            AvarVariant::Opg => &self.opg,
            AvarVariant::Hessian => &self.hessian,
            AvarVariant::Sandwich => &self.sandwich,
        }
    }

    /// `sqrt(diag(avar) / n)`.
    pub fn std_errors(&self, v: AvarVariant, n: usize) -> Vec<f64> {
        let m = self.get(v);
        (0..m.nrows()).map(|i| (m[(i, i)].max(0.0) / n as f64).sqrt()).collect()
    }
}

/// Inverse of a symmetric positive definite matrix; a singular input reports
/// the eigenvector of its smallest eigenvalue.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let (imin, emin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &e)| if e < acc.1 { (i, e) } else { acc });
    let emax = eig.eigenvalues.iter().fold(0.0f64, |a, &e| a.max(e.abs()));
    if !(emin > emax * 1e-13) || !emin.is_finite() {
        return Err(Error::Singular { direction: eig.eigenvectors.column(imin).iter().copied().collect() });
    }
    let inv = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e))
        * eig.eigenvectors.transpose();
    Ok(symmetrize(inv))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Gamma QML with `I = phi^2 sigma2 A` and `H = -phi A`:
/// `avar_I = A^-1 / (phi^2 sigma2)`, `avar_H = A^-1 / phi`, `avar_S = sigma2 A^-1`.
pub fn avar_gamma(pieces: &ScorePieces, phi: f64, sigma2: f64) -> Result<AvarSet> {
    let a_inv = spd_inverse(&pieces.a_outer())?;
    Ok(AvarSet {
        opg: &a_inv / (phi * phi * sigma2),
        hessian: &a_inv / phi,
        sandwich: &a_inv * sigma2,
        sigma2_hat: sigma2,
        shape_hat: phi,
    })
}

/// Variance of `theta` when a nuisance block is estimated jointly, from the
/// partitioned expected Hessian `H` and score outer product `I`:
///
/// ```text
/// B = H12 H22^-1,  G = H11 - B H21
/// hessian  = (-G)^-1
/// sandwich = G^-1 (I11 - B I21 - I12 B' + B I22 B') G^-1
/// opg      = theta block of I^-1
/// ```
pub fn block_avar(
    h11: &DMatrix<f64>,
    h12: &DMatrix<f64>,
    h22: &DMatrix<f64>,
    i11: &DMatrix<f64>,
    i12: &DMatrix<f64>,
    i22: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let h22_inv = h22.clone().try_inverse().ok_or_else(|| Error::Singular { direction: vec![] })?;
    let b = h12 * &h22_inv;
    let g = h11 - &b * h12.transpose();
    let neg_g_inv = spd_inverse(&(-&g))?;
    let hessian = neg_g_inv.clone();
    let middle = i11 - &b * i12.transpose() - i12 * b.transpose() + &b * i22 * b.transpose();
    let sandwich = symmetrize(&neg_g_inv * middle * &neg_g_inv);

    let p = h11.nrows();
    let q = h22.nrows();
    let mut full = DMatrix::zeros(p + q, p + q);
    full.view_mut((0, 0), (p, p)).copy_from(i11);
    full.view_mut((0, p), (p, q)).copy_from(i12);
    full.view_mut((p, 0), (q, p)).copy_from(&i12.transpose());
    full.view_mut((p, p), (q, q)).copy_from(i22);
    let opg = spd_inverse(&full)?.view((0, 0), (p, p)).into_owned();
    Ok((opg, hessian, sandwich))
}

/// Log-normal ML with `V` estimated alongside `theta`. The expected joint
/// Hessian has blocks `-A/V`, `a/(2V)` and `-(V+2)/(4V^2)`, so the Hessian
/// form reduces to `V (A - V/(V+2) a a')^-1`. The outer-product blocks use
/// the per-observation scores in `theta` and `V`.
pub fn avar_lognormal(pieces: &ScorePieces, v: f64) -> Result<AvarSet> {
    let p = pieces.a.ncols();
    let sigma2 = v.exp_m1();
    if v == 0.0 {
        let z = DMatrix::zeros(p, p);
        return Ok(AvarSet { opg: z.clone(), hessian: z.clone(), sandwich: z, sigma2_hat: 0.0, shape_hat: 0.0 });
    }
    let a_bar = pieces.a_outer();
    let a_mean = pieces.a_mean();
    let h11 = -&a_bar / v;
    let h12 = DMatrix::from_column_slice(p, 1, (&a_mean / (2.0 * v)).as_slice());
    let h22 = DMatrix::from_element(1, 1, -(v + 2.0) / (4.0 * v * v));

    let n = pieces.n();
    let mut i_full = DMatrix::zeros(p + 1, p + 1);
    let mut s = DVector::zeros(p + 1);
    for i in 0..n {
        let w = pieces.eps[i].ln() + v / 2.0;
        for j in 0..p {
            s[j] = w / v * pieces.a[(i, j)];
        }
        s[p] = -0.5 / v - w / (2.0 * v) + w * w / (2.0 * v * v);
        i_full.ger(1.0, &s, &s, 1.0);
    }
    i_full /= n as f64;
    let i11 = i_full.view((0, 0), (p, p)).into_owned();
    let i12 = i_full.view((0, p), (p, 1)).into_owned();
    let i22 = i_full.view((p, p), (1, 1)).into_owned();
    let (opg, hessian, sandwich) = block_avar(&h11, &h12, &h22, &i11, &i12, &i22)?;
    Ok(AvarSet { opg, hessian, sandwich, sigma2_hat: sigma2, shape_hat: v })
}

/// `V (A - V/(V+2) a a')^-1` directly.
pub fn lognormal_hessian_closed_form(a_bar: &DMatrix<f64>, a_mean: &DVector<f64>, v: f64) -> Result<DMatrix<f64>> {
    let m = a_bar - a_mean * a_mean.transpose() * (v / (v + 2.0));
    Ok(spd_inverse(&m)? * v)
}
