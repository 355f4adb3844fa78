//! Least-squares combination of candidate polychromatic projections.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{Provenance, Sinogram, SinogramKind};
use crate::stats::rms;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    #[default]
    Unconstrained,
    Nonnegative,
}

#[derive(Debug, Clone)]
pub struct LseFit {
    pub coefficients: Vec<f64>,
    /// `sum_i c_i * candidate_i`
    pub fitted: Sinogram,
    /// RMS of `measured - fitted`.
    pub residual: f64,
}

type Svd = nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>;

/// SVD of `m`, or `None` when the factors do not reproduce `m`. nalgebra's
/// SVD occasionally returns wrong factors for nearly rank-one triangular input.
fn checked_svd(m: &DMatrix<f64>) -> Option<Svd> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref()?;
    let v_t = svd.v_t.as_ref()?;
    let err = (u * DMatrix::from_diagonal(&svd.singular_values) * v_t - m).norm();
    let scale = m.norm().max(f64::MIN_POSITIVE);
    (err <= 1e3 * f64::EPSILON * scale * m.nrows().max(m.ncols()) as f64).then_some(svd)
}

/// `u * diag(1 / s) * (v_t * y)`, dropping singular values at or below `tol`.
fn pseudo_solve(u: &DMatrix<f64>, s: &DVector<f64>, v_t: &DMatrix<f64>, y: &DVector<f64>, tol: f64) -> DVector<f64> {
    let mut z = v_t * y;
    for (zi, &si) in z.iter_mut().zip(s.iter()) {
        *zi = if si > tol { *zi / si } else { 0.0 };
    }
    u * z
}

/// Minimum-norm least-squares solution of `r x = y`, discarding singular
/// values below a relative tolerance.
pub(crate) fn min_norm_solve(r: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let tol_for = |s: &DVector<f64>| s.max() * f64::EPSILON * r.nrows().max(r.ncols()) as f64;
    if let Some(svd) = checked_svd(r) {
        let (u, v_t) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
        // r = u s v_t, so r+ = v_t' s+ u'
        return Ok(pseudo_solve(&v_t.transpose(), &svd.singular_values, &u.transpose(), y, tol_for(&svd.singular_values)));
    }
    if let Some(svd) = checked_svd(&r.transpose()) {
        // r' = u s v_t, so r+ = u s+ v_t
        let (u, v_t) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
        return Ok(pseudo_solve(u, &svd.singular_values, v_t, y, tol_for(&svd.singular_values)));
    }
    Err(Error::Degenerate("singular value decomposition of the normal factor failed".into()))
}

/// Lawson-Hanson active-set solver for `min |r x - y|, x >= 0`.
fn nnls(r: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let k = r.ncols();
    let mut x = DVector::zeros(k);
    let mut passive = vec![false; k];
    let tol = 1e-12 * r.norm() * y.norm().max(1.0);
    for _ in 0..3 * k + 10 {
        let w = r.transpose() * (y - r * &x);
        let Some(j) = (0..k).filter(|&j| !passive[j] && w[j] > tol).max_by(|&a, &b| w[a].total_cmp(&w[b])) else {
            break;
        };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
            let sub = r.select_columns(&idx);
            let z_sub = min_norm_solve(&sub, y)?;
            if z_sub.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (n, &j) in idx.iter().enumerate() {
                    x[j] = z_sub[n];
                }
                break;
            }
            // step back towards the feasible region
            let mut alpha = f64::INFINITY;
            for (n, &j) in idx.iter().enumerate() {
                if z_sub[n] <= 0.0 {
                    alpha = alpha.min(x[j] / (x[j] - z_sub[n]));
                }
            }
            for (n, &j) in idx.iter().enumerate() {
                x[j] += alpha * (z_sub[n] - x[j]);
                if x[j] <= 1e-15 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    Ok(x)
}

/// Coefficients minimizing `|measured - sum_i c_i candidate_i|^2` over all
/// sinogram entries jointly.
pub fn estimate_poly_projection(measured: &Sinogram, candidates: &[Sinogram], constraint: Constraint) -> Result<LseFit> {
    if candidates.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 candidate projections, got {}", candidates.len())));
    }
    for c in candidates {
        measured.check_compatible(c)?;
    }
    let n = measured.values().len();
    let k = candidates.len();
    let a = DMatrix::from_fn(n, k, |i, j| candidates[j].values()[i]);
    let qr = a.qr();
    let mut qtb = DVector::from_column_slice(measured.values());
    qr.q_tr_mul(&mut qtb);
    let r = qr.r();
    let y = qtb.rows(0, k).into_owned();
    let c = match constraint {
        Constraint::Unconstrained => min_norm_solve(&r, &y)?,
        Constraint::Nonnegative => nnls(&r, &y)?,
    };
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("least-squares coefficients are not finite".into()));
    }
    let coefficients: Vec<f64> = c.iter().copied().collect();
    let fitted = combine(candidates, &coefficients);
    let diff: Vec<f64> = measured.values().iter().zip(&fitted).map(|(m, f)| m - f).collect();
    let residual = rms(&diff);
    let fitted = measured.derive(fitted, SinogramKind::FittedPoly, Provenance::default())?;
    Ok(LseFit { coefficients, fitted, residual })
}

/// `sum_i c_i * candidate_i`, accumulated in candidate order.
pub fn combine(candidates: &[Sinogram], coefficients: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; candidates[0].values().len()];
    for (cand, &c) in candidates.iter().zip(coefficients) {
        for (o, v) in out.iter_mut().zip(cand.values()) {
            *o += c * v;
        }
    }
    out
}
