//! Latent-factor confounder model: EM fit of an isotropic-noise factor
//! model Y = mu + S V + eps, and residualization of the learned factor
//! effects before downstream univariate testing.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FactorModel {
    /// n x r factor scores, columns orthogonal after the post-fit rotation.
    pub s: DMatrix<f64>,
    /// r x p loadings.
    pub v: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub r: usize,
    pub noise_var: f64,
    pub converged: bool,
    pub log_likelihood_trace: Vec<f64>,
}

const MAX_EM_ITER: usize = 2000;
const LL_TOL: f64 = 1e-8;

/// EM fit of the isotropic factor model (probabilistic PCA likelihood).
/// Deterministic given the seed used for the loading initialization.
pub fn fit_latent_factors(y: &DMatrix<f64>, r: usize, seed: u64) -> Result<FactorModel> {
    let (n, p) = (y.nrows(), y.ncols());
    if r >= n.min(p) && r != 0 {
        return Err(Error::Validation(format!(
            "r = {r} must be < min(n, p) = {}",
            n.min(p)
        )));
    }
    let mu = DVector::from_fn(p, |j, _| y.column(j).mean());
    if r == 0 {
        return Ok(FactorModel {
            s: DMatrix::zeros(n, 0),
            v: DMatrix::zeros(0, p),
            mu,
            r: 0,
            noise_var: 1.0,
            converged: true,
            log_likelihood_trace: vec![],
        });
    }
    let mut yc = y.clone();
    for (j, mut col) in yc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mu[j]);
    }
    let cov = yc.transpose() * &yc / n as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DMatrix::from_fn(p, r, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.1);
    let mut sigma2: f64 = 1.0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..MAX_EM_ITER {
        // E-step quantities
        let m = w.transpose() * &w + DMatrix::identity(r, r) * sigma2;
        let m_inv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular factor posterior".into()))?;
        let cov_w = &cov * &w;
        // M-step
        let inner = DMatrix::identity(r, r) * sigma2 + &m_inv * w.transpose() * &cov_w;
        let inner_inv = inner
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular M-step system".into()))?;
        let w_new = &cov_w * inner_inv;
        let sigma2_new =
            ((&cov - &cov_w * &m_inv * w_new.transpose()).trace() / p as f64).max(1e-12);
        w = w_new;
        sigma2 = sigma2_new;

        // marginal log-likelihood under C = W W' + sigma2 I
        let c = &w * w.transpose() + DMatrix::identity(p, p) * sigma2;
        let chol = c
            .cholesky()
            .ok_or_else(|| Error::Numerical("non-PD model covariance".into()))?;
        let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let c_inv = chol.inverse();
        let ll = -0.5
            * n as f64
            * (p as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + (&c_inv * &cov).trace());
        trace.push(ll);
        if (ll - prev_ll).abs() <= LL_TOL * (1.0 + ll.abs()) {
            converged = true;
            break;
        }
        prev_ll = ll;
    }
    if !converged {
        eprintln!("warning: factor EM did not converge in {MAX_EM_ITER} iterations");
    }

    // posterior factor scores, then rotate so score columns are orthogonal
    let m = w.transpose() * &w + DMatrix::identity(r, r) * sigma2;
    let m_inv = m
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular factor posterior".into()))?;
    let scores = &yc * &w * &m_inv; // n x r
    let svd = scores.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut s = DMatrix::zeros(n, r);
    for i in 0..r {
        let col = u.column(i) * svd.singular_values[i];
        s.set_column(i, &col);
    }
    // scores = S * vt, so loadings absorb the rotation: V = vt * W'
    let v = vt * w.transpose();
    Ok(FactorModel {
        s,
        v,
        mu,
        r,
        noise_var: sigma2,
        converged,
        log_likelihood_trace: trace,
    })
}

/// Remove the learned factor effects: residuals of the least-squares refit
/// of (Y - mu) on the factor scores, re-centered. The refit makes the
/// residual columns exactly orthogonal to every score column.
pub fn residualize_factors(y: &DMatrix<f64>, model: &FactorModel) -> Result<DMatrix<f64>> {
    let (n, p) = (y.nrows(), y.ncols());
    if model.s.nrows() != n || model.mu.len() != p {
        return Err(Error::Dimension(format!(
            "factor model fit on {}x{}, phenotypes are {n}x{p}",
            model.s.nrows(),
            model.mu.len()
        )));
    }
    let mut resid = y.clone();
    for (j, mut col) in resid.column_iter_mut().enumerate() {
        col.add_scalar_mut(-model.mu[j]);
    }
    if model.r > 0 {
        let sts = model.s.transpose() * &model.s;
        let chol = sts
            .cholesky()
            .ok_or_else(|| Error::Numerical("collinear factor scores".into()))?;
        let v_ols = chol.solve(&(model.s.transpose() * &resid));
        resid -= &model.s * v_ols;
    }
    let nf = n as f64;
    for mut col in resid.column_iter_mut() {
        let mean = col.sum() / nf;
        col.add_scalar_mut(-mean);
    }
    Ok(resid)
}
