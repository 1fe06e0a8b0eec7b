//! Baseline block-scoring methods: exhaustive pairwise simple regression,
//! PCA-reduced pairwise testing, and per-SNP MANOVA over genotype groups.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cca::{neg_log10, wilks_rao};
use crate::error::{Error, Result};
use crate::score::BlockScore;

/// All q x p simple-regression t tests for one block.
#[derive(Debug, Clone)]
pub struct PairwiseResult {
    /// t statistic for the slope of trait k on SNP j; NaN when the pair
    /// was skipped (zero-variance SNP).
    pub t_scores: DMatrix<f64>,
    pub p_values: DMatrix<f64>,
    /// -log10 of the smallest pairwise p-value.
    pub best_pair_score: f64,
    /// Mean |t| over all tested pairs.
    pub avg_pair_score: f64,
}

/// Simple linear regression of every trait on every SNP; the slope t test
/// has n-2 degrees of freedom. Inputs are centered, so the test reduces to
/// the correlation statistic t = r sqrt((n-2)/(1-r^2)).
pub fn pairwise_scores(x_block: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<PairwiseResult> {
    let n = x_block.nrows();
    if y.nrows() != n {
        return Err(Error::Dimension(format!(
            "genotypes have {n} rows, phenotypes {}",
            y.nrows()
        )));
    }
    if n < 3 {
        return Err(Error::Validation(format!(
            "pairwise regression needs n >= 3, got {n}"
        )));
    }
    let q = x_block.ncols();
    let p = y.ncols();
    let df = (n - 2) as f64;
    let tdist = StudentsT::new(0.0, 1.0, df).expect("valid t df");

    let x_norms: Vec<f64> = (0..q).map(|j| x_block.column(j).norm()).collect();
    let y_norms: Vec<f64> = (0..p).map(|k| y.column(k).norm()).collect();
    let cross = x_block.transpose() * y; // q x p of dot products

    let mut t_scores = DMatrix::from_element(q, p, f64::NAN);
    let mut p_values = DMatrix::from_element(q, p, f64::NAN);
    let mut min_p = f64::INFINITY;
    let mut abs_t_sum = 0.0;
    let mut tested = 0usize;
    for j in 0..q {
        if x_norms[j] <= 0.0 {
            continue; // zero-variance SNP: all its pairs are skipped
        }
        for k in 0..p {
            if y_norms[k] <= 0.0 {
                continue;
            }
            let r = (cross[(j, k)] / (x_norms[j] * y_norms[k])).clamp(-1.0, 1.0);
            let denom = 1.0 - r * r;
            let t = if denom > 0.0 {
                r * (df / denom).sqrt()
            } else {
                f64::INFINITY * r.signum()
            };
            let pv = if t.is_finite() {
                (2.0 * (1.0 - tdist.cdf(t.abs()))).clamp(1e-300, 1.0)
            } else {
                1e-300
            };
            t_scores[(j, k)] = t;
            p_values[(j, k)] = pv;
            min_p = min_p.min(pv);
            abs_t_sum += t.abs().min(1e12);
            tested += 1;
        }
    }
    if tested == 0 {
        return Err(Error::Validation(
            "no testable SNP/trait pairs in block".into(),
        ));
    }
    Ok(PairwiseResult {
        t_scores,
        p_values,
        best_pair_score: neg_log10(min_p),
        avg_pair_score: abs_t_sum / tested as f64,
    })
}

/// Block score from the smallest pairwise p-value; per-SNP weights are each
/// SNP's own best -log10 p.
pub fn score_block_pairwise_best(x_block: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<BlockScore> {
    let res = pairwise_scores(x_block, y)?;
    let weights = row_stat(&res.p_values, |row| {
        row.iter()
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, |a, &b| a.min(b))
    })
    .into_iter()
    .map(|m| if m.is_finite() { neg_log10(m) } else { 0.0 })
    .collect();
    Ok(BlockScore::scored(res.best_pair_score, None, weights))
}

/// Block score from the mean |t| over pairs; per-SNP weights are each SNP's
/// mean |t|.
pub fn score_block_pairwise_avg(x_block: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<BlockScore> {
    let res = pairwise_scores(x_block, y)?;
    let weights = row_stat(&res.t_scores, |row| {
        let vals: Vec<f64> = row.iter().filter(|v| v.is_finite()).map(|v| v.abs()).collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    });
    Ok(BlockScore::scored(res.avg_pair_score, None, weights))
}

fn row_stat(m: &DMatrix<f64>, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..m.nrows())
        .map(|j| {
            let row: Vec<f64> = m.row(j).iter().copied().collect();
            f(&row)
        })
        .collect()
}

/// Principal components of centered data retaining the smallest leading set
/// whose cumulative variance share reaches `var_threshold`. Returns the
/// n x k score matrix and the q x k loading matrix.
fn principal_components(m: &DMatrix<f64>, var_threshold: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let sv = &svd.singular_values;
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let rank_tol = 1e-10 * sv.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let mut keep = 0usize;
    let mut cum = 0.0;
    for (i, s) in sv.iter().enumerate() {
        if *s <= rank_tol || keep >= n.saturating_sub(1).max(1) {
            break;
        }
        keep = i + 1;
        cum += s * s;
        if total > 0.0 && cum / total >= var_threshold - 1e-12 {
            break;
        }
    }
    let mut scores = DMatrix::zeros(n, keep);
    let mut loadings = DMatrix::zeros(m.ncols(), keep);
    for i in 0..keep {
        scores.set_column(i, &(u.column(i) * sv[i]));
        loadings.set_column(i, &vt.row(i).transpose());
    }
    (scores, loadings)
}

/// PCA-reduced pairwise testing: reduce both sides to leading principal
/// components, then take the best pairwise score between component sets.
/// Per-SNP weights are |loading| on the genotype component of the best pair.
pub fn pca_scores(
    x_block: &DMatrix<f64>,
    y: &DMatrix<f64>,
    var_threshold: f64,
) -> Result<BlockScore> {
    if !(0.0..=1.0).contains(&var_threshold) {
        return Err(Error::Validation(format!(
            "var_threshold must be in [0,1], got {var_threshold}"
        )));
    }
    let (x_pc, x_load) = principal_components(x_block, var_threshold);
    let (y_pc, _) = principal_components(y, var_threshold);
    if x_pc.ncols() == 0 || y_pc.ncols() == 0 {
        return Ok(BlockScore::untestable(x_block.ncols()));
    }
    let res = pairwise_scores(&x_pc, &y_pc)?;
    // locate the genotype component of the best pair
    let mut best = (0usize, f64::INFINITY);
    for j in 0..res.p_values.nrows() {
        for k in 0..res.p_values.ncols() {
            let pv = res.p_values[(j, k)];
            if pv.is_finite() && pv < best.1 {
                best = (j, pv);
            }
        }
    }
    let weights: Vec<f64> = x_load.column(best.0).iter().map(|v| v.abs()).collect();
    Ok(BlockScore::scored(res.best_pair_score, None, weights))
}

/// Number of components retained at a threshold (exposed for tests).
pub fn n_components(m: &DMatrix<f64>, var_threshold: f64) -> usize {
    principal_components(m, var_threshold).0.ncols()
}

/// Per-SNP one-way MANOVA over genotype groups.
///
/// `x_raw` holds raw dosage values (possibly fractional after imputation,
/// possibly NaN); each value is rounded to the nearest of {0,1,2} for
/// grouping only. A SNP needs at least two groups with at least two members
/// each; otherwise it is skipped. Block score is -log10 of the minimum
/// per-SNP p-value; per-SNP weights are the individual -log10 p.
pub fn manova_score(x_raw: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<BlockScore> {
    let n = x_raw.nrows();
    let p = y.ncols();
    if y.nrows() != n {
        return Err(Error::Dimension(format!(
            "genotypes have {n} rows, phenotypes {}",
            y.nrows()
        )));
    }
    let q = x_raw.ncols();
    let mut weights = vec![0.0; q];
    let mut min_p = f64::INFINITY;
    let mut any = false;
    // full-sample total scatter, shared by every SNP that uses all rows
    let full_grand: Vec<f64> = (0..p).map(|k| y.column(k).mean()).collect();
    let mut yc_full = y.clone();
    for (k, mut col) in yc_full.column_iter_mut().enumerate() {
        col.add_scalar_mut(-full_grand[k]);
    }
    let t_full = yc_full.transpose() * &yc_full;
    let t_full_logdet = log_det_pd(&t_full);
    for j in 0..q {
        let mut groups: [Vec<usize>; 3] = [vec![], vec![], vec![]];
        for i in 0..n {
            let v = x_raw[(i, j)];
            if v.is_nan() {
                continue;
            }
            let g = v.round().clamp(0.0, 2.0) as usize;
            groups[g].push(i);
        }
        let used: Vec<&Vec<usize>> = groups.iter().filter(|g| g.len() >= 2).collect();
        let g_count = used.len();
        let n_used: usize = used.iter().map(|g| g.len()).sum();
        if g_count < 2 {
            continue; // monomorphic or too sparse: skipped
        }
        if n_used <= p + g_count {
            continue; // not enough samples for a p-variate test
        }
        let all_rows = n_used == n;
        let (t_mat, grand);
        if all_rows {
            t_mat = t_full.clone();
            grand = full_grand.clone();
        } else {
            let rows: Vec<usize> = used.iter().flat_map(|g| g.iter().copied()).collect();
            let ys = y.select_rows(&rows);
            let gm: Vec<f64> = (0..p).map(|k| ys.column(k).mean()).collect();
            let mut yc = ys;
            for (k, mut col) in yc.column_iter_mut().enumerate() {
                col.add_scalar_mut(-gm[k]);
            }
            t_mat = yc.transpose() * &yc;
            grand = gm;
        }
        let mut b_mat = DMatrix::zeros(p, p);
        for g in &used {
            let ng = g.len() as f64;
            let mut gm = vec![0.0; p];
            for &i in g.iter() {
                for k in 0..p {
                    gm[k] += y[(i, k)];
                }
            }
            let d = DMatrix::from_fn(p, 1, |k, _| gm[k] / ng - grand[k]);
            b_mat += &d * d.transpose() * ng;
        }
        let w_mat = &t_mat - &b_mat;
        let t_logdet = if all_rows {
            t_full_logdet
        } else {
            log_det_pd(&t_mat)
        };
        let lambda = match (log_det_pd(&w_mat), t_logdet) {
            (Some(lw), Some(lt)) => (lw - lt).exp().clamp(0.0, 1.0),
            (None, Some(_)) => 0.0, // within-group scatter collapsed
            _ => continue,          // total scatter degenerate: skip SNP
        };
        let nu_e = (n_used - g_count) as f64;
        let nu_h = (g_count - 1) as f64;
        let (_, _, pv) = wilks_rao(lambda, p as f64, nu_e, nu_h);
        if pv.is_nan() {
            continue;
        }
        let pv = pv.clamp(0.0, 1.0);
        weights[j] = neg_log10(pv.max(1e-300));
        min_p = min_p.min(pv);
        any = true;
    }
    if !any {
        return Ok(BlockScore::untestable(q));
    }
    Ok(BlockScore::scored(
        neg_log10(min_p.max(1e-300)),
        Some(min_p),
        weights,
    ))
}

fn log_det_pd(m: &DMatrix<f64>) -> Option<f64> {
    m.clone()
        .cholesky()
        .map(|c| c.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum())
}
