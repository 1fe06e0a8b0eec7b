//! Classical canonical correlation analysis, its block-scoring modes, and
//! the Bartlett / Rao significance approximations for Wilks' lambda.
//!
//! The decomposition whitens the cross-covariance, `K = Sx^{-1/2} Sxy
//! Sy^{-1/2}`, and reads the canonical correlations off the singular values
//! of `K`. Inverse square roots come from a symmetric eigendecomposition
//! with a relative eigenvalue floor; anything below the floor is reported
//! as a rank-deficiency on the offending side.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::score::BlockScore;

/// Relative eigenvalue floor for covariance inverse square roots.
const EIG_FLOOR_REL: f64 = 1e-10;

/// Singular values below this are treated as zero when counting rank.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CcaResult {
    /// Canonical correlations, non-increasing, clamped to [0, 1].
    pub correlations: Vec<f64>,
    /// q x k matrix of genotype-side canonical vectors (columns a_i).
    pub x_vectors: DMatrix<f64>,
    /// p x k matrix of phenotype-side canonical vectors (columns b_i).
    pub y_vectors: DMatrix<f64>,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvalMethod {
    Bartlett,
    Rao,
}

#[derive(Debug, Clone)]
pub struct WilksStats {
    pub lambda: f64,
    pub s: f64,
    pub df1: f64,
    pub df2: f64,
    pub method: PvalMethod,
}

#[derive(Debug, Clone)]
pub struct CcaTest {
    pub statistic: f64,
    pub p_value: f64,
    pub degenerate: bool,
    pub stats: WilksStats,
}

/// How a CCA block score is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcaScoring {
    /// Maximum canonical correlation (the default).
    MaxRho,
    /// -log10 p from Bartlett's chi-square approximation.
    BartlettLogP,
    /// -log10 p from Rao's F approximation.
    RaoLogP,
}

pub(crate) fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    let n = m.nrows() as f64;
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}

/// Inverse square root of a symmetric PSD matrix via eigendecomposition.
/// Errors if any eigenvalue falls below `EIG_FLOOR_REL` times the largest.
pub(crate) fn inv_sqrt_sym(m: &DMatrix<f64>, side: &'static str) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    if max_ev <= 0.0 {
        return Err(Error::RankDeficient { side });
    }
    let floor = EIG_FLOOR_REL * max_ev;
    let mut inv_sqrt = DVector::zeros(eig.eigenvalues.len());
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev < floor {
            return Err(Error::RankDeficient { side });
        }
        inv_sqrt[i] = 1.0 / ev.sqrt();
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= inv_sqrt[j];
    }
    Ok(&scaled * v.transpose())
}

/// Precomputed phenotype-side state, reused when scoring many blocks
/// against the same phenotype matrix.
pub struct CcaEngine {
    yc: DMatrix<f64>,
    /// Sy^{-1/2}
    wy: DMatrix<f64>,
    n: usize,
    p: usize,
}

impl CcaEngine {
    pub fn new(y: &DMatrix<f64>) -> Result<Self> {
        let n = y.nrows();
        if n < 3 {
            return Err(Error::Validation("need at least 3 samples for CCA".into()));
        }
        let yc = center_columns(y);
        let sy = yc.transpose() * &yc / (n as f64 - 1.0);
        let wy = inv_sqrt_sym(&sy, "phenotype")?;
        Ok(CcaEngine {
            yc,
            wy,
            n,
            p: y.ncols(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }
    pub fn n_traits(&self) -> usize {
        self.p
    }

    pub fn decompose(&self, x: &DMatrix<f64>) -> Result<CcaResult> {
        let n = self.n;
        if x.nrows() != n {
            return Err(Error::Dimension(format!(
                "X has {} rows, Y has {n}",
                x.nrows()
            )));
        }
        let q = x.ncols();
        if n <= q.max(self.p) + 1 {
            return Err(Error::Validation(format!(
                "untestable: n = {n} too small for q = {q}, p = {}",
                self.p
            )));
        }
        let xc = center_columns(x);
        let sx = xc.transpose() * &xc / (n as f64 - 1.0);
        let wx = inv_sqrt_sym(&sx, "genotype")?;
        let sxy = xc.transpose() * &self.yc / (n as f64 - 1.0);
        let k_mat = &wx * sxy * &self.wy;
        let svd = k_mat.svd(true, true);
        let u = svd.u.as_ref().expect("u requested");
        let vt = svd.v_t.as_ref().expect("v_t requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .partial_cmp(&svd.singular_values[a])
                .unwrap()
        });
        let rank = order
            .iter()
            .filter(|&&i| svd.singular_values[i] > RANK_TOL)
            .count();
        let k = rank.max(1).min(order.len());
        let mut correlations = Vec::with_capacity(k);
        let mut x_vectors = DMatrix::zeros(q, k);
        let mut y_vectors = DMatrix::zeros(self.p, k);
        for (out_i, &i) in order.iter().take(k).enumerate() {
            correlations.push(svd.singular_values[i].clamp(0.0, 1.0));
            let alpha = u.column(i);
            let beta = vt.row(i).transpose();
            x_vectors.set_column(out_i, &(&wx * alpha));
            y_vectors.set_column(out_i, &(&self.wy * beta));
        }
        Ok(CcaResult {
            correlations,
            x_vectors,
            y_vectors,
            k,
        })
    }

    /// Joint score of a block: all SNPs against all phenotypes.
    pub fn score_block(&self, x: &DMatrix<f64>, scoring: CcaScoring) -> Result<BlockScore> {
        let q = x.ncols();
        if q + self.p + 1 >= self.n {
            return Ok(BlockScore::untestable(q));
        }
        let res = self.decompose(x)?;
        let weights: Vec<f64> = res.x_vectors.column(0).iter().map(|v| v.abs()).collect();
        match scoring {
            CcaScoring::MaxRho => Ok(BlockScore::scored(res.correlations[0], None, weights)),
            CcaScoring::BartlettLogP | CcaScoring::RaoLogP => {
                let method = if scoring == CcaScoring::BartlettLogP {
                    PvalMethod::Bartlett
                } else {
                    PvalMethod::Rao
                };
                let test = cca_pvalue(&res, self.n, self.p, q, method)?;
                Ok(BlockScore::scored(
                    neg_log10(test.p_value),
                    Some(test.p_value),
                    weights,
                ))
            }
        }
    }

    /// Score each SNP alone against all phenotypes; block score is the
    /// maximum single-SNP canonical correlation. Per-SNP weights are the
    /// -log10 p of each SNP's own test.
    pub fn score_block_single(&self, x: &DMatrix<f64>) -> Result<BlockScore> {
        let q = x.ncols();
        if self.p + 2 >= self.n {
            return Ok(BlockScore::untestable(q));
        }
        let mut best = f64::NEG_INFINITY;
        let mut best_p = None;
        let mut weights = vec![0.0; q];
        let mut any = false;
        for j in 0..q {
            let col = DMatrix::from_column_slice(self.n, 1, x.column(j).as_slice());
            let res = match self.decompose(&col) {
                Ok(r) => r,
                Err(Error::RankDeficient { side: "genotype" }) => continue, // zero-variance SNP
                Err(e) => return Err(e),
            };
            any = true;
            let test = cca_pvalue(&res, self.n, self.p, 1, PvalMethod::Rao)?;
            weights[j] = neg_log10(test.p_value);
            if res.correlations[0] > best {
                best = res.correlations[0];
                best_p = Some(test.p_value);
            }
        }
        if !any {
            return Ok(BlockScore::untestable(q));
        }
        Ok(BlockScore::scored(best, best_p, weights))
    }
}

pub(crate) fn neg_log10(p: f64) -> f64 {
    -(p.max(1e-300)).log10()
}

/// Decompose a genotype block against a phenotype matrix.
pub fn canonical_decomposition(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<CcaResult> {
    CcaEngine::new(y)?.decompose(x)
}

/// Rao's F approximation for Wilks Lambda(p, nu_e, nu_h).
pub fn wilks_rao(lambda: f64, p: f64, nu_e: f64, nu_h: f64) -> (WilksStats, f64, f64) {
    let num = p * p * nu_h * nu_h - 4.0;
    let den = p * p + nu_h * nu_h - 5.0;
    let s = if num > 0.0 && den > 0.0 {
        (num / den).sqrt()
    } else {
        1.0
    };
    let df1 = p * nu_h;
    let m = nu_e + nu_h - (p + nu_h + 1.0) / 2.0;
    let df2 = m * s - df1 / 2.0 + 1.0;
    let lam_s = lambda.powf(1.0 / s);
    let f = if lam_s > 0.0 {
        ((1.0 - lam_s) / lam_s) * (df2 / df1)
    } else {
        f64::INFINITY
    };
    let pvalue = if !f.is_finite() {
        0.0
    } else if df2 <= 0.0 {
        f64::NAN
    } else {
        let dist = FisherSnedecor::new(df1, df2).expect("valid F dfs");
        1.0 - dist.cdf(f)
    };
    (
        WilksStats {
            lambda,
            s,
            df1,
            df2,
            method: PvalMethod::Rao,
        },
        f,
        pvalue,
    )
}

/// Significance of the canonical correlations by Bartlett's chi-square or
/// Rao's F approximation.
pub fn cca_pvalue(
    result: &CcaResult,
    n: usize,
    p: usize,
    q: usize,
    method: PvalMethod,
) -> Result<CcaTest> {
    if result.k < 1 {
        return Err(Error::Validation("no canonical correlations".into()));
    }
    if n <= p + q + 1 {
        return Err(Error::Validation(format!(
            "untestable: n = {n} too small for p = {p}, q = {q}"
        )));
    }
    let degenerate = result.correlations.iter().any(|&r| r >= 1.0 - 1e-12);
    let lambda: f64 = result
        .correlations
        .iter()
        .map(|&r| (1.0 - r * r).max(0.0))
        .product();
    if degenerate || lambda <= 0.0 {
        let (stats, _, _) = wilks_rao(0.0, p as f64, (n - 1 - q) as f64, q as f64);
        return Ok(CcaTest {
            statistic: f64::INFINITY,
            p_value: 0.0,
            degenerate: true,
            stats: WilksStats { method, ..stats },
        });
    }
    match method {
        PvalMethod::Bartlett => {
            let (nf, pf, qf) = (n as f64, p as f64, q as f64);
            let statistic = -(nf - 1.0 - (pf + qf + 1.0) / 2.0) * lambda.ln();
            let df1 = pf * qf;
            let dist = ChiSquared::new(df1).expect("valid chi-square df");
            let p_value = 1.0 - dist.cdf(statistic);
            Ok(CcaTest {
                statistic,
                p_value,
                degenerate: false,
                stats: WilksStats {
                    lambda,
                    s: 1.0,
                    df1,
                    df2: 0.0,
                    method,
                },
            })
        }
        PvalMethod::Rao => {
            let (stats, f, p_value) =
                wilks_rao(lambda, p as f64, (n - 1 - q) as f64, q as f64);
            Ok(CcaTest {
                statistic: f,
                p_value,
                degenerate: false,
                stats: WilksStats { method, ..stats },
            })
        }
    }
}

/// Joint block score: maximum canonical correlation (or -log10 p).
pub fn score_block_cca(
    x_block: &DMatrix<f64>,
    y: &DMatrix<f64>,
    scoring: CcaScoring,
) -> Result<BlockScore> {
    CcaEngine::new(y)?.score_block(x_block, scoring)
}

/// Per-SNP block score: maximum over single-SNP canonical correlations.
pub fn score_block_cca_single(x_block: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<BlockScore> {
    CcaEngine::new(y)?.score_block_single(x_block)
}
