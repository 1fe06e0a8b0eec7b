//! Scan orchestration: method dispatch, parallel per-block scoring with
//! deterministic merging, and the scored-output writers.

use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::baselines::{manova_score, pca_scores, score_block_pairwise_avg, score_block_pairwise_best};
use crate::blocks::{build_windows, BlockPartition};
use crate::cca::{CcaEngine, CcaScoring, PvalMethod};
use crate::error::{Error, Result};
use crate::factors::{fit_latent_factors, residualize_factors};
use crate::fmt::sig9;
use crate::gflasso::{correlation_graph, gflasso_fit, score_block_gflasso, CorrelationGraph};
use crate::io::SnpMeta;
use crate::scca::{score_block_scca_direct, score_blocks_windowed, SccaVariant, SparseCcaParams};
use crate::score::{BlockScore, ScoreStatus};
use crate::significance::{genomewide_threshold, rank_blocks, replicate_seed, NullDistribution, ScanResult};

/// Sparse-CCA application strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SccaStrategy {
    Window1,
    Window2,
    LdBlock,
}

/// Block-scoring method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    CcaBlock,
    CcaSingle,
    CcaBlockPval(PvalMethod),
    Scca(SccaStrategy),
    Gflasso,
    ConfounderAdjust,
    PairwiseBest,
    PairwiseAvg,
    Pca,
    Manova,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::CcaBlock => "cca-block",
            Method::CcaSingle => "cca-single",
            Method::CcaBlockPval(PvalMethod::Bartlett) => "cca-block-pval-bartlett",
            Method::CcaBlockPval(PvalMethod::Rao) => "cca-block-pval-rao",
            Method::Scca(SccaStrategy::Window1) => "scca-window1",
            Method::Scca(SccaStrategy::Window2) => "scca-window2",
            Method::Scca(SccaStrategy::LdBlock) => "scca-ld-block",
            Method::Gflasso => "gflasso",
            Method::ConfounderAdjust => "confounder-adjust",
            Method::PairwiseBest => "pairwise-best",
            Method::PairwiseAvg => "pairwise-avg",
            Method::Pca => "pca",
            Method::Manova => "manova",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        // accept both "scca-window1" and "scca(window1)" spellings
        let norm = s
            .trim()
            .to_ascii_lowercase()
            .replace(['(', ')'], "-")
            .trim_end_matches('-')
            .to_string();
        Ok(match norm.as_str() {
            "cca-block" => Method::CcaBlock,
            "cca-single" => Method::CcaSingle,
            "cca-block-pval-bartlett" => Method::CcaBlockPval(PvalMethod::Bartlett),
            "cca-block-pval-rao" | "cca-block-pval" => Method::CcaBlockPval(PvalMethod::Rao),
            "scca-window1" | "scca" => Method::Scca(SccaStrategy::Window1),
            "scca-window2" => Method::Scca(SccaStrategy::Window2),
            "scca-ld-block" => Method::Scca(SccaStrategy::LdBlock),
            "gflasso" => Method::Gflasso,
            "confounder-adjust" => Method::ConfounderAdjust,
            "pairwise-best" => Method::PairwiseBest,
            "pairwise-avg" => Method::PairwiseAvg,
            "pca" => Method::Pca,
            "manova" => Method::Manova,
            other => {
                return Err(Error::Validation(format!(
                    "unknown method '{other}'; expected one of cca-block, cca-single, \
                     cca-block-pval-bartlett, cca-block-pval-rao, scca-window1, \
                     scca-window2, scca-ld-block, gflasso, confounder-adjust, \
                     pairwise-best, pairwise-avg, pca, manova"
                )))
            }
        })
    }
}

/// Tuning knobs shared by every scan.
#[derive(Debug, Clone)]
pub struct ScanParams {
    pub gap_cm: f64,
    pub window_min_snps: usize,
    pub n_perm: usize,
    pub alpha: f64,
    pub seed: u64,
    pub threads: usize,
    pub scale_y: bool,
    pub factors_r: usize,
    pub scca: SparseCcaParams,
    /// Fixed GFlasso penalties; `None` selects them per block by CV.
    pub gflasso_lambda: Option<f64>,
    pub gflasso_gamma: Option<f64>,
    pub corr_cutoff: f64,
    pub pca_var_threshold: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams {
            gap_cm: 0.01,
            window_min_snps: 2000,
            n_perm: 100,
            alpha: 0.05,
            seed: 0,
            threads: 0,
            scale_y: false,
            factors_r: 10,
            scca: SparseCcaParams::default(),
            gflasso_lambda: None,
            gflasso_gamma: None,
            corr_cutoff: 0.7,
            pca_var_threshold: 0.995,
        }
    }
}

const GFLASSO_CV_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

/// Per-block 5-fold CV over the lambda/gamma grid on prediction error.
fn gflasso_cv(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    graph: &CorrelationGraph,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = x.nrows();
    let folds = 5.min(n);
    let assignment = crate::scca::fold_assignment(n, folds, seed);
    let mut best = (GFLASSO_CV_GRID[0], GFLASSO_CV_GRID[0], f64::INFINITY);
    for &lambda in &GFLASSO_CV_GRID {
        for &gamma in &GFLASSO_CV_GRID {
            let mut err = 0.0;
            let mut count = 0usize;
            for fold in 0..folds {
                let train: Vec<usize> = (0..n).filter(|i| assignment[*i] != fold).collect();
                let test: Vec<usize> = (0..n).filter(|i| assignment[*i] == fold).collect();
                if train.len() < 3 || test.is_empty() {
                    continue;
                }
                let xt = x.select_rows(&train);
                let yt = y.select_rows(&train);
                let model = gflasso_fit(&xt, &yt, graph, lambda, gamma)?;
                let xv = x.select_rows(&test);
                let yv = y.select_rows(&test);
                let resid = &yv - &xv * &model.b;
                err += resid.iter().map(|v| v * v).sum::<f64>();
                count += test.len();
            }
            if count == 0 {
                continue;
            }
            let mean = err / count as f64;
            if mean < best.2 {
                best = (lambda, gamma, mean);
            }
        }
    }
    Ok((best.0, best.1))
}

/// Score every block of the partition with the requested method.
///
/// `x` carries preprocessed (imputed, centered) genotypes; `x_raw` the raw
/// dosages used for MANOVA grouping; `y` the preprocessed phenotypes.
/// Results are merged by block id, so the output is identical for any
/// thread count.
pub fn score_partition(
    method: Method,
    x: &DMatrix<f64>,
    x_raw: &DMatrix<f64>,
    y: &DMatrix<f64>,
    partition: &BlockPartition,
    params: &ScanParams,
) -> Result<Vec<BlockScore>> {
    let with_ctx = |e: Error, id: usize| match e {
        Error::Numerical(msg) => Error::Numerical(format!("block {id}: {msg}")),
        Error::RankDeficient { side } => {
            Error::Numerical(format!("block {id}: rank-deficient {side} covariance"))
        }
        other => other,
    };
    match method {
        Method::CcaBlock | Method::CcaSingle | Method::CcaBlockPval(_) => {
            let engine = CcaEngine::new(y)?;
            partition
                .blocks
                .par_iter()
                .map(|b| {
                    let xb = x.columns(b.start, b.end - b.start).clone_owned();
                    let score = match method {
                        Method::CcaBlock => engine.score_block(&xb, CcaScoring::MaxRho),
                        Method::CcaSingle => engine.score_block_single(&xb),
                        Method::CcaBlockPval(PvalMethod::Bartlett) => {
                            engine.score_block(&xb, CcaScoring::BartlettLogP)
                        }
                        Method::CcaBlockPval(PvalMethod::Rao) => {
                            engine.score_block(&xb, CcaScoring::RaoLogP)
                        }
                        _ => unreachable!(),
                    };
                    score
                        .map(|s| s.with_block_id(b.block_id))
                        .map_err(|e| with_ctx(e, b.block_id))
                })
                .collect()
        }
        Method::Scca(SccaStrategy::LdBlock) => partition
            .blocks
            .par_iter()
            .map(|b| {
                let xb = x.columns(b.start, b.end - b.start).clone_owned();
                score_block_scca_direct(
                    &xb,
                    y,
                    &params.scca,
                    replicate_seed(params.seed, 10_000 + b.block_id as u64),
                )
                .map(|s| s.with_block_id(b.block_id))
                .map_err(|e| with_ctx(e, b.block_id))
            })
            .collect(),
        Method::Scca(strategy) => {
            let variant = match strategy {
                SccaStrategy::Window1 => SccaVariant::Window1,
                SccaStrategy::Window2 => SccaVariant::Window2,
                SccaStrategy::LdBlock => unreachable!(),
            };
            let windows = build_windows(partition, params.window_min_snps);
            let mut scores: Vec<Vec<BlockScore>> = windows
                .par_iter()
                .map(|w| {
                    let blocks: Vec<_> = w
                        .block_ids
                        .iter()
                        .map(|&id| partition.blocks[id].clone())
                        .collect();
                    let start = blocks.first().unwrap().start;
                    let end = blocks.last().unwrap().end;
                    let xw = x.columns(start, end - start).clone_owned();
                    score_blocks_windowed(
                        &xw,
                        &blocks,
                        start,
                        y,
                        variant,
                        &params.scca,
                        replicate_seed(params.seed, 20_000 + w.window_id as u64),
                    )
                })
                .collect::<Result<_>>()?;
            let mut flat: Vec<BlockScore> = scores.drain(..).flatten().collect();
            flat.sort_by_key(|s| s.block_id);
            Ok(flat)
        }
        Method::Gflasso => {
            let graph = correlation_graph(y, params.corr_cutoff);
            partition
                .blocks
                .par_iter()
                .map(|b| {
                    let xb = x.columns(b.start, b.end - b.start).clone_owned();
                    let (lambda, gamma) = match (params.gflasso_lambda, params.gflasso_gamma) {
                        (Some(l), Some(g)) => (l, g),
                        _ => gflasso_cv(
                            &xb,
                            y,
                            &graph,
                            replicate_seed(params.seed, 30_000 + b.block_id as u64),
                        )
                        .map_err(|e| with_ctx(e, b.block_id))?,
                    };
                    let model = gflasso_fit(&xb, y, &graph, lambda, gamma)
                        .map_err(|e| with_ctx(e, b.block_id))?;
                    Ok(score_block_gflasso(&model).with_block_id(b.block_id))
                })
                .collect()
        }
        Method::ConfounderAdjust => {
            let (n, p) = (y.nrows(), y.ncols());
            let r = params.factors_r.min(n.min(p).saturating_sub(1));
            let model = fit_latent_factors(y, r, replicate_seed(params.seed, 40_000))?;
            let resid = residualize_factors(y, &model)?;
            partition
                .blocks
                .par_iter()
                .map(|b| {
                    let xb = x.columns(b.start, b.end - b.start).clone_owned();
                    score_block_pairwise_best(&xb, &resid)
                        .map(|s| s.with_block_id(b.block_id))
                        .map_err(|e| with_ctx(e, b.block_id))
                })
                .collect()
        }
        Method::PairwiseBest | Method::PairwiseAvg | Method::Pca | Method::Manova => partition
            .blocks
            .par_iter()
            .map(|b| {
                let cols = b.end - b.start;
                let res = match method {
                    Method::PairwiseBest => {
                        score_block_pairwise_best(&x.columns(b.start, cols).clone_owned(), y)
                    }
                    Method::PairwiseAvg => {
                        score_block_pairwise_avg(&x.columns(b.start, cols).clone_owned(), y)
                    }
                    Method::Pca => pca_scores(
                        &x.columns(b.start, cols).clone_owned(),
                        y,
                        params.pca_var_threshold,
                    ),
                    Method::Manova => {
                        manova_score(&x_raw.columns(b.start, cols).clone_owned(), y)
                    }
                    _ => unreachable!(),
                };
                res.map(|s| s.with_block_id(b.block_id))
                    .map_err(|e| with_ctx(e, b.block_id))
            })
            .collect(),
    }
}

/// Observed scan plus permutation calibration: scores and ranks the blocks,
/// derives the genome-wide threshold from permuted replicates, and flags
/// significant blocks.
pub fn scan_with_threshold(
    method: Method,
    x: &DMatrix<f64>,
    x_raw: &DMatrix<f64>,
    y: &DMatrix<f64>,
    partition: &BlockPartition,
    params: &ScanParams,
) -> Result<(ScanResult, f64, NullDistribution)> {
    let observed = score_partition(method, x, x_raw, y, partition, params)?;
    let mut result = rank_blocks(&observed)?;
    let scorer = |_: &DMatrix<f64>, y_perm: &DMatrix<f64>, part: &BlockPartition| {
        score_partition(method, x, x_raw, y_perm, part, params)
    };
    let (threshold, null) = genomewide_threshold(
        scorer,
        x,
        y,
        partition,
        params.n_perm,
        params.alpha,
        params.seed,
        method.name(),
    )?;
    result.apply_threshold(threshold);
    Ok((result, threshold, null))
}

/// Write per-block results (`blocks_scored.tsv`).
pub fn write_blocks_scored(
    path: &Path,
    partition: &BlockPartition,
    snps: &[SnpMeta],
    method: Method,
    result: &ScanResult,
) -> Result<()> {
    let mut out = String::from(
        "block_id\tchrom\tstart_bp\tend_bp\tn_snps\tmethod\tscore\tpvalue\trank_scaled\tsignificant\n",
    );
    for (i, s) in result.scores.iter().enumerate() {
        let b = &partition.blocks[s.block_id];
        let pv = s.p_value.map(sig9).unwrap_or_else(|| "NA".to_string());
        let sig = result.significant.contains(&s.block_id) as u8;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            b.block_id,
            b.chrom,
            snps[b.start].pos_bp,
            snps[b.end - 1].pos_bp,
            b.n_snps(),
            method.name(),
            sig9(s.score),
            pv,
            sig9(result.rank_scaled[i]),
            sig
        ));
    }
    write_file(path, &out)
}

/// Write per-SNP weights scaled to [0,1] within each block
/// (`snp_weights.tsv`).
pub fn write_snp_weights(
    path: &Path,
    partition: &BlockPartition,
    snps: &[SnpMeta],
    result: &ScanResult,
) -> Result<()> {
    let mut out = String::from("block_id\tsnp_id\tweight_scaled\n");
    for s in &result.scores {
        let b = &partition.blocks[s.block_id];
        if s.status != ScoreStatus::Scored && s.snp_weights.iter().all(|&w| w == 0.0) {
            continue;
        }
        let max = s.snp_weights.iter().cloned().fold(0.0f64, f64::max);
        for (k, &w) in s.snp_weights.iter().enumerate() {
            let scaled = if max > 0.0 { w / max } else { 0.0 };
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                b.block_id,
                snps[b.start + k].snp_id,
                sig9(scaled)
            ));
        }
    }
    write_file(path, &out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}
