//! Benchmark-dataset generation: genotype row resampling from a source
//! LD-block, planted linear effects from one or more causal SNPs, correlated
//! Gaussian noise with optional Hadamard-powered correlation matrices, and
//! ground-truth labels for power studies.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::blocks::BlockPartition;
use crate::error::{Error, Result};
use crate::fmt::sig9;
use crate::io::{GenotypeMatrix, PhenotypeMatrix, SnpMeta};
use crate::significance::replicate_seed;

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub source_block: GenotypeMatrix,
    pub n: usize,
    /// (column index in source, remove column from the output genotypes).
    pub causal_snps: Vec<(usize, bool)>,
    pub beta_max: f64,
    /// (trait index, effect sign).
    pub affected_traits: Vec<(usize, f64)>,
    pub noise_corr: DMatrix<f64>,
    /// Hadamard exponent for the noise correlation matrix; 1 = unchanged.
    pub corr_power: u32,
    pub seed: u64,
}

/// Ground truth for one causal SNP.
#[derive(Debug, Clone)]
pub struct CausalTruth {
    pub snp_id: String,
    pub chrom: String,
    pub pos_bp: u64,
    pub removed: bool,
    /// Max |correlation| between this SNP and the remaining SNPs (NaN when
    /// the SNP is kept in the data).
    pub realized_rho: f64,
    /// (trait index, signed drawn effect).
    pub effects: Vec<(usize, f64)>,
    /// Block containing (or nearest to) the causal position; assigned after
    /// partitioning via [`assign_truth_blocks`].
    pub block_id: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub x: GenotypeMatrix,
    pub y: PhenotypeMatrix,
    pub truth: Vec<CausalTruth>,
}

/// Draw n whole rows uniformly with replacement from the source genotypes,
/// preserving within-block LD exactly.
pub fn sample_genotypes(source: &GenotypeMatrix, n: usize, seed: u64) -> Result<GenotypeMatrix> {
    let src_n = source.n_samples();
    if src_n == 0 {
        return Err(Error::Validation("source genotypes have no rows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..src_n)).collect();
    let mut g = source.select_rows(&rows);
    g.sample_ids = (0..n).map(|i| format!("sim{i}")).collect();
    Ok(g)
}

/// Elementwise integer power of a correlation matrix. Integer Hadamard
/// powers of PSD matrices are PSD (Schur product theorem), so the result is
/// again a valid correlation matrix.
pub fn hadamard_power(corr: &DMatrix<f64>, k: u32) -> Result<DMatrix<f64>> {
    if k < 1 {
        return Err(Error::Validation("Hadamard exponent must be >= 1".into()));
    }
    let p = corr.nrows();
    if corr.ncols() != p {
        return Err(Error::Dimension(format!(
            "correlation matrix is {p}x{}",
            corr.ncols()
        )));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| corr[(i, j)].powi(k as i32)))
}

/// Symmetric PSD square root, clamping tiny negative eigenvalues to zero.
fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for (i, mut col) in scaled.column_iter_mut().enumerate() {
        col *= eig.eigenvalues[i].max(0.0).sqrt();
    }
    &scaled * eig.eigenvectors.transpose()
}

fn column_correlation(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = a.len() as f64;
    let am = a.sum() / n;
    let bm = b.sum() / n;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..a.len() {
        let x = a[i] - am;
        let y = b[i] - bm;
        num += x * y;
        da += x * x;
        db += y * y;
    }
    if da <= 0.0 || db <= 0.0 {
        0.0
    } else {
        num / (da * db).sqrt()
    }
}

/// Generate one dataset: resampled genotypes, planted effects with per-pair
/// magnitudes drawn from [0.75 beta_max, beta_max] times the configured
/// trait sign, correlated Gaussian noise from the (optionally
/// Hadamard-powered) correlation matrix, and causal-column removal with the
/// realized tagging correlation recorded.
pub fn simulate_dataset(config: &SimulationConfig) -> Result<SimulatedDataset> {
    let q = config.source_block.n_snps();
    let p = config.noise_corr.nrows();
    for &(c, _) in &config.causal_snps {
        if c >= q {
            return Err(Error::Validation(format!(
                "causal SNP index {c} out of range for {q} source SNPs"
            )));
        }
    }
    if config.beta_max > 0.0 && config.causal_snps.is_empty() {
        return Err(Error::Validation(
            "beta_max > 0 requires at least one causal SNP".into(),
        ));
    }
    if config.beta_max > 0.0 && config.affected_traits.is_empty() {
        return Err(Error::Validation(
            "beta_max > 0 requires affected traits".into(),
        ));
    }
    for &(t, _) in &config.affected_traits {
        if t >= p {
            return Err(Error::Validation(format!(
                "affected trait index {t} out of range for {p} traits"
            )));
        }
    }

    let x_full = sample_genotypes(&config.source_block, config.n, replicate_seed(config.seed, 0))?;

    // correlated noise: rows of Z * A with A the symmetric sqrt of the
    // (possibly Hadamard-powered) correlation matrix
    let cov = hadamard_power(&config.noise_corr, config.corr_power)?;
    let a = sym_sqrt(&cov);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(replicate_seed(config.seed, 1));
    let z = DMatrix::from_fn(config.n, p, |_, _| noise_rng.sample::<f64, _>(StandardNormal));
    let mut y_vals = z * &a;

    // planted effects
    let mut effect_rng = ChaCha8Rng::seed_from_u64(replicate_seed(config.seed, 2));
    let mut truth = Vec::with_capacity(config.causal_snps.len());
    for &(c, remove) in &config.causal_snps {
        let xc = x_full.values.column(c).into_owned();
        let mut effects = Vec::with_capacity(config.affected_traits.len());
        for &(t, sign) in &config.affected_traits {
            let mag = if config.beta_max > 0.0 {
                effect_rng.gen_range(0.75 * config.beta_max..=config.beta_max)
            } else {
                0.0
            };
            let beta = sign.signum() * mag;
            effects.push((t, beta));
            if beta != 0.0 {
                let col = y_vals.column(t) + &xc * beta;
                y_vals.set_column(t, &col);
            }
        }
        let meta = &x_full.snps[c];
        truth.push(CausalTruth {
            snp_id: meta.snp_id.clone(),
            chrom: meta.chrom.clone(),
            pos_bp: meta.pos_bp,
            removed: remove,
            realized_rho: f64::NAN,
            effects,
            block_id: None,
        });
    }

    // remove flagged causal columns, recording the best remaining tag
    let removed: Vec<usize> = config
        .causal_snps
        .iter()
        .filter(|&&(_, r)| r)
        .map(|&(c, _)| c)
        .collect();
    let keep: Vec<usize> = (0..q).filter(|j| !removed.contains(j)).collect();
    for t in truth.iter_mut() {
        if !t.removed {
            continue;
        }
        let c = config
            .causal_snps
            .iter()
            .find(|&&(ci, _)| x_full.snps[ci].snp_id == t.snp_id)
            .map(|&(ci, _)| ci)
            .unwrap();
        let xc = x_full.values.column(c).into_owned();
        let mut best = 0.0f64;
        for &j in &keep {
            let r = column_correlation(&xc, &x_full.values.column(j).into_owned()).abs();
            best = best.max(r);
        }
        t.realized_rho = best;
    }
    let x = x_full.select_snps(&keep);

    let y = PhenotypeMatrix {
        values: y_vals,
        trait_names: (0..p).map(|k| format!("trait{k}")).collect(),
        sample_ids: x.sample_ids.clone(),
    };
    Ok(SimulatedDataset { x, y, truth })
}

/// Upper bound on the proportion of variance explained by a single SNP with
/// effect beta_max and genotype variance var_x.
pub fn pve_bound(beta_max: f64, var_x: f64) -> f64 {
    let s = beta_max * beta_max * var_x;
    s / (s + 1.0)
}

/// Assign each causal truth record the block containing (or nearest to) its
/// position among the remaining SNPs of the same chromosome.
pub fn assign_truth_blocks(
    truth: &mut [CausalTruth],
    partition: &BlockPartition,
    snps: &[SnpMeta],
) {
    for t in truth.iter_mut() {
        // nearest remaining SNP on the same chromosome, by base-pair distance
        let nearest = snps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.chrom == t.chrom)
            .min_by_key(|(_, s)| s.pos_bp.abs_diff(t.pos_bp))
            .map(|(j, _)| j);
        if let Some(j) = nearest {
            t.block_id = partition
                .blocks
                .iter()
                .find(|b| b.start <= j && j < b.end)
                .map(|b| b.block_id);
        }
    }
}

/// Write ground-truth labels (`truth.tsv`): one row per (causal SNP,
/// affected trait) pair, with empty-effect rows for null configurations.
pub fn write_truth(path: &Path, truth: &[CausalTruth]) -> Result<()> {
    let mut out =
        String::from("snp_id\tblock_id\tremoved\trealized_rho\ttrait_index\teffect\n");
    for t in truth {
        let bid = t
            .block_id
            .map(|b| b.to_string())
            .unwrap_or_else(|| "NA".to_string());
        if t.effects.iter().all(|&(_, e)| e == 0.0) {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\tNA\tNA\n",
                t.snp_id,
                bid,
                t.removed as u8,
                sig9(t.realized_rho)
            ));
            continue;
        }
        for &(ti, e) in &t.effects {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                t.snp_id,
                bid,
                t.removed as u8,
                sig9(t.realized_rho),
                ti,
                sig9(e)
            ));
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    f.write_all(out.as_bytes()).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

// ---------------------------------------------------------------------------
// Fixture generators
// ---------------------------------------------------------------------------

/// Synthetic LD-block source panel: two latent AR(1) haplotype signals per
/// sample, thresholded per SNP so allele frequencies land in [0.1, 0.5].
/// Adjacent SNPs are strongly correlated, and correlation decays with
/// distance, mimicking real LD structure.
pub fn synthetic_ld_source(
    n_rows: usize,
    n_snps: usize,
    chrom: &str,
    start_bp: u64,
    seed: u64,
) -> GenotypeMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ar = 0.95;
    let innov = (1.0f64 - ar * ar).sqrt();
    // two independent latent haplotype chains per sample
    let mut hap = vec![DMatrix::zeros(n_rows, n_snps), DMatrix::zeros(n_rows, n_snps)];
    for h in hap.iter_mut() {
        for i in 0..n_rows {
            let mut z: f64 = rng.sample(StandardNormal);
            h[(i, 0)] = z;
            for j in 1..n_snps {
                let e: f64 = rng.sample(StandardNormal);
                z = ar * z + innov * e;
                h[(i, j)] = z;
            }
        }
    }
    // per-SNP threshold giving a MAF between 0.1 and 0.5
    let values = DMatrix::from_fn(n_rows, n_snps, |i, j| {
        let maf = 0.1 + 0.4 * ((j as f64 * 0.37).sin().abs());
        // threshold of a standard normal at the 1-maf quantile
        let thr = normal_quantile(1.0 - maf);
        let a0 = (hap[0][(i, j)] > thr) as u8;
        let a1 = (hap[1][(i, j)] > thr) as u8;
        (a0 + a1) as f64
    });
    let snps = (0..n_snps)
        .map(|j| SnpMeta {
            snp_id: format!("{chrom}_snp{j}"),
            chrom: chrom.to_string(),
            pos_bp: start_bp + 1000 * j as u64,
            pos_cm: (start_bp as f64 + 1000.0 * j as f64) * 1e-6,
        })
        .collect();
    GenotypeMatrix {
        values,
        snps,
        sample_ids: (0..n_rows).map(|i| format!("src{i}")).collect(),
    }
}

/// Standard normal quantile (Acklam's rational approximation; max absolute
/// error about 1e-9, ample for fixture thresholds).
fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Nested block-structured correlation matrix: traits grouped into blocks
/// with high within-block correlation, nested sub-blocks correlated more
/// strongly, and a weak global level. Mimics the block-like structure of
/// real metabolomics correlation matrices. Always PSD by construction
/// (factor-model representation), then normalized to unit diagonal.
pub fn nested_block_correlation(block_sizes: &[usize], seed: u64) -> DMatrix<f64> {
    let p: usize = block_sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // latent loadings: one global factor, one per block, one per sub-block
    let n_blocks = block_sizes.len();
    let mut loads: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
    let mut factor = 0usize;
    // global factor
    for item in loads.iter_mut() {
        item.push((factor, 0.25 + 0.05 * rng.gen::<f64>()));
    }
    factor += 1;
    let mut offset = 0usize;
    for &bs in block_sizes.iter().take(n_blocks) {
        for j in offset..offset + bs {
            loads[j].push((factor, 0.65 + 0.1 * rng.gen::<f64>()));
        }
        factor += 1;
        // sub-blocks of roughly half the block
        if bs >= 4 {
            let half = bs / 2;
            for j in offset..offset + half {
                loads[j].push((factor, 0.45 + 0.1 * rng.gen::<f64>()));
            }
            factor += 1;
            for j in offset + half..offset + bs {
                loads[j].push((factor, 0.45 + 0.1 * rng.gen::<f64>()));
            }
            factor += 1;
        }
        offset += bs;
    }
    let n_factors = factor;
    let mut lambda = DMatrix::zeros(p, n_factors);
    for (j, ls) in loads.iter().enumerate() {
        for &(f, v) in ls {
            lambda[(j, f)] = v;
        }
    }
    let mut cov = &lambda * lambda.transpose();
    for j in 0..p {
        cov[(j, j)] += 0.3; // idiosyncratic noise keeps the matrix PD
    }
    let d: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
    DMatrix::from_fn(p, p, |i, j| cov[(i, j)] / (d[i] * d[j]))
}

/// Pick the source column whose max |correlation| with the other columns is
/// nearest the target rho. Returns (column index, achieved rho).
pub fn select_causal_snp(source: &GenotypeMatrix, target_rho: f64) -> Result<(usize, f64)> {
    let q = source.n_snps();
    if q < 2 {
        return Err(Error::Validation(
            "need at least 2 SNPs to select a tagged causal SNP".into(),
        ));
    }
    let cols: Vec<DVector<f64>> = (0..q).map(|j| source.values.column(j).into_owned()).collect();
    let mut best = (0usize, f64::NAN, f64::INFINITY);
    for j in 0..q {
        let mut max_r = 0.0f64;
        for k in 0..q {
            if k == j {
                continue;
            }
            max_r = max_r.max(column_correlation(&cols[j], &cols[k]).abs());
        }
        let gap = (max_r - target_rho).abs();
        if gap < best.2 {
            best = (j, max_r, gap);
        }
    }
    Ok((best.0, best.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::build_blocks;

    fn small_source(seed: u64) -> GenotypeMatrix {
        synthetic_ld_source(300, 20, "1", 100_000, seed)
    }

    fn config_null(p: usize, seed: u64) -> SimulationConfig {
        SimulationConfig {
            source_block: small_source(1),
            n: 200,
            causal_snps: vec![],
            beta_max: 0.0,
            affected_traits: vec![],
            noise_corr: DMatrix::identity(p, p),
            corr_power: 1,
            seed,
        }
    }

    #[test]
    fn resampled_rows_come_from_source() {
        let src = small_source(2);
        let g = sample_genotypes(&src, 50, 7).unwrap();
        for i in 0..50 {
            let row = g.values.row(i);
            let found = (0..src.n_samples()).any(|s| src.values.row(s) == row);
            assert!(found, "row {i} not in source");
        }
    }

    #[test]
    fn resampling_preserves_allele_frequencies() {
        let src = small_source(3);
        let g = sample_genotypes(&src, 3000, 8).unwrap();
        for j in 0..src.n_snps() {
            let f_src = src.values.column(j).mean() / 2.0;
            let f_out = g.values.column(j).mean() / 2.0;
            assert!((f_src - f_out).abs() < 0.05, "snp {j}: {f_src} vs {f_out}");
        }
    }

    #[test]
    fn resampling_deterministic() {
        let src = small_source(4);
        let a = sample_genotypes(&src, 100, 9).unwrap();
        let b = sample_genotypes(&src, 100, 9).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn hadamard_arithmetic() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let h = hadamard_power(&c, 10).unwrap();
        assert!((h[(0, 1)] - 0.9f64.powi(10)).abs() < 1e-12);
        assert_eq!(h[(0, 0)], 1.0);
        assert_eq!(hadamard_power(&c, 1).unwrap(), c);
    }

    #[test]
    fn hadamard_monotone_and_psd() {
        let c = nested_block_correlation(&[10, 12, 9], 5);
        let mut prev = c.clone();
        for &k in &[10u32, 20, 40, 80] {
            let h = hadamard_power(&c, k).unwrap();
            for i in 0..c.nrows() {
                for j in 0..c.ncols() {
                    if i != j {
                        assert!(h[(i, j)].abs() <= prev[(i, j)].abs() + 1e-12);
                    }
                }
            }
            let min_eig = h
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(min_eig >= -1e-10, "k={k}: min eigenvalue {min_eig}");
            prev = h;
        }
    }

    #[test]
    fn nested_correlation_is_valid() {
        for &p in &[6usize, 31] {
            let sizes = if p == 6 { vec![3, 3] } else { vec![10, 11, 10] };
            let c = nested_block_correlation(&sizes, 11);
            assert_eq!(c.nrows(), p);
            for j in 0..p {
                assert!((c[(j, j)] - 1.0).abs() < 1e-12);
            }
            assert!((&c - c.transpose()).norm() < 1e-12);
            let min_eig = c
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(min_eig >= -1e-10);
        }
    }

    #[test]
    fn null_dataset_matches_target_correlation() {
        let sizes = vec![4, 4];
        let corr = nested_block_correlation(&sizes, 13);
        let mut cfg = config_null(8, 21);
        cfg.noise_corr = corr.clone();
        cfg.n = 10_000;
        let ds = simulate_dataset(&cfg).unwrap();
        let y = &ds.y.values;
        let n = y.nrows() as f64;
        for a in 0..8 {
            for b in 0..8 {
                let ca = y.column(a);
                let cb = y.column(b);
                let ma = ca.mean();
                let mb = cb.mean();
                let mut num = 0.0;
                let mut va = 0.0;
                let mut vb = 0.0;
                for i in 0..y.nrows() {
                    num += (ca[i] - ma) * (cb[i] - mb);
                    va += (ca[i] - ma).powi(2);
                    vb += (cb[i] - mb).powi(2);
                }
                let _ = n;
                let r = num / (va * vb).sqrt();
                assert!(
                    (r - corr[(a, b)]).abs() < 0.05,
                    "corr({a},{b}) = {r}, target {}",
                    corr[(a, b)]
                );
            }
        }
    }

    #[test]
    fn planted_effect_and_removal() {
        let src = small_source(6);
        let (c, rho) = select_causal_snp(&src, 0.8).unwrap();
        let cfg = SimulationConfig {
            source_block: src,
            n: 400,
            causal_snps: vec![(c, true)],
            beta_max: 0.5,
            affected_traits: vec![(0, 1.0), (2, -1.0)],
            noise_corr: DMatrix::identity(4, 4),
            corr_power: 1,
            seed: 17,
        };
        let ds = simulate_dataset(&cfg).unwrap();
        assert_eq!(ds.x.n_snps(), 19); // causal column removed
        assert!(!ds.x.snps.iter().any(|s| s.snp_id == ds.truth[0].snp_id));
        let t = &ds.truth[0];
        assert!(t.realized_rho > 0.0 && t.realized_rho <= 1.0);
        assert!((t.realized_rho - rho).abs() < 0.3);
        for &(ti, e) in &t.effects {
            let mag = e.abs();
            assert!(mag >= 0.75 * 0.5 - 1e-12 && mag <= 0.5 + 1e-12);
            if ti == 2 {
                assert!(e < 0.0);
            } else {
                assert!(e > 0.0);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = config_null(5, 33);
        let a = simulate_dataset(&cfg).unwrap();
        let b = simulate_dataset(&cfg).unwrap();
        assert_eq!(a.x.values, b.x.values);
        assert_eq!(a.y.values, b.y.values);
    }

    #[test]
    fn pve_examples() {
        assert!((pve_bound(1.0, 0.5) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(pve_bound(0.0, 0.5), 0.0);
        let b = 0.1;
        assert!(pve_bound(b, 0.4) < 0.5 * b * b);
    }

    #[test]
    fn truth_block_assignment() {
        let src = small_source(7);
        let cfg = SimulationConfig {
            source_block: src,
            n: 100,
            causal_snps: vec![(5, true)],
            beta_max: 0.3,
            affected_traits: vec![(0, 1.0)],
            noise_corr: DMatrix::identity(3, 3),
            corr_power: 1,
            seed: 23,
        };
        let mut ds = simulate_dataset(&cfg).unwrap();
        let part = build_blocks(&ds.x.snps, 0.0005).unwrap();
        assign_truth_blocks(&mut ds.truth, &part, &ds.x.snps);
        let bid = ds.truth[0].block_id.expect("block assigned");
        let blk = &part.blocks[bid];
        // the block must span the causal position's neighborhood
        assert!(ds.x.snps[blk.start].pos_bp <= ds.truth[0].pos_bp + 2000);
    }

    #[test]
    fn causal_index_out_of_range_errors() {
        let mut cfg = config_null(4, 1);
        cfg.causal_snps = vec![(999, false)];
        assert!(simulate_dataset(&cfg).is_err());
    }

    #[test]
    fn ld_source_has_local_correlation() {
        let src = synthetic_ld_source(500, 30, "1", 0, 99);
        let adj = column_correlation(
            &src.values.column(10).into_owned(),
            &src.values.column(11).into_owned(),
        )
        .abs();
        let far = column_correlation(
            &src.values.column(0).into_owned(),
            &src.values.column(29).into_owned(),
        )
        .abs();
        assert!(adj > 0.4, "adjacent correlation {adj}");
        assert!(far < adj, "distant correlation {far} not below adjacent {adj}");
        // dosage alphabet respected
        assert!(src.values.iter().all(|&v| v == 0.0 || v == 1.0 || v == 2.0));
        // MAF within the intended band (loosely)
        for j in 0..30 {
            let f = src.values.column(j).mean() / 2.0;
            assert!(f > 0.02 && f < 0.6, "snp {j} maf {f}");
        }
    }
}
