//! Permutation-based genome-wide significance: max-statistic null
//! distributions, order-statistic thresholds, scaled block ranks,
//! truth-set summaries, and empirical power at a fixed false-positive rate.

use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::blocks::BlockPartition;
use crate::error::{Error, Result};
use crate::fmt::sig9;
use crate::score::{BlockScore, ScoreStatus};

/// Max block scores across permutation replicates.
#[derive(Debug, Clone)]
pub struct NullDistribution {
    pub max_scores: Vec<f64>,
    pub n_perm: usize,
    pub method: String,
    pub seed: u64,
}

/// Scored blocks with scaled ranks and (optionally) significance calls.
#[derive(Debug, Clone)]
pub struct ScanResult {
    pub scores: Vec<BlockScore>,
    /// One value per block, linearly scaled so the top score maps to 1 and
    /// the bottom to 0; ties share the mean of their positional ranks.
    pub rank_scaled: Vec<f64>,
    pub threshold: Option<f64>,
    pub significant: Vec<usize>,
}

impl ScanResult {
    /// Record the threshold and mark blocks with score strictly above it.
    pub fn apply_threshold(&mut self, threshold: f64) {
        self.threshold = Some(threshold);
        self.significant = self
            .scores
            .iter()
            .filter(|s| s.status == ScoreStatus::Scored && s.score > threshold)
            .map(|s| s.block_id)
            .collect();
    }
}

/// splitmix64 finalizer: decorrelates per-replicate seeds drawn from a
/// single base seed so parallel replicates have independent streams.
pub(crate) fn replicate_seed(seed: u64, replicate: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(replicate.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Return Y with its rows permuted by a seeded uniform permutation.
pub fn permute_rows(y: &DMatrix<f64>, seed: u64) -> DMatrix<f64> {
    let n = y.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut out = DMatrix::zeros(n, y.ncols());
    for (dst, &src) in order.iter().enumerate() {
        out.set_row(dst, &y.row(src));
    }
    out
}

/// Permutation threshold for the genome-wide max block score.
///
/// Each replicate rescoring uses an independently permuted Y; the replicate
/// statistic is the maximum block score. The threshold is the k-th largest
/// replicate maximum with k = floor(alpha * (n_perm + 1)); a block is
/// significant iff its observed score is strictly above the threshold.
pub fn genomewide_threshold<F>(
    scorer: F,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    partition: &BlockPartition,
    n_perm: usize,
    alpha: f64,
    seed: u64,
    method: &str,
) -> Result<(f64, NullDistribution)>
where
    F: Fn(&DMatrix<f64>, &DMatrix<f64>, &BlockPartition) -> Result<Vec<BlockScore>> + Sync,
{
    if n_perm < 1 {
        return Err(Error::Validation("n_perm must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(Error::Validation(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    let k = (alpha * (n_perm + 1) as f64).floor() as usize;
    if k == 0 {
        return Err(Error::Validation(format!(
            "alpha = {alpha} with {n_perm} permutations gives an empty rejection \
             region; increase --perms to at least {}",
            (1.0 / alpha).ceil() as usize
        )));
    }
    let max_scores: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|rep| {
            let y_perm = permute_rows(y, replicate_seed(seed, rep as u64));
            let scores = scorer(x, &y_perm, partition)?;
            Ok(scores
                .iter()
                .filter(|s| s.status == ScoreStatus::Scored)
                .map(|s| s.score)
                .fold(f64::NEG_INFINITY, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut sorted = max_scores.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let threshold = sorted[k - 1];
    Ok((
        threshold,
        NullDistribution {
            max_scores,
            n_perm,
            method: method.to_string(),
            seed,
        },
    ))
}

/// Scale block ranks linearly to [0,1] (top score 1, bottom 0); tied scores
/// share the mean of their positional ranks. All-equal scores rank 0.5.
pub fn rank_blocks(scores: &[BlockScore]) -> Result<ScanResult> {
    let n = scores.len();
    if n < 2 {
        return Err(Error::Validation(format!(
            "ranking needs at least 2 blocks, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].score.partial_cmp(&scores[b].score).unwrap());
    let all_equal = scores
        .iter()
        .all(|s| s.score == scores[0].score || (s.score.is_nan() && scores[0].score.is_nan()));
    let mut rank_scaled = vec![0.0; n];
    if all_equal {
        eprintln!("warning: all {n} block scores equal; every rank set to 0.5");
        rank_scaled.iter_mut().for_each(|r| *r = 0.5);
    } else {
        let denom = (n - 1) as f64;
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && scores[order[j + 1]].score == scores[order[i]].score {
                j += 1;
            }
            let mean_rank = (i..=j).map(|k| k as f64).sum::<f64>() / (j - i + 1) as f64;
            for &idx in &order[i..=j] {
                rank_scaled[idx] = mean_rank / denom;
            }
            i = j + 1;
        }
    }
    Ok(ScanResult {
        scores: scores.to_vec(),
        rank_scaled,
        threshold: None,
        significant: vec![],
    })
}

/// One row of the cross-method truth summary.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub method: String,
    /// Truth blocks for which this method gave the highest rank among the
    /// compared methods (ties credited to every tied method).
    pub best: usize,
    /// Truth blocks with rank_scaled > 0.95.
    pub gt095: usize,
    pub median: f64,
    pub max: f64,
    pub mean: f64,
    /// Truth blocks called significant (when a threshold was applied).
    pub sign: usize,
}

/// Table-style summary of how each method ranked the truth blocks.
pub fn summarize_truth_rankings(
    results: &[(String, ScanResult)],
    truth: &[usize],
) -> Result<Vec<SummaryRow>> {
    if truth.is_empty() {
        return Err(Error::Validation("truth set is empty".into()));
    }
    if results.is_empty() {
        return Err(Error::Validation("no scan results to summarize".into()));
    }
    // rank of each truth block under each method
    let mut ranks = vec![vec![f64::NAN; truth.len()]; results.len()];
    for (mi, (_, res)) in results.iter().enumerate() {
        for (ti, &bid) in truth.iter().enumerate() {
            let pos = res
                .scores
                .iter()
                .position(|s| s.block_id == bid)
                .ok_or_else(|| {
                    Error::Validation(format!("truth block {bid} missing from scan result"))
                })?;
            ranks[mi][ti] = res.rank_scaled[pos];
        }
    }
    let mut rows = Vec::with_capacity(results.len());
    for (mi, (method, res)) in results.iter().enumerate() {
        let r = &ranks[mi];
        let mut best = 0usize;
        for ti in 0..truth.len() {
            let top = (0..results.len())
                .map(|m| ranks[m][ti])
                .fold(f64::NEG_INFINITY, f64::max);
            if r[ti] >= top {
                best += 1;
            }
        }
        let gt095 = r.iter().filter(|&&v| v > 0.95).count();
        let mut sorted = r.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if sorted.len() % 2 == 1 {
            sorted[sorted.len() / 2]
        } else {
            (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
        };
        let max = *sorted.last().unwrap();
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let sign = truth
            .iter()
            .filter(|b| res.significant.contains(b))
            .count();
        rows.push(SummaryRow {
            method: method.clone(),
            best,
            gt095,
            median,
            max,
            mean,
            sign,
        });
    }
    Ok(rows)
}

/// Power at a fixed empirical false-positive rate: the threshold is the
/// k-th largest null score with k = floor(fpr * n_null) (at least 1), and
/// power is the fraction of effect scores strictly above it.
pub fn empirical_power(scores_effect: &[f64], scores_null: &[f64], fpr: f64) -> Result<f64> {
    if scores_effect.is_empty() || scores_null.is_empty() {
        return Err(Error::Validation("empty score list".into()));
    }
    if !(0.0 < fpr && fpr < 1.0) {
        return Err(Error::Validation(format!("fpr must be in (0,1), got {fpr}")));
    }
    let mut sorted = scores_null.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let k = ((fpr * scores_null.len() as f64).floor() as usize).max(1);
    let threshold = sorted[k - 1];
    let above = scores_effect.iter().filter(|&&s| s > threshold).count();
    Ok(above as f64 / scores_effect.len() as f64)
}

/// Write the cross-method summary table (`summary.tsv`).
pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut out = String::from("method\tbest\tgt095\tmedian\tmax\tmean\tsign\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.method,
            r.best,
            r.gt095,
            sig9(r.median),
            sig9(r.max),
            sig9(r.mean),
            r.sign
        ));
    }
    write_file(path, &out)
}

/// Write per-replicate null maxima (`null_max_scores.tsv`).
pub fn write_null_distribution(path: &Path, null: &NullDistribution) -> Result<()> {
    let mut out = String::from("replicate\tmax_score\n");
    for (i, s) in null.max_scores.iter().enumerate() {
        out.push_str(&format!("{i}\t{}\n", sig9(*s)));
    }
    write_file(path, &out)
}

/// Write the calibrated threshold (`threshold.tsv`).
pub fn write_threshold(
    path: &Path,
    method: &str,
    alpha: f64,
    n_perm: usize,
    threshold: f64,
) -> Result<()> {
    let out = format!(
        "method\talpha\tn_perm\tthreshold\n{method}\t{}\t{n_perm}\t{}\n",
        sig9(alpha),
        sig9(threshold)
    );
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::LdBlock;
    use rand_distr::StandardNormal;

    fn score_list(vals: &[f64]) -> Vec<BlockScore> {
        vals.iter()
            .enumerate()
            .map(|(i, &v)| BlockScore::scored(v, None, vec![]).with_block_id(i))
            .collect()
    }

    #[test]
    fn permute_single_row_identity() {
        let y = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        assert_eq!(permute_rows(&y, 7), y);
    }

    #[test]
    fn permute_seeded_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let y = DMatrix::from_fn(20, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        assert_eq!(permute_rows(&y, 3), permute_rows(&y, 3));
        assert_ne!(permute_rows(&y, 3), permute_rows(&y, 4));
    }

    #[test]
    fn permute_preserves_column_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let y = DMatrix::from_fn(50, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let p = permute_rows(&y, 11);
        for j in 0..3 {
            assert!((y.column(j).sum() - p.column(j).sum()).abs() < 1e-10);
            let s2 = |c: nalgebra::DVectorView<f64>| c.iter().map(|v| v * v).sum::<f64>();
            assert!((s2(y.column(j)) - s2(p.column(j))).abs() < 1e-10);
        }
    }

    fn dummy_partition(n_blocks: usize) -> BlockPartition {
        BlockPartition {
            blocks: (0..n_blocks)
                .map(|i| LdBlock {
                    block_id: i,
                    chrom: "1".into(),
                    start: i,
                    end: i + 1,
                })
                .collect(),
        }
    }

    #[test]
    fn threshold_order_statistic_examples() {
        // scorer returns the replicate's permutation "fingerprint" so max
        // scores are 1..=100 across replicates via a rank trick: instead,
        // drive the rule directly through a scorer indexed by permuted data.
        // Simpler: check the rule on hand-built nulls through the public API
        // by scoring a single block whose score equals a per-replicate value.
        let y = DMatrix::from_fn(100, 1, |i, _| i as f64);
        let x = DMatrix::zeros(100, 1);
        let part = dummy_partition(1);
        // score = first element of permuted y; uniform over 0..99 per seed,
        // distinct across replicates is not guaranteed, so instead verify
        // k selection on a deterministic scorer using an atomic counter-free
        // trick: the permutation seed fully determines the score.
        let scorer = |_: &DMatrix<f64>, yp: &DMatrix<f64>, _: &BlockPartition| {
            Ok(vec![BlockScore::scored(yp[(0, 0)], None, vec![]).with_block_id(0)])
        };
        let (thr, null) =
            genomewide_threshold(scorer, &x, &y, &part, 100, 0.05, 9, "test").unwrap();
        let mut sorted = null.max_scores.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(thr, sorted[4]); // k = floor(0.05 * 101) = 5
        let (thr19, null19) =
            genomewide_threshold(scorer, &x, &y, &part, 19, 0.05, 9, "test").unwrap();
        let max19 = null19.max_scores.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(thr19, max19); // k = 1 -> threshold is the null max
    }

    #[test]
    fn threshold_rejects_k_zero() {
        let y = DMatrix::zeros(10, 1);
        let x = DMatrix::zeros(10, 1);
        let part = dummy_partition(1);
        let scorer = |_: &DMatrix<f64>, _: &DMatrix<f64>, _: &BlockPartition| {
            Ok(vec![BlockScore::scored(0.0, None, vec![]).with_block_id(0)])
        };
        let err = genomewide_threshold(scorer, &x, &y, &part, 10, 0.05, 1, "test");
        assert!(err.is_err());
    }

    #[test]
    fn threshold_deterministic_across_thread_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let y = DMatrix::from_fn(40, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = DMatrix::from_fn(40, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let part = dummy_partition(1);
        let scorer = |xb: &DMatrix<f64>, yp: &DMatrix<f64>, _: &BlockPartition| {
            let s = (xb.transpose() * yp).norm();
            Ok(vec![BlockScore::scored(s, None, vec![]).with_block_id(0)])
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                genomewide_threshold(scorer, &x, &y, &part, 30, 0.1, 5, "test").unwrap()
            })
        };
        let (t1, n1) = run(1);
        let (t4, n4) = run(4);
        assert_eq!(t1, t4);
        assert_eq!(n1.max_scores, n4.max_scores);
    }

    #[test]
    fn rank_examples() {
        let r = rank_blocks(&score_list(&[3.2, 5.0, 1.1])).unwrap();
        assert_eq!(r.rank_scaled, vec![0.5, 1.0, 0.0]);
        let r = rank_blocks(&score_list(&[1.0, 1.0, 2.0])).unwrap();
        assert_eq!(r.rank_scaled, vec![0.25, 0.25, 1.0]);
        let r = rank_blocks(&score_list(&[4.0, 4.0, 4.0])).unwrap();
        assert_eq!(r.rank_scaled, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn rank_monotone_invariance() {
        let base = [0.3f64, 2.0, 1.1, 0.7, 5.5];
        let transformed: Vec<f64> = base.iter().map(|v| (3.0 * v).exp()).collect();
        let a = rank_blocks(&score_list(&base)).unwrap();
        let b = rank_blocks(&score_list(&transformed)).unwrap();
        assert_eq!(a.rank_scaled, b.rank_scaled);
    }

    #[test]
    fn power_examples() {
        let null: Vec<f64> = (1..=200).map(|i| i as f64).collect();
        // k = floor(0.05*200) = 10 -> threshold = 10th largest = 191
        let p = empirical_power(&[300.0, 150.0], &null, 0.05).unwrap();
        assert_eq!(p, 0.5);
        let p = empirical_power(&[500.0, 400.0], &null, 0.05).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn power_matches_fpr_under_exchangeability() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let null: Vec<f64> = (0..400).map(|_| rng.sample(StandardNormal)).collect();
        let effect: Vec<f64> = (0..400).map(|_| rng.sample(StandardNormal)).collect();
        let p = empirical_power(&effect, &null, 0.05).unwrap();
        assert!((p - 0.05).abs() < 0.03, "power {p}");
    }

    #[test]
    fn summary_single_method_top_ranked() {
        let mut res = rank_blocks(&score_list(&[1.0, 2.0, 9.0])).unwrap();
        res.apply_threshold(5.0);
        let rows = summarize_truth_rankings(&[("cca".into(), res)], &[2]).unwrap();
        assert_eq!(rows[0].best, 1);
        assert_eq!(rows[0].gt095, 1);
        assert_eq!(rows[0].median, 1.0);
        assert_eq!(rows[0].max, 1.0);
        assert_eq!(rows[0].mean, 1.0);
        assert_eq!(rows[0].sign, 1);
    }

    #[test]
    fn summary_tie_credits_both_methods() {
        let a = rank_blocks(&score_list(&[1.0, 5.0])).unwrap();
        let b = rank_blocks(&score_list(&[2.0, 7.0])).unwrap();
        let rows =
            summarize_truth_rankings(&[("m1".into(), a), ("m2".into(), b)], &[1]).unwrap();
        assert_eq!(rows[0].best, 1);
        assert_eq!(rows[1].best, 1);
    }

    #[test]
    fn summary_bottom_ranked_truth() {
        let res = rank_blocks(&score_list(&[9.0, 2.0, 1.0])).unwrap();
        let rows = summarize_truth_rankings(&[("m".into(), res)], &[2]).unwrap();
        assert_eq!(rows[0].median, 0.0);
        assert_eq!(rows[0].sign, 0);
    }
}
