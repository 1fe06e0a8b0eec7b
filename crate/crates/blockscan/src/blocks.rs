//! LD-block partitioning by genetic-map gaps and window assembly for the
//! sparse methods.

use std::io::Write;

use crate::error::{Error, Result};
use crate::io::SnpMeta;

/// A contiguous run of SNP columns treated as one testing unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdBlock {
    pub block_id: usize,
    pub chrom: String,
    /// Half-open [start, end) into the genotype column order.
    pub start: usize,
    pub end: usize,
}

impl LdBlock {
    pub fn n_snps(&self) -> usize {
        self.end - self.start
    }

    pub fn indices(&self) -> Vec<usize> {
        (self.start..self.end).collect()
    }
}

#[derive(Debug, Clone)]
pub struct BlockPartition {
    pub blocks: Vec<LdBlock>,
}

/// A run of whole blocks on one chromosome, used by window-based sparse CCA.
#[derive(Debug, Clone)]
pub struct Window {
    pub window_id: usize,
    pub block_ids: Vec<usize>,
    pub total_snps: usize,
}

/// Start a new block at every chromosome start and wherever the cM gap to
/// the previous SNP exceeds `gap_cm`.
pub fn build_blocks(snps: &[SnpMeta], gap_cm: f64) -> Result<BlockPartition> {
    if gap_cm <= 0.0 {
        return Err(Error::Validation("gap_cM must be > 0".into()));
    }
    let mut blocks = Vec::new();
    let mut start = 0usize;
    for i in 1..=snps.len() {
        let boundary = if i == snps.len() {
            true
        } else {
            let (prev, cur) = (&snps[i - 1], &snps[i]);
            if cur.chrom == prev.chrom {
                if cur.pos_bp <= prev.pos_bp {
                    return Err(Error::Validation(format!(
                        "SNPs not sorted by pos_bp at '{}'",
                        cur.snp_id
                    )));
                }
                if cur.pos_cm < prev.pos_cm {
                    return Err(Error::Validation(format!(
                        "pos_cM decreases at '{}'",
                        cur.snp_id
                    )));
                }
                cur.pos_cm - prev.pos_cm > gap_cm
            } else {
                true
            }
        };
        if boundary {
            blocks.push(LdBlock {
                block_id: blocks.len(),
                chrom: snps[start].chrom.clone(),
                start,
                end: i,
            });
            start = i;
        }
    }
    Ok(BlockPartition { blocks })
}

/// Greedy left-to-right accumulation of whole blocks per chromosome: a
/// window closes as soon as it holds at least `min_snps` SNPs; the trailing
/// remainder per chromosome forms a final, possibly undersized, window.
pub fn build_windows(partition: &BlockPartition, min_snps: usize) -> Vec<Window> {
    let min_snps = min_snps.max(1);
    let mut windows: Vec<Window> = Vec::new();
    let mut cur_blocks: Vec<usize> = Vec::new();
    let mut cur_snps = 0usize;
    let mut cur_chrom: Option<&str> = None;
    for b in &partition.blocks {
        if cur_chrom.is_some() && cur_chrom != Some(b.chrom.as_str()) && !cur_blocks.is_empty() {
            windows.push(Window {
                window_id: windows.len(),
                block_ids: std::mem::take(&mut cur_blocks),
                total_snps: cur_snps,
            });
            cur_snps = 0;
        }
        cur_chrom = Some(b.chrom.as_str());
        cur_blocks.push(b.block_id);
        cur_snps += b.n_snps();
        if cur_snps >= min_snps {
            windows.push(Window {
                window_id: windows.len(),
                block_ids: std::mem::take(&mut cur_blocks),
                total_snps: cur_snps,
            });
            cur_snps = 0;
        }
    }
    if !cur_blocks.is_empty() {
        windows.push(Window {
            window_id: windows.len(),
            block_ids: cur_blocks,
            total_snps: cur_snps,
        });
    }
    windows
}

/// Export `blocks.tsv`: block_id, chrom, start_bp, end_bp, n_snps.
pub fn write_partition<W: Write>(
    w: &mut W,
    partition: &BlockPartition,
    snps: &[SnpMeta],
) -> std::io::Result<()> {
    writeln!(w, "block_id\tchrom\tstart_bp\tend_bp\tn_snps")?;
    for b in &partition.blocks {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            b.block_id,
            b.chrom,
            snps[b.start].pos_bp,
            snps[b.end - 1].pos_bp,
            b.n_snps()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snps(positions: &[(&str, f64)]) -> Vec<SnpMeta> {
        positions
            .iter()
            .enumerate()
            .map(|(i, (chrom, cm))| SnpMeta {
                snp_id: format!("rs{i}"),
                chrom: chrom.to_string(),
                pos_bp: (i + 1) as u64 * 100,
                pos_cm: *cm,
            })
            .collect()
    }

    #[test]
    fn gap_rule_splits_blocks() {
        let s = snps(&[("1", 0.000), ("1", 0.005), ("1", 0.020), ("1", 0.025)]);
        let p = build_blocks(&s, 0.01).unwrap();
        assert_eq!(p.blocks.len(), 2);
        assert_eq!((p.blocks[0].start, p.blocks[0].end), (0, 2));
        assert_eq!((p.blocks[1].start, p.blocks[1].end), (2, 4));
    }

    #[test]
    fn tight_spacing_single_block() {
        let s = snps(&[("1", 0.000), ("1", 0.001), ("1", 0.002), ("1", 0.003)]);
        let p = build_blocks(&s, 0.01).unwrap();
        assert_eq!(p.blocks.len(), 1);
        assert_eq!(p.blocks[0].n_snps(), 4);
    }

    #[test]
    fn chromosome_change_forces_boundary() {
        let s = snps(&[("1", 0.000), ("1", 0.001), ("2", 0.000), ("2", 0.001)]);
        let p = build_blocks(&s, 1e18).unwrap();
        assert_eq!(p.blocks.len(), 2);
        assert_eq!(p.blocks[0].chrom, "1");
        assert_eq!(p.blocks[1].chrom, "2");
    }

    #[test]
    fn blocks_cover_all_indices_disjointly() {
        let s = snps(&[
            ("1", 0.0),
            ("1", 0.02),
            ("1", 0.021),
            ("2", 0.0),
            ("2", 0.5),
        ]);
        let p = build_blocks(&s, 0.01).unwrap();
        let mut covered = vec![false; s.len()];
        for b in &p.blocks {
            for i in b.start..b.end {
                assert!(!covered[i], "index {i} in two blocks");
                covered[i] = true;
            }
        }
        assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn zero_gap_one_block_per_snp() {
        let s = snps(&[("1", 0.0), ("1", 0.1), ("1", 0.2)]);
        let p = build_blocks(&s, 1e-12).unwrap();
        assert_eq!(p.blocks.len(), 3);
    }

    #[test]
    fn unsorted_input_errors() {
        let mut s = snps(&[("1", 0.0), ("1", 0.1)]);
        s[1].pos_bp = 50;
        assert!(build_blocks(&s, 0.01).is_err());
    }

    fn partition_with_sizes(sizes: &[usize]) -> BlockPartition {
        let mut blocks = Vec::new();
        let mut start = 0;
        for (i, &sz) in sizes.iter().enumerate() {
            blocks.push(LdBlock {
                block_id: i,
                chrom: "1".into(),
                start,
                end: start + sz,
            });
            start += sz;
        }
        BlockPartition { blocks }
    }

    #[test]
    fn greedy_windows_with_remainder() {
        let p = partition_with_sizes(&[1500, 600, 300]);
        let w = build_windows(&p, 2000);
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].block_ids, vec![0, 1]);
        assert_eq!(w[0].total_snps, 2100);
        assert_eq!(w[1].block_ids, vec![2]);
        assert_eq!(w[1].total_snps, 300);
    }

    #[test]
    fn undersized_single_window() {
        let p = partition_with_sizes(&[5]);
        let w = build_windows(&p, 2000);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].total_snps, 5);
    }

    #[test]
    fn min_one_gives_window_per_block() {
        let p = partition_with_sizes(&[3, 7, 2]);
        let w = build_windows(&p, 1);
        assert_eq!(w.len(), 3);
    }

    #[test]
    fn windows_partition_blocks() {
        let p = partition_with_sizes(&[10, 20, 5, 40, 1, 1]);
        let w = build_windows(&p, 25);
        let mut seen = vec![false; p.blocks.len()];
        for win in &w {
            for &b in &win.block_ids {
                assert!(!seen[b]);
                seen[b] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn windows_never_cross_chromosomes() {
        let mut p = partition_with_sizes(&[10, 10, 10]);
        p.blocks[2].chrom = "2".into();
        let w = build_windows(&p, 1000);
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].block_ids, vec![0, 1]);
        assert_eq!(w[1].block_ids, vec![2]);
    }
}
