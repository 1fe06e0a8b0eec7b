//! Report generation: cross-method summary tables and static SVG plots
//! (block-rank scatter and per-block SNP-weight profiles), with all plot
//! data also emitted as TSV.

use std::io::Write as _;
use std::path::Path;

use crate::blocks::BlockPartition;
use crate::error::{Error, Result};
use crate::fmt::sig9;
use crate::io::SnpMeta;
use crate::significance::{summarize_truth_rankings, write_summary, ScanResult, SummaryRow};

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 420.0;
const MARGIN: f64 = 50.0;

fn svg_header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\">\n\
         <rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>\n"
    )
}

fn axes(x_label: &str, y_label: &str) -> String {
    let x0 = MARGIN;
    let y0 = SVG_H - MARGIN;
    let x1 = SVG_W - MARGIN / 2.0;
    let y1 = MARGIN / 2.0;
    format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"14\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 14 {})\">{y_label}</text>\n",
        (x0 + x1) / 2.0,
        SVG_H - 12.0,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    )
}

fn to_px(frac_x: f64, frac_y: f64) -> (f64, f64) {
    let x = MARGIN + frac_x * (SVG_W - 1.5 * MARGIN);
    let y = (SVG_H - MARGIN) - frac_y * (SVG_H - 1.5 * MARGIN);
    (x, y)
}

/// Rank-vs-block-size scatter. The y axis shows -log10(1 - rank + 1e-3)
/// so blocks ranked near 1 are spread apart; truth blocks are drawn as
/// filled red circles, the rest as open gray circles.
pub fn write_rank_scatter_svg(
    path: &Path,
    partition: &BlockPartition,
    result: &ScanResult,
    truth: &[usize],
) -> Result<()> {
    let max_size = partition
        .blocks
        .iter()
        .map(|b| b.n_snps())
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let y_max = -(1e-3f64).log10();
    let mut svg = svg_header();
    svg.push_str(&axes("block size (SNPs)", "-log10(1 - rank)"));
    for (i, s) in result.scores.iter().enumerate() {
        let b = &partition.blocks[s.block_id];
        let fx = b.n_snps() as f64 / max_size;
        let fy = (-(1.0 - result.rank_scaled[i] + 1e-3).log10()) / y_max;
        let (px, py) = to_px(fx, fy.clamp(0.0, 1.0));
        if truth.contains(&s.block_id) {
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"red\"/>\n",
                sig9(px),
                sig9(py)
            ));
        } else {
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"none\" stroke=\"gray\"/>\n",
                sig9(px),
                sig9(py)
            ));
        }
    }
    svg.push_str("</svg>\n");
    write_file(path, &svg)
}

/// TSV data backing the rank scatter.
pub fn write_rank_scatter_tsv(
    path: &Path,
    partition: &BlockPartition,
    result: &ScanResult,
    truth: &[usize],
) -> Result<()> {
    let mut out = String::from("block_id\tn_snps\trank_scaled\tis_truth\n");
    for (i, s) in result.scores.iter().enumerate() {
        let b = &partition.blocks[s.block_id];
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            b.block_id,
            b.n_snps(),
            sig9(result.rank_scaled[i]),
            truth.contains(&s.block_id) as u8
        ));
    }
    write_file(path, &out)
}

/// Per-block SNP-weight profile: weights scaled to [0,1] drawn as a
/// polyline over SNP position within the block.
pub fn write_weight_profile_svg(path: &Path, block_id: usize, weights: &[f64]) -> Result<()> {
    let max = weights.iter().cloned().fold(0.0f64, f64::max);
    let mut svg = svg_header();
    svg.push_str(&axes(
        &format!("SNP index in block {block_id}"),
        "weight (scaled)",
    ));
    if !weights.is_empty() {
        let denom = (weights.len().max(2) - 1) as f64;
        let pts: Vec<String> = weights
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                let fy = if max > 0.0 { w / max } else { 0.0 };
                let (px, py) = to_px(k as f64 / denom, fy);
                format!("{},{}", sig9(px), sig9(py))
            })
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\"/>\n",
            pts.join(" ")
        ));
    }
    svg.push_str("</svg>\n");
    write_file(path, &svg)
}

/// TSV data backing a weight profile.
pub fn write_weight_profile_tsv(
    path: &Path,
    block_id: usize,
    snp_ids: &[&str],
    weights: &[f64],
) -> Result<()> {
    let max = weights.iter().cloned().fold(0.0f64, f64::max);
    let mut out = String::from("block_id\tsnp_index\tsnp_id\tweight_scaled\n");
    for (k, &w) in weights.iter().enumerate() {
        let scaled = if max > 0.0 { w / max } else { 0.0 };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            block_id, k, snp_ids[k], sig9(scaled)
        ));
    }
    write_file(path, &out)
}

/// Emit the full report: `summary.tsv` (truth columns only when a truth set
/// is given), one rank scatter per method, and the weight profile of each
/// method's top-ranked block.
pub fn generate_report(
    out_dir: &Path,
    results: &[(String, ScanResult)],
    partition: &BlockPartition,
    snps: &[SnpMeta],
    truth: Option<&[usize]>,
) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Validation("no scan results to report".into()));
    }
    if let Some(t) = truth {
        for &bid in t {
            if !partition.blocks.iter().any(|b| b.block_id == bid) {
                return Err(Error::Validation(format!(
                    "truth references unknown block {bid}"
                )));
            }
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;

    match truth {
        Some(t) if !t.is_empty() => {
            let rows = summarize_truth_rankings(results, t)?;
            write_summary(&out_dir.join("summary.tsv"), &rows)?;
        }
        _ => {
            // no truth set: only the method and significance-count columns
            let rows: Vec<SummaryRow> = results
                .iter()
                .map(|(m, r)| SummaryRow {
                    method: m.clone(),
                    best: 0,
                    gt095: 0,
                    median: f64::NAN,
                    max: f64::NAN,
                    mean: f64::NAN,
                    sign: r.significant.len(),
                })
                .collect();
            let mut out = String::from("method\tsign\n");
            for r in &rows {
                out.push_str(&format!("{}\t{}\n", r.method, r.sign));
            }
            write_file(&out_dir.join("summary.tsv"), &out)?;
        }
    }

    let truth_ids: Vec<usize> = truth.map(|t| t.to_vec()).unwrap_or_default();
    for (method, result) in results {
        write_rank_scatter_svg(
            &out_dir.join(format!("rank_scatter_{method}.svg")),
            partition,
            result,
            &truth_ids,
        )?;
        write_rank_scatter_tsv(
            &out_dir.join(format!("rank_scatter_{method}.tsv")),
            partition,
            result,
            &truth_ids,
        )?;
        // weight profile of the top-ranked block
        if let Some((i, _)) = result
            .rank_scaled
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        {
            let s = &result.scores[i];
            let b = &partition.blocks[s.block_id];
            let ids: Vec<&str> = (b.start..b.end).map(|j| snps[j].snp_id.as_str()).collect();
            write_weight_profile_svg(
                &out_dir.join(format!("weight_profile_{method}.svg")),
                b.block_id,
                &s.snp_weights,
            )?;
            write_weight_profile_tsv(
                &out_dir.join(format!("weight_profile_{method}.tsv")),
                b.block_id,
                &ids,
                &s.snp_weights,
            )?;
        }
    }
    Ok(())
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
    use crate::score::BlockScore;
    use crate::significance::rank_blocks;

    fn toy() -> (BlockPartition, Vec<SnpMeta>, ScanResult) {
        let partition = BlockPartition {
            blocks: (0..3)
                .map(|i| LdBlock {
                    block_id: i,
                    chrom: "1".into(),
                    start: i * 2,
                    end: i * 2 + 2,
                })
                .collect(),
        };
        let snps: Vec<SnpMeta> = (0..6)
            .map(|j| SnpMeta {
                snp_id: format!("rs{j}"),
                chrom: "1".into(),
                pos_bp: 1000 * (j as u64 + 1),
                pos_cm: j as f64 * 0.001,
            })
            .collect();
        let scores: Vec<BlockScore> = [0.2, 0.9, 0.5]
            .iter()
            .enumerate()
            .map(|(i, &v)| BlockScore::scored(v, None, vec![0.1, 0.8]).with_block_id(i))
            .collect();
        let result = rank_blocks(&scores).unwrap();
        (partition, snps, result)
    }

    #[test]
    fn report_with_truth() {
        let (part, snps, result) = toy();
        let dir = tempfile::tempdir().unwrap();
        generate_report(
            dir.path(),
            &[("cca-block".into(), result)],
            &part,
            &snps,
            Some(&[1]),
        )
        .unwrap();
        let summary = std::fs::read_to_string(dir.path().join("summary.tsv")).unwrap();
        assert!(summary.starts_with("method\tbest\tgt095\tmedian\tmax\tmean\tsign\n"));
        assert!(summary.contains("cca-block\t1\t1\t1\t1\t1\t0"));
        assert!(dir.path().join("rank_scatter_cca-block.svg").exists());
        assert!(dir.path().join("weight_profile_cca-block.svg").exists());
        assert!(dir.path().join("rank_scatter_cca-block.tsv").exists());
    }

    #[test]
    fn report_without_truth() {
        let (part, snps, result) = toy();
        let dir = tempfile::tempdir().unwrap();
        generate_report(dir.path(), &[("pca".into(), result)], &part, &snps, None).unwrap();
        let summary = std::fs::read_to_string(dir.path().join("summary.tsv")).unwrap();
        assert_eq!(summary, "method\tsign\npca\t0\n");
        assert!(dir.path().join("rank_scatter_pca.svg").exists());
    }

    #[test]
    fn report_rejects_unknown_truth_block() {
        let (part, snps, result) = toy();
        let dir = tempfile::tempdir().unwrap();
        let err = generate_report(
            dir.path(),
            &[("pca".into(), result)],
            &part,
            &snps,
            Some(&[99]),
        );
        assert!(err.is_err());
    }

    #[test]
    fn svg_is_valid_and_deterministic() {
        let (part, _snps, result) = toy();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.svg");
        let p2 = dir.path().join("b.svg");
        write_rank_scatter_svg(&p1, &part, &result, &[1]).unwrap();
        write_rank_scatter_svg(&p2, &part, &result, &[1]).unwrap();
        let a = std::fs::read_to_string(&p1).unwrap();
        assert_eq!(a, std::fs::read_to_string(&p2).unwrap());
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<circle").count(), 3);
    }
}
