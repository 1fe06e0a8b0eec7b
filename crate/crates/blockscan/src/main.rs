//! `blockscan` command-line interface: scan, simulate, calibrate, and
//! report subcommands with deterministic, byte-stable outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use blockscan::blocks::{build_blocks, BlockPartition, LdBlock};
use blockscan::error::Error;
use blockscan::io::{
    align_samples, load_covariates, load_genotypes, load_phenotypes, preprocess,
    write_genotypes_file, write_phenotypes_file, SnpMeta,
};
use blockscan::report::generate_report;
use blockscan::scan::{
    scan_with_threshold, score_partition, write_blocks_scored, write_snp_weights, Method,
    ScanParams,
};
use blockscan::score::{BlockScore, ScoreStatus};
use blockscan::significance::{
    genomewide_threshold, write_null_distribution, write_threshold, ScanResult,
};
use blockscan::simulate::{
    assign_truth_blocks, nested_block_correlation, select_causal_snp, simulate_dataset,
    synthetic_ld_source, write_truth, SimulationConfig,
};

#[derive(Parser)]
#[command(
    name = "blockscan",
    about = "Block-wise genome-wide association scanning for high-dimensional phenotypes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every LD-block, calibrate significance, write scored outputs.
    Scan(ScanArgs),
    /// Generate a simulated dataset with planted effects and truth labels.
    Simulate(SimulateArgs),
    /// Compute the permutation null distribution and threshold only.
    Calibrate(ScanArgs),
    /// Summarize scored runs against a truth set and emit plots.
    Report(ReportArgs),
}

#[derive(Args)]
struct ScanArgs {
    /// Flat key=value config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    geno: Option<PathBuf>,
    #[arg(long)]
    pheno: Option<PathBuf>,
    #[arg(long)]
    covar: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    gap_cm: Option<f64>,
    #[arg(long)]
    window_min_snps: Option<usize>,
    #[arg(long)]
    perms: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    scale_y: Option<bool>,
    #[arg(long)]
    factors_r: Option<usize>,
    /// Comma-separated soft-threshold values; the CV grid is their cross
    /// product, e.g. "0,0.2,0.4".
    #[arg(long)]
    scca_grid: Option<String>,
    #[arg(long)]
    gflasso_lambda: Option<f64>,
    #[arg(long)]
    gflasso_gamma: Option<f64>,
    #[arg(long)]
    corr_cutoff: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat key=value config file describing the simulation.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// blocks_scored.tsv files, one per method.
    #[arg(long, required = true, num_args = 1..)]
    scored: Vec<PathBuf>,
    /// Matching snp_weights.tsv files (optional, same order as --scored).
    #[arg(long, num_args = 0..)]
    weights: Vec<PathBuf>,
    /// truth.tsv with a block_id column.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Scan(args) => run_scan(args, false),
        Command::Calibrate(args) => run_scan(args, true),
        Command::Simulate(args) => run_simulate(args),
        Command::Report(args) => run_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) | Error::RankDeficient { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

/// Flat key=value config: one pair per line, '#' comments, blank lines ok.
fn load_config(path: &Path) -> Result<BTreeMap<String, String>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg: "expected key=value".into(),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_from<T: FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, Error> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v.parse::<T>().map(Some).map_err(|_| {
            Error::Validation(format!("config key '{key}': cannot parse '{v}'"))
        }),
    }
}

struct ResolvedScan {
    method: Method,
    geno: PathBuf,
    pheno: PathBuf,
    covar: Option<PathBuf>,
    out: PathBuf,
    params: ScanParams,
}

fn resolve_scan(args: &ScanArgs) -> Result<ResolvedScan, Error> {
    let cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => BTreeMap::new(),
    };
    let mut params = ScanParams::default();
    params.gap_cm = args
        .gap_cm
        .or(parse_from(&cfg, "gap_cm")?)
        .unwrap_or(params.gap_cm);
    params.window_min_snps = args
        .window_min_snps
        .or(parse_from(&cfg, "window_min_snps")?)
        .unwrap_or(params.window_min_snps);
    params.n_perm = args
        .perms
        .or(parse_from(&cfg, "perms")?)
        .unwrap_or(params.n_perm);
    params.alpha = args
        .alpha
        .or(parse_from(&cfg, "alpha")?)
        .unwrap_or(params.alpha);
    params.seed = args.seed.or(parse_from(&cfg, "seed")?).unwrap_or(0);
    params.threads = args
        .threads
        .or(parse_from(&cfg, "threads")?)
        .unwrap_or(0);
    params.scale_y = args
        .scale_y
        .or(parse_from(&cfg, "scale_y")?)
        .unwrap_or(false);
    params.factors_r = args
        .factors_r
        .or(parse_from(&cfg, "factors_r")?)
        .unwrap_or(params.factors_r);
    params.gflasso_lambda = args.gflasso_lambda.or(parse_from(&cfg, "gflasso_lambda")?);
    params.gflasso_gamma = args.gflasso_gamma.or(parse_from(&cfg, "gflasso_gamma")?);
    params.corr_cutoff = args
        .corr_cutoff
        .or(parse_from(&cfg, "corr_cutoff")?)
        .unwrap_or(params.corr_cutoff);
    if let Some(grid) = args
        .scca_grid
        .clone()
        .or_else(|| cfg.get("scca_grid").cloned())
    {
        let vals: Vec<f64> = grid
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Validation(format!("bad scca grid value '{v}'")))
            })
            .collect::<Result<_, _>>()?;
        if vals.is_empty() {
            return Err(Error::Validation("empty scca grid".into()));
        }
        params.scca.grid = vals
            .iter()
            .flat_map(|&a| vals.iter().map(move |&b| (a, b)))
            .collect();
    }
    let method_str = args
        .method
        .clone()
        .or_else(|| cfg.get("method").cloned())
        .ok_or_else(|| Error::Validation("missing --method".into()))?;
    let method = Method::from_str(&method_str)?;
    let geno = args
        .geno
        .clone()
        .or_else(|| cfg.get("geno").map(PathBuf::from))
        .ok_or_else(|| Error::Validation("missing --geno".into()))?;
    let pheno = args
        .pheno
        .clone()
        .or_else(|| cfg.get("pheno").map(PathBuf::from))
        .ok_or_else(|| Error::Validation("missing --pheno".into()))?;
    let covar = args
        .covar
        .clone()
        .or_else(|| cfg.get("covar").map(PathBuf::from));
    let out = args
        .out
        .clone()
        .or_else(|| cfg.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(ResolvedScan {
        method,
        geno,
        pheno,
        covar,
        out,
        params,
    })
}

fn run_scan(args: ScanArgs, calibrate_only: bool) -> Result<(), Error> {
    let rs = resolve_scan(&args)?;
    let g = load_genotypes(&rs.geno)?;
    let y = load_phenotypes(&rs.pheno)?;
    let c = rs.covar.as_deref().map(load_covariates).transpose()?;
    let (g, y) = align_samples(&g, &y)?;
    let c = c
        .map(|cov| {
            let keep: Vec<usize> = g
                .sample_ids
                .iter()
                .map(|id| {
                    cov.sample_ids
                        .iter()
                        .position(|s| s == id)
                        .ok_or_else(|| {
                            Error::Validation(format!("sample {id} missing from covariates"))
                        })
                })
                .collect::<Result<_, _>>()?;
            Ok::<_, Error>(blockscan::io::CovariateMatrix {
                values: cov.values.select_rows(&keep),
                names: cov.names.clone(),
                sample_ids: g.sample_ids.clone(),
            })
        })
        .transpose()?;
    let (gp, yp) = preprocess(&g, &y, c.as_ref(), rs.params.scale_y)?;
    let partition = build_blocks(&gp.snps, rs.params.gap_cm)?;
    let x_raw = gp_raw(&g, &gp);

    std::fs::create_dir_all(&rs.out).map_err(|e| Error::Io {
        path: rs.out.display().to_string(),
        source: e,
    })?;

    let work = || -> Result<(), Error> {
        if calibrate_only {
            let scorer = |_: &DMatrix<f64>, y_perm: &DMatrix<f64>, part: &BlockPartition| {
                score_partition(rs.method, &gp.values, &x_raw, y_perm, part, &rs.params)
            };
            let (threshold, null) = genomewide_threshold(
                scorer,
                &gp.values,
                &yp.values,
                &partition,
                rs.params.n_perm,
                rs.params.alpha,
                rs.params.seed,
                rs.method.name(),
            )?;
            write_null_distribution(&rs.out.join("null_max_scores.tsv"), &null)?;
            write_threshold(
                &rs.out.join("threshold.tsv"),
                rs.method.name(),
                rs.params.alpha,
                rs.params.n_perm,
                threshold,
            )?;
        } else {
            let (result, _, _) = scan_with_threshold(
                rs.method,
                &gp.values,
                &x_raw,
                &yp.values,
                &partition,
                &rs.params,
            )?;
            write_blocks_scored(
                &rs.out.join("blocks_scored.tsv"),
                &partition,
                &gp.snps,
                rs.method,
                &result,
            )?;
            write_snp_weights(&rs.out.join("snp_weights.tsv"), &partition, &gp.snps, &result)?;
        }
        Ok(())
    };
    if rs.params.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(rs.params.threads)
            .build()
            .map_err(|e| Error::Validation(format!("cannot build thread pool: {e}")))?;
        pool.install(work)
    } else {
        work()
    }
}

/// Raw dosages restricted to the SNPs that survived preprocessing
/// (MANOVA groups on unimputed values).
fn gp_raw(
    g: &blockscan::io::GenotypeMatrix,
    gp: &blockscan::io::GenotypeMatrix,
) -> DMatrix<f64> {
    let keep: Vec<usize> = gp
        .snps
        .iter()
        .map(|s| g.snps.iter().position(|t| t.snp_id == s.snp_id).unwrap())
        .collect();
    g.values.select_columns(&keep)
}

fn run_simulate(args: SimulateArgs) -> Result<(), Error> {
    let cfg = load_config(&args.config)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let seed: u64 = args
        .seed
        .or(parse_from(&cfg, "seed")?)
        .unwrap_or(0);
    let n: usize = parse_from(&cfg, "n")?
        .ok_or_else(|| Error::Validation("simulation config needs n".into()))?;
    let beta_max: f64 = parse_from(&cfg, "beta_max")?.unwrap_or(0.0);
    let corr_power: u32 = parse_from(&cfg, "corr_power")?.unwrap_or(1);
    let gap_cm: f64 = parse_from(&cfg, "gap_cm")?.unwrap_or(0.01);

    // genotype source: a real panel or a synthetic LD fixture
    let source = match cfg.get("geno") {
        Some(p) => load_genotypes(Path::new(p))?,
        None => {
            let rows: usize = parse_from(&cfg, "source_rows")?.unwrap_or(500);
            let snps: usize = parse_from(&cfg, "source_snps")?.unwrap_or(22);
            let src_seed: u64 = parse_from(&cfg, "source_seed")?.unwrap_or(seed ^ 0xa5a5);
            synthetic_ld_source(rows, snps, "1", 1_000_000, src_seed)
        }
    };

    // noise correlation: block-structured fixture over the trait groups
    let block_sizes: Vec<usize> = match cfg.get("trait_blocks") {
        Some(s) => s
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| Error::Validation(format!("bad trait_blocks entry '{v}'")))
            })
            .collect::<Result<_, _>>()?,
        None => {
            let p: usize = parse_from(&cfg, "traits")?.unwrap_or(6);
            vec![p]
        }
    };
    let corr_seed: u64 = parse_from(&cfg, "corr_seed")?.unwrap_or(7);
    let noise_corr = nested_block_correlation(&block_sizes, corr_seed);
    let p: usize = noise_corr.nrows();

    // causal SNP: explicit index, or selected by target tagging correlation
    let causal_snps: Vec<(usize, bool)> = if beta_max > 0.0 {
        let remove: bool = parse_from(&cfg, "remove_causal")?.unwrap_or(true);
        let idx: usize = match parse_from::<usize>(&cfg, "causal_index")? {
            Some(i) => i,
            None => {
                let rho: f64 = parse_from(&cfg, "causal_rho")?.unwrap_or(0.9);
                select_causal_snp(&source, rho)?.0
            }
        };
        vec![(idx, remove)]
    } else {
        vec![]
    };
    let affected_traits: Vec<(usize, f64)> = match cfg.get("affected_traits") {
        Some(s) if beta_max > 0.0 => s
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                let (idx, sign) = match tok.split_once(':') {
                    Some((i, "+")) | Some((i, "+1")) => (i, 1.0),
                    Some((i, "-")) | Some((i, "-1")) => (i, -1.0),
                    Some((_, s)) => {
                        return Err(Error::Validation(format!("bad trait sign '{s}'")))
                    }
                    None => (tok, 1.0),
                };
                let idx: usize = idx
                    .parse()
                    .map_err(|_| Error::Validation(format!("bad trait index '{idx}'")))?;
                if idx >= p {
                    return Err(Error::Validation(format!(
                        "affected trait {idx} out of range for {p} traits"
                    )));
                }
                Ok((idx, sign))
            })
            .collect::<Result<_, _>>()?,
        Some(_) => vec![],
        None if beta_max > 0.0 => vec![(0, 1.0)],
        None => vec![],
    };

    let config = SimulationConfig {
        source_block: source,
        n,
        causal_snps,
        beta_max,
        affected_traits,
        noise_corr,
        corr_power,
        seed,
    };
    let mut ds = simulate_dataset(&config)?;
    let partition = build_blocks(&ds.x.snps, gap_cm)?;
    assign_truth_blocks(&mut ds.truth, &partition, &ds.x.snps);

    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.display().to_string(),
        source: e,
    })?;
    write_genotypes_file(&out.join("geno.tsv"), &ds.x)?;
    write_phenotypes_file(&out.join("pheno.tsv"), &ds.y)?;
    write_truth(&out.join("truth.tsv"), &ds.truth)?;
    Ok(())
}

fn run_report(args: ReportArgs) -> Result<(), Error> {
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut results = Vec::new();
    let mut partition: Option<BlockPartition> = None;
    let mut snps: Vec<SnpMeta> = Vec::new();
    for (i, path) in args.scored.iter().enumerate() {
        let (method, result, part, meta) = read_scored(path)?;
        let weights = args.weights.get(i);
        let result = match weights {
            Some(wp) => attach_weights(result, &part, wp)?,
            None => result,
        };
        if partition.is_none() {
            partition = Some(part);
            snps = meta;
        }
        results.push((method, result));
    }
    let partition = partition.ok_or_else(|| Error::Validation("no scored files".into()))?;
    let truth: Option<Vec<usize>> = args.truth.as_deref().map(read_truth_blocks).transpose()?;
    generate_report(&out, &results, &partition, &snps, truth.as_deref())
}

/// Rebuild a scan result (and a positional partition) from
/// `blocks_scored.tsv`.
fn read_scored(
    path: &Path,
) -> Result<(String, ScanResult, BlockPartition, Vec<SnpMeta>), Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut method = String::new();
    let mut blocks = Vec::new();
    let mut scores = Vec::new();
    let mut rank_scaled = Vec::new();
    let mut significant = Vec::new();
    let mut snps = Vec::new();
    let mut cursor = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 10 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("expected 10 columns, found {}", f.len()),
            });
        }
        let bad = |msg: &str| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg: msg.to_string(),
        };
        let block_id: usize = f[0].parse().map_err(|_| bad("bad block_id"))?;
        let n_snps: usize = f[4].parse().map_err(|_| bad("bad n_snps"))?;
        method = f[5].to_string();
        let score: f64 = match f[6] {
            "NA" => f64::NAN,
            "-inf" => f64::NEG_INFINITY,
            v => v.parse().map_err(|_| bad("bad score"))?,
        };
        let p_value = match f[7] {
            "NA" => None,
            v => Some(v.parse().map_err(|_| bad("bad pvalue"))?),
        };
        let rank: f64 = f[8].parse().map_err(|_| bad("bad rank_scaled"))?;
        let sig: u8 = f[9].parse().map_err(|_| bad("bad significant flag"))?;
        blocks.push(LdBlock {
            block_id,
            chrom: f[1].to_string(),
            start: cursor,
            end: cursor + n_snps,
        });
        let start_bp: u64 = f[2].parse().map_err(|_| bad("bad start_bp"))?;
        for k in 0..n_snps {
            snps.push(SnpMeta {
                snp_id: format!("block{block_id}_snp{k}"),
                chrom: f[1].to_string(),
                pos_bp: start_bp + k as u64,
                pos_cm: 0.0,
            });
        }
        cursor += n_snps;
        let mut bs = BlockScore::scored(score, p_value, vec![0.0; n_snps]).with_block_id(block_id);
        if !score.is_finite() {
            bs.status = ScoreStatus::Untestable;
        }
        scores.push(bs);
        rank_scaled.push(rank);
        if sig == 1 {
            significant.push(block_id);
        }
    }
    if scores.is_empty() {
        return Err(Error::Validation(format!(
            "no scored blocks in {}",
            path.display()
        )));
    }
    Ok((
        method,
        ScanResult {
            scores,
            rank_scaled,
            threshold: None,
            significant,
        },
        BlockPartition { blocks },
        snps,
    ))
}

fn attach_weights(
    mut result: ScanResult,
    partition: &BlockPartition,
    path: &Path,
) -> Result<ScanResult, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut counters = vec![0usize; partition.blocks.len()];
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            continue;
        }
        let block_id: usize = match f[0].parse() {
            Ok(b) => b,
            Err(_) => continue,
        };
        let w: f64 = f[2].parse().unwrap_or(0.0);
        if let Some(s) = result.scores.iter_mut().find(|s| s.block_id == block_id) {
            let k = counters[block_id];
            if k < s.snp_weights.len() {
                s.snp_weights[k] = w;
                counters[block_id] += 1;
            }
        }
    }
    Ok(result)
}

fn read_truth_blocks(path: &Path) -> Result<Vec<usize>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut header: Vec<String> = Vec::new();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            header = line.split('\t').map(|s| s.to_string()).collect();
            continue;
        }
        let col = header
            .iter()
            .position(|h| h == "block_id")
            .ok_or_else(|| Error::Validation("truth file lacks a block_id column".into()))?;
        let f: Vec<&str> = line.split('\t').collect();
        if let Some(v) = f.get(col) {
            if *v == "NA" {
                continue;
            }
            let bid: usize = v.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("bad block_id '{v}'"),
            })?;
            if !out.contains(&bid) {
                out.push(bid);
            }
        }
    }
    Ok(out)
}
