//! Loading, quality control, and preprocessing of genotype and phenotype
//! matrices.
//!
//! Genotype files are SNP-major TSV: `snp_id chrom pos_bp pos_cM <sample>...`
//! with cells in {0,1,2,NA}. Phenotype and covariate files are sample-major:
//! `sample_id <trait>...` with numeric cells. Missing genotypes are carried
//! as NaN until [`preprocess`] mean-imputes them.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::fmt::sig9;

/// Per-SNP metadata: identifier, chromosome, physical and genetic positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SnpMeta {
    pub snp_id: String,
    pub chrom: String,
    pub pos_bp: u64,
    pub pos_cm: f64,
}

/// Samples x SNPs additive-coded genotype matrix. Raw entries are in
/// {0,1,2} with NaN for missing; after [`preprocess`] columns are dense,
/// imputed, and centered.
#[derive(Debug, Clone)]
pub struct GenotypeMatrix {
    pub values: DMatrix<f64>,
    pub snps: Vec<SnpMeta>,
    pub sample_ids: Vec<String>,
}

/// Samples x traits phenotype matrix.
#[derive(Debug, Clone)]
pub struct PhenotypeMatrix {
    pub values: DMatrix<f64>,
    pub trait_names: Vec<String>,
    pub sample_ids: Vec<String>,
}

/// Samples x covariates matrix (same file shape as phenotypes).
#[derive(Debug, Clone)]
pub struct CovariateMatrix {
    pub values: DMatrix<f64>,
    pub names: Vec<String>,
    pub sample_ids: Vec<String>,
}

impl GenotypeMatrix {
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }
    pub fn n_snps(&self) -> usize {
        self.values.ncols()
    }

    /// Restrict to a subset of SNP columns (used by QC and block slicing).
    pub fn select_snps(&self, keep: &[usize]) -> GenotypeMatrix {
        GenotypeMatrix {
            values: self.values.select_columns(keep),
            snps: keep.iter().map(|&j| self.snps[j].clone()).collect(),
            sample_ids: self.sample_ids.clone(),
        }
    }

    /// Restrict to a subset of sample rows, in the given order.
    pub fn select_rows(&self, keep: &[usize]) -> GenotypeMatrix {
        GenotypeMatrix {
            values: self.values.select_rows(keep),
            snps: self.snps.clone(),
            sample_ids: keep.iter().map(|&i| self.sample_ids[i].clone()).collect(),
        }
    }
}

impl PhenotypeMatrix {
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }
    pub fn n_traits(&self) -> usize {
        self.values.ncols()
    }

    pub fn select_rows(&self, keep: &[usize]) -> PhenotypeMatrix {
        PhenotypeMatrix {
            values: self.values.select_rows(keep),
            trait_names: self.trait_names.clone(),
            sample_ids: keep.iter().map(|&i| self.sample_ids[i].clone()).collect(),
        }
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>> {
    let f = File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(BufReader::new(f).lines())
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Load a genotype TSV. Missing entries (`NA`) become NaN; validation of
/// per-chromosome position ordering and id uniqueness happens here.
pub fn load_genotypes(path: &Path) -> Result<GenotypeMatrix> {
    let mut lines = open_lines(path)?;
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?
        .map_err(|e| io_err(path, e))?;
    let cols: Vec<&str> = header.trim_end_matches('\n').split('\t').collect();
    if cols.len() < 5 || cols[0] != "snp_id" {
        return Err(parse_err(
            path,
            1,
            "expected header: snp_id\tchrom\tpos_bp\tpos_cM\t<sample_id>...",
        ));
    }
    let sample_ids: Vec<String> = cols[4..].iter().map(|s| s.to_string()).collect();
    let n = sample_ids.len();
    let mut seen_samples = HashSet::new();
    for id in &sample_ids {
        if !seen_samples.insert(id.clone()) {
            return Err(Error::Validation(format!("duplicate sample_id '{id}'")));
        }
    }

    let mut snps: Vec<SnpMeta> = Vec::new();
    let mut data: Vec<f64> = Vec::new(); // SNP-major, transposed below
    let mut seen_ids = HashSet::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != n + 4 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} fields, found {}", n + 4, fields.len()),
            ));
        }
        let meta = SnpMeta {
            snp_id: fields[0].to_string(),
            chrom: fields[1].to_string(),
            pos_bp: fields[2]
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad pos_bp '{}'", fields[2])))?,
            pos_cm: fields[3]
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad pos_cM '{}'", fields[3])))?,
        };
        if meta.pos_cm < 0.0 {
            return Err(parse_err(path, lineno, "negative pos_cM"));
        }
        if !seen_ids.insert(meta.snp_id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate snp_id '{}'",
                meta.snp_id
            )));
        }
        if let Some(prev) = snps.last() {
            if prev.chrom == meta.chrom {
                if meta.pos_bp <= prev.pos_bp {
                    return Err(Error::Validation(format!(
                        "SNP '{}' not in strictly increasing pos_bp order on chromosome {}",
                        meta.snp_id, meta.chrom
                    )));
                }
                if meta.pos_cm < prev.pos_cm {
                    return Err(Error::Validation(format!(
                        "SNP '{}' has decreasing pos_cM on chromosome {}",
                        meta.snp_id, meta.chrom
                    )));
                }
            }
        }
        for cell in &fields[4..] {
            let v = match *cell {
                "0" => 0.0,
                "1" => 1.0,
                "2" => 2.0,
                "NA" => f64::NAN,
                other => {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("genotype cell '{other}' not in {{0,1,2,NA}}"),
                    ))
                }
            };
            data.push(v);
        }
        snps.push(meta);
    }
    let q = snps.len();
    // data is q rows of n entries; transpose into samples x SNPs
    let values = DMatrix::from_fn(n, q, |i, j| data[j * n + i]);
    Ok(GenotypeMatrix {
        values,
        snps,
        sample_ids,
    })
}

fn load_sample_major(path: &Path) -> Result<(DMatrix<f64>, Vec<String>, Vec<String>)> {
    let mut lines = open_lines(path)?;
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?
        .map_err(|e| io_err(path, e))?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 2 || cols[0] != "sample_id" {
        return Err(parse_err(path, 1, "expected header: sample_id\t<name>..."));
    }
    let names: Vec<String> = cols[1..].iter().map(|s| s.to_string()).collect();
    for name in &names {
        if name.is_empty() {
            return Err(Error::Validation("empty column name in header".into()));
        }
    }
    let p = names.len();
    let mut sample_ids = Vec::new();
    let mut seen = HashSet::new();
    let mut data: Vec<f64> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != p + 1 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} fields, found {}", p + 1, fields.len()),
            ));
        }
        let id = fields[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Validation(format!("duplicate sample_id '{id}'")));
        }
        for cell in &fields[1..] {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("non-numeric cell '{cell}'")))?;
            data.push(v);
        }
        sample_ids.push(id);
    }
    let nrows = sample_ids.len();
    let values = DMatrix::from_fn(nrows, p, |i, j| data[i * p + j]);
    Ok((values, names, sample_ids))
}

pub fn load_phenotypes(path: &Path) -> Result<PhenotypeMatrix> {
    let (values, trait_names, sample_ids) = load_sample_major(path)?;
    Ok(PhenotypeMatrix {
        values,
        trait_names,
        sample_ids,
    })
}

pub fn load_covariates(path: &Path) -> Result<CovariateMatrix> {
    let (values, names, sample_ids) = load_sample_major(path)?;
    Ok(CovariateMatrix {
        values,
        names,
        sample_ids,
    })
}

/// Restrict both matrices to the sample intersection, ordered as in `g`.
pub fn align_samples(
    g: &GenotypeMatrix,
    y: &PhenotypeMatrix,
) -> Result<(GenotypeMatrix, PhenotypeMatrix)> {
    let y_index: std::collections::HashMap<&str, usize> = y
        .sample_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut g_keep = Vec::new();
    let mut y_keep = Vec::new();
    for (i, id) in g.sample_ids.iter().enumerate() {
        if let Some(&j) = y_index.get(id.as_str()) {
            g_keep.push(i);
            y_keep.push(j);
        }
    }
    if g_keep.is_empty() {
        return Err(Error::Validation(
            "no samples shared between genotype and phenotype data".into(),
        ));
    }
    Ok((g.select_rows(&g_keep), y.select_rows(&y_keep)))
}

/// Genotype counts (n0, n1, n2) for one SNP column, ignoring missing.
fn genotype_counts(col: nalgebra::DVectorView<f64>) -> Result<[usize; 3]> {
    let mut c = [0usize; 3];
    for &v in col.iter() {
        if v.is_nan() {
            continue;
        }
        if v == 0.0 {
            c[0] += 1;
        } else if v == 1.0 {
            c[1] += 1;
        } else if v == 2.0 {
            c[2] += 1;
        } else {
            return Err(Error::Validation(format!(
                "raw genotype value {v} outside {{0,1,2,NA}}"
            )));
        }
    }
    Ok(c)
}

/// 1-df chi-square Hardy-Weinberg equilibrium p-value from genotype counts.
pub fn hwe_pvalue(counts: [usize; 3]) -> f64 {
    let n = (counts[0] + counts[1] + counts[2]) as f64;
    if n == 0.0 {
        return 1.0;
    }
    let q = (2.0 * counts[2] as f64 + counts[1] as f64) / (2.0 * n);
    if q <= 0.0 || q >= 1.0 {
        return 1.0; // monomorphic: nothing to test
    }
    let expected = [n * (1.0 - q) * (1.0 - q), 2.0 * n * q * (1.0 - q), n * q * q];
    let chi2: f64 = counts
        .iter()
        .zip(expected.iter())
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dist = ChiSquared::new(1.0).expect("df=1 valid");
    1.0 - dist.cdf(chi2)
}

/// Remove SNPs failing minor-allele-frequency or Hardy-Weinberg filters.
pub fn qc_filter(g: &GenotypeMatrix, maf_min: f64, hwe_p_min: f64) -> Result<GenotypeMatrix> {
    let mut keep = Vec::new();
    for j in 0..g.n_snps() {
        let counts = genotype_counts(g.values.column(j).as_view())?;
        let n = (counts[0] + counts[1] + counts[2]) as f64;
        if n == 0.0 {
            continue;
        }
        let q = (2.0 * counts[2] as f64 + counts[1] as f64) / (2.0 * n);
        let maf = q.min(1.0 - q);
        if maf < maf_min {
            continue;
        }
        if hwe_pvalue(counts) < hwe_p_min {
            continue;
        }
        keep.push(j);
    }
    if keep.is_empty() {
        return Err(Error::Validation(
            "all SNPs removed by QC filters".into(),
        ));
    }
    Ok(g.select_snps(&keep))
}

fn center_columns(m: &mut DMatrix<f64>) {
    let n = m.nrows() as f64;
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
}

/// Mean-impute missing genotypes, center everything, optionally scale
/// phenotypes to unit variance, and residualize phenotypes on covariates.
pub fn preprocess(
    g: &GenotypeMatrix,
    y: &PhenotypeMatrix,
    covariates: Option<&CovariateMatrix>,
    scale_y: bool,
) -> Result<(GenotypeMatrix, PhenotypeMatrix)> {
    let n = g.n_samples();
    if n != y.n_samples() {
        return Err(Error::Dimension(format!(
            "genotype rows ({n}) != phenotype rows ({})",
            y.n_samples()
        )));
    }

    // Impute and center genotypes, dropping zero-variance SNPs.
    let mut gv = g.values.clone();
    let mut keep = Vec::new();
    for j in 0..gv.ncols() {
        let mut col = gv.column_mut(j);
        let (mut sum, mut cnt) = (0.0, 0usize);
        for &v in col.iter() {
            if !v.is_nan() {
                sum += v;
                cnt += 1;
            }
        }
        if cnt == 0 {
            eprintln!("warning: SNP '{}' all-missing, dropped", g.snps[j].snp_id);
            continue;
        }
        let mean = sum / cnt as f64;
        for v in col.iter_mut() {
            if v.is_nan() {
                *v = mean;
            }
        }
        let var = col.iter().map(|&v| (v - mean).powi(2)).sum::<f64>();
        if var == 0.0 {
            eprintln!("warning: SNP '{}' zero-variance, dropped", g.snps[j].snp_id);
            continue;
        }
        keep.push(j);
    }
    let g_out = GenotypeMatrix {
        values: gv.select_columns(&keep),
        snps: keep.iter().map(|&j| g.snps[j].clone()).collect(),
        sample_ids: g.sample_ids.clone(),
    };
    let mut gv = g_out.values;
    center_columns(&mut gv);
    let g_out = GenotypeMatrix { values: gv, ..g_out };

    let mut yv = y.values.clone();
    if let Some(c) = covariates {
        if c.values.nrows() != n {
            return Err(Error::Dimension(format!(
                "covariate rows ({}) != sample rows ({n})",
                c.values.nrows()
            )));
        }
        // Residualize each trait on [1, C] by least squares.
        let mut design = DMatrix::zeros(n, c.values.ncols() + 1);
        design.column_mut(0).fill(1.0);
        design.view_mut((0, 1), (n, c.values.ncols())).copy_from(&c.values);
        let svd = design.clone().svd(true, true);
        for k in 0..yv.ncols() {
            let col = yv.column(k).clone_owned();
            let beta = svd
                .solve(&col, 1e-12)
                .map_err(|e| Error::Numerical(e.to_string()))?;
            let resid = col - &design * beta;
            yv.set_column(k, &resid);
        }
    }
    center_columns(&mut yv);
    for k in 0..yv.ncols() {
        let mut col = yv.column_mut(k);
        let var = col.iter().map(|v| v * v).sum::<f64>() / (n as f64 - 1.0);
        if var < 1e-24 {
            return Err(Error::Validation(format!(
                "phenotype '{}' has zero variance after preprocessing",
                y.trait_names[k]
            )));
        }
        if scale_y {
            col /= var.sqrt();
        }
    }
    let y_out = PhenotypeMatrix {
        values: yv,
        trait_names: y.trait_names.clone(),
        sample_ids: y.sample_ids.clone(),
    };
    Ok((g_out, y_out))
}

/// Write a genotype matrix in the SNP-major TSV format read by
/// [`load_genotypes`]. Integral values are written without a decimal point.
pub fn write_genotypes<W: Write>(w: &mut W, g: &GenotypeMatrix) -> std::io::Result<()> {
    write!(w, "snp_id\tchrom\tpos_bp\tpos_cM")?;
    for id in &g.sample_ids {
        write!(w, "\t{id}")?;
    }
    writeln!(w)?;
    for (j, snp) in g.snps.iter().enumerate() {
        write!(
            w,
            "{}\t{}\t{}\t{}",
            snp.snp_id,
            snp.chrom,
            snp.pos_bp,
            sig9(snp.pos_cm)
        )?;
        for i in 0..g.n_samples() {
            let v = g.values[(i, j)];
            if v.is_nan() {
                write!(w, "\tNA")?;
            } else if v == v.round() && v.abs() < 10.0 {
                write!(w, "\t{}", v as i64)?;
            } else {
                write!(w, "\t{}", sig9(v))?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_phenotypes<W: Write>(w: &mut W, y: &PhenotypeMatrix) -> std::io::Result<()> {
    write!(w, "sample_id")?;
    for t in &y.trait_names {
        write!(w, "\t{t}")?;
    }
    writeln!(w)?;
    for i in 0..y.n_samples() {
        write!(w, "{}", y.sample_ids[i])?;
        for j in 0..y.n_traits() {
            write!(w, "\t{}", sig9(y.values[(i, j)]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_genotypes_file(path: &Path, g: &GenotypeMatrix) -> Result<()> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    write_genotypes(&mut w, g).map_err(|e| io_err(path, e))
}

pub fn write_phenotypes_file(path: &Path, y: &PhenotypeMatrix) -> Result<()> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    write_phenotypes(&mut w, y).map_err(|e| io_err(path, e))
}
