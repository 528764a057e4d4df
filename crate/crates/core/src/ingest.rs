//! Reading expression and interaction exports, drawing negative pairs, and
//! generating synthetic module-structured datasets with known ground truth.
//!
//! Expression files are tab-separated with a header row whose first cell is
//! ignored and whose remaining cells name the conditions. Interaction files
//! have no header by default and at least two columns (`gene_a`, `gene_b`);
//! extra columns are ignored.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::data::{ExpressionMatrix, GeneId, Label, LabeledDataset, PairExample};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, Rng};

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Upper-case every gene name before matching.
    pub uppercase_genes: bool,
    /// Skip the first row of an interaction file.
    pub header: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub raw: usize,
    pub dropped_self: usize,
    pub dropped_unknown: usize,
    pub dropped_duplicate: usize,
    pub kept: usize,
}

pub type CanonicalPair = (GeneId, GeneId);

fn gene(name: &str, opts: ParseOptions) -> Result<GeneId> {
    if opts.uppercase_genes {
        GeneId::new(name.to_uppercase())
    } else {
        GeneId::new(name)
    }
}

fn lines(source: impl BufRead) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    source
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let l = l.map(|mut s| {
                if s.ends_with('\r') {
                    s.pop();
                }
                s
            });
            (i + 1, l)
        })
        .filter(|(_, l)| !matches!(l, Ok(s) if s.is_empty()))
}

fn read_err(e: std::io::Error) -> Error {
    Error::io("<input>", e)
}

pub fn parse_expression_tsv(source: impl BufRead, opts: ParseOptions) -> Result<ExpressionMatrix> {
    let mut rows = lines(source);
    let (_, header) = rows.next().ok_or(Error::EmptyFile)?;
    let header = header.map_err(read_err)?;
    let conditions: Vec<String> = header.split('\t').skip(1).map(str::to_owned).collect();
    let width = conditions.len();
    if width == 0 {
        return Err(Error::RaggedRow {
            line: 1,
            expected: 2,
            found: 1,
        });
    }
    let mut genes = Vec::new();
    let mut values = Vec::new();
    let mut seen = HashSet::new();
    for (line, row) in rows {
        let row = row.map_err(read_err)?;
        let cells: Vec<&str> = row.split('\t').collect();
        if cells.len() != width + 1 {
            return Err(Error::RaggedRow {
                line,
                expected: width + 1,
                found: cells.len(),
            });
        }
        let g = gene(cells[0], opts)?;
        if !seen.insert(g.clone()) {
            return Err(Error::DuplicateGene(g.to_string()));
        }
        for cell in &cells[1..] {
            match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::NonNumeric {
                        line,
                        cell: (*cell).to_owned(),
                    })
                }
            }
        }
        genes.push(g);
    }
    if genes.is_empty() {
        return Err(Error::EmptyFile);
    }
    ExpressionMatrix::new(genes, conditions, values)
}

/// Parses an interaction list against `matrix`, returning canonical,
/// deduplicated pairs in first-seen order.
pub fn parse_interactions_tsv(
    source: impl BufRead,
    matrix: &ExpressionMatrix,
    opts: ParseOptions,
) -> Result<(Vec<CanonicalPair>, IngestStats)> {
    let mut stats = IngestStats::default();
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    let mut skip_header = opts.header;
    for (line, row) in lines(source) {
        let row = row.map_err(read_err)?;
        if std::mem::take(&mut skip_header) {
            continue;
        }
        let mut cells = row.split('\t');
        let (Some(a), Some(b)) = (cells.next(), cells.next()) else {
            return Err(Error::MalformedRow(line));
        };
        let (a, b) = (a.trim(), b.trim());
        if a.is_empty() || b.is_empty() {
            return Err(Error::MalformedRow(line));
        }
        stats.raw += 1;
        let (a, b) = (gene(a, opts)?, gene(b, opts)?);
        if a == b {
            stats.dropped_self += 1;
            continue;
        }
        if !matrix.contains(&a) || !matrix.contains(&b) {
            stats.dropped_unknown += 1;
            continue;
        }
        let pair = crate::data::canonicalize_pair(a, b)?;
        if !seen.insert(pair.clone()) {
            stats.dropped_duplicate += 1;
            continue;
        }
        kept.push(pair);
    }
    if stats.raw == 0 {
        return Err(Error::EmptyFile);
    }
    stats.kept = kept.len();
    Ok((kept, stats))
}

/// Draws `count` distinct non-positive pairs uniformly without replacement.
///
/// Sparse positive sets use rejection sampling over ordered index pairs;
/// once positives plus the request exceed half of the universe, the
/// remaining candidates are enumerated and shuffled instead.
pub fn sample_negatives(
    matrix: &ExpressionMatrix,
    positives: &HashSet<CanonicalPair>,
    count: usize,
    seed: u64,
) -> Result<Vec<CanonicalPair>> {
    let genes = matrix.genes();
    let n = genes.len();
    let universe = n * n.saturating_sub(1) / 2;
    let taken = positives
        .iter()
        .filter(|(a, b)| matrix.contains(a) && matrix.contains(b))
        .count();
    let available = universe - taken;
    if count > available {
        return Err(Error::InsufficientUniverse {
            requested: count,
            available,
        });
    }
    let canonical = |i: usize, j: usize| -> CanonicalPair {
        let (x, y) = (&genes[i], &genes[j]);
        if x < y {
            (x.clone(), y.clone())
        } else {
            (y.clone(), x.clone())
        }
    };
    let mut rng = Rng::new(seed);
    if 2 * (taken + count) > universe {
        let mut candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !positives.contains(&canonical(i, j)))
            .collect();
        rng.shuffle(&mut candidates);
        return Ok(candidates
            .into_iter()
            .take(count)
            .map(|(i, j)| canonical(i, j))
            .collect());
    }
    let mut visited = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let i = rng.below(n as u64) as usize;
        let j = rng.below(n as u64) as usize;
        if i == j {
            continue;
        }
        let key = (i.min(j), i.max(j));
        if visited.contains(&key) {
            continue;
        }
        let pair = canonical(key.0, key.1);
        if positives.contains(&pair) {
            continue;
        }
        visited.insert(key);
        out.push(pair);
    }
    Ok(out)
}

/// Builds a labeled dataset from positive and negative pair lists.
pub fn label_pairs(
    positives: &[CanonicalPair],
    negatives: &[CanonicalPair],
    matrix_ref: &str,
) -> Result<LabeledDataset> {
    let pairs = positives
        .iter()
        .map(|p| (p, Label::Interaction))
        .chain(negatives.iter().map(|p| (p, Label::NoInteraction)))
        .map(|((a, b), label)| PairExample::new(a.clone(), b.clone(), label))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(pairs, matrix_ref)
}

/// Parameters of a synthetic module-structured dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_modules: usize,
    pub genes_per_module: usize,
    /// Number of conditions.
    pub length: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_modules: 10,
            genes_per_module: 10,
            length: 64,
            noise_sigma: 0.5,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let total = self.n_modules * self.genes_per_module;
        if self.n_modules == 0 || self.genes_per_module == 0 || total < 4 {
            return Err(Error::ConfigInvalid(format!(
                "synthetic spec needs at least 4 genes, got {total}"
            )));
        }
        if self.length < 2 {
            return Err(Error::ConfigInvalid("synthetic length must be >= 2".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::ConfigInvalid("noise sigma must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Each module shares a standard-normal latent profile; every member gene is
/// that profile plus `noise_sigma` times independent standard-normal noise.
/// Same-module pairs are positives; an equal number of negatives is sampled.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(ExpressionMatrix, LabeledDataset)> {
    spec.validate()?;
    let mut rng = Rng::new(derive_seed(spec.seed, stream::SYNTH));
    let l = spec.length;
    let mut genes = Vec::with_capacity(spec.n_modules * spec.genes_per_module);
    let mut values = Vec::with_capacity(genes.capacity() * l);
    let mut positives = Vec::new();
    for m in 0..spec.n_modules {
        let latent: Vec<f64> = (0..l).map(|_| rng.normal()).collect();
        let first = genes.len();
        for g in 0..spec.genes_per_module {
            genes.push(GeneId::new(format!("M{m:03}G{g:03}"))?);
            values.extend(latent.iter().map(|s| s + spec.noise_sigma * rng.normal()));
        }
        for i in first..genes.len() {
            for j in i + 1..genes.len() {
                positives.push((genes[i].clone(), genes[j].clone()));
            }
        }
    }
    let conditions = (0..l).map(|c| format!("c{c:04}")).collect();
    let matrix = ExpressionMatrix::new(genes, conditions, values)?;
    let positive_set: HashSet<_> = positives.iter().cloned().collect();
    let negatives = sample_negatives(
        &matrix,
        &positive_set,
        positives.len(),
        derive_seed(spec.seed, stream::NEGATIVES),
    )?;
    let dataset = label_pairs(&positives, &negatives, "synthetic")?;
    Ok((matrix, dataset))
}

/// Groups of genes whose expression rows are bitwise identical (groups of size >= 2).
pub fn identical_rows(matrix: &ExpressionMatrix) -> Vec<Vec<GeneId>> {
    let mut groups: HashMap<Vec<u64>, Vec<GeneId>> = HashMap::new();
    for (i, g) in matrix.genes().iter().enumerate() {
        let key = matrix.row(i).iter().map(|v| v.to_bits()).collect();
        groups.entry(key).or_default().push(g.clone());
    }
    let mut out: Vec<_> = groups.into_values().filter(|g| g.len() > 1).collect();
    out.sort();
    out
}

pub fn write_expression_tsv(matrix: &ExpressionMatrix, mut out: impl Write) -> std::io::Result<()> {
    write!(out, "gene")?;
    for c in matrix.conditions() {
        write!(out, "\t{c}")?;
    }
    writeln!(out)?;
    for (i, g) in matrix.genes().iter().enumerate() {
        write!(out, "{g}")?;
        for v in matrix.row(i) {
            write!(out, "\t{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_pairs_tsv<'a>(
    pairs: impl IntoIterator<Item = (&'a GeneId, &'a GeneId)>,
    mut out: impl Write,
) -> std::io::Result<()> {
    for (a, b) in pairs {
        writeln!(out, "{a}\t{b}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(s: &str) -> GeneId {
        GeneId::new(s).unwrap()
    }

    fn abc_matrix() -> ExpressionMatrix {
        ExpressionMatrix::new(
            vec![g("A"), g("B"), g("C")],
            vec!["x".into(), "y".into()],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap()
    }

    #[test]
    fn parses_expression() {
        let text = "gene\tc1\tc2\tc3\r\nG1\t1\t2\t3\nG2\t-1.5e-2\t0\t4\n";
        let m = parse_expression_tsv(text.as_bytes(), ParseOptions::default()).unwrap();
        assert_eq!(m.n_genes(), 2);
        assert_eq!(m.width(), 3);
        assert_eq!(m.row(1), &[-0.015, 0.0, 4.0]);
    }

    #[test]
    fn expression_errors() {
        let opts = ParseOptions::default();
        assert!(matches!(
            parse_expression_tsv("g\ta\tb\tc\nG1\t1\t2\n".as_bytes(), opts),
            Err(Error::RaggedRow { line: 2, expected: 4, found: 3 })
        ));
        assert!(matches!(
            parse_expression_tsv("g\ta\nG1\tfoo\n".as_bytes(), opts),
            Err(Error::NonNumeric { .. })
        ));
        assert!(matches!(
            parse_expression_tsv("g\ta\nG1\t1\nG1\t2\n".as_bytes(), opts),
            Err(Error::DuplicateGene(_))
        ));
        assert!(matches!(
            parse_expression_tsv("".as_bytes(), opts),
            Err(Error::EmptyFile)
        ));
    }

    #[test]
    fn uppercase_option() {
        let opts = ParseOptions {
            uppercase_genes: true,
            header: false,
        };
        let m = parse_expression_tsv("g\ta\nyal001c\t1\n".as_bytes(), opts).unwrap();
        assert!(m.contains(&g("YAL001C")));
    }

    #[test]
    fn interaction_cleaning() {
        let m = abc_matrix();
        let (kept, stats) =
            parse_interactions_tsv("A\tB\nB\tA\nC\tC\n".as_bytes(), &m, ParseOptions::default())
                .unwrap();
        assert_eq!(kept, vec![(g("A"), g("B"))]);
        assert_eq!(
            stats,
            IngestStats {
                raw: 3,
                dropped_self: 1,
                dropped_unknown: 0,
                dropped_duplicate: 1,
                kept: 1
            }
        );
        let (_, stats) =
            parse_interactions_tsv("A\tX\textra\n".as_bytes(), &m, ParseOptions::default())
                .unwrap();
        assert_eq!(stats.dropped_unknown, 1);
    }

    #[test]
    fn interaction_header_and_errors() {
        let m = abc_matrix();
        let opts = ParseOptions {
            header: true,
            ..Default::default()
        };
        let (kept, stats) = parse_interactions_tsv("a\tb\nC\tA\n".as_bytes(), &m, opts).unwrap();
        assert_eq!(kept, vec![(g("A"), g("C"))]);
        assert_eq!(stats.raw, 1);
        assert!(matches!(
            parse_interactions_tsv("A\n".as_bytes(), &m, ParseOptions::default()),
            Err(Error::MalformedRow(1))
        ));
        assert!(matches!(
            parse_interactions_tsv("".as_bytes(), &m, ParseOptions::default()),
            Err(Error::EmptyFile)
        ));
    }

    #[test]
    fn negatives_exhaust_small_universe() {
        let m = abc_matrix();
        let pos: HashSet<_> = [(g("A"), g("B"))].into_iter().collect();
        let mut neg = sample_negatives(&m, &pos, 2, 1).unwrap();
        neg.sort();
        assert_eq!(neg, vec![(g("A"), g("C")), (g("B"), g("C"))]);
        assert!(matches!(
            sample_negatives(&m, &pos, 3, 1),
            Err(Error::InsufficientUniverse { requested: 3, available: 2 })
        ));
    }

    fn hundred_genes() -> ExpressionMatrix {
        let genes = (0..100).map(|i| g(&format!("G{i:03}"))).collect();
        ExpressionMatrix::new(genes, vec!["c".into()], vec![0.0; 100]).unwrap()
    }

    #[test]
    fn negatives_deterministic_and_disjoint() {
        let m = hundred_genes();
        let a = sample_negatives(&m, &HashSet::new(), 50, 7).unwrap();
        let b = sample_negatives(&m, &HashSet::new(), 50, 7).unwrap();
        assert_eq!(a, b);
        let pos: HashSet<_> = a[..25].iter().cloned().collect();
        let c = sample_negatives(&m, &pos, 200, 9).unwrap();
        let uniq: HashSet<_> = c.iter().cloned().collect();
        assert_eq!(uniq.len(), 200);
        assert!(uniq.is_disjoint(&pos));
        assert!(c.iter().all(|(x, y)| x < y));
    }

    #[test]
    fn negatives_dense_universe_uses_enumeration() {
        let m = hundred_genes();
        let all = sample_negatives(&m, &HashSet::new(), 4950, 3).unwrap();
        let uniq: HashSet<_> = all.iter().cloned().collect();
        assert_eq!(uniq.len(), 4950);
    }

    #[test]
    fn synthetic_counts_and_zero_noise() {
        let spec = SynthSpec {
            noise_sigma: 0.0,
            ..SynthSpec::default()
        };
        let (m, ds) = generate_synthetic(&spec).unwrap();
        assert_eq!(m.n_genes(), 100);
        assert_eq!(ds.count(Label::Interaction), 450);
        assert_eq!(ds.count(Label::NoInteraction), 450);
        assert_eq!(m.get_expression(&g("M003G001")).unwrap(), m.get_expression(&g("M003G007")).unwrap());
        assert_eq!(identical_rows(&m).len(), 10);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SynthSpec::default();
        let (m1, d1) = generate_synthetic(&spec).unwrap();
        let (m2, d2) = generate_synthetic(&spec).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(d1, d2);
        let (m3, _) = generate_synthetic(&SynthSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(m1.values(), m3.values());
    }

    #[test]
    fn synthetic_rejects_tiny_spec() {
        let spec = SynthSpec {
            n_modules: 1,
            genes_per_module: 3,
            ..SynthSpec::default()
        };
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn write_then_parse_round_trip() {
        let (m, ds) = generate_synthetic(&SynthSpec {
            length: 8,
            ..SynthSpec::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_expression_tsv(&m, &mut buf).unwrap();
        let back = parse_expression_tsv(buf.as_slice(), ParseOptions::default()).unwrap();
        assert_eq!(back, m);
        let mut buf = Vec::new();
        write_pairs_tsv(ds.pairs.iter().map(|p| p.key()), &mut buf).unwrap();
        let (kept, stats) = parse_interactions_tsv(buf.as_slice(), &m, ParseOptions::default()).unwrap();
        assert_eq!(stats.kept, ds.len());
        assert_eq!(kept.len(), 900);
    }
}
