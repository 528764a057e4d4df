//! Domain types shared across the pipeline.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A gene identifier: non-empty, whitespace-free, compared case-sensitively.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GeneId(String);

impl GeneId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidGeneId(name));
        }
        Ok(GeneId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for GeneId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        GeneId::new(value)
    }
}

impl From<GeneId> for String {
    fn from(id: GeneId) -> String {
        id.0
    }
}

impl fmt::Display for GeneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Orders two distinct genes lexicographically (byte order).
pub fn canonicalize_pair(a: GeneId, b: GeneId) -> Result<(GeneId, GeneId)> {
    match a.cmp(&b) {
        std::cmp::Ordering::Less => Ok((a, b)),
        std::cmp::Ordering::Greater => Ok((b, a)),
        std::cmp::Ordering::Equal => Err(Error::SelfPair(a.0)),
    }
}

/// Genes x conditions table of expression values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    genes: Vec<GeneId>,
    conditions: Vec<String>,
    values: Vec<f64>,
    index: HashMap<GeneId, usize>,
}

impl ExpressionMatrix {
    /// `values` is row-major, one row per gene.
    pub fn new(genes: Vec<GeneId>, conditions: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let width = conditions.len();
        if width == 0 {
            return Err(Error::ShapeMismatch("matrix needs at least one condition".into()));
        }
        if values.len() != genes.len() * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} genes x {} conditions",
                values.len(),
                genes.len(),
                width
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonNumeric {
                line: i / width + 2,
                cell: values[i].to_string(),
            });
        }
        let mut index = HashMap::with_capacity(genes.len());
        for (i, g) in genes.iter().enumerate() {
            if index.insert(g.clone(), i).is_some() {
                return Err(Error::DuplicateGene(g.to_string()));
            }
        }
        Ok(ExpressionMatrix {
            genes,
            conditions,
            values,
            index,
        })
    }

    /// Number of conditions (`L`).
    pub fn width(&self) -> usize {
        self.conditions.len()
    }

    pub fn n_genes(&self) -> usize {
        self.genes.len()
    }

    pub fn genes(&self) -> &[GeneId] {
        &self.genes
    }

    pub fn conditions(&self) -> &[String] {
        &self.conditions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn contains(&self, gene: &GeneId) -> bool {
        self.index.contains_key(gene)
    }

    pub fn index_of(&self, gene: &GeneId) -> Option<usize> {
        self.index.get(gene).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn get_expression(&self, gene: &GeneId) -> Result<&[f64]> {
        self.index_of(gene)
            .map(|i| self.row(i))
            .ok_or_else(|| Error::UnknownGene(gene.to_string()))
    }

    /// Same genes and conditions, new values.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        ExpressionMatrix {
            genes: self.genes.clone(),
            conditions: self.conditions.clone(),
            values,
            index: self.index.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    NoInteraction = 0,
    Interaction = 1,
}

impl Label {
    /// Class index used by the network's output layer.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Label::NoInteraction),
            1 => Ok(Label::Interaction),
            other => Err(Error::InvalidLabel(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::ConfigInvalid(format!("unknown split {other:?}"))),
        }
    }
}

/// An unordered gene pair, stored with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PairExample {
    a: GeneId,
    b: GeneId,
    pub label: Label,
    pub split: Split,
}

impl PairExample {
    pub fn new(a: GeneId, b: GeneId, label: Label) -> Result<Self> {
        let (a, b) = canonicalize_pair(a, b)?;
        Ok(PairExample {
            a,
            b,
            label,
            split: Split::Unassigned,
        })
    }

    pub fn a(&self) -> &GeneId {
        &self.a
    }

    pub fn b(&self) -> &GeneId {
        &self.b
    }

    pub fn key(&self) -> (&GeneId, &GeneId) {
        (&self.a, &self.b)
    }
}

/// The two network inputs for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    /// Row-major `2 x L`: expression of `a` then of `b`.
    pub stacked: Vec<f64>,
    /// Element-wise product of the two rows.
    pub product: Vec<f64>,
}

impl PairFeatures {
    pub fn from_rows(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::ShapeMismatch(format!(
                "expression rows of length {} and {}",
                a.len(),
                b.len()
            )));
        }
        let mut stacked = Vec::with_capacity(2 * a.len());
        stacked.extend_from_slice(a);
        stacked.extend_from_slice(b);
        let product = a.iter().zip(b).map(|(x, y)| x * y).collect();
        Ok(PairFeatures { stacked, product })
    }

    pub fn width(&self) -> usize {
        self.product.len()
    }
}

/// Labeled pairs indexing into one expression matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub pairs: Vec<PairExample>,
    /// Identifier of the matrix the pairs refer to (usually its file name).
    pub matrix_ref: String,
}

impl LabeledDataset {
    pub fn new(pairs: Vec<PairExample>, matrix_ref: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for p in &pairs {
            if !seen.insert(p.key()) {
                return Err(Error::ConfigInvalid(format!(
                    "duplicate pair ({}, {})",
                    p.a, p.b
                )));
            }
        }
        Ok(LabeledDataset {
            pairs,
            matrix_ref: matrix_ref.into(),
        })
    }

    /// Checks that every gene is present in `matrix`.
    pub fn validate_against(&self, matrix: &ExpressionMatrix) -> Result<()> {
        for p in &self.pairs {
            for g in [&p.a, &p.b] {
                if !matrix.contains(g) {
                    return Err(Error::UnknownGene(g.to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.pairs.iter().filter(|p| p.label == label).count()
    }

    pub fn split(&self, split: Split) -> Vec<&PairExample> {
        self.pairs.iter().filter(|p| p.split == split).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(s: &str) -> GeneId {
        GeneId::new(s).unwrap()
    }

    #[test]
    fn canonical_order() {
        assert_eq!(
            canonicalize_pair(g("YBR001"), g("YAL002")).unwrap(),
            (g("YAL002"), g("YBR001"))
        );
        assert_eq!(canonicalize_pair(g("A"), g("B")).unwrap(), (g("A"), g("B")));
        assert!(matches!(
            canonicalize_pair(g("G1"), g("G1")),
            Err(Error::SelfPair(_))
        ));
    }

    #[test]
    fn gene_ids_reject_whitespace() {
        assert!(GeneId::new("").is_err());
        assert!(GeneId::new("A B").is_err());
        assert_ne!(g("abc"), g("ABC"));
    }

    #[test]
    fn expression_lookup() {
        let m = ExpressionMatrix::new(
            vec![g("G1"), g("G2")],
            vec!["c1".into(), "c2".into(), "c3".into()],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap();
        assert_eq!(m.get_expression(&g("G1")).unwrap(), &[1.0, 2.0, 3.0]);
        assert!(matches!(
            m.get_expression(&g("G9")),
            Err(Error::UnknownGene(_))
        ));
    }

    #[test]
    fn matrix_rejects_duplicates_and_nan() {
        let conds = vec!["c".to_string()];
        assert!(matches!(
            ExpressionMatrix::new(vec![g("A"), g("A")], conds.clone(), vec![1.0, 2.0]),
            Err(Error::DuplicateGene(_))
        ));
        assert!(ExpressionMatrix::new(vec![g("A")], conds, vec![f64::NAN]).is_err());
    }

    #[test]
    fn yeastract_shaped_row_length() {
        let conds: Vec<String> = (0..1012).map(|i| format!("c{i}")).collect();
        let m = ExpressionMatrix::new(vec![g("YAL001C")], conds, vec![0.5; 1012]).unwrap();
        assert_eq!(m.get_expression(&g("YAL001C")).unwrap().len(), 1012);
    }

    #[test]
    fn dataset_rejects_reversed_duplicate() {
        let p1 = PairExample::new(g("A"), g("B"), Label::Interaction).unwrap();
        let p2 = PairExample::new(g("B"), g("A"), Label::NoInteraction).unwrap();
        assert!(LabeledDataset::new(vec![p1, p2], "m").is_err());
    }

    #[test]
    fn features_product() {
        let f = PairFeatures::from_rows(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(f.stacked, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(f.product, vec![3.0, 8.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn canonicalization_is_symmetric(a in "[A-Za-z0-9]{1,8}", b in "[A-Za-z0-9]{1,8}") {
                prop_assume!(a != b);
                let x = canonicalize_pair(g(&a), g(&b)).unwrap();
                let y = canonicalize_pair(g(&b), g(&a)).unwrap();
                prop_assert!(x.0 < x.1);
                prop_assert_eq!(x, y);
            }

            #[test]
            fn product_matches_rows(rows in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..64)) {
                let (a, b): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
                let f = PairFeatures::from_rows(&a, &b).unwrap();
                let l = a.len();
                for i in 0..l {
                    prop_assert_eq!(f.product[i], f.stacked[i] * f.stacked[l + i]);
                }
            }
        }
    }
}
