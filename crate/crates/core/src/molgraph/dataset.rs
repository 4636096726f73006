//! Standardized datasets, split assignment, and the line-delimited cache.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Atom, Edge, Element, FeatureLayout, MolecularGraph, Property};
use crate::error::{Error, Result};

pub const CACHE_FORMAT: &str = "xmpo-dataset";
pub const CACHE_VERSION: u32 = 1;

/// Per-property affine standardization `z = (x - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl PropertyScaler {
    /// Fits mean and population standard deviation per column. Columns with
    /// zero spread get `std = 1` so the transform stays invertible.
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let p = first.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Shape("property vectors of different lengths".into()));
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..p).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
        let std = (0..p)
            .map(|k| {
                let var = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
                let s = var.sqrt();
                if s > 0.0 && s.is_finite() { s } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(p: usize) -> Self {
        Self { mean: vec![0.0; p], std: vec![1.0; p] }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn transform(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(self.mean.iter().zip(&self.std)).map(|(x, (m, s))| (x - m) / s).collect()
    }

    pub fn inverse(&self, standardized: &[f64]) -> Vec<f64> {
        standardized.iter().zip(self.mean.iter().zip(&self.std)).map(|(z, (m, s))| z * s + m).collect()
    }

    /// Scaler restricted to the given property columns.
    pub fn select(&self, columns: &[usize]) -> Self {
        Self {
            mean: columns.iter().map(|&c| self.mean[c]).collect(),
            std: columns.iter().map(|&c| self.std[c]).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub count: usize,
    pub seed: u64,
    pub properties: Vec<String>,
    pub layout: FeatureLayout,
    pub scaler: PropertyScaler,
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    id: String,
    split: Split,
    elements: Vec<Element>,
    positions: Vec<[f64; 3]>,
    edges: Vec<Edge>,
    raw: Vec<f64>,
    standardized: Vec<f64>,
}

/// Graphs with standardized properties, their raw values, split labels and
/// the scaler fitted on the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graphs: Vec<MolecularGraph>,
    pub raw: Vec<Vec<f64>>,
    pub splits: Vec<Split>,
    pub scaler: PropertyScaler,
    pub seed: u64,
    pub layout: FeatureLayout,
}

impl Dataset {
    /// Assigns splits by a seeded shuffle and standardizes with statistics
    /// from the training split. `graphs` carry raw properties.
    pub fn build(
        graphs: Vec<MolecularGraph>,
        seed: u64,
        fractions: SplitFractions,
        layout: FeatureLayout,
    ) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = graphs.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((n as f64 * fractions.train).floor() as usize).clamp(1, n);
        let n_val = ((n as f64 * fractions.val).floor() as usize).min(n - n_train);
        let mut splits = vec![Split::Test; n];
        for (rank, &idx) in order.iter().enumerate() {
            splits[idx] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
        let train_rows: Vec<&[f64]> = graphs
            .iter()
            .zip(&splits)
            .filter(|(_, s)| **s == Split::Train)
            .map(|(g, _)| g.properties.as_slice())
            .collect();
        let scaler = PropertyScaler::fit(&train_rows)?;
        Ok(Self::with_scaler(graphs, splits, scaler, seed, layout))
    }

    pub fn with_scaler(
        graphs: Vec<MolecularGraph>,
        splits: Vec<Split>,
        scaler: PropertyScaler,
        seed: u64,
        layout: FeatureLayout,
    ) -> Self {
        let raw: Vec<Vec<f64>> = graphs.iter().map(|g| g.properties.clone()).collect();
        let graphs = graphs
            .into_iter()
            .map(|mut g| {
                g.properties = scaler.transform(&g.properties);
                g
            })
            .collect();
        Self { graphs, raw, splits, scaler, seed, layout }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn split(&self, which: Split) -> Vec<&MolecularGraph> {
        self.graphs.iter().zip(&self.splits).filter(|(_, s)| **s == which).map(|(g, _)| g).collect()
    }

    pub fn split_indices(&self, which: Split) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.splits[k] == which).collect()
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            format: CACHE_FORMAT.into(),
            version: CACHE_VERSION,
            count: self.len(),
            seed: self.seed,
            properties: Property::ALL.iter().map(|p| p.name().to_string()).collect(),
            layout: self.layout,
            scaler: self.scaler.clone(),
        }
    }

    /// Header line followed by one JSON object per molecule.
    pub fn to_cache_string(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.header())?;
        out.push('\n');
        for (k, g) in self.graphs.iter().enumerate() {
            let rec = CacheRecord {
                id: g.id.clone(),
                split: self.splits[k],
                elements: g.atoms.iter().map(|a| a.element).collect(),
                positions: g.positions(),
                edges: g.edges.clone(),
                raw: self.raw[k].clone(),
                standardized: g.properties.clone(),
            };
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let text = self.to_cache_string()?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing dataset header"))?
            .map_err(|e| Error::io(path, e))?;
        let header: DatasetHeader =
            serde_json::from_str(&header_line).map_err(|e| Error::parse(1, format!("bad header: {e}")))?;
        if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
            return Err(Error::parse(
                1,
                format!("unsupported cache {} v{}", header.format, header.version),
            ));
        }
        let mut graphs = Vec::with_capacity(header.count);
        let mut raw = Vec::with_capacity(header.count);
        let mut splits = Vec::with_capacity(header.count);
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CacheRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(k + 2, format!("bad record: {e}")))?;
            if rec.elements.len() != rec.positions.len() {
                return Err(Error::parse(k + 2, "elements and positions differ in length"));
            }
            let atoms = rec
                .elements
                .iter()
                .zip(&rec.positions)
                .map(|(&e, &p)| Atom::new(e, p, header.layout))
                .collect();
            let mut g = MolecularGraph::new(rec.id, atoms);
            g.edges = rec.edges;
            g.properties = rec.standardized;
            g.validate().map_err(|e| Error::parse(k + 2, e.to_string()))?;
            graphs.push(g);
            raw.push(rec.raw);
            splits.push(rec.split);
        }
        if graphs.len() != header.count {
            return Err(Error::parse(1, format!("header count {} but {} records", header.count, graphs.len())));
        }
        Ok(Self { graphs, raw, splits, scaler: header.scaler, seed: header.seed, layout: header.layout })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaler_round_trips() {
        let rows = [vec![1.0, 10.0], vec![3.0, 10.0], vec![8.0, 10.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let s = PropertyScaler::fit(&refs).unwrap();
        assert_eq!(s.std[1], 1.0);
        for r in &rows {
            let back = s.inverse(&s.transform(r));
            for (a, b) in back.iter().zip(r) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(
            Dataset::build(vec![], 0, SplitFractions::default(), FeatureLayout::default()),
            Err(Error::EmptyDataset)
        ));
    }
}
