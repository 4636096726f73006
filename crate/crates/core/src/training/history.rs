use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const HISTORY_HEADER: &str = "step,l_dm,l_egnn,qed_loss,l_fidelity,total";

/// One logged step. Disabled terms are `None` and written as empty cells.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub l_dm: Option<f64>,
    pub l_egnn: Option<f64>,
    pub qed_loss: Option<f64>,
    pub l_fidelity: Option<f64>,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub rows: Vec<HistoryRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl History {
    pub fn push(&mut self, row: HistoryRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Values of the named column, skipping empty cells.
    pub fn column(&self, name: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter_map(|r| match name {
                "l_dm" => r.l_dm,
                "l_egnn" => r.l_egnn,
                "qed_loss" => r.qed_loss,
                "l_fidelity" => r.l_fidelity,
                "total" => Some(r.total),
                _ => None,
            })
            .collect()
    }

    /// Columns holding at least one value.
    pub fn active_terms(&self) -> Vec<&'static str> {
        ["l_dm", "l_egnn", "qed_loss", "l_fidelity"].into_iter().filter(|c| !self.column(c).is_empty()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:?}\n",
                r.step,
                cell(r.l_dm),
                cell(r.l_egnn),
                cell(r.qed_loss),
                cell(r.l_fidelity),
                r.total
            ));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(HISTORY_HEADER) {
            return Err(Error::parse(1, format!("expected header {HISTORY_HEADER:?}")));
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::parse(k + 2, format!("bad history row {line:?}"));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let opt = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad())
                }
            };
            rows.push(HistoryRow {
                step: f[0].parse().map_err(|_| bad())?,
                l_dm: opt(f[1])?,
                l_egnn: opt(f[2])?,
                qed_loss: opt(f[3])?,
                l_fidelity: opt(f[4])?,
                total: f[5].parse().map_err(|_| bad())?,
            });
        }
        Ok(Self { rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_empty_cells() {
        let mut h = History::default();
        h.push(HistoryRow { step: 0, l_dm: Some(0.5), l_egnn: None, qed_loss: Some(0.04), l_fidelity: None, total: 0.54 });
        h.push(HistoryRow { step: 1, l_dm: Some(0.25), l_egnn: None, qed_loss: Some(0.0), l_fidelity: None, total: 0.25 });
        let text = h.to_csv();
        assert!(text.contains("0,0.5,,0.04,,0.54"));
        assert_eq!(History::parse_csv(&text).unwrap(), h);
        assert_eq!(h.active_terms(), vec!["l_dm", "qed_loss"]);
    }
}
