//! DOT, CSV and SVG renderings of an explanation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::ShapleyExplanation;
use crate::error::{Error, Result};
use crate::molgraph::MolecularGraph;

pub const CSV_HEADER: &str = "edge_src,edge_dst,property,phi";

/// One parsed CSV line.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub src: usize,
    pub dst: usize,
    pub property: String,
    pub phi: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExportPaths {
    pub dot: PathBuf,
    pub csv: PathBuf,
    pub svg: PathBuf,
}

fn check_names(explanation: &ShapleyExplanation, names: &[&str]) -> Result<()> {
    if names.len() != explanation.n_properties() {
        return Err(Error::ExplanationMismatch(format!(
            "{} property names for {} properties",
            names.len(),
            explanation.n_properties()
        )));
    }
    Ok(())
}

/// Rows ordered by edge, then property. Values use the shortest text that
/// parses back to the same float.
pub fn render_csv(explanation: &ShapleyExplanation, names: &[&str]) -> Result<String> {
    check_names(explanation, names)?;
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (e, (a, b)) in explanation.edges.iter().enumerate() {
        for (p, name) in names.iter().enumerate() {
            let _ = writeln!(out, "{a},{b},{name},{:?}", explanation.phi.get(e, p));
        }
    }
    Ok(out)
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::parse(1, format!("expected header {CSV_HEADER:?}"))),
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::parse(k + 2, format!("{what} in {line:?}"));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        rows.push(CsvRow {
            src: f[0].trim().parse().map_err(|_| bad("bad source index"))?,
            dst: f[1].trim().parse().map_err(|_| bad("bad target index"))?,
            property: f[2].trim().to_string(),
            phi: f[3].trim().parse().map_err(|_| bad("bad value"))?,
        });
    }
    Ok(rows)
}

/// Undirected Graphviz graph; edge width and color scale with `Σ_i |φ_i|`
/// relative to the largest edge. A zero explanation renders every edge
/// alike.
pub fn render_dot(graph: &MolecularGraph, explanation: &ShapleyExplanation) -> String {
    let importance = explanation.importance();
    let max = importance.iter().cloned().fold(0.0, f64::max);
    let mut out = String::from("graph explanation {\n  node [shape=circle];\n");
    for (i, a) in graph.atoms.iter().enumerate() {
        let _ = writeln!(out, "  n{i} [label=\"{}{i}\"];", a.element.symbol());
    }
    for (e, (a, b)) in explanation.edges.iter().enumerate() {
        let rel = if max > 0.0 { importance[e] / max } else { 0.0 };
        let width = 1.0 + 4.0 * rel;
        let red = (80.0 + 175.0 * rel).round() as u8;
        let other = (80.0 * (1.0 - rel)).round() as u8;
        let _ = writeln!(
            out,
            "  n{a} -- n{b} [penwidth={width:.3}, color=\"#{red:02x}{other:02x}{other:02x}\", label=\"{:.4}\"];",
            importance[e]
        );
    }
    out.push_str("}\n");
    out
}

/// Bar chart with one panel per property and one bar per edge. Bars grow
/// up for positive and down for negative values, scaled per panel.
pub fn render_svg(explanation: &ShapleyExplanation, names: &[&str]) -> Result<String> {
    check_names(explanation, names)?;
    const BAR: f64 = 14.0;
    const GAP: f64 = 4.0;
    const PANEL_H: f64 = 160.0;
    const MARGIN: f64 = 40.0;
    let n = explanation.n_edges();
    let width = MARGIN * 2.0 + n as f64 * (BAR + GAP);
    let height = MARGIN + names.len() as f64 * (PANEL_H + MARGIN);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\">\n<style>text{{font-family:sans-serif;font-size:10px}}</style>\n"
    );
    for (p, name) in names.iter().enumerate() {
        let top = MARGIN + p as f64 * (PANEL_H + MARGIN);
        let mid = top + PANEL_H / 2.0;
        let col = explanation.phi.column(p);
        let max = col.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let _ = writeln!(out, "<text x=\"{MARGIN:.0}\" y=\"{:.1}\">{name}</text>", top - 8.0);
        let _ = writeln!(
            out,
            "<line x1=\"{MARGIN:.0}\" y1=\"{mid:.1}\" x2=\"{:.1}\" y2=\"{mid:.1}\" stroke=\"#444\"/>",
            width - MARGIN
        );
        for (e, v) in col.iter().enumerate() {
            let h = if max > 0.0 { v.abs() / max * (PANEL_H / 2.0 - 4.0) } else { 0.0 };
            let x = MARGIN + e as f64 * (BAR + GAP);
            let y = if *v >= 0.0 { mid - h } else { mid };
            let fill = if *v >= 0.0 { "#c0392b" } else { "#2e86c1" };
            let (a, b) = explanation.edges[e];
            let _ = writeln!(
                out,
                "<rect class=\"bar\" x=\"{x:.1}\" y=\"{y:.3}\" width=\"{BAR:.0}\" height=\"{h:.3}\" fill=\"{fill}\">\
                 <title>{a}-{b} {name}: {v:?}</title></rect>"
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Writes `<stem>.dot`, `<stem>.csv` and `<stem>.svg` into `dir`.
pub fn export_explanation(
    graph: &MolecularGraph,
    explanation: &ShapleyExplanation,
    names: &[&str],
    dir: &Path,
    stem: &str,
) -> Result<ExportPaths> {
    let paths = ExportPaths {
        dot: dir.join(format!("{stem}.dot")),
        csv: dir.join(format!("{stem}.csv")),
        svg: dir.join(format!("{stem}.svg")),
    };
    let csv = render_csv(explanation, names)?;
    let svg = render_svg(explanation, names)?;
    let dot = render_dot(graph, explanation);
    for (path, text) in [(&paths.dot, dot), (&paths.csv, csv), (&paths.svg, svg)] {
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(paths)
}
