//! QM9 extended-XYZ reading and writing.
//!
//! A record is laid out as
//!
//! ```text
//! n_atoms
//! gdb <idx> A B C mu alpha homo lumo gap r2 zpve U0 U H G Cv
//! <element> x y z mulliken_charge        (n_atoms lines)
//! <harmonic frequencies>
//! <SMILES GDB> <SMILES relaxed>
//! <InChI GDB> <InChI relaxed>
//! ```
//!
//! Only the first `n_atoms + 2` lines are required. Numbers may use the
//! Mathematica exponent form `1.234*^-5`.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::{Atom, Element, FeatureLayout, MolecularGraph, Property};
use crate::error::{Error, Result};

pub const HARTREE_TO_MEV: f64 = 27211.386245988;

/// `(property, zero-based token index on the property line, factor to the
/// internal unit)`. Token 0 is the `gdb` tag.
pub const QM9_PROPERTY_COLUMNS: [(Property, usize, f64); 6] = [
    (Property::Alpha, 6, 1.0),
    (Property::Gap, 9, HARTREE_TO_MEV),
    (Property::Homo, 7, HARTREE_TO_MEV),
    (Property::Lumo, 8, HARTREE_TO_MEV),
    (Property::Mu, 5, 1.0),
    (Property::Cv, 16, 1.0),
];

const HOMO_COL: usize = 7;
const LUMO_COL: usize = 8;
const GAP_COL: usize = 9;
const PROPERTY_TOKENS: usize = 17;
const GAP_CHECK_HARTREE: f64 = 1e-6;
pub const MAX_QM9_ATOMS: usize = 29;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ParseOptions {
    pub drop_hydrogens: bool,
    pub layout: FeatureLayout,
}

/// `1.234*^-5` → `1.234e-5`.
pub fn normalize_fortran_exponent(token: &str) -> String {
    token.replace("*^", "e")
}

fn parse_f64(token: &str, line: usize, what: &str) -> Result<f64> {
    let t = normalize_fortran_exponent(token);
    let v: f64 = t
        .parse()
        .map_err(|_| Error::parse(line, format!("cannot parse {what} from {token:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite {what}: {token:?}")));
    }
    Ok(v)
}

/// Parses one record. Line numbers in errors are 1-based within `text`.
pub fn parse_qm9_record(text: &str, opts: &ParseOptions) -> Result<MolecularGraph> {
    parse_record_at(text, 0, opts)
}

fn parse_record_at(text: &str, line_offset: usize, opts: &ParseOptions) -> Result<MolecularGraph> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.iter().all(|l| l.trim().is_empty()) {
        return Err(Error::EmptyRecord);
    }
    let ln = |k: usize| line_offset + k + 1;

    let count_tok = lines[0].trim();
    let n: usize = count_tok
        .parse()
        .map_err(|_| Error::parse(ln(0), format!("malformed atom count {count_tok:?}")))?;
    if n == 0 || n > MAX_QM9_ATOMS {
        return Err(Error::parse(ln(0), format!("atom count {n} outside 1..={MAX_QM9_ATOMS}")));
    }
    if lines.len() < n + 2 {
        return Err(Error::parse(
            ln(lines.len().saturating_sub(1)),
            format!("record declares {n} atoms but has {} lines", lines.len()),
        ));
    }

    let props: Vec<&str> = lines[1].split_whitespace().collect();
    if props.len() < PROPERTY_TOKENS {
        return Err(Error::parse(ln(1), format!("property line has {} fields, expected {PROPERTY_TOKENS}", props.len())));
    }
    let value = |col: usize, what: &str| parse_f64(props[col], ln(1), what);
    let (homo, lumo, gap) = (value(HOMO_COL, "homo")?, value(LUMO_COL, "lumo")?, value(GAP_COL, "gap")?);
    if (gap - (lumo - homo)).abs() > GAP_CHECK_HARTREE {
        return Err(Error::parse(
            ln(1),
            format!("gap {gap} inconsistent with lumo - homo = {} (column map check)", lumo - homo),
        ));
    }
    let mut properties = vec![0.0; Property::ALL.len()];
    for (prop, col, factor) in QM9_PROPERTY_COLUMNS {
        properties[prop.index()] = value(col, prop.name())? * factor;
    }

    let mut atoms = Vec::with_capacity(n);
    for k in 0..n {
        let li = 2 + k;
        let toks: Vec<&str> = lines[li].split_whitespace().collect();
        if toks.len() < 4 {
            return Err(Error::parse(ln(li), format!("atom line has {} fields", toks.len())));
        }
        let element = Element::from_symbol(toks[0])
            .ok_or_else(|| Error::parse(ln(li), format!("unknown element {:?}", toks[0])))?;
        let pos = [
            parse_f64(toks[1], ln(li), "x")?,
            parse_f64(toks[2], ln(li), "y")?,
            parse_f64(toks[3], ln(li), "z")?,
        ];
        if opts.drop_hydrogens && element == Element::H {
            continue;
        }
        atoms.push(Atom::new(element, pos, opts.layout));
    }
    if atoms.is_empty() {
        return Err(Error::parse(ln(0), "no atoms left after filtering"));
    }

    let id = match props.get(1) {
        Some(idx) if props[0] == "gdb" => format!("gdb_{idx}"),
        _ => format!("record@{}", ln(0)),
    };
    let mut g = MolecularGraph::new(id, atoms);
    g.properties = properties;
    Ok(g)
}

/// A record that failed to parse.
#[derive(Clone, Debug, PartialEq)]
pub struct Reject {
    pub source: String,
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct Qm9Load {
    pub graphs: Vec<MolecularGraph>,
    pub rejects: Vec<Reject>,
}

impl Qm9Load {
    fn absorb(&mut self, other: Qm9Load) {
        self.graphs.extend(other.graphs);
        self.rejects.extend(other.rejects);
    }
}

/// Splits `text` into records and parses each. A record starts at any line
/// holding a single unsigned integer.
pub fn parse_qm9_file(text: &str, source: &str, opts: &ParseOptions) -> Qm9Load {
    let lines: Vec<&str> = text.lines().collect();
    let is_count = |l: &str| {
        let t = l.trim();
        !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit())
    };
    let starts: Vec<usize> = (0..lines.len()).filter(|&k| is_count(lines[k])).collect();
    let mut out = Qm9Load::default();
    if starts.is_empty() {
        let line = lines.iter().position(|l| !l.trim().is_empty()).map_or(1, |k| k + 1);
        let message = if text.trim().is_empty() { Error::EmptyRecord.to_string() } else { "no atom count line found".into() };
        out.rejects.push(Reject { source: source.to_string(), line, message });
        return out;
    }
    // Records are delimited by count lines; skip count lines that fall inside
    // the atom block of the previous record.
    let mut k = 0;
    while k < starts.len() {
        let start = starts[k];
        let declared: usize = lines[start].trim().parse().unwrap_or(0);
        let min_end = start + declared + 2;
        let mut next = k + 1;
        while next < starts.len() && starts[next] < min_end {
            next += 1;
        }
        let end = starts.get(next).copied().unwrap_or(lines.len());
        let chunk = lines[start..end].join("\n");
        match parse_record_at(&chunk, start, opts) {
            Ok(g) => out.graphs.push(g),
            Err(e) => {
                let (line, message) = match e {
                    Error::Parse { line, message } => (line, message),
                    other => (start + 1, other.to_string()),
                };
                out.rejects.push(Reject { source: source.to_string(), line, message });
            }
        }
        k = next;
    }
    out
}

fn read_maybe_gz(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut s = String::new();
        GzDecoder::new(&bytes[..])
            .read_to_string(&mut s)
            .map_err(|e| Error::io(path, e))?;
        Ok(s)
    } else {
        String::from_utf8(bytes)
            .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
    }
}

/// Loads a file, or every regular file in a directory in name order.
/// Compressed (gzip) inputs are detected by magic bytes. Unreadable files
/// are reported as rejects. Stops after `limit` graphs when given.
pub fn load_qm9_path(path: &Path, opts: &ParseOptions, limit: Option<usize>) -> Result<Qm9Load> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Qm9Load::default();
    for f in files {
        if limit.is_some_and(|l| out.graphs.len() >= l) {
            break;
        }
        let source = f.display().to_string();
        match read_maybe_gz(&f) {
            Ok(text) => out.absorb(parse_qm9_file(&text, &source, opts)),
            Err(e) => out.rejects.push(Reject { source, line: 0, message: e.to_string() }),
        }
    }
    if let Some(l) = limit {
        out.graphs.truncate(l);
    }
    Ok(out)
}

/// Hartree value whose conversion back to meV reproduces `mev` exactly when
/// such a double exists next to `mev / HARTREE_TO_MEV`.
fn hartree_for(mev: f64) -> f64 {
    let guess = mev / HARTREE_TO_MEV;
    if guess * HARTREE_TO_MEV == mev {
        return guess;
    }
    let mut lo = guess;
    let mut hi = guess;
    for _ in 0..8 {
        lo = next_down(lo);
        hi = next_up(hi);
        if lo * HARTREE_TO_MEV == mev {
            return lo;
        }
        if hi * HARTREE_TO_MEV == mev {
            return hi;
        }
    }
    guess
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

fn next_down(x: f64) -> f64 {
    -next_up(-x)
}

/// Writes a record that [`parse_qm9_record`] reads back to the same atoms,
/// positions and properties. Columns not tracked by the graph are zero.
pub fn to_qm9_record(graph: &MolecularGraph) -> String {
    let mut cols = [0.0f64; PROPERTY_TOKENS];
    for (prop, col, factor) in QM9_PROPERTY_COLUMNS {
        let v = graph.properties.get(prop.index()).copied().unwrap_or(0.0);
        cols[col] = if factor == 1.0 { v } else { hartree_for(v) };
    }
    // Keep the gap self-check satisfied for arbitrary stored values.
    let implied_gap = cols[LUMO_COL] - cols[HOMO_COL];
    if (cols[GAP_COL] - implied_gap).abs() > GAP_CHECK_HARTREE {
        cols[GAP_COL] = implied_gap;
    }
    let mut s = format!("{}\n", graph.atoms.len());
    let index = graph.id.strip_prefix("gdb_").unwrap_or("0");
    s.push_str(&format!("gdb {index}"));
    for v in &cols[2..] {
        s.push_str(&format!("\t{v:?}"));
    }
    s.push('\n');
    for a in &graph.atoms {
        s.push_str(&format!(
            "{}\t{:?}\t{:?}\t{:?}\t0.0\n",
            a.element, a.position[0], a.position[1], a.position[2]
        ));
    }
    s
}
