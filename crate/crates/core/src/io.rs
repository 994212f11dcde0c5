//! File formats.
//!
//! - edge list: one edge per line, whitespace separated `src dst [weight]`,
//!   `#` comment lines and blank lines ignored
//! - features: CSV, row i holds the features of node i
//! - labels: CSV, one column of integers (classes) or reals
//! - masks: CSV, one column of 0/1
//!
//! Reals are written with 17 significant digits so every file reads back to
//! the same bits. All writers go through [`write_atomic`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{DedupPolicy, Graph, Labels, NodeId};

/// Round-trip exact text form of a real.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Writes `contents` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::param(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory values serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value).as_bytes())
}

/// Parsed edge-list file.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub edges: Vec<(NodeId, NodeId)>,
    /// Present when at least one line carries a weight; missing weights are 1.
    pub weights: Option<Vec<f64>>,
    /// External id of each dense node id, when ids were remapped.
    pub id_map: Option<Vec<String>>,
}

impl EdgeList {
    /// One past the largest node id mentioned.
    pub fn min_nodes(&self) -> usize {
        if let Some(m) = &self.id_map {
            return m.len();
        }
        self.edges.iter().map(|&(s, t)| s.max(t) + 1).max().unwrap_or(0)
    }
}

/// Parses edge-list text. With `remap`, ids are arbitrary tokens numbered
/// densely in order of first appearance; otherwise they must be 0-based
/// integers.
pub fn parse_edge_list(text: &str, path: &Path, remap: bool) -> Result<EdgeList> {
    let mut edges = Vec::new();
    let mut weights: Vec<Option<f64>> = Vec::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut names: Vec<String> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(
                path,
                lineno,
                format!("expected `src dst [weight]`, found {} fields", fields.len()),
            ));
        }
        let mut node = |tok: &str| -> Result<usize> {
            if remap {
                let next = names.len();
                Ok(*ids.entry(tok.to_string()).or_insert_with(|| {
                    names.push(tok.to_string());
                    next
                }))
            } else {
                tok.parse::<usize>()
                    .map_err(|_| parse_err(path, lineno, format!("invalid node id `{tok}`")))
            }
        };
        let s = node(fields[0])?;
        let t = node(fields[1])?;
        let w = match fields.get(2) {
            Some(tok) => {
                let w: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("invalid weight `{tok}`")))?;
                if !w.is_finite() || w < 0.0 {
                    return Err(parse_err(path, lineno, format!("weight must be finite and nonnegative, got {tok}")));
                }
                Some(w)
            }
            None => None,
        };
        edges.push((s, t));
        weights.push(w);
    }
    let weights = if weights.iter().any(Option::is_some) {
        Some(weights.into_iter().map(|w| w.unwrap_or(1.0)).collect())
    } else {
        None
    };
    Ok(EdgeList {
        edges,
        weights,
        id_map: remap.then_some(names),
    })
}

pub fn read_edge_list(path: &Path, remap: bool) -> Result<EdgeList> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_edge_list(&text, path, remap)
}

pub fn format_edge_list(g: &Graph) -> String {
    let mut out = String::new();
    for (i, &(s, t)) in g.edges().iter().enumerate() {
        match g.weights() {
            Some(w) => writeln!(out, "{s} {t} {}", fmt_f64(w[i])),
            None => writeln!(out, "{s} {t}"),
        }
        .expect("writing to a String");
    }
    out
}

fn csv_records(path: &Path, skip_header: bool) -> Result<Vec<(usize, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(skip_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(rows)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => parse_err(path, line, format!("{other:?}")),
    }
}

/// Dense feature matrix, one row per node.
pub fn read_features(path: &Path, skip_header: bool) -> Result<DMatrix<f64>> {
    let rows = csv_records(path, skip_header)?;
    let width = rows.first().map_or(0, |r| r.1.len());
    let mut data = Vec::with_capacity(rows.len() * width);
    for (line, rec) in &rows {
        if rec.len() != width {
            return Err(parse_err(
                path,
                *line,
                format!("expected {width} columns, found {}", rec.len()),
            ));
        }
        for tok in rec {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, *line, format!("invalid number `{tok}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, *line, format!("non-finite feature `{tok}`")));
            }
            data.push(v);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), width, &data))
}

pub fn format_features(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn single_column(path: &Path) -> Result<Vec<(usize, String)>> {
    csv_records(path, false)?
        .into_iter()
        .map(|(line, rec)| {
            if rec.len() != 1 {
                Err(parse_err(path, line, format!("expected one column, found {}", rec.len())))
            } else {
                Ok((line, rec.into_iter().next().expect("one column")))
            }
        })
        .collect()
}

/// Integer labels when every row parses as an integer, real labels otherwise.
pub fn read_labels(path: &Path) -> Result<Labels> {
    let rows = single_column(path)?;
    if let Ok(classes) = rows.iter().map(|(_, t)| t.parse::<i64>()).collect::<Result<Vec<_>, _>>() {
        return Ok(Labels::Class(classes));
    }
    rows.iter()
        .map(|(line, t)| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(parse_err(path, *line, format!("invalid label `{t}`"))),
        })
        .collect::<Result<Vec<_>>>()
        .map(Labels::Real)
}

pub fn format_labels(labels: &Labels) -> String {
    let mut out = String::new();
    match labels {
        Labels::Class(c) => c.iter().for_each(|v| writeln!(out, "{v}").expect("String")),
        Labels::Real(r) => r.iter().for_each(|&v| writeln!(out, "{}", fmt_f64(v)).expect("String")),
    }
    out
}

pub fn read_mask(path: &Path) -> Result<Vec<bool>> {
    single_column(path)?
        .into_iter()
        .map(|(line, t)| match t.as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(parse_err(path, line, format!("mask entries must be 0 or 1, found `{t}`"))),
        })
        .collect()
}

pub fn format_mask(mask: &[bool]) -> String {
    mask.iter().map(|&b| if b { "1\n" } else { "0\n" }).collect()
}

/// Paths making up one graph on disk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, serde::Deserialize)]
pub struct GraphFiles {
    pub edges: PathBuf,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// `(mask name, path)` pairs.
    pub masks: Vec<(String, PathBuf)>,
    pub skip_feature_header: bool,
    pub keep_duplicates: bool,
    pub remap_ids: bool,
}

/// Graph plus the external ids of its nodes when they were remapped.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedGraph {
    pub graph: Graph,
    pub id_map: Option<Vec<String>>,
}

/// Reads a graph. The node count comes from the feature file when given,
/// else from the edge list (largest id + 1) or the label file, whichever
/// is larger. Without a feature file every
/// node gets the single feature 1.
pub fn load_graph(files: &GraphFiles) -> Result<LoadedGraph> {
    let el = read_edge_list(&files.edges, files.remap_ids)?;
    let labels = files.labels.as_deref().map(read_labels).transpose()?;
    let features = match &files.features {
        Some(p) => read_features(p, files.skip_feature_header)?,
        None => {
            let n = el.min_nodes().max(labels.as_ref().map_or(0, Labels::len));
            DMatrix::from_element(n, 1, 1.0)
        }
    };
    let policy = if files.keep_duplicates {
        DedupPolicy::Keep
    } else {
        DedupPolicy::Dedup
    };
    let mut graph = Graph::build_weighted(features.nrows(), el.edges, el.weights, features, labels, policy)?;
    for (name, path) in &files.masks {
        graph = graph.with_mask(name.clone(), read_mask(path)?)?;
    }
    Ok(LoadedGraph {
        graph,
        id_map: el.id_map,
    })
}

/// Writes `<stem>.edges`, `<stem>.features.csv` and, when present,
/// `<stem>.labels.csv` and `<stem>.<mask>.mask.csv` into `dir`.
pub fn save_graph(dir: &Path, stem: &str, g: &Graph) -> Result<GraphFiles> {
    let edges = dir.join(format!("{stem}.edges"));
    write_atomic(&edges, format_edge_list(g).as_bytes())?;
    let features = dir.join(format!("{stem}.features.csv"));
    write_atomic(&features, format_features(g.features()).as_bytes())?;
    let labels = match g.labels() {
        Some(l) => {
            let p = dir.join(format!("{stem}.labels.csv"));
            write_atomic(&p, format_labels(l).as_bytes())?;
            Some(p)
        }
        None => None,
    };
    let mut masks = Vec::new();
    for (name, m) in g.masks() {
        let p = dir.join(format!("{stem}.{name}.mask.csv"));
        write_atomic(&p, format_mask(m).as_bytes())?;
        masks.push((name.clone(), p));
    }
    Ok(GraphFiles {
        edges,
        features: Some(features),
        labels,
        masks,
        skip_feature_header: false,
        keep_duplicates: false,
        remap_ids: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("g.edges")
    }

    #[test]
    fn edge_list_parsing() {
        let el = parse_edge_list("# header\n0 1\n\n1 2 0.5\n  2 0  \n", p(), false).unwrap();
        assert_eq!(el.edges, vec![(0, 1), (1, 2), (2, 0)]);
        assert_eq!(el.weights, Some(vec![1.0, 0.5, 1.0]));
        assert_eq!(el.min_nodes(), 3);
        let el = parse_edge_list("0 1\n", p(), false).unwrap();
        assert_eq!(el.weights, None);
    }

    #[test]
    fn edge_list_errors_name_line() {
        let e = parse_edge_list("0 1\n0 x\n", p(), false).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(e.to_string().contains("g.edges"));
        let e = parse_edge_list("# c\n0 1 2 3\n", p(), false).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse_edge_list("0 1 -1\n", p(), false).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn string_ids_remap_in_first_seen_order() {
        let el = parse_edge_list("b a\na c\n", p(), true).unwrap();
        assert_eq!(el.edges, vec![(0, 1), (1, 2)]);
        assert_eq!(el.id_map.as_deref(), Some(&["b".to_string(), "a".into(), "c".into()][..]));
        assert_eq!(el.min_nodes(), 3);
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -0.0, 5e-324] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn files_round_trip() {
        let dir = std::env::temp_dir().join(format!("halfhop-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let g = Graph::build_weighted(
            3,
            vec![(0, 1), (2, 1)],
            Some(vec![0.3, 2.0]),
            DMatrix::from_row_slice(3, 2, &[0.1, 0.2, 1.0 / 3.0, 4.0, -5.5, 1e-17]),
            Some(Labels::Class(vec![0, 2, 1])),
            DedupPolicy::Dedup,
        )
        .unwrap()
        .with_mask("train", vec![true, false, false])
        .unwrap()
        .with_mask("test", vec![false, true, true])
        .unwrap();
        let files = save_graph(&dir, "g", &g).unwrap();
        let back = load_graph(&files).unwrap();
        assert_eq!(back.graph, g);
        assert!(back.id_map.is_none());

        let real = g.with_labels(Labels::Real(vec![0.25, -1.0 / 7.0, 3.0])).unwrap();
        let files = save_graph(&dir, "r", &real).unwrap();
        assert_eq!(load_graph(&files).unwrap().graph, real);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn csv_inputs() {
        let dir = std::env::temp_dir().join(format!("halfhop-csv-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let f = dir.join("f.csv");
        fs::write(&f, "a,b\n1, 2\n3,4\n").unwrap();
        let m = read_features(&f, true).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let e = read_features(&f, false).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
        fs::write(&f, "1,2\n3\n").unwrap();
        assert!(matches!(read_features(&f, false), Err(Error::Parse { line: 2, .. })));

        fs::write(&f, "0\n1\n1\n").unwrap();
        assert_eq!(read_mask(&f).unwrap(), vec![false, true, true]);
        assert_eq!(read_labels(&f).unwrap(), Labels::Class(vec![0, 1, 1]));
        fs::write(&f, "0\n2\n").unwrap();
        assert!(matches!(read_mask(&f), Err(Error::Parse { line: 2, .. })));
        fs::write(&f, "0.5\n2\n").unwrap();
        assert_eq!(read_labels(&f).unwrap(), Labels::Real(vec![0.5, 2.0]));
        assert!(matches!(read_features(&dir.join("missing.csv"), false), Err(Error::Io { .. })));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("halfhop-atomic-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let f = dir.join("x.txt");
        write_atomic(&f, b"one").unwrap();
        write_atomic(&f, b"two").unwrap();
        assert_eq!(fs::read_to_string(&f).unwrap(), "two");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }
}
