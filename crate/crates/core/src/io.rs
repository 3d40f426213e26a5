//! Plain-text graph files.
//!
//! * edges: one undirected edge per line, `u v`, 0-based, whitespace
//!   separated; lines starting with `#` and blank lines are ignored.
//! * features: one node per line, comma-separated floats; row order is node
//!   order.
//! * labels: one non-negative integer per line.
//!
//! The writer emits LF line endings and shortest round-trip float text.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::graph::{Adjacency, Graph, GraphError};
use crate::linalg::Matrix;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file} line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

/// Formats a float so that parsing it back yields the same bits.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn parse_features(text: &str) -> Result<Matrix, IoError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let row = if line.trim().is_empty() {
            Vec::new()
        } else {
            line.split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err("features", lineno, format!("{tok:?}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    "features",
                    lineno,
                    format!("row has {} values, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    Ok(Matrix::from_rows(&rows).expect("row widths checked"))
}

pub fn parse_edges(text: &str, n: usize) -> Result<Adjacency, IoError> {
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let mut next = |what: &str| -> Result<usize, IoError> {
            let tok = toks
                .next()
                .ok_or_else(|| parse_err("edges", lineno, format!("missing {what}")))?;
            tok.parse::<usize>()
                .map_err(|e| parse_err("edges", lineno, format!("{tok:?}: {e}")))
        };
        let (u, v) = (next("source")?, next("destination")?);
        if toks.next().is_some() {
            return Err(parse_err("edges", lineno, "expected exactly two indices"));
        }
        for w in [u, v] {
            if w >= n {
                return Err(parse_err(
                    "edges",
                    lineno,
                    format!("node {w} out of range for {n} nodes"),
                ));
            }
        }
        if u == v {
            return Err(parse_err("edges", lineno, format!("self-loop on node {u}")));
        }
        edges.push((u, v));
    }
    Ok(Adjacency::from_edges(n, edges)?)
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>, IoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| parse_err("labels", i + 1, format!("{l:?}: {e}")))
        })
        .collect()
}

/// Builds a graph from file contents. The node count is the number of
/// feature rows; the class count is one more than the largest label.
pub fn graph_from_text(
    edges: &str,
    features: &str,
    labels: Option<&str>,
) -> Result<Graph, IoError> {
    let x = parse_features(features)?;
    let adjacency = parse_edges(edges, x.rows())?;
    let (labels, classes) = match labels {
        Some(text) => {
            let l = parse_labels(text)?;
            let c = l.iter().max().map_or(0, |m| m + 1);
            (Some(l), c)
        }
        None => (None, 0),
    };
    Ok(Graph::new(adjacency, x, labels, classes)?)
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<Graph, IoError> {
    let labels = label_path.map(read).transpose()?;
    graph_from_text(&read(edge_path)?, &read(feature_path)?, labels.as_deref())
}

pub fn edges_to_text(adjacency: &Adjacency) -> String {
    let mut out = String::new();
    for (u, v) in adjacency.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    out
}

pub fn features_to_text(x: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..x.rows() {
        let row: Vec<String> = x.row(i).iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn labels_to_text(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

/// Writes the graph's edge and feature files, and the label file when the
/// graph has labels and a path is given.
pub fn save_graph(
    g: &Graph,
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<(), IoError> {
    write(edge_path, &edges_to_text(g.adjacency()))?;
    write(feature_path, &features_to_text(g.features()))?;
    if let (Some(path), Some(labels)) = (label_path, g.labels()) {
        write(path, &labels_to_text(labels))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_from_text() {
        let g = graph_from_text("0 1\n1 2", "1,0\n0,1\n1,1\n", None).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.adjacency().edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn duplicates_and_comments() {
        let g = graph_from_text("# header\n0 1\n\n0 1\n1\t0\n", "0\n0\n", None).unwrap();
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn ragged_feature_row_names_line() {
        let err = graph_from_text("", "1,2\n3,4\n5\n", None).unwrap_err();
        match err {
            IoError::Parse { file, line, .. } => {
                assert_eq!(file, "features");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn edge_errors_carry_line_numbers() {
        let x = "0\n0\n";
        for (text, line) in [("0 1\n0 5\n", 2), ("0 0\n", 1), ("0 x\n", 1), ("0\n", 1), ("0 1 1\n", 1)] {
            match graph_from_text(text, x, None).unwrap_err() {
                IoError::Parse { line: l, .. } => assert_eq!(l, line, "{text:?}"),
                other => panic!("unexpected {other}"),
            }
        }
    }

    #[test]
    fn labels_define_class_count() {
        let g = graph_from_text("0 1\n", "0\n0\n0\n", Some("0\n2\n1\n")).unwrap();
        assert_eq!(g.num_classes(), 3);
        assert!(graph_from_text("", "0\n0\n", Some("0\n")).is_err());
    }

    #[test]
    fn float_text_round_trips() {
        for x in [0.1, -2.5, 1e-300, 3.0e20, f64::MIN_POSITIVE, 0.0, 123456.789] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
