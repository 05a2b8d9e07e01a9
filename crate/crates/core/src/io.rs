//! Edge-list interchange and atomic file output.
//!
//! The text edge list is one `u v` line per edge in coordinate order, preceded
//! by `# key: value` header comments:
//!
//! ```text
//! # schema: second-degree/edges/1
//! # a: 1
//! # m: 1
//! # n: 4
//! # seed: 42
//! 1 1
//! 2 1
//! ```

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::graph::MultiGraph;

pub const EDGE_LIST_SCHEMA: &str = "second-degree/edges/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeFormat {
    /// Space-separated `u v` lines.
    Text,
    /// Comma-separated `u,v` lines under a `u,v` header row.
    Csv,
    /// A JSON object holding the header fields and an `edges` array.
    Json,
}

/// Provenance recorded at the top of every edge list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeListHeader {
    pub a: f64,
    pub m: u32,
    pub n: u32,
    pub seed: u64,
}

/// Writes `path` through a temporary file in the same directory and renames it
/// into place once `body` has succeeded.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(tmp);
    body(&mut w).map_err(|e| Error::io(path, e))?;
    let tmp = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    // temporary files start out owner-only
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(fs::Permissions::from_mode(0o644))
            .map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_edge_list<W: Write + ?Sized>(
    g: &MultiGraph,
    header: &EdgeListHeader,
    format: EdgeFormat,
    w: &mut W,
) -> io::Result<()> {
    match format {
        EdgeFormat::Text | EdgeFormat::Csv => {
            writeln!(w, "# schema: {EDGE_LIST_SCHEMA}")?;
            writeln!(w, "# a: {}", header.a)?;
            writeln!(w, "# m: {}", header.m)?;
            writeln!(w, "# n: {}", header.n)?;
            writeln!(w, "# seed: {}", header.seed)?;
            let sep = if format == EdgeFormat::Csv {
                writeln!(w, "u,v")?;
                ','
            } else {
                ' '
            };
            for &(u, v) in g.edges() {
                writeln!(w, "{u}{sep}{v}")?;
            }
            Ok(())
        }
        EdgeFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                schema: &'static str,
                #[serde(flatten)]
                header: &'a EdgeListHeader,
                edges: &'a [(u32, u32)],
            }
            let doc = Doc {
                schema: EDGE_LIST_SCHEMA,
                header,
                edges: g.edges(),
            };
            serde_json::to_writer(&mut *w, &doc).map_err(io::Error::other)?;
            writeln!(w)
        }
    }
}

pub fn export_edge_list(
    g: &MultiGraph,
    header: &EdgeListHeader,
    path: &Path,
    format: EdgeFormat,
) -> Result<()> {
    write_atomic(path, |w| write_edge_list(g, header, format, w))
}

fn parse_field<T: std::str::FromStr>(what: &str, line: usize, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::parse(what, format!("line {line}: cannot read {value:?}")))
}

/// Reads a text or CSV edge list. The vertex count comes from the `n` header
/// when present, otherwise from the largest endpoint.
pub fn read_edge_list<R: BufRead>(
    r: R,
    what: &str,
) -> Result<(Option<EdgeListHeader>, MultiGraph)> {
    let (mut a, mut m, mut n, mut seed) = (None, None, None, None);
    let mut edges = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(what, e))?;
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                match key.trim() {
                    "a" => a = Some(parse_field::<f64>(what, line_no, value)?),
                    "m" => m = Some(parse_field::<u32>(what, line_no, value)?),
                    "n" => n = Some(parse_field::<u32>(what, line_no, value)?),
                    "seed" => seed = Some(parse_field::<u64>(what, line_no, value)?),
                    "schema" if value.trim() != EDGE_LIST_SCHEMA => {
                        return Err(Error::parse(
                            what,
                            format!("unknown schema {:?}", value.trim()),
                        ))
                    }
                    _ => {}
                }
            }
            continue;
        }
        if line == "u,v" {
            continue;
        }
        let mut parts = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty());
        let (Some(u), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(
                what,
                format!("line {line_no}: expected two endpoints"),
            ));
        };
        edges.push((
            parse_field::<u32>(what, line_no, u)?,
            parse_field::<u32>(what, line_no, v)?,
        ));
    }
    let vertex_count = match n {
        Some(n) => n,
        None => edges.iter().map(|&(u, v)| u.max(v)).max().unwrap_or(0),
    };
    let header = match (a, m, n, seed) {
        (Some(a), Some(m), Some(n), Some(seed)) => Some(EdgeListHeader { a, m, n, seed }),
        _ => None,
    };
    let g = MultiGraph::new(vertex_count, edges).map_err(|e| Error::parse(what, e.to_string()))?;
    Ok((header, g))
}

pub fn import_edge_list(path: &Path) -> Result<(Option<EdgeListHeader>, MultiGraph)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_edge_list(BufReader::new(file), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_sequence, materialize, ModelParams};
    use crate::stats::count_tables;

    fn fixture() -> MultiGraph {
        MultiGraph::new(4, vec![(1, 1), (2, 1), (3, 2), (4, 3)]).unwrap()
    }

    const HEADER: EdgeListHeader = EdgeListHeader {
        a: 1.0,
        m: 1,
        n: 4,
        seed: 42,
    };

    #[test]
    fn text_layout() {
        let mut buf = Vec::new();
        write_edge_list(&fixture(), &HEADER, EdgeFormat::Text, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data, vec!["1 1", "2 1", "3 2", "4 3"]);
        assert!(text.starts_with("# schema: second-degree/edges/1\n"));
    }

    #[test]
    fn round_trips_preserve_tables() {
        for format in [EdgeFormat::Text, EdgeFormat::Csv] {
            let p = ModelParams::new(0.5, 2, 200).unwrap();
            let g = materialize(&build_sequence(&p, 9).unwrap(), &p).unwrap();
            let header = EdgeListHeader {
                a: 0.5,
                m: 2,
                n: 200,
                seed: 9,
            };
            let mut buf = Vec::new();
            write_edge_list(&g, &header, format, &mut buf).unwrap();
            let (h, back) = read_edge_list(buf.as_slice(), "mem").unwrap();
            assert_eq!(h, Some(header));
            assert_eq!(back, g);
            assert_eq!(count_tables(&back), count_tables(&g));
        }
    }

    #[test]
    fn collapsed_loops_repeat() {
        let p = ModelParams::new(1.0, 2, 2).unwrap();
        let seq = crate::model::XiSequence::from_xi(vec![1, 1, 3, 5], 0).unwrap();
        let g = materialize(&seq, &p).unwrap();
        let mut buf = Vec::new();
        write_edge_list(
            &g,
            &EdgeListHeader {
                a: 1.0,
                m: 2,
                n: 2,
                seed: 0,
            },
            EdgeFormat::Text,
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|&l| l == "1 1").count(), 2);
    }

    #[test]
    fn headerless_input_infers_vertex_count() {
        let (h, g) = read_edge_list("1 1\n2 1\n\n3 2\n".as_bytes(), "mem").unwrap();
        assert!(h.is_none());
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn malformed_lines_are_parse_errors() {
        for bad in [
            "1\n",
            "1 2 3\n",
            "1 x\n",
            "# n: 2\n1 3\n",
            "# schema: other\n",
        ] {
            assert!(
                matches!(
                    read_edge_list(bad.as_bytes(), "mem"),
                    Err(Error::Parse { .. })
                ),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        export_edge_list(&fixture(), &HEADER, &path, EdgeFormat::Text).unwrap();
        let first = fs::read(&path).unwrap();
        export_edge_list(&fixture(), &HEADER, &path, EdgeFormat::Text).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
        let (_, g) = import_edge_list(&path).unwrap();
        assert_eq!(g, fixture());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        let failed = write_atomic(&path, |_| Err(io::Error::other("boom")));
        assert!(matches!(failed, Err(Error::Io { .. })));
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn json_edges() {
        let mut buf = Vec::new();
        write_edge_list(&fixture(), &HEADER, EdgeFormat::Json, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["seed"], 42);
        assert_eq!(v["edges"][0], serde_json::json!([1, 1]));
    }
}
