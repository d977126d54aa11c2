//! Plain-text mesh files.
//!
//! ```text
//! nodes N
//! x y            (N lines)
//! cells M
//! i j k          (M lines, 0-based)
//! boundary B
//! i j tag        (B lines)
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{MeshError, Point, Triangulation};

#[derive(Debug, Error)]
pub enum MeshFileError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
        );
        Self {
            inner: it.peekable(),
            last: 0,
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>), MeshFileError> {
        match self.inner.next() {
            Some((n, l)) => {
                self.last = n;
                Ok((n, l.split_whitespace().collect()))
            }
            None => Err(MeshFileError::Syntax {
                line: self.last + 1,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    }

    fn header(&mut self, keyword: &str) -> Result<usize, MeshFileError> {
        let (line, words) = self.next(keyword)?;
        match words.as_slice() {
            [k, n] if *k == keyword => n.parse().map_err(|_| MeshFileError::Syntax {
                line,
                message: format!("invalid count `{n}`"),
            }),
            _ => Err(MeshFileError::Syntax {
                line,
                message: format!("expected `{keyword} <count>`"),
            }),
        }
    }
}

fn parse<T: std::str::FromStr>(line: usize, word: &str) -> Result<T, MeshFileError> {
    word.parse().map_err(|_| MeshFileError::Syntax {
        line,
        message: format!("cannot parse `{word}`"),
    })
}

pub fn parse_mesh(text: &str) -> Result<Triangulation, MeshFileError> {
    let mut lines = Lines::new(text);
    let n = lines.header("nodes")?;
    let mut vertices: Vec<Point> = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, w) = lines.next("a node")?;
        if w.len() != 2 {
            return Err(MeshFileError::Syntax {
                line,
                message: "expected `x y`".into(),
            });
        }
        vertices.push([parse(line, w[0])?, parse(line, w[1])?]);
    }
    let m = lines.header("cells")?;
    let mut cells = Vec::with_capacity(m);
    for _ in 0..m {
        let (line, w) = lines.next("a cell")?;
        if w.len() != 3 {
            return Err(MeshFileError::Syntax {
                line,
                message: "expected `i j k`".into(),
            });
        }
        let cell: [usize; 3] = [parse(line, w[0])?, parse(line, w[1])?, parse(line, w[2])?];
        if let Some(&v) = cell.iter().find(|&&v| v >= n) {
            return Err(MeshFileError::Syntax {
                line,
                message: format!("vertex index {v} out of range"),
            });
        }
        cells.push(cell);
    }
    let b = lines.header("boundary")?;
    let mut boundary = Vec::with_capacity(b);
    for _ in 0..b {
        let (line, w) = lines.next("a boundary segment")?;
        if w.len() != 3 {
            return Err(MeshFileError::Syntax {
                line,
                message: "expected `i j tag`".into(),
            });
        }
        boundary.push((parse(line, w[0])?, parse(line, w[1])?, w[2].to_string()));
    }
    if let Some((line, _)) = lines.inner.next() {
        return Err(MeshFileError::Syntax {
            line,
            message: "trailing content".into(),
        });
    }
    Ok(Triangulation::new(vertices, cells, &boundary)?)
}

pub fn format_mesh(mesh: &Triangulation) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "nodes {}", mesh.num_vertices());
    for p in mesh.vertices() {
        let _ = writeln!(out, "{:?} {:?}", p[0], p[1]);
    }
    let _ = writeln!(out, "cells {}", mesh.num_cells());
    for c in mesh.cells() {
        let _ = writeln!(out, "{} {} {}", c[0], c[1], c[2]);
    }
    let boundary = mesh.tagged_boundary();
    let _ = writeln!(out, "boundary {}", boundary.len());
    for (a, b, tag) in boundary {
        let _ = writeln!(out, "{a} {b} {tag}");
    }
    out
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Triangulation, MeshFileError> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

pub fn write_mesh(mesh: &Triangulation, path: impl AsRef<Path>) -> Result<(), MeshFileError> {
    std::fs::write(path, format_mesh(mesh))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{structured_square_mesh, DiagonalRule};

    #[test]
    fn round_trip() {
        let t = structured_square_mesh(3, DiagonalRule::CrissCross)
            .map_vertices(|p| [p[0] * 0.7 + 0.1, p[1] / 3.0]);
        let back = parse_mesh(&format_mesh(&t)).unwrap();
        assert_eq!(back.vertices(), t.vertices());
        assert_eq!(back.cells(), t.cells());
        assert_eq!(back.edges(), t.edges());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "nodes 3\n0 0\n1 0\n0 1\ncells 1\n0 1 x\nboundary 0\n";
        match parse_mesh(text) {
            Err(MeshFileError::Syntax { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
        let text = "# comment\nnodes 3\n0 0\n1 0\n\n0 1\ncells 1\n0 1 2\nboundary 1\n0 1 wall\n";
        let t = parse_mesh(text).unwrap();
        assert_eq!(t.boundary_tags(), vec!["dirichlet", "wall"]);
        let text = "nodes 3\n0 0\n1 0\n";
        assert!(matches!(
            parse_mesh(text),
            Err(MeshFileError::Syntax { line: 4, .. })
        ));
        let text = "nodes 3\n0 0\n1 0\n0 1\ncells 1\n0 1 2\nboundary 1\n0 5 wall\n";
        assert!(matches!(parse_mesh(text), Err(MeshFileError::Mesh(_))));
    }
}
