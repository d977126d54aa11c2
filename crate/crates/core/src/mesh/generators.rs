use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Point, Triangulation};

/// How each square of a structured grid is split into triangles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagonalRule {
    /// Every square cut along the diagonal from its lower-left corner.
    Same,
    /// Diagonal direction alternates like a checkerboard.
    Alternating,
    /// Both diagonals, with a vertex at the square's centre (four cells).
    CrissCross,
}

impl std::str::FromStr for DiagonalRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same" => Ok(Self::Same),
            "alternating" => Ok(Self::Alternating),
            "criss-cross" | "crisscross" => Ok(Self::CrissCross),
            other => Err(format!(
                "unknown diagonal rule `{other}` (same|alternating|criss-cross)"
            )),
        }
    }
}

impl std::fmt::Display for DiagonalRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Same => "same",
            Self::Alternating => "alternating",
            Self::CrissCross => "criss-cross",
        })
    }
}

/// Collects cells over a lattice of squares, deduplicating vertices by
/// their lattice coordinates (doubled, so square centres are integral).
struct GridBuilder {
    x0: f64,
    y0: f64,
    hx: f64,
    hy: f64,
    index: HashMap<(i64, i64), usize>,
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
}

impl GridBuilder {
    fn vertex(&mut self, i2: i64, j2: i64) -> usize {
        let next = self.vertices.len();
        *self.index.entry((i2, j2)).or_insert_with(|| {
            self.vertices.push([
                self.x0 + 0.5 * i2 as f64 * self.hx,
                self.y0 + 0.5 * j2 as f64 * self.hy,
            ]);
            next
        })
    }

    fn square(&mut self, i: i64, j: i64, rule: DiagonalRule) {
        let v00 = self.vertex(2 * i, 2 * j);
        let v10 = self.vertex(2 * i + 2, 2 * j);
        let v11 = self.vertex(2 * i + 2, 2 * j + 2);
        let v01 = self.vertex(2 * i, 2 * j + 2);
        match rule {
            DiagonalRule::Same => {
                self.cells.push([v00, v10, v11]);
                self.cells.push([v00, v11, v01]);
            }
            DiagonalRule::Alternating if (i + j) % 2 == 0 => {
                self.cells.push([v00, v10, v11]);
                self.cells.push([v00, v11, v01]);
            }
            DiagonalRule::Alternating => {
                self.cells.push([v00, v10, v01]);
                self.cells.push([v10, v11, v01]);
            }
            DiagonalRule::CrissCross => {
                let c = self.vertex(2 * i + 1, 2 * j + 1);
                self.cells.push([v00, v10, c]);
                self.cells.push([v10, v11, c]);
                self.cells.push([v11, v01, c]);
                self.cells.push([v01, v00, c]);
            }
        }
    }
}

/// `nx` x `ny` squares on `[x0, x1] x [y0, y1]`, boundary sides tagged
/// `bottom`, `right`, `top`, `left`.
pub fn structured_rectangle_mesh(
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    nx: usize,
    ny: usize,
    rule: DiagonalRule,
) -> Triangulation {
    assert!(
        nx >= 1 && ny >= 1,
        "grid needs at least one square per direction"
    );
    let mut g = GridBuilder {
        x0,
        y0,
        hx: (x1 - x0) / nx as f64,
        hy: (y1 - y0) / ny as f64,
        index: HashMap::new(),
        vertices: Vec::new(),
        cells: Vec::new(),
    };
    for j in 0..ny as i64 {
        for i in 0..nx as i64 {
            g.square(i, j, rule);
        }
    }
    let (nx, ny) = (nx as i64, ny as i64);
    let mut boundary = Vec::new();
    for i in 0..nx {
        boundary.push((
            g.index[&(2 * i, 0)],
            g.index[&(2 * i + 2, 0)],
            "bottom".to_string(),
        ));
        boundary.push((
            g.index[&(2 * i, 2 * ny)],
            g.index[&(2 * i + 2, 2 * ny)],
            "top".to_string(),
        ));
    }
    for j in 0..ny {
        boundary.push((
            g.index[&(0, 2 * j)],
            g.index[&(0, 2 * j + 2)],
            "left".to_string(),
        ));
        boundary.push((
            g.index[&(2 * nx, 2 * j)],
            g.index[&(2 * nx, 2 * j + 2)],
            "right".to_string(),
        ));
    }
    Triangulation::new(g.vertices, g.cells, &boundary).expect("structured mesh is valid")
}

/// `n` x `n` squares on the unit square.
pub fn structured_square_mesh(n: usize, rule: DiagonalRule) -> Triangulation {
    structured_rectangle_mesh((0.0, 1.0), (0.0, 1.0), n, n, rule)
}

/// Forward-facing step `(0,4) x (0,2)` minus `[2,4] x [0,1]`, built from
/// criss-cross squares of side `1 / resolution`. The boundary is tagged
/// `inlet` (x = 0), `outlet` (x = 4) and `wall`.
pub fn forward_step_mesh(resolution: usize) -> Triangulation {
    assert!(resolution >= 1);
    let r = resolution as i64;
    let h = 1.0 / resolution as f64;
    let mut g = GridBuilder {
        x0: 0.0,
        y0: 0.0,
        hx: h,
        hy: h,
        index: HashMap::new(),
        vertices: Vec::new(),
        cells: Vec::new(),
    };
    let inside = |i: i64, j: i64| !(i >= 2 * r && j < r);
    for j in 0..2 * r {
        for i in 0..4 * r {
            if inside(i, j) {
                g.square(i, j, DiagonalRule::CrissCross);
            }
        }
    }
    let mesh =
        Triangulation::new(g.vertices.clone(), g.cells.clone(), &[]).expect("step mesh is valid");
    let mut boundary = Vec::new();
    for edge in mesh.edges().iter().filter(|e| e.is_boundary()) {
        let [a, b] = edge.vertices;
        let (p, q) = (mesh.vertices()[a], mesh.vertices()[b]);
        let tag = if p[0].abs() < 1e-12 && q[0].abs() < 1e-12 {
            "inlet"
        } else if (p[0] - 4.0).abs() < 1e-12 && (q[0] - 4.0).abs() < 1e-12 {
            "outlet"
        } else {
            "wall"
        };
        boundary.push((a, b, tag.to_string()));
    }
    Triangulation::new(g.vertices, g.cells, &boundary).expect("step mesh is valid")
}

/// `m` cells around a centre at the origin, with rim vertices at jittered
/// angles and radii. Every angular gap stays below π.
pub fn random_fan(m: usize, rng: &mut impl Rng) -> Triangulation {
    assert!(m >= 3, "a fan needs at least three cells");
    let step = std::f64::consts::TAU / m as f64;
    let mut vertices = vec![[0.0, 0.0]];
    for k in 0..m {
        let a = step * (k as f64 + rng.gen_range(-0.2..0.2));
        let r = rng.gen_range(0.5..1.5);
        vertices.push([r * a.cos(), r * a.sin()]);
    }
    let cells = (0..m).map(|k| [0, 1 + k, 1 + (k + 1) % m]).collect();
    Triangulation::new(vertices, cells, &[]).expect("valid fan")
}
