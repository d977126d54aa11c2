//! Quadrature on the reference triangle and on edges.
//!
//! Triangle rules are conical (collapsed) Gauss–Legendre products: they are
//! not symmetric but are exact to the requested degree and available for
//! any degree without tables.

use thiserror::Error;

/// Highest polynomial degree for which rules are provided.
pub const MAX_DEGREE: usize = 20;

#[derive(Debug, Error, PartialEq)]
#[error("no quadrature rule of degree {0} (supported: 0..={MAX_DEGREE})")]
pub struct UnsupportedDegree(pub usize);

/// Points in barycentric coordinates; weights sum to 1/2, the area of the
/// reference triangle. Scale by `2 |T|` on a physical cell.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Points in `[0, 1]`; weights sum to 1.
#[derive(Clone, Debug)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl EdgeRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

pub fn quadrature_edge(degree: usize) -> Result<EdgeRule, UnsupportedDegree> {
    if degree > MAX_DEGREE {
        return Err(UnsupportedDegree(degree));
    }
    let n = degree / 2 + 1;
    let (x, w) = gauss_legendre(n);
    Ok(EdgeRule {
        points: x.iter().map(|&t| 0.5 * (t + 1.0)).collect(),
        weights: w.iter().map(|&v| 0.5 * v).collect(),
        degree,
    })
}

pub fn quadrature_triangle(degree: usize) -> Result<TriangleRule, UnsupportedDegree> {
    if degree > MAX_DEGREE {
        return Err(UnsupportedDegree(degree));
    }
    // x = u, y = v (1 - u): the Jacobian (1 - u) raises the degree in u by one
    let (xu, wu) = gauss_legendre((degree + 1) / 2 + 1);
    let (xv, wv) = gauss_legendre(degree / 2 + 1);
    let mut points = Vec::with_capacity(xu.len() * xv.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for (&a, &wa) in xu.iter().zip(&wu) {
        let u = 0.5 * (a + 1.0);
        for (&b, &wb) in xv.iter().zip(&wv) {
            let v = 0.5 * (b + 1.0);
            let (x, y) = (u, v * (1.0 - u));
            points.push([1.0 - x - y, x, y]);
            weights.push(0.25 * wa * wb * (1.0 - u));
        }
    }
    Ok(TriangleRule {
        points,
        weights,
        degree,
    })
}

/// `∫_T λ1^a λ2^b λ3^c` over the reference triangle (area 1/2).
pub fn barycentric_monomial_integral(a: u32, b: u32, c: u32) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    fact(a) * fact(b) * fact(c) / fact(a + b + c + 2)
}
