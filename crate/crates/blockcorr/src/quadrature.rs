//! Complex line integrals over polyline contours.
//!
//! Contours are directed polylines; each segment carries a Gauss-Legendre
//! panel mapped from `[-1, 1]`. Nodes are exposed as `(z, w)` pairs with
//! the complex weight `w` absorbing both the rule weight and `dz`, so an
//! integral is just `Σ w_i f(z_i)` and callers can cache expensive
//! per-node solver state between integrals.

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre_pairs(n: usize) -> Vec<(f64, f64)> {
    let n = n.max(1);
    GaussLegendre::new(n.try_into().expect("nonzero panel size"))
        .as_node_weight_pairs()
        .to_vec()
}

/// Quadrature nodes for the directed segment from `a` to `b`.
pub fn segment_nodes(a: Complex64, b: Complex64, pairs: &[(f64, f64)]) -> Vec<(Complex64, Complex64)> {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    pairs
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect()
}

/// Quadrature nodes for the closed polyline through `vertices`, traversed
/// in order with the final edge returning to the first vertex.
pub fn closed_polyline_nodes(
    vertices: &[Complex64],
    nodes_per_segment: usize,
) -> Vec<(Complex64, Complex64)> {
    let pairs = gauss_legendre_pairs(nodes_per_segment);
    let mut out = Vec::with_capacity(vertices.len() * nodes_per_segment);
    for (i, &a) in vertices.iter().enumerate() {
        let b = vertices[(i + 1) % vertices.len()];
        out.extend(segment_nodes(a, b, &pairs));
    }
    out
}

/// Counterclockwise rectangle `[re_left, re_right] × [-h, h]`.
pub fn rectangle(re_left: f64, re_right: f64, half_height: f64) -> [Complex64; 4] {
    [
        Complex64::new(re_left, -half_height),
        Complex64::new(re_right, -half_height),
        Complex64::new(re_right, half_height),
        Complex64::new(re_left, half_height),
    ]
}

/// `Σ w_i f(z_i)` over precomputed nodes.
pub fn integrate(nodes: &[(Complex64, Complex64)], mut f: impl FnMut(Complex64) -> Complex64) -> Complex64 {
    nodes.iter().map(|&(z, w)| w * f(z)).sum()
}
