//! Bilinear quadrilateral shape functions on the reference square `[-1, 1]²`.

const G: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

const XI: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const ETA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// 2×2 Gauss rule as `(xi, eta, weight)`.
pub fn gauss_points() -> [(f64, f64, f64); 4] {
    [(-G, -G, 1.0), (G, -G, 1.0), (G, G, 1.0), (-G, G, 1.0)]
}

pub fn shape(xi: f64, eta: f64) -> [f64; 4] {
    std::array::from_fn(|i| 0.25 * (1.0 + xi * XI[i]) * (1.0 + eta * ETA[i]))
}

/// Derivatives `(dN/dxi, dN/deta)` per node.
pub fn shape_derivs(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    std::array::from_fn(|i| {
        [
            0.25 * XI[i] * (1.0 + eta * ETA[i]),
            0.25 * ETA[i] * (1.0 + xi * XI[i]),
        ]
    })
}

fn jacobian(coords: &[[f64; 2]; 4], xi: f64, eta: f64) -> [[f64; 2]; 2] {
    let d = shape_derivs(xi, eta);
    let mut j = [[0.0; 2]; 2];
    for (dn, p) in d.iter().zip(coords) {
        j[0][0] += dn[0] * p[0];
        j[0][1] += dn[0] * p[1];
        j[1][0] += dn[1] * p[0];
        j[1][1] += dn[1] * p[1];
    }
    j
}

pub fn jacobian_det(coords: &[[f64; 2]; 4], xi: f64, eta: f64) -> f64 {
    let j = jacobian(coords, xi, eta);
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

/// Physical shape-function gradients `(dN/dx, dN/dy)` and `det J` at a point.
pub fn physical_gradients(coords: &[[f64; 2]; 4], xi: f64, eta: f64) -> ([[f64; 2]; 4], f64) {
    let j = jacobian(coords, xi, eta);
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
    let d = shape_derivs(xi, eta);
    let grads = std::array::from_fn(|i| {
        [
            inv[0][0] * d[i][0] + inv[0][1] * d[i][1],
            inv[1][0] * d[i][0] + inv[1][1] * d[i][1],
        ]
    });
    (grads, det)
}

/// Strain-displacement matrix (3×8) in Voigt order `[e11, e22, g12]`.
pub fn b_matrix(grads: &[[f64; 2]; 4]) -> [[f64; 8]; 3] {
    let mut b = [[0.0; 8]; 3];
    for (i, g) in grads.iter().enumerate() {
        b[0][2 * i] = g[0];
        b[1][2 * i + 1] = g[1];
        b[2][2 * i] = g[1];
        b[2][2 * i + 1] = g[0];
    }
    b
}

pub fn area(coords: &[[f64; 2]; 4]) -> f64 {
    gauss_points()
        .iter()
        .map(|&(xi, eta, w)| w * jacobian_det(coords, xi, eta))
        .sum()
}

/// Image of the reference-element center, i.e. the mean of the four nodes.
pub fn centroid(coords: &[[f64; 2]; 4]) -> [f64; 2] {
    let n = shape(0.0, 0.0);
    let mut c = [0.0; 2];
    for (w, p) in n.iter().zip(coords) {
        c[0] += w * p[0];
        c[1] += w * p[1];
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        for &(xi, eta) in &[(0.3, -0.7), (1.0, 1.0), (-0.2, 0.9)] {
            let s: f64 = shape(xi, eta).iter().sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn skewed_quad_area() {
        let coords = [[0.0, 0.0], [4.0, 0.0], [5.0, 3.0], [1.0, 2.0]];
        // shoelace
        let shoelace = 0.5 * (4.0 * 3.0 - 0.0 + (5.0 * 2.0 - 1.0 * 3.0) + 0.0);
        assert!((area(&coords) - shoelace).abs() < 1e-12);
    }
}
