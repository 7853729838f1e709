//! Quadrature on the simple shapes produced by the cell cutter.
//!
//! Simplices use conical product (collapsed coordinate) rules built from
//! Gauss-Jacobi factors, so a rule of `n` points per direction integrates
//! polynomials of total degree `2n - 1` exactly. Order 1 degenerates to the
//! centroid rule. Boxes and rectangles use tensor Gauss-Legendre rules.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::real::{lit, Real};
use crate::vec3::{self, Vec3};

/// Highest polynomial degree a rule can be requested for.
pub const MAX_ORDER: usize = 31;

const MAX_POINTS_PER_DIRECTION: usize = MAX_ORDER / 2 + 1;

/// Points per direction needed for exactness up to total degree `order`.
fn points_per_direction(order: usize) -> usize {
    order / 2 + 1
}

/// Nodes on `[0, 1]` and weights for `int_0^1 (1 - t)^alpha g(t) dt`.
fn gauss_jacobi_unit(n: usize, alpha: u32) -> (Vec<f64>, Vec<f64>) {
    let a = alpha as f64;
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + a;
        jacobi[(k, k)] = if k == 0 { -a / (a + 2.0) } else { -a * a / (s * (s + 2.0)) };
        if k + 1 < n {
            let m = kf + 1.0;
            let s = 2.0 * m + a;
            let b2 = 4.0 * m * (m + a) * m * (m + a) / (s * s * (s + 1.0) * (s - 1.0));
            jacobi[(k, k + 1)] = b2.sqrt();
            jacobi[(k + 1, k)] = b2.sqrt();
        }
    }
    // mu0 = int_{-1}^{1} (1 - x)^alpha dx
    let mu0 = 2f64.powi(alpha as i32 + 1) / (a + 1.0);
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            ((1.0 + x) * 0.5, mu0 * v0 * v0 * 0.5f64.powi(alpha as i32 + 1))
        })
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    pairs.into_iter().unzip()
}

struct ReferenceRules {
    /// Gauss-Jacobi factors indexed by `[alpha][n - 1]`.
    factors: [Vec<(Vec<f64>, Vec<f64>)>; 3],
}

fn reference() -> &'static ReferenceRules {
    static RULES: OnceLock<ReferenceRules> = OnceLock::new();
    RULES.get_or_init(|| {
        let table = |alpha| (1..=MAX_POINTS_PER_DIRECTION).map(|n| gauss_jacobi_unit(n, alpha)).collect();
        ReferenceRules { factors: [table(0), table(1), table(2)] }
    })
}

fn check_order(order: usize) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::Domain(format!(
            "quadrature order {order} unsupported (maximum {MAX_ORDER})"
        )));
    }
    Ok(())
}

/// Gauss-Legendre nodes and weights on `[0, 1]` with `n` points.
pub fn gauss_legendre_unit(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || n > MAX_POINTS_PER_DIRECTION {
        return Err(Error::Domain(format!("Gauss-Legendre rule with {n} points unsupported")));
    }
    Ok(reference().factors[0][n - 1].clone())
}

/// A quadrature rule in reference coordinates, converted to the working scalar.
///
/// Reference points are barycentric-style local coordinates: for simplices the
/// coefficients of the edge vectors from the first vertex, for boxes the unit
/// cube coordinates. Weights sum to the reference measure.
#[derive(Clone, Debug)]
pub struct ReferenceRule<T, const D: usize> {
    pub points: Vec<[T; D]>,
    pub weights: Vec<T>,
}

impl<T: Real> ReferenceRule<T, 3> {
    /// Rule on the unit tetrahedron, exact up to total degree `order`.
    pub fn tetrahedron(order: usize) -> Result<Self> {
        check_order(order)?;
        let n = points_per_direction(order);
        let f = &reference().factors;
        let (u, wu) = &f[2][n - 1];
        let (v, wv) = &f[1][n - 1];
        let (w, ww) = &f[0][n - 1];
        let mut points = Vec::with_capacity(n * n * n);
        let mut weights = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let x = u[i];
                    let y = v[j] * (1.0 - u[i]);
                    let z = w[k] * (1.0 - u[i]) * (1.0 - v[j]);
                    points.push([lit(x), lit(y), lit(z)]);
                    weights.push(lit(wu[i] * wv[j] * ww[k]));
                }
            }
        }
        Ok(Self { points, weights })
    }

    /// Tensor Gauss-Legendre rule on the unit cube, exact up to degree
    /// `order` in each variable separately.
    pub fn unit_cube(order: usize) -> Result<Self> {
        check_order(order)?;
        let (x, w) = gauss_legendre_unit(points_per_direction(order))?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for k in 0..x.len() {
            for j in 0..x.len() {
                for i in 0..x.len() {
                    points.push([lit(x[i]), lit(x[j]), lit(x[k])]);
                    weights.push(lit(w[i] * w[j] * w[k]));
                }
            }
        }
        Ok(Self { points, weights })
    }

    /// Maps the rule onto the tetrahedron `v` and calls `f(point, weight)`.
    #[inline]
    pub fn for_each_on_tet(&self, v: &[Vec3<T>; 4], mut f: impl FnMut(Vec3<T>, T)) {
        let e1 = vec3::sub(v[1], v[0]);
        let e2 = vec3::sub(v[2], v[0]);
        let e3 = vec3::sub(v[3], v[0]);
        let jac = vec3::dot(e1, vec3::cross(e2, e3)).abs();
        for (p, &w) in self.points.iter().zip(&self.weights) {
            let x = [
                v[0][0] + p[0] * e1[0] + p[1] * e2[0] + p[2] * e3[0],
                v[0][1] + p[0] * e1[1] + p[1] * e2[1] + p[2] * e3[1],
                v[0][2] + p[0] * e1[2] + p[1] * e2[2] + p[2] * e3[2],
            ];
            f(x, w * jac);
        }
    }

    /// Maps the unit cube rule onto the box `[min, max]`.
    #[inline]
    pub fn for_each_on_box(&self, min: Vec3<T>, max: Vec3<T>, mut f: impl FnMut(Vec3<T>, T)) {
        let ext = vec3::sub(max, min);
        let jac = ext[0] * ext[1] * ext[2];
        for (p, &w) in self.points.iter().zip(&self.weights) {
            f(
                [min[0] + p[0] * ext[0], min[1] + p[1] * ext[1], min[2] + p[2] * ext[2]],
                w * jac,
            );
        }
    }
}

impl<T: Real> ReferenceRule<T, 2> {
    /// Rule on the unit triangle, exact up to total degree `order`.
    pub fn triangle(order: usize) -> Result<Self> {
        check_order(order)?;
        let n = points_per_direction(order);
        let f = &reference().factors;
        let (u, wu) = &f[1][n - 1];
        let (v, wv) = &f[0][n - 1];
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                points.push([lit(u[i]), lit(v[j] * (1.0 - u[i]))]);
                weights.push(lit(wu[i] * wv[j]));
            }
        }
        Ok(Self { points, weights })
    }

    /// Tensor Gauss-Legendre rule on the unit square.
    pub fn unit_square(order: usize) -> Result<Self> {
        check_order(order)?;
        let (x, w) = gauss_legendre_unit(points_per_direction(order))?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for j in 0..x.len() {
            for i in 0..x.len() {
                points.push([lit(x[i]), lit(x[j])]);
                weights.push(lit(w[i] * w[j]));
            }
        }
        Ok(Self { points, weights })
    }

    /// Maps the rule onto the triangle `v` embedded in 3D.
    #[inline]
    pub fn for_each_on_triangle(&self, v: &[Vec3<T>; 3], mut f: impl FnMut(Vec3<T>, T)) {
        let e1 = vec3::sub(v[1], v[0]);
        let e2 = vec3::sub(v[2], v[0]);
        let jac = vec3::norm(vec3::cross(e1, e2));
        for (p, &w) in self.points.iter().zip(&self.weights) {
            let x = [
                v[0][0] + p[0] * e1[0] + p[1] * e2[0],
                v[0][1] + p[0] * e1[1] + p[1] * e2[1],
                v[0][2] + p[0] * e1[2] + p[1] * e2[2],
            ];
            f(x, w * jac);
        }
    }

    /// Maps the unit square rule onto an axis-aligned rectangle spanned by
    /// `origin + s * edge_a + t * edge_b`.
    #[inline]
    pub fn for_each_on_rectangle(
        &self,
        origin: Vec3<T>,
        edge_a: Vec3<T>,
        edge_b: Vec3<T>,
        mut f: impl FnMut(Vec3<T>, T),
    ) {
        let jac = vec3::norm(vec3::cross(edge_a, edge_b));
        for (p, &w) in self.points.iter().zip(&self.weights) {
            let x = vec3::add(origin, vec3::add(vec3::scale(edge_a, p[0]), vec3::scale(edge_b, p[1])));
            f(x, w * jac);
        }
    }
}

/// Quadrature points and weights on a tetrahedron, exact to degree `order`.
pub fn tetrahedron<T: Real>(v: &[Vec3<T>; 4], order: usize) -> Result<Vec<(Vec3<T>, T)>> {
    let rule = ReferenceRule::<T, 3>::tetrahedron(order)?;
    let mut out = Vec::with_capacity(rule.weights.len());
    rule.for_each_on_tet(v, |x, w| out.push((x, w)));
    Ok(out)
}

/// Quadrature points and weights on a triangle, exact to degree `order`.
pub fn triangle<T: Real>(v: &[Vec3<T>; 3], order: usize) -> Result<Vec<(Vec3<T>, T)>> {
    let rule = ReferenceRule::<T, 2>::triangle(order)?;
    let mut out = Vec::with_capacity(rule.weights.len());
    rule.for_each_on_triangle(v, |x, w| out.push((x, w)));
    Ok(out)
}
