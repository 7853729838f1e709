//! Minimal fixed-size 3-vector helpers on plain arrays.

use crate::real::Real;

pub type Vec3<T> = [T; 3];

#[inline(always)]
pub fn add<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline(always)]
pub fn sub<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline(always)]
pub fn scale<T: Real>(a: Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline(always)]
pub fn dot<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline(always)]
pub fn cross<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline(always)]
pub fn norm<T: Real>(a: Vec3<T>) -> T {
    dot(a, a).sqrt()
}

#[inline(always)]
pub fn distance<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    norm(sub(a, b))
}

/// Returns `a / |a|`, or `None` for a zero vector.
pub fn normalize<T: Real>(a: Vec3<T>) -> Option<Vec3<T>> {
    let n = norm(a);
    if n > T::zero() && n.is_finite() {
        Some(scale(a, T::one() / n))
    } else {
        None
    }
}

/// Linear interpolation `a + t (b - a)`.
#[inline(always)]
pub fn lerp<T: Real>(a: Vec3<T>, b: Vec3<T>, t: T) -> Vec3<T> {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
}

pub fn cast<T: Real>(a: [f64; 3]) -> Vec3<T> {
    [crate::real::lit(a[0]), crate::real::lit(a[1]), crate::real::lit(a[2])]
}

pub fn to_f64<T: Real>(a: Vec3<T>) -> [f64; 3] {
    [crate::real::to_f64(a[0]), crate::real::to_f64(a[1]), crate::real::to_f64(a[2])]
}

/// Signed volume of the tetrahedron `(a, b, c, d)`.
#[inline]
pub fn tet_signed_volume<T: Real>(a: Vec3<T>, b: Vec3<T>, c: Vec3<T>, d: Vec3<T>) -> T {
    dot(sub(b, a), cross(sub(c, a), sub(d, a))) / crate::real::lit(6.0)
}

/// Area of the triangle `(a, b, c)`.
#[inline]
pub fn triangle_area<T: Real>(a: Vec3<T>, b: Vec3<T>, c: Vec3<T>) -> T {
    norm(cross(sub(b, a), sub(c, a))) * crate::real::lit(0.5)
}

/// Any unit vector orthogonal to the unit vector `n`.
pub fn orthogonal_unit<T: Real>(n: Vec3<T>) -> Vec3<T> {
    let ax = n[0].abs();
    let ay = n[1].abs();
    let az = n[2].abs();
    let helper = if ax <= ay && ax <= az {
        [T::one(), T::zero(), T::zero()]
    } else if ay <= az {
        [T::zero(), T::one(), T::zero()]
    } else {
        [T::zero(), T::zero(), T::one()]
    };
    normalize(cross(n, helper)).expect("helper axis is not parallel")
}
