//! Dipole potentials of concentric multilayer spheres with isotropic shells.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::sources::Dipole;
use crate::vec3::{self, Vec3};

/// Relative tail bound a series evaluation must reach.
pub const SERIES_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SphereModel {
    pub center: Vec3<f64>,
    /// Shell radii in mm, outermost first.
    pub radii: Vec<f64>,
    /// Shell conductivities in S/m, same order as `radii`.
    pub conductivities: Vec<f64>,
    pub n_terms: usize,
}

impl SphereModel {
    pub fn new(center: Vec3<f64>, radii: Vec<f64>, conductivities: Vec<f64>) -> Result<Self> {
        let model = Self { center, radii, conductivities, n_terms: 200 };
        model.validate()?;
        Ok(model)
    }

    pub fn with_terms(mut self, n_terms: usize) -> Self {
        self.n_terms = n_terms;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() || self.radii.len() != self.conductivities.len() {
            return Err(Error::Configuration("sphere model needs one conductivity per radius".into()));
        }
        if self.radii.windows(2).any(|w| !(w[0] > w[1])) || !(self.radii[self.radii.len() - 1] > 0.0) {
            return Err(Error::Configuration("sphere radii must be positive and strictly decreasing".into()));
        }
        if self.conductivities.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Configuration("sphere conductivities must be positive".into()));
        }
        if self.n_terms == 0 {
            return Err(Error::Configuration("series needs at least one term".into()));
        }
        Ok(())
    }

    pub fn outer_radius(&self) -> f64 {
        self.radii[0]
    }

    pub fn inner_radius(&self) -> f64 {
        self.radii[self.radii.len() - 1]
    }

    /// Normalized distance of `p` from the center relative to the innermost shell.
    pub fn eccentricity(&self, p: Vec3<f64>) -> f64 {
        vec3::distance(p, self.center) / self.inner_radius()
    }

    /// Projects `p` radially onto the outer surface; returns the point and the
    /// distance moved.
    pub fn snap_to_surface(&self, p: Vec3<f64>) -> Result<(Vec3<f64>, f64)> {
        let d = vec3::sub(p, self.center);
        let dir = vec3::normalize(d)
            .ok_or_else(|| Error::Electrode { electrode: 0, source: Box::new(Error::Domain("electrode at sphere center".into())) })?;
        let q = vec3::add(self.center, vec3::scale(dir, self.outer_radius()));
        Ok((q, (vec3::norm(d) - self.outer_radius()).abs()))
    }

    /// Surface values `k_n`, normalized so that one homogeneous shell of the
    /// innermost radius gives `(2n+1)/n`.
    fn surface_factors(&self) -> Vec<f64> {
        // inner-first copies
        let r: Vec<f64> = self.radii.iter().rev().copied().collect();
        let s: Vec<f64> = self.conductivities.iter().rev().copied().collect();
        let l = r.len();
        let mut k = vec![0.0; self.n_terms + 1];
        for (n, kn) in k.iter_mut().enumerate().skip(1) {
            let nf = n as f64;
            // Each shell j > 0 holds a (r/r_j)^n + t (r_{j-1}/r_j)^{-(n+1)} (r_{j-1}/r)^{n+1},
            // fixed by the ratio y = r u'/u at its outer radius.
            let mut coeffs = vec![(0.0, 0.0); l];
            let mut y = 0.0;
            for j in (1..l).rev() {
                let (a, t) = (nf + 1.0 + y, nf - y);
                coeffs[j] = (a, t);
                let rho = r[j - 1] / r[j];
                let p = rho.powi(2 * n as i32 + 1);
                let y_inner = (nf * a * p - (nf + 1.0) * t) / (a * p + t);
                y = s[j] / s[j - 1] * y_inner;
            }
            // innermost shell: alpha (r/r_1)^n + (r_1/r)^{n+1}
            let alpha = (nf + 1.0 + y) / (nf - y);
            let mut value = alpha + 1.0;
            for j in 1..l {
                let (a, t) = coeffs[j];
                let rho = r[j - 1] / r[j];
                let p = rho.powi(2 * n as i32 + 1);
                value *= rho.powi(n as i32 + 1) * (a + t) / (a * p + t);
            }
            *kn = value;
        }
        k
    }
}

/// Potentials in volts at `electrodes` (snapped radially onto the outer
/// surface), re-referenced to zero mean. Positions in mm, moment in nAm.
pub fn sphere_forward(model: &SphereModel, dipole: &Dipole<f64>, electrodes: &[Vec3<f64>]) -> Result<Vec<f64>> {
    model.validate()?;
    let r1 = model.inner_radius();
    let rel = vec3::sub(dipole.position, model.center);
    let b = vec3::norm(rel);
    if !(b < r1) {
        return Err(Error::Source(format!("dipole at radius {b} is not inside the innermost shell of radius {r1}")));
    }
    let r0_hat = vec3::normalize(rel).unwrap_or([0.0, 0.0, 1.0]);
    let m = dipole.moment;
    let m_r0 = vec3::dot(m, r0_hat);
    let k = model.surface_factors();
    let sigma1 = model.conductivities[model.conductivities.len() - 1];
    let big_n = model.n_terms;
    let mut out = Vec::with_capacity(electrodes.len());
    let mut tail = 0.0f64;
    for (i, &e) in electrodes.iter().enumerate() {
        let (e, snap) = model.snap_to_surface(e).map_err(|err| match err {
            Error::Electrode { source, .. } => Error::Electrode { electrode: i, source },
            other => other,
        })?;
        if snap > 1e-9 * model.outer_radius() {
            log::debug!("electrode {i} snapped {snap:.3e} mm onto the outer sphere");
        }
        let r_hat = vec3::scale(vec3::sub(e, model.center), 1.0 / model.outer_radius());
        let x = vec3::dot(r_hat, r0_hat).clamp(-1.0, 1.0);
        let m_r = vec3::dot(m, r_hat);
        // P_n and P_n' by recurrence
        let (mut p_prev, mut p) = (1.0, x);
        let (mut dp_prev, mut dp) = (0.0, 1.0);
        let mut sum = 0.0;
        let mut last = [0.0f64; 2];
        let mut scale = 1.0 / (4.0 * PI * sigma1 * r1 * r1);
        for n in 1..=big_n {
            let nf = n as f64;
            let term = scale * k[n] * (nf * m_r0 * p + dp * (m_r - x * m_r0));
            sum += term;
            last = [last[1], term.abs()];
            scale *= b / r1;
            let p_next = ((2.0 * nf + 1.0) * x * p - nf * p_prev) / (nf + 1.0);
            let dp_next = dp_prev + (2.0 * nf + 1.0) * p;
            (p_prev, p) = (p, p_next);
            (dp_prev, dp) = (dp, dp_next);
        }
        tail = tail.max(last[0].max(last[1]));
        out.push(sum);
    }
    let rho = vec3::norm(rel) / model.outer_radius();
    let tail = tail * rho / (1.0 - rho);
    let peak = out.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if tail > SERIES_TOLERANCE * peak {
        return Err(Error::Series(format!(
            "series tail {tail:.3e} exceeds {SERIES_TOLERANCE:e} of the potential {peak:.3e}; increase the number of terms beyond {big_n}"
        )));
    }
    Ok(to_volts_zero_mean(out))
}

/// Closed-form potential of a dipole in a homogeneous sphere of radius
/// `radius` at surface points, zero mean, volts.
pub fn homogeneous_sphere_potential(
    center: Vec3<f64>,
    radius: f64,
    conductivity: f64,
    dipole: &Dipole<f64>,
    electrodes: &[Vec3<f64>],
) -> Vec<f64> {
    let r0 = vec3::sub(dipole.position, center);
    let out = electrodes
        .iter()
        .map(|&e| {
            let r = vec3::scale(vec3::sub(e, center), radius / vec3::norm(vec3::sub(e, center)));
            let rn = radius;
            let d = vec3::sub(r, r0);
            let dn = vec3::norm(d);
            let g = rn * dn + rn * rn - vec3::dot(r0, r);
            let a = vec3::scale(d, 2.0 / dn.powi(3));
            let c = vec3::add(vec3::scale(d, 1.0 / (dn * rn)), vec3::scale(r, 1.0 / (rn * rn)));
            let f = vec3::add(a, vec3::scale(c, rn / g));
            vec3::dot(dipole.moment, f) / (4.0 * PI * conductivity)
        })
        .collect();
    to_volts_zero_mean(out)
}

/// Converts nAm / (S/m mm^2) to volts and removes the mean.
fn to_volts_zero_mean(mut v: Vec<f64>) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
    for x in &mut v {
        *x = (*x - mean) * 1e-3;
    }
    v
}
