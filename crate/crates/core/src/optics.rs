//! Fourier support of a transmission ODT microscope and the missing-cone
//! degradation it imposes.
//!
//! Each illumination wavevector `k_in` (|k_in| = n/λ) contributes the Ewald cap
//! `{k_s − k_in : |k_s| = n/λ, lateral(k_s) ≤ NA_detect/λ, k_s,z > 0}`. Caps are
//! rasterized onto the frequency grid with a half-thickness of half a frequency
//! voxel diagonal, then the union is centrally symmetrized and DC is forced on.
//!
//! Frequencies are in cycles/µm throughout.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volgrid::{Fft3, GridSpec, Spectrum3, SupportMask, Volume3};

/// Immersion index of an aqueous buffer.
pub const DEFAULT_N_MEDIUM: f64 = 1.337;

#[derive(Clone, Debug, PartialEq)]
pub enum IllumPattern {
    /// Equally spaced azimuths at the maximal illumination NA (conical scan).
    Circle,
    /// Golden-angle spiral filling the illumination pupil.
    Spiral,
    /// Explicit unit direction vectors `(ux, uy, uz)` with `uz > 0`.
    Custom(Vec<[f64; 3]>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpticsGeometry {
    /// Vacuum wavelength in µm.
    pub wavelength: f64,
    pub n_medium: f64,
    pub na_illum: f64,
    pub na_detect: f64,
    pub n_angles: usize,
    pub pattern: IllumPattern,
}

impl Default for OpticsGeometry {
    /// 532 nm, NA 1.2 condenser and objective, 49 angles on a circle.
    fn default() -> Self {
        Self {
            wavelength: 0.532,
            n_medium: DEFAULT_N_MEDIUM,
            na_illum: 1.2,
            na_detect: 1.2,
            n_angles: 49,
            pattern: IllumPattern::Circle,
        }
    }
}

/// Closed-form band limits of a geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandLimits {
    /// Full lateral width of the support, 2·max|k_lat|.
    pub lateral_width: f64,
    /// Full axial width of the symmetrized support, 2·max|k_z|.
    pub axial_width: f64,
}

impl BandLimits {
    /// Implied `(lateral, axial)` resolution in µm, the inverse of each full width.
    pub fn resolution(&self) -> (f64, f64) {
        (1.0 / self.lateral_width, 1.0 / self.axial_width)
    }
}

impl OpticsGeometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGeometry(m));
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return bad(format!("wavelength {} must be positive", self.wavelength));
        }
        if !(self.n_medium.is_finite() && self.n_medium > 0.0) {
            return bad(format!("n_medium {} must be positive", self.n_medium));
        }
        for (name, na) in [("na_illum", self.na_illum), ("na_detect", self.na_detect)] {
            if !(na > 0.0 && na <= self.n_medium) {
                return bad(format!("{name} = {na} must lie in (0, n_medium]"));
            }
        }
        if self.n_angles == 0 {
            return bad("n_angles must be at least 1".into());
        }
        if let IllumPattern::Custom(dirs) = &self.pattern {
            if dirs.is_empty() {
                return bad("custom illumination list is empty".into());
            }
            let max_sin = self.na_illum / self.n_medium;
            for d in dirs {
                let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if !(norm.is_finite() && norm > 0.0) || d[2] <= 0.0 {
                    return bad(format!("illumination direction {d:?} must point along +z"));
                }
                let sin = (d[0] * d[0] + d[1] * d[1]).sqrt() / norm;
                if sin > max_sin * (1.0 + 1e-12) {
                    return bad(format!("illumination direction {d:?} exceeds na_illum"));
                }
            }
        }
        Ok(())
    }

    /// Radius of the Ewald sphere, n/λ.
    #[inline]
    pub fn k_medium(&self) -> f64 {
        self.n_medium / self.wavelength
    }

    /// Illumination wavevectors in cycles/µm.
    pub fn illumination(&self) -> Vec<[f64; 3]> {
        let r = self.k_medium();
        let on_sphere = |kx: f64, ky: f64| [kx, ky, (r * r - kx * kx - ky * ky).max(0.0).sqrt()];
        let k_lat = self.na_illum / self.wavelength;
        let n = self.n_angles;
        match &self.pattern {
            IllumPattern::Circle => (0..n)
                .map(|j| {
                    let phi = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                    on_sphere(k_lat * phi.cos(), k_lat * phi.sin())
                })
                .collect(),
            IllumPattern::Spiral => {
                let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                (0..n)
                    .map(|j| {
                        let rho = k_lat * ((j as f64 + 0.5) / n as f64).sqrt();
                        let phi = golden * j as f64;
                        on_sphere(rho * phi.cos(), rho * phi.sin())
                    })
                    .collect()
            }
            IllumPattern::Custom(dirs) => dirs
                .iter()
                .map(|d| {
                    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    [r * d[0] / norm, r * d[1] / norm, r * d[2] / norm]
                })
                .collect(),
        }
    }

    /// Band limits of the cap union for this geometry's illumination set.
    pub fn band_limits(&self) -> BandLimits {
        let r = self.k_medium();
        let det_lat = self.na_detect / self.wavelength;
        let cap_floor = (r * r - det_lat * det_lat).max(0.0).sqrt();
        let (mut lat, mut zlo, mut zhi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
        for k in self.illumination() {
            lat = lat.max(k[0].hypot(k[1]) + det_lat);
            zlo = zlo.min(cap_floor - k[2]);
            zhi = zhi.max(r - k[2]);
        }
        BandLimits { lateral_width: 2.0 * lat, axial_width: 2.0 * zlo.abs().max(zhi.abs()) }
    }

    /// Fails unless the grid Nyquist frequency covers the band on every axis.
    pub fn check_nyquist(&self, grid: &GridSpec) -> Result<()> {
        let band = self.band_limits();
        let [nx, ny, nz] = grid.nyquist();
        let lat = 0.5 * band.lateral_width;
        let ax = 0.5 * band.axial_width;
        if nx < lat || ny < lat {
            return Err(Error::Nyquist(format!(
                "lateral Nyquist ({nx:.4}, {ny:.4}) cycles/µm is below the band limit {lat:.4}"
            )));
        }
        if nz < ax {
            return Err(Error::Nyquist(format!(
                "axial Nyquist {nz:.4} cycles/µm is below the band limit {ax:.4}"
            )));
        }
        Ok(())
    }
}

/// Half-thickness used when rasterizing cap surfaces: half a frequency-voxel diagonal.
pub fn cap_half_thickness(grid: &GridSpec) -> f64 {
    let [a, b, c] = grid.freq_step();
    0.5 * (a * a + b * b + c * c).sqrt()
}

/// One Ewald cap: sphere of radius `r` centered at `-k_in`, restricted to the
/// cone of half-angle `theta` about +z as seen from that center.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Cap {
    k_in: [f64; 3],
    r: f64,
    sin_t: f64,
    cos_t: f64,
}

impl Cap {
    pub(crate) fn new(k_in: [f64; 3], geom: &OpticsGeometry) -> Self {
        let sin_t = (geom.na_detect / geom.n_medium).min(1.0);
        Self { k_in, r: geom.k_medium(), sin_t, cos_t: (1.0 - sin_t * sin_t).sqrt() }
    }

    /// Euclidean distance from frequency `p` to the cap surface.
    #[inline]
    pub(crate) fn distance(&self, p: [f64; 3]) -> f64 {
        let qx = p[0] + self.k_in[0];
        let qy = p[1] + self.k_in[1];
        let qz = p[2] + self.k_in[2];
        let rho = qx.hypot(qy);
        if rho * self.cos_t <= qz * self.sin_t {
            ((rho * rho + qz * qz).sqrt() - self.r).abs()
        } else {
            (rho - self.r * self.sin_t).hypot(qz - self.r * self.cos_t)
        }
    }

    /// Frequency bounds `[lo, hi]` per axis of the cap dilated by `pad`.
    fn bounds(&self, pad: f64) -> [[f64; 2]; 3] {
        let lat = self.r * self.sin_t + pad;
        [
            [-self.k_in[0] - lat, -self.k_in[0] + lat],
            [-self.k_in[1] - lat, -self.k_in[1] + lat],
            [self.r * self.cos_t - self.k_in[2] - pad, self.r - self.k_in[2] + pad],
        ]
    }
}

/// Rasterizes the union of Ewald caps, symmetrizes it and forces DC on.
pub fn build_support_mask(geom: &OpticsGeometry, grid: &GridSpec) -> Result<SupportMask> {
    geom.validate()?;
    grid.validate()?;
    geom.check_nyquist(grid)?;

    let t = cap_half_thickness(grid);
    let caps: Vec<Cap> = geom.illumination().into_iter().map(|k| Cap::new(k, geom)).collect();
    let bounds: Vec<[[f64; 2]; 3]> = caps.iter().map(|c| c.bounds(t)).collect();
    let fx: Vec<f64> = (0..grid.nx).map(|i| grid.freq(0, i)).collect();
    let fy: Vec<f64> = (0..grid.ny).map(|j| grid.freq(1, j)).collect();
    let fz: Vec<f64> = (0..grid.nz).map(|k| grid.freq(2, k)).collect();

    let slab = grid.nx * grid.ny;
    let mut raw = vec![false; grid.len()];
    raw.par_chunks_mut(slab).enumerate().for_each(|(k, plane)| {
        let z = fz[k];
        for (cap, b) in caps.iter().zip(&bounds) {
            if z < b[2][0] || z > b[2][1] {
                continue;
            }
            for (j, &y) in fy.iter().enumerate() {
                if y < b[1][0] || y > b[1][1] {
                    continue;
                }
                let row = &mut plane[j * grid.nx..(j + 1) * grid.nx];
                for (i, &x) in fx.iter().enumerate() {
                    if !row[i] && x >= b[0][0] && x <= b[0][1] && cap.distance([x, y, z]) <= t {
                        row[i] = true;
                    }
                }
            }
        }
    });

    let mask = SupportMask::new(*grid, raw)?;
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(mask)
}

/// Pure Fourier masking: `g = M ⊙ F(f)` and the zero-filled reconstruction `F⁻¹ g`.
pub fn degrade<T: Real>(
    truth: &Volume3<T>,
    mask: &SupportMask,
) -> Result<(Spectrum3<T>, Volume3<T>)> {
    truth.grid().expect_shape(mask.grid())?;
    let plan = Fft3::new(truth.grid());
    let spec = plan.forward(truth)?;
    let zero = Complex::new(T::zero(), T::zero());
    let data: Vec<Complex<T>> = spec
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&c, &m)| if m { c } else { zero })
        .collect();
    let g = Spectrum3::from_parts(*truth.grid(), data, true);
    let raw = plan.inverse(&g)?;
    Ok((g, raw))
}
