//! Similarity metrics (MSE, Pearson, SSIM) and profile measurements (FWHM,
//! background fluctuation).
//!
//! SSIM uses the usual Gaussian-weighted local statistics: an 11×11 window with
//! σ = 1.5, K₁ = 0.01, K₂ = 0.03, averaged over every window position that fits
//! inside the image. The dynamic range `L` defaults to the joint min–max range of
//! both inputs.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volgrid::{GridSpec, Volume3};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Row-major 2D image in working precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch { expected: width * height, actual: data.len() });
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[x + self.width * y]
    }

    pub fn flip_x(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                data.push(self.at(x, y));
            }
        }
        Self { data, ..*self }
    }

    pub fn flip_y(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                data.push(self.at(x, y));
            }
        }
        Self { data, ..*self }
    }
}

/// The xy-plane at axial index `k`.
pub fn axial_slice<T: Real>(vol: &Volume3<T>, k: usize) -> Image {
    let g = vol.grid();
    let start = g.nx * g.ny * k;
    let data = vol.data()[start..start + g.nx * g.ny].iter().map(|v| v.to_f64_lossy()).collect();
    Image { width: g.nx, height: g.ny, data }
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected: a, actual: b })
    }
}

pub fn mse<T: Real>(a: &[T], b: &[T]) -> Result<f64> {
    same_len(a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::Degenerate("empty input".into()));
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// Centered correlation coefficient; errors on zero-variance input.
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> Result<f64> {
    same_len(a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::Degenerate("empty input".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
    let mb = b.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let dx = x.to_f64_lossy() - ma;
        let dy = y.to_f64_lossy() - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("pearson correlation of a zero-variance input".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - half;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Joint `max − min` over both images.
pub fn dynamic_range(a: &[f64], b: &[f64]) -> f64 {
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Mean SSIM over all fully contained 11×11 windows.
pub fn ssim(a: &Image, b: &Image, range: Option<f64>) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::DimensionMismatch {
            expected: (a.width, a.height, 1),
            actual: (b.width, b.height, 1),
        });
    }
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Degenerate(format!(
            "image {}x{} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window",
            a.width, a.height
        )));
    }
    let l = range.unwrap_or_else(|| dynamic_range(&a.data, &b.data));
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::Degenerate(format!("dynamic range {l} must be positive")));
    }
    let c1 = (SSIM_K1 * l).powi(2);
    let c2 = (SSIM_K2 * l).powi(2);
    let w = gaussian_window();
    let (nw, nh) = (a.width - SSIM_WINDOW + 1, a.height - SSIM_WINDOW + 1);

    // separable filtering: rows first, then columns, for the five moments
    let filter_rows = |img: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
        let mut out = vec![0.0; nw * a.height];
        for y in 0..a.height {
            for x in 0..nw {
                let mut s = 0.0;
                for (t, wt) in w.iter().enumerate() {
                    s += wt * img(x + t, y);
                }
                out[x + nw * y] = s;
            }
        }
        out
    };
    let filter_cols = |rows: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; nw * nh];
        for y in 0..nh {
            for x in 0..nw {
                let mut s = 0.0;
                for (t, wt) in w.iter().enumerate() {
                    s += wt * rows[x + nw * (y + t)];
                }
                out[x + nw * y] = s;
            }
        }
        out
    };
    let mu_a = filter_cols(&filter_rows(&|x, y| a.at(x, y)));
    let mu_b = filter_cols(&filter_rows(&|x, y| b.at(x, y)));
    let e_aa = filter_cols(&filter_rows(&|x, y| a.at(x, y) * a.at(x, y)));
    let e_bb = filter_cols(&filter_rows(&|x, y| b.at(x, y) * b.at(x, y)));
    let e_ab = filter_cols(&filter_rows(&|x, y| a.at(x, y) * b.at(x, y)));

    let mut total = 0.0;
    for i in 0..nw * nh {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / (nw * nh) as f64)
}

/// Full width at half maximum (µm) of the line through `point` along `axis`.
/// The half level is half the profile maximum; crossings are linearly
/// interpolated between samples.
pub fn fwhm_profile<T: Real>(vol: &Volume3<T>, axis: usize, point: (usize, usize, usize)) -> Result<f64> {
    assert!(axis < 3, "axis must be 0, 1 or 2");
    let g = vol.grid();
    let n = g.shape()[axis];
    let profile: Vec<f64> = (0..n)
        .map(|t| {
            let (mut i, mut j, mut k) = point;
            match axis {
                0 => i = t,
                1 => j = t,
                _ => k = t,
            }
            vol.get(i, j, k).to_f64_lossy()
        })
        .collect();
    let width = fwhm_samples(&profile)?;
    Ok(width * g.pitch()[axis])
}

/// FWHM of a 1D profile in samples.
pub fn fwhm_samples(profile: &[f64]) -> Result<f64> {
    let (peak_idx, peak) = profile
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    if !(peak > 0.0) {
        return Err(Error::NoPeak);
    }
    let half = 0.5 * peak;
    let mut right = None;
    for i in peak_idx..profile.len() - 1 {
        if profile[i + 1] < half {
            let frac = (profile[i] - half) / (profile[i] - profile[i + 1]);
            right = Some(i as f64 + frac);
            break;
        }
    }
    let mut left = None;
    for i in (1..=peak_idx).rev() {
        if profile[i - 1] < half {
            let frac = (profile[i] - half) / (profile[i] - profile[i - 1]);
            left = Some(i as f64 - frac);
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(Error::NoPeak),
    }
}

/// Standard deviation over voxels where `exclude` is false.
pub fn background_std<T: Real>(vol: &Volume3<T>, exclude: &[bool]) -> Result<f64> {
    same_len(vol.data().len(), exclude.len())?;
    let vals: Vec<f64> = vol
        .data()
        .iter()
        .zip(exclude)
        .filter(|(_, &ex)| !ex)
        .map(|(v, _)| v.to_f64_lossy())
        .collect();
    if vals.is_empty() {
        return Err(Error::Degenerate("exclusion region covers the whole volume".into()));
    }
    // shift by the first sample so a uniform field gives exactly zero
    let shift = vals[0];
    let n = vals.len() as f64;
    let mean = vals.iter().map(|v| v - shift).sum::<f64>() / n;
    Ok((vals.iter().map(|v| (v - shift - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Voxels whose centers lie within `radius` µm of `center` (µm, voxel centers at
/// `(i + ½)·pitch`).
pub fn sphere_region(grid: &GridSpec, center: [f64; 3], radius: f64) -> Vec<bool> {
    let p = grid.pitch();
    let mut out = Vec::with_capacity(grid.len());
    for k in 0..grid.nz {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let o = [
                    (i as f64 + 0.5) * p[0] - center[0],
                    (j as f64 + 0.5) * p[1] - center[1],
                    (k as f64 + 0.5) * p[2] - center[2],
                ];
                out.push(o[0] * o[0] + o[1] * o[1] + o[2] * o[2] <= radius * radius);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceRow {
    /// Axial position of the slice relative to the volume center, µm.
    pub z_um: f64,
    pub mse: f64,
    pub ssim: f64,
    /// NaN when either slice has zero variance.
    pub pearson: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceReport {
    pub rows: Vec<SliceRow>,
    /// MSE over all evaluated slices.
    pub mse: f64,
    /// Mean SSIM over the evaluated slices.
    pub ssim: f64,
    /// Pearson correlation over all evaluated slices; NaN when degenerate.
    pub pearson: f64,
}

/// Per-slice metrics of `a` against `b` for axial slices within `half_range` µm of
/// the volume center (all slices when `None`). SSIM uses the joint dynamic range
/// of both volumes for every slice.
pub fn slice_report<T: Real>(a: &Volume3<T>, b: &Volume3<T>, half_range: Option<f64>) -> Result<SliceReport> {
    a.grid().expect_shape(b.grid())?;
    let g = *a.grid();
    let da: Vec<f64> = a.data().iter().map(|v| v.to_f64_lossy()).collect();
    let db: Vec<f64> = b.data().iter().map(|v| v.to_f64_lossy()).collect();
    let l = dynamic_range(&da, &db);
    let zc = 0.5 * g.nz as f64 * g.dz;
    let mut rows = Vec::new();
    let (mut sa, mut sb) = (Vec::new(), Vec::new());
    for k in 0..g.nz {
        let z = (k as f64 + 0.5) * g.dz - zc;
        if let Some(h) = half_range {
            if z.abs() > h + 1e-9 {
                continue;
            }
        }
        let ia = axial_slice(a, k);
        let ib = axial_slice(b, k);
        let s = if l > 0.0 { ssim(&ia, &ib, Some(l))? } else { 1.0 };
        rows.push(SliceRow {
            z_um: z,
            mse: mse(&ia.data, &ib.data)?,
            ssim: s,
            pearson: pearson(&ia.data, &ib.data).unwrap_or(f64::NAN),
        });
        sa.extend_from_slice(&ia.data);
        sb.extend_from_slice(&ib.data);
    }
    if rows.is_empty() {
        return Err(Error::Degenerate("axial range selects no slices".into()));
    }
    let ssim_mean = rows.iter().map(|r| r.ssim).sum::<f64>() / rows.len() as f64;
    Ok(SliceReport {
        mse: mse(&sa, &sb)?,
        ssim: ssim_mean,
        pearson: pearson(&sa, &sb).unwrap_or(f64::NAN),
        rows,
    })
}
