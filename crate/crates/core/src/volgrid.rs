//! Grid geometry, real volumes, complex spectra and support masks, together with
//! the unitary 3D FFT and the periodic finite-difference operators that every
//! other module is built on.
//!
//! Storage is a flat vector in x-fastest order: voxel `(i, j, k)` lives at
//! `i + nx * (j + ny * k)`.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest voxel count allowed along any axis.
pub const MIN_AXIS_LEN: usize = 4;

/// Relative bound on the imaginary part an inverse transform may discard.
pub const IMAG_RESIDUE_TOL: f64 = 1e-5;

/// Relative bound used when checking Hermitian symmetry of a spectrum.
pub const HERMITIAN_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Voxel pitch in micrometers.
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, dx: f64, dy: f64, dz: f64) -> Result<Self> {
        let g = Self { nx, ny, nz, dx, dy, dz };
        g.validate()?;
        Ok(g)
    }

    /// Cubic grid with isotropic pitch.
    pub fn cube(n: usize, pitch: f64) -> Result<Self> {
        Self::new(n, n, n, pitch, pitch, pitch)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("nx", self.nx), ("ny", self.ny), ("nz", self.nz)] {
            if n < MIN_AXIS_LEN {
                return Err(Error::InvalidGrid(format!("{name} = {n} is below {MIN_AXIS_LEN}")));
            }
        }
        for (name, d) in [("dx", self.dx), ("dy", self.dy), ("dz", self.dz)] {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidGrid(format!("{name} = {d} must be positive")));
            }
        }
        self.nx
            .checked_mul(self.ny)
            .and_then(|v| v.checked_mul(self.nz))
            .ok_or_else(|| Error::InvalidGrid("voxel count overflows".into()))?;
        Ok(())
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn pitch(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }

    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        (i, j, k)
    }

    /// Index of the frequency `-k` (mod N) for the voxel at `idx`.
    #[inline]
    pub fn mirror_index(&self, idx: usize) -> usize {
        let (i, j, k) = self.coords(idx);
        self.index(
            (self.nx - i) % self.nx,
            (self.ny - j) % self.ny,
            (self.nz - k) % self.nz,
        )
    }

    /// Frequency in cycles/µm of index `k` along `axis` (0 = x, 1 = y, 2 = z).
    #[inline]
    pub fn freq(&self, axis: usize, k: usize) -> f64 {
        let n = self.shape()[axis];
        freq_coord(k, n, self.pitch()[axis])
    }

    /// Frequency spacing per axis in cycles/µm.
    pub fn freq_step(&self) -> [f64; 3] {
        [
            1.0 / (self.nx as f64 * self.dx),
            1.0 / (self.ny as f64 * self.dy),
            1.0 / (self.nz as f64 * self.dz),
        ]
    }

    /// Nyquist frequency per axis in cycles/µm.
    pub fn nyquist(&self) -> [f64; 3] {
        [0.5 / self.dx, 0.5 / self.dy, 0.5 / self.dz]
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn expect_shape(&self, other: &GridSpec) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dims(), actual: other.dims() })
        }
    }
}

/// Signed frequency coordinate with DC at index 0.
#[inline]
pub fn freq_coord(k: usize, n: usize, pitch: f64) -> f64 {
    let half = n / 2;
    let signed = ((k + half) % n) as f64 - half as f64;
    signed / (n as f64 * pitch)
}

/// Real scalar field on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3<T> {
    grid: GridSpec,
    data: Vec<T>,
}

impl<T: Real> Volume3<T> {
    pub fn new(grid: GridSpec, data: Vec<T>) -> Result<Self> {
        grid.validate()?;
        if data.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), actual: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume"));
        }
        Ok(Self { grid, data })
    }

    /// Caller guarantees the length invariant; finiteness is checked by the solver.
    pub(crate) fn from_parts(grid: GridSpec, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid, data }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::filled(grid, T::zero())
    }

    pub fn filled(grid: GridSpec, value: T) -> Self {
        Self { grid, data: vec![value; grid.len()] }
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { grid, data }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.grid.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let idx = self.grid.index(i, j, k);
        self.data[idx] = v;
    }

    /// Same values on a grid with the same shape but possibly different pitch.
    pub fn with_grid(mut self, grid: GridSpec) -> Result<Self> {
        self.grid.expect_shape(&grid)?;
        self.grid = grid;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { grid: self.grid, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Real>(&self) -> Volume3<U> {
        Volume3 {
            grid: self.grid,
            data: self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }

    /// Sequential inner product (fixed summation order).
    pub fn dot(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn min(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `‖self − other‖ / ‖other‖`, or the absolute norm when `other` is zero.
    pub fn rel_l2(&self, other: &Self) -> T {
        let diff: T = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        let base = other.norm();
        if base > T::zero() {
            diff.sqrt() / base
        } else {
            diff.sqrt()
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Complex Fourier-domain field.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum3<T> {
    grid: GridSpec,
    data: Vec<Complex<T>>,
    hermitian: bool,
}

impl<T: Real> Spectrum3<T> {
    /// Builds a spectrum; when `hermitian` is set the symmetry is verified.
    pub fn new(grid: GridSpec, data: Vec<Complex<T>>, hermitian: bool) -> Result<Self> {
        grid.validate()?;
        if data.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), actual: data.len() });
        }
        if data.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite("spectrum"));
        }
        let s = Self { grid, data, hermitian: false };
        if hermitian {
            let dev = s.hermitian_deviation();
            if dev > HERMITIAN_TOL {
                return Err(Error::NotHermitian { deviation: dev });
            }
        }
        Ok(Self { hermitian, ..s })
    }

    pub(crate) fn from_parts(grid: GridSpec, data: Vec<Complex<T>>, hermitian: bool) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid, data, hermitian }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, data: vec![Complex::new(T::zero(), T::zero()); grid.len()], hermitian: true }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex<T>> {
        self.data
    }

    #[inline]
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Largest `|s(k) − conj(s(−k))|` relative to the largest magnitude.
    pub fn hermitian_deviation(&self) -> f64 {
        let scale = self.data.iter().fold(0.0f64, |m, c| m.max(c.norm().to_f64_lossy()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for (idx, c) in self.data.iter().enumerate() {
            let m = self.data[self.grid.mirror_index(idx)].conj();
            worst = worst.max((*c - m).norm().to_f64_lossy());
        }
        worst / scale
    }

    pub fn l2_norm(&self) -> T {
        self.data.iter().map(|c| c.norm_sqr()).sum::<T>().sqrt()
    }

    /// Zeroes every frequency outside `mask`.
    pub fn masked(&self, mask: &SupportMask) -> Result<Self> {
        self.grid.expect_shape(mask.grid())?;
        let zero = Complex::new(T::zero(), T::zero());
        let data = self
            .data
            .iter()
            .zip(mask.data())
            .map(|(&c, &m)| if m { c } else { zero })
            .collect();
        Ok(Self { grid: self.grid, data, hermitian: self.hermitian })
    }
}

/// Binary indicator of measured frequencies. Always centrally symmetric with DC set
/// whenever any voxel is set.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportMask {
    grid: GridSpec,
    data: Vec<bool>,
}

impl SupportMask {
    /// Symmetrizes `data` and forces DC on when anything is set.
    pub fn new(grid: GridSpec, data: Vec<bool>) -> Result<Self> {
        grid.validate()?;
        if data.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), actual: data.len() });
        }
        let mut m = Self { grid, data };
        m.symmetrize();
        Ok(m)
    }

    pub fn full(grid: GridSpec) -> Self {
        Self { grid, data: vec![true; grid.len()] }
    }

    pub fn empty(grid: GridSpec) -> Self {
        Self { grid, data: vec![false; grid.len()] }
    }

    fn symmetrize(&mut self) {
        for idx in 0..self.data.len() {
            if self.data[idx] {
                let m = self.grid.mirror_index(idx);
                self.data[m] = true;
            }
        }
        if self.data.iter().any(|&b| b) {
            self.data[0] = true;
        }
    }

    /// Returns a symmetrized copy; a no-op on any mask built through [`SupportMask::new`].
    pub fn symmetrized(&self) -> Self {
        let mut m = self.clone();
        m.symmetrize();
        m
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.data.len()).all(|idx| self.data[idx] == self.data[self.grid.mirror_index(idx)])
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[self.grid.index(i, j, k)]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Same mask on a grid of identical shape (pitch may differ).
    pub fn with_grid(mut self, grid: GridSpec) -> Result<Self> {
        self.grid.expect_shape(&grid)?;
        self.grid = grid;
        Ok(self)
    }

    /// `(lateral, axial)` full widths in cycles/µm spanned by the set voxel centers.
    /// Lateral width is twice the largest radial frequency in the kx-ky plane.
    pub fn band_extents(&self) -> (f64, f64) {
        let g = &self.grid;
        let fx: Vec<f64> = (0..g.nx).map(|i| g.freq(0, i)).collect();
        let fy: Vec<f64> = (0..g.ny).map(|j| g.freq(1, j)).collect();
        let fz: Vec<f64> = (0..g.nz).map(|k| g.freq(2, k)).collect();
        let mut lat = 0.0f64;
        let (mut zmin, mut zmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for (idx, &set) in self.data.iter().enumerate() {
            if !set {
                continue;
            }
            let (i, j, k) = g.coords(idx);
            lat = lat.max((fx[i] * fx[i] + fy[j] * fy[j]).sqrt());
            zmin = zmin.min(fz[k]);
            zmax = zmax.max(fz[k]);
        }
        if zmax < zmin {
            return (0.0, 0.0);
        }
        (2.0 * lat, zmax - zmin)
    }
}

/// Cached plans for the unitary 3D transform of one grid shape.
pub struct Fft3<T: Real> {
    grid: GridSpec,
    fwd: [Arc<dyn Fft<T>>; 3],
    inv: [Arc<dyn Fft<T>>; 3],
    scale: T,
}

impl<T: Real> Fft3<T> {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = [
            planner.plan_fft_forward(grid.nx),
            planner.plan_fft_forward(grid.ny),
            planner.plan_fft_forward(grid.nz),
        ];
        let inv = [
            planner.plan_fft_inverse(grid.nx),
            planner.plan_fft_inverse(grid.ny),
            planner.plan_fft_inverse(grid.nz),
        ];
        let scale = T::one() / T::of(grid.len() as f64).sqrt();
        Self { grid: *grid, fwd, inv, scale }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Unitary forward transform, in place.
    pub fn forward_in_place(&self, buf: &mut [Complex<T>]) {
        self.transform(buf, &self.fwd);
    }

    /// Unitary inverse transform, in place.
    pub fn inverse_in_place(&self, buf: &mut [Complex<T>]) {
        self.transform(buf, &self.inv);
    }

    fn transform(&self, buf: &mut [Complex<T>], plans: &[Arc<dyn Fft<T>>; 3]) {
        let (nx, ny, nz) = self.grid.dims();
        assert_eq!(buf.len(), nx * ny * nz, "buffer length does not match grid");
        let zero = Complex::new(T::zero(), T::zero());

        // x lines are contiguous
        let px = &plans[0];
        buf.par_chunks_mut(nx).for_each_init(
            || vec![zero; px.get_inplace_scratch_len()],
            |scratch, line| px.process_with_scratch(line, scratch),
        );

        // y lines within each z slab
        let py = &plans[1];
        buf.par_chunks_mut(nx * ny).for_each_init(
            || (vec![zero; ny], vec![zero; py.get_inplace_scratch_len()]),
            |(line, scratch), slab| {
                for i in 0..nx {
                    for j in 0..ny {
                        line[j] = slab[i + nx * j];
                    }
                    py.process_with_scratch(line, scratch);
                    for j in 0..ny {
                        slab[i + nx * j] = line[j];
                    }
                }
            },
        );

        // z lines: transform one xz-plane per j, then scatter back
        let pz = &plans[2];
        let src: &[Complex<T>] = buf;
        let planes: Vec<Vec<Complex<T>>> = (0..ny)
            .into_par_iter()
            .map_init(
                || vec![zero; pz.get_inplace_scratch_len()],
                |scratch, j| {
                    let mut plane = vec![zero; nx * nz];
                    for i in 0..nx {
                        let line = &mut plane[i * nz..(i + 1) * nz];
                        for k in 0..nz {
                            line[k] = src[i + nx * (j + ny * k)];
                        }
                        pz.process_with_scratch(line, scratch);
                    }
                    plane
                },
            )
            .collect();
        let s = self.scale;
        for (j, plane) in planes.iter().enumerate() {
            for i in 0..nx {
                for k in 0..nz {
                    buf[i + nx * (j + ny * k)] = plane[i * nz + k] * s;
                }
            }
        }
    }

    pub fn forward(&self, v: &Volume3<T>) -> Result<Spectrum3<T>> {
        self.grid.expect_shape(v.grid())?;
        if !v.all_finite() {
            return Err(Error::NonFinite("volume"));
        }
        let mut buf: Vec<Complex<T>> =
            v.data().iter().map(|&x| Complex::new(x, T::zero())).collect();
        self.forward_in_place(&mut buf);
        Ok(Spectrum3::from_parts(*v.grid(), buf, true))
    }

    /// Inverse transform that returns the real part after checking the imaginary
    /// residue is below [`IMAG_RESIDUE_TOL`] of the largest real magnitude.
    pub fn inverse(&self, s: &Spectrum3<T>) -> Result<Volume3<T>> {
        self.grid.expect_shape(s.grid())?;
        if s.data().iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite("spectrum"));
        }
        let mut buf = s.data().to_vec();
        let scale = max_modulus(&buf);
        self.inverse_in_place(&mut buf);
        let data = take_real(&buf, scale)?;
        Ok(Volume3::from_parts(*s.grid(), data))
    }
}

/// Largest modulus in `buf`.
pub(crate) fn max_modulus<T: Real>(buf: &[Complex<T>]) -> T {
    buf.iter().fold(T::zero(), |m, c| m.max(c.norm()))
}

/// Real part of an inverse transform, rejecting a non-negligible imaginary
/// residue. `input_scale` is the largest modulus of the transformed spectrum;
/// round-off relative to it is tolerated even when the real part is tiny.
pub(crate) fn take_real<T: Real>(buf: &[Complex<T>], input_scale: T) -> Result<Vec<T>> {
    let (mut re_max, mut im_max) = (T::zero(), T::zero());
    for c in buf {
        re_max = re_max.max(c.re.abs());
        im_max = im_max.max(c.im.abs());
    }
    let floor = T::epsilon() * T::of(buf.len() as f64).sqrt() * input_scale;
    if im_max > T::of(IMAG_RESIDUE_TOL) * re_max && im_max > floor {
        return Err(Error::ImaginaryResidue {
            ratio: (im_max / re_max.max(T::min_positive_value())).to_f64_lossy(),
        });
    }
    Ok(buf.iter().map(|c| c.re).collect())
}

pub fn fft3<T: Real>(v: &Volume3<T>) -> Result<Spectrum3<T>> {
    Fft3::new(v.grid()).forward(v)
}

pub fn ifft3<T: Real>(s: &Spectrum3<T>) -> Result<Volume3<T>> {
    Fft3::new(s.grid()).inverse(s)
}

/// Forward differences with periodic wrap, written into `out` (x, y, z).
pub(crate) fn grad_into<T: Real>(g: &GridSpec, v: &[T], out: [&mut [T]; 3]) {
    let (nx, ny, nz) = g.dims();
    let [gx, gy, gz] = out;
    for k in 0..nz {
        let kp = if k + 1 == nz { 0 } else { k + 1 };
        for j in 0..ny {
            let jp = if j + 1 == ny { 0 } else { j + 1 };
            let row = nx * (j + ny * k);
            let row_y = nx * (jp + ny * k);
            let row_z = nx * (j + ny * kp);
            for i in 0..nx {
                let ip = if i + 1 == nx { 0 } else { i + 1 };
                let c = v[row + i];
                gx[row + i] = v[row + ip] - c;
                gy[row + i] = v[row_y + i] - c;
                gz[row + i] = v[row_z + i] - c;
            }
        }
    }
}

/// Backward-difference divergence, the negative adjoint of [`grad_into`].
pub(crate) fn div_into<T: Real>(g: &GridSpec, p: [&[T]; 3], out: &mut [T]) {
    let (nx, ny, nz) = g.dims();
    let [px, py, pz] = p;
    for k in 0..nz {
        let km = if k == 0 { nz - 1 } else { k - 1 };
        for j in 0..ny {
            let jm = if j == 0 { ny - 1 } else { j - 1 };
            let row = nx * (j + ny * k);
            let row_y = nx * (jm + ny * k);
            let row_z = nx * (j + ny * km);
            for i in 0..nx {
                let im = if i == 0 { nx - 1 } else { i - 1 };
                out[row + i] = (px[row + i] - px[row + im])
                    + (py[row + i] - py[row_y + i])
                    + (pz[row + i] - pz[row_z + i]);
            }
        }
    }
}

/// Periodic forward-difference gradient `(gx, gy, gz)`.
pub fn grad<T: Real>(v: &Volume3<T>) -> [Volume3<T>; 3] {
    let g = *v.grid();
    let n = g.len();
    let (mut gx, mut gy, mut gz) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
    grad_into(&g, v.data(), [&mut gx, &mut gy, &mut gz]);
    [Volume3::from_parts(g, gx), Volume3::from_parts(g, gy), Volume3::from_parts(g, gz)]
}

/// Divergence satisfying `⟨grad u, p⟩ = −⟨u, div p⟩`.
pub fn div<T: Real>(gx: &Volume3<T>, gy: &Volume3<T>, gz: &Volume3<T>) -> Result<Volume3<T>> {
    let g = *gx.grid();
    g.expect_shape(gy.grid())?;
    g.expect_shape(gz.grid())?;
    let mut out = vec![T::zero(); g.len()];
    div_into(&g, [gx.data(), gy.data(), gz.data()], &mut out);
    Ok(Volume3::from_parts(g, out))
}

/// Fourier multiplier of the nonnegative operator `∇ᵀ∇ = −div ∘ grad`.
pub fn laplacian_symbol<T: Real>(grid: &GridSpec) -> Volume3<T> {
    let axis = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
            .collect()
    };
    let (sx, sy, sz) = (axis(grid.nx), axis(grid.ny), axis(grid.nz));
    Volume3::from_fn(*grid, |i, j, k| T::of(sx[i] + sy[j] + sz[k]))
}
