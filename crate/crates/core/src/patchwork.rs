//! Overlapping cubic patches: extraction with reflective padding, window
//! weighting and stitching.
//!
//! Each axis of length `n` is padded at its upper end to the smallest
//! `p ≥ max(n, patch)` with `(p − patch) % stride == 0`. Padding mirrors the
//! volume about its last voxel (the edge voxel is not repeated).

use rayon::prelude::*;

use crate::bregman::{regularize_volume, SolveReport, SolverParams};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volgrid::{GridSpec, SupportMask, Volume3};

/// How overlapping patches are blended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WindowMode {
    /// Uniform weights; each voxel is divided by the number of patches covering it.
    PaperLiteral,
    /// Separable `sin²(π(t + 0.5)/patch)` weights; each voxel is divided by its
    /// accumulated weight, which is 1 in the interior when `stride = patch/2`.
    #[default]
    PartitionOfUnity,
}

impl std::str::FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_literal" => Ok(Self::PaperLiteral),
            "partition_of_unity" => Ok(Self::PartitionOfUnity),
            other => Err(Error::InvalidLayout(format!(
                "unknown window mode {other:?} (expected paper_literal or partition_of_unity)"
            ))),
        }
    }
}

impl std::fmt::Display for WindowMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::PaperLiteral => "paper_literal",
            Self::PartitionOfUnity => "partition_of_unity",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchLayout {
    pub patch: usize,
    pub stride: usize,
    pub mode: WindowMode,
}

impl Default for PatchLayout {
    fn default() -> Self {
        Self { patch: 64, stride: 32, mode: WindowMode::PartitionOfUnity }
    }
}

/// One extracted patch and its origin in the padded volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch<T> {
    pub origin: [usize; 3],
    pub volume: Volume3<T>,
}

impl PatchLayout {
    pub fn new(patch: usize, stride: usize, mode: WindowMode) -> Result<Self> {
        let layout = Self { patch, stride, mode };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch < crate::volgrid::MIN_AXIS_LEN || self.patch % 2 != 0 {
            return Err(Error::InvalidLayout(format!(
                "patch edge {} must be even and at least {}",
                self.patch,
                crate::volgrid::MIN_AXIS_LEN
            )));
        }
        if self.stride == 0 || self.stride > self.patch {
            return Err(Error::InvalidLayout(format!(
                "stride {} must lie in 1..={}",
                self.stride, self.patch
            )));
        }
        Ok(())
    }

    /// Padded length of an axis of length `n`.
    pub fn padded_len(&self, n: usize) -> usize {
        if n <= self.patch {
            return self.patch;
        }
        self.patch + (n - self.patch).div_ceil(self.stride) * self.stride
    }

    /// Reflective pad per axis for a volume of shape `dims`.
    pub fn padding(&self, dims: [usize; 3]) -> Result<[usize; 3]> {
        self.validate()?;
        let mut pad = [0; 3];
        for a in 0..3 {
            let p = self.padded_len(dims[a]) - dims[a];
            if p >= dims[a] {
                return Err(Error::InvalidLayout(format!(
                    "axis {a} of length {} needs {p} voxels of reflective padding; at most {} possible",
                    dims[a],
                    dims[a] - 1
                )));
            }
            pad[a] = p;
        }
        Ok(pad)
    }

    /// Patch offsets along an axis of padded length `p`.
    fn offsets(&self, p: usize) -> impl Iterator<Item = usize> + '_ {
        (0..=(p - self.patch) / self.stride).map(move |i| i * self.stride)
    }

    /// Patch origins in extraction order (x fastest).
    pub fn origins(&self, dims: [usize; 3]) -> Result<Vec<[usize; 3]>> {
        let pad = self.padding(dims)?;
        let p: [usize; 3] = std::array::from_fn(|a| dims[a] + pad[a]);
        let mut out = Vec::new();
        for z in self.offsets(p[2]) {
            for y in self.offsets(p[1]) {
                for x in self.offsets(p[0]) {
                    out.push([x, y, z]);
                }
            }
        }
        Ok(out)
    }

    /// Grid of one patch, with the pitch of `grid`.
    pub fn patch_grid(&self, grid: &GridSpec) -> Result<GridSpec> {
        GridSpec::new(self.patch, self.patch, self.patch, grid.dx, grid.dy, grid.dz)
    }
}

/// Source index for position `t` of an axis of length `n` mirrored past its end.
fn reflect(t: usize, n: usize) -> usize {
    if t < n {
        t
    } else {
        2 * (n - 1) - t
    }
}

/// Reflectively pads `vol` and cuts it into patches.
pub fn extract<T: Real>(vol: &Volume3<T>, layout: &PatchLayout) -> Result<Vec<Patch<T>>> {
    let grid = vol.grid();
    let dims = grid.shape();
    let pgrid = layout.patch_grid(grid)?;
    let p = layout.patch;
    layout
        .origins(dims)?
        .into_iter()
        .map(|origin| {
            let mut data = Vec::with_capacity(p * p * p);
            for k in 0..p {
                let sk = reflect(origin[2] + k, dims[2]);
                for j in 0..p {
                    let sj = reflect(origin[1] + j, dims[1]);
                    for i in 0..p {
                        data.push(vol.get(reflect(origin[0] + i, dims[0]), sj, sk));
                    }
                }
            }
            Ok(Patch { origin, volume: Volume3::from_parts(pgrid, data) })
        })
        .collect()
}

/// One-dimensional window of length `patch`.
pub fn window1(patch: usize, mode: WindowMode) -> Vec<f64> {
    match mode {
        WindowMode::PaperLiteral => vec![1.0; patch],
        WindowMode::PartitionOfUnity => (0..patch)
            .map(|t| (std::f64::consts::PI * (t as f64 + 0.5) / patch as f64).sin().powi(2))
            .collect(),
    }
}

/// Separable 3D window on a unit-pitch `patch³` grid.
pub fn window3(patch: usize, mode: WindowMode) -> Result<Volume3<f64>> {
    if patch % 2 != 0 {
        return Err(Error::InvalidLayout(format!("patch edge {patch} must be even")));
    }
    let w = window1(patch, mode);
    Ok(Volume3::from_fn(GridSpec::cube(patch, 1.0)?, |i, j, k| w[i] * w[j] * w[k]))
}

/// Accumulated weight over the padded canvas for `dims`.
pub fn weight_canvas(layout: &PatchLayout, dims: [usize; 3]) -> Result<Vec<f64>> {
    let pad = layout.padding(dims)?;
    let p: [usize; 3] = std::array::from_fn(|a| dims[a] + pad[a]);
    let w = window1(layout.patch, layout.mode);
    let mut canvas = vec![0.0; p[0] * p[1] * p[2]];
    for o in layout.origins(dims)? {
        accumulate(&mut canvas, p, o, layout.patch, |i, j, k| w[i] * w[j] * w[k]);
    }
    Ok(canvas)
}

fn accumulate(
    canvas: &mut [f64],
    p: [usize; 3],
    origin: [usize; 3],
    patch: usize,
    value: impl Fn(usize, usize, usize) -> f64,
) {
    for k in 0..patch {
        for j in 0..patch {
            let row = p[0] * (origin[1] + j + p[1] * (origin[2] + k)) + origin[0];
            for i in 0..patch {
                canvas[row + i] += value(i, j, k);
            }
        }
    }
}

/// Blends `patches` on the padded canvas of `grid` and crops the padding.
/// Accumulation runs sequentially in patch order.
pub fn stitch<T: Real>(patches: &[Patch<T>], layout: &PatchLayout, grid: &GridSpec) -> Result<Volume3<T>> {
    let dims = grid.shape();
    let pad = layout.padding(dims)?;
    let p: [usize; 3] = std::array::from_fn(|a| dims[a] + pad[a]);
    let pgrid = layout.patch_grid(grid)?;
    let w = window1(layout.patch, layout.mode);
    let n = p[0] * p[1] * p[2];
    let mut sum = vec![0.0; n];
    let mut weight = vec![0.0; n];
    for patch in patches {
        patch.volume.grid().expect_shape(&pgrid)?;
        let o = patch.origin;
        if (0..3).any(|a| o[a] + layout.patch > p[a]) {
            return Err(Error::InvalidLayout(format!("patch origin {o:?} exceeds padded shape {p:?}")));
        }
        let v = patch.volume.data();
        let np = layout.patch;
        accumulate(&mut sum, p, o, np, |i, j, k| {
            w[i] * w[j] * w[k] * v[i + np * (j + np * k)].to_f64_lossy()
        });
        accumulate(&mut weight, p, o, np, |i, j, k| w[i] * w[j] * w[k]);
    }
    let mut out = Vec::with_capacity(grid.len());
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let idx = i + p[0] * (j + p[1] * k);
                if weight[idx] <= 0.0 {
                    return Err(Error::CoverageHole(grid.index(i, j, k)));
                }
                out.push(T::of(sum[idx] / weight[idx]));
            }
        }
    }
    Ok(Volume3::from_parts(*grid, out))
}

/// Regularizes every patch of `raw` independently and stitches the results.
/// All patches share one mask built by `mask_builder` for the patch grid.
pub fn patched_regularize<T: Real>(
    raw: &Volume3<T>,
    mask_builder: impl FnOnce(&GridSpec) -> Result<SupportMask>,
    params: &SolverParams,
    layout: &PatchLayout,
) -> Result<(Volume3<T>, Vec<SolveReport>)> {
    params.validate()?;
    let mask = mask_builder(&layout.patch_grid(raw.grid())?)?;
    let patches = extract(raw, layout)?;
    let solved: Vec<(Patch<T>, SolveReport)> = patches
        .into_par_iter()
        .map(|p| {
            let (f, report) = regularize_volume(&p.volume, &mask, params)?;
            Ok((Patch { origin: p.origin, volume: f }, report))
        })
        .collect::<Result<_>>()?;
    let (patches, reports): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
    Ok((stitch(&patches, layout, raw.grid())?, reports))
}
