//! Solver wall time over a ladder of volume sizes with the z extent fixed at 64.

use std::time::Instant;

use clap::ValueEnum;

use tvreg::bregman::{regularize, SolverParams};
use tvreg::optics::{build_support_mask, degrade, OpticsGeometry};
use tvreg::phantoms::{generate, PhantomSpec};
use tvreg::{GridSpec, Volume};

pub const DEFAULT_LADDER: [[usize; 3]; 9] = [
    [64, 64, 64],
    [96, 96, 64],
    [128, 128, 64],
    [160, 160, 64],
    [192, 192, 64],
    [224, 224, 64],
    [256, 256, 64],
    [288, 288, 64],
    [320, 320, 64],
];

/// Isotropic pitch of the benchmark grids, µm.
pub const BENCH_PITCH: f64 = 0.1;

/// The benchmark iteration count is stated both as "two iterations" and as
/// 100 inner by 5 outer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Interpretation {
    /// N = 5 outer, M = 100 inner.
    HundredFive,
    /// N = 2 outer, M = 100 inner.
    TwoOuter,
}

impl Interpretation {
    /// Bead weights (μ, τ, γ) = (10, 10, 1) with this iteration count.
    pub fn params(self) -> SolverParams {
        match self {
            Self::HundredFive => SolverParams::new(5, 100, 10.0, 10.0, 1.0),
            Self::TwoOuter => SolverParams::new(2, 100, 10.0, 10.0, 1.0),
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Self::HundredFive => "iteration interpretation: hundred-five (100 inner x 5 outer)",
            Self::TwoOuter => "iteration interpretation: two-outer (100 inner x 2 outer)",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub dims: [usize; 3],
    pub voxels: usize,
    pub seconds: f64,
    pub f_update: f64,
    pub shrinkage: f64,
    pub bookkeeping: f64,
}

/// Parses `NXxNYxNZ`.
pub fn parse_size(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.trim().split('x').collect();
    if parts.len() != 3 {
        return Err(format!("size {s:?} is not of the form NXxNYxNZ"));
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("size {s:?}: {p:?} is not a voxel count"))?;
    }
    Ok(out)
}

/// Times one regularization of a degraded bead per size. Phantom and mask
/// construction are excluded from the timing.
pub fn run_ladder(
    sizes: &[[usize; 3]],
    geom: &OpticsGeometry,
    params: &SolverParams,
    mut progress: impl FnMut(&BenchRow),
) -> tvreg::Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &[nx, ny, nz] in sizes {
        let grid = GridSpec::new(nx, ny, nz, BENCH_PITCH, BENCH_PITCH, BENCH_PITCH)?;
        let truth: Volume = generate(&PhantomSpec::bead(&grid), &grid)?;
        let mask = build_support_mask(geom, &grid)?;
        let (g, _) = degrade(&truth, &mask)?;
        let t0 = Instant::now();
        let (_, report) = regularize(&g, &mask, params)?;
        let row = BenchRow {
            dims: [nx, ny, nz],
            voxels: grid.len(),
            seconds: t0.elapsed().as_secs_f64(),
            f_update: report.timings.f_update.as_secs_f64(),
            shrinkage: report.timings.shrinkage.as_secs_f64(),
            bookkeeping: report.timings.bookkeeping.as_secs_f64(),
        };
        progress(&row);
        rows.push(row);
    }
    Ok(rows)
}

pub fn csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("nx,ny,nz,voxels,seconds,f_update_s,shrinkage_s,bookkeeping_s\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
            r.dims[0], r.dims[1], r.dims[2], r.voxels, r.seconds, r.f_update, r.shrinkage, r.bookkeeping
        ));
    }
    s
}
