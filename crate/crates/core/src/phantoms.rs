//! Synthetic ground-truth volumes in refractive-index contrast Δn.
//!
//! Δn maps to the scattering potential through V = k₀²(n² − n_m²) ≈ 2k₀²n_m·Δn for
//! small contrast; the forward model is linear in either, so phantoms stay in Δn.
//!
//! Voxel `(i, j, k)` has its center at `((i + ½)dx, (j + ½)dy, (k + ½)dz)` µm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volgrid::{GridSpec, Volume3};

/// Δn of a silica bead (n ≈ 1.457) in aqueous medium.
pub const BEAD_CONTRAST: f64 = 0.12;
/// Bead radius in µm.
pub const BEAD_RADIUS: f64 = 1.0;

const MARGIN_VOXELS: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Edge {
    Hard,
    /// Linear ramp across `width` voxels (of the finest pitch), centered on the surface.
    Smoothed { width: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball {
    pub center: [f64; 3],
    pub radius: f64,
    pub contrast: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PhantomKind {
    Sphere(Ball),
    SpherePair([Ball; 2]),
    /// Cytoplasm ball with a denser membrane shell and embedded granules.
    ShellCell {
        center: [f64; 3],
        radius: f64,
        shell_thickness: f64,
        cytoplasm: f64,
        shell: f64,
        granules: Vec<Ball>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub background: f64,
    pub edge: Edge,
}

impl PhantomSpec {
    /// Default 2 µm bead centered in `grid`.
    pub fn bead(grid: &GridSpec) -> Self {
        Self {
            kind: PhantomKind::Sphere(Ball {
                center: grid_center(grid),
                radius: BEAD_RADIUS,
                contrast: BEAD_CONTRAST,
            }),
            background: 0.0,
            edge: Edge::Hard,
        }
    }

    /// Cell phantom with `n_granules` granules at seeded random positions inside the
    /// cytoplasm.
    #[allow(clippy::too_many_arguments)]
    pub fn shell_cell(
        center: [f64; 3],
        radius: f64,
        shell_thickness: f64,
        cytoplasm: f64,
        shell: f64,
        n_granules: usize,
        granule_radius: f64,
        granule_contrast: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reach = (radius - shell_thickness - granule_radius).max(0.0);
        let mut granules = Vec::with_capacity(n_granules);
        while granules.len() < n_granules {
            let p = [
                rng.gen_range(-1.0..=1.0),
                rng.gen_range(-1.0..=1.0),
                rng.gen_range(-1.0..=1.0),
            ];
            if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] > 1.0 {
                continue;
            }
            granules.push(Ball {
                center: [
                    center[0] + reach * p[0],
                    center[1] + reach * p[1],
                    center[2] + reach * p[2],
                ],
                radius: granule_radius,
                contrast: granule_contrast,
            });
        }
        Self {
            kind: PhantomKind::ShellCell {
                center,
                radius,
                shell_thickness,
                cytoplasm,
                shell,
                granules,
            },
            background: 0.0,
            edge: Edge::Hard,
        }
    }

    fn regions(&self) -> Vec<Region> {
        match &self.kind {
            PhantomKind::Sphere(b) => vec![Region::ball(b)],
            PhantomKind::SpherePair(bs) => bs.iter().map(Region::ball).collect(),
            PhantomKind::ShellCell { center, radius, shell_thickness, cytoplasm, shell, granules } => {
                let mut r = vec![
                    Region { center: *center, inner: 0.0, outer: *radius, contrast: *cytoplasm },
                    Region {
                        center: *center,
                        inner: radius - shell_thickness,
                        outer: *radius,
                        contrast: *shell,
                    },
                ];
                r.extend(granules.iter().map(Region::ball));
                r
            }
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !self.background.is_finite() {
            return Err(Error::InvalidPhantom("background must be finite".into()));
        }
        if let Edge::Smoothed { width } = self.edge {
            if !(width.is_finite() && width > 0.0) {
                return Err(Error::InvalidPhantom(format!("edge width {width} must be positive")));
            }
        }
        if let PhantomKind::ShellCell { radius, shell_thickness, .. } = &self.kind {
            if !(*shell_thickness > 0.0 && shell_thickness < radius) {
                return Err(Error::InvalidPhantom(format!(
                    "shell thickness {shell_thickness} must lie in (0, radius)"
                )));
            }
        }
        let spill = self.spill(grid);
        let pitch = grid.pitch();
        let extent = [grid.nx as f64 * grid.dx, grid.ny as f64 * grid.dy, grid.nz as f64 * grid.dz];
        for r in self.regions() {
            if !(r.outer.is_finite() && r.outer > 0.0) || !r.contrast.is_finite() {
                return Err(Error::InvalidPhantom(format!(
                    "radius {} and contrast {} must be finite, radius positive",
                    r.outer, r.contrast
                )));
            }
            for a in 0..3 {
                let margin = MARGIN_VOXELS * pitch[a];
                let lo = r.center[a] - r.outer - spill;
                let hi = r.center[a] + r.outer + spill;
                if !(lo >= margin && hi <= extent[a] - margin) {
                    return Err(Error::InvalidPhantom(format!(
                        "shape at {:?} with radius {} leaves the grid along axis {a}",
                        r.center, r.outer
                    )));
                }
            }
        }
        Ok(())
    }

    /// Distance beyond the nominal surface reached by a smoothed edge, in µm.
    fn spill(&self, grid: &GridSpec) -> f64 {
        match self.edge {
            Edge::Hard => 0.0,
            Edge::Smoothed { width } => 0.5 * width * min_pitch(grid),
        }
    }
}

struct Region {
    center: [f64; 3],
    inner: f64,
    outer: f64,
    contrast: f64,
}

impl Region {
    fn ball(b: &Ball) -> Self {
        Self { center: b.center, inner: 0.0, outer: b.radius, contrast: b.contrast }
    }
}

fn min_pitch(grid: &GridSpec) -> f64 {
    grid.dx.min(grid.dy).min(grid.dz)
}

/// Physical center of the grid in µm.
pub fn grid_center(grid: &GridSpec) -> [f64; 3] {
    [
        0.5 * grid.nx as f64 * grid.dx,
        0.5 * grid.ny as f64 * grid.dy,
        0.5 * grid.nz as f64 * grid.dz,
    ]
}

/// Fraction of a voxel at distance `dist` counted inside radius `r`.
#[inline]
fn occupancy(dist: f64, r: f64, edge: Edge, ramp: f64) -> f64 {
    match edge {
        Edge::Hard => {
            if dist <= r {
                1.0
            } else {
                0.0
            }
        }
        Edge::Smoothed { .. } => ((r - dist) / ramp + 0.5).clamp(0.0, 1.0),
    }
}

/// Renders the phantom: background plus the summed contrast of every shape
/// containing each voxel center.
pub fn generate<T: Real>(spec: &PhantomSpec, grid: &GridSpec) -> Result<Volume3<T>> {
    grid.validate()?;
    spec.validate(grid)?;
    let regions = spec.regions();
    let ramp = match spec.edge {
        Edge::Hard => 1.0,
        Edge::Smoothed { width } => width * min_pitch(grid),
    };
    let pitch = grid.pitch();
    // centers in voxel units keep mirrored offsets bit-identical
    let centers: Vec<[f64; 3]> = regions
        .iter()
        .map(|r| [r.center[0] / pitch[0], r.center[1] / pitch[1], r.center[2] / pitch[2]])
        .collect();
    Ok(Volume3::from_fn(*grid, |i, j, k| {
        let idx = [i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5];
        let mut v = spec.background;
        for (r, c) in regions.iter().zip(&centers) {
            let mut d2 = 0.0;
            for a in 0..3 {
                let o = (idx[a] - c[a]) * pitch[a];
                d2 += o * o;
            }
            let d = d2.sqrt();
            let mut occ = occupancy(d, r.outer, spec.edge, ramp);
            if r.inner > 0.0 {
                occ -= occupancy(d, r.inner, spec.edge, ramp);
            }
            v += r.contrast * occ;
        }
        T::of(v)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_contrast_sphere_is_background() {
        let grid = GridSpec::cube(32, 0.1).unwrap();
        let mut spec = PhantomSpec::bead(&grid);
        spec.background = 0.01;
        if let PhantomKind::Sphere(b) = &mut spec.kind {
            b.contrast = 0.0;
        }
        let v: Volume3<f64> = generate(&spec, &grid).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.01));
    }

    #[test]
    fn hard_sphere_volume_matches_analytic() {
        let grid = GridSpec::cube(64, 0.05).unwrap();
        let spec = PhantomSpec::bead(&grid);
        let v: Volume3<f64> = generate(&spec, &grid).unwrap();
        let count = v.data().iter().filter(|&&x| x > 0.0).count() as f64;
        let analytic = 4.0 / 3.0 * std::f64::consts::PI * BEAD_RADIUS.powi(3) / 0.05f64.powi(3);
        assert!((count - analytic).abs() / analytic < 0.05, "{count} vs {analytic}");
        assert_eq!(v.max(), BEAD_CONTRAST);
    }

    #[test]
    fn disjoint_pair_max_is_single_contrast() {
        let grid = GridSpec::cube(48, 0.1).unwrap();
        let spec = PhantomSpec {
            kind: PhantomKind::SpherePair([
                Ball { center: [1.4, 2.4, 2.4], radius: 0.8, contrast: 0.05 },
                Ball { center: [3.4, 2.4, 2.4], radius: 0.8, contrast: 0.05 },
            ]),
            background: 0.0,
            edge: Edge::Hard,
        };
        let v: Volume3<f64> = generate(&spec, &grid).unwrap();
        assert_eq!(v.max(), 0.05);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let grid = GridSpec::cube(32, 0.1).unwrap();
        let spec = PhantomSpec {
            kind: PhantomKind::Sphere(Ball { center: [0.3, 1.6, 1.6], radius: 0.5, contrast: 0.1 }),
            background: 0.0,
            edge: Edge::Hard,
        };
        assert!(matches!(generate::<f64>(&spec, &grid), Err(Error::InvalidPhantom(_))));
        // 2-voxel margin is 0.2 µm on a 3.2 µm field centered at 1.6 µm
        let mut ok = PhantomSpec::bead(&grid);
        if let PhantomKind::Sphere(b) = &mut ok.kind {
            b.radius = 1.35;
        }
        assert!(generate::<f64>(&ok, &grid).is_ok());
        if let PhantomKind::Sphere(b) = &mut ok.kind {
            b.radius = 1.45;
        }
        assert!(generate::<f64>(&ok, &grid).is_err());
    }

    #[test]
    fn centered_sphere_is_mirror_symmetric() {
        for grid in [GridSpec::cube(32, 0.1).unwrap(), GridSpec::new(40, 36, 32, 0.11, 0.1, 0.2).unwrap()] {
            let mut spec = PhantomSpec::bead(&grid);
            spec.edge = Edge::Smoothed { width: 2.0 };
            let v: Volume3<f64> = generate(&spec, &grid).unwrap();
            let (nx, ny, nz) = grid.dims();
            for k in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        let x = v.get(i, j, k);
                        assert_eq!(x, v.get(nx - 1 - i, j, k));
                        assert_eq!(x, v.get(i, ny - 1 - j, k));
                        assert_eq!(x, v.get(i, j, nz - 1 - k));
                    }
                }
            }
        }
    }

    #[test]
    fn smoothed_edge_ramps_linearly() {
        let grid = GridSpec::cube(48, 0.1).unwrap();
        let mut spec = PhantomSpec::bead(&grid);
        spec.edge = Edge::Smoothed { width: 4.0 };
        let v: Volume3<f64> = generate(&spec, &grid).unwrap();
        // row j = k = 24 sits 0.05 µm off center in y and z; ramp spans 0.8..1.2 µm
        let profile: Vec<f64> = (0..48).map(|i| v.get(i, 24, 24)).collect();
        let inner = profile[24 + 7]; // x offset 0.75
        assert!((inner - BEAD_CONTRAST).abs() < 1e-15);
        let on_ramp = profile[24 + 9]; // x offset 0.95
        let d = (0.95f64 * 0.95 + 2.0 * 0.05 * 0.05).sqrt();
        let expect = ((1.0 - d) / 0.4 + 0.5) * BEAD_CONTRAST;
        assert!((on_ramp - expect).abs() < 1e-12);
        assert_eq!(profile[24 + 12], 0.0);
    }

    #[test]
    fn shell_cell_is_nonnegative_and_seeded() {
        let grid = GridSpec::new(64, 64, 32, 0.1, 0.1, 0.2).unwrap();
        let c = grid_center(&grid);
        let a = PhantomSpec::shell_cell(c, 2.4, 0.2, 0.02, 0.03, 6, 0.25, 0.04, 9);
        let b = PhantomSpec::shell_cell(c, 2.4, 0.2, 0.02, 0.03, 6, 0.25, 0.04, 9);
        assert_eq!(a, b);
        let v: Volume3<f64> = generate(&a, &grid).unwrap();
        assert!(v.min() >= 0.0);
        assert!(v.max() >= 0.06 - 1e-12);
        let d = PhantomSpec::shell_cell(c, 2.4, 0.2, 0.02, 0.03, 6, 0.25, 0.04, 10);
        assert_ne!(a, d);
    }
}
