//! TOML run configuration. Every section and key is optional; unknown keys are
//! rejected. Command-line flags are applied on top before validation.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use tvreg::bregman::{NonnegMode, SolverParams};
use tvreg::optics::{IllumPattern, OpticsGeometry};
use tvreg::patchwork::{PatchLayout, WindowMode};
use tvreg::phantoms::{grid_center, Ball, Edge, PhantomKind, PhantomSpec};
use tvreg::GridSpec;

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub optics: OpticsSection,
    pub phantom: PhantomSection,
    pub solver: SolverSection,
    pub patch: PatchSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Voxels along x, y, z.
    pub shape: [usize; 3],
    /// Voxel pitch along x, y, z in µm.
    pub pitch: [f64; 3],
}

impl Default for GridSection {
    fn default() -> Self {
        Self { shape: [64, 64, 64], pitch: [0.1, 0.1, 0.1] }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PatternName {
    #[default]
    Circle,
    Spiral,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OpticsSection {
    pub wavelength: f64,
    pub n_medium: f64,
    pub na_illum: f64,
    pub na_detect: f64,
    pub n_angles: usize,
    pub pattern: PatternName,
}

impl Default for OpticsSection {
    fn default() -> Self {
        let g = OpticsGeometry::default();
        Self {
            wavelength: g.wavelength,
            n_medium: g.n_medium,
            na_illum: g.na_illum,
            na_detect: g.na_detect,
            n_angles: g.n_angles,
            pattern: PatternName::Circle,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PhantomName {
    #[default]
    Bead,
    SpherePair,
    Cell,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSection {
    pub kind: PhantomName,
    /// Sphere radius (bead, pair) or cell radius, µm.
    pub radius: f64,
    /// Refractive-index contrast of the bead or of each pair member.
    pub contrast: f64,
    pub background: f64,
    /// Width of the linear edge ramp in voxels; 0 gives a hard edge.
    pub edge_width: f64,
    /// Center-to-center distance of the pair along x, µm.
    pub separation: f64,
    pub shell_thickness: f64,
    pub cytoplasm: f64,
    pub shell: f64,
    pub n_granules: usize,
    pub granule_radius: f64,
    pub granule_contrast: f64,
    /// Seed for granule placement.
    pub seed: u64,
}

impl Default for PhantomSection {
    fn default() -> Self {
        Self {
            kind: PhantomName::Bead,
            radius: tvreg::phantoms::BEAD_RADIUS,
            contrast: tvreg::phantoms::BEAD_CONTRAST,
            background: 0.0,
            edge_width: 0.0,
            separation: 2.5,
            shell_thickness: 0.15,
            cytoplasm: 0.02,
            shell: 0.05,
            n_granules: 8,
            granule_radius: 0.2,
            granule_contrast: 0.04,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum NonnegName {
    PaperShrink,
    #[default]
    Project,
}

impl From<NonnegName> for NonnegMode {
    fn from(n: NonnegName) -> Self {
        match n {
            NonnegName::PaperShrink => NonnegMode::PaperShrink,
            NonnegName::Project => NonnegMode::Project,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Named parameter set; explicit values below override its entries.
    pub preset: Option<String>,
    pub n_outer: Option<usize>,
    pub n_inner: Option<usize>,
    pub mu: Option<f64>,
    pub tau: Option<f64>,
    pub gamma: Option<f64>,
    pub nonneg_mode: NonnegName,
    pub tol_fupdate: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            preset: Some("bead".into()),
            n_outer: None,
            n_inner: None,
            mu: None,
            tau: None,
            gamma: None,
            nonneg_mode: NonnegName::Project,
            tol_fupdate: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum WindowName {
    PaperLiteral,
    #[default]
    PartitionOfUnity,
}

impl From<WindowName> for WindowMode {
    fn from(n: WindowName) -> Self {
        match n {
            WindowName::PaperLiteral => WindowMode::PaperLiteral,
            WindowName::PartitionOfUnity => WindowMode::PartitionOfUnity,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PatchSection {
    /// Regularize patch by patch instead of the whole volume at once.
    pub enabled: bool,
    pub patch: usize,
    pub stride: usize,
    pub mode: WindowName,
}

impl Default for PatchSection {
    fn default() -> Self {
        let l = PatchLayout::default();
        Self { enabled: false, patch: l.patch, stride: l.stride, mode: WindowName::PartitionOfUnity }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Directory for outputs whose path is not given on the command line.
    pub dir: PathBuf,
    /// Also write each output volume as headerless little-endian f32 (`.raw`).
    pub export_raw: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), export_raw: false }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn grid(&self) -> tvreg::Result<GridSpec> {
        let [nx, ny, nz] = self.grid.shape;
        let [dx, dy, dz] = self.grid.pitch;
        GridSpec::new(nx, ny, nz, dx, dy, dz)
    }

    pub fn geometry(&self) -> tvreg::Result<OpticsGeometry> {
        let o = &self.optics;
        let geom = OpticsGeometry {
            wavelength: o.wavelength,
            n_medium: o.n_medium,
            na_illum: o.na_illum,
            na_detect: o.na_detect,
            n_angles: o.n_angles,
            pattern: match o.pattern {
                PatternName::Circle => IllumPattern::Circle,
                PatternName::Spiral => IllumPattern::Spiral,
            },
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn phantom(&self, grid: &GridSpec) -> tvreg::Result<PhantomSpec> {
        let p = &self.phantom;
        let center = grid_center(grid);
        let mut spec = match p.kind {
            PhantomName::Bead => PhantomSpec {
                kind: PhantomKind::Sphere(Ball { center, radius: p.radius, contrast: p.contrast }),
                background: 0.0,
                edge: Edge::Hard,
            },
            PhantomName::SpherePair => {
                let half = 0.5 * p.separation;
                let ball = |dx: f64| Ball {
                    center: [center[0] + dx, center[1], center[2]],
                    radius: p.radius,
                    contrast: p.contrast,
                };
                PhantomSpec {
                    kind: PhantomKind::SpherePair([ball(-half), ball(half)]),
                    background: 0.0,
                    edge: Edge::Hard,
                }
            }
            PhantomName::Cell => PhantomSpec::shell_cell(
                center,
                p.radius,
                p.shell_thickness,
                p.cytoplasm,
                p.shell,
                p.n_granules,
                p.granule_radius,
                p.granule_contrast,
                p.seed,
            ),
        };
        spec.background = p.background;
        spec.edge = if p.edge_width > 0.0 { Edge::Smoothed { width: p.edge_width } } else { Edge::Hard };
        spec.validate(grid)?;
        Ok(spec)
    }

    pub fn solver(&self) -> tvreg::Result<SolverParams> {
        let s = &self.solver;
        let mut params = match &s.preset {
            Some(name) => SolverParams::preset(name)?,
            None => {
                let missing: Vec<&str> = [
                    ("n_outer", s.n_outer.is_none()),
                    ("n_inner", s.n_inner.is_none()),
                    ("mu", s.mu.is_none()),
                    ("tau", s.tau.is_none()),
                    ("gamma", s.gamma.is_none()),
                ]
                .iter()
                .filter(|(_, m)| *m)
                .map(|(n, _)| *n)
                .collect();
                if !missing.is_empty() {
                    return Err(tvreg::Error::InvalidParams(format!(
                        "no preset given and missing {}",
                        missing.join(", ")
                    )));
                }
                SolverParams::new(0, 0, 0.0, 0.0, 0.0)
            }
        };
        if let Some(v) = s.n_outer {
            params.n_outer = v;
        }
        if let Some(v) = s.n_inner {
            params.n_inner = v;
        }
        if let Some(v) = s.mu {
            params.mu = v;
        }
        if let Some(v) = s.tau {
            params.tau = v;
        }
        if let Some(v) = s.gamma {
            params.gamma = v;
        }
        params.nonneg_mode = s.nonneg_mode.into();
        params.tol_fupdate = s.tol_fupdate;
        params.validate()?;
        Ok(params)
    }

    pub fn layout(&self) -> tvreg::Result<PatchLayout> {
        PatchLayout::new(self.patch.patch, self.patch.stride, self.patch.mode.into())
    }

    /// Builds every derived object so configuration errors surface before any
    /// computation.
    pub fn validate(&self) -> tvreg::Result<()> {
        let grid = self.grid()?;
        let geom = self.geometry()?;
        geom.check_nyquist(&grid)?;
        self.phantom(&grid)?;
        self.solver()?;
        self.layout()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.solver().unwrap(), SolverParams::bead());
        assert_eq!(RunConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[grid]\nshap = [4, 4, 4]\n").is_err());
        assert!(RunConfig::from_toml("[solvers]\n").is_err());
        assert!(RunConfig::from_toml("[solver]\nnonneg_mode = \"clip\"\n").is_err());
    }

    #[test]
    fn explicit_solver_values_override_preset() {
        let c = RunConfig::from_toml("[solver]\npreset = \"ociaml3\"\nmu = 20.0\nnonneg_mode = \"paper_shrink\"\n").unwrap();
        let p = c.solver().unwrap();
        assert_eq!((p.n_outer, p.n_inner, p.mu, p.tau, p.gamma), (3, 60, 20.0, 150.0, 1.0));
        assert_eq!(p.nonneg_mode, NonnegMode::PaperShrink);
    }

    #[test]
    fn explicit_solver_needs_all_values() {
        let c = RunConfig::from_toml("[solver]\npreset = \"bead\"\n").unwrap();
        assert!(c.solver().is_ok());
        let mut c = RunConfig::default();
        c.solver.preset = None;
        c.solver.mu = Some(1.0);
        assert!(c.solver().is_err());
        c.solver.n_outer = Some(1);
        c.solver.n_inner = Some(1);
        c.solver.tau = Some(1.0);
        c.solver.gamma = Some(1.0);
        assert!(c.solver().is_ok());
        c.solver.mu = Some(0.0);
        assert!(c.solver().is_err());
    }

    #[test]
    fn phantom_kinds_build() {
        for kind in ["bead", "sphere_pair", "cell"] {
            let c = RunConfig::from_toml(&format!("[phantom]\nkind = \"{kind}\"\nedge_width = 1.0\n")).unwrap();
            let g = c.grid().unwrap();
            c.phantom(&g).unwrap();
        }
    }

    #[test]
    fn readme_example_parses() {
        let text = include_str!("../../../README.md");
        let start = text.find("```toml\n").expect("README has a toml block") + 8;
        let end = start + text[start..].find("```").unwrap();
        let c = RunConfig::from_toml(&text[start..end]).unwrap();
        c.validate().unwrap();
    }
}
