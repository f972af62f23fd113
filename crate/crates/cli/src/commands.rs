use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use tvreg::bregman::{regularize, SolveReport, SolverParams};
use tvreg::optics::{build_support_mask, degrade};
use tvreg::patchwork::patched_regularize;
use tvreg::volio::{self, PayloadKind};
use tvreg::{metrics, phantoms, Fft3, Volume};

use crate::config::{NonnegName, PatternName, PhantomName, RunConfig};
use crate::{bench, Cli, Command, Failure, GridArgs, NonnegArg, OpticsArgs, PatternArg, PhantomArg, SolverArgs};

type Outcome<T> = std::result::Result<T, Failure>;

fn core<T>(r: tvreg::Result<T>) -> Outcome<T> {
    r.map_err(|e| Failure::from_core(e, None))
}

fn core_at<T>(r: tvreg::Result<T>, path: &Path) -> Outcome<T> {
    r.map_err(|e| Failure::from_core(e, Some(path)))
}

fn load_config(cli: &Cli) -> Outcome<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) if !p.exists() => return Err(Failure::MissingInput(p.clone())),
        Some(p) => RunConfig::load(p).map_err(Failure::InvalidConfig)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.phantom.seed = seed;
    }
    Ok(cfg)
}

fn triple<T: Copy>(name: &str, v: &[T]) -> Outcome<[T; 3]> {
    <[T; 3]>::try_from(v).map_err(|_| Failure::InvalidConfig(format!("--{name} takes three comma-separated values")))
}

fn apply_grid(cfg: &mut RunConfig, a: &GridArgs) -> Outcome<()> {
    if let Some(s) = &a.shape {
        cfg.grid.shape = triple("shape", s)?;
    }
    if let Some(p) = &a.pitch {
        cfg.grid.pitch = triple("pitch", p)?;
    }
    Ok(())
}

fn apply_optics(cfg: &mut RunConfig, a: &OpticsArgs) {
    let o = &mut cfg.optics;
    if let Some(v) = a.wavelength {
        o.wavelength = v;
    }
    if let Some(v) = a.n_medium {
        o.n_medium = v;
    }
    if let Some(v) = a.na_illum {
        o.na_illum = v;
    }
    if let Some(v) = a.na_detect {
        o.na_detect = v;
    }
    if let Some(v) = a.n_angles {
        o.n_angles = v;
    }
    if let Some(p) = a.pattern {
        o.pattern = match p {
            PatternArg::Circle => PatternName::Circle,
            PatternArg::Spiral => PatternName::Spiral,
        };
    }
}

/// A preset given on the command line replaces the configured preset and any
/// configured explicit values; explicit flags then override it.
fn apply_solver(cfg: &mut RunConfig, a: &SolverArgs) {
    let s = &mut cfg.solver;
    if let Some(p) = &a.preset {
        s.preset = Some(p.clone());
        s.n_outer = None;
        s.n_inner = None;
        s.mu = None;
        s.tau = None;
        s.gamma = None;
    }
    s.n_outer = a.n_outer.or(s.n_outer);
    s.n_inner = a.n_inner.or(s.n_inner);
    s.mu = a.mu.or(s.mu);
    s.tau = a.tau.or(s.tau);
    s.gamma = a.gamma.or(s.gamma);
    if let Some(m) = a.nonneg_mode {
        s.nonneg_mode = match m {
            NonnegArg::PaperShrink => NonnegName::PaperShrink,
            NonnegArg::Project => NonnegName::Project,
        };
    }
}

fn output_path(cfg: &RunConfig, given: &Option<PathBuf>, default: &str) -> Outcome<PathBuf> {
    let path = given.clone().unwrap_or_else(|| cfg.output.dir.join(default));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Other(format!("{}: {e}", dir.display())))?;
    }
    Ok(path)
}

fn write_volume(cfg: &RunConfig, path: &Path, vol: &Volume) -> Outcome<()> {
    core_at(volio::write_vol(path, vol), path)?;
    if cfg.output.export_raw {
        let raw = path.with_extension("raw");
        core_at(volio::write_raw_f32(&raw, vol), &raw)?;
    }
    Ok(())
}

fn read_volume(path: &Path) -> Outcome<Volume> {
    core_at(volio::read_vol(path), path)
}

/// Parses the configuration, applies flags, validates, and runs the command.
pub fn run(cli: Cli) -> Outcome<()> {
    if let Some(n) = cli.threads {
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Phantom { out, grid, kind } => {
            apply_grid(&mut cfg, grid)?;
            if let Some(k) = kind {
                cfg.phantom.kind = match k {
                    PhantomArg::Bead => PhantomName::Bead,
                    PhantomArg::SpherePair => PhantomName::SpherePair,
                    PhantomArg::Cell => PhantomName::Cell,
                };
            }
            core(cfg.validate())?;
            let g = core(cfg.grid())?;
            let vol: Volume = core(phantoms::generate(&core(cfg.phantom(&g))?, &g))?;
            let path = output_path(&cfg, out, "truth.vol3")?;
            write_volume(&cfg, &path, &vol)?;
            println!("phantom {:?} on {}x{}x{} -> {}", cfg.phantom.kind, g.nx, g.ny, g.nz, path.display());
        }
        Command::Mask { out, grid, optics } => {
            apply_grid(&mut cfg, grid)?;
            apply_optics(&mut cfg, optics);
            core(cfg.validate())?;
            let g = core(cfg.grid())?;
            let mask = core(build_support_mask(&core(cfg.geometry())?, &g))?;
            let path = output_path(&cfg, out, "mask.vol3")?;
            core_at(volio::write_mask(&path, &mask), &path)?;
            println!(
                "mask {} of {} voxels ({:.1}%) -> {}",
                mask.count(),
                g.len(),
                100.0 * mask.count() as f64 / g.len() as f64,
                path.display()
            );
        }
        Command::Degrade { truth, mask, spectrum_out, raw_out } => {
            core(cfg.validate())?;
            let t = read_volume(truth)?;
            let m = core_at(volio::read_mask(mask), mask)?;
            let (g, raw) = core(degrade(&t, &m))?;
            let sp = output_path(&cfg, spectrum_out, "spectrum.vol3")?;
            let rp = output_path(&cfg, raw_out, "raw.vol3")?;
            core_at(volio::write_spec(&sp, &g), &sp)?;
            write_volume(&cfg, &rp, &raw)?;
            println!("spectrum -> {}, raw -> {}", sp.display(), rp.display());
        }
        Command::Regularize { input, mask, out, report, solver, patched, whole, optics } => {
            apply_solver(&mut cfg, solver);
            apply_optics(&mut cfg, optics);
            if *patched {
                cfg.patch.enabled = true;
            }
            if *whole {
                cfg.patch.enabled = false;
            }
            let params = core(cfg.solver())?;
            core(cfg.geometry())?;
            let layout = core(cfg.layout())?;
            let header = core_at(volio::read_header(input), input)?;
            let t0 = Instant::now();
            let (f, reports, mode) = if cfg.patch.enabled {
                let raw: Volume = match header.kind {
                    PayloadKind::Real => read_volume(input)?,
                    PayloadKind::Complex => {
                        let g = core_at(volio::read_spec(input), input)?;
                        core(Fft3::new(g.grid()).inverse(&g))?
                    }
                    PayloadKind::Mask => {
                        return Err(Failure::InvalidConfig(format!("{} holds a mask", input.display())))
                    }
                };
                let geom = core(cfg.geometry())?;
                let (f, reports) =
                    core(patched_regularize(&raw, |g| build_support_mask(&geom, g), &params, &layout))?;
                (f, reports, "patched")
            } else {
                let mask_path = mask
                    .as_ref()
                    .ok_or_else(|| Failure::InvalidConfig("--mask is required unless --patched".into()))?;
                let m = core_at(volio::read_mask(mask_path), mask_path)?;
                let g = match header.kind {
                    PayloadKind::Complex => core_at(volio::read_spec(input), input)?,
                    PayloadKind::Real => {
                        let raw = read_volume(input)?;
                        if !raw.grid().same_shape(m.grid()) {
                            return Err(Failure::InvalidConfig(format!(
                                "input shape {:?} differs from mask shape {:?}",
                                raw.grid().shape(),
                                m.grid().shape()
                            )));
                        }
                        core(core(Fft3::new(raw.grid()).forward(&raw))?.masked(&m))?
                    }
                    PayloadKind::Mask => {
                        return Err(Failure::InvalidConfig(format!("{} holds a mask", input.display())))
                    }
                };
                let (f, r) = core(regularize(&g, &m, &params))?;
                (f, vec![r], "whole")
            };
            let wall = t0.elapsed().as_secs_f64();
            let path = output_path(&cfg, out, "regularized.vol3")?;
            write_volume(&cfg, &path, &f)?;
            let rp = output_path(&cfg, report, "report.json")?;
            let text = serde_json::to_string_pretty(&report_json(&params, mode, &cfg, wall, &reports))
                .map_err(|e| Failure::Other(e.to_string()))?;
            core_at(volio::write_atomic(&rp, text.as_bytes()), &rp)?;
            let last = reports.iter().filter_map(|r| r.residuals.last()).fold(0.0f64, |a, &b| a.max(b));
            println!(
                "regularized ({mode}, N={}, M={}, mu={}, tau={}, gamma={}, {}) in {wall:.2} s; final residual {last:.4e} -> {}",
                params.n_outer, params.n_inner, params.mu, params.tau, params.gamma, params.nonneg_mode, path.display()
            );
        }
        Command::Eval { a, b, z_range, out } => {
            let va = read_volume(a)?;
            let vb = read_volume(b)?;
            let rep = core(metrics::slice_report(&va, &vb, *z_range))?;
            let path = output_path(&cfg, out, "eval.csv")?;
            core_at(volio::write_slice_csv(&path, &rep), &path)?;
            println!(
                "{} slices: mse {:.4e} ssim {:.4} pearson {:.4} -> {}",
                rep.rows.len(),
                rep.mse,
                rep.ssim,
                rep.pearson,
                path.display()
            );
        }
        Command::Bench { sizes, interpretation, n_inner, n_outer, out } => {
            let sizes = match sizes {
                Some(list) => list
                    .iter()
                    .map(|s| bench::parse_size(s))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(Failure::InvalidConfig)?,
                None => bench::DEFAULT_LADDER.to_vec(),
            };
            let mut params: SolverParams = interpretation.params();
            if let Some(n) = n_inner {
                params.n_inner = *n;
            }
            if let Some(n) = n_outer {
                params.n_outer = *n;
            }
            core(params.validate())?;
            let geom = core(cfg.geometry())?;
            println!("{}", interpretation.describe());
            println!("iterations: N={} outer x M={} inner", params.n_outer, params.n_inner);
            let path = output_path(&cfg, out, "bench.csv")?;
            let rows = bench::run_ladder(&sizes, &geom, &params, |row| {
                println!(
                    "{:>4}x{:<4}x{:<4} {:>10} voxels {:>9.3} s",
                    row.dims[0], row.dims[1], row.dims[2], row.voxels, row.seconds
                );
            })
            .map_err(|e| Failure::from_core(e, None))?;
            core_at(volio::write_atomic(&path, bench::csv(&rows).as_bytes()), &path)?;
            println!("-> {}", path.display());
        }
    }
    Ok(())
}

fn report_json(
    params: &SolverParams,
    mode: &str,
    cfg: &RunConfig,
    wall: f64,
    reports: &[SolveReport],
) -> serde_json::Value {
    let per = |r: &SolveReport| {
        json!({
            "residuals": r.residuals,
            "objective": r.objective,
            "timings_s": {
                "f_update": r.timings.f_update.as_secs_f64(),
                "shrinkage": r.timings.shrinkage.as_secs_f64(),
                "bookkeeping": r.timings.bookkeeping.as_secs_f64(),
            },
            "min_f": r.min_f,
        })
    };
    json!({
        "mode": mode,
        "params": {
            "n_outer": params.n_outer,
            "n_inner": params.n_inner,
            "mu": params.mu,
            "tau": params.tau,
            "gamma": params.gamma,
            "nonneg_mode": params.nonneg_mode.to_string(),
            "tol_fupdate": params.tol_fupdate,
        },
        "patch": if mode == "patched" {
            json!({ "patch": cfg.patch.patch, "stride": cfg.patch.stride, "window": format!("{:?}", cfg.patch.mode) })
        } else {
            serde_json::Value::Null
        },
        "wall_s": wall,
        "solves": reports.iter().map(per).collect::<Vec<_>>(),
    })
}
