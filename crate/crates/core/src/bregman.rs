//! Split Bregman solver for total-variation + non-negativity regularization of a
//! Fourier-masked measurement.
//!
//! The inner loop minimizes
//!
//! ```text
//!   ‖(d_x, d_y, d_z)‖₂,₁ + N(w ≥ 0) + μ/2‖Af − gᵏ‖² + τ/2‖d − ∇f − b‖² + γ/2‖w − f − b_w‖²
//! ```
//!
//! by alternating a quadratic f-solve, isotropic shrinkage of `d`, the
//! non-negativity step for `w` and multiplier updates. After each inner loop the
//! measurement is refreshed with `gᵏ⁺¹ = gᵏ + g − Afᵏ⁺¹`.
//!
//! `A = M·F` is the unitary FFT restricted to the support mask `M`, so `AᵀA`
//! is diagonal in the Fourier basis and the f-update
//!
//! ```text
//!   (μAᵀA + τ∇ᵀ∇ + γI) f = μAᵀgᵏ + τ∇ᵀ(d − b) + γ(w − b_w)
//! ```
//!
//! is solved by one forward FFT, a pointwise division by `μM(k) + τD(k) + γ`
//! (`D` from [`laplacian_symbol`]) and one inverse FFT. The system is positive
//! definite because `γ > 0`.

use std::time::{Duration, Instant};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volgrid::{
    div_into, grad_into, laplacian_symbol, take_real, Fft3, GridSpec, Spectrum3, SupportMask,
    Volume3, HERMITIAN_TOL,
};

/// How the split variable `w` is pulled towards non-negativity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NonnegMode {
    /// Soft threshold `max(|v| − 1/γ, 0)·v/|v|` with `v = f + b_w`.
    PaperShrink,
    /// Projection `max(v, 0)`.
    #[default]
    Project,
}

impl std::str::FromStr for NonnegMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_shrink" => Ok(Self::PaperShrink),
            "project" => Ok(Self::Project),
            other => Err(Error::InvalidParams(format!(
                "unknown non-negativity mode {other:?} (expected paper_shrink or project)"
            ))),
        }
    }
}

impl std::fmt::Display for NonnegMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::PaperShrink => "paper_shrink",
            Self::Project => "project",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    /// Outer (Bregman) iterations N.
    pub n_outer: usize,
    /// Inner iterations M per outer iteration.
    pub n_inner: usize,
    /// Data fidelity weight μ.
    pub mu: f64,
    /// TV splitting weight τ (also the shrinkage threshold 1/τ).
    pub tau: f64,
    /// Non-negativity splitting weight γ.
    pub gamma: f64,
    pub nonneg_mode: NonnegMode,
    /// Relative residual bound of an iterative f-solve; 0 selects the exact
    /// Fourier solve.
    pub tol_fupdate: f64,
}

/// Named parameter sets `(N, M, μ, τ, γ)`.
pub const PRESETS: [(&str, (usize, usize, f64, f64, f64)); 3] = [
    ("bead", (2, 400, 10.0, 10.0, 1.0)),
    ("spyogenes", (5, 100, 50.0, 50.0, 1.0)),
    ("ociaml3", (3, 60, 150.0, 150.0, 1.0)),
];

impl SolverParams {
    pub fn new(n_outer: usize, n_inner: usize, mu: f64, tau: f64, gamma: f64) -> Self {
        Self {
            n_outer,
            n_inner,
            mu,
            tau,
            gamma,
            nonneg_mode: NonnegMode::Project,
            tol_fupdate: 0.0,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|&(_, (n, m, mu, tau, gamma))| Self::new(n, m, mu, tau, gamma))
            .ok_or_else(|| Error::InvalidParams(format!("unknown preset {name:?}")))
    }

    pub fn bead() -> Self {
        Self::new(2, 400, 10.0, 10.0, 1.0)
    }

    pub fn with_mode(mut self, mode: NonnegMode) -> Self {
        self.nonneg_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_outer == 0 || self.n_inner == 0 {
            return Err(Error::InvalidParams("N and M must be at least 1".into()));
        }
        for (name, v) in [("mu", self.mu), ("tau", self.tau), ("gamma", self.gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.tol_fupdate.is_finite() && self.tol_fupdate >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "tol_fupdate = {} must be non-negative",
                self.tol_fupdate
            )));
        }
        Ok(())
    }
}

/// All working variables of one solve. Every array shares one grid.
#[derive(Clone, Debug)]
pub struct SolverState<T: Real> {
    pub f: Volume3<T>,
    /// Split gradient `(d_x, d_y, d_z)`.
    pub d: [Volume3<T>; 3],
    pub w: Volume3<T>,
    /// Multipliers `(b_x, b_y, b_z)`.
    pub b: [Volume3<T>; 3],
    pub bw: Volume3<T>,
    /// Bregman-refreshed data, zero off the mask.
    pub gk: Spectrum3<T>,
    pub outer: usize,
    pub inner: usize,
}

/// Wall-clock split of a solve.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimings {
    pub f_update: Duration,
    pub shrinkage: Duration,
    pub bookkeeping: Duration,
}

impl PhaseTimings {
    pub fn total(&self) -> Duration {
        self.f_update + self.shrinkage + self.bookkeeping
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub params: SolverParams,
    /// `‖Af − g‖₂` on the support after each outer iteration, against the
    /// original measurement.
    pub residuals: Vec<f64>,
    /// `μ/2‖Af − g‖² + TV(f)` after every inner iteration.
    pub objective: Vec<f64>,
    pub timings: PhaseTimings,
    pub min_f: f64,
}

/// Solver bound to one measurement, mask and parameter set. Caches the FFT plans
/// and the f-update divisor.
pub struct Bregman<T: Real> {
    params: SolverParams,
    mask: SupportMask,
    g: Spectrum3<T>,
    plan: Fft3<T>,
    divisor: Vec<T>,
    /// Fourier transform of the most recent f-update.
    fhat: Vec<Complex<T>>,
}

impl<T: Real> Bregman<T> {
    /// Checks `g` is Hermitian and vanishes off `mask`.
    pub fn new(g: Spectrum3<T>, mask: SupportMask, params: SolverParams) -> Result<Self> {
        params.validate()?;
        g.grid().expect_shape(mask.grid())?;
        let dev = g.hermitian_deviation();
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
        if g.data().iter().zip(mask.data()).any(|(c, &m)| !m && (c.re != T::zero() || c.im != T::zero())) {
            return Err(Error::OffSupport);
        }
        let grid = *g.grid();
        let plan = Fft3::new(&grid);
        let laplacian = laplacian_symbol::<T>(&grid).into_data();
        let (mu, tau, gamma) = (T::of(params.mu), T::of(params.tau), T::of(params.gamma));
        let divisor: Vec<T> = laplacian
            .iter()
            .zip(mask.data())
            .map(|(&d, &m)| if m { mu } else { T::zero() } + tau * d + gamma)
            .collect();
        let min_div = divisor.iter().copied().fold(T::infinity(), T::min);
        if !(min_div >= gamma && min_div > T::zero()) {
            return Err(Error::InvalidParams(format!(
                "f-update divisor minimum {min_div} is not positive"
            )));
        }
        let g = Spectrum3::new(grid, g.into_data(), true)?;
        Ok(Self {
            params,
            mask,
            g,
            plan,
            divisor,
            fhat: vec![Complex::new(T::zero(), T::zero()); grid.len()],
        })
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn grid(&self) -> &GridSpec {
        self.g.grid()
    }

    pub fn mask(&self) -> &SupportMask {
        &self.mask
    }

    /// Smallest f-update divisor `min_k μM(k) + τD(k) + γ`; at least γ.
    pub fn min_divisor(&self) -> T {
        self.divisor.iter().copied().fold(T::infinity(), T::min)
    }

    /// `f⁰ = Aᵀg`, all split variables and multipliers zero, `g⁰ = g`.
    pub fn init_state(&self) -> Result<SolverState<T>> {
        let grid = *self.grid();
        let f = self.plan.inverse(&self.g)?;
        let zero = || Volume3::zeros(grid);
        Ok(SolverState {
            f,
            d: [zero(), zero(), zero()],
            w: zero(),
            b: [zero(), zero(), zero()],
            bw: zero(),
            gk: self.g.clone(),
            outer: 0,
            inner: 0,
        })
    }

    /// Right-hand side real part `τ∇ᵀ(d − b) + γ(w − b_w)`.
    fn rhs_real(&self, st: &SolverState<T>) -> Vec<T> {
        let grid = self.grid();
        let n = grid.len();
        let (tau, gamma) = (T::of(self.params.tau), T::of(self.params.gamma));
        let diff: Vec<Vec<T>> = (0..3)
            .map(|a| st.d[a].data().iter().zip(st.b[a].data()).map(|(&d, &b)| d - b).collect())
            .collect();
        let mut dv = vec![T::zero(); n];
        div_into(grid, [&diff[0], &diff[1], &diff[2]], &mut dv);
        dv.iter()
            .zip(st.w.data().iter().zip(st.bw.data()))
            .map(|(&dv, (&w, &bw))| gamma * (w - bw) - tau * dv)
            .collect()
    }

    /// Solves `(μAᵀA + τ∇ᵀ∇ + γI) f = rhsᵏ`.
    pub fn f_update(&mut self, st: &SolverState<T>) -> Result<Volume3<T>> {
        if self.params.tol_fupdate > 0.0 {
            return self.f_update_cg(st);
        }
        let grid = *self.grid();
        let mu = T::of(self.params.mu);
        let r = self.rhs_real(st);
        let mut buf: Vec<Complex<T>> = r.iter().map(|&x| Complex::new(x, T::zero())).collect();
        self.plan.forward_in_place(&mut buf);
        // Round-off scale of the solve: the summands, not their (possibly cancelling) sum.
        let mut scale = T::zero();
        for ((c, &gk), &den) in buf.iter_mut().zip(st.gk.data()).zip(&self.divisor) {
            scale = scale.max((c.norm() + gk.norm() * mu) / den);
            *c = (*c + gk * mu) / den;
        }
        self.fhat.copy_from_slice(&buf);
        self.plan.inverse_in_place(&mut buf);
        Ok(Volume3::from_parts(grid, take_real(&buf, scale)?))
    }

    /// `(μAᵀA + τ∇ᵀ∇ + γI) x` applied through the FFT and the stencils.
    fn apply_system(&self, x: &[T]) -> Result<Vec<T>> {
        let grid = self.grid();
        let n = grid.len();
        let (mu, tau, gamma) = (T::of(self.params.mu), T::of(self.params.tau), T::of(self.params.gamma));
        let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.plan.forward_in_place(&mut buf);
        let zero = Complex::new(T::zero(), T::zero());
        for (c, &m) in buf.iter_mut().zip(self.mask.data()) {
            if !m {
                *c = zero;
            }
        }
        self.plan.inverse_in_place(&mut buf);
        let (mut gx, mut gy, mut gz) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
        grad_into(grid, x, [&mut gx, &mut gy, &mut gz]);
        let mut lap = vec![T::zero(); n];
        div_into(grid, [&gx, &gy, &gz], &mut lap);
        Ok((0..n).map(|i| mu * buf[i].re - tau * lap[i] + gamma * x[i]).collect())
    }

    /// Conjugate gradients on the f-update system, warm-started from the current f.
    fn f_update_cg(&mut self, st: &SolverState<T>) -> Result<Volume3<T>> {
        let grid = *self.grid();
        let mu = T::of(self.params.mu);
        let mut gk = st.gk.data().to_vec();
        self.plan.inverse_in_place(&mut gk);
        let rhs: Vec<T> = self
            .rhs_real(st)
            .iter()
            .zip(&gk)
            .map(|(&r, g)| r + mu * g.re)
            .collect();
        let dot = |a: &[T], b: &[T]| -> f64 {
            a.iter().zip(b).map(|(&x, &y)| (x * y).to_f64_lossy()).sum()
        };
        let rhs_norm = dot(&rhs, &rhs).sqrt();
        let mut x = st.f.data().to_vec();
        let ax = self.apply_system(&x)?;
        let mut r: Vec<T> = rhs.iter().zip(&ax).map(|(&b, &a)| b - a).collect();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let target = self.params.tol_fupdate * rhs_norm.max(f64::MIN_POSITIVE);
        for _ in 0..grid.len().min(1000) {
            if rr.sqrt() <= target {
                break;
            }
            let ap = self.apply_system(&p)?;
            let alpha = rr / dot(&p, &ap);
            let a = T::of(alpha);
            for i in 0..x.len() {
                x[i] = x[i] + a * p[i];
                r[i] = r[i] - a * ap[i];
            }
            let rr_new = dot(&r, &r);
            let beta = T::of(rr_new / rr);
            for i in 0..p.len() {
                p[i] = r[i] + beta * p[i];
            }
            rr = rr_new;
        }
        let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.plan.forward_in_place(&mut buf);
        self.fhat.copy_from_slice(&buf);
        Ok(Volume3::from_parts(grid, x))
    }

    /// Isotropic shrinkage of `∇f + b` with threshold `1/τ`.
    pub fn shrink_tv(&self, st: &SolverState<T>) -> [Volume3<T>; 3] {
        let grid = *self.grid();
        let thresh = T::of(1.0 / self.params.tau);
        let mut out = grad_plus(&grid, &st.f, &st.b);
        let [x, y, z] = &mut out;
        for ((vx, vy), vz) in x.iter_mut().zip(y.iter_mut()).zip(z.iter_mut()) {
            let s = (*vx * *vx + *vy * *vy + *vz * *vz).sqrt();
            let scale = if s > T::zero() { (s - thresh).max(T::zero()) / s } else { T::zero() };
            *vx = *vx * scale;
            *vy = *vy * scale;
            *vz = *vz * scale;
        }
        out.map(|v| Volume3::from_parts(grid, v))
    }

    /// Non-negativity step on `f + b_w`.
    pub fn shrink_nonneg(&self, st: &SolverState<T>) -> Volume3<T> {
        let grid = *self.grid();
        let thresh = T::of(1.0 / self.params.gamma);
        let mode = self.params.nonneg_mode;
        let data = st
            .f
            .data()
            .iter()
            .zip(st.bw.data())
            .map(|(&f, &bw)| {
                let v = f + bw;
                match mode {
                    NonnegMode::Project => v.max(T::zero()),
                    NonnegMode::PaperShrink => {
                        let a = v.abs();
                        if a > T::zero() {
                            (a - thresh).max(T::zero()) * v / a
                        } else {
                            T::zero()
                        }
                    }
                }
            })
            .collect();
        Volume3::from_parts(grid, data)
    }

    /// `gᵏ⁺¹ = gᵏ + g − M⊙F(f)`, restricted to the support.
    pub fn bregman_refresh(&self, st: &SolverState<T>) -> Result<Spectrum3<T>> {
        let fhat = self.plan.forward(&st.f)?;
        let zero = Complex::new(T::zero(), T::zero());
        let data = st
            .gk
            .data()
            .iter()
            .zip(self.g.data())
            .zip(fhat.data())
            .zip(self.mask.data())
            .map(|(((&gk, &g), &fh), &m)| if m { gk + g - fh } else { zero })
            .collect();
        Ok(Spectrum3::from_parts(*self.grid(), data, true))
    }

    /// `‖M⊙fhat − g‖₂` for a Fourier-domain estimate.
    fn data_residual(&self, fhat: &[Complex<T>]) -> f64 {
        fhat.iter()
            .zip(self.g.data())
            .zip(self.mask.data())
            .filter(|(_, &m)| m)
            .map(|((&fh, &g), _)| (fh - g).norm_sqr().to_f64_lossy())
            .sum::<f64>()
            .sqrt()
    }

    /// `μ/2‖Af − g‖² + Σ|∇f|` using the transform cached by the last f-update.
    fn objective(&self, f: &Volume3<T>) -> f64 {
        let r = self.data_residual(&self.fhat);
        0.5 * self.params.mu * r * r + total_variation(f)
    }

    /// Runs N outer × M inner iterations from [`Bregman::init_state`].
    pub fn run(&mut self) -> Result<(Volume3<T>, SolveReport)> {
        let mut st = self.init_state()?;
        let mut timings = PhaseTimings::default();
        let mut residuals = Vec::with_capacity(self.params.n_outer);
        let mut objective = Vec::with_capacity(self.params.n_outer * self.params.n_inner);
        for outer in 0..self.params.n_outer {
            st.outer = outer;
            for inner in 0..self.params.n_inner {
                st.inner = inner;
                let diverged = |phase| Error::Diverged { phase, outer: outer + 1, inner: inner + 1 };

                let t0 = Instant::now();
                st.f = self.f_update(&st)?;
                if !st.f.all_finite() {
                    return Err(diverged("f-update"));
                }
                let t1 = Instant::now();
                st.d = self.shrink_tv(&st);
                st.w = self.shrink_nonneg(&st);
                if !(st.d.iter().all(Volume3::all_finite) && st.w.all_finite()) {
                    return Err(diverged("shrinkage"));
                }
                let t2 = Instant::now();
                update_multipliers(&mut st);
                objective.push(self.objective(&st.f));
                if !objective.last().is_some_and(|v| v.is_finite()) {
                    return Err(diverged("multiplier update"));
                }
                let t3 = Instant::now();
                timings.f_update += t1 - t0;
                timings.shrinkage += t2 - t1;
                timings.bookkeeping += t3 - t2;
            }
            let t0 = Instant::now();
            let fhat = self.plan.forward(&st.f)?;
            residuals.push(self.data_residual(fhat.data()));
            st.gk = self.bregman_refresh(&st)?;
            if st.gk.data().iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
                return Err(Error::Diverged {
                    phase: "bregman refresh",
                    outer: outer + 1,
                    inner: self.params.n_inner,
                });
            }
            timings.bookkeeping += t0.elapsed();
        }
        let report = SolveReport {
            params: self.params,
            residuals,
            objective,
            timings,
            min_f: st.f.min().to_f64_lossy(),
        };
        Ok((st.f, report))
    }
}

/// `∇f + b` per axis as raw vectors.
fn grad_plus<T: Real>(grid: &GridSpec, f: &Volume3<T>, b: &[Volume3<T>; 3]) -> [Vec<T>; 3] {
    let n = grid.len();
    let mut out = [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]];
    {
        let [x, y, z] = &mut out;
        grad_into(grid, f.data(), [x, y, z]);
    }
    for (o, bb) in out.iter_mut().zip(b) {
        for (v, &bv) in o.iter_mut().zip(bb.data()) {
            *v = *v + bv;
        }
    }
    out
}

/// `b ← b + ∇f − d` per axis and `b_w ← b_w + f − w`.
pub fn update_multipliers<T: Real>(st: &mut SolverState<T>) {
    let grid = *st.f.grid();
    let n = grid.len();
    let mut g = [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]];
    {
        let [x, y, z] = &mut g;
        grad_into(&grid, st.f.data(), [x, y, z]);
    }
    for a in 0..3 {
        let d = st.d[a].data().to_vec();
        for ((b, &gv), dv) in st.b[a].data_mut().iter_mut().zip(&g[a]).zip(d) {
            *b = *b + (gv - dv);
        }
    }
    let w = st.w.data().to_vec();
    let f = st.f.data().to_vec();
    for ((bw, fv), wv) in st.bw.data_mut().iter_mut().zip(f).zip(w) {
        *bw = *bw + (fv - wv);
    }
}

/// Isotropic total variation `Σ_x |∇f(x)|₂`.
pub fn total_variation<T: Real>(f: &Volume3<T>) -> f64 {
    let grid = *f.grid();
    let n = grid.len();
    let (mut gx, mut gy, mut gz) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
    grad_into(&grid, f.data(), [&mut gx, &mut gy, &mut gz]);
    (0..n)
        .map(|i| (gx[i] * gx[i] + gy[i] * gy[i] + gz[i] * gz[i]).sqrt().to_f64_lossy())
        .sum()
}

/// Full solve from a masked measurement `g`.
pub fn regularize<T: Real>(
    g: &Spectrum3<T>,
    mask: &SupportMask,
    params: &SolverParams,
) -> Result<(Volume3<T>, SolveReport)> {
    Bregman::new(g.clone(), mask.clone(), *params)?.run()
}

/// Full solve from a raw tomogram: `g = M⊙F(raw)`.
pub fn regularize_volume<T: Real>(
    raw: &Volume3<T>,
    mask: &SupportMask,
    params: &SolverParams,
) -> Result<(Volume3<T>, SolveReport)> {
    raw.grid().expect_shape(mask.grid())?;
    let g = Fft3::new(raw.grid()).forward(raw)?.masked(mask)?;
    regularize(&g, mask, params)
}
