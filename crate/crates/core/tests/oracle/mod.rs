//! Reference computations that share no code with the library: direct DFT
//! summation, explicitly assembled matrices and a primal-dual solver.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;

pub type Dims = [usize; 3];

pub fn idx(d: Dims, i: usize, j: usize, k: usize) -> usize {
    i + d[0] * (j + d[1] * k)
}

fn coords(d: Dims, p: usize) -> [usize; 3] {
    [p % d[0], (p / d[0]) % d[1], p / (d[0] * d[1])]
}

fn signed(k: usize, n: usize) -> f64 {
    if 2 * k <= n {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Unitary DFT by direct summation along each axis; `sign = -1` forward, `+1` inverse.
pub fn dft3(x: &[Complex64], d: Dims, sign: f64) -> Vec<Complex64> {
    let mut cur = x.to_vec();
    for axis in 0..3 {
        let n = d[axis];
        let tw: Vec<Complex64> = (0..n * n)
            .map(|t| Complex64::from_polar(1.0 / (n as f64).sqrt(), sign * 2.0 * PI * t as f64 / n as f64))
            .collect();
        let mut next = vec![Complex64::new(0.0, 0.0); cur.len()];
        for (p, out) in next.iter_mut().enumerate() {
            let c = coords(d, p);
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..n {
                let mut q = c;
                q[axis] = m;
                acc += cur[idx(d, q[0], q[1], q[2])] * tw[(c[axis] * m) % n];
            }
            *out = acc;
        }
        cur = next;
    }
    cur
}

pub fn forward(x: &[f64], d: Dims) -> Vec<Complex64> {
    let c: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft3(&c, d, -1.0)
}

pub fn inverse(x: &[Complex64], d: Dims) -> Vec<Complex64> {
    dft3(x, d, 1.0)
}

/// Support that omits a cone of the given half angle around the axial frequency
/// axis; DC is kept.
pub fn cone_mask(d: Dims, half_angle_deg: f64) -> Vec<bool> {
    let t = half_angle_deg.to_radians().tan();
    (0..d[0] * d[1] * d[2])
        .map(|p| {
            let c = coords(d, p);
            let (kx, ky, kz) = (signed(c[0], d[0]), signed(c[1], d[1]), signed(c[2], d[2]));
            let lat = (kx * kx + ky * ky).sqrt();
            p == 0 || lat >= kz.abs() * t
        })
        .collect()
}

/// Periodic forward differences, one axis at a time.
pub fn fwd_diff(v: &[f64], d: Dims) -> [Vec<f64>; 3] {
    let mut out = [vec![0.0; v.len()], vec![0.0; v.len()], vec![0.0; v.len()]];
    for (p, &x) in v.iter().enumerate() {
        let c = coords(d, p);
        for a in 0..3 {
            let mut q = c;
            q[a] = (q[a] + 1) % d[a];
            out[a][p] = v[idx(d, q[0], q[1], q[2])] - x;
        }
    }
    out
}

/// Transpose of [`fwd_diff`]: `(Dᵀp)_i = p_{i-1} − p_i` per axis, summed.
pub fn fwd_diff_t(p: &[Vec<f64>; 3], d: Dims) -> Vec<f64> {
    let n = p[0].len();
    let mut out = vec![0.0; n];
    for (q, o) in out.iter_mut().enumerate() {
        let c = coords(d, q);
        for a in 0..3 {
            let mut m = c;
            m[a] = (m[a] + d[a] - 1) % d[a];
            *o += p[a][idx(d, m[0], m[1], m[2])] - p[a][q];
        }
    }
    out
}

/// Dense `μAᵀA + τDᵀD + γI` with closed-form entries.
pub fn system_matrix(d: Dims, mask: &[bool], mu: f64, tau: f64, gamma: f64) -> Vec<Vec<f64>> {
    let n = d[0] * d[1] * d[2];
    let mut a = vec![vec![0.0; n]; n];
    // (AᵀA)_{pq} = (1/N) Σ_k M(k) cos(2π k·(p − q)/N)
    let freqs: Vec<[usize; 3]> = (0..n).filter(|&k| mask[k]).map(|k| coords(d, k)).collect();
    for p in 0..n {
        let cp = coords(d, p);
        for q in 0..n {
            let cq = coords(d, q);
            let mut s = 0.0;
            for k in &freqs {
                let mut ph = 0.0;
                for ax in 0..3 {
                    ph += k[ax] as f64 * (cp[ax] as f64 - cq[ax] as f64) / d[ax] as f64;
                }
                s += (2.0 * PI * ph).cos();
            }
            a[p][q] = mu * s / n as f64;
        }
    }
    // DᵀD: 2 per axis on the diagonal, −1 for each periodic neighbour.
    for p in 0..n {
        let c = coords(d, p);
        a[p][p] += gamma + 6.0 * tau;
        for ax in 0..3 {
            for step in [1, d[ax] - 1] {
                let mut q = c;
                q[ax] = (q[ax] + step) % d[ax];
                a[p][idx(d, q[0], q[1], q[2])] -= tau;
            }
        }
    }
    a
}

/// Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Inputs of one f-update.
pub struct FUpdateCase {
    pub dims: Dims,
    pub mask: Vec<bool>,
    pub gk: Vec<Complex64>,
    pub d: [Vec<f64>; 3],
    pub b: [Vec<f64>; 3],
    pub w: Vec<f64>,
    pub bw: Vec<f64>,
}

/// Dense solve of `(μAᵀA + τDᵀD + γI) f = μAᵀgᵏ + τDᵀ(d − b) + γ(w − b_w)`.
pub fn dense_fupdate(c: &FUpdateCase, mu: f64, tau: f64, gamma: f64) -> Vec<f64> {
    let diff = [0, 1, 2].map(|a| c.d[a].iter().zip(&c.b[a]).map(|(x, y)| x - y).collect::<Vec<f64>>());
    let dt = fwd_diff_t(&diff, c.dims);
    let atg = inverse(&c.gk, c.dims);
    let rhs: Vec<f64> = (0..c.w.len())
        .map(|p| mu * atg[p].re + tau * dt[p] + gamma * (c.w[p] - c.bw[p]))
        .collect();
    solve_dense(system_matrix(c.dims, &c.mask, mu, tau, gamma), rhs)
}

/// `μ/2‖M⊙F f − g‖² + Σ|Df|₂`.
pub fn objective(f: &[f64], d: Dims, mask: &[bool], g: &[Complex64], mu: f64) -> f64 {
    let fh = forward(f, d);
    let data: f64 = (0..f.len()).filter(|&k| mask[k]).map(|k| (fh[k] - g[k]).norm_sqr()).sum();
    let gr = fwd_diff(f, d);
    let tv: f64 = (0..f.len()).map(|p| (gr[0][p].powi(2) + gr[1][p].powi(2) + gr[2][p].powi(2)).sqrt()).sum();
    0.5 * mu * data + tv
}

/// Condat–Vũ primal-dual iteration for
/// `min_{f ≥ 0} μ/2‖M⊙F f − g‖² + Σ|Df|₂`.
pub fn condat_vu(d: Dims, mask: &[bool], g: &[Complex64], mu: f64, iters: usize) -> Vec<f64> {
    let n = mask.len();
    let sigma = 1.0;
    // 1/t − σ‖D‖² ≥ μ/2 with ‖D‖² ≤ 12 and ‖A‖ ≤ 1
    let t = 0.95 / (0.5 * mu + 12.0 * sigma);
    let atg: Vec<f64> = inverse(g, d).iter().map(|c| c.re).collect();
    let mut x: Vec<f64> = atg.iter().map(|&v| v.max(0.0)).collect();
    let mut y = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for _ in 0..iters {
        let mut fh = forward(&x, d);
        for (c, &m) in fh.iter_mut().zip(mask) {
            if !m {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        let ata = inverse(&fh, d);
        let kty = fwd_diff_t(&y, d);
        let xn: Vec<f64> = (0..n)
            .map(|p| (x[p] - t * (mu * (ata[p].re - atg[p]) + kty[p])).max(0.0))
            .collect();
        let bar: Vec<f64> = (0..n).map(|p| 2.0 * xn[p] - x[p]).collect();
        let kb = fwd_diff(&bar, d);
        for p in 0..n {
            let v = [y[0][p] + sigma * kb[0][p], y[1][p] + sigma * kb[1][p], y[2][p] + sigma * kb[2][p]];
            let s = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1.0);
            for a in 0..3 {
                y[a][p] = v[a] / s;
            }
        }
        x = xn;
    }
    x
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// 8³ test object: a block and a smaller offset ball of different heights.
pub fn toy_object(d: Dims) -> Vec<f64> {
    (0..d[0] * d[1] * d[2])
        .map(|p| {
            let c = coords(d, p).map(|v| v as f64);
            let block = (2.0..=4.0).contains(&c[0]) && (2.0..=5.0).contains(&c[1]) && (2.0..=5.0).contains(&c[2]);
            let r2 = (c[0] - 5.5).powi(2) + (c[1] - 4.5).powi(2) + (c[2] - 3.0).powi(2);
            if block {
                1.0
            } else if r2 <= 2.0 {
                0.6
            } else {
                0.0
            }
        })
        .collect()
}
