//! Minimizing `I_q(X1,X2;Y)` over `Δ_p`.
//!
//! For fixed `y`, the slice `q(·,·,y)` must have row sums `p(x1,y)` and
//! column sums `p(x2,y)`, so `Δ_p` is a product of one transportation
//! polytope per `y`. Since `H(Y)` is fixed on `Δ_p`, the objective is
//! `f(q) = −H_q(Y | X1,X2) = Σ q·ln q(y|x1,x2)`, which is convex.
//!
//! Each step is an exponentiated-gradient (mirror descent) update with step
//! size `η` followed by a KL projection back onto `Δ_p`:
//!
//! ```text
//! r = q · q(y|x1,x2)^(−η)          ∇f = ln q(y|x1,x2)
//! q ← argmin_{q' ∈ Δ_p} KL(q' ‖ r)  Sinkhorn scaling per y-slice
//! ```
//!
//! At `η = 1`, `r = q(x1,x2)` and the step minimizes the majorizer
//! `KL(q' ‖ q(x1,x2))` of `f`, so it never increases the objective. Larger
//! steps are tried first and kept only when they decrease `f`; otherwise the
//! step size halves back toward 1.
//!
//! Stopping uses a duality-gap certificate. By convexity
//! `f(q) − f* ≤ ⟨∇f(q), q⟩ − min_{s ∈ Δ_p} ⟨∇f(q), s⟩`, and the minimum splits
//! into one transportation problem per `y`. Any dual-feasible `(u, v)` with
//! `u_i + v_j ≤ ∇f_ij` bounds that minimum from below by `Σ a·u + Σ b·v`;
//! `(u, v)` come from a weighted least-squares fit of `∇f ≈ u + v` made
//! feasible by min-corrections. The bound vanishes at an interior optimum,
//! where `∇f = ln q(y|x1,x2)` is exactly additive. All four components are
//! functions of `f`, so the bound also bounds their error.
//!
//! Symbols with zero marginal probability are removed before optimizing and
//! restored as zero rows afterwards.

use super::{JointPmf, PidResult};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Largest `|X1|·|X2|·|Y|` accepted.
pub const MAX_ALPHABET: usize = 4096;

const ETA_MAX: f64 = 64.0;
const SINKHORN_WARM: usize = 200;
const NEWTON_MAX_ITER: usize = 100;
/// Largest Sinkhorn marginal error at which a projected step is usable.
const PROJECTION_ACCEPT: f64 = 1e-11;
/// Alternating least-squares sweeps behind each gap certificate.
const GAP_FIT_SWEEPS: usize = 30;
/// Largest reduced dimension for which Newton steps are attempted.
const NEWTON_POLISH_MAX_DIM: usize = 400;
/// Longest wait between Newton attempts after failed ones.
const NEWTON_BACKOFF_MAX: usize = 64;

struct Problem {
    n1: usize,
    n2: usize,
    ny: usize,
    /// `p(x1, y)` at `y * n1 + x1`.
    a: Vec<f64>,
    /// `p(x2, y)` at `y * n2 + x2`.
    b: Vec<f64>,
    py: Vec<f64>,
}

impl Problem {
    #[inline]
    fn idx(&self, x1: usize, x2: usize, y: usize) -> usize {
        (x1 * self.n2 + x2) * self.ny + y
    }

    /// `Σ q·ln q(y|x)` in nats.
    fn objective(&self, q: &[f64]) -> f64 {
        let mut f = 0.0;
        for cell in q.chunks_exact(self.ny) {
            let qx: f64 = cell.iter().sum();
            if qx <= 0.0 {
                continue;
            }
            for &v in cell {
                if v > 0.0 {
                    f += v * (v / qx).ln();
                }
            }
        }
        f
    }

    fn initial(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.n1 * self.n2 * self.ny];
        for x1 in 0..self.n1 {
            for x2 in 0..self.n2 {
                for y in 0..self.ny {
                    let a = self.a[y * self.n1 + x1];
                    let b = self.b[y * self.n2 + x2];
                    q[self.idx(x1, x2, y)] = a * b / self.py[y];
                }
            }
        }
        q
    }

    /// Upper bound on `f(q) − min_{Δ_p} f` in nats; infinite when a free
    /// cell of `q` is zero, where the gradient is unbounded.
    fn gap_bound(&self, q: &[f64]) -> f64 {
        let (n1, n2, ny) = (self.n1, self.n2, self.ny);
        let qx: Vec<f64> = q.chunks_exact(ny).map(|c| c.iter().sum()).collect();
        let mut gap = 0.0;
        let mut g = vec![0.0; n1 * n2];
        let mut w = vec![0.0; n1 * n2];
        for y in 0..ny {
            let a = &self.a[y * n1..(y + 1) * n1];
            let b = &self.b[y * n2..(y + 1) * n2];
            let rows: Vec<usize> = (0..n1).filter(|&i| a[i] > 0.0).collect();
            let cols: Vec<usize> = (0..n2).filter(|&j| b[j] > 0.0).collect();
            let mut value = 0.0;
            for &i in &rows {
                for &j in &cols {
                    let c = i * n2 + j;
                    let v = q[self.idx(i, j, y)];
                    if !(v > 0.0) {
                        return f64::INFINITY;
                    }
                    g[c] = (v / qx[c]).ln();
                    w[c] = v;
                    value += v * g[c];
                }
            }
            let mut u = vec![0.0; n1];
            let mut v = vec![0.0; n2];
            for _ in 0..GAP_FIT_SWEEPS {
                for &i in &rows {
                    let (num, den) = cols.iter().fold((0.0, 0.0), |(n, d), &j| {
                        let c = i * n2 + j;
                        (n + w[c] * (g[c] - v[j]), d + w[c])
                    });
                    u[i] = num / den;
                }
                for &j in &cols {
                    let (num, den) = rows.iter().fold((0.0, 0.0), |(n, d), &i| {
                        let c = i * n2 + j;
                        (n + w[c] * (g[c] - u[i]), d + w[c])
                    });
                    v[j] = num / den;
                }
            }
            for &i in &rows {
                u[i] = cols.iter().map(|&j| g[i * n2 + j] - v[j]).fold(f64::INFINITY, f64::min);
            }
            for &j in &cols {
                v[j] = rows.iter().map(|&i| g[i * n2 + j] - u[i]).fold(f64::INFINITY, f64::min);
            }
            let lower: f64 =
                rows.iter().map(|&i| a[i] * u[i]).sum::<f64>() + cols.iter().map(|&j| b[j] * v[j]).sum::<f64>();
            gap += (value - lower).max(0.0);
        }
        gap
    }

    /// Damped Newton step on `f` restricted to `Δ_p`, in the basis of
    /// 2×2 cycles `+(i,j) −(i,j0) −(i0,j) +(i0,j0)` of each `y`-slice, which
    /// spans the directions that keep every marginal fixed. `None` if a free
    /// cell is zero, the basis is empty or too large, or no damped step
    /// decreases `f`.
    fn newton(&self, q: &[f64], f: f64) -> Option<(Vec<f64>, f64)> {
        let (n1, n2, ny) = (self.n1, self.n2, self.ny);
        // Each basis vector as (cell, coefficient) pairs.
        let mut basis: Vec<[(usize, f64); 4]> = Vec::new();
        for y in 0..ny {
            let rows: Vec<usize> = (0..n1).filter(|&i| self.a[y * n1 + i] > 0.0).collect();
            let cols: Vec<usize> = (0..n2).filter(|&j| self.b[y * n2 + j] > 0.0).collect();
            for &i in &rows {
                for &j in &cols {
                    if !(q[self.idx(i, j, y)] > 0.0) {
                        return None;
                    }
                }
            }
            let (i0, j0) = (rows[0], cols[0]);
            for &i in &rows[1..] {
                for &j in &cols[1..] {
                    basis.push([
                        (self.idx(i, j, y), 1.0),
                        (self.idx(i, j0, y), -1.0),
                        (self.idx(i0, j, y), -1.0),
                        (self.idx(i0, j0, y), 1.0),
                    ]);
                }
            }
        }
        let k = basis.len();
        if k == 0 || k > NEWTON_POLISH_MAX_DIM {
            return None;
        }
        let qx: Vec<f64> = q.chunks_exact(ny).map(|c| c.iter().sum()).collect();
        let mut by_cell: Vec<Vec<(usize, f64)>> = vec![Vec::new(); q.len()];
        let mut by_x: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n1 * n2];
        for (l, e) in basis.iter().enumerate() {
            for &(c, w) in e {
                by_cell[c].push((l, w));
                let x = &mut by_x[c / ny];
                match x.iter_mut().find(|(m, _)| *m == l) {
                    Some(entry) => entry.1 += w,
                    None => x.push((l, w)),
                }
            }
        }
        let mut h = vec![0.0; k * k];
        let mut g = vec![0.0; k];
        for (c, list) in by_cell.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let grad = (q[c] / qx[c / ny]).ln();
            for &(l, w) in list {
                g[l] += w * grad;
                for &(m, v) in list {
                    h[l * k + m] += w * v / q[c];
                }
            }
        }
        for (x, list) in by_x.iter().enumerate() {
            for &(l, w) in list {
                for &(m, v) in list {
                    h[l * k + m] -= w * v / qx[x];
                }
            }
        }
        let scale = (0..k).map(|l| h[l * k + l]).fold(0.0, f64::max);
        for l in 0..k {
            h[l * k + l] += 1e-12 * scale;
        }
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        if !cholesky_solve(&mut h, &mut d, k) {
            return None;
        }
        let mut dq = vec![0.0; q.len()];
        for (e, &dl) in basis.iter().zip(&d) {
            for &(c, w) in e {
                dq[c] += w * dl;
            }
        }
        let mut step = dq
            .iter()
            .zip(q)
            .filter(|(d, _)| **d < 0.0)
            .map(|(d, v)| 0.9 * v / -d)
            .fold(1.0, f64::min);
        for _ in 0..40 {
            let cand: Vec<f64> = q.iter().zip(&dq).map(|(v, d)| v + step * d).collect();
            let f_new = self.objective(&cand);
            if f_new < f {
                return Some((cand, f_new));
            }
            step /= 2.0;
        }
        None
    }

    /// One mirror step of size `eta`; `None` if the projection fails.
    fn step(&self, q: &[f64], eta: f64) -> Option<(Vec<f64>, f64)> {
        let (n1, n2, ny) = (self.n1, self.n2, self.ny);
        let mut log_r = vec![f64::NEG_INFINITY; q.len()];
        for (cell, out) in q.chunks_exact(ny).zip(log_r.chunks_exact_mut(ny)) {
            let qx: f64 = cell.iter().sum();
            if qx <= 0.0 {
                continue;
            }
            let lqx = qx.ln();
            for (&v, o) in cell.iter().zip(out.iter_mut()) {
                if v > 0.0 {
                    *o = (1.0 - eta) * v.ln() + eta * lqx;
                }
            }
        }
        let mut next = vec![0.0; q.len()];
        let mut slice = vec![0.0; n1 * n2];
        let mut worst = 0.0f64;
        for y in 0..ny {
            let max = (0..n1 * n2)
                .map(|c| log_r[c * ny + y])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return None;
            }
            for (c, s) in slice.iter_mut().enumerate() {
                *s = (log_r[c * ny + y] - max).exp();
            }
            let err = sinkhorn(
                &mut slice,
                n1,
                n2,
                &self.a[y * n1..(y + 1) * n1],
                &self.b[y * n2..(y + 1) * n2],
            )?;
            worst = worst.max(err);
            for (c, &s) in slice.iter().enumerate() {
                next[c * ny + y] = s;
            }
        }
        (worst <= PROJECTION_ACCEPT).then_some((next, worst))
    }
}

/// Scales `m` (n1×n2) to row sums `a` and column sums `b`. Returns the final
/// marginal error, or `None` when a required row or column has no mass.
///
/// A few Sinkhorn sweeps warm-start a damped Newton iteration on the log
/// scalings. Sinkhorn alone slows to a crawl when the scaled matrix is close
/// to block diagonal, which is exactly where boundary optima push it.
fn sinkhorn(m: &mut [f64], n1: usize, n2: usize, a: &[f64], b: &[f64]) -> Option<f64> {
    let total: f64 = a.iter().sum();
    let target = 4.0 * f64::EPSILON * (n1 + n2) as f64 * total;
    for i in 0..n1 {
        for j in 0..n2 {
            if a[i] == 0.0 || b[j] == 0.0 {
                m[i * n2 + j] = 0.0;
            }
        }
    }
    let rows: Vec<usize> = (0..n1).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n2).filter(|&j| b[j] > 0.0).collect();
    for _ in 0..SINKHORN_WARM {
        for &i in &rows {
            let row = &mut m[i * n2..(i + 1) * n2];
            let s: f64 = row.iter().sum();
            if s <= 0.0 {
                return None;
            }
            let c = a[i] / s;
            row.iter_mut().for_each(|v| *v *= c);
        }
        for &j in &cols {
            let s: f64 = rows.iter().map(|&i| m[i * n2 + j]).sum();
            if s <= 0.0 {
                return None;
            }
            let c = b[j] / s;
            rows.iter().for_each(|&i| m[i * n2 + j] *= c);
        }
        let err = rows
            .iter()
            .map(|&i| (m[i * n2..(i + 1) * n2].iter().sum::<f64>() - a[i]).abs())
            .fold(0.0, f64::max);
        if err <= target {
            return Some(err);
        }
    }

    // Newton on the active block, with the shorter side as columns.
    let transpose = cols.len() > rows.len();
    let (ri, ci) = if transpose { (&cols, &rows) } else { (&rows, &cols) };
    let (nr, nc) = (ri.len(), ci.len());
    let at = |r: usize, c: usize| {
        if transpose {
            ci[c] * n2 + ri[r]
        } else {
            ri[r] * n2 + ci[c]
        }
    };
    let mut w: Vec<f64> = (0..nr * nc).map(|k| m[at(k / nc, k % nc)]).collect();
    let ra: Vec<f64> = ri.iter().map(|&r| if transpose { b[r] } else { a[r] }).collect();
    let cb: Vec<f64> = ci.iter().map(|&c| if transpose { a[c] } else { b[c] }).collect();
    let err = newton_scale(&mut w, nr, nc, &ra, &cb, target);
    for (k, &v) in w.iter().enumerate() {
        m[at(k / nc, k % nc)] = v;
    }
    Some(err)
}

fn marginal_error(w: &[f64], nr: usize, nc: usize, ra: &[f64], cb: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let mut rs = vec![0.0; nr];
    let mut cs = vec![0.0; nc];
    for i in 0..nr {
        for j in 0..nc {
            rs[i] += w[i * nc + j];
            cs[j] += w[i * nc + j];
        }
    }
    let err = rs
        .iter()
        .zip(ra)
        .chain(cs.iter().zip(cb))
        .map(|(s, t)| (s - t).abs())
        .fold(0.0, f64::max);
    (rs, cs, err)
}

fn newton_scale(w: &mut [f64], nr: usize, nc: usize, ra: &[f64], cb: &[f64], target: f64) -> f64 {
    let (mut rs, mut cs, mut err) = marginal_error(w, nr, nc, ra, cb);
    for _ in 0..NEWTON_MAX_ITER {
        if err <= target {
            break;
        }
        let gu: Vec<f64> = rs.iter().zip(ra).map(|(s, t)| s - t).collect();
        let gv: Vec<f64> = cs.iter().zip(cb).map(|(s, t)| s - t).collect();
        // Schur complement in the column scalings; the last one is pinned to
        // remove the shared-offset null direction.
        let k = nc - 1;
        let mut dv = vec![0.0; nc];
        if k > 0 {
            let mut s = vec![0.0; k * k];
            let mut rhs = vec![0.0; k];
            for j in 0..k {
                s[j * k + j] = cs[j];
                rhs[j] = -gv[j];
            }
            for i in 0..nr {
                let row = &w[i * nc..(i + 1) * nc];
                for j in 0..k {
                    let wj = row[j] / rs[i];
                    rhs[j] += wj * gu[i];
                    for l in 0..k {
                        s[j * k + l] -= wj * row[l];
                    }
                }
            }
            if !cholesky_solve(&mut s, &mut rhs, k) {
                break;
            }
            dv[..k].copy_from_slice(&rhs);
        }
        let du: Vec<f64> = (0..nr)
            .map(|i| {
                let row = &w[i * nc..(i + 1) * nc];
                let md: f64 = row.iter().zip(&dv).map(|(x, d)| x * d).sum();
                (-gu[i] - md) / rs[i]
            })
            .collect();
        let slope: f64 = gu.iter().zip(&du).chain(gv.iter().zip(&dv)).map(|(g, d)| g * d).sum();
        let phi0: f64 = rs.iter().sum();
        let lin: f64 = ra.iter().zip(&du).chain(cb.iter().zip(&dv)).map(|(t, d)| t * d).sum();
        let biggest = du.iter().chain(&dv).fold(0.0f64, |m, d| m.max(d.abs()));
        let mut step = if biggest > 20.0 { 20.0 / biggest } else { 1.0 };
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = (0..nr * nc)
                .map(|p| w[p] * (step * (du[p / nc] + dv[p % nc])).exp())
                .collect();
            let (trs, tcs, terr) = marginal_error(&trial, nr, nc, ra, cb);
            let phi = trs.iter().sum::<f64>() - step * lin;
            if terr < err || phi <= phi0 + 1e-4 * step * slope {
                w.copy_from_slice(&trial);
                (rs, cs, err) = (trs, tcs, terr);
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            break;
        }
    }
    err
}

/// Solves `s·x = rhs` in place for symmetric positive definite `s` (k×k).
fn cholesky_solve(s: &mut [f64], rhs: &mut [f64], k: usize) -> bool {
    for j in 0..k {
        let mut d = s[j * k + j];
        for p in 0..j {
            d -= s[j * k + p] * s[j * k + p];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        s[j * k + j] = d;
        for i in j + 1..k {
            let mut v = s[i * k + j];
            for p in 0..j {
                v -= s[i * k + p] * s[j * k + p];
            }
            s[i * k + j] = v / d;
        }
    }
    for i in 0..k {
        let mut v = rhs[i];
        for p in 0..i {
            v -= s[i * k + p] * rhs[p];
        }
        rhs[i] = v / s[i * k + i];
    }
    for i in (0..k).rev() {
        let mut v = rhs[i];
        for p in i + 1..k {
            v -= s[p * k + i] * rhs[p];
        }
        rhs[i] = v / s[i * k + i];
    }
    true
}

/// Drops symbols of zero marginal probability. Returns the reduced problem
/// and the kept original indices for each variable.
fn prune(p: &JointPmf) -> (Problem, [Vec<usize>; 3]) {
    let [n1, n2, ny] = p.sizes();
    let mut m = [vec![0.0; n1], vec![0.0; n2], vec![0.0; ny]];
    for x1 in 0..n1 {
        for x2 in 0..n2 {
            for y in 0..ny {
                let v = p.get(x1, x2, y);
                m[0][x1] += v;
                m[1][x2] += v;
                m[2][y] += v;
            }
        }
    }
    let keep: [Vec<usize>; 3] = std::array::from_fn(|k| (0..m[k].len()).filter(|&i| m[k][i] > 0.0).collect());
    let (k1, k2, ky) = (&keep[0], &keep[1], &keep[2]);
    let mut a = vec![0.0; ky.len() * k1.len()];
    let mut b = vec![0.0; ky.len() * k2.len()];
    for (yi, &y) in ky.iter().enumerate() {
        for (i1, &x1) in k1.iter().enumerate() {
            for &x2 in k2 {
                let v = p.get(x1, x2, y);
                a[yi * k1.len() + i1] += v;
            }
        }
        for (i2, &x2) in k2.iter().enumerate() {
            for &x1 in k1 {
                b[yi * k2.len() + i2] += p.get(x1, x2, y);
            }
        }
    }
    let py = ky.iter().map(|&y| m[2][y]).collect();
    let prob = Problem {
        n1: k1.len(),
        n2: k2.len(),
        ny: ky.len(),
        a,
        b,
        py,
    };
    (prob, keep)
}

fn embed(p: &JointPmf, prob: &Problem, keep: &[Vec<usize>; 3], q: &[f64]) -> JointPmf {
    let mut full = vec![0.0; p.probs().len()];
    for (i1, &x1) in keep[0].iter().enumerate() {
        for (i2, &x2) in keep[1].iter().enumerate() {
            for (iy, &y) in keep[2].iter().enumerate() {
                full[p.index(x1, x2, y)] = q[prob.idx(i1, i2, iy)];
            }
        }
    }
    JointPmf::from_raw(p.sizes(), full)
}

/// Decomposes `p`; stops once the certified objective error, and hence the
/// error of each component, is at most `tol` bits. On hitting the iteration cap the error carries the best iterate.
pub fn broja_decompose(p: &JointPmf, tol: f64) -> Result<PidResult> {
    broja_decompose_with(p, tol, DEFAULT_MAX_ITER)
}

pub fn broja_decompose_with(p: &JointPmf, tol: f64, max_iter: usize) -> Result<PidResult> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(invalid(format!("tol must be finite and > 0, got {tol}")));
    }
    let cells: usize = p.sizes().iter().product();
    if cells > MAX_ALPHABET {
        return Err(Error::Unsupported(format!(
            "alphabet product {cells} exceeds {MAX_ALPHABET}"
        )));
    }
    let (prob, keep) = prune(p);
    let tol_nats = tol * std::f64::consts::LN_2;

    let mut q = prob.initial();
    let mut f = prob.objective(&q);
    let mut eta = 1.0f64;
    let mut stalled = 0usize;
    let (mut newton_at, mut newton_wait) = (1usize, 1usize);
    let mut converged = false;
    let mut iterations = 0usize;

    while iterations < max_iter {
        iterations += 1;
        let Some((cand, _)) = prob.step(&q, eta) else {
            if eta > 1.0 {
                eta = (eta / 2.0).max(1.0);
                continue;
            }
            break;
        };
        let f_new = prob.objective(&cand);
        if f_new > f && eta > 1.0 {
            eta = (eta / 2.0).max(1.0);
            continue;
        }
        let f_old = f;
        q = cand;
        f = f_new.min(f);
        eta = (eta * 1.5).min(ETA_MAX);
        if iterations >= newton_at {
            match prob.newton(&q, f) {
                Some((cand, f_new)) => {
                    q = cand;
                    f = f_new;
                    newton_wait = 1;
                }
                None => newton_wait = (newton_wait * 2).min(NEWTON_BACKOFF_MAX),
            }
            newton_at = iterations + newton_wait;
        }
        let dec = f_old - f;

        if dec <= 1e-16 * f.abs().max(1e-3) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        if prob.gap_bound(&q) <= tol_nats || stalled >= 5 {
            converged = true;
            break;
        }
    }

    // `p` itself lies in Δ_p; never report a worse point.
    let p_reduced = {
        let mut v = vec![0.0; q.len()];
        for (i1, &x1) in keep[0].iter().enumerate() {
            for (i2, &x2) in keep[1].iter().enumerate() {
                for (iy, &y) in keep[2].iter().enumerate() {
                    v[prob.idx(i1, i2, iy)] = p.get(x1, x2, y);
                }
            }
        }
        v
    };
    if prob.objective(&p_reduced) < f {
        q = p_reduced;
    }
    let result = PidResult::from_q(p, embed(p, &prob, &keep, &q), iterations);
    if converged {
        Ok(result)
    } else {
        Err(Error::PidNoConvergence(Box::new(result)))
    }
}
