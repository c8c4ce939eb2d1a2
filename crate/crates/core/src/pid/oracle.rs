//! Exhaustive grid search over `Δ_p` for binary sources.
//!
//! With `|X1|, |X2| ≤ 2` each `y`-slice of `q ∈ Δ_p` is fixed by the single
//! value `t_y = q(0,0,y)`:
//!
//! ```text
//! q(0,1,y) = p(x1=0,y) − t_y     q(1,0,y) = p(x2=0,y) − t_y
//! q(1,1,y) = p(y) − p(x1=0,y) − p(x2=0,y) + t_y
//! t_y ∈ [max(0, p(x1=0,y) + p(x2=0,y) − p(y)), min(p(x1=0,y), p(x2=0,y))]
//! ```
//!
//! The objective `Σ q ln q − Σ_x q(x) ln q(x)` splits into one term per `y`
//! plus a term that depends only on `T = Σ_y t_y`, so each grid point costs
//! one table lookup per axis. Each free axis gets `grid_steps + 1` evenly
//! spaced points including both ends; doubling `grid_steps` nests the grid,
//! so the minimum never gets worse under refinement.

use super::{JointPmf, PidResult};
use crate::error::{invalid, Error, Result};

const MAX_FREE: usize = 3;

fn xlnx(v: f64) -> f64 {
    if v > 0.0 {
        v * v.ln()
    } else {
        0.0
    }
}

struct Axis {
    y: usize,
    values: Vec<f64>,
    phi: Vec<f64>,
}

pub fn brute_force_oracle(p: &JointPmf, grid_steps: usize) -> Result<PidResult> {
    let [n1, n2, ny] = p.sizes();
    if n1 > 2 || n2 > 2 {
        return Err(Error::Unsupported(format!(
            "oracle needs binary sources, got sizes {:?}",
            p.sizes()
        )));
    }
    if grid_steps == 0 {
        return Err(invalid("grid_steps must be positive"));
    }
    let (pa, pb) = p.source_target_marginals();
    // Cell values of slice y given t.
    let slice = |y: usize, t: f64| -> [f64; 4] {
        let a0 = pa[y];
        let b0 = pb[y];
        let py: f64 = (0..n1).map(|x1| pa[x1 * ny + y]).sum();
        [t, a0 - t, b0 - t, py - a0 - b0 + t].map(|v| v.max(0.0))
    };

    // With a unary source every slice is pinned to p itself.
    if n1 < 2 || n2 < 2 {
        return Ok(PidResult::from_q(p, p.clone(), 1));
    }

    let mut fixed_t = vec![0.0; ny];
    let mut axes: Vec<Axis> = Vec::new();
    for y in 0..ny {
        let a0 = pa[y];
        let b0 = pb[y];
        let py = a0 + pa[ny + y];
        let lo = (a0 + b0 - py).max(0.0);
        let hi = a0.min(b0);
        if hi <= lo {
            fixed_t[y] = lo;
            continue;
        }
        let values: Vec<f64> = (0..=grid_steps)
            .map(|i| lo + (hi - lo) * i as f64 / grid_steps as f64)
            .collect();
        let phi = values
            .iter()
            .map(|&t| slice(y, t).iter().map(|&v| xlnx(v)).sum())
            .collect();
        axes.push(Axis { y, values, phi });
    }
    if axes.len() > MAX_FREE {
        return Err(Error::Unsupported(format!(
            "{} free parameters exceed the oracle limit of {MAX_FREE}",
            axes.len()
        )));
    }

    let fixed_sum: f64 = fixed_t.iter().sum();
    let fixed_phi: f64 = (0..ny)
        .filter(|y| !axes.iter().any(|a| a.y == *y))
        .map(|y| slice(y, fixed_t[y]).iter().map(|&v| xlnx(v)).sum::<f64>())
        .sum();
    let pa0: f64 = (0..ny).map(|y| pa[y]).sum();
    let pb0: f64 = (0..ny).map(|y| pb[y]).sum();
    let psi = |t: f64| -> f64 { xlnx(t) + xlnx(pa0 - t) + xlnx(pb0 - t) + xlnx(1.0 - pa0 - pb0 + t) };

    let dims: Vec<usize> = axes.iter().map(|a| a.values.len()).collect();
    let total: usize = dims.iter().product();
    let mut best = (f64::INFINITY, vec![0usize; axes.len()]);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..total {
        let mut t = fixed_sum;
        let mut f = fixed_phi;
        for (a, &i) in axes.iter().zip(&idx) {
            t += a.values[i];
            f += a.phi[i];
        }
        f -= psi(t);
        if f < best.0 {
            best = (f, idx.clone());
        }
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }

    let mut t = fixed_t;
    for (a, &i) in axes.iter().zip(&best.1) {
        t[a.y] = a.values[i];
    }
    let mut q = vec![0.0; p.probs().len()];
    for (y, &ty) in t.iter().enumerate() {
        let c = slice(y, ty);
        q[p.index(0, 0, y)] = c[0];
        q[p.index(0, 1, y)] = c[1];
        q[p.index(1, 0, y)] = c[2];
        q[p.index(1, 1, y)] = c[3];
    }
    Ok(PidResult::from_q(p, JointPmf::from_raw(p.sizes(), q), total))
}
