//! Discrete partial information decomposition of `I(X1, X2; Y)`.
//!
//! ```text
//! I(X1,X2;Y) = R + U1 + U2 + S
//! I(X1;Y)    = R + U1
//! I(X2;Y)    = R + U2
//! ```
//!
//! The decomposition follows the marginal-preserving definition: with
//! `Δ_p = {q : q(x1,y) = p(x1,y), q(x2,y) = p(x2,y)}` and `q*` the minimizer
//! of `I_q(X1,X2;Y)` over `Δ_p`,
//!
//! ```text
//! U1 = I_q*(X1;Y|X2)   U2 = I_q*(X2;Y|X1)
//! R  = I(X1;Y) − U1    S  = I(X1,X2;Y) − I_q*(X1,X2;Y)
//! ```
//!
//! All quantities are in bits. [`broja_decompose`] finds `q*` iteratively;
//! [`brute_force_oracle`] grid-searches `Δ_p` for binary sources and serves
//! as an independent check.

mod broja;
mod oracle;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use broja::{broja_decompose, broja_decompose_with, DEFAULT_MAX_ITER, DEFAULT_TOL, MAX_ALPHABET};
pub use oracle::brute_force_oracle;

use crate::error::{invalid, Result};

/// Tolerance on the total mass of a pmf.
pub const MASS_TOL: f64 = 1e-12;

/// Joint distribution of `(X1, X2, Y)`, flat index `(x1·|X2| + x2)·|Y| + y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointPmf {
    sizes: [usize; 3],
    p: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Var {
    X1,
    X2,
    Y,
}

impl Var {
    fn bit(self) -> u8 {
        match self {
            Var::X1 => 1,
            Var::X2 => 2,
            Var::Y => 4,
        }
    }
}

impl JointPmf {
    pub fn new(sizes: [usize; 3], p: Vec<f64>) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(invalid("alphabet sizes must be positive"));
        }
        let cells = sizes
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .ok_or_else(|| invalid("alphabet product overflows"))?;
        if p.len() != cells {
            return Err(invalid(format!(
                "pmf has {} entries, sizes {:?} need {cells}",
                p.len(),
                sizes
            )));
        }
        if let Some(i) = p.iter().position(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(invalid(format!("pmf entry {i} is {} (must be finite and >= 0)", p[i])));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(invalid(format!("pmf sums to {total}, expected 1")));
        }
        Ok(Self { sizes, p })
    }

    /// Normalizes non-negative weights into a pmf.
    pub fn from_weights(sizes: [usize; 3], w: Vec<f64>) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(invalid("weights must have positive finite total"));
        }
        Self::new(sizes, w.iter().map(|v| v / total).collect())
    }

    /// Builds a pmf from a function of `(x1, x2, y)`; the values are normalized.
    pub fn from_fn(sizes: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut w = Vec::with_capacity(sizes.iter().product());
        for x1 in 0..sizes[0] {
            for x2 in 0..sizes[1] {
                for y in 0..sizes[2] {
                    w.push(f(x1, x2, y));
                }
            }
        }
        Self::from_weights(sizes, w)
    }

    pub(crate) fn from_raw(sizes: [usize; 3], p: Vec<f64>) -> Self {
        Self { sizes, p }
    }

    pub fn sizes(&self) -> [usize; 3] {
        self.sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    #[inline]
    pub fn index(&self, x1: usize, x2: usize, y: usize) -> usize {
        (x1 * self.sizes[1] + x2) * self.sizes[2] + y
    }

    pub fn get(&self, x1: usize, x2: usize, y: usize) -> f64 {
        self.p[self.index(x1, x2, y)]
    }

    /// The same distribution with the roles of `X1` and `X2` exchanged.
    pub fn swap_sources(&self) -> Self {
        let [n1, n2, ny] = self.sizes;
        let mut p = vec![0.0; self.p.len()];
        for x1 in 0..n1 {
            for x2 in 0..n2 {
                for y in 0..ny {
                    p[(x2 * n1 + x1) * ny + y] = self.get(x1, x2, y);
                }
            }
        }
        Self::from_raw([n2, n1, ny], p)
    }

    /// Marginal over the variables in `mask` (bit 1 = X1, 2 = X2, 4 = Y),
    /// flattened in `(x1, x2, y)` order over the kept variables.
    fn marginal(&self, mask: u8) -> Vec<f64> {
        let [n1, n2, ny] = self.sizes;
        let keep = |bit: u8, n: usize| if mask & bit != 0 { n } else { 1 };
        let (k1, k2, ky) = (keep(1, n1), keep(2, n2), keep(4, ny));
        let mut out = vec![0.0; k1 * k2 * ky];
        for x1 in 0..n1 {
            for x2 in 0..n2 {
                for y in 0..ny {
                    let i = ((x1 % k1) * k2 + x2 % k2) * ky + y % ky;
                    out[i] += self.get(x1, x2, y);
                }
            }
        }
        out
    }

    /// Joint entropy of `vars` in bits; 0 for an empty set.
    pub fn entropy(&self, vars: &[Var]) -> f64 {
        let mask = vars.iter().fold(0, |m, v| m | v.bit());
        if mask == 0 {
            return 0.0;
        }
        -self
            .marginal(mask)
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v * v.log2())
            .sum::<f64>()
    }

    /// Pairwise marginals `p(x1, y)` (row-major `|X1|×|Y|`) and `p(x2, y)`.
    pub fn source_target_marginals(&self) -> (Vec<f64>, Vec<f64>) {
        (self.marginal(1 | 4), self.marginal(2 | 4))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let raw: JointPmf = serde_json::from_str(&fs::read_to_string(path)?)?;
        Self::new(raw.sizes, raw.p)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn group_mask(vars: &[Var], what: &str) -> Result<u8> {
    if vars.is_empty() {
        return Err(invalid(format!("{what} group is empty")));
    }
    let mut mask = 0u8;
    for v in vars {
        if mask & v.bit() != 0 {
            return Err(invalid(format!("{v:?} repeated in {what} group")));
        }
        mask |= v.bit();
    }
    Ok(mask)
}

/// Plug-in `I(A; B)` in bits between two disjoint variable groups.
pub fn mutual_information(p: &JointPmf, a: &[Var], b: &[Var]) -> Result<f64> {
    conditional_mutual_information(p, a, b, &[])
}

/// Plug-in `I(A; B | C)` in bits; `C` may be empty.
pub fn conditional_mutual_information(p: &JointPmf, a: &[Var], b: &[Var], c: &[Var]) -> Result<f64> {
    let ma = group_mask(a, "first")?;
    let mb = group_mask(b, "second")?;
    let mc = if c.is_empty() {
        0
    } else {
        group_mask(c, "conditioning")?
    };
    if ma & mb != 0 || ma & mc != 0 || mb & mc != 0 {
        return Err(invalid("variable groups must be disjoint"));
    }
    Ok(cmi_mask(p, ma, mb, mc))
}

/// `I(A;B|C)` by direct summation of `p·log(p(abc)p(c) / (p(ac)p(bc)))`,
/// which stays accurate when the result is near zero.
fn cmi_mask(p: &JointPmf, ma: u8, mb: u8, mc: u8) -> f64 {
    let [n1, n2, ny] = p.sizes;
    let abc = p.marginal(ma | mb | mc);
    let ac = p.marginal(ma | mc);
    let bc = p.marginal(mb | mc);
    let cc = p.marginal(mc);
    let idx = |mask: u8, x1: usize, x2: usize, y: usize| {
        let k2 = if mask & 2 != 0 { n2 } else { 1 };
        let ky = if mask & 4 != 0 { ny } else { 1 };
        let v1 = if mask & 1 != 0 { x1 } else { 0 };
        let v2 = if mask & 2 != 0 { x2 } else { 0 };
        let vy = if mask & 4 != 0 { y } else { 0 };
        (v1 * k2 + v2) * ky + vy
    };
    let mut total = 0.0;
    let d1 = if (ma | mb | mc) & 1 != 0 { n1 } else { 1 };
    let d2 = if (ma | mb | mc) & 2 != 0 { n2 } else { 1 };
    let dy = if (ma | mb | mc) & 4 != 0 { ny } else { 1 };
    for x1 in 0..d1 {
        for x2 in 0..d2 {
            for y in 0..dy {
                let v = abc[idx(ma | mb | mc, x1, x2, y)];
                if v <= 0.0 {
                    continue;
                }
                let num = v * cc[idx(mc, x1, x2, y)];
                let den = ac[idx(ma | mc, x1, x2, y)] * bc[idx(mb | mc, x1, x2, y)];
                total += v * (num / den).log2();
            }
        }
    }
    total
}

/// Normalized counts of `(x1, x2, y)` samples.
pub fn empirical_pmf(samples: &[(usize, usize, usize)], sizes: [usize; 3]) -> Result<JointPmf> {
    if samples.is_empty() {
        return Err(invalid("no samples"));
    }
    if sizes.contains(&0) {
        return Err(invalid("alphabet sizes must be positive"));
    }
    let mut counts = vec![0u64; sizes.iter().product()];
    for (i, &(x1, x2, y)) in samples.iter().enumerate() {
        if x1 >= sizes[0] || x2 >= sizes[1] || y >= sizes[2] {
            return Err(invalid(format!(
                "sample {i} = ({x1}, {x2}, {y}) outside alphabet sizes {sizes:?}"
            )));
        }
        counts[(x1 * sizes[1] + x2) * sizes[2] + y] += 1;
    }
    let n = samples.len() as f64;
    Ok(JointPmf::from_raw(
        sizes,
        counts.iter().map(|&c| c as f64 / n).collect(),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PidResiduals {
    /// `|R + U1 + U2 + S − I(X1,X2;Y)|`
    pub sum_rule: f64,
    /// `|R + U1 − I(X1;Y)|`
    pub x1_identity: f64,
    /// `|R + U2 − I(X2;Y)|`
    pub x2_identity: f64,
    /// Largest deviation of `q*`'s pairwise marginals from `p`'s.
    pub marginal: f64,
}

impl PidResiduals {
    pub fn max(&self) -> f64 {
        self.sum_rule.max(self.x1_identity).max(self.x2_identity)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PidResult {
    #[serde(rename = "R")]
    pub redundancy: f64,
    #[serde(rename = "U1")]
    pub unique1: f64,
    #[serde(rename = "U2")]
    pub unique2: f64,
    #[serde(rename = "S")]
    pub synergy: f64,
    pub i_joint: f64,
    pub i_x1: f64,
    pub i_x2: f64,
    pub q_star: JointPmf,
    pub residuals: PidResiduals,
    pub iterations: usize,
}

impl PidResult {
    /// `[R, U1, U2, S]`.
    pub fn components(&self) -> [f64; 4] {
        [self.redundancy, self.unique1, self.unique2, self.synergy]
    }

    /// Assembles all four components from one `q ∈ Δ_p`.
    pub(crate) fn from_q(p: &JointPmf, q: JointPmf, iterations: usize) -> Self {
        let i_joint = cmi_mask(p, 1 | 2, 4, 0);
        let i_x1 = cmi_mask(p, 1, 4, 0);
        let i_x2 = cmi_mask(p, 2, 4, 0);
        let iq_joint = cmi_mask(&q, 1 | 2, 4, 0);
        let unique1 = cmi_mask(&q, 1, 4, 2);
        let unique2 = cmi_mask(&q, 2, 4, 1);
        let redundancy = i_x1 - unique1;
        let synergy = i_joint - iq_joint;
        let (pa, pb) = p.source_target_marginals();
        let (qa, qb) = q.source_target_marginals();
        let marginal = pa
            .iter()
            .zip(&qa)
            .chain(pb.iter().zip(&qb))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let residuals = PidResiduals {
            sum_rule: (redundancy + unique1 + unique2 + synergy - i_joint).abs(),
            x1_identity: (redundancy + unique1 - i_x1).abs(),
            x2_identity: (redundancy + unique2 - i_x2).abs(),
            marginal,
        };
        Self {
            redundancy,
            unique1,
            unique2,
            synergy,
            i_joint,
            i_x1,
            i_x2,
            q_star: q,
            residuals,
            iterations,
        }
    }
}

/// Canonical two-input gates with uniform inputs.
pub mod gates {
    use super::JointPmf;

    fn gate(f: impl Fn(usize, usize) -> usize) -> JointPmf {
        JointPmf::from_fn([2, 2, 2], |a, b, y| if f(a, b) == y { 1.0 } else { 0.0 }).expect("gate pmf is valid")
    }

    pub fn xor() -> JointPmf {
        gate(|a, b| a ^ b)
    }

    pub fn and() -> JointPmf {
        gate(|a, b| a & b)
    }

    /// `Y = X1` with `X2` independent.
    pub fn unq() -> JointPmf {
        gate(|a, _| a)
    }

    /// `Y = X1 = X2`, uniform.
    pub fn copy() -> JointPmf {
        JointPmf::from_fn([2, 2, 2], |a, b, y| if a == b && b == y { 1.0 } else { 0.0 }).expect("copy pmf is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mi_basics() {
        let indep = JointPmf::from_fn([2, 1, 2], |_, _, _| 1.0).unwrap();
        assert_eq!(mutual_information(&indep, &[Var::X1], &[Var::Y]).unwrap(), 0.0);
        let copy = JointPmf::from_fn([2, 1, 2], |x, _, y| (x == y) as u8 as f64).unwrap();
        assert!((mutual_information(&copy, &[Var::X1], &[Var::Y]).unwrap() - 1.0).abs() < 1e-15);
        let xor = gates::xor();
        let i = mutual_information(&xor, &[Var::X1, Var::X2], &[Var::Y]).unwrap();
        assert!((i - 1.0).abs() < 1e-15);
        assert!(mutual_information(&xor, &[Var::X1], &[Var::Y]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn invalid_groups() {
        let p = gates::and();
        assert!(mutual_information(&p, &[], &[Var::Y]).is_err());
        assert!(mutual_information(&p, &[Var::X1], &[Var::X1]).is_err());
        assert!(mutual_information(&p, &[Var::Y, Var::Y], &[Var::X1]).is_err());
    }

    #[test]
    fn cmi_matches_entropy_form() {
        let p = JointPmf::from_fn([3, 2, 3], |a, b, y| 1.0 + (a * 7 + b * 3 + y * 5) as f64 % 4.0).unwrap();
        let direct = conditional_mutual_information(&p, &[Var::X1], &[Var::Y], &[Var::X2]).unwrap();
        let h = |v: &[Var]| p.entropy(v);
        let via_h = h(&[Var::X1, Var::X2]) + h(&[Var::X2, Var::Y]) - h(&[Var::X1, Var::X2, Var::Y]) - h(&[Var::X2]);
        assert!((direct - via_h).abs() < 1e-12);
    }

    #[test]
    fn pmf_validation() {
        assert!(JointPmf::new([2, 2, 2], vec![0.125; 8]).is_ok());
        assert!(JointPmf::new([2, 2, 2], vec![0.125; 7]).is_err());
        assert!(JointPmf::new([2, 2, 2], vec![0.2; 8]).is_err());
        let mut v = vec![0.125; 8];
        v[0] = -0.125;
        v[1] = 0.375;
        assert!(JointPmf::new([2, 2, 2], v).is_err());
    }

    #[test]
    fn empirical() {
        let p = empirical_pmf(&[(1, 0, 1); 5], [2, 2, 2]).unwrap();
        assert_eq!(p.get(1, 0, 1), 1.0);
        let u = empirical_pmf(&[(0, 0, 0), (0, 0, 1), (1, 0, 0), (1, 0, 1)], [2, 1, 2]).unwrap();
        assert!(u.probs().iter().all(|&v| v == 0.25));
        let err = empirical_pmf(&[(0, 0, 0), (0, 2, 0)], [2, 2, 2]).unwrap_err();
        assert!(err.to_string().contains("sample 1"));
    }

    #[test]
    fn json_round_trip() {
        let p = gates::and();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        p.save_json(&path).unwrap();
        assert_eq!(JointPmf::load_json(&path).unwrap(), p);
    }

    #[test]
    fn swap_sources_twice() {
        let p = JointPmf::from_fn([3, 2, 2], |a, b, y| (1 + a + 2 * b + y) as f64).unwrap();
        assert_eq!(p.swap_sources().swap_sources(), p);
        assert_eq!(p.swap_sources().sizes(), [2, 3, 2]);
    }
}
