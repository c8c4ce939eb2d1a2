//! Vectorizable `exp` for slices.
//!
//! `exp(x) = 2^k · exp(r)` with `k = round(x / ln 2)` and `|r| ≤ ln 2 / 2`;
//! `r` is formed with a two-part `ln 2` so the reduction is exact for the
//! supported range, and `exp(r)` is its degree-13 Taylor polynomial in Horner
//! form. Only plain multiplies and adds are used, so every instruction set
//! produces the same bits. Accurate to about 1 ulp for `x ∈ [-708, 708]`.

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 0.693_147_180_369_123_8;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
/// `1.5·2^52`: adding it rounds to an integer held in the low mantissa bits.
const SHIFT: f64 = 6_755_399_441_055_744.0;
pub const DOMAIN: f64 = 708.0;

/// `1/j!` for `j = 13, 12, …, 2`.
const COEFFS: [f64; 12] = [
    1.0 / 6_227_020_800.0,
    1.0 / 479_001_600.0,
    1.0 / 39_916_800.0,
    1.0 / 3_628_800.0,
    1.0 / 362_880.0,
    1.0 / 40_320.0,
    1.0 / 5_040.0,
    1.0 / 720.0,
    1.0 / 120.0,
    1.0 / 24.0,
    1.0 / 6.0,
    0.5,
];

#[inline(always)]
fn exp1(x: f64) -> f64 {
    let x = x.clamp(-DOMAIN, DOMAIN);
    let t = x * LOG2E + SHIFT;
    let k = t - SHIFT;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = COEFFS[0];
    for &c in &COEFFS[1..] {
        p = p * r + c;
    }
    p = (p * r + 1.0) * r + 1.0;
    let ki = (t.to_bits() as i64).wrapping_sub(SHIFT.to_bits() as i64);
    let scale = f64::from_bits(((ki + 1023) as u64) << 52);
    p * scale
}

#[inline(always)]
fn body(xs: &mut [f64]) {
    for v in xs.iter_mut() {
        *v = exp1(*v);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn body_avx2(xs: &mut [f64]) {
    body(xs)
}

/// Replaces every entry by its exponential; inputs are clamped to
/// `[-DOMAIN, DOMAIN]`.
pub fn exp_in_place(xs: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2.
        return unsafe { body_avx2(xs) };
    }
    body(xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn ulps(a: f64, b: f64) -> u64 {
        (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
    }

    #[test]
    fn matches_libm_within_two_ulp() {
        let mut rng = Rng::new(9);
        let xs: Vec<f64> = (0..200_000)
            .map(|i| match i % 3 {
                0 => rng.uniform_range(-1.0, 1.0),
                1 => rng.uniform_range(-40.0, 0.0),
                _ => rng.uniform_range(-700.0, 700.0),
            })
            .collect();
        let mut got = xs.clone();
        exp_in_place(&mut got);
        let worst = xs.iter().zip(&got).map(|(x, g)| ulps(x.exp(), *g)).max().unwrap();
        assert!(worst <= 2, "{worst} ulp");
    }

    #[test]
    fn exact_points() {
        let mut v = vec![0.0, 1.0, -1.0, std::f64::consts::LN_2];
        exp_in_place(&mut v);
        assert_eq!(v[0], 1.0);
        assert!(ulps(v[1], std::f64::consts::E) <= 1);
        assert!(ulps(v[2], (-1.0f64).exp()) <= 1);
        assert!(ulps(v[3], 2.0) <= 1);
    }

    #[test]
    fn same_bits_with_and_without_dispatch() {
        let mut rng = Rng::new(4);
        let xs: Vec<f64> = (0..1000).map(|_| rng.uniform_range(-50.0, 5.0)).collect();
        let mut a = xs.clone();
        exp_in_place(&mut a);
        let mut b = xs;
        body(&mut b);
        assert_eq!(a, b);
    }
}
