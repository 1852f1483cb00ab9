use super::Rng;
use crate::{Error, Result};

/// Probabilities are clamped to `[U_CLAMP, 1 - U_CLAMP]` before `phi_inv`
/// so boundary uniforms never produce infinite latents.
pub const U_CLAMP: f64 = 1e-10;

/// Draw from Lap(0, b) by inverse CDF.
pub fn laplace(rng: &mut Rng, scale: f64) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Argument(format!("laplace scale must be positive and finite, got {scale}")));
    }
    // u in (-1/2, 1/2); the open interval keeps ln(1 - 2|u|) finite.
    let u = rng.uniform_open() - 0.5;
    Ok(-scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
}

/// Standard normal CDF.
pub fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal quantile (Wichura's AS 241, double precision variant).
pub fn phi_inv(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Argument(format!("phi_inv needs u in (0, 1), got {u}")));
    }
    Ok(ppnd16(u))
}

fn poly(coeffs: &[f64; 8], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    133.141_667_891_784_377_45,
    1_971.590_950_306_551_442_7,
    13_731.693_765_509_461_125,
    45_921.953_931_549_871_457,
    67_265.770_927_008_700_853,
    33_430.575_583_588_128_105,
    2_509.080_928_730_122_672_7,
];
const B: [f64; 8] = [
    1.0,
    42.313_330_701_600_911_252,
    687.187_007_492_057_908_3,
    5_394.196_021_424_751_107_7,
    21_213.794_301_586_595_867,
    39_307.895_800_092_710_61,
    28_729.085_735_721_942_674,
    5_226.495_278_852_854_561,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    0.241_780_725_177_450_611_77,
    0.022_723_844_989_269_184_583_3,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    0.689_767_334_985_100_004_55,
    0.148_103_976_427_480_074_59,
    0.015_198_666_563_616_457_196_6,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    0.296_560_571_828_504_891_23,
    0.026_532_189_526_576_123_093,
    0.001_242_660_947_388_078_438_6,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_937_69,
    0.136_929_880_922_735_805_31,
    0.014_875_361_290_850_614_852_5,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

fn ppnd16(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernels::Rng;
    use proptest::prelude::*;

    /// Composite Simpson integration of the normal density from 0 to z.
    fn phi_by_quadrature(z: f64) -> f64 {
        let steps = 20_000;
        let h = z / steps as f64;
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = pdf(0.0) + pdf(z);
        for k in 1..steps {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * pdf(k as f64 * h);
        }
        0.5 + acc * h / 3.0
    }

    fn quantile_by_bisection(u: f64) -> f64 {
        // phi has no relative precision near 1; bisect in the lower tail instead.
        if u > 0.5 {
            return -quantile_by_bisection(1.0 - u);
        }
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn phi_reference_points() {
        assert_eq!(phi(0.0), 0.5);
        let z = 1.959_963_985;
        let oracle = phi_by_quadrature(z);
        assert!((oracle - 0.975).abs() < 1e-9);
        assert!((phi(z) - 0.975).abs() < 1e-9);
        for &z in &[0.3, 1.0, 2.5, 4.0] {
            assert!((phi(z) - phi_by_quadrature(z)).abs() < 1e-12, "z = {z}");
        }
    }

    #[test]
    fn phi_inv_reference_points() {
        assert_eq!(phi_inv(0.5).unwrap(), 0.0);
        let oracle = quantile_by_bisection(0.975);
        assert!((oracle - 1.959_964).abs() < 1e-6);
        assert!((phi_inv(0.975).unwrap() - 1.959_964).abs() < 1e-6);
        for &u in &[1e-10, 1e-6, 0.01, 0.2, 0.7, 0.999, 1.0 - 1e-10] {
            assert!((phi_inv(u).unwrap() - quantile_by_bisection(u)).abs() < 1e-8, "u = {u}");
        }
    }

    #[test]
    fn phi_inv_rejects_boundaries() {
        assert!(phi_inv(0.0).is_err());
        assert!(phi_inv(1.0).is_err());
        assert!(phi_inv(f64::NAN).is_err());
    }

    #[test]
    fn inverse_identity_on_grid() {
        let mut z = -6.0;
        while z <= 6.0 {
            assert!((phi_inv(phi(z)).unwrap() - z).abs() < 1e-8, "z = {z}");
            z += 0.01;
        }
        let mut u = 1e-10;
        while u < 1.0 {
            assert!((phi(phi_inv(u).unwrap()) - u).abs() <= 1e-9);
            assert!((phi(phi_inv(1.0 - u).unwrap()) - (1.0 - u)).abs() <= 1e-9);
            u *= 1.7;
        }
    }

    #[test]
    fn laplace_rejects_bad_scale() {
        let mut rng = Rng::new(0);
        assert!(laplace(&mut rng, 0.0).is_err());
        assert!(laplace(&mut rng, -1.0).is_err());
        assert_eq!(1.0 / 0.5, 2.0);
    }

    #[test]
    fn laplace_moments() {
        let n = 1_000_000;
        let mut rng = Rng::new(2024);
        let mut draws: Vec<f64> = (0..n).map(|_| laplace(&mut rng, 2.0).unwrap()).collect();
        let mad = draws.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        assert!((mad - 2.0).abs() < 0.01, "E|X| = {mad}");
        draws.sort_by(f64::total_cmp);
        let median = 0.5 * (draws[n / 2 - 1] + draws[n / 2]);
        assert!(median.abs() < 3.0 * 2.0 / (n as f64).sqrt(), "median {median}");

        let mut rng = Rng::new(77);
        let draws: Vec<f64> = (0..n).map(|_| laplace(&mut rng, 1.0).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 2.0).abs() < 0.02, "var {var}");
    }

    proptest! {
        #[test]
        fn phi_symmetry(z in -8.0f64..8.0) {
            prop_assert!((phi(-z) - (1.0 - phi(z))).abs() < 1e-15);
        }

        #[test]
        fn monotone_on_sorted_inputs(mut zs in proptest::collection::vec(-8.0f64..8.0, 2..64)) {
            zs.sort_by(f64::total_cmp);
            for w in zs.windows(2) {
                prop_assert!(phi(w[0]) <= phi(w[1]));
            }
            let mut us: Vec<f64> = zs.iter().map(|z| phi(*z).clamp(U_CLAMP, 1.0 - U_CLAMP)).collect();
            us.dedup();
            for w in us.windows(2) {
                prop_assert!(phi_inv(w[0]).unwrap() <= phi_inv(w[1]).unwrap());
            }
        }
    }
}
