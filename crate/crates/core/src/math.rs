//! Scalar special functions. Everything goes through `libm` so results do not
//! depend on whether the platform `std` math library is linked.

pub use libm::{exp, lgamma, log, sqrt};

/// `ln(y!)`.
#[inline]
pub fn ln_factorial(y: u64) -> f64 {
    if y < 2 {
        0.0
    } else {
        lgamma(y as f64 + 1.0)
    }
}

/// Log density of a gamma distribution in shape/rate form.
pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * log(rate) - lgamma(shape) + (shape - 1.0) * log(x) - rate * x
}

/// Inverse of the standard normal CDF (Wichura, AS 241, double precision).
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2_509.080_928_730_122_7 * r + 33_430.575_583_588_13) * r + 67_265.770_927_008_7) * r
                + 45_921.953_931_549_87)
                * r
                + 13_731.693_765_509_46)
                * r
                + 1_971.590_950_306_551_3)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5_226.495_278_852_546 * r + 28_729.085_735_721_943) * r + 39_307.895_800_092_71) * r
                + 21_213.794_301_586_597)
                * r
                + 5_394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = sqrt(-log(r));
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_6) * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_08)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r + 0.001_242_660_947_388_078_4) * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_87)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn ln_factorial_small_values() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_matches_reference() {
        let n = Normal::new(0.0, 1.0).unwrap();
        for &p in &[0.001, 0.025, 0.2, 0.5, 0.7, 0.975, 0.999] {
            let z = normal_quantile(p);
            assert!((n.cdf(z) - p).abs() < 1e-9 * p, "p={p} z={z}");
        }
        for (p, want) in [
            (0.001, -3.090232306167813),
            (0.2, -0.8416212335729143),
            (0.7, 0.5244005127080407),
        ] {
            assert!((normal_quantile(p) - want).abs() < 1e-12, "p={p}");
        }
        // far tails, where the reference cdf loses digits: R's qnorm
        assert!((normal_quantile(1e-10) + 6.361340902404056).abs() < 1e-12);
        assert!((normal_quantile(1.0 - 1e-9) - 5.997807015008).abs() < 1e-6);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
    }

    #[test]
    fn gamma_log_pdf_matches_reference() {
        use statrs::distribution::{Continuous, Gamma};
        let g = Gamma::new(2.5, 1.7).unwrap();
        for &x in &[0.01, 0.5, 3.0] {
            assert!((gamma_ln_pdf(x, 2.5, 1.7) - g.ln_pdf(x)).abs() < 1e-10);
        }
    }
}
