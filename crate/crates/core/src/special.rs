//! Small special-function helpers used by the density evaluators and the
//! probe-grid construction. Accuracy targets are modest (the consumers are
//! diagnostics and sampling bounds, not quadrature weights).

use crate::scalar::{real, Scalar};

/// Lanczos approximation (g = 7, 9 terms) of `ln Gamma(x)` for `x > 0`.
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];

    let half = real::<T>(0.5);
    if x < half {
        // Reflection formula keeps the series argument in its accurate range.
        let pi = T::pi();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }

    let z = x - T::one();
    let mut acc = real::<T>(COEFFS[0]);
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += real::<T>(c) / (z + real::<T>(i as f64));
    }
    let t = z + real::<T>(7.5);
    real::<T>(0.918_938_533_204_672_7) + (z + half) * t.ln() - t + acc.ln()
}

/// Inverse CDF of the standard normal distribution (Acklam's rational
/// approximation, |relative error| < 1.2e-9 on (0, 1)).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument must lie in (0, 1)");

    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_690e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Wilson-Hilferty approximation of the Gamma(shape, 1) quantile, floored at a
/// small positive value so probe points stay strictly inside the support.
pub fn gamma_quantile(shape: f64, p: f64) -> f64 {
    assert!(shape > 0.0);
    let z = normal_quantile(p);
    let w = 1.0 - 1.0 / (9.0 * shape) + z / (3.0 * shape.sqrt());
    let q = shape * w * w * w;
    q.max(1e-8 * shape)
}
