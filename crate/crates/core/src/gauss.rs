//! Standard normal distribution functions with log-space tails.
//!
//! `erfc` is the fdlibm rational scheme (also used by musl and Go). For
//! arguments past 1.25 the fdlibm representation is already a product of
//! exponentials, so `ln_erfc` evaluates the same expression without ever
//! exponentiating; that keeps full relative accuracy in the log down to
//! probabilities far below the smallest subnormal.

use std::f64::consts::{LN_2, SQRT_2};

const ERX: f64 = 8.45062911510467529297e-01;

// erf on [0, 0.84375]
const EFX: f64 = 1.28379167095512586316e-01;
const PP0: f64 = 1.28379167095512558561e-01;
const PP1: f64 = -3.25042107247001499370e-01;
const PP2: f64 = -2.84817495755985104766e-02;
const PP3: f64 = -5.77027029648944159157e-03;
const PP4: f64 = -2.37630166566501626084e-05;
const QQ1: f64 = 3.97917223959155352819e-01;
const QQ2: f64 = 6.50222499887672944485e-02;
const QQ3: f64 = 5.08130628187576562776e-03;
const QQ4: f64 = 1.32494738004321644526e-04;
const QQ5: f64 = -3.96022827877536812320e-06;

// erf on [0.84375, 1.25]
const PA0: f64 = -2.36211856075265944077e-03;
const PA1: f64 = 4.14856118683748331666e-01;
const PA2: f64 = -3.72207876035701323847e-01;
const PA3: f64 = 3.18346619901161753674e-01;
const PA4: f64 = -1.10894694282396677476e-01;
const PA5: f64 = 3.54783043256182359371e-02;
const PA6: f64 = -2.16637559486879084300e-03;
const QA1: f64 = 1.06420880400844228286e-01;
const QA2: f64 = 5.40397917702171048937e-01;
const QA3: f64 = 7.18286544141962662868e-02;
const QA4: f64 = 1.26171219808761642112e-01;
const QA5: f64 = 1.36370839120290507362e-02;
const QA6: f64 = 1.19844998467991074170e-02;

// erfc on [1.25, 1/0.35]
const RA0: f64 = -9.86494403484714822705e-03;
const RA1: f64 = -6.93858572707181764372e-01;
const RA2: f64 = -1.05586262253232909814e+01;
const RA3: f64 = -6.23753324503260060396e+01;
const RA4: f64 = -1.62396669462573470355e+02;
const RA5: f64 = -1.84605092906711035994e+02;
const RA6: f64 = -8.12874355063065934246e+01;
const RA7: f64 = -9.81432934416914548592e+00;
const SA1: f64 = 1.96512716674392571292e+01;
const SA2: f64 = 1.37657754143519042600e+02;
const SA3: f64 = 4.34565877475229228821e+02;
const SA4: f64 = 6.45387271733267880336e+02;
const SA5: f64 = 4.29008140027567833386e+02;
const SA6: f64 = 1.08635005541779435134e+02;
const SA7: f64 = 6.57024977031928170135e+00;
const SA8: f64 = -6.04244152148580987438e-02;

// erfc on [1/0.35, inf)
const RB0: f64 = -9.86494292470009928597e-03;
const RB1: f64 = -7.99283237680523006574e-01;
const RB2: f64 = -1.77579549177547519889e+01;
const RB3: f64 = -1.60636384855821916062e+02;
const RB4: f64 = -6.37566443368389627722e+02;
const RB5: f64 = -1.02509513161107724954e+03;
const RB6: f64 = -4.83519191608651397019e+02;
const SB1: f64 = 3.03380607434824582924e+01;
const SB2: f64 = 3.25792512996573918826e+02;
const SB3: f64 = 1.53672958608443695994e+03;
const SB4: f64 = 3.19985821950859553908e+03;
const SB5: f64 = 2.55305040643316442583e+03;
const SB6: f64 = 4.74528541206955367215e+02;
const SB7: f64 = -2.24409524465858183362e+01;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn erf_small(x: f64) -> f64 {
    // |x| < 0.84375, returns erf(x) - x
    if x.abs() < 3.725_290_298_461_914e-9 {
        return EFX * x;
    }
    let z = x * x;
    let r = PP0 + z * (PP1 + z * (PP2 + z * (PP3 + z * PP4)));
    let s = 1.0 + z * (QQ1 + z * (QQ2 + z * (QQ3 + z * (QQ4 + z * QQ5))));
    x * (r / s)
}

fn erf_mid_tail(ax: f64) -> f64 {
    // 0.84375 <= |x| < 1.25, returns erf(|x|) - ERX
    let s = ax - 1.0;
    let p = PA0 + s * (PA1 + s * (PA2 + s * (PA3 + s * (PA4 + s * (PA5 + s * PA6)))));
    let q = 1.0 + s * (QA1 + s * (QA2 + s * (QA3 + s * (QA4 + s * (QA5 + s * QA6)))));
    p / q
}

/// `ln(erfc(x) * x) + x^2` for `x >= 1.25`, split so that the large square is
/// carried exactly in two parts. Returns `(-hi^2, rest)`.
fn erfc_tail_log_parts(x: f64) -> (f64, f64) {
    let s = 1.0 / (x * x);
    let (r, q) = if x < 1.0 / 0.35 {
        (
            RA0 + s * (RA1 + s * (RA2 + s * (RA3 + s * (RA4 + s * (RA5 + s * (RA6 + s * RA7)))))),
            1.0 + s
                * (SA1
                    + s * (SA2 + s * (SA3 + s * (SA4 + s * (SA5 + s * (SA6 + s * (SA7 + s * SA8))))))),
        )
    } else {
        (
            RB0 + s * (RB1 + s * (RB2 + s * (RB3 + s * (RB4 + s * (RB5 + s * RB6))))),
            1.0 + s * (SB1 + s * (SB2 + s * (SB3 + s * (SB4 + s * (SB5 + s * (SB6 + s * SB7)))))),
        )
    };
    // hi keeps the top 20 mantissa bits so hi*hi is exact
    let hi = f64::from_bits(x.to_bits() & 0xffff_ffff_0000_0000);
    (-hi * hi, -0.5625 + (hi - x) * (hi + x) + r / q)
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    if ax < 0.84375 {
        let y = erf_small(x);
        return if x < 0.25 { 1.0 - (x + y) } else { 0.5 - (x - 0.5 + y) };
    }
    if ax < 1.25 {
        let y = erf_mid_tail(ax);
        return if x > 0.0 { 1.0 - ERX - y } else { 1.0 + ERX + y };
    }
    if x < 0.0 {
        if x <= -6.0 {
            return 2.0;
        }
        return 2.0 - erfc(ax);
    }
    if x >= 28.0 {
        return ln_erfc(x).exp();
    }
    let (a, b) = erfc_tail_log_parts(x);
    a.exp() * b.exp() / x
}

/// Natural log of `erfc(x)`, finite for every finite `x`.
pub fn ln_erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.abs() < 0.84375 {
        // erfc near 1: log1p of -erf keeps the small result exact
        return (-(x + erf_small(x))).ln_1p();
    }
    if x < 1.25 {
        return erfc(x).ln();
    }
    if x == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    let (a, b) = erfc_tail_log_parts(x);
    a + b - x.ln()
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

/// Natural log of the standard normal density.
pub fn ln_norm_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Natural log of the standard normal CDF.
pub fn ln_norm_cdf(z: f64) -> f64 {
    if z > 5.0 {
        // Φ(z) = 1 - Φ(-z); log1p keeps the tiny complement
        return (-norm_cdf(-z)).ln_1p();
    }
    ln_erfc(-z / SQRT_2) - LN_2
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation refined by Newton steps on
/// `ln Φ(z) - ln p`, so the result is accurate to a few ulps across (0, 1).
pub fn norm_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    if p > 0.5 {
        return -norm_quantile_ln((-p).ln_1p());
    }
    norm_quantile_ln(p.ln())
}

/// Lower-tail quantile from a log-probability: returns `z` with
/// `ln Φ(z) = ln_p`. Works for `ln_p` far below `ln(f64::MIN_POSITIVE)`.
pub fn norm_quantile_ln(ln_p: f64) -> f64 {
    if ln_p.is_nan() || ln_p > 0.0 {
        return f64::NAN;
    }
    if ln_p == 0.0 {
        return f64::INFINITY;
    }
    if ln_p == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if ln_p > -LN_2 {
        // upper half, reflect through the complement
        let upper = -ln_p.exp_m1();
        return -norm_quantile_ln(upper.ln());
    }
    let mut z = acklam_lower(ln_p);
    for _ in 0..8 {
        let ln_cdf = ln_norm_cdf(z);
        let ratio = (ln_norm_pdf(z) - ln_cdf).exp();
        let step = (ln_cdf - ln_p) / ratio;
        z -= step;
        if step.abs() <= 4.0 * f64::EPSILON * z.abs().max(1.0) {
            break;
        }
    }
    z
}

fn acklam_lower(ln_p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
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
    const LN_P_LOW: f64 = -3.719_339_405_407_218; // ln(0.02425)
    if ln_p < LN_P_LOW {
        let q = (-2.0 * ln_p).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = ln_p.exp() - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// `log10` of a natural-log value.
pub fn ln_to_log10(ln_x: f64) -> f64 {
    ln_x / std::f64::consts::LN_10
}

#[cfg(test)]
mod tests {
    use super::*;

    // (x, erfc(x), ln erfc(x)) at 50 digits, rounded to 20
    const ORACLE: [(f64, f64, f64); 27] = [
        (-5.5, 1.9999999999999926422, 0.69314718055994163049),
        (-3.0, 1.9999779095030014146, 0.69313613525044681032),
        (-1.0, 1.8427007929497148693, 0.61123231767807049464),
        (-0.5, 1.5204998778130465377, 0.41903914777555958036),
        (0.0, 1.0, 0.0),
        (1e-9, 0.9999999988716208329, -1.1283791677321323464e-9),
        (0.2, 0.77729741078952154586, -0.25193223378261666096),
        (0.5, 0.47950012218695346232, -0.73501112983708440303),
        (0.84, 0.23485728854500546534, -1.4487772320960684717),
        (0.9, 0.20309178757716787148, -1.5940972465793173321),
        (1.2, 0.089686021770364619762, -2.4114403551669297028),
        (1.3, 0.065992055059347563396, -2.718220922090384341),
        (2.0, 0.0046777349810472658379, -5.3649412646166375745),
        (2.8, 0.000075013194665459024223, -9.4978465310288459971),
        (3.0, 0.000022090496998585441373, -10.720363041981112568),
        (5.0, 1.5374597944280348502e-12, -27.200889545537434422),
        (8.0, 1.122429717298292708e-29, -66.65947197080516149),
        (12.0, 1.3562611692059042128e-64, -147.06071417798700949),
        (20.0, 5.3958656116079009289e-176, -403.56934333410423496),
        (26.0, 5.6631924088561428465e-296, -679.83119976319423026),
        (27.5, 0.0, -760.13721101534819463),
        (28.0, 0.0, -787.90520619455771228),
        (30.0, 0.0, -903.97411711064387808),
        (40.0, 0.0, -1604.2615566532735557),
        (100.0, 0.0, -10005.177585122664333),
        (1000.0, 0.0, -1000007.4801207219062),
        (12345.678, 0.0, -152415775.2731102675),
    ];

    fn rel(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    #[test]
    fn erfc_against_oracle() {
        for &(x, e, _) in &ORACLE {
            if e > 0.0 {
                assert!(rel(erfc(x), e) < 4e-15, "erfc({x}) = {} vs {e}", erfc(x));
            }
        }
    }

    #[test]
    fn ln_erfc_against_oracle() {
        for &(x, _, le) in &ORACLE {
            let tol = if le.abs() < 1e-3 { 1e-15 } else { 4e-15 };
            let got = ln_erfc(x);
            if le == 0.0 {
                assert_eq!(got, 0.0);
            } else {
                assert!(rel(got, le) < tol, "ln_erfc({x}) = {got} vs {le}");
            }
        }
    }

    #[test]
    fn collision_example_probability() {
        // z for v = 50 km/h, η = 1.5 s, l = 5 m, σ_o = 0.05
        let z: f64 = -18.616122045152153546;
        assert!(rel(norm_cdf(z), 1.1891284777522183567e-77) < 1e-13);
        assert!(rel(ln_norm_cdf(z), -177.12583149336999039) < 1e-15);
    }

    #[test]
    fn cdf_symmetry_and_upper_tail() {
        for &z in &[0.1, 0.7, 1.3, 2.5, 4.0, 6.0, 9.0] {
            assert!((norm_cdf(z) + norm_cdf(-z) - 1.0).abs() < 2e-16);
        }
        assert!(ln_norm_cdf(40.0) <= 0.0 && ln_norm_cdf(40.0) > -1e-300);
        assert!(rel(ln_norm_cdf(6.0), -9.8658764552437573169e-10) < 1e-14);
    }

    #[test]
    fn quantile_against_oracle() {
        let cases = [
            (1e-8, -5.6120012441747887315),
            (1e-10, -6.3613409024040562047),
            (0.3, -0.52440051270804078404),
            (0.975, 1.9599639845400542355),
            (0.5, 0.0),
        ];
        for &(p, q) in &cases {
            let got = norm_quantile(p);
            assert!((got - q).abs() < 4e-15 * q.abs().max(1.0), "Q({p}) = {got} vs {q}");
        }
        assert!(rel(norm_quantile(1e-300), -37.04709629936119923722) < 1e-15);
        assert!(rel(norm_quantile_ln(-10000.0), -141.3798398731271637028) < 1e-15);
        assert_eq!(norm_quantile(0.0), f64::NEG_INFINITY);
        assert!(norm_quantile(1.5).is_nan());
    }

    #[test]
    fn quantile_roundtrip_in_log_space() {
        let mut lp = -1e-3;
        while lp > -1e5 {
            let z = norm_quantile_ln(lp);
            assert!(rel(ln_norm_cdf(z), lp) < 1e-13, "ln p = {lp}");
            lp *= 1.7;
        }
    }
}
