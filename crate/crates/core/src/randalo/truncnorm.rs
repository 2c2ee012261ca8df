//! Mean of a truncated normal distribution, evaluated through scaled
//! complementary error functions so that far-tail locations (the regime that
//! matters when probe noise pushes a diagonal estimate past 1) keep full
//! relative accuracy instead of underflowing to 0/0.

const FRAC_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const SQRT_2_OVER_PI: f64 = 0.7978845608028654; // sqrt(2/π)

/// Scaled complementary error function `erfcx(x) = exp(x²)·erfc(x)` for
/// `x ≥ 0`. Direct evaluation below the erfc underflow region, asymptotic
/// series beyond it.
fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= 25.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        // erfcx(x) ~ (1/(x√π)) Σ (−1)^k (2k−1)!!/(2x²)^k
        let inv2x2 = 1.0 / (2.0 * x * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=8u32 {
            term *= -((2 * k - 1) as f64) * inv2x2;
            sum += term;
        }
        sum / (x * std::f64::consts::PI.sqrt())
    }
}

/// Hazard-ratio part of the truncated-normal mean for a standardized interval
/// `0 ≤ a < b`:  `(φ(a) − φ(b)) / (Φ(b) − Φ(a))`.
fn ratio_right_tail(a: f64, b: f64) -> f64 {
    let xa = a * FRAC_SQRT_2;
    let xb = b * FRAC_SQRT_2;
    let delta = (b - a) * (b + a) * 0.5; // b²/2 − a²/2 ≥ 0
    let ed = if delta > 745.0 { 0.0 } else { (-delta).exp() };
    if ed == 1.0 {
        // Interval is narrower than a ulp of the exponent: point mass.
        return a;
    }
    let den = erfcx(xa) - ed * erfcx(xb);
    SQRT_2_OVER_PI * (1.0 - ed) / den
}

/// E[Z | Z ∈ [lower, upper]] for Z ~ Normal(loc, scale²).
///
/// `scale = 0` returns `loc` clamped to the interval. For `scale > 0` the
/// result is clamped into the open interval to the extent f64 permits.
pub fn truncated_normal_mean(loc: f64, scale: f64, lower: f64, upper: f64) -> f64 {
    assert!(lower < upper, "lower must be below upper");
    assert!(scale >= 0.0, "scale must be nonnegative");
    if scale == 0.0 {
        return loc.clamp(lower, upper);
    }
    let a = (lower - loc) / scale;
    let b = (upper - loc) / scale;

    let r = if a >= 0.0 {
        ratio_right_tail(a, b)
    } else if b <= 0.0 {
        -ratio_right_tail(-b, -a)
    } else {
        // Interval straddles the location: both erf terms add constructively.
        let num = SQRT_2_OVER_PI * 0.5 * ((-0.5 * a * a).exp() - (-0.5 * b * b).exp());
        let den = 0.5 * (libm::erf(b * FRAC_SQRT_2) - libm::erf(a * FRAC_SQRT_2));
        num / den
    };
    let mean = loc + scale * r;
    // Keep strictly inside the interval (up to adjacent floats).
    let lo = next_up(lower);
    let hi = next_down(upper);
    mean.clamp(lo, hi)
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    let bits = if x == 0.0 { 1 } else if x > 0.0 { x.to_bits() + 1 } else { x.to_bits() - 1 };
    f64::from_bits(bits)
}

fn next_down(x: f64) -> f64 {
    -next_up(-x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson on f over [a, b].
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        fn s<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
            let m = 0.5 * (a + b);
            (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
        }
        fn rec<F: Fn(f64) -> f64 + Copy>(
            f: F,
            a: f64,
            b: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let left = s(&f, a, m);
            let right = s(&f, m, b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, left, tol * 0.5, depth - 1) + rec(f, m, b, right, tol * 0.5, depth - 1)
            }
        }
        rec(f, a, b, s(&f, a, b), tol, depth)
    }

    /// Panel-wise adaptive Simpson: the pre-split keeps narrow peaks from
    /// being skipped by the first coarse probe.
    fn integrate<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64) -> f64 {
        let panels = 16;
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|i| {
                let lo = a + i as f64 * h;
                simpson(f, lo, lo + h, 1e-16, 48)
            })
            .sum()
    }

    /// Quadrature oracle for the truncated-normal mean in the standardized
    /// variable, with the window shifted to the dominant endpoint and sized
    /// to the decay scale so the integrand never underflows or hides between
    /// probe points.
    pub(crate) fn quadrature_mean(loc: f64, scale: f64, lower: f64, upper: f64) -> f64 {
        let a = (lower - loc) / scale;
        let b = (upper - loc) / scale;
        if a >= 0.0 {
            // Mass concentrates at a: substitute u = ξ − a ∈ [0, b−a],
            // weight ∝ exp(−ua − u²/2). Decay scale is min(1/a, O(1)).
            let w = |u: f64| (-u * a - 0.5 * u * u).exp();
            let hi = (b - a).min(14.0f64.min(45.0 / a.max(1.0)));
            let z0 = integrate(w, 0.0, hi);
            let z1 = integrate(|u| u * w(u), 0.0, hi);
            loc + scale * (a + z1 / z0)
        } else if b <= 0.0 {
            let (l2, u2) = (-upper, -lower);
            let loc2 = -loc;
            -quadrature_mean(loc2, scale, l2, u2)
        } else {
            let lo = a.max(-14.0);
            let hi = b.min(14.0);
            let w = |u: f64| (-0.5 * u * u).exp();
            let z0 = integrate(w, lo, hi);
            let z1 = integrate(|u| u * w(u), lo, hi);
            loc + scale * (z1 / z0)
        }
    }

    #[test]
    fn degenerate_scale_clamps() {
        assert_eq!(truncated_normal_mean(0.5, 0.0, 0.0, 1.0), 0.5);
        assert_eq!(truncated_normal_mean(1.7, 0.0, 0.0, 1.0), 1.0);
        assert_eq!(truncated_normal_mean(-0.3, 0.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn symmetric_location_is_fixed_point() {
        for scale in [1e-6, 0.01, 0.3, 1.0, 5.0] {
            let m = truncated_normal_mean(0.5, scale, 0.0, 1.0);
            assert!((m - 0.5).abs() < 1e-12, "scale={scale}: {m}");
        }
    }

    #[test]
    fn matches_quadrature_oracle_at_sample_points() {
        let locs = [-2.0, -0.7, 0.0, 0.3, 0.5, 0.99, 1.2, 3.0];
        let scales = [1e-6, 1e-3, 0.05, 0.5, 2.0, 5.0];
        for &loc in &locs {
            for &scale in &scales {
                let got = truncated_normal_mean(loc, scale, 0.0, 1.0);
                let want = quadrature_mean(loc, scale, 0.0, 1.0);
                assert!(
                    (got - want).abs() < 1e-10,
                    "loc={loc} scale={scale}: got {got}, oracle {want}"
                );
            }
        }
    }

    #[test]
    fn outside_location_pulls_toward_bound() {
        let m = truncated_normal_mean(1.2, 0.1, 0.0, 1.0);
        assert!(m < 1.0 && m > 0.9);
        let m = truncated_normal_mean(-5.0, 0.5, 0.0, 1.0);
        assert!(m > 0.0 && m < 0.1);
    }

    #[test]
    fn extreme_tails_do_not_underflow() {
        let m = truncated_normal_mean(3.0, 1e-6, 0.0, 1.0);
        assert!(m <= 1.0 && m > 1.0 - 1e-9, "{m}");
        let m = truncated_normal_mean(-3.0, 1e-6, 0.0, 1.0);
        assert!(m >= 0.0 && m < 1e-9, "{m}");
        assert!(truncated_normal_mean(1e8, 1.0, 0.0, 1.0) <= 1.0);
    }

    #[test]
    fn erfcx_continuity_at_switch() {
        let below = erfcx(25.0 - 1e-9);
        let above = erfcx(25.0 + 1e-9);
        assert!((below - above).abs() / below < 1e-10);
    }
}
