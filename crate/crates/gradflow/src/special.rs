//! Scalar kernels underlying the variational structure of the
//! Scharfetter-Gummel scheme.
//!
//! All kernels are evaluated in branch-stabilized closed forms or by adaptive
//! Gauss-Kronrod quadrature of overflow-free integrands. Densities `a`, `b`
//! are nonnegative, `eps` is the diffusivity (nonnegative; `eps = 0` selects
//! the upwind / aggregation limit kernels where one exists).
//!
//! Conventions for degenerate arguments follow the variational picture:
//! forces may be `±∞` on faces touching vacuum, and every kernel consumes
//! them without producing NaN (`α*(a,b,·) = 0` whenever `a·b = 0`, dual
//! kernels return `+∞` for infeasible fluxes).

use crate::quad;
use crate::util::EXP_CAP;

/// Absolute / relative tolerance pair for the internal quadratures.
const QUAD_ABS: f64 = 1e-13;
const QUAD_REL: f64 = 1e-11;

fn check_density(x: f64, name: &str) {
    assert!(
        x.is_finite() && x >= 0.0,
        "{name} must be a finite nonnegative density, got {x}"
    );
}

fn check_eps(eps: f64) {
    assert!(
        eps.is_finite() && eps >= 0.0,
        "eps must be finite and nonnegative, got {eps}"
    );
}

/// Bernoulli function 𝔟(s) = s / (e^s − 1), continuously extended by
/// 𝔟(0) = 1. Satisfies 𝔟(−s) = 𝔟(s) + s and decays to 0 as s → +∞.
pub fn bernoulli(s: f64) -> f64 {
    assert!(!s.is_nan(), "bernoulli argument must not be NaN");
    if s == 0.0 {
        return 1.0;
    }
    let d = s.exp_m1();
    if d.is_infinite() {
        0.0
    } else {
        s / d
    }
}

/// Logarithmic mean Λ(s, t) = (s − t)/(log s − log t), extended by
/// Λ(s, s) = s and Λ(s, 0) = 0. Symmetric by construction (arguments are
/// ordered internally), and √(st) ≤ Λ(s,t) ≤ (s+t)/2.
pub fn log_mean(s: f64, t: f64) -> f64 {
    check_density(s, "log_mean s");
    check_density(t, "log_mean t");
    if s == t {
        return s;
    }
    let (s, t) = if s >= t { (s, t) } else { (t, s) };
    if t == 0.0 {
        return 0.0;
    }
    let u = (s - t) / (s + t);
    if u < 1e-4 {
        // Λ = m·u/atanh(u) = m·(1 − u²/3 − 4u⁴/45 − …); at |u| < 1e−4 the
        // dropped u⁶ term is below one ulp.
        let m = 0.5 * (s + t);
        let u2 = u * u;
        m * (1.0 - u2 * (1.0 / 3.0 + u2 * (4.0 / 45.0)))
    } else if u <= 0.5 {
        // ln1p of the exact ratio avoids the cancellation of ln s − ln t.
        let d = s - t;
        d / (d / t).ln_1p()
    } else {
        // Well-separated arguments: the log difference is ≥ ln 3 and the
        // direct form is safe even for denormal t.
        (s - t) / (s.ln() - t.ln())
    }
}

/// Harmonic-logarithmic mean Λ_H(s, t) = st / Λ(s, t), extended by
/// Λ_H(s, s) = s and Λ_H(s, 0) = 0. Satisfies Λ_H ≤ √(st) ≤ Λ.
pub fn harm_log_mean(s: f64, t: f64) -> f64 {
    check_density(s, "harm_log_mean s");
    check_density(t, "harm_log_mean t");
    if s == t {
        return s;
    }
    if s == 0.0 || t == 0.0 {
        return 0.0;
    }
    (s / log_mean(s, t)) * t
}

/// Integrand sinh(x)·Λ_H(a e^{−x}, b e^{x}) for x ≥ 0, in the overflow-free
/// rearrangement a·b·(1−E)·log(b/(aE)) / (2(b − aE)) with E = e^{−2x}.
/// The log factor is computed as (ln b − ln a) + 2x, which stays exact even
/// when aE underflows; the removable point b = aE is routed through the
/// series-stabilized logarithmic mean.
fn tilt_pos(a: f64, b: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let e = (-2.0 * x).exp();
    let one_minus_e = -(-2.0 * x).exp_m1();
    let s = a * e;
    let d = b - s;
    if d.abs() <= 0.01 * (b + s) {
        a * b * one_minus_e / (2.0 * log_mean(s, b))
    } else {
        let lnr = (b.ln() - a.ln()) + 2.0 * x;
        a * b * one_minus_e * lnr / (2.0 * d)
    }
}

/// sinh(x)·Λ_H(a e^{−x}, b e^{x}) for all x; odd under (a,b,x) → (b,a,−x).
fn tilt(a: f64, b: f64, x: f64) -> f64 {
    if x >= 0.0 {
        tilt_pos(a, b, x)
    } else {
        -tilt_pos(b, a, -x)
    }
}

/// Quadratic kernel of the aggregation limit:
/// α*₀(a, b, ξ) = ½(a (ξ⁺)² + b (ξ⁻)²).
fn alpha_zero(a: f64, b: f64, xi: f64) -> f64 {
    let c = if xi >= 0.0 { a } else { b };
    if c == 0.0 || xi == 0.0 {
        0.0
    } else {
        0.5 * c * xi * xi
    }
}

/// Dual dissipation kernel
///
/// ```text
///     α*_ε(a, b, ξ) = ε² ∫₀^{ξ/ε} sinh(x) Λ_H(a e^{−x}, b e^{x}) dx ,
/// ```
///
/// extended by 0 whenever a·b = 0 and by the quadratic kernel α*₀ at ε = 0.
/// Nonnegative, convex and strictly increasing in |ξ|, one-homogeneous and
/// symmetric in (a, b) ↔ (b, a) under ξ → −ξ, with the exact special value
/// α*_ε(a, a, ξ) = a ξ²/2 independent of ε.
pub fn alpha_star(a: f64, b: f64, xi: f64, eps: f64) -> f64 {
    check_density(a, "alpha_star a");
    check_density(b, "alpha_star b");
    check_eps(eps);
    assert!(!xi.is_nan(), "alpha_star force must not be NaN");
    if eps == 0.0 {
        return alpha_zero(a, b, xi);
    }
    if a == 0.0 || b == 0.0 || xi == 0.0 {
        return 0.0;
    }
    if a == b {
        return 0.5 * a * xi * xi;
    }
    if xi.is_infinite() {
        return f64::INFINITY;
    }
    // Normalizing by max(a,b) makes one-homogeneity hold to round-off and
    // keeps the integrand O(|x|) for the absolute-tolerance cutoff.
    let m = a.max(b);
    let (na, nb) = (a / m, b / m);
    let r = quad::integrate(|x| tilt(na, nb, x), 0.0, xi / eps, QUAD_ABS, QUAD_REL);
    debug_assert!(
        r.abs_err <= 16.0 * QUAD_ABS.max(QUAD_REL * r.value.abs()),
        "tilted integral did not converge: estimate {}",
        r.abs_err
    );
    m * eps * eps * r.value
}

/// ∂_ξ α*_ε(a, b, ξ) = ε sinh(ξ/ε) Λ_H(a e^{−ξ/ε}, b e^{ξ/ε}); at ε = 0 the
/// upwind derivative a ξ⁺ − b ξ⁻. Strictly increasing in ξ (slope between
/// min(a,b) and max(a,b)), odd under the (a,b) swap.
pub fn alpha_star_d1(a: f64, b: f64, xi: f64, eps: f64) -> f64 {
    check_density(a, "alpha_star_d1 a");
    check_density(b, "alpha_star_d1 b");
    check_eps(eps);
    assert!(!xi.is_nan(), "alpha_star_d1 force must not be NaN");
    if eps == 0.0 {
        let c = if xi >= 0.0 { a } else { b };
        return if c == 0.0 || xi == 0.0 { 0.0 } else { c * xi };
    }
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    if a == b {
        return a * xi;
    }
    if xi.is_infinite() {
        return xi;
    }
    eps * tilt(a, b, xi / eps)
}

/// Second derivative ∂²_ξ α*_ε(a, b, ξ) for y = ξ/ε ≥ 0 in the stable form
///
/// ```text
///     ab · [ (a−b)(L−2y)E − (a+b)E + aE² + b ] / (aE − b)² ,   E = e^{−2y},
/// ```
///
/// with L = log(a/b); the removable point aE = b is evaluated through the
/// expansion Λ_H(s,t)(cosh y + sinh y · u(1/3 + 4u²/45)), u = (s−t)/(s+t).
fn d2_pos(a: f64, b: f64, y: f64) -> f64 {
    let e = (-2.0 * y).exp();
    let ae = a * e;
    let u = (ae - b) / (ae + b);
    if u.abs() < 1e-3 {
        // s = a e^{−y}, t = b e^{y} via log-space to survive extreme ratios.
        let s = (a.ln() - y).exp();
        let t = (b.ln() + y).exp();
        let lam_h = harm_log_mean(s, t);
        lam_h * (y.cosh() + y.sinh() * u * (1.0 / 3.0 + u * u * (4.0 / 45.0)))
    } else {
        let l = a.ln() - b.ln();
        let num = (a - b) * (l - 2.0 * y) * e - (a + b) * e + a * e * e + b;
        let den = (ae - b) * (ae - b);
        a * b * num / den
    }
}

/// ∂²_ξ α*_ε(a, b, ξ). Takes values in [min(a,b), max(a,b)], equals
/// Λ_H(a, b) at ξ = 0 and (a+b)/2 at the symmetry point ξ = (ε/2)log(a/b);
/// at ε = 0 the piecewise slope (a for ξ > 0, b for ξ < 0, midpoint at 0).
pub fn alpha_star_d2(a: f64, b: f64, xi: f64, eps: f64) -> f64 {
    check_density(a, "alpha_star_d2 a");
    check_density(b, "alpha_star_d2 b");
    check_eps(eps);
    assert!(!xi.is_nan(), "alpha_star_d2 force must not be NaN");
    if eps == 0.0 {
        return if xi > 0.0 {
            a
        } else if xi < 0.0 {
            b
        } else {
            0.5 * (a + b)
        };
    }
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    if a == b {
        return a;
    }
    let y = xi / eps;
    if y >= 0.0 {
        d2_pos(a, b, y)
    } else {
        d2_pos(b, a, -y)
    }
}

/// Primal dissipation kernel: the Legendre transform
/// α_ε(a, b, j) = sup_ξ [ j ξ − α*_ε(a, b, ξ) ].
///
/// For ε > 0 a flux across a vacuum face (a·b = 0, j ≠ 0) is infeasible and
/// the value is +∞; at ε = 0 the closed form (j⁺)²/(2a) + (j⁻)²/(2b) applies
/// with the conventions x/0 = +∞ for x > 0 and 0/0 = 0.
pub fn alpha_dual(a: f64, b: f64, j: f64, eps: f64) -> f64 {
    check_density(a, "alpha_dual a");
    check_density(b, "alpha_dual b");
    check_eps(eps);
    assert!(!j.is_nan(), "alpha_dual flux must not be NaN");
    if j == 0.0 {
        return 0.0;
    }
    if eps == 0.0 {
        let c = if j > 0.0 { a } else { b };
        return if c == 0.0 {
            f64::INFINITY
        } else {
            0.5 * j * j / c
        };
    }
    if a == 0.0 || b == 0.0 || j.is_infinite() {
        return f64::INFINITY;
    }
    if a == b {
        return 0.5 * j * j / a;
    }
    // Solve ∂_ξ α* = j by safeguarded Newton; the derivative is strictly
    // increasing with slope in [min(a,b), max(a,b)], so a bracket always
    // exists and Newton from the Λ_H-slope guess converges quadratically.
    let tol = 1e-12 * j.abs().max(1.0);
    let g = |x: f64| alpha_star_d1(a, b, x, eps) - j;
    let x0 = j / harm_log_mean(a, b);
    let mut lo = x0;
    let mut hi = x0;
    let mut step = 0.5 * (1.0 + x0.abs());
    for _ in 0..200 {
        if g(lo) <= 0.0 {
            break;
        }
        lo -= step;
        step *= 2.0;
    }
    step = 0.5 * (1.0 + x0.abs());
    for _ in 0..200 {
        if g(hi) >= 0.0 {
            break;
        }
        hi += step;
        step *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let gx = g(x);
        if gx.abs() <= tol {
            break;
        }
        if gx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = alpha_star_d2(a, b, x, eps);
        let mut xn = x - gx / slope;
        if !(xn > lo && xn < hi) {
            xn = 0.5 * (lo + hi);
        }
        if xn == x {
            break;
        }
        x = xn;
    }
    j * x - alpha_star(a, b, x, eps)
}

/// Tilt kernel β_ε(a, b) = α*_ε(a, b, (ε/2)·log(a/b)), evaluated through its
/// own integral representation
///
/// ```text
///     β_ε(a, b) = (ε²/4) ∫_a^b (ab/z) [ 1/Λ(z,a) − 1/Λ(z,b) ] dz   (a ≤ b),
/// ```
///
/// with the boundary value β_ε(a, 0) = (ε² π²/24)·a. Symmetric, nonnegative,
/// one-homogeneous, and squeezed between (ε²/4)(a−b)²/(a+b) and
/// (ε²/2)(√a − √b)².
pub fn beta(a: f64, b: f64, eps: f64) -> f64 {
    check_density(a, "beta a");
    check_density(b, "beta b");
    check_eps(eps);
    if a == b || eps == 0.0 {
        return 0.0;
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let pref = 0.25 * eps * eps * hi;
    let r = lo / hi;
    if r < 1e-14 {
        // β(max, lo) = pref·π²/6 + O(r log² r): the correction is below the
        // 1e−11 relative tolerance once r < 1e−14.
        return pref * (std::f64::consts::PI * std::f64::consts::PI / 6.0);
    }
    let q = quad::integrate(
        |z| (r / z) * (1.0 / log_mean(z, r) - 1.0 / log_mean(z, 1.0)),
        r,
        1.0,
        QUAD_ABS,
        QUAD_REL,
    );
    debug_assert!(
        q.abs_err <= 16.0 * QUAD_ABS.max(QUAD_REL * q.value.abs()),
        "drive-free kernel integral did not converge: estimate {}",
        q.abs_err
    );
    pref * q.value
}

/// Cosh-type conjugate Ψ*_ε(s) = 4ε²(cosh(s/2ε) − 1) = 8ε² sinh²(s/4ε),
/// evaluated in log-space once s/4ε exceeds the overflow threshold.
pub fn psi_star(s: f64, eps: f64) -> f64 {
    assert!(eps.is_finite() && eps > 0.0, "psi_star requires eps > 0");
    assert!(!s.is_nan(), "psi_star argument must not be NaN");
    let x = s.abs() / (4.0 * eps);
    if x <= 0.5 * EXP_CAP {
        let sh = x.sinh();
        8.0 * eps * eps * sh * sh
    } else {
        // 8ε² sinh²x = 2ε² e^{2x}(1 − e^{−2x})²
        let v = (2.0 * eps * eps).ln() + 2.0 * x + 2.0 * (-(-2.0 * x).exp()).ln_1p();
        v.exp()
    }
}

/// Interpolation weight 𝔥(s) = ¼ (e^s − 1 − s)/sinh²(s/2), equivalently
/// ½ + (sinh s − s)/(2(cosh s − 1)). Increases from 0 to 1 with 𝔥(0) = ½ and
/// 𝔥(s) + 𝔥(−s) = 1 (the reflection is used verbatim for s < 0).
pub fn h_kernel(s: f64) -> f64 {
    assert!(!s.is_nan(), "h_kernel argument must not be NaN");
    if s < 0.0 {
        return 1.0 - h_kernel(-s);
    }
    if s < 0.05 {
        // Odd-part series: ½ + s/6 − s³/180 + s⁵/5040; truncation error
        // below 1e−14 at the switch point.
        let s2 = s * s;
        0.5 + s * (1.0 / 6.0 + s2 * (-1.0 / 180.0 + s2 * (1.0 / 5040.0)))
    } else if s <= EXP_CAP {
        let e = (-s).exp();
        let om = -(-s).exp_m1();
        (1.0 - (1.0 + s) * e) / (om * om)
    } else {
        1.0
    }
}

/// Averaged interpolation kernel
/// 𝕙_ε(a, b, q) = ∫₀¹ [ a 𝔥(λq/ε) + b 𝔥(−λq/ε) ] (1 − λ) dλ,
/// with 𝕙_ε(a, b, 0) = (a+b)/4 and values in [0, (a+b)/2]; satisfies
/// 𝕙_ε(a, b, q) = 𝕙_ε(b, a, −q) exactly.
pub fn hh_kernel(a: f64, b: f64, q: f64, eps: f64) -> f64 {
    check_density(a, "hh_kernel a");
    check_density(b, "hh_kernel b");
    assert!(eps.is_finite() && eps > 0.0, "hh_kernel requires eps > 0");
    assert!(!q.is_nan(), "hh_kernel drive must not be NaN");
    if q == 0.0 {
        return 0.25 * (a + b);
    }
    let s0 = q / eps;
    let r = quad::integrate(
        |lam| {
            let s = lam * s0;
            (a * h_kernel(s) + b * h_kernel(-s)) * (1.0 - lam)
        },
        0.0,
        1.0,
        QUAD_ABS,
        QUAD_REL,
    );
    debug_assert!(
        r.abs_err <= 16.0 * QUAD_ABS.max(QUAD_REL * r.value.abs()),
        "drive-quadratic kernel integral did not converge: estimate {}",
        r.abs_err
    );
    r.value
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // -- frozen scalar anchors ------------------------------------------------

    #[test]
    fn bernoulli_anchors() {
        assert_eq!(bernoulli(0.0), 1.0);
        assert_relative_eq!(bernoulli(1.0), 0.5819767068693265, max_relative = 1e-14);
        assert_relative_eq!(bernoulli(-1.0), 1.5819767068693265, max_relative = 1e-14);
        assert!(bernoulli(700.0) < 1e-300);
        assert_eq!(bernoulli(800.0), 0.0);
        assert_relative_eq!(bernoulli(-800.0), 800.0, max_relative = 1e-15);
    }

    #[test]
    fn bernoulli_shift_identity() {
        for &s in &[1e-8, 0.3, 1.0, 7.5, 40.0, 700.0] {
            let lhs = bernoulli(-s);
            let rhs = bernoulli(s) + s;
            assert_relative_eq!(lhs, rhs, max_relative = 1e-14);
        }
    }

    #[test]
    fn log_mean_anchors() {
        assert_eq!(log_mean(1.0, 1.0), 1.0);
        assert_eq!(log_mean(0.0, 5.0), 0.0);
        assert_eq!(log_mean(0.0, 0.0), 0.0);
        // (4−1)/log 4
        assert_relative_eq!(log_mean(1.0, 4.0), 2.1640425613334451, max_relative = 1e-14);
        assert_relative_eq!(
            log_mean(1.0, std::f64::consts::E),
            std::f64::consts::E - 1.0,
            max_relative = 1e-14
        );
        // series branch continuity against the direct branch
        let v1 = log_mean(1.0, 1.0 + 2.001e-4);
        let v2 = log_mean(1.0, 1.0 + 1.999e-4);
        assert_relative_eq!(v1, v2, max_relative = 1e-6);
        let exact = 2.001e-4 / 2.001e-4f64.ln_1p();
        assert_relative_eq!(v1, exact, max_relative = 1e-13);
    }

    #[test]
    fn log_mean_extreme_ratios() {
        // Λ(1, t) = (1−t)/(−log t) → −1/log t as t → 0.
        let t = 1e-300f64;
        let expect = (1.0 - t) / (-(t.ln()));
        assert_relative_eq!(log_mean(1.0, t), expect, max_relative = 1e-13);
        assert!(log_mean(1.0, t) > 0.0);
    }

    #[test]
    fn harm_log_mean_anchors() {
        // 4·log 4 / 3
        assert_relative_eq!(
            harm_log_mean(1.0, 4.0),
            1.8483924814931875,
            max_relative = 1e-14
        );
        assert_eq!(harm_log_mean(3.0, 3.0), 3.0);
        assert_eq!(harm_log_mean(0.0, 2.0), 0.0);
    }

    #[test]
    fn h_kernel_anchors() {
        assert_eq!(h_kernel(0.0), 0.5);
        // two independent closed forms of the same value
        let direct = h_kernel(1.0);
        let odd_form = 0.5 + (1.0f64.sinh() - 1.0) / (2.0 * (1.0f64.cosh() - 1.0));
        assert_relative_eq!(direct, odd_form, max_relative = 1e-13);
        // limits and reflection
        assert_relative_eq!(h_kernel(50.0), 1.0, max_relative = 1e-12);
        assert!(h_kernel(-50.0) < 1e-12);
        for &s in &[0.01, 0.3, 2.0, 10.0, 300.0] {
            assert_eq!(h_kernel(s) + h_kernel(-s), 1.0);
        }
        // slope 1/6 at the origin
        let fd = (h_kernel(1e-6) - h_kernel(-1e-6)) / 2e-6;
        assert_relative_eq!(fd, 1.0 / 6.0, max_relative = 1e-9);
        // branch continuity at the series switch
        assert_relative_eq!(h_kernel(0.05 - 1e-12), h_kernel(0.05 + 1e-12), max_relative = 1e-12);
    }

    #[test]
    fn psi_star_anchors() {
        assert_eq!(psi_star(0.0, 1.0), 0.0);
        assert_relative_eq!(psi_star(2.0, 1.0), 2.1723225392609747, max_relative = 1e-14);
        assert_relative_eq!(
            psi_star(2.0, 1.0),
            4.0 * (1.0f64.cosh() - 1.0),
            max_relative = 1e-15
        );
        assert_eq!(psi_star(2.0, 1.0), psi_star(-2.0, 1.0));
        // log-space branch continuity (switch at |s| = 1400 ε): the two
        // samples straddle the branch point, so their ratio must match the
        // exact growth e^{Δs/2ε} of the cosh tail.
        let eps = 1.0;
        let lo = psi_star(1400.0 - 1e-6, eps);
        let hi = psi_star(1400.0 + 1e-6, eps);
        assert_relative_eq!(hi / lo, (1e-6f64).exp(), max_relative = 1e-10);
        assert!(psi_star(1.0e6, 1.0).is_infinite());
    }

    #[test]
    fn alpha_star_anchors() {
        // ε-independent diagonal value a ξ²/2
        assert_eq!(alpha_star(1.0, 1.0, 1.0, 1.0), 0.5);
        assert_eq!(alpha_star(2.0, 2.0, 3.0, 0.25), 9.0);
        // degenerate conventions
        assert_eq!(alpha_star(0.0, 5.0, 2.0, 1.0), 0.0);
        assert_eq!(alpha_star(5.0, 0.0, -3.0, 1.0), 0.0);
        assert_eq!(alpha_star(1.0, 2.0, 0.0, 1.0), 0.0);
        assert_eq!(alpha_star(0.0, 0.0, f64::INFINITY, 1.0), 0.0);
        assert_eq!(alpha_star(1.0, 2.0, f64::INFINITY, 1.0), f64::INFINITY);
        // aggregation limit
        assert_eq!(alpha_star(3.0, 7.0, 2.0, 0.0), 6.0);
        assert_eq!(alpha_star(3.0, 7.0, -2.0, 0.0), 14.0);
        assert_eq!(alpha_star(0.0, 7.0, 2.0, 0.0), 0.0);
    }

    #[test]
    fn alpha_star_d1_anchors() {
        assert_eq!(alpha_star_d1(1.0, 1.0, 1.0, 1.0), 1.0);
        // ε sinh(ξ/ε) Λ_H at the removable point aE = b: (a − b)/2
        assert_relative_eq!(
            alpha_star_d1(4.0, 1.0, std::f64::consts::LN_2, 1.0),
            1.5,
            max_relative = 1e-13
        );
        assert_eq!(alpha_star_d1(3.0, 7.0, 2.0, 0.0), 6.0);
        assert_eq!(alpha_star_d1(3.0, 7.0, -2.0, 0.0), -14.0);
        assert_eq!(alpha_star_d1(0.0, 7.0, 3.0, 1.0), 0.0);
    }

    #[test]
    fn alpha_star_d2_anchors() {
        // ∂² at ξ = 0 is the harmonic-log mean
        assert_relative_eq!(
            alpha_star_d2(1.0, 4.0, 0.0, 1.0),
            1.8483924814931875,
            max_relative = 1e-13
        );
        // at the symmetry point ξ = (ε/2) log(a/b) it is the arithmetic mean
        let xi = 0.5 * (3.0f64 / 5.0).ln();
        assert_relative_eq!(alpha_star_d2(3.0, 5.0, xi, 1.0), 4.0, max_relative = 1e-10);
        // far tails saturate at the single-sided slopes
        assert_relative_eq!(alpha_star_d2(3.0, 5.0, 80.0, 1.0), 3.0, max_relative = 1e-10);
        assert_relative_eq!(alpha_star_d2(3.0, 5.0, -80.0, 1.0), 5.0, max_relative = 1e-10);
        assert_eq!(alpha_star_d2(2.0, 2.0, 0.7, 1.0), 2.0);
        // aggregation limit slopes
        assert_eq!(alpha_star_d2(3.0, 7.0, 1.0, 0.0), 3.0);
        assert_eq!(alpha_star_d2(3.0, 7.0, -1.0, 0.0), 7.0);
        assert_eq!(alpha_star_d2(3.0, 7.0, 0.0, 0.0), 5.0);
    }

    #[test]
    fn alpha_dual_anchors() {
        assert_eq!(alpha_dual(2.0, 2.0, 3.0, 1.0), 2.25);
        assert_eq!(alpha_dual(1.0, 2.0, 0.0, 1.0), 0.0);
        assert_eq!(alpha_dual(0.0, 2.0, 1.0, 1.0), f64::INFINITY);
        // aggregation limit: (j⁺)²/2a + (j⁻)²/2b with directional feasibility
        assert_eq!(alpha_dual(3.0, 7.0, 6.0, 0.0), 6.0);
        assert_eq!(alpha_dual(3.0, 7.0, -7.0, 0.0), 3.5);
        assert_eq!(alpha_dual(0.0, 7.0, -7.0, 0.0), 3.5);
        assert_eq!(alpha_dual(0.0, 7.0, 7.0, 0.0), f64::INFINITY);
        assert_eq!(alpha_dual(0.0, 0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn beta_anchors() {
        assert_eq!(beta(2.0, 2.0, 1.0), 0.0);
        assert_eq!(beta(0.0, 0.0, 1.0), 0.0);
        // β(1, 0) = π²/24
        assert_relative_eq!(beta(1.0, 0.0, 1.0), 0.4112335167120566, max_relative = 1e-12);
        assert_relative_eq!(beta(0.0, 3.0, 1.0), 3.0 * 0.4112335167120566, max_relative = 1e-12);
        // lemma bracket at (4, 1): [0.45, 0.5]
        let b = beta(4.0, 1.0, 1.0);
        assert!((0.45..=0.5).contains(&b), "beta(4,1,1) = {b}");
        // exact ε² scaling for a power-of-two ε
        assert_eq!(beta(4.0, 1.0, 2.0), 4.0 * beta(4.0, 1.0, 1.0));
    }

    #[test]
    fn hh_kernel_anchors() {
        assert_eq!(hh_kernel(2.0, 2.0, 0.0, 1.0), 1.0);
        assert_eq!(hh_kernel(1.0, 3.0, 0.0, 1.0), 1.0);
        // a = b makes the integrand exactly a(1−λ)
        assert_relative_eq!(hh_kernel(2.0, 2.0, 0.7, 1.0), 1.0, max_relative = 1e-14);
        // strong drive saturates at a/2
        assert_relative_eq!(hh_kernel(1.0, 0.5, 1e8, 1.0), 0.5, max_relative = 1e-6);
        assert_relative_eq!(hh_kernel(1.0, 0.5, -1e8, 1.0), 0.25, max_relative = 1e-6);
    }

    // -- cross-representation oracles ----------------------------------------

    #[test]
    fn beta_matches_alpha_star_at_tilt_point() {
        // Two independent integral representations of the same quantity.
        for &(a, b, eps) in &[
            (4.0, 1.0, 1.0),
            (0.3, 2.7, 0.5),
            (1e-3, 5.0, 2.0),
            (9.0, 8.9, 1.0),
            (0.07, 0.11, 0.25),
        ] {
            let via_tilt = beta(a, b, eps);
            let xi = 0.5 * eps * ((a as f64).ln() - (b as f64).ln());
            let via_alpha = alpha_star(a, b, xi, eps);
            assert_relative_eq!(via_tilt, via_alpha, max_relative = 1e-9);
        }
    }

    #[test]
    fn fisher_face_decomposition_identity() {
        // With the full face force ξ = −(ε log(b/a) + q):
        //   4α*_ε(a,b,ξ/2) = 4β_ε(a,b) + ε(b−a)q + q²𝕙_ε(a,b,−q)
        for &(a, b, q, eps) in &[
            (1.0, 4.0, 0.7, 1.0),
            (2.5, 0.4, -1.3, 0.5),
            (0.9, 1.1, 3.0, 2.0),
            (5.0, 5.0, -2.0, 1.0),
            (0.02, 3.0, 0.4, 0.25),
        ] {
            let xi = -(eps * ((b as f64).ln() - (a as f64).ln()) + q);
            let lhs = 4.0 * alpha_star(a, b, 0.5 * xi, eps);
            let t0 = 4.0 * beta(a, b, eps);
            let t1 = eps * (b - a) * q;
            let t2 = q * q * hh_kernel(a, b, -q, eps);
            let rhs = t0 + t1 + t2;
            let scale = lhs.abs() + t0.abs() + t1.abs() + t2.abs();
            assert!(
                (lhs - rhs).abs() <= 1e-9 * scale.max(1e-12),
                "decomposition mismatch at ({a},{b},{q},{eps}): {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn alpha_star_cosh_upper_bound() {
        for &(a, b, xi, eps) in &[
            (1.0, 4.0, 0.7, 1.0),
            (2.5, 0.4, -1.3, 0.5),
            (0.9, 1.1, 3.0, 2.0),
            (1e-3, 10.0, 5.0, 0.1),
        ] {
            let lhs = alpha_star(a, b, xi, eps);
            let rhs = 0.25 * (a * b).sqrt() * psi_star(2.0 * xi, eps);
            assert!(
                lhs <= rhs * (1.0 + 1e-12) + 1e-300,
                "bound violated at ({a},{b},{xi},{eps}): {lhs} > {rhs}"
            );
        }
    }

    #[test]
    fn beta_squeeze_chain() {
        for &(a, b, eps) in &[
            (4.0f64, 1.0f64, 1.0f64),
            (0.3, 2.7, 0.5),
            (1e-3, 5.0, 2.0),
            (7.0, 7.5, 1.5),
            (1.0, 0.0, 1.0),
        ] {
            let lo2 = if a + b > 0.0 {
                0.25 * eps * eps * (a - b) * (a - b) / (a + b)
            } else {
                0.0
            };
            let lo1 = 0.25 * eps * eps * (a.sqrt() - b.sqrt()).powi(2);
            let hi = 0.5 * eps * eps * (a.sqrt() - b.sqrt()).powi(2);
            let v = beta(a, b, eps);
            let slack = 1e-12 * (1.0 + v.abs());
            assert!(lo1 <= lo2 + slack, "inner chain broken at ({a},{b})");
            assert!(lo2 <= v + slack, "lower bound broken: {lo2} > {v}");
            assert!(v <= hi + slack, "upper bound broken: {v} > {hi}");
        }
    }

    #[test]
    fn aggregation_limit_of_alpha_star() {
        // |α*_ε − α*₀| decreases (observed monotonically) as ε halves.
        for &(a, b, xi) in &[(1.0, 4.0, 0.8), (2.5, 0.4, -1.3), (0.9, 1.1, 3.0)] {
            let target = alpha_star(a, b, xi, 0.0);
            let mut eps = 1.0;
            let mut prev = f64::INFINITY;
            for _ in 0..7 {
                let diff = (alpha_star(a, b, xi, eps) - target).abs();
                assert!(
                    diff <= prev + 1e-12 * (1.0 + target),
                    "no decay at eps={eps}: {diff} > {prev}"
                );
                prev = diff;
                eps *= 0.5;
            }
            assert!(prev <= 0.02 * (1.0 + target), "limit not reached: {prev}");
        }
    }

    // -- randomized property suites -------------------------------------------

    fn density() -> impl Strategy<Value = f64> {
        (-3.0f64..1.0).prop_map(|e| 10f64.powf(e))
    }

    fn eps_pos() -> impl Strategy<Value = f64> {
        (-2.0f64..0.7).prop_map(|e| 10f64.powf(e))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn log_mean_between_geometric_and_arithmetic(s in density(), t in density()) {
            let lam = log_mean(s, t);
            let gm = (s * t).sqrt();
            let am = 0.5 * (s + t);
            prop_assert!(lam >= gm * (1.0 - 1e-13));
            prop_assert!(lam <= am * (1.0 + 1e-13));
            prop_assert_eq!(lam, log_mean(t, s));
            let hl = harm_log_mean(s, t);
            prop_assert!(hl <= gm * (1.0 + 1e-13));
        }

        #[test]
        fn bernoulli_positive_decreasing(s in -30.0f64..30.0) {
            let b0 = bernoulli(s);
            let b1 = bernoulli(s + 0.1);
            prop_assert!(b0 > 0.0);
            prop_assert!(b1 <= b0 * (1.0 + 1e-13));
        }

        #[test]
        fn alpha_star_symmetry_and_homogeneity(
            a in density(), b in density(), xi in -8.0f64..8.0, eps in eps_pos(), c in 0.1f64..10.0
        ) {
            let v = alpha_star(a, b, xi, eps);
            prop_assert!(v >= 0.0);
            let sym = alpha_star(b, a, -xi, eps);
            prop_assert!((v - sym).abs() <= 1e-11 * (1.0 + v));
            let scaled = alpha_star(c * a, c * b, xi, eps);
            prop_assert!((scaled - c * v).abs() <= 1e-11 * (1.0 + c * v));
        }

        #[test]
        fn alpha_star_convex_increasing_in_force(
            a in density(), b in density(), xi in 0.1f64..6.0, eps in eps_pos()
        ) {
            let v1 = alpha_star(a, b, xi, eps);
            let v2 = alpha_star(a, b, xi + 0.5, eps);
            prop_assert!(v2 >= v1 - 1e-10 * (1.0 + v2));
            let mid = alpha_star(a, b, xi + 0.25, eps);
            prop_assert!(mid <= 0.5 * (v1 + v2) + 1e-10 * (1.0 + v2));
        }

        #[test]
        fn alpha_star_d1_is_derivative(
            a in density(), b in density(), xi in -5.0f64..5.0, eps in 0.1f64..3.0
        ) {
            let h = 1e-4 * (1.0 + xi.abs());
            let fd = (alpha_star(a, b, xi + h, eps) - alpha_star(a, b, xi - h, eps)) / (2.0 * h);
            let d1 = alpha_star_d1(a, b, xi, eps);
            let scale = d1.abs().max(a.max(b) * h) + 1e-9;
            prop_assert!((fd - d1).abs() <= 1e-4 * scale, "fd {} vs d1 {}", fd, d1);
        }

        #[test]
        fn alpha_star_d2_is_derivative_and_bounded(
            a in density(), b in density(), xi in -5.0f64..5.0, eps in 0.1f64..3.0
        ) {
            let h = 1e-6 * (1.0 + xi.abs());
            let fd = (alpha_star_d1(a, b, xi + h, eps) - alpha_star_d1(a, b, xi - h, eps)) / (2.0 * h);
            let d2 = alpha_star_d2(a, b, xi, eps);
            prop_assert!((fd - d2).abs() <= 1e-5 * d2.abs().max(1e-9), "fd {} vs d2 {}", fd, d2);
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(d2 >= lo * (1.0 - 1e-10));
            prop_assert!(d2 <= hi * (1.0 + 1e-10));
        }

        #[test]
        fn alpha_star_d1_strictly_increasing(
            a in density(), b in density(), xi in -5.0f64..5.0, eps in 0.1f64..3.0
        ) {
            let d_lo = alpha_star_d1(a, b, xi, eps);
            let d_hi = alpha_star_d1(a, b, xi + 0.01, eps);
            // slope is at least min(a,b) > 0
            prop_assert!(d_hi - d_lo >= 0.009 * a.min(b));
        }

        #[test]
        fn fenchel_young_at_dual_pairs(
            a in density(), b in density(), xi in -4.0f64..4.0, eps in 0.1f64..3.0
        ) {
            let j = alpha_star_d1(a, b, xi, eps);
            let primal = alpha_dual(a, b, j, eps);
            let dual = alpha_star(a, b, xi, eps);
            let pairing = j * xi;
            let scale = primal.abs() + dual.abs() + pairing.abs() + 1e-9;
            prop_assert!(
                (primal + dual - pairing).abs() <= 1e-8 * scale,
                "gap {} at scale {}", (primal + dual - pairing).abs(), scale
            );
        }

        #[test]
        fn fenchel_young_inequality_off_diagonal(
            a in density(), b in density(), xi in -4.0f64..4.0,
            delta in 0.1f64..2.0, eps in 0.1f64..3.0
        ) {
            let j = alpha_star_d1(a, b, xi, eps);
            let primal = alpha_dual(a, b, j, eps);
            let other = xi + delta;
            let lower = j * other - alpha_star(a, b, other, eps);
            let scale = primal.abs() + lower.abs() + 1.0;
            prop_assert!(primal >= lower - 1e-12 * scale);
        }

        #[test]
        fn beta_symmetric_homogeneous(
            a in density(), b in density(), eps in eps_pos(), c in 0.1f64..10.0
        ) {
            let v = beta(a, b, eps);
            prop_assert!(v >= 0.0);
            prop_assert!((v - beta(b, a, eps)).abs() <= 1e-12 * (1.0 + v));
            let scaled = beta(c * a, c * b, eps);
            prop_assert!((scaled - c * v).abs() <= 1e-10 * (1.0 + c * v));
        }

        #[test]
        fn hh_kernel_bounds_and_antisymmetry(
            a in density(), b in density(), q in -50.0f64..50.0, eps in 0.1f64..3.0
        ) {
            let v = hh_kernel(a, b, q, eps);
            prop_assert!(v >= 0.0);
            prop_assert!(v <= 0.5 * (a + b) * (1.0 + 1e-12));
            prop_assert_eq!(v, hh_kernel(b, a, -q, eps));
        }

        #[test]
        fn psi_star_even_convex(s in 0.0f64..100.0, eps in 0.1f64..3.0) {
            prop_assert_eq!(psi_star(s, eps), psi_star(-s, eps));
            let mid = psi_star(s + 0.5, eps);
            let avg = 0.5 * (psi_star(s, eps) + psi_star(s + 1.0, eps));
            prop_assert!(mid <= avg * (1.0 + 1e-12));
        }
    }
}
