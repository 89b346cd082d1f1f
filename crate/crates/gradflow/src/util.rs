//! Small numeric helpers shared across modules.

/// Exponent magnitude beyond which `exp` over/underflows f64; arguments are
/// routed through log-space branches instead of evaluating `exp` directly.
pub(crate) const EXP_CAP: f64 = 700.0;

/// Neumaier compensated summation. Deterministic for a fixed iteration order
/// and accurate to ~1 ulp of the true sum, which the energy-dissipation
/// audits rely on when residuals sit near round-off.
pub(crate) fn sum_compensated<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Total-variation distance between two mass vectors: ½ Σ|a_K − b_K|.
pub(crate) fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    0.5 * sum_compensated(a.iter().zip(b).map(|(x, y)| (x - y).abs()))
}

/// Euclidean distance between padded coordinate triples.
pub(crate) fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}
