//! External potentials `V`, interaction kernels `W`, and their
//! discretization on a tessellation.
//!
//! The discrete drive combines both: `Q_K(ρ) = V(x_K) + Σ_M W(x_K − x_M) ρ_M`
//! (the self term `W(0) ρ_K` is included), and each face carries
//! `q_f = Q_b − Q_a` in the canonical orientation. `Q` is assembled once per
//! state in O(cells²); the interaction matrix is stored densely when it fits
//! a configurable cap and evaluated on the fly otherwise, with identical
//! summation order so both paths produce identical bits.

use std::path::Path;

use thiserror::Error;

use crate::mesh::Tessellation;
use crate::util::sum_compensated;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("table I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("table parse error, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid potential: {0}")]
    Invalid(String),
    #[error("interaction table is not symmetric (residual {residual:.3e})")]
    NonSymmetric { residual: f64 },
    #[error("gradient unavailable: {0}")]
    GradientUnavailable(String),
}

fn norm3(x: &[f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

// ---------------------------------------------------------------------------
// tabulated fields
// ---------------------------------------------------------------------------

/// Scalar field tabulated on a rectilinear lattice of nodes, evaluated by
/// multilinear interpolation with clamping outside the table domain.
#[derive(Debug, Clone)]
pub struct TabulatedField {
    dim: usize,
    axes: [Vec<f64>; 3],
    /// Node values in lexicographic order, axis 0 fastest.
    values: Vec<f64>,
}

impl TabulatedField {
    /// Build from scattered `(point, value)` records that must fill a full
    /// rectilinear lattice (not necessarily uniformly spaced).
    pub fn from_points(dim: usize, pts: &[([f64; 3], f64)]) -> Result<Self, PotentialError> {
        if !(1..=3).contains(&dim) {
            return Err(PotentialError::Invalid(format!(
                "table dimension must be 1..=3, got {dim}"
            )));
        }
        if pts.is_empty() {
            return Err(PotentialError::Invalid("empty table".into()));
        }
        let mut axes: [Vec<f64>; 3] = [vec![0.0], vec![0.0], vec![0.0]];
        for d in 0..dim {
            let mut coords: Vec<f64> = pts.iter().map(|(x, _)| x[d]).collect();
            coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let span = coords[coords.len() - 1] - coords[0];
            let tol = 1e-9 * (span.abs() + 1.0);
            let mut uniq = vec![coords[0]];
            for &c in &coords[1..] {
                if c - *uniq.last().unwrap() > tol {
                    uniq.push(c);
                }
            }
            axes[d] = uniq;
        }
        let counts: Vec<usize> = (0..3).map(|d| if d < dim { axes[d].len() } else { 1 }).collect();
        let total: usize = counts.iter().product();
        if total != pts.len() {
            return Err(PotentialError::Invalid(format!(
                "table is not a full lattice: {} points vs {total} lattice sites",
                pts.len()
            )));
        }
        let mut values = vec![f64::NAN; total];
        for (x, v) in pts {
            let mut ix = [0usize; 3];
            for d in 0..dim {
                let tol = 1e-9 * (axes[d].last().unwrap() - axes[d][0] + 1.0);
                let pos = axes[d]
                    .iter()
                    .position(|c| (c - x[d]).abs() <= tol)
                    .ok_or_else(|| {
                        PotentialError::Invalid(format!("point {:?} off the table lattice", &x[..dim]))
                    })?;
                ix[d] = pos;
            }
            let lex = ix[0] + counts[0] * (ix[1] + counts[1] * ix[2]);
            if !values[lex].is_nan() {
                return Err(PotentialError::Invalid(format!(
                    "duplicate table node at {:?}",
                    &x[..dim]
                )));
            }
            values[lex] = *v;
        }
        Ok(TabulatedField { dim, axes, values })
    }

    /// Parse `x[,y[,z]],value` CSV records; a non-numeric first line is
    /// treated as a header.
    pub fn from_csv(text: &str) -> Result<Self, PotentialError> {
        let mut pts: Vec<([f64; 3], f64)> = Vec::new();
        let mut dim = 0usize;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split(',').map(str::trim).collect();
            let nums: Option<Vec<f64>> = toks.iter().map(|t| t.parse().ok()).collect();
            let Some(nums) = nums else {
                if i == 0 {
                    continue; // header
                }
                return Err(PotentialError::Parse {
                    line: i + 1,
                    msg: format!("non-numeric record `{line}`"),
                });
            };
            let d = nums.len().saturating_sub(1);
            if !(1..=3).contains(&d) {
                return Err(PotentialError::Parse {
                    line: i + 1,
                    msg: format!("expected 2..4 comma-separated numbers, got {}", nums.len()),
                });
            }
            if dim == 0 {
                dim = d;
            } else if d != dim {
                return Err(PotentialError::Parse {
                    line: i + 1,
                    msg: format!("inconsistent dimension: {d} vs {dim}"),
                });
            }
            let mut x = [0.0f64; 3];
            x[..d].copy_from_slice(&nums[..d]);
            pts.push((x, nums[d]));
        }
        Self::from_points(dim, &pts)
    }

    pub fn read_csv(path: &Path) -> Result<Self, PotentialError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text)
    }

    /// Serialize the full node lattice back to CSV (round-trip exact).
    pub fn to_csv(&self) -> String {
        let counts: Vec<usize> = (0..3)
            .map(|d| if d < self.dim { self.axes[d].len() } else { 1 })
            .collect();
        let mut out = String::new();
        for (lex, v) in self.values.iter().enumerate() {
            let mut rem = lex;
            for d in 0..self.dim {
                let i = rem % counts[d];
                rem /= counts[d];
                out.push_str(&format!("{:.16e},", self.axes[d][i]));
            }
            out.push_str(&format!("{v:.16e}\n"));
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Multilinear interpolation, clamped to the table domain.
    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        let mut i0 = [0usize; 3];
        let mut w = [0.0f64; 3];
        let mut counts = [1usize; 3];
        for d in 0..self.dim {
            let ax = &self.axes[d];
            counts[d] = ax.len();
            if ax.len() == 1 {
                continue;
            }
            let p = x[d].clamp(ax[0], *ax.last().unwrap());
            let j = match ax.binary_search_by(|c| c.partial_cmp(&p).unwrap()) {
                Ok(j) => j.min(ax.len() - 2),
                Err(j) => j.saturating_sub(1).min(ax.len() - 2),
            };
            i0[d] = j;
            w[d] = (p - ax[j]) / (ax[j + 1] - ax[j]);
        }
        let mut acc = 0.0;
        let corners = 1usize << self.dim;
        for c in 0..corners {
            let mut weight = 1.0;
            let mut ix = [0usize; 3];
            for d in 0..self.dim {
                let hi = (c >> d) & 1 == 1;
                if self.axes[d].len() == 1 {
                    if hi {
                        weight = 0.0;
                    }
                    continue;
                }
                ix[d] = i0[d] + if hi { 1 } else { 0 };
                weight *= if hi { w[d] } else { 1.0 - w[d] };
            }
            if weight != 0.0 {
                let lex = ix[0] + counts[0] * (ix[1] + counts[1] * ix[2]);
                acc += weight * self.values[lex];
            }
        }
        acc
    }

    /// Check W(x) ≈ W(−x) at every node whose reflection lies inside the
    /// table domain; returns the worst relative residual.
    fn symmetry_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        let counts: Vec<usize> = (0..3)
            .map(|d| if d < self.dim { self.axes[d].len() } else { 1 })
            .collect();
        for lex in 0..self.values.len() {
            let mut rem = lex;
            let mut x = [0.0f64; 3];
            let mut inside = true;
            for d in 0..self.dim {
                let i = rem % counts[d];
                rem /= counts[d];
                x[d] = self.axes[d][i];
                let m = -x[d];
                if m < self.axes[d][0] - 1e-12 || m > self.axes[d][counts[d] - 1] + 1e-12 {
                    inside = false;
                }
            }
            if !inside {
                continue;
            }
            let neg = [-x[0], -x[1], -x[2]];
            let v = self.values[lex];
            let r = (v - self.eval(&neg)).abs() / v.abs().max(1.0);
            worst = worst.max(r);
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// analytic potentials
// ---------------------------------------------------------------------------

/// External potential V acting on positions.
#[derive(Debug, Clone)]
pub enum ExternalPotential {
    Zero,
    /// V(x) = g·x
    Linear { g: [f64; 3] },
    /// V(x) = (k/2)|x − center|²
    Quadratic { center: [f64; 3], k: f64 },
    /// V(x) = k (|x − center|² − radius²)²
    DoubleWell { center: [f64; 3], radius: f64, k: f64 },
    Tabulated(TabulatedField),
}

impl ExternalPotential {
    pub fn validate(&self) -> Result<(), PotentialError> {
        let ok = match self {
            ExternalPotential::Zero => true,
            ExternalPotential::Linear { g } => g.iter().all(|v| v.is_finite()),
            ExternalPotential::Quadratic { center, k } => {
                center.iter().all(|v| v.is_finite()) && k.is_finite() && *k >= 0.0
            }
            ExternalPotential::DoubleWell { center, radius, k } => {
                center.iter().all(|v| v.is_finite())
                    && radius.is_finite()
                    && *radius >= 0.0
                    && k.is_finite()
                    && *k >= 0.0
            }
            ExternalPotential::Tabulated(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(PotentialError::Invalid("non-finite or negative external potential parameters".into()))
        }
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        match self {
            ExternalPotential::Zero => 0.0,
            ExternalPotential::Linear { g } => g[0] * x[0] + g[1] * x[1] + g[2] * x[2],
            ExternalPotential::Quadratic { center, k } => {
                let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                0.5 * k * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
            }
            ExternalPotential::DoubleWell { center, radius, k } => {
                let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                let s = d[0] * d[0] + d[1] * d[1] + d[2] * d[2] - radius * radius;
                k * s * s
            }
            ExternalPotential::Tabulated(t) => t.eval(x),
        }
    }

    /// Analytic gradient; `None` for tabulated data.
    pub fn gradient(&self, x: &[f64; 3]) -> Option<[f64; 3]> {
        match self {
            ExternalPotential::Zero => Some([0.0; 3]),
            ExternalPotential::Linear { g } => Some(*g),
            ExternalPotential::Quadratic { center, k } => {
                Some([k * (x[0] - center[0]), k * (x[1] - center[1]), k * (x[2] - center[2])])
            }
            ExternalPotential::DoubleWell { center, radius, k } => {
                let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                let s = d[0] * d[0] + d[1] * d[1] + d[2] * d[2] - radius * radius;
                Some([4.0 * k * s * d[0], 4.0 * k * s * d[1], 4.0 * k * s * d[2]])
            }
            ExternalPotential::Tabulated(_) => None,
        }
    }

    /// sup-norm estimate of ∇V over a bounding box; `None` for tabulated data.
    pub fn lipschitz(&self, bbox: &[(f64, f64); 3]) -> Option<f64> {
        match self {
            ExternalPotential::Zero => Some(0.0),
            ExternalPotential::Linear { g } => Some(norm3(g)),
            ExternalPotential::Quadratic { center, k } => {
                Some(k * max_corner_distance(bbox, center))
            }
            ExternalPotential::DoubleWell { center, radius, k } => {
                let d = max_corner_distance(bbox, center);
                Some(4.0 * k * (d * d + radius * radius) * d)
            }
            ExternalPotential::Tabulated(_) => None,
        }
    }
}

fn max_corner_distance(bbox: &[(f64, f64); 3], center: &[f64; 3]) -> f64 {
    let mut s = 0.0;
    for d in 0..3 {
        let lo = (bbox[d].0 - center[d]).abs();
        let hi = (bbox[d].1 - center[d]).abs();
        let m = lo.max(hi);
        s += m * m;
    }
    s.sqrt()
}

/// Symmetric interaction kernel W acting on displacements.
#[derive(Debug, Clone)]
pub enum InteractionKernel {
    Zero,
    /// W(x) = C_r e^{−|x|/ℓ_r} − C_a e^{−|x|/ℓ_a}; admissible for
    /// C_r ≥ C_a > 0 and ℓ_a > ℓ_r > 0. Pointy at the origin.
    Morse { c_r: f64, l_r: f64, c_a: f64, l_a: f64 },
    /// W(x) = amplitude · e^{−|x|²/(2 width²)}; attractive for negative
    /// amplitude. Smooth.
    Gaussian { amplitude: f64, width: f64 },
    /// W(x) = slope·|x|. Pointy at the origin.
    AbsValue { slope: f64 },
    Tabulated(TabulatedField),
}

impl InteractionKernel {
    pub fn validate(&self) -> Result<(), PotentialError> {
        match self {
            InteractionKernel::Zero => Ok(()),
            InteractionKernel::Morse { c_r, l_r, c_a, l_a } => {
                let finite = [c_r, l_r, c_a, l_a].iter().all(|v| v.is_finite());
                if !finite || !(*c_a > 0.0 && *c_r >= *c_a && *l_r > 0.0 && *l_a > *l_r) {
                    return Err(PotentialError::Invalid(format!(
                        "Morse parameters need C_r ≥ C_a > 0 and ℓ_a > ℓ_r > 0, \
                         got C_r={c_r}, C_a={c_a}, ℓ_r={l_r}, ℓ_a={l_a}"
                    )));
                }
                Ok(())
            }
            InteractionKernel::Gaussian { amplitude, width } => {
                if amplitude.is_finite() && width.is_finite() && *width > 0.0 {
                    Ok(())
                } else {
                    Err(PotentialError::Invalid(format!(
                        "Gaussian kernel needs a positive width, got amplitude={amplitude}, width={width}"
                    )))
                }
            }
            InteractionKernel::AbsValue { slope } => {
                if slope.is_finite() {
                    Ok(())
                } else {
                    Err(PotentialError::Invalid("non-finite |x| kernel slope".into()))
                }
            }
            InteractionKernel::Tabulated(t) => {
                let r = t.symmetry_residual();
                if r > 1e-12 {
                    Err(PotentialError::NonSymmetric { residual: r })
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn eval(&self, dx: &[f64; 3]) -> f64 {
        match self {
            InteractionKernel::Zero => 0.0,
            InteractionKernel::Morse { c_r, l_r, c_a, l_a } => {
                let r = norm3(dx);
                c_r * (-r / l_r).exp() - c_a * (-r / l_a).exp()
            }
            InteractionKernel::Gaussian { amplitude, width } => {
                let r2 = dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2];
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            InteractionKernel::AbsValue { slope } => slope * norm3(dx),
            InteractionKernel::Tabulated(t) => t.eval(dx),
        }
    }

    /// Analytic gradient; `None` for tabulated data and for pointy kernels
    /// at the origin.
    pub fn gradient(&self, dx: &[f64; 3]) -> Option<[f64; 3]> {
        match self {
            InteractionKernel::Zero => Some([0.0; 3]),
            InteractionKernel::Morse { c_r, l_r, c_a, l_a } => {
                let r = norm3(dx);
                if r == 0.0 {
                    return None;
                }
                let dr = -(c_r / l_r) * (-r / l_r).exp() + (c_a / l_a) * (-r / l_a).exp();
                Some([dr * dx[0] / r, dr * dx[1] / r, dr * dx[2] / r])
            }
            InteractionKernel::Gaussian { amplitude, width } => {
                let w2 = width * width;
                let r2 = dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2];
                let f = -amplitude * (-r2 / (2.0 * w2)).exp() / w2;
                Some([f * dx[0], f * dx[1], f * dx[2]])
            }
            InteractionKernel::AbsValue { slope } => {
                let r = norm3(dx);
                if r == 0.0 {
                    return None;
                }
                Some([slope * dx[0] / r, slope * dx[1] / r, slope * dx[2] / r])
            }
            InteractionKernel::Tabulated(_) => None,
        }
    }

    /// Kernels with a kink at the origin (nonsmooth, "pointy") or without
    /// analytic gradients.
    pub fn is_smooth(&self) -> bool {
        matches!(self, InteractionKernel::Zero | InteractionKernel::Gaussian { .. })
    }

    /// Global Lipschitz estimate of W; `None` for tabulated data.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            InteractionKernel::Zero => Some(0.0),
            InteractionKernel::Morse { c_r, l_r, c_a, l_a } => Some(c_r / l_r + c_a / l_a),
            InteractionKernel::Gaussian { amplitude, width } => {
                Some(amplitude.abs() / (width * (1.0f64).exp().sqrt()))
            }
            InteractionKernel::AbsValue { slope } => Some(slope.abs()),
            InteractionKernel::Tabulated(_) => None,
        }
    }
}

// ---------------------------------------------------------------------------
// discretization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DiscretizeOptions {
    /// Maximum number of dense interaction-matrix entries (n²) before the
    /// kernel is re-evaluated on the fly instead.
    pub dense_interaction_cap: usize,
    /// Override the analytic Lipschitz estimate of V (required to run drive
    /// bound checks with tabulated potentials).
    pub lipschitz_v: Option<f64>,
    /// Override the analytic Lipschitz estimate of W.
    pub lipschitz_w: Option<f64>,
}

impl Default for DiscretizeOptions {
    fn default() -> Self {
        DiscretizeOptions {
            dense_interaction_cap: 4_000_000,
            lipschitz_v: None,
            lipschitz_w: None,
        }
    }
}

#[derive(Debug, Clone)]
enum WStore {
    Zero,
    /// Row-major n×n symmetric matrix W_{KM} = W(x_M − x_K).
    Dense { n: usize, m: Vec<f64> },
    /// Kernel re-evaluated per use; summation order matches the dense path.
    Lazy { kernel: InteractionKernel, centers: Vec<[f64; 3]> },
}

/// Potentials sampled on a tessellation: `vh[K] = V(x_K)` plus the
/// interaction store, with Lipschitz metadata for the drive bound checks.
#[derive(Debug, Clone)]
pub struct DiscretePotentials {
    vh: Vec<f64>,
    w: WStore,
    lipschitz_v: Option<f64>,
    lipschitz_w: Option<f64>,
    v_analytic: Option<ExternalPotential>,
    w_analytic: Option<InteractionKernel>,
}

/// Sample `V` and `W` on the mesh. Both kernels are validated; the
/// interaction matrix is stored densely when `n² ≤ dense_interaction_cap`.
pub fn discretize(
    tess: &Tessellation,
    v: &ExternalPotential,
    w: &InteractionKernel,
    opts: &DiscretizeOptions,
) -> Result<DiscretePotentials, PotentialError> {
    v.validate()?;
    w.validate()?;
    let n = tess.n_cells();
    let vh: Vec<f64> = tess.cells().iter().map(|c| v.eval(&c.x)).collect();
    let centers: Vec<[f64; 3]> = tess.cells().iter().map(|c| c.x).collect();
    let store = match w {
        InteractionKernel::Zero => WStore::Zero,
        _ if n.saturating_mul(n) <= opts.dense_interaction_cap => {
            let mut m = vec![0.0f64; n * n];
            for k in 0..n {
                for l in 0..n {
                    let dx = [
                        centers[l][0] - centers[k][0],
                        centers[l][1] - centers[k][1],
                        centers[l][2] - centers[k][2],
                    ];
                    m[k * n + l] = w.eval(&dx);
                }
            }
            // Discrete symmetry: built-in kernels are radial and symmetric to
            // the bit; tabulated data must satisfy it within round-off.
            let mut worst = 0.0f64;
            for k in 0..n {
                for l in (k + 1)..n {
                    let r = (m[k * n + l] - m[l * n + k]).abs()
                        / m[k * n + l].abs().max(1.0);
                    worst = worst.max(r);
                }
            }
            if worst > 1e-12 {
                return Err(PotentialError::NonSymmetric { residual: worst });
            }
            WStore::Dense { n, m }
        }
        _ => WStore::Lazy {
            kernel: w.clone(),
            centers,
        },
    };
    let lipschitz_v = opts.lipschitz_v.or_else(|| v.lipschitz(tess.bbox()));
    let lipschitz_w = opts.lipschitz_w.or_else(|| w.lipschitz());
    Ok(DiscretePotentials {
        vh,
        w: store,
        lipschitz_v,
        lipschitz_w,
        v_analytic: Some(v.clone()),
        w_analytic: Some(w.clone()),
    })
}

impl DiscretePotentials {
    /// Build directly from a sampled potential vector and an explicit dense
    /// interaction matrix (row-major n×n; pass an empty matrix for W = 0).
    pub fn from_parts(vh: Vec<f64>, w_matrix: Vec<f64>) -> Result<Self, PotentialError> {
        let n = vh.len();
        let w = if w_matrix.is_empty() {
            WStore::Zero
        } else {
            if w_matrix.len() != n * n {
                return Err(PotentialError::Invalid(format!(
                    "interaction matrix must be {n}×{n}, got {} entries",
                    w_matrix.len()
                )));
            }
            let mut worst = 0.0f64;
            for k in 0..n {
                for l in (k + 1)..n {
                    let r = (w_matrix[k * n + l] - w_matrix[l * n + k]).abs()
                        / w_matrix[k * n + l].abs().max(1.0);
                    worst = worst.max(r);
                }
            }
            if worst > 1e-12 {
                return Err(PotentialError::NonSymmetric { residual: worst });
            }
            WStore::Dense { n, m: w_matrix }
        };
        Ok(DiscretePotentials {
            vh,
            w,
            lipschitz_v: None,
            lipschitz_w: None,
            v_analytic: None,
            w_analytic: None,
        })
    }

    pub fn n(&self) -> usize {
        self.vh.len()
    }

    /// Sampled external potential V(x_K).
    pub fn v(&self) -> &[f64] {
        &self.vh
    }

    pub fn lipschitz_v(&self) -> Option<f64> {
        self.lipschitz_v
    }

    pub fn lipschitz_w(&self) -> Option<f64> {
        self.lipschitz_w
    }

    pub fn has_interaction(&self) -> bool {
        !matches!(self.w, WStore::Zero)
    }

    /// (W ρ)_K = Σ_M W_{KM} ρ_M, fixed summation order.
    pub fn convolve(&self, rho: &[f64]) -> Vec<f64> {
        assert_eq!(rho.len(), self.vh.len(), "mass vector length mismatch");
        let n = self.vh.len();
        match &self.w {
            WStore::Zero => vec![0.0; n],
            WStore::Dense { n, m } => (0..*n)
                .map(|k| {
                    let row = &m[k * n..(k + 1) * n];
                    sum_compensated(row.iter().zip(rho).map(|(w, r)| w * r))
                })
                .collect(),
            WStore::Lazy { kernel, centers } => (0..n)
                .map(|k| {
                    sum_compensated((0..n).map(|l| {
                        let dx = [
                            centers[l][0] - centers[k][0],
                            centers[l][1] - centers[k][1],
                            centers[l][2] - centers[k][2],
                        ];
                        kernel.eval(&dx) * rho[l]
                    }))
                })
                .collect(),
        }
    }

    /// Drive Q_K(ρ) = V(x_K) + (W ρ)_K.
    pub fn q_cells(&self, rho: &[f64]) -> Vec<f64> {
        let wr = self.convolve(rho);
        self.vh.iter().zip(wr).map(|(v, w)| v + w).collect()
    }

    /// Interaction energy ½ Σ_{K,M} W_{KM} ρ_K ρ_M.
    pub fn interaction_energy(&self, rho: &[f64]) -> f64 {
        if matches!(self.w, WStore::Zero) {
            return 0.0;
        }
        let wr = self.convolve(rho);
        0.5 * sum_compensated(wr.iter().zip(rho).map(|(w, r)| w * r))
    }

    /// External energy Σ_K V(x_K) ρ_K.
    pub fn external_energy(&self, rho: &[f64]) -> f64 {
        sum_compensated(self.vh.iter().zip(rho).map(|(v, r)| v * r))
    }

    /// Gradient of the drive at a position, when analytic forms exist:
    /// ∇Q(x) = ∇V(x) + Σ_M ∇W(x − x_M) ρ_M.
    pub(crate) fn q_gradient(
        &self,
        tess: &Tessellation,
        rho: &[f64],
        x: &[f64; 3],
    ) -> Result<[f64; 3], PotentialError> {
        let v = self
            .v_analytic
            .as_ref()
            .ok_or_else(|| PotentialError::GradientUnavailable("no analytic external potential".into()))?;
        let w = self
            .w_analytic
            .as_ref()
            .ok_or_else(|| PotentialError::GradientUnavailable("no analytic interaction kernel".into()))?;
        let mut g = v
            .gradient(x)
            .ok_or_else(|| PotentialError::GradientUnavailable("tabulated external potential".into()))?;
        if !matches!(w, InteractionKernel::Zero) {
            if !w.is_smooth() {
                return Err(PotentialError::GradientUnavailable(
                    "interaction kernel is not differentiable at the origin".into(),
                ));
            }
            for (m, c) in tess.cells().iter().enumerate() {
                let dx = [x[0] - c.x[0], x[1] - c.x[1], x[2] - c.x[2]];
                let gw = w.gradient(&dx).ok_or_else(|| {
                    PotentialError::GradientUnavailable("tabulated interaction kernel".into())
                })?;
                g[0] += gw[0] * rho[m];
                g[1] += gw[1] * rho[m];
                g[2] += gw[2] * rho[m];
            }
        }
        Ok(g)
    }
}

/// Face drives q_f = Q_b − Q_a in canonical orientation; Q is assembled once.
pub fn q_field(tess: &Tessellation, pots: &DiscretePotentials, rho: &[f64]) -> Vec<f64> {
    let q = pots.q_cells(rho);
    tess.faces().iter().map(|f| q[f.b] - q[f.a]).collect()
}

/// Verify |q_f| ≤ L_Q |x_b − x_a| with L_Q = L_V + L_W·(total mass); returns
/// the worst ratio |q_f| / (L_Q d_f) (≤ 1 + round-off when the estimates
/// hold). Errors when no Lipschitz estimates exist.
pub fn q_bound_check(
    tess: &Tessellation,
    pots: &DiscretePotentials,
    rho: &[f64],
) -> Result<f64, PotentialError> {
    let lv = pots
        .lipschitz_v
        .ok_or_else(|| PotentialError::GradientUnavailable("no Lipschitz estimate for V".into()))?;
    let lw = if pots.has_interaction() {
        pots.lipschitz_w.ok_or_else(|| {
            PotentialError::GradientUnavailable("no Lipschitz estimate for W".into())
        })?
    } else {
        0.0
    };
    let mass = sum_compensated(rho.iter().copied());
    let lq = lv + lw * mass;
    let q = q_field(tess, pots, rho);
    let mut worst = 0.0f64;
    for (f, face) in tess.faces().iter().enumerate() {
        let d = face.area / face.tau; // |x_b − x_a|
        let bound = lq * d;
        if q[f] != 0.0 {
            if bound == 0.0 {
                return Err(PotentialError::Invalid(format!(
                    "face {f} has drive {} but the Lipschitz bound is 0",
                    q[f]
                )));
            }
            worst = worst.max(q[f].abs() / bound);
        }
    }
    Ok(worst)
}

/// Consistency of the face drives with the analytic drive gradient:
/// max_f |q_f − ∇Q(x_a)·(x_b − x_a)| (an O(h²)·curvature quantity on smooth
/// data). Errors for tabulated or pointy potentials.
pub fn q_consistency_check(
    tess: &Tessellation,
    pots: &DiscretePotentials,
    rho: &[f64],
) -> Result<f64, PotentialError> {
    let q = q_field(tess, pots, rho);
    let mut worst = 0.0f64;
    for (f, face) in tess.faces().iter().enumerate() {
        let xa = &tess.cells()[face.a].x;
        let xb = &tess.cells()[face.b].x;
        let g = pots.q_gradient(tess, rho, xa)?;
        let d = [xb[0] - xa[0], xb[1] - xa[1], xb[2] - xa[2]];
        let lin = g[0] * d[0] + g[1] * d[1] + g[2] * d[2];
        worst = worst.max((q[f] - lin).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cartesian, Cell, Tessellation};
    use approx::assert_relative_eq;

    #[test]
    fn morse_admissibility() {
        let good = InteractionKernel::Morse { c_r: 2.0, l_r: 0.5, c_a: 1.0, l_a: 1.0 };
        assert!(good.validate().is_ok());
        assert_relative_eq!(good.eval(&[0.0; 3]), 1.0, max_relative = 1e-15); // C_r − C_a
        let swapped = InteractionKernel::Morse { c_r: 2.0, l_r: 1.0, c_a: 1.0, l_a: 0.5 };
        assert!(swapped.validate().is_err());
        let weak = InteractionKernel::Morse { c_r: 0.5, l_r: 0.5, c_a: 1.0, l_a: 1.0 };
        assert!(weak.validate().is_err());
        let flat = InteractionKernel::Morse { c_r: 1.0, l_r: 0.5, c_a: 0.0, l_a: 1.0 };
        assert!(flat.validate().is_err());
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let pots: Vec<ExternalPotential> = vec![
            ExternalPotential::Linear { g: [1.0, -2.0, 0.0] },
            ExternalPotential::Quadratic { center: [0.3, 0.1, 0.0], k: 2.5 },
            ExternalPotential::DoubleWell { center: [0.0, 0.0, 0.0], radius: 0.7, k: 1.5 },
        ];
        let x = [0.4, -0.2, 0.0];
        for p in &pots {
            let g = p.gradient(&x).unwrap();
            for d in 0..3 {
                let mut hi = x;
                let mut lo = x;
                hi[d] += 1e-6;
                lo[d] -= 1e-6;
                let fd = (p.eval(&hi) - p.eval(&lo)) / 2e-6;
                assert_relative_eq!(g[d], fd, epsilon = 1e-8, max_relative = 1e-6);
            }
        }
        let kernels: Vec<InteractionKernel> = vec![
            InteractionKernel::Morse { c_r: 2.0, l_r: 0.5, c_a: 1.0, l_a: 1.0 },
            InteractionKernel::Gaussian { amplitude: -0.8, width: 0.3 },
            InteractionKernel::AbsValue { slope: 1.2 },
        ];
        let dx = [0.25, -0.15, 0.0];
        for w in &kernels {
            let g = w.gradient(&dx).unwrap();
            for d in 0..3 {
                let mut hi = dx;
                let mut lo = dx;
                hi[d] += 1e-6;
                lo[d] -= 1e-6;
                let fd = (w.eval(&hi) - w.eval(&lo)) / 2e-6;
                assert_relative_eq!(g[d], fd, epsilon = 1e-8, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn pointy_kernels_have_no_gradient_at_origin() {
        let m = InteractionKernel::Morse { c_r: 2.0, l_r: 0.5, c_a: 1.0, l_a: 1.0 };
        assert!(m.gradient(&[0.0; 3]).is_none());
        assert!(!m.is_smooth());
        let a = InteractionKernel::AbsValue { slope: 1.0 };
        assert!(a.gradient(&[0.0; 3]).is_none());
        assert!(!a.is_smooth());
        let g = InteractionKernel::Gaussian { amplitude: 1.0, width: 1.0 };
        assert_eq!(g.gradient(&[0.0; 3]), Some([0.0; 3]));
        assert!(g.is_smooth());
    }

    #[test]
    fn tabulated_bilinear_is_exact_and_clamps() {
        // f(x,y) = 2x − 3y + xy is reproduced exactly by bilinear interpolation
        let f = |x: f64, y: f64| 2.0 * x - 3.0 * y + x * y;
        let mut pts = Vec::new();
        for &x in &[0.0, 0.5, 1.0] {
            for &y in &[0.0, 1.0] {
                pts.push(([x, y, 0.0], f(x, y)));
            }
        }
        let t = TabulatedField::from_points(2, &pts).unwrap();
        assert_relative_eq!(t.eval(&[0.25, 0.4, 0.0]), f(0.25, 0.4), max_relative = 1e-14);
        assert_relative_eq!(t.eval(&[0.9, 0.1, 0.0]), f(0.9, 0.1), max_relative = 1e-14);
        // clamped outside the domain
        assert_relative_eq!(t.eval(&[2.0, 0.5, 0.0]), f(1.0, 0.5), max_relative = 1e-14);
    }

    #[test]
    fn tabulated_csv_parses_with_header() {
        let csv = "x,value\n-1.0,3.0\n0.0,1.0\n1.0,3.0\n";
        let t = TabulatedField::from_csv(csv).unwrap();
        assert_eq!(t.dim(), 1);
        assert_relative_eq!(t.eval(&[0.5, 0.0, 0.0]), 2.0, max_relative = 1e-15);
        assert!(TabulatedField::from_csv("x,value\n0.0,oops\n").is_err());
    }

    #[test]
    fn tabulated_csv_round_trips_bitwise() {
        let f = |x: f64, y: f64| 0.25 * x - 1.75 * y + 0.125 * x * y;
        let mut pts = Vec::new();
        for &x in &[0.0, 1.0 / 3.0, 1.0] {
            for &y in &[-0.7, 0.4] {
                pts.push(([x, y, 0.0], f(x, y)));
            }
        }
        let t = TabulatedField::from_points(2, &pts).unwrap();
        let t2 = TabulatedField::from_csv(&t.to_csv()).unwrap();
        assert_eq!(t.dim(), t2.dim());
        for probe in [[0.1, -0.5, 0.0], [0.9, 0.3, 0.0], [0.4, 0.0, 0.0]] {
            assert_eq!(t.eval(&probe).to_bits(), t2.eval(&probe).to_bits());
        }
    }

    #[test]
    fn asymmetric_interaction_table_is_rejected() {
        let pts = vec![
            ([-1.0, 0.0, 0.0], 1.0),
            ([0.0, 0.0, 0.0], 0.0),
            ([1.0, 0.0, 0.0], 1.0 + 1e-6),
        ];
        let t = TabulatedField::from_points(1, &pts).unwrap();
        let w = InteractionKernel::Tabulated(t);
        assert!(matches!(w.validate(), Err(PotentialError::NonSymmetric { .. })));
        let sym = vec![
            ([-1.0, 0.0, 0.0], 1.0),
            ([0.0, 0.0, 0.0], 0.0),
            ([1.0, 0.0, 0.0], 1.0),
        ];
        let t = TabulatedField::from_points(1, &sym).unwrap();
        assert!(InteractionKernel::Tabulated(t).validate().is_ok());
    }

    fn two_point_mesh() -> Tessellation {
        Tessellation::assemble(
            1,
            vec![
                Cell { volume: 1.0, x: [0.0, 0.0, 0.0] },
                Cell { volume: 1.0, x: [1.0, 0.0, 0.0] },
            ],
            vec![(0, 1, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn face_drive_with_abs_kernel_anchor() {
        // V = 0, W = |x|, ρ = (3/4, 1/4): Q = (1/4, 3/4), q = 1/2.
        let t = two_point_mesh();
        let pots = discretize(
            &t,
            &ExternalPotential::Zero,
            &InteractionKernel::AbsValue { slope: 1.0 },
            &DiscretizeOptions::default(),
        )
        .unwrap();
        let rho = [0.75, 0.25];
        let q_cells = pots.q_cells(&rho);
        assert_relative_eq!(q_cells[0], 0.25, max_relative = 1e-15);
        assert_relative_eq!(q_cells[1], 0.75, max_relative = 1e-15);
        let q = q_field(&t, &pots, &rho);
        assert_relative_eq!(q[0], 0.5, max_relative = 1e-15);
    }

    #[test]
    fn interaction_energy_anchor() {
        // off-diagonal W = 1, ρ = (1/2, 1/2): ½·2·(¼) = ¼
        let pots =
            DiscretePotentials::from_parts(vec![0.0, 0.0], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(pots.interaction_energy(&[0.5, 0.5]), 0.25, max_relative = 1e-15);
        // self-interaction is included when the diagonal is nonzero
        let pots2 =
            DiscretePotentials::from_parts(vec![0.0, 0.0], vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        // Wρ = (1.5, 1.5), so ½ ρ·Wρ = ¾
        assert_relative_eq!(pots2.interaction_energy(&[0.5, 0.5]), 0.75, max_relative = 1e-15);
    }

    #[test]
    fn dense_and_lazy_paths_agree_bitwise() {
        let t = build_cartesian(1, &[(0.0, 1.0)], 0.125).unwrap();
        let w = InteractionKernel::Gaussian { amplitude: -0.5, width: 0.3 };
        let dense = discretize(&t, &ExternalPotential::Zero, &w, &DiscretizeOptions::default())
            .unwrap();
        let lazy = discretize(
            &t,
            &ExternalPotential::Zero,
            &w,
            &DiscretizeOptions { dense_interaction_cap: 0, ..Default::default() },
        )
        .unwrap();
        let rho: Vec<f64> = (0..t.n_cells()).map(|i| 0.1 + 0.05 * i as f64).collect();
        let qd = dense.q_cells(&rho);
        let ql = lazy.q_cells(&rho);
        for (a, b) in qd.iter().zip(&ql) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn drive_bound_holds_for_builtin_potentials() {
        let t = build_cartesian(1, &[(0.0, 1.0)], 1.0 / 16.0).unwrap();
        let v = ExternalPotential::Quadratic { center: [0.5, 0.0, 0.0], k: 2.0 };
        let w = InteractionKernel::Morse { c_r: 2.0, l_r: 0.5, c_a: 1.0, l_a: 1.0 };
        let pots = discretize(&t, &v, &w, &DiscretizeOptions::default()).unwrap();
        let rho = vec![1.0 / 16.0; 16];
        let worst = q_bound_check(&t, &pots, &rho).unwrap();
        assert!(worst <= 1.0 + 1e-12, "bound ratio {worst}");
    }

    #[test]
    fn drive_consistency_shrinks_under_refinement() {
        let v = ExternalPotential::Quadratic { center: [0.5, 0.0, 0.0], k: 2.0 };
        let w = InteractionKernel::Gaussian { amplitude: -0.6, width: 0.25 };
        let mut prev = f64::INFINITY;
        for &n in &[8usize, 16, 32] {
            let t = build_cartesian(1, &[(0.0, 1.0)], 1.0 / n as f64).unwrap();
            let pots = discretize(&t, &v, &w, &DiscretizeOptions::default()).unwrap();
            let rho = vec![1.0 / n as f64; n];
            let r = q_consistency_check(&t, &pots, &rho).unwrap();
            assert!(r < prev, "residual did not shrink: {r} vs {prev}");
            prev = r;
        }
        // pointy kernels are tagged unavailable
        let t = build_cartesian(1, &[(0.0, 1.0)], 0.25).unwrap();
        let pots = discretize(
            &t,
            &ExternalPotential::Zero,
            &InteractionKernel::AbsValue { slope: 1.0 },
            &DiscretizeOptions::default(),
        )
        .unwrap();
        assert!(matches!(
            q_consistency_check(&t, &pots, &[0.25; 4]),
            Err(PotentialError::GradientUnavailable(_))
        ));
    }
}
