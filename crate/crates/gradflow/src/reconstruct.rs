//! Reconstruction of continuum objects from cell data: piecewise-constant
//! density lifts, L¹ distances between lifts on nested Cartesian grids,
//! bounded-variation seminorms, and segment lifts of face fluxes.

use std::sync::Arc;

use thiserror::Error;

use crate::mesh::Tessellation;
use crate::special::beta;
use crate::util::sum_compensated;

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("invalid reconstruction input: {0}")]
    Invalid(String),
    #[error("meshes are not nested Cartesian grids: {0}")]
    NonNested(String),
}

/// Piecewise-constant density `u_K = ρ_K / |K|` lifted to the whole domain.
#[derive(Debug, Clone)]
pub struct PiecewiseDensity {
    mesh: Arc<Tessellation>,
    u: Vec<f64>,
}

impl PiecewiseDensity {
    pub fn from_masses(mesh: Arc<Tessellation>, rho: &[f64]) -> Self {
        assert_eq!(rho.len(), mesh.n_cells(), "mass vector length mismatch");
        let u = mesh.densities(rho);
        PiecewiseDensity { mesh, u }
    }

    pub fn from_densities(mesh: Arc<Tessellation>, u: Vec<f64>) -> Self {
        assert_eq!(u.len(), mesh.n_cells(), "density vector length mismatch");
        PiecewiseDensity { mesh, u }
    }

    pub fn mesh(&self) -> &Arc<Tessellation> {
        &self.mesh
    }

    pub fn densities(&self) -> &[f64] {
        &self.u
    }

    pub fn total_mass(&self) -> f64 {
        sum_compensated(
            self.u.iter().zip(self.mesh.cells()).map(|(u, c)| u * c.volume),
        )
    }

    /// Density at a point: O(1) lattice lookup on Cartesian grids (clamped to
    /// the domain), nearest barycenter otherwise.
    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        if let Some(grid) = self.mesh.grid() {
            return self.u[grid.locate(x)];
        }
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, c) in self.mesh.cells().iter().enumerate() {
            let d = crate::util::dist3(&c.x, x);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        self.u[best]
    }

    /// `∫ g dρ̂` by the cell-midpoint rule: `Σ_K ρ_K g(x_K)`.
    pub fn integrate<F: Fn(&[f64; 3]) -> f64>(&self, g: F) -> f64 {
        sum_compensated(
            self.u
                .iter()
                .zip(self.mesh.cells())
                .map(|(u, c)| u * c.volume * g(&c.x)),
        )
    }

    /// Exact `∫ |u − v|` between two piecewise-constant lifts whose Cartesian
    /// grids are nested (per-axis cell counts divide, same domain box).
    pub fn l1_distance(&self, other: &Self) -> Result<f64, ReconstructError> {
        let ga = self
            .mesh
            .grid()
            .ok_or_else(|| ReconstructError::NonNested("left mesh is not a Cartesian grid".into()))?;
        let gb = other
            .mesh
            .grid()
            .ok_or_else(|| ReconstructError::NonNested("right mesh is not a Cartesian grid".into()))?;
        let dim = self.mesh.dim();
        if other.mesh.dim() != dim {
            return Err(ReconstructError::NonNested(format!(
                "dimension mismatch: {} vs {}",
                dim,
                other.mesh.dim()
            )));
        }
        for d in 0..dim {
            let ea = ga.n[d] as f64 * ga.spacing[d];
            let eb = gb.n[d] as f64 * gb.spacing[d];
            let tol = 1e-9 * (ea.abs() + 1.0);
            if (ga.origin[d] - gb.origin[d]).abs() > tol || (ea - eb).abs() > tol {
                return Err(ReconstructError::NonNested(format!(
                    "axis {d} domains differ: [{}, {}] vs [{}, {}]",
                    ga.origin[d],
                    ga.origin[d] + ea,
                    gb.origin[d],
                    gb.origin[d] + eb
                )));
            }
        }
        // order so `fine` refines `coarse`
        let a_finer = (0..dim).all(|d| ga.n[d] >= gb.n[d]);
        let (fine, coarse, uf, uc) = if a_finer {
            (ga, gb, &self.u, &other.u)
        } else {
            (gb, ga, &other.u, &self.u)
        };
        let mut ratio = [1usize; 3];
        for d in 0..dim {
            if fine.n[d] < coarse.n[d] || fine.n[d] % coarse.n[d] != 0 {
                return Err(ReconstructError::NonNested(format!(
                    "axis {d} counts do not nest: {} vs {}",
                    fine.n[d], coarse.n[d]
                )));
            }
            ratio[d] = fine.n[d] / coarse.n[d];
        }
        let cell_vol: f64 = (0..dim).map(|d| fine.spacing[d]).product();
        let mut terms = Vec::with_capacity(uf.len());
        let mut idx = [0usize; 3];
        loop {
            let parent = [idx[0] / ratio[0], idx[1] / ratio[1], idx[2] / ratio[2]];
            let kf = fine.cell_ids[fine.lattice_index(&idx)];
            let kc = coarse.cell_ids[coarse.lattice_index(&parent)];
            terms.push((uf[kf] - uc[kc]).abs() * cell_vol);
            // advance the lattice counter, axis 0 fastest
            let mut d = 0;
            loop {
                idx[d] += 1;
                if idx[d] < fine.n[d] {
                    break;
                }
                idx[d] = 0;
                d += 1;
                if d == dim {
                    return Ok(sum_compensated(terms));
                }
            }
        }
    }
}

/// Bounded-variation seminorm of the lift: `Σ_f |u_a − u_b| · area_f`.
pub fn bv_seminorm(tess: &Tessellation, rho: &[f64]) -> f64 {
    let u = tess.densities(rho);
    sum_compensated(
        tess.faces()
            .iter()
            .map(|f| (u[f.a] - u[f.b]).abs() * f.area),
    )
}

/// The seminorm together with its entropic-dissipation bound
/// `(2/ε) √(2 Σ_f (u_a + u_b) h² τ) · √(Σ_f 4 τ β_ε(u_a, u_b))`.
#[derive(Debug, Clone, Copy)]
pub struct BvReport {
    pub seminorm: f64,
    pub bound: f64,
}

pub fn bv_bound(tess: &Tessellation, rho: &[f64], eps: f64) -> Result<BvReport, ReconstructError> {
    if !(eps > 0.0) {
        return Err(ReconstructError::Invalid(
            "the variation bound needs positive diffusion strength".into(),
        ));
    }
    let u = tess.densities(rho);
    let seminorm = bv_seminorm(tess, rho);
    let h2 = tess.h() * tess.h();
    let weight = sum_compensated(
        tess.faces()
            .iter()
            .map(|f| (u[f.a] + u[f.b]) * h2 * f.tau),
    );
    let d0 = sum_compensated(
        tess.faces()
            .iter()
            .map(|f| 4.0 * f.tau * beta(u[f.a], u[f.b], eps)),
    );
    let bound = (2.0 / eps) * (2.0 * weight).sqrt() * d0.sqrt();
    Ok(BvReport { seminorm, bound })
}

/// Face fluxes lifted to a vector measure carried by the segments
/// `[x_a, x_b]`, each weighted by its flux.
#[derive(Debug, Clone)]
pub struct LiftedFlux {
    mesh: Arc<Tessellation>,
    flux: Vec<f64>,
}

impl LiftedFlux {
    pub fn new(mesh: Arc<Tessellation>, flux: Vec<f64>) -> Self {
        assert_eq!(flux.len(), mesh.n_faces(), "flux vector length mismatch");
        LiftedFlux { mesh, flux }
    }

    pub fn mesh(&self) -> &Arc<Tessellation> {
        &self.mesh
    }

    pub fn fluxes(&self) -> &[f64] {
        &self.flux
    }

    /// Pairing `Σ_f J_f ∫₀¹ φ(x_a + s(x_b − x_a)) · (x_b − x_a) ds` with the
    /// line integrals approximated by the composite midpoint rule using
    /// `⌈|x_b − x_a| / h_quad⌉` points per segment.
    pub fn pair<F: Fn(&[f64; 3]) -> [f64; 3]>(&self, phi: F, h_quad: f64) -> f64 {
        assert!(h_quad > 0.0, "quadrature spacing must be positive");
        let cells = self.mesh.cells();
        sum_compensated(self.mesh.faces().iter().zip(&self.flux).map(|(f, j)| {
            if *j == 0.0 {
                return 0.0;
            }
            let xa = &cells[f.a].x;
            let xb = &cells[f.b].x;
            let d = [xb[0] - xa[0], xb[1] - xa[1], xb[2] - xa[2]];
            let len = crate::util::dist3(xa, xb);
            let m = (len / h_quad).ceil().max(1.0) as usize;
            let mut acc = 0.0;
            for i in 0..m {
                let s = (i as f64 + 0.5) / m as f64;
                let p = [xa[0] + s * d[0], xa[1] + s * d[1], xa[2] + s * d[2]];
                let v = phi(&p);
                acc += v[0] * d[0] + v[1] * d[1] + v[2] * d[2];
            }
            j * acc / m as f64
        }))
    }

    /// Total variation of the lift: `Σ_f |J_f| · |x_b − x_a|`.
    pub fn total_variation(&self) -> f64 {
        let cells = self.mesh.cells();
        sum_compensated(
            self.mesh
                .faces()
                .iter()
                .zip(&self.flux)
                .map(|(f, j)| j.abs() * crate::util::dist3(&cells[f.a].x, &cells[f.b].x)),
        )
    }
}
