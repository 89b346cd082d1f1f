//! Tessellation data model, admissibility checks, Cartesian builders, and
//! the discrete metric operators (divergence, diffusion tensor).
//!
//! A tessellation is a cell-centered finite-volume mesh: cells carry a
//! positive volume and a barycenter, interior faces connect two cells and
//! carry a positive area. Faces are stored once in the canonical orientation
//! `a < b`; the transmissibility `τ = area / |x_b − x_a|` is precomputed.
//! All derived quantities (adjacency, mesh size, bounding box, lattice
//! structure) are assembled canonically from the primitive data, so a mesh
//! serialized and re-read reproduces them bit-for-bit.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::util::{dist3, sum_compensated};

/// Maximum face-misalignment angle (radians) accepted by [`Tessellation::validate`].
pub const MAX_ORTHOGONALITY_ANGLE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("mesh parse error, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid mesh: {0}")]
    Invalid(String),
}

fn parse_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Control volume: positive measure and barycenter (padded to 3 coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub volume: f64,
    pub x: [f64; 3],
}

/// Interior face between cells `a < b` with measure `area` and
/// transmissibility `tau = area / |x_b − x_a|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub a: usize,
    pub b: usize,
    pub area: f64,
    pub tau: f64,
}

/// Uniform lattice structure detected on (or built into) a tessellation.
///
/// `cell_ids` maps the lexicographic lattice index (axis 0 fastest) to the
/// cell id in the tessellation, so meshes whose cells are stored in any
/// order still expose O(1) point location.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianGrid {
    pub n: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub cell_ids: Vec<usize>,
}

impl CartesianGrid {
    /// Lexicographic lattice index of integer coordinates.
    pub fn lattice_index(&self, ix: &[usize; 3]) -> usize {
        ix[0] + self.n[0] * (ix[1] + self.n[1] * ix[2])
    }

    /// Cell id whose box contains `x` (coordinates clamped to the lattice).
    pub fn locate(&self, x: &[f64; 3]) -> usize {
        let mut ix = [0usize; 3];
        for d in 0..3 {
            if self.n[d] <= 1 {
                continue;
            }
            let t = (x[d] - self.origin[d]) / self.spacing[d];
            ix[d] = (t.floor().max(0.0) as usize).min(self.n[d] - 1);
        }
        self.cell_ids[self.lattice_index(&ix)]
    }
}

/// Geometric admissibility estimates of a tessellation.
#[derive(Debug, Clone, Copy)]
pub struct Admissibility {
    /// min over faces of (half the barycenter distance)/h: inner-ball ratio.
    pub zeta_inner: f64,
    /// min over faces of area/h^{dim−1}: non-degenerate face ratio.
    pub zeta_face: f64,
    /// max over faces of the angle between the barycenter segment and its
    /// dominant coordinate axis.
    pub max_angle: f64,
}

#[derive(Debug, Clone)]
pub struct Tessellation {
    dim: usize,
    cells: Vec<Cell>,
    faces: Vec<Face>,
    /// Per cell: (neighbor id, face index), sorted by neighbor id.
    adjacency: Vec<Vec<(usize, usize)>>,
    /// Max cell diameter estimate.
    h: f64,
    /// Per-cell diameter estimates.
    diam: Vec<f64>,
    bbox: [(f64, f64); 3],
    grid: Option<CartesianGrid>,
}

impl Tessellation {
    /// Assemble a tessellation from primitive data, canonicalizing face
    /// orientation and computing all derived quantities. Rejects structural
    /// defects (nonpositive measures, unknown or repeated cells, coincident
    /// barycenters) with a descriptive error.
    pub fn assemble(
        dim: usize,
        cells: Vec<Cell>,
        raw_faces: Vec<(usize, usize, f64)>,
    ) -> Result<Self, MeshError> {
        if !(1..=3).contains(&dim) {
            return Err(MeshError::Invalid(format!("dimension must be 1..=3, got {dim}")));
        }
        if cells.is_empty() {
            return Err(MeshError::Invalid("mesh has no cells".into()));
        }
        let n = cells.len();
        for (k, c) in cells.iter().enumerate() {
            if !(c.volume.is_finite() && c.volume > 0.0) {
                return Err(MeshError::Invalid(format!(
                    "cell {k} has nonpositive volume {}",
                    c.volume
                )));
            }
            if c.x.iter().any(|v| !v.is_finite()) {
                return Err(MeshError::Invalid(format!("cell {k} has non-finite barycenter")));
            }
            for d in dim..3 {
                if c.x[d] != 0.0 {
                    return Err(MeshError::Invalid(format!(
                        "cell {k} has a nonzero coordinate beyond dimension {dim}"
                    )));
                }
            }
        }
        let mut seen = std::collections::HashSet::with_capacity(raw_faces.len());
        let mut faces = Vec::with_capacity(raw_faces.len());
        for (i, &(a0, b0, area)) in raw_faces.iter().enumerate() {
            let (a, b) = if a0 < b0 { (a0, b0) } else { (b0, a0) };
            if a0 == b0 {
                return Err(MeshError::Invalid(format!("face {i} connects cell {a0} to itself")));
            }
            if b >= n {
                return Err(MeshError::Invalid(format!(
                    "face {i} references cell {} but the mesh has {n} cells",
                    a0.max(b0)
                )));
            }
            if !(area.is_finite() && area > 0.0) {
                return Err(MeshError::Invalid(format!("face {i} has nonpositive area {area}")));
            }
            if !seen.insert((a, b)) {
                return Err(MeshError::Invalid(format!("duplicate face between cells {a} and {b}")));
            }
            let dist = dist3(&cells[a].x, &cells[b].x);
            if !(dist.is_finite() && dist > 0.0) {
                return Err(MeshError::Invalid(format!(
                    "cells {a} and {b} share a face but have coincident barycenters"
                )));
            }
            faces.push(Face {
                a,
                b,
                area,
                tau: area / dist,
            });
        }

        let mut adjacency = vec![Vec::new(); n];
        for (f, face) in faces.iter().enumerate() {
            adjacency[face.a].push((face.b, f));
            adjacency[face.b].push((face.a, f));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }

        let diam = cell_diameters(dim, &cells, &faces, &adjacency);
        let h = diam.iter().cloned().fold(0.0f64, f64::max);

        let mut bbox = [(f64::INFINITY, f64::NEG_INFINITY); 3];
        for (k, c) in cells.iter().enumerate() {
            // The box extent is estimated from the per-axis thickness of a
            // brick of the same volume and diameter; exact for boxes.
            let half = 0.5 * diam[k] / (dim as f64).sqrt();
            for d in 0..dim {
                bbox[d].0 = bbox[d].0.min(c.x[d] - half);
                bbox[d].1 = bbox[d].1.max(c.x[d] + half);
            }
        }
        for d in dim..3 {
            bbox[d] = (0.0, 0.0);
        }

        let grid = detect_grid(dim, &cells);
        Ok(Tessellation {
            dim,
            cells,
            faces,
            adjacency,
            h,
            diam,
            bbox,
            grid,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// (neighbor id, face index) pairs of cell `k`, sorted by neighbor id.
    pub fn neighbors(&self, k: usize) -> &[(usize, usize)] {
        &self.adjacency[k]
    }

    /// Mesh size: maximum cell diameter estimate.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Diameter estimate of cell `k`.
    pub fn cell_diameter(&self, k: usize) -> f64 {
        self.diam[k]
    }

    pub fn bbox(&self) -> &[(f64, f64); 3] {
        &self.bbox
    }

    /// Lattice structure, when the cells form a uniform Cartesian grid.
    pub fn grid(&self) -> Option<&CartesianGrid> {
        self.grid.as_ref()
    }

    pub fn total_volume(&self) -> f64 {
        sum_compensated(self.cells.iter().map(|c| c.volume))
    }

    /// Cell densities u_K = ρ_K / |K| from a mass vector.
    pub fn densities(&self, rho: &[f64]) -> Vec<f64> {
        assert_eq!(rho.len(), self.cells.len(), "mass vector length mismatch");
        rho.iter()
            .zip(&self.cells)
            .map(|(m, c)| m / c.volume)
            .collect()
    }

    /// Mass vector ρ_K = u_K |K| from cell densities.
    pub fn masses(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.cells.len(), "density vector length mismatch");
        u.iter()
            .zip(&self.cells)
            .map(|(d, c)| d * c.volume)
            .collect()
    }

    /// Geometric admissibility estimates. The inner-ball ratio uses half the
    /// barycenter distance as the distance from a barycenter to the shared
    /// face plane (exact for centered faces); on a uniform Cartesian grid it
    /// evaluates to 1/(2√dim).
    pub fn admissibility(&self) -> Admissibility {
        let mut zeta_inner = f64::INFINITY;
        let mut zeta_face = f64::INFINITY;
        let mut max_angle = 0.0f64;
        let hd = self.h.powi(self.dim as i32 - 1);
        for f in &self.faces {
            let d = sub3(&self.cells[f.b].x, &self.cells[f.a].x);
            let dist = norm3(&d);
            zeta_inner = zeta_inner.min(0.5 * dist / self.h);
            zeta_face = zeta_face.min(f.area / hd);
            // Angle between the barycenter segment and its dominant axis;
            // exactly-aligned segments short-circuit to 0.
            let mut dom = 0usize;
            for k in 1..3 {
                if d[k].abs() > d[dom].abs() {
                    dom = k;
                }
            }
            let off = (0..3)
                .filter(|&k| k != dom)
                .map(|k| d[k] * d[k])
                .sum::<f64>();
            if off > 0.0 {
                max_angle = max_angle.max(off.sqrt().atan2(d[dom].abs()));
            }
        }
        Admissibility {
            zeta_inner,
            zeta_face,
            max_angle,
        }
    }

    /// Check geometric admissibility: inner-ball and face ratios at least
    /// `zeta_min`, face alignment within [`MAX_ORTHOGONALITY_ANGLE`].
    pub fn validate(&self, zeta_min: f64) -> Result<Admissibility, MeshError> {
        let adm = self.admissibility();
        if adm.zeta_inner < zeta_min {
            return Err(MeshError::Invalid(format!(
                "inner-ball ratio {:.6} below the admissibility threshold {zeta_min}",
                adm.zeta_inner
            )));
        }
        if adm.zeta_face < zeta_min {
            return Err(MeshError::Invalid(format!(
                "face ratio {:.6} below the admissibility threshold {zeta_min}",
                adm.zeta_face
            )));
        }
        if adm.max_angle > MAX_ORTHOGONALITY_ANGLE {
            return Err(MeshError::Invalid(format!(
                "face misalignment angle {:.3e} exceeds {MAX_ORTHOGONALITY_ANGLE:.1e} rad",
                adm.max_angle
            )));
        }
        Ok(adm)
    }

    /// Discrete divergence: net outflow per cell of an oriented face flux
    /// (positive flux moves mass from the lower-id to the higher-id cell).
    /// Each face value enters exactly two cells with opposite signs, so the
    /// operator is exactly mass-antisymmetric.
    pub fn divergence(&self, face_flux: &[f64]) -> Vec<f64> {
        assert_eq!(face_flux.len(), self.faces.len(), "face flux length mismatch");
        let mut div = vec![0.0; self.cells.len()];
        for (f, face) in self.faces.iter().enumerate() {
            div[face.a] += face_flux[f];
            div[face.b] -= face_flux[f];
        }
        div
    }

    /// Metric diffusion tensor of cell `k`:
    /// T_K = Σ_{L ~ K} (τ_{KL} / |K|) (x_L − x_K) ⊗ (x_L − x_K).
    /// Equals 2·Id in the interior of a uniform Cartesian grid and sheds the
    /// missing directions at the boundary.
    pub fn diffusion_tensor(&self, k: usize) -> [[f64; 3]; 3] {
        let mut t = [[0.0f64; 3]; 3];
        let xk = &self.cells[k].x;
        let vol = self.cells[k].volume;
        for &(nbr, f) in &self.adjacency[k] {
            let w = self.faces[f].tau / vol;
            let d = sub3(&self.cells[nbr].x, xk);
            for i in 0..3 {
                for j in 0..3 {
                    t[i][j] += w * d[i] * d[j];
                }
            }
        }
        t
    }
}

fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3(a: &[f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Per-cell diameter estimates: along each axis touched by a face the
/// thickness is volume/area (exact for bricks); axes without face data share
/// the residual volume isotropically.
fn cell_diameters(
    dim: usize,
    cells: &[Cell],
    faces: &[Face],
    adjacency: &[Vec<(usize, usize)>],
) -> Vec<f64> {
    let mut diam = Vec::with_capacity(cells.len());
    for (k, cell) in cells.iter().enumerate() {
        let mut t = [0.0f64; 3];
        for &(nbr, f) in &adjacency[k] {
            let d = sub3(&cells[nbr].x, &cell.x);
            let mut dom = 0usize;
            for i in 1..3 {
                if d[i].abs() > d[dom].abs() {
                    dom = i;
                }
            }
            t[dom] = t[dom].max(cell.volume / faces[f].area);
        }
        let known: f64 = t[..dim].iter().filter(|v| **v > 0.0).product();
        let missing = t[..dim].iter().filter(|v| **v == 0.0).count();
        if missing > 0 {
            let fill = (cell.volume / known).powf(1.0 / missing as f64);
            for v in t[..dim].iter_mut().filter(|v| **v == 0.0) {
                *v = fill;
            }
        }
        diam.push(t[..dim].iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    diam
}

/// Detect a uniform Cartesian lattice: per-axis coordinate levels with
/// uniform spacing, a full occupancy map, and brick volumes. Returns `None`
/// for anything else (the callers then fall back to generic algorithms).
fn detect_grid(dim: usize, cells: &[Cell]) -> Option<CartesianGrid> {
    let n = cells.len();
    let mut levels: [Vec<f64>; 3] = [vec![], vec![], vec![]];
    for d in 0..dim {
        let mut coords: Vec<f64> = cells.iter().map(|c| c.x[d]).collect();
        coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let span = coords[n - 1] - coords[0];
        let tol = 1e-9 * (span + 1.0);
        let mut uniq = vec![coords[0]];
        for &c in &coords[1..] {
            if c - *uniq.last().unwrap() > tol {
                uniq.push(c);
            }
        }
        levels[d] = uniq;
    }
    let mut counts = [1usize; 3];
    for d in 0..dim {
        counts[d] = levels[d].len();
    }
    if counts.iter().product::<usize>() != n {
        return None;
    }
    // Uniform spacing per axis; single-level axes get their spacing from the
    // brick volume once the other axes are known.
    let mut spacing = [1.0f64; 3];
    let mut pending = vec![];
    for d in 0..dim {
        if counts[d] >= 2 {
            let diffs: Vec<f64> = levels[d].windows(2).map(|w| w[1] - w[0]).collect();
            let s0 = diffs[0];
            if diffs.iter().any(|s| (s - s0).abs() > 1e-9 * s0.abs()) {
                return None;
            }
            spacing[d] = s0;
        } else {
            pending.push(d);
        }
    }
    if !pending.is_empty() {
        let known: f64 = (0..dim).filter(|d| !pending.contains(d)).map(|d| spacing[d]).product();
        let fill = (cells[0].volume / known).powf(1.0 / pending.len() as f64);
        for &d in &pending {
            spacing[d] = fill;
        }
    }
    let brick: f64 = spacing[..dim].iter().product();
    let mut origin = [0.0f64; 3];
    for d in 0..dim {
        origin[d] = levels[d][0] - 0.5 * spacing[d];
    }
    // Occupancy: every lattice site owned by exactly one cell of brick volume.
    let mut cell_ids = vec![usize::MAX; n];
    let mut nn = [1usize; 3];
    nn[..3].copy_from_slice(&counts);
    for (k, c) in cells.iter().enumerate() {
        if (c.volume - brick).abs() > 1e-9 * brick {
            return None;
        }
        let mut ix = [0usize; 3];
        for d in 0..dim {
            let lv = &levels[d];
            let i = match lv.binary_search_by(|p| p.partial_cmp(&c.x[d]).unwrap()) {
                Ok(i) => i,
                Err(i) => {
                    let tol = 1e-9 * (spacing[d] + 1.0);
                    if i > 0 && (c.x[d] - lv[i - 1]).abs() <= tol {
                        i - 1
                    } else if i < lv.len() && (lv[i] - c.x[d]).abs() <= tol {
                        i
                    } else {
                        return None;
                    }
                }
            };
            ix[d] = i;
        }
        let lex = ix[0] + nn[0] * (ix[1] + nn[1] * ix[2]);
        if cell_ids[lex] != usize::MAX {
            return None;
        }
        cell_ids[lex] = k;
    }
    Some(CartesianGrid {
        n: nn,
        origin,
        spacing,
        cell_ids,
    })
}

/// Build a uniform Cartesian tessellation of the box `bounds` (one `(lo, hi)`
/// pair per dimension) with target spacing `h`. The per-axis cell count is
/// the rounded extent/h; when that does not divide exactly the spacing snaps
/// to extent/count. Cells are ordered lexicographically (axis 0 fastest).
pub fn build_cartesian(dim: usize, bounds: &[(f64, f64)], h: f64) -> Result<Tessellation, MeshError> {
    if !(1..=3).contains(&dim) {
        return Err(MeshError::Invalid(format!("dimension must be 1..=3, got {dim}")));
    }
    if bounds.len() != dim {
        return Err(MeshError::Invalid(format!(
            "expected {dim} bound pairs, got {}",
            bounds.len()
        )));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(MeshError::Invalid(format!("spacing must be positive, got {h}")));
    }
    let mut n = [1usize; 3];
    let mut s = [1.0f64; 3];
    let mut lo = [0.0f64; 3];
    for d in 0..dim {
        let (a, b) = bounds[d];
        if !(b > a) {
            return Err(MeshError::Invalid(format!(
                "empty extent along axis {d}: [{a}, {b}]"
            )));
        }
        let count = ((b - a) / h).round().max(1.0) as usize;
        n[d] = count;
        s[d] = (b - a) / count as f64;
        lo[d] = a;
    }
    let volume: f64 = s[..dim].iter().product();
    let total = n[..dim].iter().product::<usize>();
    let mut cells = Vec::with_capacity(total);
    let mut idx = [0usize; 3];
    for iz in 0..n[2] {
        for iy in 0..n[1] {
            for ix in 0..n[0] {
                idx = [ix, iy, iz];
                let mut x = [0.0f64; 3];
                for d in 0..dim {
                    x[d] = lo[d] + (idx[d] as f64 + 0.5) * s[d];
                }
                cells.push(Cell { volume, x });
            }
        }
    }
    let _ = idx;
    let lex = |ix: usize, iy: usize, iz: usize| ix + n[0] * (iy + n[1] * iz);
    let mut faces = Vec::new();
    for iz in 0..n[2] {
        for iy in 0..n[1] {
            for ix in 0..n[0] {
                let id = lex(ix, iy, iz);
                let per_axis = [ix + 1 < n[0], iy + 1 < n[1], iz + 1 < n[2]];
                for d in 0..dim {
                    if per_axis[d] {
                        let nbr = match d {
                            0 => lex(ix + 1, iy, iz),
                            1 => lex(ix, iy + 1, iz),
                            _ => lex(ix, iy, iz + 1),
                        };
                        let area: f64 = (0..dim).filter(|k| *k != d).map(|k| s[k]).product();
                        faces.push((id, nbr, area));
                    }
                }
            }
        }
    }
    Tessellation::assemble(dim, cells, faces)
}

/// Parse a mesh from the plain-text `FVMESH 1` format:
///
/// ```text
/// FVMESH 1 <dim> <ncells> <nfaces>
/// C <id> <volume> <x...>        (dim coordinates)
/// F <idA> <idB> <area>
/// ```
///
/// `#` starts a comment; blank lines are ignored. Errors carry 1-based line
/// numbers.
pub fn parse_fvmesh(text: &str) -> Result<Tessellation, MeshError> {
    let mut header: Option<(usize, usize, usize)> = None;
    let mut cells: Vec<Option<Cell>> = Vec::new();
    let mut faces: Vec<(usize, usize, f64)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if header.is_none() {
            if tok.len() != 5 || tok[0] != "FVMESH" {
                return Err(parse_err(line_no, "expected header `FVMESH 1 <dim> <ncells> <nfaces>`"));
            }
            if tok[1] != "1" {
                return Err(parse_err(line_no, format!("unsupported format version `{}`", tok[1])));
            }
            let dim: usize = tok[2]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad dimension `{}`", tok[2])))?;
            let nc: usize = tok[3]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad cell count `{}`", tok[3])))?;
            let nf: usize = tok[4]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad face count `{}`", tok[4])))?;
            if !(1..=3).contains(&dim) {
                return Err(parse_err(line_no, format!("dimension must be 1..=3, got {dim}")));
            }
            header = Some((dim, nc, nf));
            cells = vec![None; nc];
            continue;
        }
        let (dim, nc, _) = header.unwrap();
        match tok[0] {
            "C" => {
                if tok.len() != 3 + dim {
                    return Err(parse_err(
                        line_no,
                        format!("cell record needs id, volume and {dim} coordinates"),
                    ));
                }
                let id: usize = tok[1]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad cell id `{}`", tok[1])))?;
                if id >= nc {
                    return Err(parse_err(line_no, format!("cell id {id} out of range (< {nc})")));
                }
                let volume: f64 = tok[2]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad volume `{}`", tok[2])))?;
                if !(volume.is_finite() && volume > 0.0) {
                    return Err(parse_err(line_no, format!("nonpositive volume {volume}")));
                }
                let mut x = [0.0f64; 3];
                for d in 0..dim {
                    x[d] = tok[3 + d]
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad coordinate `{}`", tok[3 + d])))?;
                }
                if cells[id].is_some() {
                    return Err(parse_err(line_no, format!("duplicate cell id {id}")));
                }
                cells[id] = Some(Cell { volume, x });
            }
            "F" => {
                if tok.len() != 4 {
                    return Err(parse_err(line_no, "face record needs two cell ids and an area"));
                }
                let a: usize = tok[1]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad cell id `{}`", tok[1])))?;
                let b: usize = tok[2]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad cell id `{}`", tok[2])))?;
                let area: f64 = tok[3]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad area `{}`", tok[3])))?;
                if !(area.is_finite() && area > 0.0) {
                    return Err(parse_err(line_no, format!("nonpositive face area {area}")));
                }
                faces.push((a, b, area));
            }
            other => {
                return Err(parse_err(line_no, format!("unknown record type `{other}`")));
            }
        }
    }
    let (dim, nc, nf) = header.ok_or_else(|| parse_err(1, "missing FVMESH header"))?;
    if faces.len() != nf {
        return Err(MeshError::Invalid(format!(
            "header declares {nf} faces but {} were given",
            faces.len()
        )));
    }
    let mut full = Vec::with_capacity(nc);
    for (id, c) in cells.into_iter().enumerate() {
        match c {
            Some(c) => full.push(c),
            None => return Err(MeshError::Invalid(format!("cell {id} is missing"))),
        }
    }
    Tessellation::assemble(dim, full, faces)
}

/// Serialize a tessellation to the `FVMESH 1` text format with full float
/// precision (17 significant digits), so parse ∘ format is the identity on
/// all stored fields.
pub fn format_fvmesh(t: &Tessellation) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "FVMESH 1 {} {} {}", t.dim, t.n_cells(), t.n_faces());
    for (id, c) in t.cells.iter().enumerate() {
        let _ = write!(out, "C {id} {:.16e}", c.volume);
        for d in 0..t.dim {
            let _ = write!(out, " {:.16e}", c.x[d]);
        }
        out.push('\n');
    }
    for f in &t.faces {
        let _ = writeln!(out, "F {} {} {:.16e}", f.a, f.b, f.area);
    }
    out
}

pub fn read_fvmesh(path: &Path) -> Result<Tessellation, MeshError> {
    let text = std::fs::read_to_string(path)?;
    parse_fvmesh(&text)
}

pub fn write_fvmesh(path: &Path, t: &Tessellation) -> Result<(), MeshError> {
    std::fs::write(path, format_fvmesh(t))?;
    Ok(())
}
