//! Trajectory persistence: a directory holding the mesh, the recorded states
//! and fluxes as CSV, and an INI metadata file with the scheme and potential
//! description, so audits and lifts can be reproduced from disk alone.
//!
//! Layout: `mesh.fvmesh`, `states.csv` (`t,m0,...`), `fluxes.csv`
//! (`t,f0,...`), `meta.ini` (`[trajectory]` + `[potential]`). Tabulated
//! potentials are copied into the directory so it stays self-contained.
//! All floats are written with 17 significant digits and round-trip exactly.

use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::config::{self, ConfigError, PotentialSpec, SectionReader};
use crate::mesh::{read_fvmesh, write_fvmesh, MeshError};
use crate::potential::ExternalPotential;
use crate::potential::InteractionKernel;
use crate::scheme::{SchemeKind, Trajectory};

#[derive(Debug, Error)]
pub enum TrajIoError {
    #[error("trajectory I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("trajectory parse error in {file}, line {line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("invalid trajectory: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn perr(file: &str, line: usize, msg: impl Into<String>) -> TrajIoError {
    TrajIoError::Parse { file: file.to_string(), line, msg: msg.into() }
}

fn format_series(times: &[f64], rows: impl Iterator<Item = Vec<f64>>, prefix: &str) -> String {
    let mut out = String::new();
    for (t, row) in times.iter().zip(rows) {
        out.push_str(&format!("{t:.16e}"));
        for v in row {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    let mut header = String::from("t");
    let cols = out.lines().next().map_or(0, |l| l.split(',').count() - 1);
    for i in 0..cols {
        header.push_str(&format!(",{prefix}{i}"));
    }
    header.push('\n');
    header + &out
}

fn parse_series(text: &str, file: &str, prefix: &str) -> Result<(Vec<f64>, Vec<Vec<f64>>), TrajIoError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| perr(file, 1, "empty file"))?;
    let mut cols = header.split(',');
    if cols.next() != Some("t") {
        return Err(perr(file, 1, "header must start with `t`"));
    }
    let n = cols
        .enumerate()
        .map(|(i, c)| {
            if c == format!("{prefix}{i}") {
                Ok(())
            } else {
                Err(perr(file, 1, format!("unexpected column `{c}`")))
            }
        })
        .collect::<Result<Vec<_>, _>>()?
        .len();
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut values = line.split(',').map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| perr(file, i + 1, format!("bad number `{v}`")))
        });
        let t = values
            .next()
            .ok_or_else(|| perr(file, i + 1, "empty record"))??;
        let row = values.collect::<Result<Vec<f64>, _>>()?;
        if row.len() != n {
            return Err(perr(file, i + 1, format!("expected {n} values, got {}", row.len())));
        }
        times.push(t);
        rows.push(row);
    }
    Ok((times, rows))
}

/// Write `traj` (with the potential description needed to audit it) under
/// `dir`, creating the directory if needed.
pub fn save_trajectory(
    dir: &Path,
    traj: &Trajectory,
    potential: &PotentialSpec,
) -> Result<(), TrajIoError> {
    std::fs::create_dir_all(dir)?;
    write_fvmesh(&dir.join("mesh.fvmesh"), traj.mesh())?;

    // keep the directory self-contained: copy tabulated data next to the meta
    let mut spec = potential.clone();
    if let ExternalPotential::Tabulated(t) = &spec.v {
        let p = dir.join("v_table.csv");
        std::fs::write(&p, t.to_csv())?;
        spec.v_file = Some(p);
    }
    if let InteractionKernel::Tabulated(t) = &spec.w {
        let p = dir.join("w_table.csv");
        std::fs::write(&p, t.to_csv())?;
        spec.w_file = Some(p);
    }
    // meta paths are directory-relative
    if let Some(p) = &spec.v_file {
        spec.v_file = Some(p.file_name().map(Into::into).unwrap_or_else(|| p.clone()));
    }
    if let Some(p) = &spec.w_file {
        spec.w_file = Some(p.file_name().map(Into::into).unwrap_or_else(|| p.clone()));
    }

    let mut meta = String::from("[trajectory]\n");
    meta.push_str(&format!(
        "scheme = {}\n",
        match traj.kind {
            SchemeKind::ScharfetterGummel => "sg",
            SchemeKind::Upwind => "upwind",
        }
    ));
    meta.push_str(&format!("eps = {}\n", traj.eps));
    meta.push_str("mesh = mesh.fvmesh\n");
    meta.push_str("\n[potential]\n");
    meta.push_str(&config::format_potential(&spec));
    std::fs::write(dir.join("meta.ini"), meta)?;

    let states = format_series(
        traj.times(),
        (0..traj.len()).map(|i| traj.state(i).to_vec()),
        "m",
    );
    std::fs::write(dir.join("states.csv"), states)?;
    let fluxes = format_series(
        traj.times(),
        (0..traj.len()).map(|i| traj.flux(i).to_vec()),
        "f",
    );
    std::fs::write(dir.join("fluxes.csv"), fluxes)?;
    Ok(())
}

/// A trajectory read back from disk together with its potential description.
pub struct LoadedTrajectory {
    pub traj: Trajectory,
    pub potential: PotentialSpec,
}

pub fn load_trajectory(dir: &Path) -> Result<LoadedTrajectory, TrajIoError> {
    let meta_text = std::fs::read_to_string(dir.join("meta.ini"))?;
    let mut sections = config::parse_ini(&meta_text)?;
    let mut tsec = sections
        .remove("trajectory")
        .map(|s| SectionReader { name: "trajectory", keys: s.keys })
        .ok_or_else(|| TrajIoError::Invalid("meta.ini lacks [trajectory]".into()))?;
    let (scheme, sline) = tsec.require("scheme")?;
    let kind = match scheme.as_str() {
        "sg" => SchemeKind::ScharfetterGummel,
        "upwind" => SchemeKind::Upwind,
        other => return Err(perr("meta.ini", sline, format!("unknown scheme `{other}`"))),
    };
    let (eps, eline) = tsec.require("eps")?;
    let eps: f64 = eps
        .parse()
        .map_err(|_| perr("meta.ini", eline, format!("bad number `{eps}`")))?;
    let (mesh_file, _) = tsec.require("mesh")?;
    tsec.finish()?;
    let psec = sections
        .remove("potential")
        .map(|s| SectionReader { name: "potential", keys: s.keys })
        .ok_or_else(|| TrajIoError::Invalid("meta.ini lacks [potential]".into()))?;
    let potential = config::read_potential(psec, dir)?;
    if let Some((name, sect)) = sections.into_iter().next() {
        return Err(perr("meta.ini", sect.line, format!("unknown section [{name}]")));
    }

    let mesh = Arc::new(read_fvmesh(&dir.join(mesh_file))?);
    let states_text = std::fs::read_to_string(dir.join("states.csv"))?;
    let (times, states) = parse_series(&states_text, "states.csv", "m")?;
    let fluxes_text = std::fs::read_to_string(dir.join("fluxes.csv"))?;
    let (ftimes, fluxes) = parse_series(&fluxes_text, "fluxes.csv", "f")?;
    if times.len() != ftimes.len() || times.iter().zip(&ftimes).any(|(a, b)| a != b) {
        return Err(TrajIoError::Invalid(
            "states.csv and fluxes.csv record different time grids".into(),
        ));
    }
    if times.is_empty() {
        return Err(TrajIoError::Invalid("trajectory has no records".into()));
    }
    let mut traj = Trajectory::new(mesh.clone(), kind, eps);
    for ((t, rho), flux) in times.into_iter().zip(states).zip(fluxes) {
        if rho.len() != mesh.n_cells() {
            return Err(TrajIoError::Invalid(format!(
                "state width {} does not match the {}-cell mesh",
                rho.len(),
                mesh.n_cells()
            )));
        }
        if flux.len() != mesh.n_faces() {
            return Err(TrajIoError::Invalid(format!(
                "flux width {} does not match the {}-face mesh",
                flux.len(),
                mesh.n_faces()
            )));
        }
        traj.push(t, rho, flux);
    }
    Ok(LoadedTrajectory { traj, potential })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PotentialSpec;
    use crate::mesh::build_cartesian;
    use crate::potential::{
        discretize, DiscretizeOptions, ExternalPotential, InteractionKernel, TabulatedField,
    };
    use crate::scheme::{
        solve, Integrator, SchemeConfig, SchemeKind, TimeStepRule, DEFAULT_SAFETY,
    };

    fn sample_traj() -> (Trajectory, PotentialSpec) {
        let t = Arc::new(build_cartesian(1, &[(0.0, 1.0)], 1.0 / 16.0).unwrap());
        let v = ExternalPotential::Quadratic { center: [0.5, 0.0, 0.0], k: 2.0 };
        let w = InteractionKernel::Zero;
        let pots = discretize(&t, &v, &w, &DiscretizeOptions::default()).unwrap();
        let rho0 = vec![1.0 / 16.0; 16];
        let cfg = SchemeConfig {
            kind: SchemeKind::ScharfetterGummel,
            eps: 0.2,
            step: TimeStepRule::Auto { safety: DEFAULT_SAFETY },
            integrator: Integrator::ExplicitEuler,
            t_end: 0.05,
            record_every: 3,
        };
        let traj = solve(&t, &pots, &rho0, &cfg).unwrap();
        let spec = PotentialSpec {
            v,
            w,
            v_file: None,
            w_file: None,
            lipschitz_v: None,
            lipschitz_w: None,
        };
        (traj, spec)
    }

    #[test]
    fn round_trips_states_fluxes_and_metadata_exactly() {
        let (traj, spec) = sample_traj();
        let dir = tempfile::tempdir().unwrap();
        save_trajectory(dir.path(), &traj, &spec).unwrap();
        let loaded = load_trajectory(dir.path()).unwrap();
        assert_eq!(loaded.traj.len(), traj.len());
        assert_eq!(loaded.traj.kind, traj.kind);
        assert_eq!(loaded.traj.eps, traj.eps);
        for i in 0..traj.len() {
            assert_eq!(loaded.traj.times()[i].to_bits(), traj.times()[i].to_bits());
            for (a, b) in loaded.traj.state(i).iter().zip(traj.state(i)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            for (a, b) in loaded.traj.flux(i).iter().zip(traj.flux(i)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        assert!(matches!(loaded.potential.v, ExternalPotential::Quadratic { .. }));
        // audits recompute identically from the loaded copy
        let pots = discretize(
            loaded.traj.mesh(),
            &loaded.potential.v,
            &loaded.potential.w,
            &DiscretizeOptions::default(),
        )
        .unwrap();
        let a = crate::functionals::audit(&traj, &pots).unwrap();
        let b = crate::functionals::audit(&loaded.traj, &pots).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.energy.to_bits(), y.energy.to_bits());
            assert_eq!(x.residual_cum.to_bits(), y.residual_cum.to_bits());
        }
    }

    #[test]
    fn tabulated_potentials_are_copied_into_the_directory() {
        let (traj, mut spec) = sample_traj();
        let pts = vec![
            ([-2.0, 0.0, 0.0], 1.0),
            ([0.0, 0.0, 0.0], 0.0),
            ([2.0, 0.0, 0.0], 1.0),
        ];
        spec.w = InteractionKernel::Tabulated(TabulatedField::from_points(1, &pts).unwrap());
        let dir = tempfile::tempdir().unwrap();
        save_trajectory(dir.path(), &traj, &spec).unwrap();
        assert!(dir.path().join("w_table.csv").is_file());
        let loaded = load_trajectory(dir.path()).unwrap();
        match &loaded.potential.w {
            InteractionKernel::Tabulated(t) => {
                assert_eq!(t.eval(&[1.0, 0.0, 0.0]), 0.5);
            }
            other => panic!("expected tabulated kernel, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_directories_are_reported() {
        let (traj, spec) = sample_traj();
        let dir = tempfile::tempdir().unwrap();
        save_trajectory(dir.path(), &traj, &spec).unwrap();
        // truncate a record
        let p = dir.path().join("states.csv");
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let last = lines.last_mut().unwrap();
        let shorter = &last[..last.rfind(',').unwrap()];
        let broken = format!("{}\n{shorter}\n", lines[..lines.len() - 1].join("\n"));
        std::fs::write(&p, broken).unwrap();
        match load_trajectory(dir.path()) {
            Err(TrajIoError::Parse { file, .. }) => assert_eq!(file, "states.csv"),
            Err(other) => panic!("expected parse error, got {other:?}"),
            Ok(_) => panic!("expected parse error, got a trajectory"),
        }
        // mismatched time grids between the two CSVs
        let (traj2, spec2) = sample_traj();
        let dir2 = tempfile::tempdir().unwrap();
        save_trajectory(dir2.path(), &traj2, &spec2).unwrap();
        let fp = dir2.path().join("fluxes.csv");
        let text = std::fs::read_to_string(&fp).unwrap();
        let swapped = text.replacen("0.0000000000000000e0", "1.2300000000000000e-2", 1);
        std::fs::write(&fp, swapped).unwrap();
        assert!(matches!(load_trajectory(dir2.path()), Err(TrajIoError::Invalid(_))));
    }
}
