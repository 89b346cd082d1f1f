//! Run configuration: a strict INI dialect with sections `[mesh]`,
//! `[potential]`, `[solver]`, `[initial]`, and optional `[study]` and
//! `[output]`. Unknown sections, unknown keys, and keys unused by the chosen
//! variant are all errors with line numbers; parse → serialize → parse is
//! idempotent.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::potential::{ExternalPotential, InteractionKernel, TabulatedField};
use crate::scheme::{Integrator, SchemeKind, TimeStepRule, DEFAULT_SAFETY};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("missing key `{key}` in section [{section}]")]
    Missing { section: String, key: String },
    #[error("table: {0}")]
    Table(#[from] crate::potential::PotentialError),
}

fn perr(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::Parse { line, msg: msg.into() }
}

// ---------------------------------------------------------------------------
// raw INI layer
// ---------------------------------------------------------------------------

pub(crate) struct Section {
    pub(crate) line: usize,
    pub(crate) keys: BTreeMap<String, (String, usize)>,
}

pub(crate) fn parse_ini(text: &str) -> Result<BTreeMap<String, Section>, ConfigError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| perr(line_no, format!("unterminated section header `{line}`")))?
                .trim()
                .to_string();
            if name.is_empty() {
                return Err(perr(line_no, "empty section name"));
            }
            if sections.contains_key(&name) {
                return Err(perr(line_no, format!("duplicate section [{name}]")));
            }
            sections.insert(name.clone(), Section { line: line_no, keys: BTreeMap::new() });
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(perr(line_no, format!("expected `key = value`, got `{line}`")));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(perr(line_no, "empty key"));
        }
        let Some(sect) = &current else {
            return Err(perr(line_no, format!("key `{key}` outside any section")));
        };
        let sect = sections.get_mut(sect).unwrap();
        if sect.keys.insert(key.clone(), (value, line_no)).is_some() {
            return Err(perr(line_no, format!("duplicate key `{key}`")));
        }
    }
    Ok(sections)
}

/// Tracks which keys were consumed so leftovers can be reported.
pub(crate) struct SectionReader<'a> {
    pub(crate) name: &'a str,
    pub(crate) keys: BTreeMap<String, (String, usize)>,
}

impl<'a> SectionReader<'a> {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.keys.remove(key)
    }

    pub(crate) fn require(&mut self, key: &str) -> Result<(String, usize), ConfigError> {
        self.take(key).ok_or_else(|| ConfigError::Missing {
            section: self.name.to_string(),
            key: key.to_string(),
        })
    }

    pub(crate) fn finish(self) -> Result<(), ConfigError> {
        if let Some((key, (_, line))) = self.keys.into_iter().next() {
            return Err(perr(
                line,
                format!("key `{key}` is not used by section [{}] with this configuration", self.name),
            ));
        }
        Ok(())
    }
}

fn parse_f64(v: &str, line: usize) -> Result<f64, ConfigError> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| perr(line, format!("expected a number, got `{v}`")))
}

fn parse_usize(v: &str, line: usize) -> Result<usize, ConfigError> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| perr(line, format!("expected a nonnegative integer, got `{v}`")))
}

fn parse_u64(v: &str, line: usize) -> Result<u64, ConfigError> {
    v.trim()
        .parse::<u64>()
        .map_err(|_| perr(line, format!("expected a nonnegative integer, got `{v}`")))
}

/// Up to three comma-separated coordinates, padded with zeros.
fn parse_vec3(v: &str, line: usize) -> Result<[f64; 3], ConfigError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.is_empty() || parts.len() > 3 {
        return Err(perr(line, format!("expected 1..3 coordinates, got `{v}`")));
    }
    let mut out = [0.0f64; 3];
    for (i, p) in parts.iter().enumerate() {
        out[i] = parse_f64(p, line)?;
    }
    Ok(out)
}

/// Axis bounds `lo:hi` pairs, comma-separated between axes.
fn parse_bounds(v: &str, line: usize) -> Result<Vec<(f64, f64)>, ConfigError> {
    let mut out = Vec::new();
    for part in v.split(',') {
        let Some((lo, hi)) = part.split_once(':') else {
            return Err(perr(line, format!("expected `lo:hi`, got `{part}`")));
        };
        out.push((parse_f64(lo, line)?, parse_f64(hi, line)?));
    }
    if out.is_empty() || out.len() > 3 {
        return Err(perr(line, format!("expected 1..3 axis bounds, got {}", out.len())));
    }
    Ok(out)
}

fn parse_f64_list(v: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(|p| parse_f64(p, line)).collect()
}

fn parse_usize_list(v: &str, line: usize) -> Result<Vec<usize>, ConfigError> {
    v.split(',').map(|p| parse_usize(p, line)).collect()
}

// ---------------------------------------------------------------------------
// typed configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum MeshSpec {
    /// Load from a mesh file (path resolved against the config directory).
    File(PathBuf),
    Cartesian { dim: usize, bounds: Vec<(f64, f64)>, h: f64 },
}

#[derive(Debug, Clone)]
pub struct PotentialSpec {
    pub v: ExternalPotential,
    pub w: InteractionKernel,
    /// Original table paths, kept for round-trip serialization.
    pub v_file: Option<PathBuf>,
    pub w_file: Option<PathBuf>,
    pub lipschitz_v: Option<f64>,
    pub lipschitz_w: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum InitialKind {
    Uniform,
    Gaussian { center: [f64; 3], width: f64 },
    Delta { point: [f64; 3] },
    /// Gibbs profile of the external potential alone.
    Gibbs,
    Random { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct InitialSpec {
    pub kind: InitialKind,
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct SolverSpec {
    pub kind: SchemeKind,
    pub eps: f64,
    pub step: TimeStepRule,
    pub integrator: Integrator,
    pub t_end: f64,
    pub record_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    /// Mesh self-convergence at fixed ε.
    ConvergeH,
    /// Discrete solutions under an ε sequence on a fixed mesh.
    ConvergeEpsDiscrete,
    /// Upwind limit objects under mesh refinement.
    UpwindToAggregation,
    /// Vanishing-diffusion comparison against the upwind limit run.
    VanishingDiffusion,
}

#[derive(Debug, Clone)]
pub struct StudySpec {
    pub kind: StudyKind,
    /// Per-axis cell counts for mesh-refinement studies.
    pub levels: Vec<usize>,
    /// Diffusion strengths for ε studies.
    pub eps_levels: Vec<f64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mesh: MeshSpec,
    pub potential: PotentialSpec,
    pub solver: SolverSpec,
    pub initial: InitialSpec,
    pub study: Option<StudySpec>,
    pub output: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// section parsers
// ---------------------------------------------------------------------------

fn read_mesh(mut s: SectionReader, base: &Path) -> Result<MeshSpec, ConfigError> {
    if let Some((file, line)) = s.take("file") {
        if s.take("dim").is_some() || s.take("bounds").is_some() || s.take("h").is_some() {
            return Err(perr(line, "mesh `file` excludes `dim`/`bounds`/`h`"));
        }
        s.finish()?;
        return Ok(MeshSpec::File(base.join(file)));
    }
    let (dim, dline) = s.require("dim")?;
    let dim = parse_usize(&dim, dline)?;
    let (bounds, bline) = s.require("bounds")?;
    let bounds = parse_bounds(&bounds, bline)?;
    if bounds.len() != dim {
        return Err(perr(bline, format!("{dim}-dimensional mesh needs {dim} axis bounds, got {}", bounds.len())));
    }
    let (h, hline) = s.require("h")?;
    let h = parse_f64(&h, hline)?;
    s.finish()?;
    Ok(MeshSpec::Cartesian { dim, bounds, h })
}

pub(crate) fn read_potential(mut s: SectionReader, base: &Path) -> Result<PotentialSpec, ConfigError> {
    let (vkind, vline) = s.require("v")?;
    let mut v_file = None;
    let v = match vkind.as_str() {
        "zero" => ExternalPotential::Zero,
        "linear" => {
            let (g, line) = s.require("v_g")?;
            ExternalPotential::Linear { g: parse_vec3(&g, line)? }
        }
        "quadratic" => {
            let (c, cl) = s.require("v_center")?;
            let (k, kl) = s.require("v_k")?;
            ExternalPotential::Quadratic { center: parse_vec3(&c, cl)?, k: parse_f64(&k, kl)? }
        }
        "double_well" => {
            let (c, cl) = s.require("v_center")?;
            let (r, rl) = s.require("v_radius")?;
            let (k, kl) = s.require("v_k")?;
            ExternalPotential::DoubleWell {
                center: parse_vec3(&c, cl)?,
                radius: parse_f64(&r, rl)?,
                k: parse_f64(&k, kl)?,
            }
        }
        "tabulated" => {
            let (f, _) = s.require("v_file")?;
            let path = base.join(f);
            let table = TabulatedField::read_csv(&path)?;
            v_file = Some(path);
            ExternalPotential::Tabulated(table)
        }
        other => return Err(perr(vline, format!("unknown external potential `{other}`"))),
    };
    let (wkind, wline) = s.require("w")?;
    let mut w_file = None;
    let w = match wkind.as_str() {
        "zero" => InteractionKernel::Zero,
        "morse" => {
            let (cr, l1) = s.require("w_cr")?;
            let (lr, l2) = s.require("w_lr")?;
            let (ca, l3) = s.require("w_ca")?;
            let (la, l4) = s.require("w_la")?;
            InteractionKernel::Morse {
                c_r: parse_f64(&cr, l1)?,
                l_r: parse_f64(&lr, l2)?,
                c_a: parse_f64(&ca, l3)?,
                l_a: parse_f64(&la, l4)?,
            }
        }
        "gaussian" => {
            let (a, l1) = s.require("w_amplitude")?;
            let (wd, l2) = s.require("w_width")?;
            InteractionKernel::Gaussian { amplitude: parse_f64(&a, l1)?, width: parse_f64(&wd, l2)? }
        }
        "abs_value" => {
            let (sl, l1) = s.require("w_slope")?;
            InteractionKernel::AbsValue { slope: parse_f64(&sl, l1)? }
        }
        "tabulated" => {
            let (f, _) = s.require("w_file")?;
            let path = base.join(f);
            let table = TabulatedField::read_csv(&path)?;
            w_file = Some(path);
            InteractionKernel::Tabulated(table)
        }
        other => return Err(perr(wline, format!("unknown interaction kernel `{other}`"))),
    };
    let lipschitz_v = match s.take("lipschitz_v") {
        Some((val, line)) => Some(parse_f64(&val, line)?),
        None => None,
    };
    let lipschitz_w = match s.take("lipschitz_w") {
        Some((val, line)) => Some(parse_f64(&val, line)?),
        None => None,
    };
    s.finish()?;
    v.validate()?;
    w.validate()?;
    Ok(PotentialSpec { v, w, v_file, w_file, lipschitz_v, lipschitz_w })
}

fn read_solver(mut s: SectionReader) -> Result<SolverSpec, ConfigError> {
    let (scheme, sline) = s.require("scheme")?;
    let kind = match scheme.as_str() {
        "sg" => SchemeKind::ScharfetterGummel,
        "upwind" => SchemeKind::Upwind,
        other => return Err(perr(sline, format!("unknown scheme `{other}` (use `sg` or `upwind`)"))),
    };
    let eps = match s.take("eps") {
        Some((v, line)) => parse_f64(&v, line)?,
        None if kind == SchemeKind::Upwind => 0.0,
        None => {
            return Err(ConfigError::Missing { section: "solver".into(), key: "eps".into() });
        }
    };
    let (t_end, tline) = s.require("t_end")?;
    let t_end = parse_f64(&t_end, tline)?;
    let safety = match s.take("safety") {
        Some((v, line)) => Some((parse_f64(&v, line)?, line)),
        None => None,
    };
    let step = match s.take("dt") {
        Some((v, _)) if v.trim() == "auto" => TimeStepRule::Auto {
            safety: safety.map(|(x, _)| x).unwrap_or(DEFAULT_SAFETY),
        },
        Some((v, line)) => {
            if let Some((_, sl)) = safety {
                return Err(perr(sl, "`safety` applies only to `dt = auto`"));
            }
            TimeStepRule::Fixed { dt: parse_f64(&v, line)? }
        }
        None => TimeStepRule::Auto { safety: safety.map(|(x, _)| x).unwrap_or(DEFAULT_SAFETY) },
    };
    let integrator = match s.take("integrator") {
        Some((v, line)) => match v.trim() {
            "euler" => Integrator::ExplicitEuler,
            "heun" => Integrator::Heun,
            other => return Err(perr(line, format!("unknown integrator `{other}` (use `euler` or `heun`)"))),
        },
        None => Integrator::ExplicitEuler,
    };
    let record_every = match s.take("record_every") {
        Some((v, line)) => parse_usize(&v, line)?,
        None => 0,
    };
    s.finish()?;
    Ok(SolverSpec { kind, eps, step, integrator, t_end, record_every })
}

fn read_initial(mut s: SectionReader) -> Result<InitialSpec, ConfigError> {
    let (kind, kline) = s.require("kind")?;
    let kind = match kind.as_str() {
        "uniform" => InitialKind::Uniform,
        "gaussian" => {
            let (c, cl) = s.require("center")?;
            let (w, wl) = s.require("width")?;
            InitialKind::Gaussian { center: parse_vec3(&c, cl)?, width: parse_f64(&w, wl)? }
        }
        "delta" => {
            let (p, pl) = s.require("point")?;
            InitialKind::Delta { point: parse_vec3(&p, pl)? }
        }
        "gibbs" => InitialKind::Gibbs,
        "random" => {
            let (seed, sl) = s.require("seed")?;
            InitialKind::Random { seed: parse_u64(&seed, sl)? }
        }
        other => return Err(perr(kline, format!("unknown initial profile `{other}`"))),
    };
    let mass = match s.take("mass") {
        Some((v, line)) => parse_f64(&v, line)?,
        None => 1.0,
    };
    s.finish()?;
    Ok(InitialSpec { kind, mass })
}

fn read_study(mut s: SectionReader) -> Result<StudySpec, ConfigError> {
    let (kind, kline) = s.require("kind")?;
    let kind = match kind.as_str() {
        "converge_h" => StudyKind::ConvergeH,
        "converge_eps_discrete" => StudyKind::ConvergeEpsDiscrete,
        "upwind_to_aggregation" => StudyKind::UpwindToAggregation,
        "converge_eps_continuous_surrogate" => StudyKind::VanishingDiffusion,
        other => return Err(perr(kline, format!("unknown study `{other}`"))),
    };
    let needs_levels = matches!(kind, StudyKind::ConvergeH | StudyKind::UpwindToAggregation);
    let levels = if needs_levels {
        let (v, line) = s.require("levels")?;
        let levels = parse_usize_list(&v, line)?;
        if levels.len() < 2 {
            return Err(perr(line, "refinement studies need at least two levels"));
        }
        levels
    } else {
        Vec::new()
    };
    let eps_levels = if needs_levels {
        Vec::new()
    } else {
        let (v, line) = s.require("eps_levels")?;
        let eps = parse_f64_list(&v, line)?;
        if eps.len() < 2 {
            return Err(perr(line, "ε studies need at least two strengths"));
        }
        eps
    };
    let threads = match s.take("threads") {
        Some((v, line)) => Some(parse_usize(&v, line)?),
        None => None,
    };
    s.finish()?;
    Ok(StudySpec { kind, levels, eps_levels, threads })
}

// ---------------------------------------------------------------------------
// top level
// ---------------------------------------------------------------------------

/// Parse a run configuration; table and mesh paths resolve against `base`.
pub fn parse_run_config(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let mut sections = parse_ini(text)?;
    let mut reader = |name: &'static str| -> Option<SectionReader<'static>> {
        sections
            .remove(name)
            .map(|s| SectionReader { name, keys: s.keys })
    };
    let mesh = read_mesh(
        reader("mesh").ok_or_else(|| ConfigError::Invalid("missing section [mesh]".into()))?,
        base,
    )?;
    let potential = read_potential(
        reader("potential")
            .ok_or_else(|| ConfigError::Invalid("missing section [potential]".into()))?,
        base,
    )?;
    let solver = read_solver(
        reader("solver").ok_or_else(|| ConfigError::Invalid("missing section [solver]".into()))?,
    )?;
    let initial = read_initial(
        reader("initial")
            .ok_or_else(|| ConfigError::Invalid("missing section [initial]".into()))?,
    )?;
    let study = match reader("study") {
        Some(s) => Some(read_study(s)?),
        None => None,
    };
    let output = match reader("output") {
        Some(mut s) => {
            let (dir, _) = s.require("dir")?;
            s.finish()?;
            Some(base.join(dir))
        }
        None => None,
    };
    if let Some((name, sect)) = sections.into_iter().next() {
        return Err(perr(sect.line, format!("unknown section [{name}]")));
    }
    Ok(RunConfig { mesh, potential, solver, initial, study, output })
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_run_config(&text, base)
}

/// Key lines of a `[potential]` section (shared with trajectory metadata).
pub(crate) fn format_potential(spec: &PotentialSpec) -> String {
    let mut out = String::new();
    match &spec.v {
        ExternalPotential::Zero => out.push_str("v = zero\n"),
        ExternalPotential::Linear { g } => {
            out.push_str(&format!("v = linear\nv_g = {},{},{}\n", g[0], g[1], g[2]));
        }
        ExternalPotential::Quadratic { center, k } => {
            out.push_str(&format!(
                "v = quadratic\nv_center = {},{},{}\nv_k = {k}\n",
                center[0], center[1], center[2]
            ));
        }
        ExternalPotential::DoubleWell { center, radius, k } => {
            out.push_str(&format!(
                "v = double_well\nv_center = {},{},{}\nv_radius = {radius}\nv_k = {k}\n",
                center[0], center[1], center[2]
            ));
        }
        ExternalPotential::Tabulated(_) => {
            let p = spec.v_file.as_deref().unwrap_or_else(|| Path::new("v.csv"));
            out.push_str(&format!("v = tabulated\nv_file = {}\n", p.display()));
        }
    }
    match &spec.w {
        InteractionKernel::Zero => out.push_str("w = zero\n"),
        InteractionKernel::Morse { c_r, l_r, c_a, l_a } => {
            out.push_str(&format!(
                "w = morse\nw_cr = {c_r}\nw_lr = {l_r}\nw_ca = {c_a}\nw_la = {l_a}\n"
            ));
        }
        InteractionKernel::Gaussian { amplitude, width } => {
            out.push_str(&format!("w = gaussian\nw_amplitude = {amplitude}\nw_width = {width}\n"));
        }
        InteractionKernel::AbsValue { slope } => {
            out.push_str(&format!("w = abs_value\nw_slope = {slope}\n"));
        }
        InteractionKernel::Tabulated(_) => {
            let p = spec.w_file.as_deref().unwrap_or_else(|| Path::new("w.csv"));
            out.push_str(&format!("w = tabulated\nw_file = {}\n", p.display()));
        }
    }
    if let Some(l) = spec.lipschitz_v {
        out.push_str(&format!("lipschitz_v = {l}\n"));
    }
    if let Some(l) = spec.lipschitz_w {
        out.push_str(&format!("lipschitz_w = {l}\n"));
    }
    out
}

/// Serialize back to the INI dialect (canonical section and key order).
pub fn format_run_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    out.push_str("[mesh]\n");
    match &cfg.mesh {
        MeshSpec::File(p) => out.push_str(&format!("file = {}\n", p.display())),
        MeshSpec::Cartesian { dim, bounds, h } => {
            out.push_str(&format!("dim = {dim}\n"));
            let b: Vec<String> = bounds.iter().map(|(lo, hi)| format!("{lo}:{hi}")).collect();
            out.push_str(&format!("bounds = {}\n", b.join(",")));
            out.push_str(&format!("h = {h}\n"));
        }
    }
    out.push_str("\n[potential]\n");
    out.push_str(&format_potential(&cfg.potential));
    out.push_str("\n[solver]\n");
    out.push_str(&format!(
        "scheme = {}\n",
        match cfg.solver.kind {
            SchemeKind::ScharfetterGummel => "sg",
            SchemeKind::Upwind => "upwind",
        }
    ));
    out.push_str(&format!("eps = {}\n", cfg.solver.eps));
    out.push_str(&format!("t_end = {}\n", cfg.solver.t_end));
    match cfg.solver.step {
        TimeStepRule::Auto { safety } => {
            out.push_str("dt = auto\n");
            out.push_str(&format!("safety = {safety}\n"));
        }
        TimeStepRule::Fixed { dt } => out.push_str(&format!("dt = {dt}\n")),
    }
    out.push_str(&format!(
        "integrator = {}\n",
        match cfg.solver.integrator {
            Integrator::ExplicitEuler => "euler",
            Integrator::Heun => "heun",
        }
    ));
    out.push_str(&format!("record_every = {}\n", cfg.solver.record_every));
    out.push_str("\n[initial]\n");
    match &cfg.initial.kind {
        InitialKind::Uniform => out.push_str("kind = uniform\n"),
        InitialKind::Gaussian { center, width } => {
            out.push_str(&format!(
                "kind = gaussian\ncenter = {},{},{}\nwidth = {width}\n",
                center[0], center[1], center[2]
            ));
        }
        InitialKind::Delta { point } => {
            out.push_str(&format!("kind = delta\npoint = {},{},{}\n", point[0], point[1], point[2]));
        }
        InitialKind::Gibbs => out.push_str("kind = gibbs\n"),
        InitialKind::Random { seed } => out.push_str(&format!("kind = random\nseed = {seed}\n")),
    }
    out.push_str(&format!("mass = {}\n", cfg.initial.mass));
    if let Some(study) = &cfg.study {
        out.push_str("\n[study]\n");
        out.push_str(&format!(
            "kind = {}\n",
            match study.kind {
                StudyKind::ConvergeH => "converge_h",
                StudyKind::ConvergeEpsDiscrete => "converge_eps_discrete",
                StudyKind::UpwindToAggregation => "upwind_to_aggregation",
                StudyKind::VanishingDiffusion => "converge_eps_continuous_surrogate",
            }
        ));
        if !study.levels.is_empty() {
            let l: Vec<String> = study.levels.iter().map(|x| x.to_string()).collect();
            out.push_str(&format!("levels = {}\n", l.join(",")));
        }
        if !study.eps_levels.is_empty() {
            let l: Vec<String> = study.eps_levels.iter().map(|x| x.to_string()).collect();
            out.push_str(&format!("eps_levels = {}\n", l.join(",")));
        }
        if let Some(th) = study.threads {
            out.push_str(&format!("threads = {th}\n"));
        }
    }
    if let Some(dir) = &cfg.output {
        out.push_str(&format!("\n[output]\ndir = {}\n", dir.display()));
    }
    out
}

/// Materialize the mesh described by the configuration.
pub fn build_mesh(spec: &MeshSpec) -> Result<crate::mesh::Tessellation, crate::mesh::MeshError> {
    match spec {
        MeshSpec::File(p) => crate::mesh::read_fvmesh(p),
        MeshSpec::Cartesian { dim, bounds, h } => crate::mesh::build_cartesian(*dim, bounds, *h),
    }
}
