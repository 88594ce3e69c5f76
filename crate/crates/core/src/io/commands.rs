//! Command implementations behind the `fcm-frame` binary.
//!
//! Every command writes its artifacts into the output directory together
//! with `manifest.json` (inputs, parameters and output hashes; identical for
//! identical inputs) and `run_info.json` (timings and cache use).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::job::LoadedJob;
use super::output::{
    displacements_csv, frame_vtk, internal_actions_csv, reactions_csv, to_json, StoredSolution,
};
use crate::beam::euler_buckling_check;
use crate::condense::{hex, validate_condensed, write_matrix};
use crate::error::{Error, Result};
use crate::scenario::{error_profile_csv, run_cantilever, CantileverOptions};
use crate::twoscale::{
    condense_cached, extract_boundary_data, run_job, LocalModel, RunOptions, SubstructureSource, TwoScaleJob,
};

/// Process exit codes shared by all commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    /// Validation or physics failure (failed checks, singular system).
    Failure = 1,
    /// Unreadable or invalid input.
    InputError = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn from_error(e: &Error) -> Self {
        if e.is_input_error() {
            ExitStatus::InputError
        } else {
            ExitStatus::Failure
        }
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    /// Human-readable lines for stdout.
    pub report: Vec<String>,
    pub outputs: Vec<PathBuf>,
}

impl Outcome {
    pub fn status(&self) -> ExitStatus {
        if self.passed {
            ExitStatus::Success
        } else {
            ExitStatus::Failure
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CommonOptions {
    pub job: Option<PathBuf>,
    pub out: PathBuf,
    pub cache: Option<PathBuf>,
}

impl CommonOptions {
    fn load_job(&self) -> Result<LoadedJob> {
        let path = self.job.as_ref().ok_or_else(|| Error::Job("--job is required for this command".into()))?;
        LoadedJob::from_path(path)
    }
}

fn sha256(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Collects artifacts in memory and writes them together with the manifest.
struct Artifacts {
    dir: PathBuf,
    command: &'static str,
    files: BTreeMap<String, Vec<u8>>,
    timings: Vec<(String, f64)>,
    cache_hits: BTreeMap<String, bool>,
}

impl Artifacts {
    fn new(dir: &Path, command: &'static str) -> Self {
        Self {
            dir: dir.to_path_buf(),
            command,
            files: BTreeMap::new(),
            timings: Vec::new(),
            cache_hits: BTreeMap::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.insert(name.into(), bytes.into());
    }

    fn write(self, inputs: BTreeMap<String, String>, parameters: serde_json::Value) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir)?;
        let mut paths = Vec::new();
        let mut outputs = BTreeMap::new();
        for (name, bytes) in &self.files {
            let p = self.dir.join(name);
            fs::write(&p, bytes)?;
            outputs.insert(name.clone(), sha256(bytes));
            paths.push(p);
        }
        let p = self.dir.join("manifest.json");
        let mut commands = previous_commands(&p);
        commands.insert(
            self.command.to_string(),
            json!({
                "inputs": inputs,
                "parameters": parameters,
                "outputs": outputs,
            }),
        );
        let manifest = json!({
            "tool": "fcm-frame",
            "version": env!("CARGO_PKG_VERSION"),
            "commands": commands,
        });
        fs::write(&p, to_json(&manifest)?)?;
        paths.push(p);
        let timings: Vec<_> = self.timings.iter().map(|(s, t)| json!({"stage": s, "seconds": t})).collect();
        let info = json!({
            "timings": timings,
            "cache_hits": self.cache_hits,
            "threads": rayon::current_num_threads(),
        });
        let p = self.dir.join("run_info.json");
        fs::write(&p, to_json(&info)?)?;
        paths.push(p);
        Ok(paths)
    }
}

/// Entries of an existing manifest written by this tool version, so that
/// commands sharing an output directory each keep their record.
fn previous_commands(path: &Path) -> serde_json::Map<String, serde_json::Value> {
    let Ok(text) = fs::read_to_string(path) else {
        return serde_json::Map::new();
    };
    match serde_json::from_str::<serde_json::Value>(&text) {
        Ok(serde_json::Value::Object(mut m))
            if m.get("tool").and_then(|v| v.as_str()) == Some("fcm-frame")
                && m.get("version").and_then(|v| v.as_str()) == Some(env!("CARGO_PKG_VERSION")) =>
        {
            match m.remove("commands") {
                Some(serde_json::Value::Object(c)) => c,
                _ => serde_json::Map::new(),
            }
        }
        _ => serde_json::Map::new(),
    }
}

/// Hashes of the job file and of every file it references, keyed by the
/// path as written in the job.
fn input_hashes(job: &LoadedJob) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    out.insert("job".to_string(), sha256(&job.bytes));
    for s in &job.file.substructures {
        let refs = [s.matrix.as_ref(), s.geometry.as_ref().and_then(|g| match g {
            super::job::GeometryInput::Stl(p) => Some(p),
            super::job::GeometryInput::Implicit(_) => None,
        })];
        for p in refs.into_iter().flatten() {
            let bytes = fs::read(job.resolve(p)).map_err(|e| Error::Job(format!("{}: {e}", p.display())))?;
            out.insert(p.display().to_string(), sha256(&bytes));
        }
    }
    Ok(out)
}

/// Single hash over all job inputs.
fn job_hash(inputs: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in inputs {
        h.update(k.as_bytes());
        h.update([0]);
        h.update(v.as_bytes());
        h.update([0]);
    }
    hex(&h.finalize())
}

fn parameters(job: &LoadedJob) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(&job.file)?)
}

fn select<'a>(job: &'a TwoScaleJob, name: Option<&str>, what: &str) -> Result<Vec<&'a crate::twoscale::SubstructureEntry>> {
    match name {
        Some(n) => {
            let s = job
                .substructures
                .iter()
                .find(|s| s.name == n)
                .ok_or_else(|| Error::Job(format!("no substructure named `{n}`")))?;
            if !matches!(s.source, SubstructureSource::Spec(_)) {
                return Err(Error::Job(format!("substructure `{n}` has no geometry to {what}")));
            }
            Ok(vec![s])
        }
        None => Ok(job.substructures.iter().filter(|s| matches!(s.source, SubstructureSource::Spec(_))).collect()),
    }
}

/// Condenses the selected substructures (all geometry-based ones when
/// `name` is `None`). Passes only if every matrix validates.
pub fn cmd_condense(opts: &CommonOptions, name: Option<&str>) -> Result<Outcome> {
    let job = opts.load_job()?;
    let tj = job.to_job()?;
    let selected = select(&tj, name, "condense")?;
    if selected.is_empty() {
        return Err(Error::Job("the job has no substructure with geometry".into()));
    }
    let mut art = Artifacts::new(&opts.out, "condense");
    let mut report = Vec::new();
    let mut passed = true;
    for s in selected {
        let SubstructureSource::Spec(spec) = &s.source else { unreachable!() };
        let t = Instant::now();
        let (c, hit) = condense_cached(spec, opts.cache.as_deref()).map_err(|e| e.in_stage(format!("condense {}", s.name)))?;
        art.timings.push((format!("condense {}", s.name), t.elapsed().as_secs_f64()));
        art.cache_hits.insert(s.name.clone(), hit);
        let v = validate_condensed(&c.matrix, Some(c.asymmetry));
        let mut bytes = Vec::new();
        write_matrix(&mut bytes, &c)?;
        art.add(format!("{}.kmat", s.name), bytes);
        let report_name = format!("{}.validation.json", s.name);
        art.add(report_name.clone(), to_json(&v)?);
        report.push(format!(
            "{}: k = {}, near-zero eigenvalues = {}, symmetry error = {:.2e}, validation {}",
            s.name,
            c.k(),
            v.near_zero,
            v.symmetry_error,
            if v.passed { "passed" } else { "FAILED" }
        ));
        if !v.passed {
            passed = false;
            for m in &v.messages {
                report.push(format!("  {m}"));
            }
            report.push(format!("  report: {}", opts.out.join(&report_name).display()));
        }
    }
    let inputs = input_hashes(&job)?;
    let mut params = parameters(&job)?;
    params["substructure"] = json!(name);
    let outputs = art.write(inputs, params)?;
    Ok(Outcome { passed, report, outputs })
}

#[derive(Serialize)]
struct GlobalSummary {
    units: BTreeMap<&'static str, &'static str>,
    job_hash: String,
    nodes: usize,
    elements: usize,
    superelements: Vec<SuperelementSummary>,
    max_displacement_mm: f64,
    max_displacement_node: u32,
    residual: f64,
    buckling_failures: Vec<usize>,
    max_buckling_ratio: f64,
}

#[derive(Serialize)]
struct SuperelementSummary {
    name: String,
    k: usize,
    nodes: Vec<u32>,
    provenance: String,
    validation_passed: bool,
}

fn units() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("length", "mm"),
        ("force", "N"),
        ("moment", "N*mm"),
        ("rotation", "rad"),
        ("stress", "MPa"),
        ("energy", "N*mm"),
    ])
}

/// Global analysis: condense (or load) superelements, assemble with the
/// beams and solve. Writes tables, VTK, a summary and the stored solution.
pub fn cmd_solve_global(opts: &CommonOptions) -> Result<Outcome> {
    let job = opts.load_job()?;
    let mut tj = job.to_job()?;
    for s in &mut tj.substructures {
        s.local_stress = false;
    }
    let inputs = input_hashes(&job)?;
    let hash = job_hash(&inputs);
    let rep = run_job(
        &tj,
        &RunOptions {
            cache: opts.cache.clone(),
        },
    )?;
    let mut art = Artifacts::new(&opts.out, "solve-global");
    art.timings = rep.timings.clone();
    for c in &rep.condensed {
        art.cache_hits.insert(c.name.clone(), c.cache_hit);
    }
    art.add("displacements.csv", displacements_csv(&rep.solution));
    art.add("reactions.csv", reactions_csv(&rep.solution));
    art.add("internal_actions.csv", internal_actions_csv(&rep.model, &rep.solution)?);
    if job.file.outputs.vtk {
        art.add("frame.vtk", frame_vtk(&rep.model, &rep.solution, "fcm-frame global solution"));
    }
    let mut failures = Vec::new();
    let mut max_ratio: f64 = 0.0;
    for (i, e) in rep.model.elements.iter().enumerate() {
        let f = crate::beam::internal_actions(&rep.model, i, &rep.solution)?;
        let c = euler_buckling_check(&e.material, &e.section, rep.model.element_length(i), f[6], 1.0);
        max_ratio = max_ratio.max(c.ratio);
        if !c.pass {
            failures.push(i);
        }
    }
    let (node, max_u) = rep.solution.max_translation();
    let summary = GlobalSummary {
        units: units(),
        job_hash: hash.clone(),
        nodes: rep.model.nodes.len(),
        elements: rep.model.elements.len(),
        superelements: rep
            .condensed
            .iter()
            .map(|c| SuperelementSummary {
                name: c.name.clone(),
                k: c.stiffness.k(),
                nodes: c.stiffness.nodes(),
                provenance: c.stiffness.provenance.clone(),
                validation_passed: c.validation.passed,
            })
            .collect(),
        max_displacement_mm: max_u,
        max_displacement_node: node,
        residual: rep.solution.residual(),
        buckling_failures: failures.clone(),
        max_buckling_ratio: max_ratio,
    };
    art.add("summary.json", to_json(&summary)?);
    art.add("global_solution.json", to_json(&StoredSolution::new(hash, &rep.solution))?);
    let mut report = vec![
        format!("{} nodes, {} beam elements, {} superelement(s)", summary.nodes, summary.elements, summary.superelements.len()),
        format!("max displacement {max_u:.6e} mm at node {node}"),
        format!("max buckling ratio {max_ratio:.3}"),
    ];
    let mut passed = true;
    for c in &rep.condensed {
        if !c.validation.passed {
            passed = false;
            report.push(format!("superelement {} failed validation: {:?}", c.name, c.validation.messages));
        }
    }
    if !failures.is_empty() {
        report.push(format!("elements above the Euler critical load: {failures:?}"));
    }
    let outputs = art.write(inputs, parameters(&job)?)?;
    Ok(Outcome { passed, report, outputs })
}

#[derive(Serialize)]
struct LocalSummary {
    units: BTreeMap<&'static str, &'static str>,
    substructure: String,
    job_hash: String,
    boundary_data: BTreeMap<u32, [f64; 6]>,
    max_von_mises_mpa: f64,
    location_mm: [f64; 3],
    max_displacement_mm: f64,
    strain_energy_nmm: f64,
    samples: usize,
}

/// Local stress recovery from the stored global solution in the output
/// directory. Missing or foreign solutions are input errors.
pub fn cmd_local_stress(opts: &CommonOptions, name: Option<&str>) -> Result<Outcome> {
    let job = opts.load_job()?;
    let tj = job.to_job()?;
    let inputs = input_hashes(&job)?;
    let hash = job_hash(&inputs);
    let path = opts.out.join("global_solution.json");
    let text = fs::read_to_string(&path)
        .map_err(|_| Error::Unsolved(format!("{} not found; run solve-global first", path.display())))?;
    let stored = StoredSolution::from_json(&text)?;
    if stored.job_hash != hash {
        return Err(Error::Job(format!("{} belongs to a different job; run solve-global again", path.display())));
    }
    let solution = stored.solution();
    let selected: Vec<_> = match name {
        Some(_) => select(&tj, name, "analyse")?,
        None => tj.substructures.iter().filter(|s| s.local_stress).collect(),
    };
    if selected.is_empty() {
        return Err(Error::Job("no substructure requests local stress".into()));
    }
    let mut art = Artifacts::new(&opts.out, "local-stress");
    let mut report = Vec::new();
    for s in selected {
        let SubstructureSource::Spec(spec) = &s.source else {
            return Err(Error::Job(format!("substructure `{}` has no geometry", s.name)));
        };
        let stage = format!("local stress {}", s.name);
        let t = Instant::now();
        let model = LocalModel::new(spec).map_err(|e| e.in_stage(&stage))?;
        let data = extract_boundary_data(Some(&solution), &model.nodes()).map_err(|e| e.in_stage(&stage))?;
        let local = model.solve(&data).map_err(|e| e.in_stage(&stage))?;
        art.timings.push((stage, t.elapsed().as_secs_f64()));
        let sm = &local.summary;
        let summary = LocalSummary {
            units: units(),
            substructure: s.name.clone(),
            job_hash: hash.clone(),
            boundary_data: data.nodes.iter().copied().zip(data.values.iter().copied()).collect(),
            max_von_mises_mpa: sm.max_von_mises,
            location_mm: sm.location,
            max_displacement_mm: sm.max_displacement,
            strain_energy_nmm: sm.strain_energy,
            samples: sm.samples,
        };
        art.add(format!("{}.local.json", s.name), to_json(&summary)?);
        if job.file.outputs.vtk {
            let mut bytes = Vec::new();
            local.field.write_vtk(&mut bytes, &format!("{} local field", s.name), job.file.outputs.vtk_subdivisions)?;
            art.add(format!("{}.local.vtk", s.name), bytes);
        }
        report.push(format!(
            "{}: max von Mises {:.6e} MPa at ({:.3}, {:.3}, {:.3}) mm",
            s.name, sm.max_von_mises, sm.location[0], sm.location[1], sm.location[2]
        ));
    }
    let mut params = parameters(&job)?;
    params["substructure"] = json!(name);
    let outputs = art.write(inputs, params)?;
    Ok(Outcome {
        passed: true,
        report,
        outputs,
    })
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub refined: bool,
    pub threshold: Option<f64>,
}

/// The built-in cantilever comparison. Passes iff the largest pointwise
/// displacement error on the beam segments is below the threshold.
pub fn cmd_verify_cantilever(opts: &CommonOptions, verify: &VerifyOptions) -> Result<Outcome> {
    let mut options = if verify.refined {
        CantileverOptions::refined()
    } else {
        CantileverOptions::desk()
    };
    let mut inputs = BTreeMap::new();
    if opts.job.is_some() {
        let job = opts.load_job()?;
        if let Some(o) = &job.file.cantilever {
            options.apply(o);
        }
        inputs.insert("job".to_string(), sha256(&job.bytes));
    }
    if let Some(t) = verify.threshold {
        options.threshold = t;
    }
    let rep = run_cantilever(&options, opts.cache.as_deref())?;
    let mut art = Artifacts::new(&opts.out, "verify-cantilever");
    art.timings = rep.timings.clone();
    art.cache_hits.insert("BC".into(), rep.cache_hit);
    art.add("cantilever_error_profile.csv", error_profile_csv(&rep.samples));
    if !rep.local_samples.is_empty() {
        art.add("cantilever_local_profile.csv", error_profile_csv(&rep.local_samples));
    }
    if let Some(c) = &rep.condensed {
        let mut bytes = Vec::new();
        write_matrix(&mut bytes, c)?;
        art.add("cantilever_segment.kmat", bytes);
    }
    art.add("cantilever_report.json", to_json(&rep)?);
    let mut report = vec![
        format!(
            "resolution {:?}, p = {}, octree depth {}; superelement validation {}",
            options.fcm.resolution,
            options.fcm.degree,
            options.fcm.octree_depth,
            if rep.validation.passed { "passed" } else { "FAILED" }
        ),
        format!("{:>10} {:>14} {:>14} {:>12}", "x_mm", "|u_ref| mm", "|u_2s| mm", "error"),
    ];
    for s in &rep.samples {
        let n = |v: [f64; 3]| nalgebra::Vector3::from(v).norm();
        report.push(format!(
            "{:>10.1} {:>14.6e} {:>14.6e} {:>12}",
            s.position_mm[0],
            n(s.reference_mm),
            n(s.two_scale_mm),
            s.error.map_or("undefined".to_string(), |e| format!("{e:.3e}"))
        ));
    }
    report.push(format!("max pointwise error {:.4e} (threshold {:.1e})", rep.max_error, options.threshold));
    if let Some(e) = rep.local_max_error {
        report.push(format!("ring-averaged 3D field along BC: max error {e:.4e} (informative)"));
    }
    if !rep.passed {
        if let Some(w) = &rep.worst {
            report.push(format!(
                "FAILED: worst sample at x = {} mm with error {:.4e}",
                w.position_mm[0],
                w.error.unwrap_or(f64::NAN)
            ));
        }
    }
    let params = serde_json::to_value(&options)?;
    let outputs = art.write(inputs, params)?;
    Ok(Outcome {
        passed: rep.passed,
        report,
        outputs,
    })
}
