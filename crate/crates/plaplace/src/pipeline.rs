//! Command implementations behind the CLI: validate, tune, simulate,
//! analyze, report. Each command is deterministic given its inputs;
//! failures map to exit code 1 (validation/tuning) or 2 (numerical).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, ProbeSpec};
use crate::barriers::{self, BarrierSide, CertificationReport};
use crate::config::{ConfigError, RunConfig};
use crate::curve::{self, Trajectory};
use crate::params::{self, BarrierParams, ParamError};
use crate::report::{self, ReportError};
use crate::solver::{self, ChainCheck, Field, NestedReport, RunOutput, StepStats};

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Configuration, hypothesis or tuning failures (exit code 1).
    #[error("{0}")]
    Validation(String),
    /// Numerical or artifact failures (exit code 2).
    #[error("{0}")]
    Numerical(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 1,
            PipelineError::Numerical(_) => 2,
        }
    }
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::Validation(e.to_string())
    }
}

impl From<ParamError> for PipelineError {
    fn from(e: ParamError) -> Self {
        PipelineError::Validation(e.to_string())
    }
}

impl From<solver::SolverError> for PipelineError {
    fn from(e: solver::SolverError) -> Self {
        PipelineError::Numerical(e.to_string())
    }
}

impl From<ReportError> for PipelineError {
    fn from(e: ReportError) -> Self {
        PipelineError::Numerical(e.to_string())
    }
}

impl From<AnalysisError> for PipelineError {
    fn from(e: AnalysisError) -> Self {
        PipelineError::Numerical(e.to_string())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateSummary {
    pub critical_exponent: f64,
    pub r_ratio: f64,
    pub theta: f64,
    pub delta_over_sigma: f64,
    pub min_k: f64,
    pub curve: String,
    pub curve_admissible_at_seeds: bool,
    pub curve_worst_ratio: f64,
}

impl std::fmt::Display for ValidateSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "critical exponent (p-n)/(p-1) = {:.12}", self.critical_exponent)?;
        writeln!(f, "R = lambda'/lambda            = {:.12}", self.r_ratio)?;
        writeln!(f, "theta                         = {:.12}", self.theta)?;
        writeln!(f, "delta/sigma                   = {:.12}", self.delta_over_sigma)?;
        writeln!(f, "min K                         = {:.12}", self.min_k)?;
        writeln!(f, "curve                         = {}", self.curve)?;
        write!(
            f,
            "curve admissible at seed constants = {} (worst ratio {:.6})",
            self.curve_admissible_at_seeds, self.curve_worst_ratio
        )
    }
}

/// Validates hypotheses, reports the derived structural constants and the
/// curve's admissibility against the seed `(C_ξ, A)`.
pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidateSummary, PipelineError> {
    let vcfg = params::validate_exponents(cfg.exponent_config())?;
    let min_k = params::min_k(&vcfg);
    let t = &cfg.tuning;
    let seed = params::derive_structural(
        &vcfg,
        t.sigma.unwrap_or(t.sigma_init),
        t.k_margin * min_k,
        t.c_xi.unwrap_or(t.c_xi_init),
        t.a.unwrap_or(t.a_init),
    )?;
    let traj = cfg.trajectory(&seed)?;
    let adm = curve::admissible(&traj, seed.c_xi, seed.a_time, cfg.solver.horizon.max(1.0), 10_000);
    Ok(ValidateSummary {
        critical_exponent: vcfg.critical_exponent(),
        r_ratio: seed.r_ratio,
        theta: seed.theta,
        delta_over_sigma: seed.delta / seed.sigma,
        min_k,
        curve: traj.descriptor(),
        curve_admissible_at_seeds: adm.admissible,
        curve_worst_ratio: adm.worst_ratio,
    })
}

pub struct TuneArtifacts {
    pub params: BarrierParams,
    pub report: CertificationReport,
    pub params_path: PathBuf,
    pub report_path: PathBuf,
}

/// Tunes the constants, certifies them and writes `params.json` plus the
/// certification report (and the per-sample residual table when CSV output
/// is enabled).
pub fn cmd_tune(cfg: &RunConfig, outdir: &Path) -> Result<TuneArtifacts, PipelineError> {
    let vcfg = params::validate_exponents(cfg.exponent_config())?;
    let grid = cfg.sample_grid();
    let search = cfg.search_options();
    let tuned = params::tune_constants(&vcfg, &grid, &search)?;
    let report = barriers::certify_with_margin(&tuned, &grid, search.residual_margin);
    if !report.pass {
        return Err(PipelineError::Validation(
            "tuned constants failed certification".into(),
        ));
    }
    let params_path = outdir.join("params.json");
    let report_path = outdir.join("reports").join("certification.json");
    report::write_json(&params_path, &tuned)?;
    report::write_json(&report_path, &report)?;
    if cfg.output.write_csv {
        let csv = barriers::residual_csv(&tuned, &grid);
        let path = outdir.join("csv").join("residuals.csv");
        write_text(&path, &csv)?;
    }
    Ok(TuneArtifacts {
        params: tuned,
        report,
        params_path,
        report_path,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::Numerical(e.to_string()))?;
    }
    fs::write(path, text).map_err(|e| PipelineError::Numerical(e.to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRun {
    pub index: u32,
    pub side: BarrierSide,
    pub dir: String,
    pub snapshots: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub params: BarrierParams,
    pub trajectory: Trajectory,
    pub horizon: f64,
    pub dt: f64,
    pub initial_data: solver::InitialData,
    pub runs: Vec<ManifestRun>,
}

pub struct SimArtifacts {
    pub manifest: Manifest,
    pub nested: NestedReport,
    pub stats: Vec<(u32, BarrierSide, Vec<StepStats>)>,
}

/// Loads (or re-tunes) the constants, runs the nested scheme per the
/// config and archives snapshots, per-run stats, the manifest and the
/// chain report.
pub fn cmd_simulate(
    cfg: &RunConfig,
    params_path: Option<&Path>,
    outdir: &Path,
) -> Result<SimArtifacts, PipelineError> {
    let params: BarrierParams = match params_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| PipelineError::Validation(e.to_string()))?;
            serde_json::from_str(&text).map_err(|e| PipelineError::Validation(e.to_string()))?
        }
        None => cmd_tune(cfg, outdir)?.params,
    };
    let traj = cfg.trajectory(&params)?;
    let opts = cfg.stepper_options();
    let init = cfg.solver.initial_data;
    let v0 = move |r: f64| init.eval(&params, r);
    let (runs, nested) = solver::nested_run(
        cfg.solver.i_min,
        cfg.solver.i_max,
        cfg.solver.horizon,
        cfg.solver.mode,
        cfg.solver.radial_cells,
        cfg.solver.angular_cells,
        &v0,
        &opts,
        &params,
        &traj,
    )?;

    let mut manifest_runs = Vec::new();
    let mut stats = Vec::new();
    for run in &runs {
        let dir_rel = format!("snapshots/i{}_{}", run.grid.index, run.side.label());
        let dir = outdir.join(&dir_rel);
        for (s, field) in run.fields.iter().enumerate() {
            if cfg.output.write_binary {
                report::write_snapshot_binary(&dir.join(format!("step_{s:06}.bin")), field)?;
            }
            if cfg.output.write_csv {
                write_text(
                    &dir.join(format!("step_{s:06}.csv")),
                    &report::snapshot_csv(field),
                )?;
            }
        }
        report::write_json(&dir.join("stats.json"), &run.stats)?;
        manifest_runs.push(ManifestRun {
            index: run.grid.index,
            side: run.side,
            dir: dir_rel,
            snapshots: run.fields.len(),
            epsilon: run.epsilon,
        });
        stats.push((run.grid.index, run.side, run.stats.clone()));
    }
    let manifest = Manifest {
        params,
        trajectory: traj,
        horizon: cfg.solver.horizon,
        dt: runs[0].dt,
        initial_data: cfg.solver.initial_data,
        runs: manifest_runs,
    };
    report::write_json(&outdir.join("manifest.json"), &manifest)?;
    report::write_json(&outdir.join("reports").join("nested.json"), &nested)?;
    Ok(SimArtifacts {
        manifest,
        nested,
        stats,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArgminRow {
    pub t: f64,
    pub argmin: [f64; 2],
    pub curve_position: [f64; 2],
    pub distance_in_cells: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunAnalysis {
    pub index: u32,
    pub side: BarrierSide,
    pub fit_window: (f64, f64),
    pub growth_fit: analysis::ExponentFit,
    pub gradient: analysis::GradientCheck,
    pub continuity: analysis::ContinuityReport,
    pub energy_rows: Vec<(f64, f64)>,
    pub energy_nonincreasing: bool,
    pub sandwich: ChainCheck,
    pub argmin_track: Vec<ArgminRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub runs: Vec<RunAnalysis>,
}

fn load_run(outdir: &Path, mrun: &ManifestRun) -> Result<Vec<Field>, PipelineError> {
    let dir = outdir.join(&mrun.dir);
    let mut fields = Vec::with_capacity(mrun.snapshots);
    for s in 0..mrun.snapshots {
        fields.push(report::read_snapshot_binary(&dir.join(format!("step_{s:06}.bin")))?);
    }
    Ok(fields)
}

/// Reads an archive back and verifies the theorem-side conclusions on it:
/// growth exponents, gradient blow-up, continuity at `t = 0`, energy decay
/// and singularity tracking.
pub fn cmd_analyze(cfg: &RunConfig, archive: &Path, outdir: &Path) -> Result<RunReport, PipelineError> {
    let text = fs::read_to_string(archive.join("manifest.json"))
        .map_err(|e| PipelineError::Validation(format!("cannot read manifest: {e}")))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| PipelineError::Validation(e.to_string()))?;
    let params = manifest.params;
    let traj = &manifest.trajectory;
    let mut analyses = Vec::new();
    for mrun in &manifest.runs {
        let fields = load_run(archive, mrun)?;
        let last = fields.last().expect("runs have at least one snapshot");
        let window = if cfg.analysis.fit_window.len() == 2 {
            (cfg.analysis.fit_window[0], cfg.analysis.fit_window[1])
        } else {
            analysis::inner_decade(last)
        };
        let growth_fit = analysis::fit_growth_exponent(last, window)?;
        let gradient = analysis::gradient_blowup_check(last, window)?;
        let init = manifest.initial_data;
        let v0 = |r: f64| init.eval(&params, r);
        let scale = fields[0].max_value();
        let continuity =
            analysis::initial_continuity_check(&fields, &v0, cfg.analysis.continuity_tol_rel * scale);
        let energy_rows: Vec<(f64, f64)> = fields
            .iter()
            .map(|f| (f.time, analysis::energy(f, params.cfg.p)))
            .collect();
        let energy_nonincreasing = traj.is_stationary()
            && energy_rows
                .windows(2)
                .all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-8));
        let run_for_sandwich = RunOutput {
            grid: Arc::clone(&fields[0].grid),
            side: mrun.side,
            fields: fields.clone(),
            stats: Vec::new(),
            dt: manifest.dt,
            epsilon: mrun.epsilon,
        };
        let sandwich = solver::sandwich_violation(&run_for_sandwich, &params);

        let spec = ProbeSpec {
            center: {
                let p0 = traj.position(0.0);
                [p0[0], p0.get(1).copied().unwrap_or(0.0)]
            },
            half_width: if cfg.analysis.probe_half_width > 0.0 {
                cfg.analysis.probe_half_width
            } else {
                fields[0].grid.r_max()
            },
            spacing: if cfg.analysis.probe_spacing > 0.0 {
                cfg.analysis.probe_spacing
            } else {
                fields[0].grid.r_min()
            },
        };
        let mut argmin_track = Vec::new();
        let track_count = 5.min(fields.len());
        for k in 0..track_count {
            let idx = (fields.len() - 1) * (k + 1) / track_count;
            let f = &fields[idx];
            let probe = analysis::reconstruct_u(f, traj, &spec);
            if let Some((xmin, _)) = probe.argmin() {
                let pos = traj.position(f.time);
                let pos2 = [pos[0], pos.get(1).copied().unwrap_or(0.0)];
                let d = ((xmin[0] - pos2[0]).powi(2) + (xmin[1] - pos2[1]).powi(2)).sqrt();
                argmin_track.push(ArgminRow {
                    t: f.time,
                    argmin: xmin,
                    curve_position: pos2,
                    distance_in_cells: d / spec.spacing,
                });
            }
        }

        // Plot data: log-log profile and energy trace.
        if cfg.output.write_csv {
            let mut loglog = String::from("ln_r,ln_v,ln_grad\n");
            let grad_rows: std::collections::BTreeMap<u64, f64> = gradient
                .rings
                .iter()
                .map(|&(r, g)| (r.to_bits(), g))
                .collect();
            for (j, &r) in last.grid.r.iter().enumerate() {
                let v = last.ring_average(j);
                if v > 0.0 {
                    let g = grad_rows
                        .get(&r.to_bits())
                        .map(|g| g.ln().to_string())
                        .unwrap_or_default();
                    loglog.push_str(&format!("{:.17e},{:.17e},{g}\n", r.ln(), v.ln()));
                }
            }
            write_text(
                &outdir.join("csv").join(format!(
                    "loglog_i{}_{}.csv",
                    mrun.index,
                    mrun.side.label()
                )),
                &loglog,
            )?;
            let mut etrace = String::from("t,energy\n");
            for (t, e) in &energy_rows {
                etrace.push_str(&format!("{t:.17e},{e:.17e}\n"));
            }
            write_text(
                &outdir.join("csv").join(format!(
                    "energy_i{}_{}.csv",
                    mrun.index,
                    mrun.side.label()
                )),
                &etrace,
            )?;
        }

        analyses.push(RunAnalysis {
            index: mrun.index,
            side: mrun.side,
            fit_window: window,
            growth_fit,
            gradient,
            continuity,
            energy_rows,
            energy_nonincreasing,
            sandwich,
            argmin_track,
        });
    }
    let report = RunReport { runs: analyses };
    report::write_json(&outdir.join("reports").join("run_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryEntry {
    pub id: String,
    pub description: String,
    pub outcome: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub entries: Vec<SummaryEntry>,
    pub checksums: Vec<(String, String)>,
}

/// Human-readable statement of what a named check verifies.
pub fn describe_check(name: &str) -> String {
    let explicit = match name {
        "ordering_lower" => Some("v-(r,t) <= k' r^λ' (1+r)^{λ-λ'} at every grid sample"),
        "ordering_middle" => Some("k' r^λ' (1+r)^{λ-λ'} <= k r^λ (1+r)^{λ'-λ} at every radius"),
        "ordering_upper" => Some("k r^λ (1+r)^{λ'-λ} <= v+(r,t) at every grid sample"),
        "matching_super_sign" => Some("∂r v+_in(ρ(t),t) >= ∂r v+_out(ρ(t),t): the glued supersolution keeps a concave kink"),
        "matching_super_closed_form" => Some("the supersolution derivative gap equals K(1+At)^{θ(λ'-1)} λ²/(λ+λ') to 1e-10 relative"),
        "matching_sub_sign" => Some("∂r v-_in(σ,t) <= ∂r v-_out(σ,t): the glued subsolution keeps a convex kink"),
        "matching_sub_closed_form" => Some("the subsolution derivative gap equals -(λσ/2) K⁻¹(1+At)^{-1/(p-2)}(σ-δ)⁻¹σ^{λ'-1} to 1e-10 relative"),
        "residual_super_inner" => Some("∂t v+ - Δp v+ - C_ξ(1+At)⁻¹|∂r v+| >= margin on the inner piece (worst-case drift)"),
        "residual_super_outer" => Some("∂t v+ - Δp v+ - C_ξ(1+At)⁻¹|∂r v+| >= margin on the outer piece (worst-case drift)"),
        "residual_sub_inner" => Some("∂t v- - Δp v- + C_ξ(1+At)⁻¹|∂r v-| <= -margin on the inner piece (worst-case drift)"),
        "residual_sub_outer" => Some("∂t v- - Δp v- + C_ξ(1+At)⁻¹|∂r v-| <= -margin on the outer piece (worst-case drift)"),
        _ => None,
    };
    if let Some(d) = explicit {
        return d.to_string();
    }
    if name.starts_with("sub_barrier_below_run") {
        return "v- <= v_i^- on the probe nodes for the whole run".into();
    }
    if name.starts_with("run_") && name.contains("below_super_barrier") {
        return "v_i^+ <= v+ on the probe nodes for the whole run".into();
    }
    if name.starts_with("sub_below_super_on") {
        return "v_i^- <= v_i^+ on the shared grid for the whole run".into();
    }
    if name.starts_with("sub_monotone") {
        return "v_i^- <= v_j^- (i < j) on the overlap".into();
    }
    if name.starts_with("super_monotone") {
        return "v_j^+ <= v_i^+ (i < j) on the overlap".into();
    }
    if name == "sub_barrier_vs_run" {
        return "max(v- − v_i^-) over nodes and times (positive = violation)".into();
    }
    if name == "run_vs_super_barrier" {
        return "max(v_i^+ − v+) over nodes and times (positive = violation)".into();
    }
    format!("check `{name}`")
}

/// Aggregates every report in the output tree into one summary document
/// with artifact checksums.
pub fn cmd_report(outdir: &Path) -> Result<Summary, PipelineError> {
    let mut entries = Vec::new();
    let cert_path = outdir.join("reports").join("certification.json");
    if cert_path.exists() {
        let report: CertificationReport = serde_json::from_str(
            &fs::read_to_string(&cert_path).map_err(|e| PipelineError::Numerical(e.to_string()))?,
        )
        .map_err(|e| PipelineError::Numerical(e.to_string()))?;
        for c in &report.checks {
            entries.push(SummaryEntry {
                id: format!("certification/{}", c.name),
                description: describe_check(&c.name),
                outcome: format!(
                    "{} (margin {:.3e} at r={:.3e}, t={:.3e})",
                    if c.pass { "pass" } else { "FAIL" },
                    c.margin,
                    c.worst_r,
                    c.worst_t
                ),
            });
        }
    }
    let nested_path = outdir.join("reports").join("nested.json");
    if nested_path.exists() {
        let nested: NestedReport = serde_json::from_str(
            &fs::read_to_string(&nested_path).map_err(|e| PipelineError::Numerical(e.to_string()))?,
        )
        .map_err(|e| PipelineError::Numerical(e.to_string()))?;
        for c in &nested.checks {
            entries.push(SummaryEntry {
                id: format!("nested/{}", c.name),
                description: describe_check(&c.name),
                outcome: format!(
                    "worst gap {:.3e} at r={:.3e}, t={:.3e}",
                    c.worst_gap, c.worst_r, c.worst_t
                ),
            });
        }
    }
    let rr_path = outdir.join("reports").join("run_report.json");
    if rr_path.exists() {
        let rr: RunReport = serde_json::from_str(
            &fs::read_to_string(&rr_path).map_err(|e| PipelineError::Numerical(e.to_string()))?,
        )
        .map_err(|e| PipelineError::Numerical(e.to_string()))?;
        for run in &rr.runs {
            let tag = format!("i{}_{}", run.index, run.side.label());
            entries.push(SummaryEntry {
                id: format!("analysis/{tag}/growth_exponent"),
                description: "log-log slope of the near-singularity profile; the sandwich pins it between λ and λ'".into(),
                outcome: format!("slope {:.4} over window [{:.3e}, {:.3e}]", run.growth_fit.slope, run.fit_window.0, run.fit_window.1),
            });
            entries.push(SummaryEntry {
                id: format!("analysis/{tag}/gradient_blowup"),
                description: "|∇v| grows toward the singularity: negative log-log slope with monotone ring averages".into(),
                outcome: format!(
                    "slope {:.4}, monotone divergence {}",
                    run.gradient.slope, run.gradient.monotone_divergence
                ),
            });
            entries.push(SummaryEntry {
                id: format!("analysis/{tag}/continuity_t0"),
                description: "max |v(·,t) − v0| over interior probes shrinks as t → 0".into(),
                outcome: format!("{} ({} rows)", if run.continuity.pass { "pass" } else { "FAIL" }, run.continuity.rows.len()),
            });
            entries.push(SummaryEntry {
                id: format!("analysis/{tag}/sandwich"),
                description: describe_check(&run.sandwich.name),
                outcome: format!("worst gap {:.3e}", run.sandwich.worst_gap),
            });
        }
    }

    let mut files = Vec::new();
    collect_files(outdir, outdir, &mut files).map_err(|e| PipelineError::Numerical(e.to_string()))?;
    files.sort();
    let mut checksums = Vec::new();
    for rel in files {
        if rel == "reports/summary.json" {
            continue;
        }
        let hex = report::sha256_hex(&outdir.join(&rel))?;
        checksums.push((rel, hex));
    }
    let summary = Summary { entries, checksums };
    report::write_json(&outdir.join("reports").join("summary.json"), &summary)?;
    Ok(summary)
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(
                path.strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/"),
            );
        }
    }
    Ok(())
}
