//! The four subcommands. Each writes its outputs atomically plus a
//! `manifest.json` holding the fully resolved config.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use phasesync::io::{
    read_tensor, write_json, write_labels_csv, write_matrix_csv, write_phase_csv, write_summary_csv,
    write_tensor_bin, write_tensor_csv, SubjectManifest,
};
use phasesync::oracle::{perturbed_toroidal, run_oracle_suite, run_oracle_suite_with, OracleOptions};
use phasesync::psmetrics::{pairwise_tensor, PairSource};
use phasesync::signals::{band_limit, phases_of};
use phasesync::simharness::run_simulation;
use phasesync::states::{run_state_pipeline, StateConfig};
use phasesync::{Metric, PsTensor, WindowSpec};
use serde::Serialize;

use crate::config::{FileConfig, TensorFormat};
use crate::CliError;

/// Written next to tensors so that state matrices can carry region names.
pub const REGIONS_FILE: &str = "regions.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct OutputEntry {
    file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    metric: Option<Metric>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    subject: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exceeds_range: Option<bool>,
}

impl OutputEntry {
    fn file(file: String) -> Self {
        Self { file, metric: None, window: None, subject: None, exceeds_range: None }
    }
}

#[derive(Debug, Serialize)]
struct RunManifest<'a, X: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a FileConfig,
    seed: Option<u64>,
    wall_time_s: f64,
    /// Windows end at and include their labelled sample.
    window_alignment: &'static str,
    outputs: Vec<OutputEntry>,
    #[serde(flatten)]
    extra: X,
}

fn write_manifest<X: Serialize>(
    out: &Path,
    command: &'static str,
    cfg: &FileConfig,
    started: Instant,
    outputs: Vec<OutputEntry>,
    extra: X,
) -> Result<(), CliError> {
    let m = RunManifest {
        tool: "phasesync",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config: cfg,
        seed: cfg.seed,
        wall_time_s: started.elapsed().as_secs_f64(),
        window_alignment: "trailing, inclusive of the labelled sample",
        outputs,
        extra,
    };
    write_json(&out.join(MANIFEST_FILE), &m)?;
    Ok(())
}

fn cell_name(metric: Metric, window: Option<WindowSpec>) -> String {
    match window {
        Some(w) => format!("{}_w{}", metric.name(), w.length),
        None => metric.name().to_string(),
    }
}

pub fn simulate(cfg: &FileConfig, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let sim = &cfg.simulate;
    sim.validate()?;
    let summary = run_simulation(sim)?;
    let filter = if sim.filtering { "on" } else { "off" };
    let mut outputs = Vec::new();
    for cell in &summary.cells {
        let window = cell.window.map(|length| WindowSpec { length });
        let file = format!("{}_filter-{filter}_{}.csv", sim.sim.name(), cell_name(cell.metric, window));
        write_summary_csv(&out.join(&file), cell)?;
        outputs.push(OutputEntry {
            metric: Some(cell.metric),
            window: cell.window,
            exceeds_range: Some(cell.exceeds_range),
            ..OutputEntry::file(file)
        });
    }
    #[derive(Serialize)]
    struct Extra {
        replicate_failures: usize,
    }
    let n = outputs.len();
    write_manifest(out, "simulate", cfg, started, outputs, Extra { replicate_failures: summary.replicate_failures })?;
    eprintln!("simulate: wrote {n} summaries to {}", out.display());
    Ok(())
}

fn check_subject_ids(manifest: &SubjectManifest) -> Result<(), CliError> {
    let mut seen = BTreeSet::new();
    for s in &manifest.subjects {
        let ok = !s.id.is_empty() && !s.id.contains(['/', '\\']) && s.id != "." && s.id != "..";
        if !ok {
            return Err(CliError::input(format!("subject id '{}' cannot be used as a file name", s.id)));
        }
        if !seen.insert(&s.id) {
            return Err(CliError::input(format!("duplicate subject id '{}'", s.id)));
        }
    }
    Ok(())
}

pub fn analyze(cfg: &FileConfig, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let a = &cfg.analyze;
    let manifest_path = a
        .manifest
        .as_ref()
        .ok_or_else(|| CliError::input("analyze needs a subject manifest (--manifest)"))?;
    let manifest = SubjectManifest::load(manifest_path)?;
    check_subject_ids(&manifest)?;
    a.band.validate(manifest.tr_seconds)?;
    if a.metrics.is_empty() {
        return Err(CliError::input("no metrics selected"));
    }
    let windows = a.windows.iter().map(|&l| WindowSpec::new(l)).collect::<phasesync::Result<Vec<_>>>()?;
    if windows.is_empty() && a.metrics.iter().any(|m| m.is_windowed()) {
        return Err(CliError::input("windowed metrics need at least one window length"));
    }
    let datasets = manifest.read_all()?;
    let n_samples = datasets[0].n_samples();
    if let Some(w) = windows.iter().find(|w| w.length > n_samples) {
        return Err(CliError::input(format!("window {} exceeds the {n_samples}-sample recordings", w.length)));
    }

    let mut cells: Vec<(Metric, Option<WindowSpec>)> = Vec::new();
    for &m in &a.metrics {
        if m.is_windowed() {
            cells.extend(windows.iter().map(|&w| (m, Some(w))));
        } else {
            cells.push((m, None));
        }
    }
    let labels = datasets[0].region_labels().to_vec();
    for &(m, w) in &cells {
        let dir = out.join(cell_name(m, w));
        fs::create_dir_all(&dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
        write_json(&dir.join(REGIONS_FILE), &labels)?;
    }
    if a.write_phases {
        let dir = out.join("phases");
        fs::create_dir_all(&dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    }

    let mut outputs = Vec::new();
    for (entry, data) in manifest.subjects.iter().zip(&datasets) {
        let filtered = band_limit(data, &a.band)?;
        let phases = phases_of(&filtered, data.tr_seconds())?;
        if a.write_phases {
            let file = format!("phases/{}.csv", entry.id);
            write_phase_csv(&out.join(&file), &phases, Some(data.region_labels()))?;
            outputs.push(OutputEntry { subject: Some(entry.id.clone()), ..OutputEntry::file(file) });
        }
        for &(m, w) in &cells {
            let source = if m.uses_phases() {
                PairSource::Phases(&phases)
            } else {
                PairSource::Signals { rows: &filtered, tr_seconds: data.tr_seconds() }
            };
            let tensor = pairwise_tensor(source, m, w)?;
            let stem = format!("{}/{}", cell_name(m, w), entry.id);
            let mut files = Vec::new();
            if matches!(a.format, TensorFormat::Csv | TensorFormat::Both) {
                write_tensor_csv(&out.join(format!("{stem}.csv")), &tensor)?;
                files.push(format!("{stem}.csv"));
            }
            if matches!(a.format, TensorFormat::Bin | TensorFormat::Both) {
                write_tensor_bin(&out.join(format!("{stem}.bin")), &tensor)?;
                files.push(format!("{stem}.bin"));
            }
            outputs.extend(files.into_iter().map(|f| OutputEntry {
                metric: Some(m),
                window: w.map(|w| w.length),
                subject: Some(entry.id.clone()),
                ..OutputEntry::file(f)
            }));
        }
    }
    #[derive(Serialize)]
    struct Extra<'a> {
        subjects: Vec<&'a str>,
        n_regions: usize,
        n_samples: usize,
        tr_seconds: f64,
    }
    let extra = Extra {
        subjects: manifest.subjects.iter().map(|s| s.id.as_str()).collect(),
        n_regions: datasets[0].n_regions(),
        n_samples,
        tr_seconds: manifest.tr_seconds,
    };
    let n = outputs.len();
    write_manifest(out, "analyze", cfg, started, outputs, extra)?;
    eprintln!("analyze: {} subjects, wrote {n} files to {}", datasets.len(), out.display());
    Ok(())
}

fn tensor_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv" || x == "bin"))
        .collect();
    files.sort();
    // The same subject may be present in both formats; keep the CSV.
    files.dedup_by(|b, a| a.file_stem() == b.file_stem());
    if files.is_empty() {
        return Err(CliError::input(format!("no tensor files (.csv or .bin) in {}", dir.display())));
    }
    Ok(files)
}

#[derive(Serialize)]
struct SweepRow {
    k: usize,
    /// `None` when two centroids coincide (infinite index).
    dbi: Option<f64>,
    dbi_infinite: bool,
    inertia: f64,
}

pub fn states(cfg: &FileConfig, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let s = &cfg.states;
    let input = s.input.as_ref().ok_or_else(|| CliError::input("states needs a tensor directory (--input)"))?;
    let files = tensor_files(input)?;
    let mut subjects = Vec::with_capacity(files.len());
    let mut tensors: Vec<PsTensor> = Vec::with_capacity(files.len());
    for f in &files {
        let t = read_tensor(f)?;
        if let Some(first) = tensors.first() {
            let same = (t.n_regions, t.metric, t.window) == (first.n_regions, first.metric, first.window);
            if !same {
                return Err(CliError::input(format!(
                    "{}: {} regions, {} {:?} does not match {}: {} regions, {} {:?}",
                    f.display(),
                    t.n_regions,
                    t.metric,
                    t.window.map(|w| w.length),
                    files[0].display(),
                    first.n_regions,
                    first.metric,
                    first.window.map(|w| w.length)
                )));
            }
        }
        subjects.push(f.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default());
        tensors.push(t);
    }
    let state_cfg = StateConfig {
        k_min: s.k_min,
        k_max: s.k_max,
        forced_k: (!s.select_by_dbi).then_some(s.k),
        restarts: s.restarts,
        init: s.init,
        seed: s.seed,
    };
    let result = run_state_pipeline(&tensors, &state_cfg)?;
    let n_regions = tensors[0].n_regions;
    let labels: Vec<String> = match fs::read_to_string(input.join(REGIONS_FILE)) {
        Ok(text) => serde_json::from_str::<Vec<String>>(&text)
            .ok()
            .filter(|l| l.len() == n_regions)
            .ok_or_else(|| CliError::input(format!("{}: bad region list", input.join(REGIONS_FILE).display())))?,
        Err(_) => phasesync::io::region_labels_or_default(None, n_regions),
    };

    let mut outputs = Vec::new();
    for (k, m) in result.centroid_matrices.iter().enumerate() {
        let file = format!("state_{}.csv", k + 1);
        write_matrix_csv(&out.join(&file), m, &labels)?;
        outputs.push(OutputEntry::file(file));
    }
    let group = &result.group;
    let label_rows: Vec<(String, usize, usize)> = result
        .result
        .labels
        .iter()
        .enumerate()
        .map(|(c, &state)| {
            let o = group.origin(c);
            (subjects[o.subject].clone(), tensors[o.subject].start + o.time_index, state + 1)
        })
        .collect();
    write_labels_csv(&out.join("labels.csv"), &label_rows)?;
    outputs.push(OutputEntry::file("labels.csv".into()));

    #[derive(Serialize)]
    struct Report<'a> {
        metric: Metric,
        window: Option<usize>,
        k: usize,
        selected_by: &'static str,
        sweep: Vec<SweepRow>,
        inertia: f64,
        restarts: usize,
        best_restart: usize,
        seed: u64,
        init: phasesync::states::Init,
        subjects: &'a [String],
        columns_per_subject: Vec<usize>,
        dropped_columns: Vec<(String, usize)>,
    }
    let report = Report {
        metric: tensors[0].metric,
        window: tensors[0].window.map(|w| w.length),
        k: result.result.k,
        selected_by: if s.select_by_dbi { "min_dbi" } else { "forced" },
        sweep: result
            .sweep
            .iter()
            .map(|e| SweepRow {
                k: e.k,
                dbi: e.dbi.is_finite().then_some(e.dbi),
                dbi_infinite: e.dbi.is_infinite(),
                inertia: e.inertia,
            })
            .collect(),
        inertia: result.result.inertia,
        restarts: result.result.restarts_used,
        best_restart: result.result.best_restart,
        seed: s.seed,
        init: s.init,
        subjects: &subjects,
        columns_per_subject: group.subject_boundaries.windows(2).map(|w| w[1] - w[0]).collect(),
        dropped_columns: group
            .dropped
            .iter()
            .map(|o| (subjects[o.subject].clone(), tensors[o.subject].start + o.time_index))
            .collect(),
    };
    write_json(&out.join("report.json"), &report)?;
    outputs.push(OutputEntry::file("report.json".into()));
    write_manifest(out, "states", cfg, started, outputs, ())?;
    eprintln!(
        "states: k = {} over {} columns from {} subjects; wrote {}",
        result.result.k,
        group.n_columns(),
        subjects.len(),
        out.display()
    );
    Ok(())
}

pub fn oracle_check(seed: Option<u64>, cases: usize, perturb_toroidal: bool, out: Option<&Path>) -> Result<(), CliError> {
    let mut options = OracleOptions { windows: cases, ..OracleOptions::default() };
    if let Some(s) = seed {
        options.seed = s;
    }
    let report = if perturb_toroidal {
        run_oracle_suite_with(perturbed_toroidal, &options)
    } else {
        run_oracle_suite(&options)
    };
    for c in &report.checks {
        let window = c.window.map_or(String::from("-"), |w| w.to_string());
        println!(
            "{} {:<16} window={:<3} cases={:<7} max_dev={:.3e} tol={:.1e}{}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            window,
            c.cases,
            c.max_deviation,
            c.tolerance,
            if c.detail.is_empty() { String::new() } else { format!("  {}", c.detail) }
        );
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
        write_json(&dir.join("oracle_report.json"), &report)?;
    }
    let failed: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| {
            format!(
                "{} (window {}, max deviation {:.3e})",
                c.name,
                c.window.map_or(String::from("-"), |w| w.to_string()),
                c.max_deviation
            )
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Compute(format!("oracle mismatch: {}", failed.join("; "))))
    }
}
