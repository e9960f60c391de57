//! Command-line front end for the `bellopt` library: run optimization
//! campaigns, print analytical bounds, evaluate stored interferometers, and
//! render comparison reports.
//!
//! Persistence formats are owned here. A campaign writes two artifacts next
//! to the configured output stem:
//!
//! * `<stem>.runs.jsonl` — one JSON run record per line, streamed as runs
//!   finish, so an interrupted campaign keeps everything already done;
//! * `<stem>.summary.json` — the aggregate (histogram, best run) plus a
//!   `timing` field that is excluded from determinism comparisons.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 resource
//! refusal (the compiler or bounds engine declined a too-large problem),
//! 4 I/O failure.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use bellopt::bounds::{self, BoundValue};
use bellopt::compiler::{self, EvaluationPlan};
use bellopt::evolve::{
    circuit_to_unitary, event_count, Circuit, UnitaryMatrix, UNITARITY_TOLERANCE,
};
use bellopt::fock::{AncillaSpec, BellState};
use bellopt::objective::{
    pattern, snap_to_rational, success_probability, ProbabilityTable,
};
use bellopt::optimizer::{
    campaign_with_sink, local_optimize, CampaignSummary, OptimizerConfig, RunRecord,
};

#[derive(Parser)]
#[command(
    name = "bellopt",
    version,
    about = "Simulate and optimize ancilla-assisted linear-optical Bell measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multistart optimization campaign described by a JSON config.
    Optimize {
        /// Campaign configuration file (JSON).
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's run count.
        #[arg(long)]
        runs: Option<usize>,
        /// Override the worker count (0 = one per CPU).
        #[arg(long)]
        parallelism: Option<usize>,
        /// Override the relative-zero probability threshold.
        #[arg(long = "eps-zero")]
        eps_zero: Option<f64>,
        /// Override the output path stem.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the analytical success-probability bounds for an ancilla.
    Bounds {
        /// Ancilla: shorthand (`vacuum`, `single_photons(6)`, `bell_pairs(2)`,
        /// `ghz(4)`, `w3`, `grice(2)`, `evl(1)`), inline JSON, or `@file.json`.
        ancilla: String,
        /// Polarization preprocessing for the generic bound: `none`, `best`,
        /// `published`, or explicit quarter-turn pair indices like `0,2`.
        #[arg(long, default_value = "published")]
        rotate: String,
    },
    /// Evaluate a stored unitary, circuit, or run record for an ancilla.
    Verify {
        /// Unitary (`{n, re, im}`), circuit (`{elements: [...]}`), or
        /// optimizer run record (JSON file).
        input: PathBuf,
        /// Ancilla the interferometer is meant for (same forms as `bounds`).
        #[arg(long)]
        ancilla: String,
        /// Mode count for circuit inputs (default: smallest fitting the ancilla).
        #[arg(long)]
        modes: Option<usize>,
        /// Relative-zero probability threshold.
        #[arg(long = "eps-zero")]
        eps_zero: Option<f64>,
        /// Feed the unitary to the local optimizer as a start point.
        #[arg(long)]
        polish: bool,
        /// Seed recorded in the polished run record.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the polished run record here (JSON, requires --polish).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare finished campaigns against literature values and bounds.
    Report {
        /// Campaign artifacts: output stems, `*.summary.json`, or
        /// `*.runs.jsonl` paths; each campaign becomes one row.
        files: Vec<PathBuf>,
        /// Also write the rows as a JSON array.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Count detection events and detector-symmetry classes.
    Events {
        /// Interferometer mode count.
        #[arg(long)]
        modes: usize,
        /// Total photon number.
        #[arg(long)]
        photons: u32,
    },
}

/// One campaign: which ancilla to search over, how hard, and where the
/// artifacts go. Unknown keys are rejected.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CampaignConfig {
    ancilla: AncillaSpec,
    n: usize,
    runs: usize,
    /// Master seed; per-run seeds are derived from it, so this field alone
    /// pins the whole campaign.
    seed: u64,
    /// Worker threads (0 = one per CPU). Does not affect the results.
    #[serde(default)]
    parallelism: usize,
    #[serde(default)]
    optimizer: OptimizerConfig,
    /// Path stem for `<stem>.runs.jsonl` and `<stem>.summary.json`.
    output: PathBuf,
}

/// On-disk shape of `<stem>.summary.json`. Everything except `timing` is a
/// pure function of the config.
#[derive(Serialize, Deserialize)]
struct SummaryDocument {
    campaign: CampaignSummary,
    timing: Timing,
}

#[derive(Serialize, Deserialize)]
struct Timing {
    unix_ms: u64,
    elapsed_secs: f64,
}

/// One line of the comparison report, also serialized with `--output`.
#[derive(Serialize)]
struct ReportRow {
    ancilla: String,
    n: usize,
    k: u32,
    runs: usize,
    converged_runs: usize,
    best_success_probability: f64,
    /// Small-denominator rational matching the best value to 1e-6, if any.
    best_rational: Option<String>,
    /// Best explicitly known value from the literature for this ancilla.
    literature_value: Option<String>,
    /// Polarization-preserving upper bound under the published preprocessing.
    generic_bound: Option<f64>,
    generic_bound_exact: Option<String>,
    /// Upper bound for any ancilla with this photon count.
    photon_bound: f64,
    photon_bound_exact: Option<String>,
    /// Names of bounds the best value exceeds by more than 1e-7.
    bound_violations: Vec<String>,
    /// Record lines that failed to parse and were skipped.
    skipped_record_lines: usize,
}

fn main() -> ExitCode {
    restore_sigpipe();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Lets a closed pipe terminate the process like any other Unix tool instead
/// of panicking mid-print (Rust ignores SIGPIPE by default).
#[cfg(unix)]
fn restore_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn restore_sigpipe() {}

/// Maps the failure to the documented exit codes by walking the cause chain:
/// resource refusals → 3, filesystem trouble → 4, everything that boils down
/// to bad configuration or malformed input → 2.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<bellopt::Error>() {
            return match e {
                bellopt::Error::ResourceCeiling { .. } | bellopt::Error::EnumerationGuard(_) => 3,
                bellopt::Error::Io(_) => 4,
                bellopt::Error::Json(j) if j.classify() == serde_json::error::Category::Io => 4,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
        if let Some(j) = cause.downcast_ref::<serde_json::Error>() {
            return if j.classify() == serde_json::error::Category::Io { 4 } else { 2 };
        }
    }
    2
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Optimize { config, seed, runs, parallelism, eps_zero, output } => {
            cmd_optimize(&config, seed, runs, parallelism, eps_zero, output)
        }
        Command::Bounds { ancilla, rotate } => cmd_bounds(&ancilla, &rotate),
        Command::Verify { input, ancilla, modes, eps_zero, polish, seed, output } => {
            cmd_verify(&input, &ancilla, modes, eps_zero, polish, seed, output.as_deref())
        }
        Command::Report { files, output } => cmd_report(&files, output.as_deref()),
        Command::Events { modes, photons } => cmd_events(modes, photons),
    }
}

// ---------------------------------------------------------------------------
// optimize

fn cmd_optimize(
    config_path: &Path,
    seed: Option<u64>,
    runs: Option<usize>,
    parallelism: Option<usize>,
    eps_zero: Option<f64>,
    output: Option<PathBuf>,
) -> Result<()> {
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("reading campaign config {}", config_path.display()))?;
    let mut config: CampaignConfig = serde_json::from_str(&text)
        .with_context(|| format!("malformed campaign config {}", config_path.display()))?;

    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(runs) = runs {
        config.runs = runs;
    }
    if let Some(parallelism) = parallelism {
        config.parallelism = parallelism;
    }
    if let Some(eps_zero) = eps_zero {
        config.optimizer.eps_zero = eps_zero;
    }
    if let Some(output) = output {
        config.output = output;
    }
    // The top-level seed is authoritative; the nested optimizer seed is only
    // meaningful for direct `local_optimize` calls.
    config.optimizer.seed = config.seed;
    config.ancilla.validate().context("invalid ancilla in campaign config")?;

    let records_path = sibling_with_suffix(&config.output, ".runs.jsonl")?;
    let summary_path = sibling_with_suffix(&config.output, ".summary.json")?;
    if let Some(dir) = config.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
    }
    let records_file = fs::File::create(&records_path)
        .with_context(|| format!("creating {}", records_path.display()))?;
    let mut records_file = BufWriter::new(records_file);

    let clock = Instant::now();
    let unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let outcome = campaign_with_sink(
        &config.ancilla,
        config.n,
        config.runs,
        &config.optimizer,
        config.parallelism,
        |record| {
            let line = serde_json::to_string(record).map_err(bellopt::Error::Json)?;
            writeln!(records_file, "{line}").map_err(bellopt::Error::Io)?;
            Ok(())
        },
    );
    let (summary, _records) = match outcome {
        Ok(result) => result,
        Err(err) => {
            drop(records_file);
            let _ = fs::remove_file(&records_path);
            return Err(err).context("campaign failed");
        }
    };
    records_file.flush().context("flushing run records")?;

    let document = SummaryDocument {
        campaign: summary,
        timing: Timing { unix_ms, elapsed_secs: clock.elapsed().as_secs_f64() },
    };
    let mut body = serde_json::to_string_pretty(&document).context("encoding summary")?;
    body.push('\n');
    fs::write(&summary_path, body)
        .with_context(|| format!("writing {}", summary_path.display()))?;

    let summary = &document.campaign;
    println!(
        "campaign: {} ancilla, n = {}, {} runs ({} converged)",
        summary.ancilla.label(),
        summary.n,
        summary.runs,
        summary.converged_runs
    );
    println!(
        "best: P_succ = {:.9}{} (run {}, seed {})",
        summary.best.success_probability,
        snapped_hint(summary.best.success_probability),
        summary.best.run_index,
        summary.best.seed
    );
    println!("records: {}", records_path.display());
    println!("summary: {}", summary_path.display());
    Ok(())
}

/// `stem` → `stem<suffix>` in the same directory.
fn sibling_with_suffix(stem: &Path, suffix: &str) -> Result<PathBuf> {
    let Some(name) = stem.file_name() else {
        bail!("output stem {} has no file name component", stem.display());
    };
    let mut name = name.to_os_string();
    name.push(suffix);
    Ok(stem.with_file_name(name))
}

/// ` = p/q` when a small rational matches to 1e-6, empty otherwise.
fn snapped_hint(value: f64) -> String {
    snap_to_rational(value, 1024, 1e-6).map_or_else(String::new, |q| format!(" = {q}"))
}

// ---------------------------------------------------------------------------
// bounds

fn cmd_bounds(ancilla: &str, rotate: &str) -> Result<()> {
    let spec = parse_ancilla(ancilla)?;
    let k = spec.photons();
    let (generic, description) = generic_bound_under(&spec, rotate)?;
    let photon = bounds::photon_number_bound(k);

    println!("ancilla {}: k = {k} photons over {} modes", spec.label(), spec.ancilla_modes());
    println!(
        "  polarization-preserving bound ({description}): {}",
        render_bound(&generic)
    );
    println!(
        "  photon-number bound (any {k}-photon ancilla): {}",
        render_bound(&photon)
    );
    Ok(())
}

/// The generic polarization-preserving bound under the requested
/// preprocessing, plus a human description of that preprocessing.
fn generic_bound_under(spec: &AncillaSpec, rotate: &str) -> Result<(BoundValue, String)> {
    match rotate {
        "none" => {
            let profile = bounds::polarization_profile(spec, &BTreeSet::new())?;
            Ok((bounds::generic_upper_bound(&profile), "as prepared".into()))
        }
        "best" => {
            let (bound, subset) = bounds::best_rotated_bound(spec)?;
            let description = if subset.is_empty() {
                "best rotation: none".to_string()
            } else {
                format!("best rotation: quarter-turn on pairs {subset:?}")
            };
            Ok((bound, description))
        }
        "published" => {
            let bound = bounds::reference_upper_bound(spec).context(
                "no published preprocessing for this ancilla; try --rotate best or none",
            )?;
            Ok((bound, "published preprocessing".into()))
        }
        list => {
            let pairs = parse_pair_list(list)?;
            let profile = bounds::polarization_profile(spec, &pairs)?;
            Ok((bounds::generic_upper_bound(&profile), format!("quarter-turn on pairs {pairs:?}")))
        }
    }
}

fn parse_pair_list(list: &str) -> Result<BTreeSet<usize>> {
    list.split(',')
        .map(|item| {
            item.trim().parse::<usize>().with_context(|| {
                format!(
                    "--rotate expects none, best, published, or comma-separated pair \
                     indices; got `{list}`"
                )
            })
        })
        .collect()
}

fn render_bound(bound: &BoundValue) -> String {
    match bound.exact() {
        Some(exact) => format!("{exact} = {:.9}", bound.value()),
        None => format!("{:.9}", bound.value()),
    }
}

// ---------------------------------------------------------------------------
// verify

fn cmd_verify(
    input: &Path,
    ancilla: &str,
    modes: Option<usize>,
    eps_zero: Option<f64>,
    polish: bool,
    seed: u64,
    output: Option<&Path>,
) -> Result<()> {
    let spec = parse_ancilla(ancilla)?;
    let text = fs::read_to_string(input)
        .with_context(|| format!("reading {}", input.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", input.display()))?;

    let mut stored_probability = None;
    let unitary: UnitaryMatrix = if value.get("elements").is_some() {
        let circuit: Circuit = serde_json::from_value(value)
            .with_context(|| format!("parsing circuit {}", input.display()))?;
        let n = modes.unwrap_or_else(|| spec.min_modes());
        circuit_to_unitary(&circuit, n).context("building the circuit unitary")?
    } else if let Some(embedded) = value.get("final_unitary") {
        stored_probability =
            value.get("success_probability").and_then(serde_json::Value::as_f64);
        serde_json::from_value(embedded.clone())
            .with_context(|| format!("parsing run record {}", input.display()))?
    } else {
        serde_json::from_value(value)
            .with_context(|| format!("parsing unitary {}", input.display()))?
    };
    if let Some(modes) = modes {
        if modes != unitary.n() {
            bail!("--modes {} does not match the {}-mode input", modes, unitary.n());
        }
    }
    unitary.validate(UNITARITY_TOLERANCE).context("input matrix")?;

    let plan = compiler::compile(&spec, unitary.n())?;
    let table = compiler::evaluate(&plan, &unitary)?;
    let table = match eps_zero {
        Some(eps) => table.with_eps_zero(eps),
        None => table,
    };
    println!(
        "input: {} modes, ancilla {}, {} detection events",
        unitary.n(),
        spec.label(),
        plan.n_events()
    );
    print_evaluation(&plan, &table);
    if let Some(stored) = stored_probability {
        let measured = success_probability(&table);
        println!(
            "stored record claims P_succ = {stored:.9} (difference {:.3e})",
            (measured - stored).abs()
        );
    }

    if polish {
        let mut cfg = OptimizerConfig { seed, ..OptimizerConfig::default() };
        if let Some(eps) = eps_zero {
            cfg.eps_zero = eps;
        }
        let before = success_probability(&table);
        let record = local_optimize(&plan, &unitary, &cfg)?;
        println!(
            "polish: {} after {} iterations ({:.2}s)",
            if record.converged { "converged" } else { "hit the iteration cap" },
            record.iterations,
            record.wall_time_secs
        );
        println!(
            "  P_succ {before:.9} -> {:.9}{}, f = {:.9}",
            record.success_probability,
            snapped_hint(record.success_probability),
            record.final_f
        );
        if let Some(path) = output {
            let mut body = serde_json::to_string_pretty(&record).context("encoding run record")?;
            body.push('\n');
            fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
            println!("  polished record: {}", path.display());
        }
    } else if output.is_some() {
        bail!("--output is only meaningful together with --polish");
    }
    Ok(())
}

/// Prints success probability, per-state pattern, and the discriminating
/// events of an evaluated table.
fn print_evaluation(plan: &EvaluationPlan, table: &ProbabilityTable) {
    let p = success_probability(table);
    println!("success probability: {p:.9}{}", snapped_hint(p));
    let pattern = pattern(table).values();
    let labels: Vec<String> = BellState::ALL
        .iter()
        .map(|b| format!("{} {:.9}", b.label(), pattern[b.index()]))
        .collect();
    println!("pattern: {}", labels.join(", "));

    let discriminating: Vec<(usize, BellState)> = (0..table.n_events())
        .filter_map(|event| table.discriminated_state(event).map(|bell| (event, bell)))
        .collect();
    println!("discriminating events: {}", discriminating.len());
    const LISTING_CAP: usize = 80;
    for &(event, bell) in discriminating.iter().take(LISTING_CAP) {
        let occ = plan.events()[event]
            .counts()
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(" ");
        println!("  [{occ}] -> {}  p = {:.9}", bell.label(), table.probability(bell, event));
    }
    if discriminating.len() > LISTING_CAP {
        println!("  ... {} more", discriminating.len() - LISTING_CAP);
    }
}

// ---------------------------------------------------------------------------
// report

fn cmd_report(files: &[PathBuf], output: Option<&Path>) -> Result<()> {
    let mut rows = Vec::new();
    for file in files {
        rows.push(report_row(file)?);
    }
    print_report_table(&rows);
    if let Some(path) = output {
        let mut body = serde_json::to_string_pretty(&rows).context("encoding report rows")?;
        body.push('\n');
        fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn report_row(file: &Path) -> Result<ReportRow> {
    let (summary_path, records_path) = resolve_campaign_paths(file);
    let text = fs::read_to_string(&summary_path)
        .with_context(|| format!("reading {}", summary_path.display()))?;
    let summary: CampaignSummary = match serde_json::from_str::<SummaryDocument>(&text) {
        Ok(document) => document.campaign,
        Err(_) => serde_json::from_str(&text)
            .with_context(|| format!("parsing campaign summary {}", summary_path.display()))?,
    };

    // Prefer recomputing the best value from the record stream: it tolerates
    // truncated or damaged lines, which are skipped and counted.
    let mut best = summary.best.success_probability;
    let mut skipped = 0usize;
    if let Some(records_path) = &records_path {
        let file = fs::File::open(records_path)
            .with_context(|| format!("reading {}", records_path.display()))?;
        let mut best_seen = f64::NEG_INFINITY;
        for line in BufReader::new(file).lines() {
            let line = line.with_context(|| format!("reading {}", records_path.display()))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<RunRecord>(&line) {
                Ok(record) => best_seen = best_seen.max(record.success_probability),
                Err(_) => skipped += 1,
            }
        }
        if skipped > 0 {
            eprintln!(
                "warning: {}: skipped {skipped} corrupt record line(s)",
                records_path.display()
            );
        }
        if best_seen.is_finite() {
            best = best_seen;
        }
    }

    let spec = &summary.ancilla;
    let k = spec.photons();
    let generic = published_generic_bound(spec);
    let photon = bounds::photon_number_bound(k);
    let mut violations = Vec::new();
    if let Some(generic) = &generic {
        if best > generic.value() + 1e-7 {
            violations.push("polarization-preserving bound".to_string());
        }
    }
    if best > photon.value() + 1e-7 {
        violations.push("photon-number bound".to_string());
    }

    Ok(ReportRow {
        ancilla: spec.label(),
        n: summary.n,
        k,
        runs: summary.runs,
        converged_runs: summary.converged_runs,
        best_success_probability: best,
        best_rational: snap_to_rational(best, 1024, 1e-6).map(|q| q.to_string()),
        literature_value: literature_best(spec),
        generic_bound: generic.as_ref().map(BoundValue::value),
        generic_bound_exact: generic.as_ref().and_then(BoundValue::exact),
        photon_bound: photon.value(),
        photon_bound_exact: photon.exact(),
        bound_violations: violations,
        skipped_record_lines: skipped,
    })
}

/// Accepts an output stem, a `*.summary.json`, or a `*.runs.jsonl` path and
/// returns the summary path plus the record stream when it exists.
fn resolve_campaign_paths(file: &Path) -> (PathBuf, Option<PathBuf>) {
    let text = file.to_string_lossy();
    if let Some(stem) = text.strip_suffix(".runs.jsonl") {
        return (PathBuf::from(format!("{stem}.summary.json")), Some(file.to_path_buf()));
    }
    let stem = text.strip_suffix(".summary.json").unwrap_or(&text);
    let records = PathBuf::from(format!("{stem}.runs.jsonl"));
    let records = records.exists().then_some(records);
    (PathBuf::from(format!("{stem}.summary.json")), records)
}

/// The polarization-preserving bound shown in reports: the published
/// preprocessing when the family has one, otherwise the best quarter-turn
/// subset, otherwise the state as prepared.
fn published_generic_bound(spec: &AncillaSpec) -> Option<BoundValue> {
    bounds::reference_upper_bound(spec)
        .ok()
        .or_else(|| bounds::best_rotated_bound(spec).ok().map(|(bound, _)| bound))
        .or_else(|| {
            bounds::polarization_profile(spec, &BTreeSet::new())
                .ok()
                .map(|profile| bounds::generic_upper_bound(&profile))
        })
}

/// Best explicitly known success probability per family, from the published
/// comparison table. Families without an explicit construction return None.
fn literature_best(spec: &AncillaSpec) -> Option<String> {
    match spec {
        AncillaSpec::Vacuum => Some("1/2".into()),
        AncillaSpec::SinglePhotons { k } => match k {
            1 => Some("1/2".into()),
            2 | 3 => Some("5/8".into()),
            4 | 6 => Some("3/4".into()),
            8 => Some("49/64".into()),
            12 => Some("25/32".into()),
            _ => None,
        },
        // Larger pair counts inherit the one-pair scheme (extra modes ignored).
        AncillaSpec::BellPairs { m } if *m >= 1 => Some("3/4".into()),
        AncillaSpec::BellPairs { .. } => None,
        AncillaSpec::Ghz { .. } => Some("3/4".into()),
        AncillaSpec::W3 => Some("7/12".into()),
        AncillaSpec::Grice { .. } => {
            let k = spec.photons();
            Some(format!("{}/{}", k + 1, k + 2))
        }
        AncillaSpec::Evl { .. } => {
            let k = spec.photons();
            Some(format!("{}/{}", k + 2, k + 4))
        }
        AncillaSpec::Custom { .. } => None,
    }
}

fn print_report_table(rows: &[ReportRow]) {
    println!(
        "{:<20} {:>3} {:>3} {:>6} {:>13} {:>9} {:>10} {:>8} {:>8}  flags",
        "ancilla", "n", "k", "runs", "best", "rational", "literature", "generic", "photon"
    );
    for row in rows {
        let flags = if row.bound_violations.is_empty() {
            "-".to_string()
        } else {
            format!("EXCEEDS {}", row.bound_violations.join(", "))
        };
        println!(
            "{:<20} {:>3} {:>3} {:>6} {:>13.9} {:>9} {:>10} {:>8} {:>8}  {}",
            row.ancilla,
            row.n,
            row.k,
            row.runs,
            row.best_success_probability,
            row.best_rational.as_deref().unwrap_or("-"),
            row.literature_value.as_deref().unwrap_or("-"),
            row.generic_bound_exact
                .clone()
                .or_else(|| row.generic_bound.map(|b| format!("{b:.4}")))
                .unwrap_or_else(|| "-".into()),
            row.photon_bound_exact
                .clone()
                .unwrap_or_else(|| format!("{:.4}", row.photon_bound)),
            flags
        );
    }
}

// ---------------------------------------------------------------------------
// events

fn cmd_events(modes: usize, photons: u32) -> Result<()> {
    if modes == 0 {
        bail!("--modes must be at least 1");
    }
    println!("modes = {modes}, photons = {photons}");
    println!("detection events: {}", event_count(modes, photons));
    println!("partition classes: {}", compiler::partition_count(photons));
    Ok(())
}

// ---------------------------------------------------------------------------
// shared input parsing

/// Ancilla argument forms: `@file.json`, inline JSON (`{...}`), or the
/// shorthand matching [`AncillaSpec::label`] (`vacuum`, `single_photons(6)`,
/// `bell_pairs(2)`, `ghz(4)`, `w3`, `grice(2)`, `evl(1)`).
fn parse_ancilla(text: &str) -> Result<AncillaSpec> {
    let trimmed = text.trim();
    let spec: AncillaSpec = if let Some(path) = trimmed.strip_prefix('@') {
        let body =
            fs::read_to_string(path).with_context(|| format!("reading ancilla file {path}"))?;
        serde_json::from_str(&body).with_context(|| format!("parsing ancilla file {path}"))?
    } else if trimmed.starts_with('{') {
        serde_json::from_str(trimmed).context("parsing inline ancilla JSON")?
    } else {
        parse_ancilla_shorthand(trimmed)?
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_ancilla_shorthand(text: &str) -> Result<AncillaSpec> {
    let (name, argument) = match (text.find('('), text.ends_with(')')) {
        (Some(open), true) => (&text[..open], Some(&text[open + 1..text.len() - 1])),
        (None, false) => (text, None),
        _ => bail!("malformed ancilla shorthand `{text}`"),
    };
    let number = |what: &str| -> Result<u32> {
        argument
            .and_then(|a| a.trim().parse::<u32>().ok())
            .with_context(|| format!("`{name}` needs a numeric argument: {name}({what})"))
    };
    let bare = |spec: AncillaSpec| -> Result<AncillaSpec> {
        if argument.is_some() {
            bail!("`{name}` takes no argument");
        }
        Ok(spec)
    };
    match name {
        "vacuum" => bare(AncillaSpec::Vacuum),
        "w3" => bare(AncillaSpec::W3),
        "single_photons" => Ok(AncillaSpec::SinglePhotons { k: number("k")? }),
        "bell_pairs" => Ok(AncillaSpec::BellPairs { m: number("m")? }),
        "ghz" => Ok(AncillaSpec::Ghz { k: number("k")? }),
        "grice" => Ok(AncillaSpec::Grice { iterations: number("iterations")? }),
        "evl" => Ok(AncillaSpec::Evl { iterations: number("iterations")? }),
        other => bail!(
            "unknown ancilla `{other}` (expected vacuum, single_photons(k), bell_pairs(m), \
             ghz(k), w3, grice(iterations), evl(iterations), inline JSON, or @file)"
        ),
    }
}
