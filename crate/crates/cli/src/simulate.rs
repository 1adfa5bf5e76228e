use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;

use probesense_core::pipeline::{run_pipeline, write_reports, PipelineConfig, RunSummary};
use probesense_core::sim::{Scenario, ScenarioFile};

use crate::error::CliError;
use crate::manifest::{Overrides, RunManifest};

pub const DEMO_SCENARIO: &str = include_str!("../scenarios/demo.toml");
pub const DEFAULT_OUT: &str = "probesense-out";

/// Everything `simulate` writes; `--overwrite` only ever removes these.
pub const OUTPUT_ENTRIES: [&str; 7] = [
    "store",
    "replay",
    "scenario.toml",
    "ground_truth.json",
    "accuracy.csv",
    "flows.csv",
    "summary.json",
];

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// TOML run manifest; flags override its keys
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Scenario TOML [default: bundled demo]
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Output directory [default: probesense-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replaces the scenario's seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Replace the outputs of an earlier run in --out
    #[arg(long)]
    pub overwrite: bool,
}

/// Resolved inputs after layering flags over the manifest over defaults.
#[derive(Debug, Clone)]
pub struct SimulatePlan {
    pub scenario: ScenarioFile,
    pub config: PipelineConfig,
    pub out: PathBuf,
    pub overwrite: bool,
}

impl SimulateArgs {
    pub fn plan(&self) -> Result<SimulatePlan, CliError> {
        let manifest = match &self.manifest {
            Some(p) => RunManifest::load(p)?,
            None => RunManifest::default(),
        };
        let mut scenario = match self.scenario.clone().or(manifest.scenario) {
            Some(p) => ScenarioFile::load(&p)?,
            None => ScenarioFile::from_toml(DEMO_SCENARIO)?,
        };
        if let Some(seed) = self.seed.or(manifest.seed) {
            scenario.seed = seed;
        }
        let config = self
            .overrides
            .over(&manifest.overrides)
            .apply(&PipelineConfig::default())?;
        Ok(SimulatePlan {
            scenario,
            config,
            out: self
                .out
                .clone()
                .or(manifest.out)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            overwrite: self.overwrite,
        })
    }
}

/// Makes `out` an empty directory, or refuses.
fn prepare_out(out: &Path, overwrite: bool) -> Result<(), CliError> {
    if !out.exists() {
        return fs::create_dir_all(out)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())));
    }
    if !out.is_dir() {
        return Err(CliError::Validation(format!(
            "{} exists and is not a directory",
            out.display()
        )));
    }
    let entries: Vec<PathBuf> = fs::read_dir(out)
        .and_then(|rd| rd.map(|e| e.map(|e| e.path())).collect())
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    if entries.is_empty() {
        return Ok(());
    }
    if !overwrite {
        return Err(CliError::Validation(format!(
            "{} is not empty; pass --overwrite to replace an earlier run",
            out.display()
        )));
    }
    if let Some(stray) = entries.iter().find(|p| {
        !p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| OUTPUT_ENTRIES.contains(&n))
    }) {
        return Err(CliError::Validation(format!(
            "refusing to overwrite {}: {} was not written by simulate",
            out.display(),
            stray.display()
        )));
    }
    for p in entries {
        let r = if p.is_dir() {
            fs::remove_dir_all(&p)
        } else {
            fs::remove_file(&p)
        };
        r.map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs, w: &mut dyn Write) -> Result<RunSummary, CliError> {
    let plan = args.plan()?;
    let scenario = Scenario::resolve(&plan.scenario)?;
    prepare_out(&plan.out, plan.overwrite)?;

    let run = run_pipeline(&scenario, &plan.config, &plan.out.join("store"))?;
    let summary = RunSummary::of(&run, plan.scenario.seed, &plan.config);
    write_reports(&plan.out, &run, &summary)?;
    let p = plan.out.join("scenario.toml");
    fs::write(&p, plan.scenario.to_toml()?)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;

    let line = |w: &mut dyn Write, s: String| writeln!(w, "{s}").map_err(CliError::runtime);
    line(
        w,
        format!(
            "seed {}, {} devices, {} scanners",
            summary.seed,
            summary.devices,
            run.scanners.len()
        ),
    )?;
    line(
        w,
        format!(
            "archived {} observations, {} density samples",
            summary.observations_archived, summary.samples
        ),
    )?;
    line(
        w,
        format!(
            "mean abs error {:.3}, exact {}/{}, over-count factor {}",
            summary.mean_abs_error,
            summary.exact_samples,
            summary.samples,
            summary
                .over_count_factor
                .map_or("n/a".into(), |f| format!("{f:.3}"))
        ),
    )?;
    line(
        w,
        format!(
            "flows {} (truth {}), ambiguous devices {}",
            summary.flow_total, summary.truth_flow_total, summary.ambiguous_devices
        ),
    )?;
    if summary.undelivered_entries > 0 {
        line(
            w,
            format!("undelivered entries {}", summary.undelivered_entries),
        )?;
    }
    line(w, format!("wrote {}", plan.out.display()))?;
    Ok(summary)
}
