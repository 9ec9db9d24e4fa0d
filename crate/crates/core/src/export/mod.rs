//! Name templates, file name rules, encoding, and batch export.

mod filename;
mod template;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::codec::{encode_raster, EncodeError, ImageFormat};
pub use filename::{validate_filename, FilenameError, OsFilenameRules};
pub use template::{substitute_name_template, NameTemplate, TemplateError, TemplateVars};

use crate::compose::{render_uncached, RenderContext};
use crate::project::ProjectIndex;
use crate::settings::RenderSettings;

pub const DEFAULT_JPEG_QUALITY: u8 = 90;

fn default_quality() -> u8 {
    DEFAULT_JPEG_QUALITY
}

fn default_format() -> ImageFormat {
    ImageFormat::Png
}

/// One queued export. The same entry may be queued any number of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportJob {
    pub entry: String,
    #[serde(default)]
    pub settings: RenderSettings,
    #[serde(default = "default_format")]
    pub format: ImageFormat,
    /// 1..=100, JPEG only.
    #[serde(default = "default_quality")]
    pub quality: u8,
    #[serde(default)]
    pub template: NameTemplate,
}

impl ExportJob {
    pub fn new(entry: impl Into<String>, settings: RenderSettings, format: ImageFormat, template: NameTemplate) -> Self {
        ExportJob { entry: entry.into(), settings, format, quality: DEFAULT_JPEG_QUALITY, template }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobOutcome {
    /// 1-based queue position.
    pub index: usize,
    pub entry: String,
    pub result: Result<PathBuf, String>,
}

/// One outcome per queued job, in queue order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BatchReport {
    pub outcomes: Vec<JobOutcome>,
}

impl BatchReport {
    pub fn failed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_err()).count()
    }

    pub fn succeeded(&self) -> usize {
        self.outcomes.len() - self.failed()
    }

    pub fn to_json_values(&self) -> Vec<serde_json::Value> {
        self.outcomes
            .iter()
            .map(|o| match &o.result {
                Ok(p) => serde_json::json!({"index": o.index, "entry": o.entry, "path": p.display().to_string()}),
                Err(e) => serde_json::json!({"index": o.index, "entry": o.entry, "error": e}),
            })
            .collect()
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        self.to_json_values().iter().map(|v| format!("{v}\n")).collect()
    }
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("destination {path} is not writable: {source}")]
    DestNotWritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot start export workers: {0}")]
    Workers(String),
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub context: RenderContext,
    /// Substituted for `{date}`.
    pub date: String,
    /// Parallel jobs; 0 means one per logical CPU.
    pub workers: usize,
    pub rules: OsFilenameRules,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            context: RenderContext::default(),
            date: chrono::Local::now().format("%Y-%m-%d").to_string(),
            workers: 0,
            rules: OsFilenameRules::host(),
        }
    }
}

fn with_suffix(name: &str, n: usize) -> String {
    match name.rfind('.') {
        Some(dot) if dot > 0 => format!("{}-{n}{}", &name[..dot], &name[dot..]),
        _ => format!("{name}-{n}"),
    }
}

/// Substitutes, validates, and de-duplicates file names in queue order.
fn plan_names(queue: &[ExportJob], opts: &BatchOptions) -> Vec<Result<String, String>> {
    let mut claimed = HashSet::new();
    queue
        .iter()
        .enumerate()
        .map(|(i, job)| {
            let mut name = job.template.substitute(&TemplateVars { name: &job.entry, index: i + 1, date: &opts.date });
            if Path::new(&name).extension().is_none() {
                name = format!("{name}.{}", job.format.extension());
            }
            validate_filename(&name, &opts.rules).map_err(|e| e.to_string())?;
            let mut candidate = name.clone();
            let mut n = 1;
            while claimed.contains(&candidate) {
                n += 1;
                candidate = with_suffix(&name, n);
            }
            validate_filename(&candidate, &opts.rules).map_err(|e| e.to_string())?;
            claimed.insert(candidate.clone());
            Ok(candidate)
        })
        .collect()
}

fn check_writable(dest: &Path) -> Result<(), ExportError> {
    let fail = |source| ExportError::DestNotWritable { path: dest.to_path_buf(), source };
    std::fs::create_dir_all(dest).map_err(fail)?;
    let probe = dest.join(format!(".epmakit-probe-{}", std::process::id()));
    std::fs::write(&probe, b"").map_err(fail)?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}

fn run_job(job: &ExportJob, name: &str, dest: &Path, project: &ProjectIndex, opts: &BatchOptions) -> Result<PathBuf, String> {
    let entry = project.entry(&job.entry).ok_or_else(|| format!("unknown entry {:?}", job.entry))?;
    let img = render_uncached(&opts.context, entry, &job.settings).map_err(|e| e.to_string())?;
    let bytes = encode_raster(&img, job.format, job.quality).map_err(|e| e.to_string())?;
    drop(img);
    let path = dest.join(name);
    std::fs::write(&path, bytes).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    Ok(path)
}

/// Renders and writes every job into `dest`. A failing job is recorded in
/// the report and never stops the others. Colliding names get `-2`, `-3`, …
/// before the extension, assigned in queue order.
pub fn run_batch(queue: &[ExportJob], dest: &Path, project: &ProjectIndex, opts: &BatchOptions) -> Result<BatchReport, ExportError> {
    check_writable(dest)?;
    let names = plan_names(queue, opts);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| ExportError::Workers(e.to_string()))?;
    let outcomes = pool.install(|| {
        queue
            .par_iter()
            .zip(names.par_iter())
            .enumerate()
            .map(|(i, (job, name))| JobOutcome {
                index: i + 1,
                entry: job.entry.clone(),
                result: name.clone().and_then(|n| run_job(job, &n, dest, project, opts)),
            })
            .collect()
    });
    Ok(BatchReport { outcomes })
}
