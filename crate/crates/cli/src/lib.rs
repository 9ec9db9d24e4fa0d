//! `epmakit` command-line driver.
//!
//! Exit codes: 0 success, 1 batch finished with per-job errors, 2 usage
//! error, 3 parse or format error, 4 I/O error. Usage errors are detected
//! before anything is written.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use epmakit_core::annotate::{BarLength, BarPosition, MarkerStyle, ScaleBarStyle};
use epmakit_core::calibration::{fit_pixel_size_model, parse_calibration_csv, REFERENCE_WIDTH};
use epmakit_core::compose::{render_uncached, RenderContext, RenderError};
use epmakit_core::export::{run_batch, BatchOptions, ExportJob, ImageFormat, NameTemplate, DEFAULT_JPEG_QUALITY};
use epmakit_core::project::{scan_project, EntryManifest, LoadError, ProjectError, ProjectIndex};
use epmakit_core::{preview_png, Background, CalibrationModel, PositionSelection, RenderSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "epmakit", version, about = "Annotate, composite and export EPMA images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print one line per entry: id, kind, magnification, WxH.
    List { project: PathBuf },
    /// Fit the pixel-size power law to a calibration CSV.
    Calibrate {
        /// Columns: magnification,pixel_size_um[,width_px]
        #[arg(long)]
        csv: PathBuf,
        /// Fix the exponent at -1.
        #[arg(long)]
        constrain: bool,
        #[arg(long, default_value_t = REFERENCE_WIDTH)]
        reference_width: u32,
        /// Also write the model for later `--calibration` use.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render entries and write them to a directory.
    Export {
        project: PathBuf,
        /// Comma-separated entry ids, in queue order. Default: all entries.
        #[arg(long, value_delimiter = ',')]
        entries: Vec<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Default: `{name}.<format extension>`.
        #[arg(long)]
        template: Option<String>,
        #[arg(long, default_value = "png")]
        format: ImageFormat,
        /// JPEG quality, 1-100.
        #[arg(long, default_value_t = DEFAULT_JPEG_QUALITY, value_parser = clap::value_parser!(u8).range(1..=100))]
        quality: u8,
        /// Value for `{date}`; defaults to today.
        #[arg(long, value_parser = parse_date)]
        date: Option<String>,
        /// Parallel jobs; 0 uses every logical CPU.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[command(flatten)]
        render: RenderFlags,
    },
    /// Render one entry to a PNG.
    Preview {
        project: PathBuf,
        entry: String,
        #[arg(long)]
        out: PathBuf,
        /// Cap the long edge, in pixels.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        max_px: Option<u32>,
        #[command(flatten)]
        render: RenderFlags,
    },
    /// Start the local HTTP service on 127.0.0.1.
    Serve {
        #[arg(long, default_value_t = epmakit_service::DEFAULT_PORT)]
        port: u16,
        /// Open this project on startup.
        #[arg(long)]
        project: Option<PathBuf>,
        /// Serve the browser UI from this directory.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
struct RenderFlags {
    /// Settings JSON, the same document the service accepts. Flags override it.
    #[arg(long)]
    settings: Option<PathBuf>,
    /// Calibration model (`k=`/`b=` lines) or a calibration CSV to fit.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// auto, a length in µm, or none.
    #[arg(long, value_parser = parse_scalebar)]
    scalebar: Option<ScaleBarFlag>,
    #[arg(long = "scalebar-pos")]
    scalebar_pos: Option<BarPosition>,
    #[arg(long, value_parser = parse_opacity)]
    opacity: Option<f64>,
    /// Visible layers, bottom to top; the others are hidden.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<String>>,
    /// all, none, or comma-separated position ids.
    #[arg(long, value_parser = parse_positions)]
    positions: Option<PositionSelection>,
    /// shape:color:pct, e.g. plus:red:2
    #[arg(long, value_parser = parse_marker)]
    marker: Option<MarkerStyle>,
    /// image or #RRGGBB
    #[arg(long)]
    background: Option<Background>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ScaleBarFlag {
    Off,
    Length(BarLength),
}

fn parse_scalebar(s: &str) -> Result<ScaleBarFlag, String> {
    match s {
        "none" | "off" => Ok(ScaleBarFlag::Off),
        "auto" => Ok(ScaleBarFlag::Length(BarLength::Auto)),
        _ => {
            let um: f64 = s.trim_end_matches("um").trim_end_matches("µm").parse().map_err(|_| {
                format!("expected auto, none, or a length in µm, got {s:?}")
            })?;
            if !(um.is_finite() && um > 0.0) {
                return Err(format!("scale bar length must be > 0, got {s}"));
            }
            Ok(ScaleBarFlag::Length(BarLength::Fixed(um)))
        }
    }
}

fn parse_opacity(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("opacity must be a number in [0, 1], got {s:?}")),
    }
}

fn parse_positions(s: &str) -> Result<PositionSelection, String> {
    match s {
        "all" => Ok(PositionSelection::All),
        "none" => Ok(PositionSelection::None),
        _ => {
            let ids: std::collections::BTreeSet<String> =
                s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect();
            if ids.is_empty() {
                return Err("expected all, none, or position ids".into());
            }
            Ok(PositionSelection::Ids(ids))
        }
    }
}

fn parse_marker(s: &str) -> Result<MarkerStyle, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [shape, color, pct] = parts.as_slice() else {
        return Err(format!("expected shape:color:pct, got {s:?}"));
    };
    let word = |w: &str| serde_json::Value::String(w.to_ascii_lowercase());
    let style = MarkerStyle {
        shape: serde_json::from_value(word(shape)).map_err(|_| format!("unknown marker shape {shape:?}"))?,
        color: serde_json::from_value(word(color)).map_err(|_| format!("unknown marker color {color:?}"))?,
        size_pct: pct.parse().map_err(|_| format!("bad marker size {pct:?}"))?,
    };
    style.validate().map_err(|e| e.to_string())?;
    Ok(style)
}

fn parse_date(s: &str) -> Result<String, String> {
    chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.format("%Y-%m-%d").to_string())
        .map_err(|_| format!("expected YYYY-MM-DD, got {s:?}"))
}

/// An error with the exit code it maps to.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl std::fmt::Display) -> Self {
        Failure { code, message: message.to_string() }
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(EXIT_IO, format!("cannot read {}: {e}", path.display())))
}

fn load_calibration(path: Option<&Path>) -> Result<RenderContext, Failure> {
    let Some(path) = path else {
        return Ok(RenderContext::default());
    };
    let text = read_file(path)?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let model = if is_csv {
        parse_calibration_csv(&text, REFERENCE_WIDTH).and_then(|s| fit_pixel_size_model(&s, false))
    } else {
        CalibrationModel::from_settings_text(&text)
    }
    .map_err(|e| Failure::new(EXIT_FORMAT, format!("{}: {e}", path.display())))?;
    Ok(RenderContext { calibration: model })
}

fn open_project(dir: &Path) -> Result<ProjectIndex, Failure> {
    scan_project(dir).map_err(|e| match e {
        ProjectError::NotAProject(_) => Failure::new(EXIT_FORMAT, e),
        _ => Failure::new(EXIT_IO, e),
    })
}

/// Flag-derived settings plus the per-entry layer selection.
struct SettingsPlan {
    base: RenderSettings,
    layers: Option<Vec<String>>,
}

impl RenderFlags {
    fn plan(&self) -> Result<SettingsPlan, Failure> {
        let mut s = match &self.settings {
            Some(p) => RenderSettings::from_json(&read_file(p)?)
                .map_err(|e| Failure::new(EXIT_FORMAT, format!("{}: {e}", p.display())))?,
            None => RenderSettings::default(),
        };
        match self.scalebar {
            Some(ScaleBarFlag::Off) => {
                if self.scalebar_pos.is_some() {
                    return Err(Failure::new(EXIT_USAGE, "--scalebar-pos conflicts with --scalebar none"));
                }
                s.scale_bar = None;
            }
            Some(ScaleBarFlag::Length(len)) => s.scale_bar.get_or_insert_with(ScaleBarStyle::default).length = len,
            None => {}
        }
        if let Some(pos) = self.scalebar_pos {
            s.scale_bar.get_or_insert_with(ScaleBarStyle::default).position = pos;
        }
        if let Some(o) = self.opacity {
            s.layer_opacity = o;
        }
        if let Some(p) = &self.positions {
            s.enabled_positions = p.clone();
        }
        if let Some(m) = self.marker {
            s.marker = m;
        }
        if let Some(b) = self.background {
            s.background = b;
        }
        s.validate().map_err(|e| Failure::new(EXIT_FORMAT, e))?;
        Ok(SettingsPlan { base: s, layers: self.layers.clone() })
    }
}

impl SettingsPlan {
    /// Settings for one entry: the selected layers in the given order, then
    /// the entry's remaining layers hidden.
    fn for_entry(&self, m: &EntryManifest) -> RenderSettings {
        let mut s = self.base.clone();
        if let Some(sel) = &self.layers {
            let mut ranked: Vec<_> = m.layers.iter().collect();
            ranked.sort_by_key(|l| l.order);
            s.layer_order = sel.iter().filter(|id| m.layer(id).is_some()).cloned().collect();
            s.layer_visibility = s.layer_order.iter().map(|id| (id.clone(), true)).collect();
            for l in ranked {
                if !s.layer_visibility.contains_key(&l.element) {
                    s.layer_order.push(l.element.clone());
                    s.layer_visibility.insert(l.element.clone(), false);
                }
            }
        }
        s
    }

    fn check_layers(&self, entries: &[&EntryManifest]) -> Result<(), Failure> {
        if let Some(sel) = &self.layers {
            for id in sel {
                if !entries.iter().any(|m| m.layer(id).is_some()) {
                    return Err(Failure::new(EXIT_USAGE, format!("no selected entry has a layer {id:?}")));
                }
            }
        }
        Ok(())
    }
}

fn render_exit_code(e: &RenderError) -> i32 {
    match e {
        RenderError::Load(LoadError::Io { .. }) => EXIT_IO,
        _ => EXIT_FORMAT,
    }
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::new(EXIT_IO, format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| Failure::new(EXIT_IO, format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    match cli.command {
        Command::List { project } => {
            let index = open_project(&project)?;
            for w in &index.warnings {
                let _ = writeln!(err, "warning: {}: {}", w.path.display(), w.message);
            }
            for e in &index.entries {
                let m = &e.manifest;
                let _ = writeln!(out, "{}\t{}\t{}\t{}x{}", m.id, m.kind.as_str(), m.magnification, m.width, m.height);
            }
            Ok(EXIT_OK)
        }
        Command::Calibrate { csv, constrain, reference_width, out: model_out } => {
            if reference_width == 0 {
                return Err(Failure::new(EXIT_USAGE, "--reference-width must be > 0"));
            }
            let text = read_file(&csv)?;
            let model = parse_calibration_csv(&text, reference_width)
                .and_then(|s| fit_pixel_size_model(&s, constrain))
                .map_err(|e| Failure::new(EXIT_FORMAT, format!("{}: {e}", csv.display())))?;
            let model = CalibrationModel { reference_width, ..model };
            let _ = writeln!(out, "K={:.2} b={:.3} rms={:.3e}", model.k, model.exponent, model.rms_residual);
            if let Some(p) = model_out {
                write_output(&p, model.to_settings_text().as_bytes())?;
            }
            Ok(EXIT_OK)
        }
        Command::Export { project, entries, out: dest, template, format, quality, date, workers, render } => {
            let template = template.unwrap_or_else(|| format!("{{name}}.{}", format.extension()));
            let template = NameTemplate::parse(&template).map_err(|e| Failure::new(EXIT_USAGE, format!("--template: {e}")))?;
            let context = load_calibration(render.calibration.as_deref())?;
            let plan = render.plan()?;
            let index = open_project(&project)?;
            let ids: Vec<String> = if entries.is_empty() {
                index.entries.iter().map(|e| e.manifest.id.clone()).collect()
            } else {
                entries
            };
            let mut manifests = Vec::with_capacity(ids.len());
            for id in &ids {
                let e = index.entry(id).ok_or_else(|| Failure::new(EXIT_USAGE, format!("unknown entry {id:?}")))?;
                manifests.push(&e.manifest);
            }
            plan.check_layers(&manifests)?;
            let queue: Vec<ExportJob> = manifests
                .iter()
                .map(|m| ExportJob { quality, ..ExportJob::new(m.id.clone(), plan.for_entry(m), format, template.clone()) })
                .collect();
            let mut opts = BatchOptions { context, workers, ..BatchOptions::default() };
            if let Some(d) = date {
                opts.date = d;
            }
            let report = run_batch(&queue, &dest, &index, &opts).map_err(|e| Failure::new(EXIT_IO, e))?;
            let _ = write!(out, "{}", report.to_json_lines());
            for o in &report.outcomes {
                if let Err(e) = &o.result {
                    let _ = writeln!(err, "job {} ({}): {e}", o.index, o.entry);
                }
            }
            let _ = writeln!(err, "exported {} of {} to {}", report.succeeded(), report.outcomes.len(), dest.display());
            Ok(if report.failed() > 0 { EXIT_PARTIAL } else { EXIT_OK })
        }
        Command::Preview { project, entry, out: path, max_px, render } => {
            let context = load_calibration(render.calibration.as_deref())?;
            let plan = render.plan()?;
            let index = open_project(&project)?;
            let e = index.entry(&entry).ok_or_else(|| Failure::new(EXIT_USAGE, format!("unknown entry {entry:?}")))?;
            plan.check_layers(&[&e.manifest])?;
            let img = render_uncached(&context, e, &plan.for_entry(&e.manifest))
                .map_err(|err| Failure::new(render_exit_code(&err), err))?;
            let png = preview_png(&img, max_px).map_err(|e| Failure::new(EXIT_FORMAT, e))?;
            write_output(&path, &png)?;
            Ok(EXIT_OK)
        }
        Command::Serve { port, project, static_dir, calibration } => {
            let context = load_calibration(calibration.as_deref())?;
            let mut svc = epmakit_service::Service::new(context);
            if let Some(dir) = static_dir {
                svc = svc.with_static_dir(dir);
            }
            if let Some(dir) = project {
                let body = serde_json::json!({ "dir": dir }).to_string();
                let r = svc.handle(&epmakit_service::Request::new("POST", "/api/project", body));
                if r.status != 200 {
                    return Err(Failure::new(EXIT_IO, r.json_body()["error"].as_str().unwrap_or("cannot open project")));
                }
            }
            epmakit_service::serve(svc, port, |addr| {
                let _ = writeln!(out, "listening on http://{addr}");
                let _ = out.flush();
            })
            .map_err(|e| Failure::new(EXIT_IO, e))?;
            Ok(EXIT_OK)
        }
    }
}

/// Runs the CLI with explicit output streams; `argv[0]` is the program name.
pub fn run_cli_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match run(cli, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run_cli_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
