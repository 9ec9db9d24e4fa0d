//! Loopback HTTP service for the browser companion.
//!
//! All routing lives in [`Service::handle`], which is plain synchronous code
//! over a [`Request`]/[`Response`] pair; [`serve`] only adapts it to axum.
//!
//! | method | path                          | body                    | reply                 |
//! |--------|-------------------------------|-------------------------|-----------------------|
//! | GET    | `/api/version`                |                         | `{version}`           |
//! | POST   | `/api/project`                | `{dir}`                 | entry summaries       |
//! | GET    | `/api/project`                |                         | entry summaries       |
//! | GET    | `/api/entries/{id}`           |                         | manifest              |
//! | POST   | `/api/entries/{id}/preview`   | settings JSON           | `image/png`           |
//! | GET    | `/api/queue`                  |                         | queued jobs           |
//! | POST   | `/api/queue`                  | job or list of jobs     | queued jobs           |
//! | DELETE | `/api/queue?index=n`          |                         | queued jobs           |
//! | POST   | `/api/export`                 | `{dest, template, ...}` | batch report          |

use std::collections::HashMap;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use epmakit_core::annotate::AnnotateError;
use epmakit_core::compose::{render_entry, RenderCache, RenderContext, RenderError};
use epmakit_core::export::{run_batch, BatchOptions, ExportJob, ImageFormat, NameTemplate};
use epmakit_core::project::{scan_project, ProjectEntry, ProjectError, ProjectIndex};
use epmakit_core::{preview_png, RenderSettings};
use serde::Deserialize;
use serde_json::{json, Value};

pub const DEFAULT_PORT: u16 = 8537;

/// Header carrying `[stage0..stage3]` recompute flags of the last preview,
/// e.g. `0,0,0,1` when only the scale bar was redrawn.
pub const STAGES_HEADER: &str = "x-render-recomputed";
/// Header carrying the cumulative per-stage compute counters of the entry's cache.
pub const COUNTERS_HEADER: &str = "x-render-counters";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub method: String,
    pub path: String,
    /// Raw query string without the leading `?`.
    pub query: String,
    pub body: Vec<u8>,
}

impl Request {
    pub fn new(method: &str, path_and_query: &str, body: impl Into<Vec<u8>>) -> Self {
        let (path, query) = path_and_query.split_once('?').unwrap_or((path_and_query, ""));
        Request { method: method.to_ascii_uppercase(), path: path.to_string(), query: query.to_string(), body: body.into() }
    }

    fn query_param(&self, key: &str) -> Option<&str> {
        self.query
            .split('&')
            .filter_map(|kv| kv.split_once('=').or(Some((kv, ""))))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub content_type: &'static str,
    pub headers: Vec<(&'static str, String)>,
    pub body: Vec<u8>,
}

impl Response {
    fn json(status: u16, v: &Value) -> Self {
        Response { status, content_type: "application/json", headers: Vec::new(), body: v.to_string().into_bytes() }
    }

    fn error(status: u16, message: impl std::fmt::Display) -> Self {
        Self::json(status, &json!({ "error": message.to_string() }))
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    /// Parses the body as JSON; `Value::Null` if it is not JSON.
    pub fn json_body(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or(Value::Null)
    }
}

/// Mutable session data. Guarded by one mutex so project switches and queue
/// edits are never observed half-done.
#[derive(Default)]
struct Session {
    project: Option<Arc<ProjectIndex>>,
    caches: HashMap<String, Arc<Mutex<RenderCache>>>,
    queue: Vec<ExportJob>,
}

pub struct Service {
    session: Mutex<Session>,
    context: RenderContext,
    static_dir: Option<PathBuf>,
    /// Fixed `{date}` for exports; `None` uses today.
    date: Option<String>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // a panic while holding the lock leaves plain data behind; keep serving
    m.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OpenProject {
    dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExportRequest {
    dest: PathBuf,
    template: Option<NameTemplate>,
    /// Export these entries instead of the queue.
    entries: Option<Vec<String>>,
    /// Settings for `entries`; ignored for queued jobs.
    settings: Option<RenderSettings>,
    format: Option<ImageFormat>,
    quality: Option<u8>,
    workers: Option<usize>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum QueueInsert {
    Many(Vec<ExportJob>),
    One(ExportJob),
}

fn entry_summary(e: &ProjectEntry) -> Value {
    let m = &e.manifest;
    json!({
        "id": m.id,
        "kind": m.kind.as_str(),
        "magnification": m.magnification,
        "width": m.width,
        "height": m.height,
        "positions": m.positions.len(),
        "layers": m.layers.iter().map(|l| l.element.as_str()).collect::<Vec<_>>(),
        "date": m.date,
    })
}

fn project_summary(p: &ProjectIndex) -> Value {
    json!({
        "root": p.root.display().to_string(),
        "entries": p.entries.iter().map(entry_summary).collect::<Vec<_>>(),
        "warnings": p.warnings.iter().map(|w| json!({"path": w.path.display().to_string(), "message": w.message})).collect::<Vec<_>>(),
    })
}

fn queue_json(queue: &[ExportJob]) -> Value {
    Value::Array(
        queue
            .iter()
            .enumerate()
            .map(|(i, job)| json!({ "index": i + 1, "job": job }))
            .collect(),
    )
}

fn render_status(e: &RenderError) -> u16 {
    match e {
        RenderError::Settings(_) => 400,
        RenderError::Annotate(
            AnnotateError::InvalidStyle(_) | AnnotateError::UnknownPositionId(_) | AnnotateError::NonPositiveLength(_),
        ) => 400,
        _ => 500,
    }
}

fn content_type_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript",
        "css" => "text/css",
        "json" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        _ => "application/octet-stream",
    }
}

impl Service {
    pub fn new(context: RenderContext) -> Self {
        Service { session: Mutex::new(Session::default()), context, static_dir: None, date: None }
    }

    /// Serves files under `dir` for non-API GET requests.
    pub fn with_static_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.static_dir = Some(dir.into());
        self
    }

    pub fn with_date(mut self, date: impl Into<String>) -> Self {
        self.date = Some(date.into());
        self
    }

    pub fn handle(&self, req: &Request) -> Response {
        let segments: Vec<&str> = req.path.trim_matches('/').split('/').filter(|s| !s.is_empty()).collect();
        match (req.method.as_str(), segments.as_slice()) {
            ("GET", ["api", "version"]) => Response::json(200, &json!({ "version": epmakit_core::VERSION })),
            ("POST", ["api", "project"]) => self.open_project(req),
            ("GET", ["api", "project"]) => match self.project() {
                Ok(p) => Response::json(200, &project_summary(&p)),
                Err(r) => r,
            },
            ("GET", ["api", "entries", id]) => self.get_entry(id),
            ("POST", ["api", "entries", id, "preview"]) => self.preview(id, req),
            ("GET", ["api", "queue"]) => Response::json(200, &queue_json(&lock(&self.session).queue)),
            ("POST", ["api", "queue"]) => self.queue_append(req),
            ("DELETE", ["api", "queue"]) => self.queue_remove(req),
            ("POST", ["api", "export"]) => self.export(req),
            (_, ["api", ..]) => Response::error(404, format!("no route for {} {}", req.method, req.path)),
            ("GET", _) => self.static_file(&segments),
            _ => Response::error(404, format!("no route for {} {}", req.method, req.path)),
        }
    }

    fn project(&self) -> Result<Arc<ProjectIndex>, Response> {
        lock(&self.session).project.clone().ok_or_else(|| Response::error(409, "no project is open"))
    }

    fn lookup(&self, id: &str) -> Result<(ProjectEntry, Arc<Mutex<RenderCache>>), Response> {
        let mut session = lock(&self.session);
        let project = session.project.clone().ok_or_else(|| Response::error(409, "no project is open"))?;
        let entry = project.entry(id).ok_or_else(|| Response::error(404, format!("unknown entry {id:?}")))?;
        let cache = Arc::clone(session.caches.entry(id.to_string()).or_default());
        Ok((entry.clone(), cache))
    }

    fn open_project(&self, req: &Request) -> Response {
        let body: OpenProject = match serde_json::from_slice(&req.body) {
            Ok(b) => b,
            Err(e) => return Response::error(400, format!("expected {{\"dir\": ...}}: {e}")),
        };
        // scan outside the lock; the swap below is the only mutation
        match scan_project(&body.dir) {
            Ok(index) => {
                let summary = project_summary(&index);
                let mut session = lock(&self.session);
                session.project = Some(Arc::new(index));
                session.caches.clear();
                session.queue.clear();
                Response::json(200, &summary)
            }
            Err(e @ (ProjectError::DirNotFound(_) | ProjectError::NotAProject(_))) => Response::error(404, e),
            Err(e) => Response::error(500, e),
        }
    }

    fn get_entry(&self, id: &str) -> Response {
        let project = match self.project() {
            Ok(p) => p,
            Err(r) => return r,
        };
        match project.entry(id) {
            Some(e) => Response::json(200, &e.manifest.to_json()),
            None => Response::error(404, format!("unknown entry {id:?}")),
        }
    }

    fn preview(&self, id: &str, req: &Request) -> Response {
        let settings = if req.body.iter().all(u8::is_ascii_whitespace) {
            RenderSettings::default()
        } else {
            match std::str::from_utf8(&req.body).map_err(|e| e.to_string()).and_then(|s| {
                RenderSettings::from_json(s).map_err(|e| e.to_string())
            }) {
                Ok(s) => s,
                Err(e) => return Response::error(400, e),
            }
        };
        let max_px = match req.query_param("max_px") {
            None => None,
            Some(v) => match v.parse::<u32>() {
                Ok(n) if n > 0 => Some(n),
                _ => return Response::error(400, format!("max_px must be a positive integer, got {v:?}")),
            },
        };
        let (entry, cache) = match self.lookup(id) {
            Ok(x) => x,
            Err(r) => return r,
        };
        // one writer per entry; other entries render concurrently
        let mut cache = lock(&cache);
        let rendered = match render_entry(&self.context, &entry, &settings, &mut cache) {
            Ok(r) => r,
            Err(e) => return Response::error(render_status(&e), e),
        };
        let flags = cache.last_recomputed().map(|b| if b { "1" } else { "0" }).join(",");
        let counters = cache.stage_compute_counters().map(|c| c.to_string()).join(",");
        drop(cache);
        match preview_png(&rendered, max_px) {
            Ok(png) => Response {
                status: 200,
                content_type: "image/png",
                headers: vec![(STAGES_HEADER, flags), (COUNTERS_HEADER, counters)],
                body: png,
            },
            Err(e) => Response::error(500, e),
        }
    }

    fn check_job(project: &ProjectIndex, job: &ExportJob) -> Result<(), Response> {
        let entry = project.entry(&job.entry).ok_or_else(|| Response::error(404, format!("unknown entry {:?}", job.entry)))?;
        job.settings.validate().map_err(|e| Response::error(400, e))?;
        job.settings.resolve_layers(&entry.manifest).map_err(|e| Response::error(400, e))?;
        job.settings.resolve_positions(&entry.manifest).map_err(|e| Response::error(400, e))?;
        if !(1..=100).contains(&job.quality) {
            return Err(Response::error(400, format!("quality must be 1..=100, got {}", job.quality)));
        }
        Ok(())
    }

    fn queue_append(&self, req: &Request) -> Response {
        let jobs = match serde_json::from_slice::<QueueInsert>(&req.body) {
            Ok(QueueInsert::Many(v)) => v,
            Ok(QueueInsert::One(j)) => vec![j],
            Err(e) => return Response::error(400, format!("expected an export job or a list of jobs: {e}")),
        };
        let mut session = lock(&self.session);
        let Some(project) = session.project.clone() else {
            return Response::error(409, "no project is open");
        };
        // all or nothing
        for job in &jobs {
            if let Err(r) = Self::check_job(&project, job) {
                return r;
            }
        }
        session.queue.extend(jobs);
        Response::json(200, &queue_json(&session.queue))
    }

    fn queue_remove(&self, req: &Request) -> Response {
        let mut session = lock(&self.session);
        match req.query_param("index") {
            None => session.queue.clear(),
            Some(v) => match v.parse::<usize>() {
                Ok(i) if (1..=session.queue.len()).contains(&i) => {
                    session.queue.remove(i - 1);
                }
                Ok(i) => return Response::error(404, format!("no queued job at index {i}")),
                Err(_) => return Response::error(400, format!("index must be a positive integer, got {v:?}")),
            },
        }
        Response::json(200, &queue_json(&session.queue))
    }

    fn export(&self, req: &Request) -> Response {
        let body: ExportRequest = match serde_json::from_slice(&req.body) {
            Ok(b) => b,
            Err(e) => return Response::error(400, format!("bad export request: {e}")),
        };
        let (project, mut jobs) = {
            let session = lock(&self.session);
            let Some(project) = session.project.clone() else {
                return Response::error(409, "no project is open");
            };
            let jobs = match &body.entries {
                Some(ids) => ids
                    .iter()
                    .map(|id| {
                        let format = body.format.unwrap_or(ImageFormat::Png);
                        let template = NameTemplate::parse(&format!("{{name}}.{}", format.extension()))
                            .expect("static template");
                        let mut job =
                            ExportJob::new(id.clone(), body.settings.clone().unwrap_or_default(), format, template);
                        if let Some(q) = body.quality {
                            job.quality = q;
                        }
                        job
                    })
                    .collect(),
                None => session.queue.clone(),
            };
            (project, jobs)
        };
        if jobs.is_empty() {
            return Response::error(400, "nothing to export: the queue is empty and no entries were given");
        }
        for job in &mut jobs {
            if let Some(t) = &body.template {
                job.template = t.clone();
            }
            if let Some(f) = body.format {
                job.format = f;
            }
        }
        if let Some(s) = &body.settings {
            if let Err(e) = s.validate() {
                return Response::error(400, e);
            }
        }
        let mut opts = BatchOptions { context: self.context, workers: body.workers.unwrap_or(0), ..BatchOptions::default() };
        if let Some(d) = &self.date {
            opts.date = d.clone();
        }
        match run_batch(&jobs, &body.dest, &project, &opts) {
            Ok(report) => Response::json(
                200,
                &json!({
                    "succeeded": report.succeeded(),
                    "failed": report.failed(),
                    "outcomes": report.to_json_values(),
                }),
            ),
            Err(e) => Response::error(500, e),
        }
    }

    fn static_file(&self, segments: &[&str]) -> Response {
        let Some(root) = &self.static_dir else {
            return Response::error(404, "no static files are served");
        };
        let rel: PathBuf = if segments.is_empty() { PathBuf::from("index.html") } else { segments.iter().collect() };
        if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
            return Response::error(404, "not found");
        }
        let path = root.join(&rel);
        match std::fs::read(&path) {
            Ok(body) => Response { status: 200, content_type: content_type_for(&path), headers: Vec::new(), body },
            Err(_) => Response::error(404, "not found"),
        }
    }
}

/// Binds to `127.0.0.1:port` and serves until the process exits.
/// Port 0 picks a free port; `on_bound` receives the actual address.
pub fn serve(service: Service, port: u16, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    use axum::body::{Body, Bytes};
    use axum::http::{HeaderValue, Method, StatusCode, Uri};

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((Ipv4Addr::LOCALHOST, port)).await?;
        on_bound(listener.local_addr()?);
        let service = Arc::new(service);
        let app = axum::Router::new().fallback(move |method: Method, uri: Uri, body: Bytes| {
            let service = Arc::clone(&service);
            async move {
                let req = Request::new(
                    method.as_str(),
                    uri.path_and_query().map(|p| p.as_str()).unwrap_or("/"),
                    body.to_vec(),
                );
                // rendering is CPU-bound; keep it off the async workers
                let resp = tokio::task::spawn_blocking(move || service.handle(&req))
                    .await
                    .unwrap_or_else(|e| Response::error(500, format!("handler panicked: {e}")));
                let mut out = axum::response::Response::new(Body::from(resp.body));
                *out.status_mut() = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
                let headers = out.headers_mut();
                headers.insert("content-type", HeaderValue::from_static(resp.content_type));
                for (k, v) in resp.headers {
                    if let Ok(v) = HeaderValue::from_str(&v) {
                        headers.insert(k, v);
                    }
                }
                out
            }
        });
        axum::serve(listener, app).await
    })
}
