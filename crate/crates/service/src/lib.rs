//! HTTP session API over the mmnn pipeline.
//!
//! A session holds one uploaded image, an optional gold mask, the annotated
//! points, and the latest network and segmentation. Training runs as a
//! background job that clients poll. Everything lives under `/api`; `/` serves
//! the UI assets when a static directory is configured and a small index page
//! otherwise.

pub mod error;
pub mod session;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use mmnn::imageio::{decode_image, decode_mask, encode_mask_png};
use mmnn::landscape::{parse_free_pair, parse_range, sweep, upper_weight_refs, LandscapeGrid};
use mmnn::{AnnotatedPoint, Objective, PixelSet, PointRole};

pub use error::{ApiError, ApiResult};
pub use session::{JobStatus, ObjectiveName, SharedSession, Store, TrainRequest};

use session::{run_job, JobInput};

const MAX_UPLOAD: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct AppConfig {
    pub data_dir: PathBuf,
    /// Served at `/` when set.
    pub static_dir: Option<PathBuf>,
}

type AppState = Arc<Store>;

pub fn router(cfg: AppConfig) -> std::io::Result<Router> {
    std::fs::create_dir_all(&cfg.data_dir)?;
    let state: AppState = Arc::new(Store::new(&cfg.data_dir));
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/points", get(list_points).post(add_point))
        .route("/sessions/{id}/points/{n}", delete(delete_point))
        .route("/sessions/{id}/train", post(start_training))
        .route("/sessions/{id}/jobs/{jid}", get(get_job))
        .route("/sessions/{id}/segmentation.png", get(segmentation_png))
        .route("/sessions/{id}/raw.json", get(raw_json))
        .route("/sessions/{id}/landscape", get(landscape))
        .fallback(|| async { ApiError::not_found("no such endpoint") });
    let app = Router::new()
        .nest("/api", api)
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(state);
    Ok(match cfg.static_dir {
        Some(dir) => app.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => app.route("/", get(index)),
    })
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, cfg: AppConfig) -> std::io::Result<()> {
    let app = router(cfg)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await
}

async fn index() -> Html<&'static str> {
    Html(concat!(
        "<!doctype html><title>mmnn</title>",
        "<h1>mmnn segmentation service</h1>",
        "<p>The annotation UI is not installed. The JSON API is under <code>/api</code>.</p>"
    ))
}

fn session(store: &Store, id: &str) -> ApiResult<SharedSession> {
    store
        .get(id)
        .ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

#[derive(Debug, Serialize)]
struct Created {
    id: String,
    width: usize,
    height: usize,
    channels: usize,
    has_gold: bool,
}

async fn create_session(State(store): State<AppState>, mut form: Multipart) -> ApiResult<Response> {
    let mut image = None;
    let mut gold = None;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("malformed multipart body: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(format!("reading field {name}: {e}")))?;
        match name.as_str() {
            "image" => image = Some(bytes),
            "gold" => gold = Some(bytes),
            other => return Err(ApiError::field(other, format!("unexpected field {other:?}"))),
        }
    }
    let image_bytes = image.ok_or_else(|| ApiError::field("image", "missing image upload"))?;
    let img = decode_image(&image_bytes).map_err(|e| ApiError::field("image", e.to_string()))?;
    let mask = match &gold {
        Some(b) => {
            let m = decode_mask(b).map_err(|e| ApiError::field("gold", e.to_string()))?;
            m.check_matches(&img).map_err(|e| ApiError::field("gold", e.to_string()))?;
            Some(m)
        }
        None => None,
    };
    let mut files: Vec<(&str, &[u8])> = vec![("image", &image_bytes)];
    if let Some(g) = &gold {
        files.push(("gold", g));
    }
    let (width, height, channels, has_gold) = (img.width(), img.height(), img.channels(), mask.is_some());
    let id = store
        .create(img, mask, &files)
        .map_err(|e| ApiError::internal(format!("spilling upload: {e}")))?;
    let body = Created {
        id,
        width,
        height,
        channels,
        has_gold,
    };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

#[derive(Debug, Serialize)]
struct SessionView {
    id: String,
    width: usize,
    height: usize,
    channels: usize,
    has_gold: bool,
    points: Vec<AnnotatedPoint>,
    has_result: bool,
    jobs: usize,
    status: JobStatus,
}

async fn get_session(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let s = session(&store, &id)?;
    let s = s.lock().expect("session poisoned");
    Ok(Json(SessionView {
        id: s.id.clone(),
        width: s.image.width(),
        height: s.image.height(),
        channels: s.image.channels(),
        has_gold: s.gold.is_some(),
        points: s.points.clone(),
        has_result: s.result.is_some(),
        jobs: s.jobs.len(),
        status: s.status(),
    }))
}

async fn list_points(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<AnnotatedPoint>>> {
    let s = session(&store, &id)?;
    let points = s.lock().expect("session poisoned").points.clone();
    Ok(Json(points))
}

/// Signed coordinates so negative input gets a field message rather than a parse error.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointBody {
    x: i64,
    y: i64,
    role: String,
    #[serde(default)]
    class: Option<String>,
}

async fn add_point(
    State(store): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Vec<AnnotatedPoint>>> {
    let s = session(&store, &id)?;
    let p: PointBody = parse_json(&body)?;
    let role: PointRole = p.role.parse().map_err(|e: mmnn::Error| ApiError::field("role", e.to_string()))?;
    let mut s = s.lock().expect("session poisoned");
    let (w, h) = (s.image.width(), s.image.height());
    if p.x < 0 || p.x as usize >= w {
        return Err(ApiError::field("x", format!("x = {} is outside 0..{w}", p.x)));
    }
    if p.y < 0 || p.y as usize >= h {
        return Err(ApiError::field("y", format!("y = {} is outside 0..{h}", p.y)));
    }
    let class = p.class.filter(|c| !c.trim().is_empty()).unwrap_or_else(|| "object".into());
    s.points.push(AnnotatedPoint {
        x: p.x as usize,
        y: p.y as usize,
        role,
        class_label: class,
    });
    Ok(Json(s.points.clone()))
}

async fn delete_point(
    State(store): State<AppState>,
    Path((id, n)): Path<(String, usize)>,
) -> ApiResult<Json<Vec<AnnotatedPoint>>> {
    let s = session(&store, &id)?;
    let mut s = s.lock().expect("session poisoned");
    if n >= s.points.len() {
        return Err(ApiError::not_found(format!("no point {n}; session has {}", s.points.len())));
    }
    s.points.remove(n);
    Ok(Json(s.points.clone()))
}

#[derive(Debug, Serialize)]
struct JobView {
    id: u64,
    #[serde(flatten)]
    status: JobStatus,
}

async fn start_training(State(store): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let shared = session(&store, &id)?;
    let request: TrainRequest = if body.iter().all(u8::is_ascii_whitespace) {
        TrainRequest::default()
    } else {
        parse_json(&body)?
    };
    let arch = request.arch()?;
    request.train_config(&arch)?;

    let (input, job_id) = {
        let mut s = shared.lock().expect("session poisoned");
        if s.running() {
            return Err(ApiError::conflict("a training job is already running"));
        }
        if s.points.is_empty() {
            return Err(ApiError::bad_request("place at least one point before training"));
        }
        s.jobs.push(JobStatus::Running { progress: 0.0 });
        let input = JobInput {
            image: s.image.clone(),
            gold: s.gold.clone(),
            points: s.points.clone(),
            request,
        };
        (input, s.jobs.len() as u64)
    };

    let worker = shared.clone();
    tokio::task::spawn_blocking(move || {
        let idx = job_id as usize - 1;
        let progress = |p: f64| {
            let mut s = worker.lock().expect("session poisoned");
            if let JobStatus::Running { progress } = &mut s.jobs[idx] {
                *progress = p;
            }
        };
        let outcome = run_job(&input, &progress);
        let mut s = worker.lock().expect("session poisoned");
        s.jobs[idx] = match outcome {
            Ok(out) => {
                s.network = Some(out.network);
                s.result = Some(Arc::new(out.result));
                s.setup = Some(out.setup);
                JobStatus::Done(out.report)
            }
            Err(e) => JobStatus::Failed { reason: e.to_string() },
        };
    });

    let view = JobView {
        id: job_id,
        status: JobStatus::Running { progress: 0.0 },
    };
    Ok((StatusCode::ACCEPTED, Json(view)).into_response())
}

async fn get_job(State(store): State<AppState>, Path((id, jid)): Path<(String, u64)>) -> ApiResult<Json<JobView>> {
    let s = session(&store, &id)?;
    let s = s.lock().expect("session poisoned");
    let status = jid
        .checked_sub(1)
        .and_then(|i| s.jobs.get(i as usize))
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown job {jid}")))?;
    Ok(Json(JobView { id: jid, status }))
}

#[derive(Debug, Deserialize)]
struct MaskQuery {
    threshold: Option<f64>,
}

async fn segmentation_png(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<MaskQuery>,
) -> ApiResult<Response> {
    let s = session(&store, &id)?;
    let result = s
        .lock()
        .expect("session poisoned")
        .result
        .clone()
        .ok_or_else(|| ApiError::not_found("no segmentation yet"))?;
    let png = match q.threshold {
        Some(t) if !(0.0..=1.0).contains(&t) => {
            return Err(ApiError::field("threshold", format!("threshold must lie in [0, 1], got {t}")))
        }
        Some(t) => encode_mask_png(&result.rethreshold(t))?,
        None => encode_mask_png(&result.mask)?,
    };
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Debug, Serialize)]
struct RawView<'a> {
    width: usize,
    height: usize,
    values: &'a [f64],
}

async fn raw_json(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = session(&store, &id)?;
    let result = s
        .lock()
        .expect("session poisoned")
        .result
        .clone()
        .ok_or_else(|| ApiError::not_found("no segmentation yet"))?;
    Ok(Json(RawView {
        width: result.width,
        height: result.height,
        values: &result.raw,
    })
    .into_response())
}

#[derive(Debug, Deserialize)]
struct LandscapeQuery {
    #[serde(default = "default_free")]
    free: String,
    #[serde(default = "default_res")]
    res: f64,
    #[serde(default = "default_range")]
    range: String,
    #[serde(default)]
    objective: Option<ObjectiveName>,
}

fn default_free() -> String {
    "w0,w1".into()
}

fn default_res() -> f64 {
    0.05
}

fn default_range() -> String {
    "-1:1".into()
}

/// Sweeps two upper-layer weights of the session's network on its training-resolution pixels.
/// The objective defaults to balanced accuracy.
async fn landscape(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<LandscapeQuery>,
) -> ApiResult<Json<LandscapeGrid>> {
    let s = session(&store, &id)?;
    let free = parse_free_pair(&q.free).map_err(|e| ApiError::field("free", e.to_string()))?;
    let range = parse_range(&q.range).map_err(|e| ApiError::field("range", e.to_string()))?;
    if !(q.res > 0.0 && q.res.is_finite()) {
        return Err(ApiError::field("res", format!("res must be > 0, got {}", q.res)));
    }
    if (range.1 - range.0) / q.res > 400.0 {
        return Err(ApiError::field("res", "grid too fine: at most 401 nodes per axis"));
    }
    let (image, gold, network, setup) = {
        let s = s.lock().expect("session poisoned");
        let gold = s
            .gold
            .clone()
            .ok_or_else(|| ApiError::bad_request("landscapes need a gold mask"))?;
        let network = s
            .network
            .clone()
            .ok_or_else(|| ApiError::not_found("no network yet"))?;
        (s.image.clone(), gold, network, s.setup.clone().expect("setup is stored with the network"))
    };
    let refs = upper_weight_refs(&network, free).map_err(|e| ApiError::field("free", e.to_string()))?;
    let objective = match q.objective.unwrap_or(ObjectiveName::Ba) {
        ObjectiveName::A => Objective::ObjectiveA,
        ObjectiveName::Ba => Objective::BalancedAccuracy {
            threshold: setup.arch.threshold,
        },
    };
    let grid = tokio::task::spawn_blocking(move || -> mmnn::Result<LandscapeGrid> {
        let small = image.subsample(setup.subsample)?;
        let small_gold = gold.subsample(setup.subsample)?;
        let pixels = PixelSet::from_image(&small, Some(&small_gold), &setup.arch.features)?;
        sweep(&network, &pixels, refs, [range, range], q.res, &objective)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(grid))
}
