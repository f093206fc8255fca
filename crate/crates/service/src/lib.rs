//! Stateless HTTP scoring service.
//!
//! Three endpoints, all JSON:
//!
//! | method | path             | body                    | reply                    |
//! |--------|------------------|-------------------------|--------------------------|
//! | POST   | `/v1/score`       | [`ScoreRequest`]        | [`ScoreResponse`]        |
//! | POST   | `/v1/score_batch` | array of `ScoreRequest` | array of `ScoreResponse` |
//! | GET    | `/healthz`        | none                    | [`Health`]               |
//!
//! Malformed bodies and invalid ground truths are rejected with status 400
//! and a body of the form `{"error": "..."}`. A trace that fails to parse is
//! not an error: it scores normally with `verdict.matches == false`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tvg_anchor::{score_text, FormatVerdict, RewardBreakdown, RewardConfig, TimeInterval};

pub const DEFAULT_MAX_BATCH: usize = 1024;
pub const DEFAULT_PORT: u16 = 8080;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Optional per-request overrides of the reward configuration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_anchor_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_score: Option<f64>,
}

impl ConfigOverrides {
    pub fn apply(&self, base: &RewardConfig) -> RewardConfig {
        RewardConfig {
            beta: self.beta.unwrap_or(base.beta),
            gamma: self.gamma.unwrap_or(base.gamma),
            target_anchor_count: self.target_anchor_count.unwrap_or(base.target_anchor_count),
            format_score: self.format_score.unwrap_or(base.format_score),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub raw_text: String,
    pub gt_start: f64,
    pub gt_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigOverrides>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub verdict: FormatVerdict,
    pub anchors: Vec<[f64; 2]>,
    pub answer: Option<[f64; 2]>,
    pub breakdown: RewardBreakdown,
    pub per_anchor_siou: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

/// Why a request was rejected; always reported as status 400.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RequestError {
    #[error("invalid JSON body: {0}")]
    Schema(String),
    #[error(
        "gt_end ({end}) must be greater than gt_start ({start}), both finite and non-negative"
    )]
    GroundTruth { start: f64, end: f64 },
    #[error("config override `{0}` must be finite")]
    Config(&'static str),
    #[error("batch of {size} exceeds the limit of {max}")]
    BatchTooLarge { size: usize, max: usize },
    #[error("item {index}: {source}")]
    BatchItem {
        index: usize,
        #[source]
        source: Box<RequestError>,
    },
}

impl IntoResponse for RequestError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.to_string() });
        (StatusCode::BAD_REQUEST, Json(body)).into_response()
    }
}

/// Immutable settings shared by every handler.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub max_batch: usize,
    pub reward: RewardConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_batch: DEFAULT_MAX_BATCH,
            reward: RewardConfig::default(),
        }
    }
}

fn pair(iv: TimeInterval) -> [f64; 2] {
    [iv.start(), iv.end()]
}

/// Scores one request exactly as the `/v1/score` endpoint does.
pub fn score_request(
    req: &ScoreRequest,
    base: &RewardConfig,
) -> Result<ScoreResponse, RequestError> {
    let bad_gt = RequestError::GroundTruth {
        start: req.gt_start,
        end: req.gt_end,
    };
    if req.gt_end <= req.gt_start {
        return Err(bad_gt);
    }
    let gt = TimeInterval::new(req.gt_start, req.gt_end).map_err(|_| bad_gt)?;
    let cfg = req.config.unwrap_or_default().apply(base);
    if let Err(tvg_anchor::RewardError::InvalidConfig { field }) = cfg.validate() {
        return Err(RequestError::Config(field));
    }
    let (trace, breakdown) = score_text(&req.raw_text, gt, &cfg).map_err(|e| {
        // Only a degenerate union can fail here, which a positive-length
        // ground truth rules out.
        RequestError::Schema(e.to_string())
    })?;
    Ok(ScoreResponse {
        verdict: trace.verdict().clone(),
        anchors: trace.anchors().iter().copied().map(pair).collect(),
        answer: trace.answer().map(pair),
        per_anchor_siou: breakdown.per_anchor_siou.clone(),
        breakdown,
    })
}

/// Scores a batch in order, failing on the first invalid item.
pub fn score_batch(
    reqs: &[ScoreRequest],
    cfg: &ServiceConfig,
) -> Result<Vec<ScoreResponse>, RequestError> {
    if reqs.len() > cfg.max_batch {
        return Err(RequestError::BatchTooLarge {
            size: reqs.len(),
            max: cfg.max_batch,
        });
    }
    reqs.iter()
        .enumerate()
        .map(|(index, r)| {
            score_request(r, &cfg.reward).map_err(|e| RequestError::BatchItem {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

fn decode<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, RequestError> {
    serde_json::from_slice(body).map_err(|e| RequestError::Schema(e.to_string()))
}

async fn score_handler(
    State(cfg): State<Arc<ServiceConfig>>,
    body: Bytes,
) -> Result<Json<ScoreResponse>, RequestError> {
    let req: ScoreRequest = decode(&body)?;
    score_request(&req, &cfg.reward).map(Json)
}

async fn batch_handler(
    State(cfg): State<Arc<ServiceConfig>>,
    body: Bytes,
) -> Result<Json<Vec<ScoreResponse>>, RequestError> {
    let reqs: Vec<ScoreRequest> = decode(&body)?;
    score_batch(&reqs, &cfg).map(Json)
}

async fn health_handler() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: VERSION.into(),
    })
}

pub fn router(cfg: ServiceConfig) -> Router {
    Router::new()
        .route("/v1/score", post(score_handler))
        .route("/v1/score_batch", post(batch_handler))
        .route("/healthz", get(health_handler))
        .with_state(Arc::new(cfg))
}

/// Serves on `listener` until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, cfg: ServiceConfig) -> std::io::Result<()> {
    axum::serve(listener, router(cfg))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn run(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve(listener, cfg).await
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(raw: &str, s: f64, e: f64) -> ScoreRequest {
        ScoreRequest {
            raw_text: raw.into(),
            gt_start: s,
            gt_end: e,
            config: None,
        }
    }

    #[test]
    fn sit_down_request() {
        let raw = "<think>a <timestamp>8.6s to 18.5s</timestamp> b \
                   <timestamp>11.3s to 16.2s</timestamp></think>\n<answer>11.3s to 16.2s</answer>";
        let r = score_request(&req(raw, 11.3, 16.6), &RewardConfig::default()).unwrap();
        assert!(r.verdict.matches);
        assert_eq!(r.anchors, vec![[8.6, 18.5], [11.3, 16.2]]);
        assert!((r.breakdown.total - 7.308).abs() < 1e-3);
    }

    #[test]
    fn garbage_scores_zero() {
        let r = score_request(&req("what?", 1.0, 2.0), &RewardConfig::default()).unwrap();
        assert!(!r.verdict.matches);
        assert_eq!(r.breakdown.total, 0.0);
    }

    #[test]
    fn ground_truth_must_be_increasing() {
        let base = RewardConfig::default();
        assert!(score_request(&req("", 2.0, 2.0), &base).is_err());
        assert!(score_request(&req("", 3.0, 2.0), &base).is_err());
        assert!(score_request(&req("", -1.0, 2.0), &base).is_err());
        assert!(score_request(&req("", 1.0, f64::INFINITY), &base).is_err());
    }

    #[test]
    fn overrides_are_merged() {
        let o = ConfigOverrides {
            beta: Some(2.0),
            ..Default::default()
        };
        let cfg = o.apply(&RewardConfig::default());
        assert_eq!(cfg.beta, 2.0);
        assert_eq!(cfg.gamma, 1.0);
    }
}
