//! Pieces of the `ups` binary that tests call directly.

use std::path::Path;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::http::{header, HeaderMap, Method as HttpMethod, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;

use ups_core::audit::statement_for;
use ups_core::gateway::{ApiRequest, Gateway, Method};
use ups_core::scenario::{run_bundled, run_script, ScenarioReport};
use ups_core::store::durable_prefix;
use ups_core::validate_aadhaar;

/// Every request goes to the gateway; routing happens there.
pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new().fallback(move |method: HttpMethod, uri: Uri, headers: HeaderMap, body: Bytes| {
        let gateway = gateway.clone();
        async move {
            let path = uri.path_and_query().map_or_else(|| uri.path().to_string(), |p| p.to_string());
            let mut req = ApiRequest::new(Method::parse(method.as_str()), &path);
            for (name, value) in &headers {
                if let Ok(v) = value.to_str() {
                    req = req.with_header(name.as_str(), v);
                }
            }
            req.body = body.to_vec();
            match tokio::task::spawn_blocking(move || gateway.handle(&req)).await {
                Ok(resp) => Response::builder()
                    .status(resp.status)
                    .header(header::CONTENT_TYPE, resp.content_type)
                    .body(Body::from(resp.body))
                    .expect("valid response"),
                Err(_) => (StatusCode::INTERNAL_SERVER_ERROR, "handler panicked").into_response(),
            }
        }
    })
}

/// Runs the named script files, or the bundled corpus when `files` is empty.
pub fn scenarios(files: &[impl AsRef<Path>]) -> std::io::Result<Vec<ScenarioReport>> {
    if files.is_empty() {
        return Ok(run_bundled());
    }
    files
        .iter()
        .map(|f| {
            let path = f.as_ref();
            let text = std::fs::read_to_string(path)?;
            let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
            Ok(run_script(&name, &text))
        })
        .collect()
}

/// The rendered statement of `wallet` from the log at `log`.
pub fn audit(log: &Path, wallet: &str) -> Result<String, String> {
    let owner = validate_aadhaar(wallet).map_err(|e| format!("{wallet}: {e}"))?;
    let bytes = std::fs::read(log).map_err(|e| format!("{}: {e}", log.display()))?;
    let prefix = durable_prefix(&bytes).map_err(|e| e.to_string())?;
    let statement = statement_for(&prefix.events, owner).map_err(|e| e.to_string())?;
    Ok(statement.render())
}
