//! OPTIMADE REST API over mounted dataset snapshots.
//!
//! Every dataset mounts at `/archives/<slug>/v1/...`; the root `/v1/links` lists them
//! as child databases. The mount table is swapped as a whole, so a request sees
//! either the old or the new table, never a mixture.

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::Arc;

use arc_swap::ArcSwap;
use axum::extract::{OriginalUri, Path, RawQuery, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::Serialize;
use serde_json::{json, Map, Value};
use tokio::net::TcpListener;

use crate::filter::{parse_filter, FilterAst};
use crate::store::{DatasetSnapshot, StoreError, DEFAULT_PAGE_LIMIT, MAX_PAGE_LIMIT};

pub const API_VERSION: &str = "1.2.0";
pub const MEDIA_TYPE: &str = "application/vnd.api+json";

const LIST_PARAMS: &[&str] = &[
    "filter",
    "page_offset",
    "page_limit",
    "sort",
    "response_fields",
    "response_format",
];
const SINGLE_PARAMS: &[&str] = &["response_fields", "response_format"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provider {
    pub name: String,
    pub description: String,
    pub prefix: String,
}

#[derive(Debug)]
pub struct MountedDataset {
    pub slug: String,
    pub snapshot: DatasetSnapshot,
    pub provider: Provider,
}

impl MountedDataset {
    pub fn new(slug: &str, snapshot: DatasetSnapshot, prefix: &str) -> Result<Self, String> {
        if !is_valid_slug(slug) {
            return Err(format!("invalid slug {slug:?}"));
        }
        let provider = Provider {
            name: slug.to_string(),
            description: snapshot.description.clone(),
            prefix: prefix.to_string(),
        };
        Ok(MountedDataset {
            slug: slug.to_string(),
            snapshot,
            provider,
        })
    }
}

pub type MountTable = BTreeMap<String, Arc<MountedDataset>>;

/// Builds a table keyed by each dataset's slug.
pub fn mount_table(datasets: impl IntoIterator<Item = Arc<MountedDataset>>) -> MountTable {
    datasets.into_iter().map(|d| (d.slug.clone(), d)).collect()
}

pub fn is_valid_slug(slug: &str) -> bool {
    let mut chars = slug.chars();
    matches!(chars.next(), Some('a'..='z' | '0'..='9'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '-'))
}

pub struct ServerState {
    mounts: ArcSwap<MountTable>,
}

impl ServerState {
    pub fn new(table: MountTable) -> Arc<Self> {
        Arc::new(ServerState {
            mounts: ArcSwap::from_pointee(table),
        })
    }

    /// Current table; holding the returned `Arc` pins that version.
    pub fn mounts(&self) -> Arc<MountTable> {
        self.mounts.load_full()
    }

    /// Atomically replaces the whole table and returns the previous one.
    pub fn swap_mounts(&self, table: MountTable) -> Arc<MountTable> {
        self.mounts.swap(Arc::new(table))
    }
}

struct ApiError {
    status: StatusCode,
    detail: String,
}

impl ApiError {
    fn new(status: StatusCode, detail: impl Into<String>) -> Self {
        ApiError {
            status,
            detail: detail.into(),
        }
    }

    fn not_found(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, detail)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::InvalidLimit(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "errors": [{
                "status": self.status.as_u16().to_string(),
                "title": self.status.canonical_reason().unwrap_or("Error"),
                "detail": self.detail,
            }],
            "meta": {"api_version": API_VERSION},
        });
        json_response(self.status, &body)
    }
}

fn json_response(status: StatusCode, body: &Value) -> Response {
    let mut resp = (status, body.to_string()).into_response();
    resp.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static(MEDIA_TYPE));
    resp
}

type ApiResult = Result<Response, ApiError>;

/// Request facts needed for `meta` and `links`.
struct RequestCtx {
    base_url: String,
    path: String,
    query: Option<String>,
}

impl RequestCtx {
    fn new(headers: &HeaderMap, uri: &OriginalUri, query: Option<String>) -> Self {
        let host = headers
            .get(header::HOST)
            .and_then(|h| h.to_str().ok())
            .unwrap_or("localhost");
        RequestCtx {
            base_url: format!("http://{host}"),
            path: uri.path().to_string(),
            query,
        }
    }

    fn representation(&self) -> String {
        match &self.query {
            Some(q) if !q.is_empty() => format!("{}?{q}", self.path),
            _ => self.path.clone(),
        }
    }

    fn pairs(&self) -> Vec<(String, String)> {
        self.query
            .as_deref()
            .map(|q| {
                url::form_urlencoded::parse(q.as_bytes())
                    .into_owned()
                    .collect()
            })
            .unwrap_or_default()
    }

    fn next_url(&self, offset: usize) -> String {
        let mut url = url::Url::parse(&format!("{}{}", self.base_url, self.path))
            .unwrap_or_else(|_| url::Url::parse("http://localhost/").expect("static URL"));
        {
            let mut q = url.query_pairs_mut();
            for (k, v) in self.pairs().iter().filter(|(k, _)| k != "page_offset") {
                q.append_pair(k, v);
            }
            q.append_pair("page_offset", &offset.to_string());
        }
        url.into()
    }
}

struct Meta<'a> {
    provider: &'a Provider,
    data_returned: usize,
    data_available: usize,
    more: bool,
    warnings: Vec<String>,
}

fn meta(ctx: &RequestCtx, m: Meta<'_>) -> Value {
    let mut out = json!({
        "api_version": API_VERSION,
        "query": {"representation": ctx.representation()},
        "data_returned": m.data_returned,
        "data_available": m.data_available,
        "more_data_available": m.more,
        "provider": m.provider,
    });
    if !m.warnings.is_empty() {
        let warnings: Vec<Value> = m
            .warnings
            .into_iter()
            .map(|w| json!({"type": "warning", "detail": w}))
            .collect();
        out["warnings"] = Value::Array(warnings);
    }
    out
}

fn index_provider() -> Provider {
    Provider {
        name: "optimake-forge index".into(),
        description: "Index of the datasets mounted on this server".into(),
        prefix: crate::config::DEFAULT_PROVIDER_PREFIX.into(),
    }
}

#[derive(Default)]
struct Params {
    filter: Option<FilterAst>,
    offset: usize,
    limit: usize,
    sort: Option<String>,
    fields: Option<Vec<String>>,
    warnings: Vec<String>,
}

fn parse_params(pairs: &[(String, String)], allowed: &[&str]) -> Result<Params, ApiError> {
    let mut p = Params {
        limit: DEFAULT_PAGE_LIMIT,
        ..Default::default()
    };
    let mut last: BTreeMap<&str, &str> = BTreeMap::new();
    for (k, v) in pairs {
        if allowed.contains(&k.as_str()) {
            last.insert(k, v);
        } else {
            p.warnings.push(format!(
                "query parameter {k:?} is not supported and was ignored"
            ));
        }
    }
    if let Some(fmt) = last.get("response_format") {
        if *fmt != "json" {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("response_format {fmt:?} is not supported; use json"),
            ));
        }
    }
    if let Some(text) = last.get("filter").filter(|t| !t.trim().is_empty()) {
        p.filter = Some(
            parse_filter(text)
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?,
        );
    }
    let paging = |name: &str, raw: &str| -> Result<usize, ApiError> {
        raw.trim().parse::<usize>().map_err(|_| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("{name} must be a non-negative integer, got {raw:?}"),
            )
        })
    };
    if let Some(raw) = last.get("page_offset") {
        p.offset = paging("page_offset", raw)?;
    }
    if let Some(raw) = last.get("page_limit") {
        p.limit = paging("page_limit", raw)?;
        if p.limit == 0 || p.limit > MAX_PAGE_LIMIT {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!(
                    "page_limit must be between 1 and {MAX_PAGE_LIMIT}, got {}",
                    p.limit
                ),
            ));
        }
    }
    p.sort = last
        .get("sort")
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    if let Some(sort) = &p.sort {
        if sort.contains(',') {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "sorting on more than one property is not supported",
            ));
        }
    }
    p.fields = last.get("response_fields").map(|f| {
        f.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    });
    Ok(p)
}

/// Entry resource, with attributes restricted to `fields` when given.
fn entry_resource(entry: &crate::convert::StructureEntry, fields: Option<&[String]>) -> Value {
    let mut value = serde_json::to_value(entry).expect("entries serialize");
    if let Some(fields) = fields {
        let attrs = value["attributes"].as_object().cloned().unwrap_or_default();
        let projected: Map<String, Value> = fields
            .iter()
            .filter(|f| *f != "id" && *f != "type")
            .map(|f| (f.clone(), attrs.get(f).cloned().unwrap_or(Value::Null)))
            .collect();
        value["attributes"] = Value::Object(projected);
    }
    value
}

fn dataset(state: &ServerState, slug: &str) -> Result<Arc<MountedDataset>, ApiError> {
    state
        .mounts()
        .get(slug)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("no dataset mounted at {slug:?}")))
}

async fn root_links(
    State(state): State<Arc<ServerState>>,
    headers: HeaderMap,
    uri: OriginalUri,
    RawQuery(q): RawQuery,
) -> ApiResult {
    let ctx = RequestCtx::new(&headers, &uri, q);
    let mounts = state.mounts();
    let data: Vec<Value> = mounts
        .values()
        .map(|d| {
            json!({
                "id": d.slug,
                "type": "links",
                "attributes": {
                    "name": d.slug,
                    "description": d.snapshot.description,
                    "base_url": format!("{}/archives/{}", ctx.base_url, d.slug),
                    "homepage": null,
                    "link_type": "child",
                },
            })
        })
        .collect();
    let provider = index_provider();
    let m = Meta {
        provider: &provider,
        data_returned: data.len(),
        data_available: data.len(),
        more: false,
        warnings: vec![],
    };
    Ok(json_response(
        StatusCode::OK,
        &json!({"data": data, "meta": meta(&ctx, m), "links": {"next": null}}),
    ))
}

async fn root_info(headers: HeaderMap, uri: OriginalUri, RawQuery(q): RawQuery) -> ApiResult {
    let ctx = RequestCtx::new(&headers, &uri, q);
    let provider = index_provider();
    let data = info_resource(&ctx.base_url, true);
    let m = Meta {
        provider: &provider,
        data_returned: 1,
        data_available: 1,
        more: false,
        warnings: vec![],
    };
    Ok(json_response(
        StatusCode::OK,
        &json!({"data": data, "meta": meta(&ctx, m)}),
    ))
}

fn info_resource(base_url: &str, is_index: bool) -> Value {
    let (endpoints, entry_types) = if is_index {
        (json!(["info", "links"]), json!([]))
    } else {
        (
            json!(["info", "links", "structures"]),
            json!(["structures"]),
        )
    };
    json!({
        "id": "/",
        "type": "info",
        "attributes": {
            "api_version": API_VERSION,
            "available_api_versions": [{"url": format!("{base_url}/v1"), "version": API_VERSION}],
            "formats": ["json"],
            "available_endpoints": endpoints,
            "entry_types_by_format": {"json": entry_types},
            "is_index": is_index,
        },
    })
}

fn versions_body() -> Response {
    let mut resp = (StatusCode::OK, "version\n1\n").into_response();
    resp.headers_mut().insert(
        header::CONTENT_TYPE,
        HeaderValue::from_static("text/csv; header=present"),
    );
    resp
}

async fn root_versions() -> Response {
    versions_body()
}

async fn dataset_versions(
    State(state): State<Arc<ServerState>>,
    Path(slug): Path<String>,
) -> ApiResult {
    dataset(&state, &slug)?;
    Ok(versions_body())
}

async fn info(
    State(state): State<Arc<ServerState>>,
    Path(slug): Path<String>,
    headers: HeaderMap,
    uri: OriginalUri,
    RawQuery(q): RawQuery,
) -> ApiResult {
    let ds = dataset(&state, &slug)?;
    let ctx = RequestCtx::new(&headers, &uri, q);
    let data = info_resource(&format!("{}/archives/{slug}", ctx.base_url), false);
    let m = Meta {
        provider: &ds.provider,
        data_returned: 1,
        data_available: 1,
        more: false,
        warnings: vec![],
    };
    Ok(json_response(
        StatusCode::OK,
        &json!({"data": data, "meta": meta(&ctx, m)}),
    ))
}

async fn info_structures(
    State(state): State<Arc<ServerState>>,
    Path(slug): Path<String>,
    headers: HeaderMap,
    uri: OriginalUri,
    RawQuery(q): RawQuery,
) -> ApiResult {
    let ds = dataset(&state, &slug)?;
    let ctx = RequestCtx::new(&headers, &uri, q);
    let info = &ds.snapshot.info;
    let data = json!({
        "description": info.description,
        "properties": info.properties,
        "formats": info.formats,
        "output_fields_by_format": info.output_fields_by_format,
    });
    let m = Meta {
        provider: &ds.provider,
        data_returned: 1,
        data_available: 1,
        more: false,
        warnings: vec![],
    };
    Ok(json_response(
        StatusCode::OK,
        &json!({"data": data, "meta": meta(&ctx, m)}),
    ))
}

async fn dataset_links(
    State(state): State<Arc<ServerState>>,
    Path(slug): Path<String>,
    headers: HeaderMap,
    uri: OriginalUri,
    RawQuery(q): RawQuery,
) -> ApiResult {
    let ds = dataset(&state, &slug)?;
    let ctx = RequestCtx::new(&headers, &uri, q);
    let data = json!([{
        "id": "index",
        "type": "links",
        "attributes": {
            "name": "index",
            "description": "Index meta-database of this server",
            "base_url": ctx.base_url,
            "homepage": null,
            "link_type": "root",
        },
    }]);
    let m = Meta {
        provider: &ds.provider,
        data_returned: 1,
        data_available: 1,
        more: false,
        warnings: vec![],
    };
    Ok(json_response(
        StatusCode::OK,
        &json!({"data": data, "meta": meta(&ctx, m), "links": {"next": null}}),
    ))
}

async fn structures(
    State(state): State<Arc<ServerState>>,
    Path(slug): Path<String>,
    headers: HeaderMap,
    uri: OriginalUri,
    RawQuery(q): RawQuery,
) -> ApiResult {
    let ds = dataset(&state, &slug)?;
    let ctx = RequestCtx::new(&headers, &uri, q);
    let params = parse_params(&ctx.pairs(), LIST_PARAMS)?;
    tokio::task::spawn_blocking(move || {
        let snap = &ds.snapshot;
        let page = snap.query(
            params.filter.as_ref(),
            params.offset,
            params.limit,
            params.sort.as_deref(),
        )?;
        let data: Vec<Value> = page
            .items
            .iter()
            .map(|e| entry_resource(e, params.fields.as_deref()))
            .collect();
        let next = page
            .more
            .then(|| ctx.next_url(params.offset + page.items.len()));
        let m = Meta {
            provider: &ds.provider,
            data_returned: data.len(),
            data_available: snap.total(),
            more: page.more,
            warnings: params.warnings,
        };
        let body = json!({"data": data, "meta": meta(&ctx, m), "links": {"next": next}});
        Ok(json_response(StatusCode::OK, &body))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn structure_by_id(
    State(state): State<Arc<ServerState>>,
    Path((slug, id)): Path<(String, String)>,
    headers: HeaderMap,
    uri: OriginalUri,
    RawQuery(q): RawQuery,
) -> ApiResult {
    let ds = dataset(&state, &slug)?;
    let ctx = RequestCtx::new(&headers, &uri, q);
    let params = parse_params(&ctx.pairs(), SINGLE_PARAMS)?;
    let entry = ds
        .snapshot
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("no structure with id {id:?} in {slug:?}")))?;
    let data = entry_resource(entry, params.fields.as_deref());
    let m = Meta {
        provider: &ds.provider,
        data_returned: 1,
        data_available: ds.snapshot.total(),
        more: false,
        warnings: params.warnings,
    };
    Ok(json_response(
        StatusCode::OK,
        &json!({"data": data, "meta": meta(&ctx, m), "links": {"next": null}}),
    ))
}

async fn not_found(uri: OriginalUri) -> ApiError {
    ApiError::not_found(format!("no endpoint at {}", uri.path()))
}

async fn cors(mut resp: Response) -> Response {
    resp.headers_mut().insert(
        header::ACCESS_CONTROL_ALLOW_ORIGIN,
        HeaderValue::from_static("*"),
    );
    resp
}

pub fn router(state: Arc<ServerState>) -> Router {
    Router::new()
        .route("/v1/links", get(root_links))
        .route("/v1/info", get(root_info))
        .route("/versions", get(root_versions))
        .route("/archives/{slug}/versions", get(dataset_versions))
        .route("/archives/{slug}/v1/info", get(info))
        .route("/archives/{slug}/v1/info/structures", get(info_structures))
        .route("/archives/{slug}/v1/links", get(dataset_links))
        .route("/archives/{slug}/v1/structures", get(structures))
        .route("/archives/{slug}/v1/structures/{*id}", get(structure_by_id))
        .fallback(not_found)
        .layer(axum::middleware::map_response(cors))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: Arc<ServerState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
