//! JSON over HTTP.
//!
//! [`App`] holds the shared state and exposes one method per route; the
//! axum handlers only decode requests, call those methods and encode the
//! result. Every error body has the [`ApiError`] shape.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::ledger::{
    FileSink, Ledger, LedgerError, NotificationSink, Reporter, RequestFilter, ServiceRequest,
    Status,
};
use crate::model::{self, vocab, ContactCard, FixtureSource};
use crate::nlq::{self, AliasDictionary, NlqError, Resolution};
use crate::rdf::{Term, TripleStore};
use crate::sparql::{self, ResultTable};
use crate::syntax::ParseDiagnostic;

pub const STATUS_SECRET_HEADER: &str = "x-status-secret";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    pub http_status: u16,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Vec<ParseDiagnostic>>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            http_status: status.as_u16(),
            code,
            message: message.into(),
            candidates: None,
            diagnostics: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NOT_FOUND", message)
    }

    pub fn status(&self) -> StatusCode {
        StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
    }
}

impl From<NlqError> for ApiError {
    fn from(e: NlqError) -> Self {
        let message = e.to_string();
        let iris = |ts: &[Term]| Some(ts.iter().map(|t| t.value().to_string()).collect());
        match &e {
            NlqError::MissingSubject => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "MISSING_SUBJECT", message)
            }
            NlqError::MissingLocation => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "MISSING_LOCATION",
                message,
            ),
            NlqError::AmbiguousSubject(c) => Self {
                candidates: iris(c),
                ..Self::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "AMBIGUOUS_SUBJECT",
                    message,
                )
            },
            NlqError::AmbiguousLocation(c) => Self {
                candidates: iris(c),
                ..Self::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "AMBIGUOUS_LOCATION",
                    message,
                )
            },
            NlqError::NoMatchingService { .. } => {
                Self::new(StatusCode::NOT_FOUND, "NO_MATCHING_SERVICE", message)
            }
            NlqError::MultipleMatches { .. } => Self::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "MULTIPLE_MATCHES",
                message,
            ),
            NlqError::Model(_) => Self::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "INVALID_CATALOGUE",
                message,
            ),
        }
    }
}

impl From<LedgerError> for ApiError {
    fn from(e: LedgerError) -> Self {
        let message = e.to_string();
        match e {
            LedgerError::UnknownRequest(_) => Self::not_found(message),
            LedgerError::IllegalTransition { .. } => {
                Self::new(StatusCode::CONFLICT, "ILLEGAL_TRANSITION", message)
            }
            LedgerError::InvalidReporter => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "INVALID_REPORTER",
                message,
            ),
            LedgerError::StorageFailure(_) | LedgerError::CorruptLedger { .. } => Self::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "STORAGE_FAILURE",
                message,
            ),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

/// Full IRI plus a display label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IriDoc {
    pub iri: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResolutionDoc {
    pub subject: IriDoc,
    pub location: IriDoc,
    pub type311: IriDoc,
    pub agency: IriDoc,
    pub action: IriDoc,
    pub thing: IriDoc,
    pub contact: ContactCard,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RequestDoc {
    #[serde(flatten)]
    pub request: ServiceRequest,
    /// Statuses this request may legally move to next.
    pub next_statuses: Vec<Status>,
}

impl From<ServiceRequest> for RequestDoc {
    fn from(request: ServiceRequest) -> Self {
        let next_statuses = request.status.successors();
        Self {
            request,
            next_statuses,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubmitDoc {
    pub request: RequestDoc,
    pub resolution: ResolutionDoc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ServiceDoc {
    pub subject: IriDoc,
    pub locations: Vec<IriDoc>,
    pub agency: IriDoc,
    pub action: IriDoc,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SubmitBody {
    pub description: String,
    pub reporter: Reporter,
}

#[derive(Debug, Clone, Deserialize)]
pub struct QueryBody {
    pub description: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SparqlBody {
    pub query: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct StatusBody {
    pub status: Status,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct FilterParams {
    pub status: Option<String>,
    pub agency: Option<String>,
    pub location: Option<String>,
}

/// Shared state behind every route.
pub struct App {
    store: Arc<TripleStore>,
    dictionary: Arc<AliasDictionary>,
    ledger: Arc<Ledger>,
    sink: Arc<dyn NotificationSink>,
    status_secret: Option<String>,
}

impl App {
    pub fn new(
        store: Arc<TripleStore>,
        dictionary: Arc<AliasDictionary>,
        ledger: Arc<Ledger>,
        sink: Arc<dyn NotificationSink>,
        status_secret: Option<String>,
    ) -> Self {
        Self {
            store,
            dictionary,
            ledger,
            sink,
            status_secret,
        }
    }

    pub fn store(&self) -> &TripleStore {
        &self.store
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    fn iri_doc(&self, term: &Term) -> IriDoc {
        IriDoc {
            iri: term.value().to_string(),
            label: self.store.display_label(term),
        }
    }

    pub fn resolution_doc(&self, r: &Resolution) -> ResolutionDoc {
        ResolutionDoc {
            subject: self.iri_doc(&r.slots.subject),
            location: self.iri_doc(&r.slots.location),
            type311: self.iri_doc(&r.type311),
            agency: self.iri_doc(&r.agency),
            action: self.iri_doc(&r.action),
            thing: self.iri_doc(&r.thing),
            contact: r.contact.clone(),
            note: r.note.clone(),
        }
    }

    fn resolve(&self, description: &str) -> Result<Resolution, ApiError> {
        if description.trim().is_empty() {
            return Err(ApiError::bad_request("description must not be empty"));
        }
        Ok(nlq::answer_complaint(
            description,
            &self.store,
            &self.dictionary,
        )?)
    }

    /// `POST /requests`
    pub fn submit(&self, body: SubmitBody) -> Result<SubmitDoc, ApiError> {
        let resolution = self.resolve(&body.description)?;
        let request = self.ledger.create_request(
            &resolution,
            body.reporter,
            &body.description,
            self.sink.as_ref(),
        )?;
        Ok(SubmitDoc {
            request: request.into(),
            resolution: self.resolution_doc(&resolution),
        })
    }

    /// `POST /query`: resolve without recording anything.
    pub fn query(&self, body: QueryBody) -> Result<ResolutionDoc, ApiError> {
        self.resolve(&body.description)
            .map(|r| self.resolution_doc(&r))
    }

    /// `POST /sparql`
    pub fn sparql(&self, query: &str) -> Result<ResultTable, ApiError> {
        sparql::run_query(query, &self.store).map_err(|e| ApiError {
            diagnostics: Some(e.0.clone()),
            ..ApiError::new(StatusCode::BAD_REQUEST, "PARSE_ERROR", e.to_string())
        })
    }

    /// `GET /services`
    pub fn services(&self) -> Vec<ServiceDoc> {
        model::services(&self.store)
            .iter()
            .map(|s| ServiceDoc {
                subject: self.iri_doc(&s.subject),
                locations: s.locations.iter().map(|l| self.iri_doc(l)).collect(),
                agency: self.iri_doc(&s.agency),
                action: self.iri_doc(&s.action),
            })
            .collect()
    }

    /// `GET /agencies`
    pub fn agencies(&self) -> Vec<ContactCard> {
        model::agencies(&self.store)
            .iter()
            .filter_map(|a| model::agency_contact(&self.store, a).ok())
            .collect()
    }

    /// `GET /requests`. Agency and location accept a full IRI or a bare
    /// ontology local name.
    pub fn requests(&self, params: &FilterParams) -> Result<Vec<RequestDoc>, ApiError> {
        let expand = |v: &String| {
            if v.contains(':') {
                v.clone()
            } else {
                vocab::iri(v)
            }
        };
        let filter = RequestFilter {
            status: params
                .status
                .as_deref()
                .map(str::parse)
                .transpose()
                .map_err(ApiError::bad_request)?,
            agency: params.agency.as_ref().map(expand),
            location: params.location.as_ref().map(expand),
        };
        Ok(self
            .ledger
            .list_requests(&filter)
            .into_iter()
            .map(RequestDoc::from)
            .collect())
    }

    /// `GET /requests/{id}`
    pub fn request(&self, id: &str) -> Result<RequestDoc, ApiError> {
        self.ledger
            .get(id)
            .map(RequestDoc::from)
            .ok_or_else(|| ApiError::not_found(format!("unknown request {id}")))
    }

    /// `PATCH /requests/{id}/status`
    pub fn update_status(
        &self,
        id: &str,
        secret: Option<&str>,
        body: StatusBody,
    ) -> Result<RequestDoc, ApiError> {
        if let Some(expected) = &self.status_secret {
            if secret != Some(expected.as_str()) {
                return Err(ApiError::new(
                    StatusCode::UNAUTHORIZED,
                    "UNAUTHORIZED",
                    format!("missing or wrong {STATUS_SECRET_HEADER} header"),
                ));
            }
        }
        Ok(self
            .ledger
            .update_status(id, body.status, &body.note)?
            .into())
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))?
}

async fn services_route(State(app): State<Arc<App>>) -> Json<Vec<ServiceDoc>> {
    Json(app.services())
}

async fn agencies_route(State(app): State<Arc<App>>) -> Json<Vec<ContactCard>> {
    Json(app.agencies())
}

async fn submit_route(
    State(app): State<Arc<App>>,
    body: Bytes,
) -> Result<(StatusCode, Json<SubmitDoc>), ApiError> {
    let body: SubmitBody = parse_json(&body)?;
    let doc = blocking(move || app.submit(body)).await?;
    Ok((StatusCode::CREATED, Json(doc)))
}

async fn query_route(
    State(app): State<Arc<App>>,
    body: Bytes,
) -> Result<Json<ResolutionDoc>, ApiError> {
    let body: QueryBody = parse_json(&body)?;
    app.query(body).map(Json)
}

/// Accepts `{"query": "..."}` or the raw query text.
async fn sparql_route(
    State(app): State<Arc<App>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<ResultTable>, ApiError> {
    let is_json = headers
        .get(axum::http::header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let text = if is_json {
        parse_json::<SparqlBody>(&body)?.query
    } else {
        String::from_utf8(body.to_vec())
            .map_err(|_| ApiError::bad_request("query must be UTF-8"))?
    };
    app.sparql(&text).map(Json)
}

async fn list_route(
    State(app): State<Arc<App>>,
    Query(params): Query<FilterParams>,
) -> Result<Json<Vec<RequestDoc>>, ApiError> {
    app.requests(&params).map(Json)
}

async fn show_route(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
) -> Result<Json<RequestDoc>, ApiError> {
    app.request(&id).map(Json)
}

async fn status_route(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<RequestDoc>, ApiError> {
    let body: StatusBody = parse_json(&body)?;
    let secret = headers
        .get(STATUS_SECRET_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    blocking(move || app.update_status(&id, secret.as_deref(), body))
        .await
        .map(Json)
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such route")
}

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/services", get(services_route))
        .route("/agencies", get(agencies_route))
        .route("/requests", post(submit_route).get(list_route))
        .route("/requests/{id}", get(show_route))
        .route("/requests/{id}/status", patch(status_route))
        .route("/query", post(query_route))
        .route("/sparql", post(sparql_route))
        .fallback(fallback)
        .method_not_allowed_fallback(fallback)
        .with_state(app)
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub fixture: FixtureSource,
    /// Directory with the dictionary files; the built-in dictionary when unset.
    pub dictionary: Option<PathBuf>,
    pub ledger: PathBuf,
    pub outbox: PathBuf,
    pub status_secret: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Fixture(#[from] model::FixtureInvalid),
    #[error(transparent)]
    Dictionary(#[from] nlq::DictionaryError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("cannot bind {0}: {1}")]
    Bind(SocketAddr, std::io::Error),
}

/// Load fixture, dictionary and ledger; any failure aborts startup.
pub fn load_app(config: &ServerConfig) -> Result<App, StartupError> {
    let store = model::load_source(&config.fixture)?;
    let dictionary = match &config.dictionary {
        Some(dir) => AliasDictionary::load(dir)?,
        None => AliasDictionary::builtin(),
    };
    let ledger = Ledger::reload(&config.ledger)?;
    Ok(App::new(
        Arc::new(store),
        Arc::new(dictionary),
        Arc::new(ledger),
        Arc::new(FileSink::new(&config.outbox)),
        config.status_secret.clone(),
    ))
}

/// Load the app and bind its listener.
pub async fn bind(config: &ServerConfig) -> Result<(tokio::net::TcpListener, App), StartupError> {
    let app = load_app(config)?;
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|e| StartupError::Bind(config.bind, e))?;
    Ok((listener, app))
}

/// Serve on `listener` until ctrl-c.
pub async fn run(listener: tokio::net::TcpListener, app: App) -> Result<(), StartupError> {
    let local = listener
        .local_addr()
        .map_err(|e| StartupError::Bind(SocketAddr::from(([0, 0, 0, 0], 0)), e))?;
    tracing::info!(%local, "serving");
    axum::serve(listener, router(Arc::new(app)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| StartupError::Bind(local, e))
}

pub async fn serve(config: ServerConfig) -> Result<(), StartupError> {
    let (listener, app) = bind(&config).await?;
    run(listener, app).await
}
