//! Python bindings. Documents cross the boundary as plain dicts and lists.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use civic311::api::{ApiError, App, FilterParams, QueryBody, StatusBody, SubmitBody};
use civic311::ledger::{FileSink, Ledger, NotificationSink, RecordingSink, Reporter, Status};
use civic311::model::{self, FixtureSource};
use civic311::nlq::AliasDictionary;
use civic311::{turtle, PrefixMap};

create_exception!(civic311_rs, Civic311Error, PyException);

fn api_err(e: ApiError) -> PyErr {
    Civic311Error::new_err((e.code, e.message))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A loaded catalogue, alias dictionary and request ledger.
#[pyclass(frozen)]
struct Engine {
    app: App,
}

#[pymethods]
impl Engine {
    /// `fixture` is `replica`, `full`, or a path to a `.ttl` file. Without
    /// `ledger` requests live in memory; without `outbox` notifications are
    /// recorded but not written.
    #[new]
    #[pyo3(signature = (fixture = "replica", ledger = None, outbox = None, dictionary = None))]
    fn new(
        fixture: &str,
        ledger: Option<PathBuf>,
        outbox: Option<PathBuf>,
        dictionary: Option<PathBuf>,
    ) -> PyResult<Self> {
        let source: FixtureSource = fixture.parse().map_err(PyValueError::new_err::<String>)?;
        let store =
            model::load_source(&source).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let dictionary = match dictionary {
            Some(dir) => {
                AliasDictionary::load(&dir).map_err(|e| PyValueError::new_err(e.to_string()))?
            }
            None => AliasDictionary::builtin(),
        };
        let ledger = match ledger {
            Some(path) => Ledger::reload(&path)
                .map_err(|e| Civic311Error::new_err(("STORAGE_FAILURE", e.to_string())))?,
            None => Ledger::in_memory(),
        };
        let sink: Arc<dyn NotificationSink> = match outbox {
            Some(dir) => Arc::new(FileSink::new(dir)),
            None => Arc::new(RecordingSink::new()),
        };
        Ok(Self {
            app: App::new(
                Arc::new(store),
                Arc::new(dictionary),
                Arc::new(ledger),
                sink,
                None,
            ),
        })
    }

    #[getter]
    fn triple_count(&self) -> usize {
        self.app.store().len()
    }

    /// Run a SELECT query; returns `{"columns": [...], "rows": [...]}`.
    fn query<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
        let table = self.app.sparql(text).map_err(api_err)?;
        to_py(py, &table)
    }

    /// Resolve a plain-language complaint to its agency and action.
    fn ask<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
        let doc = self
            .app
            .query(QueryBody {
                description: text.to_string(),
            })
            .map_err(api_err)?;
        to_py(py, &doc)
    }

    /// Resolve a complaint, record it, and notify the agency.
    #[pyo3(signature = (text, contact, name = ""))]
    fn report<'py>(
        &self,
        py: Python<'py>,
        text: &str,
        contact: &str,
        name: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let doc = self
            .app
            .submit(SubmitBody {
                description: text.to_string(),
                reporter: Reporter {
                    name: name.to_string(),
                    contact: contact.to_string(),
                },
            })
            .map_err(api_err)?;
        to_py(py, &doc)
    }

    #[pyo3(signature = (status = None, agency = None, location = None))]
    fn requests<'py>(
        &self,
        py: Python<'py>,
        status: Option<String>,
        agency: Option<String>,
        location: Option<String>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let docs = self
            .app
            .requests(&FilterParams {
                status,
                agency,
                location,
            })
            .map_err(api_err)?;
        to_py(py, &docs)
    }

    fn request<'py>(&self, py: Python<'py>, id: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.app.request(id).map_err(api_err)?)
    }

    #[pyo3(signature = (id, status, note = ""))]
    fn set_status<'py>(
        &self,
        py: Python<'py>,
        id: &str,
        status: &str,
        note: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let status: Status = status.parse().map_err(PyValueError::new_err::<String>)?;
        let doc = self
            .app
            .update_status(
                id,
                None,
                StatusBody {
                    status,
                    note: note.to_string(),
                },
            )
            .map_err(api_err)?;
        to_py(py, &doc)
    }

    fn services<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.app.services())
    }

    fn agencies<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.app.agencies())
    }

    /// Violations found in the loaded catalogue, as strings.
    fn validate(&self) -> Vec<String> {
        model::validate_store(self.app.store())
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    /// The catalogue as Turtle.
    fn turtle(&self) -> String {
        let triples: Vec<_> = self.app.store().iter().collect();
        turtle::serialize(&triples, &model::prefixes())
    }
}

/// Parse Turtle text into `(subject, predicate, object)` string triples.
/// Raises `ValueError` listing every diagnostic on failure.
#[pyfunction]
fn parse_turtle(text: &str) -> PyResult<Vec<(String, String, String)>> {
    let (triples, _) = turtle::parse_document(text, &PrefixMap::new())
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(triples
        .iter()
        .map(|t| {
            (
                t.subject().value().to_string(),
                t.predicate().value().to_string(),
                t.object().value().to_string(),
            )
        })
        .collect())
}

#[pymodule]
fn civic311_rs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Engine>()?;
    m.add_function(wrap_pyfunction!(parse_turtle, m)?)?;
    m.add("Civic311Error", m.py().get_type::<Civic311Error>())?;
    Ok(())
}
