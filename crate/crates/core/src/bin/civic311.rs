//! Operator command line.
//!
//! Exit codes: 0 success, 1 user or input error, 2 internal error.

use std::io::Read;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use civic311::api::{
    self, ApiError, App, FilterParams, QueryBody, RequestDoc, ResolutionDoc, ServerConfig,
    SubmitBody,
};
use civic311::ledger::{FileSink, Ledger, NotificationSink, Reporter, Status};
use civic311::model::{self, FixtureSource};
use civic311::nlq::AliasDictionary;
use civic311::turtle::{parse_document, PrefixMap};
use civic311::TripleStore;

#[derive(Debug, Parser)]
#[command(name = "civic311", version, about = "Open311 civic-event engine")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// `replica`, `full`, or a path to a .ttl file.
    #[arg(
        long,
        global = true,
        env = "CIVIC311_FIXTURE",
        default_value = "replica"
    )]
    fixture: FixtureSource,
    /// Directory holding aliases.tsv, stopwords.txt and lemma_exceptions.tsv.
    #[arg(long, global = true, env = "CIVIC311_DICTIONARY")]
    dictionary: Option<PathBuf>,
    #[arg(
        long,
        global = true,
        env = "CIVIC311_LEDGER",
        default_value = "ledger.jsonl"
    )]
    ledger: PathBuf,
    #[arg(long, global = true, env = "CIVIC311_OUTBOX", default_value = "outbox")]
    outbox: PathBuf,
    #[arg(long, global = true, env = "CIVIC311_FORMAT", value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a SELECT query. TEXT may be `@file`; stdin when omitted or `-`.
    Query { text: Option<String> },
    /// Resolve a complaint written in plain language.
    Ask {
        text: Option<String>,
        /// Also record a service request and notify the agency.
        #[arg(long, requires = "contact")]
        report: bool,
        #[arg(long, default_value = "")]
        name: String,
        #[arg(long)]
        contact: Option<String>,
    },
    /// Check every thing in a fixture for its five property assertions.
    Validate {
        /// Defaults to --fixture.
        #[arg(value_name = "FIXTURE")]
        target: Option<FixtureSource>,
    },
    /// Inspect or update the service-request ledger.
    #[command(subcommand)]
    Requests(RequestsCommand),
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "CIVIC311_BIND", default_value = "127.0.0.1:8311")]
        bind: SocketAddr,
        /// Shared secret required on status updates.
        #[arg(long, env = "CIVIC311_STATUS_SECRET")]
        status_secret: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
enum RequestsCommand {
    List {
        #[arg(long)]
        status: Option<String>,
        #[arg(long)]
        agency: Option<String>,
        #[arg(long)]
        location: Option<String>,
    },
    Show {
        id: String,
    },
    SetStatus {
        id: String,
        status: Status,
        #[arg(long, default_value = "")]
        note: String,
    },
}

enum Failure {
    User(String),
    Internal(String),
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        let mut msg = format!("{}: {}", e.code, e.message);
        for c in e.candidates.iter().flatten() {
            msg.push_str(&format!("\n  candidate: {c}"));
        }
        for d in e.diagnostics.iter().flatten() {
            msg.push_str(&format!("\n  {d}"));
        }
        if e.http_status >= 500 {
            Failure::Internal(msg)
        } else {
            Failure::User(msg)
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let g = &cli.global;
    match cli.command {
        Command::Query { text } => {
            let app = app(g, Ledger::in_memory())?;
            let table = app.sparql(&read_input(text)?)?;
            match g.format {
                Format::Table => print!("{}", table.render()),
                Format::Json => print_json(&table),
            }
            Ok(())
        }
        Command::Ask {
            text,
            report,
            name,
            contact,
        } => {
            let description = read_input(text)?;
            if report {
                let app = app(g, open_ledger(&g.ledger)?)?;
                let doc = app.submit(SubmitBody {
                    description,
                    reporter: Reporter {
                        name,
                        contact: contact.unwrap_or_default(),
                    },
                })?;
                match g.format {
                    Format::Table => {
                        print_resolution(&doc.resolution);
                        println!("request: {}", doc.request.request.id);
                        println!("status: {}", doc.request.request.status);
                    }
                    Format::Json => print_json(&doc),
                }
            } else {
                let app = app(g, Ledger::in_memory())?;
                let doc = app.query(QueryBody { description })?;
                match g.format {
                    Format::Table => print_resolution(&doc),
                    Format::Json => print_json(&doc),
                }
            }
            Ok(())
        }
        Command::Validate { target } => validate(target.as_ref().unwrap_or(&g.fixture), g.format),
        Command::Requests(cmd) => {
            let app = app(g, open_ledger(&g.ledger)?)?;
            match cmd {
                RequestsCommand::List {
                    status,
                    agency,
                    location,
                } => {
                    let docs = app.requests(&FilterParams {
                        status,
                        agency,
                        location,
                    })?;
                    match g.format {
                        Format::Table => {
                            println!("id\tcreated_at\tstatus\tsubject\tlocation\tagency");
                            for d in &docs {
                                print_request_row(d);
                            }
                        }
                        Format::Json => print_json(&docs),
                    }
                }
                RequestsCommand::Show { id } => {
                    let doc = app.request(&id)?;
                    print_request(&doc, g.format);
                }
                RequestsCommand::SetStatus { id, status, note } => {
                    let doc = app
                        .ledger()
                        .update_status(&id, status, &note)
                        .map_err(ApiError::from)?;
                    print_request(&doc.into(), g.format);
                }
            }
            Ok(())
        }
        Command::Serve {
            bind,
            status_secret,
        } => {
            let config = ServerConfig {
                bind,
                fixture: g.fixture.clone(),
                dictionary: g.dictionary.clone(),
                ledger: g.ledger.clone(),
                outbox: g.outbox.clone(),
                status_secret,
            };
            let runtime =
                tokio::runtime::Runtime::new().map_err(|e| Failure::Internal(e.to_string()))?;
            let startup = |e: api::StartupError| match e {
                api::StartupError::Bind(..) => Failure::Internal(e.to_string()),
                other => Failure::User(other.to_string()),
            };
            runtime.block_on(async {
                let (listener, app) = api::bind(&config).await.map_err(startup)?;
                if let Ok(addr) = listener.local_addr() {
                    println!("listening on http://{addr}");
                }
                api::run(listener, app).await.map_err(startup)
            })
        }
    }
}

fn app(g: &Global, ledger: Ledger) -> Result<App, Failure> {
    let store = model::load_source(&g.fixture).map_err(|e| Failure::User(e.to_string()))?;
    let dictionary = match &g.dictionary {
        Some(dir) => AliasDictionary::load(dir).map_err(|e| Failure::User(e.to_string()))?,
        None => AliasDictionary::builtin(),
    };
    let sink: Arc<dyn NotificationSink> = Arc::new(FileSink::new(&g.outbox));
    Ok(App::new(
        Arc::new(store),
        Arc::new(dictionary),
        Arc::new(ledger),
        sink,
        None,
    ))
}

fn open_ledger(path: &Path) -> Result<Ledger, Failure> {
    Ledger::reload(path).map_err(|e| Failure::User(e.to_string()))
}

/// Literal text, `@path`, or stdin for `-` / absent.
fn read_input(arg: Option<String>) -> Result<String, Failure> {
    match arg.as_deref() {
        Some("-") | None => {
            let mut buf = String::new();
            std::io::stdin()
                .read_to_string(&mut buf)
                .map_err(|e| Failure::User(format!("cannot read stdin: {e}")))?;
            Ok(buf)
        }
        Some(s) => match s.strip_prefix('@') {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| Failure::User(format!("cannot read {path}: {e}"))),
            None => Ok(s.to_string()),
        },
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("documents serialize")
    );
}

fn print_resolution(doc: &ResolutionDoc) {
    println!("subject: {}", doc.subject.label);
    println!("location: {}", doc.location.label);
    println!("type: {}", doc.type311.label);
    println!("action: {}", doc.action.label);
    println!(
        "agency: {} ({})",
        civic311::rdf::Term::Iri(doc.agency.iri.clone()).local_name(),
        doc.agency.label
    );
    if !doc.contact.email.is_empty() {
        println!("email: {}", doc.contact.email);
    }
    if !doc.contact.phone.is_empty() {
        println!("phone: {}", doc.contact.phone);
    }
    if !doc.contact.governing_body.is_empty() {
        println!("governing body: {}", doc.contact.governing_body);
    }
    if let Some(note) = &doc.note {
        println!("note: {note}");
    }
}

fn short(iri: &str) -> String {
    civic311::rdf::Term::Iri(iri.to_string()).local_name()
}

fn print_request_row(doc: &RequestDoc) {
    let r = &doc.request;
    println!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        r.id,
        r.created_at
            .to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
        r.status,
        short(&r.subject),
        short(&r.location),
        short(&r.agency)
    );
}

fn print_request(doc: &RequestDoc, format: Format) {
    if format == Format::Json {
        print_json(doc);
        return;
    }
    let r = &doc.request;
    println!("id: {}", r.id);
    println!("status: {}", r.status);
    println!("subject: {}", short(&r.subject));
    println!("location: {}", short(&r.location));
    println!("type: {}", short(&r.type311));
    println!("agency: {}", short(&r.agency));
    println!("action: {}", short(&r.action));
    println!("reporter: {} ({})", r.reporter.name, r.reporter.contact);
    println!("complaint: {}", r.raw_text);
    println!("history:");
    for h in &r.history {
        println!(
            "  {}\t{}\t{}",
            h.at.to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
            h.status,
            h.note
        );
    }
}

#[derive(Serialize)]
struct ValidationReport {
    things: usize,
    violations: Vec<String>,
}

fn validate(source: &FixtureSource, format: Format) -> CmdResult {
    let (name, text) = match source {
        FixtureSource::Named(n) => (n.to_string(), n.source().to_string()),
        FixtureSource::File(p) => (
            p.display().to_string(),
            std::fs::read_to_string(p)
                .map_err(|e| Failure::User(format!("cannot read {}: {e}", p.display())))?,
        ),
    };
    let (triples, _) = parse_document(&text, &PrefixMap::new())
        .map_err(|e| Failure::User(format!("{name}:\n{e}")))?;
    let store: TripleStore = triples.into_iter().collect();
    let mut violations: Vec<String> = model::validate_store(&store)
        .iter()
        .map(ToString::to_string)
        .collect();
    let things = model::things(&store).len();
    if let FixtureSource::Named(n) = source {
        if things != n.expected_thing_count() {
            violations.push(format!(
                "expected {} things, found {things}",
                n.expected_thing_count()
            ));
        }
    }
    match format {
        Format::Table => {
            for v in &violations {
                println!("{v}");
            }
            println!("{things} things, {} violations", violations.len());
        }
        Format::Json => print_json(&ValidationReport {
            things,
            violations: violations.clone(),
        }),
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::User(format!(
            "{name}: {} violations",
            violations.len()
        )))
    }
}
