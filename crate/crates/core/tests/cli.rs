use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_civic311");

fn civic311(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .env_remove("CIVIC311_FIXTURE")
        .env_remove("CIVIC311_LEDGER")
        .env_remove("CIVIC311_OUTBOX")
        .env_remove("CIVIC311_FORMAT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const ELECTRICIAN_QUERY: &str = "PREFIX O3110: <http://ontology.eil.utoronto.ca/open311.owl#>
SELECT ?subject ?type WHERE {
    ?thing O3110:has311Subject ?subject.
    ?thing O3110:has311Type ?type.
    ?thing O3110:isHandledBy O3110:iiitElectrician.
}";

#[test]
fn query_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = civic311(dir.path(), &["query", ELECTRICIAN_QUERY]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        stdout(&out),
        "subject\ttype\nStreetLight\tDamaged\nStreetLight\tDamaged\n"
    );

    std::fs::write(dir.path().join("q.rq"), ELECTRICIAN_QUERY).unwrap();
    let out = civic311(dir.path(), &["--format", "json", "query", "@q.rq"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn query_reads_stdin() {
    let mut child = Command::new(BIN)
        .args(["query"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(ELECTRICIAN_QUERY.as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 3);
}

#[test]
fn parse_errors_are_positioned_and_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = civic311(dir.path(), &["query", "SELECT ?x WHERE {\n ?x ex:p ?y }"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("2:5:"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn ask_resolves_the_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = civic311(
        dir.path(),
        &["ask", "Overgrown Grass near Computer Center III"],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("action: Cut"), "{text}");
    assert!(text.contains("agency: iiitGardener"), "{text}");
    assert!(text.contains("type: Overgrown"), "{text}");
}

#[test]
fn json_output_matches_the_api_document() {
    use std::sync::Arc;
    let dir = tempfile::tempdir().unwrap();
    let out = civic311(
        dir.path(),
        &["--format", "json", "ask", "broken street light at bh4"],
    );
    let cli: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let app = civic311::api::App::new(
        Arc::new(civic311::load_fixture(civic311::FixtureName::Replica).unwrap()),
        Arc::new(civic311::AliasDictionary::builtin()),
        Arc::new(civic311::Ledger::in_memory()),
        Arc::new(civic311::ledger::RecordingSink::new()),
        None,
    );
    let doc = app
        .query(civic311::api::QueryBody {
            description: "broken street light at bh4".into(),
        })
        .unwrap();
    assert_eq!(cli, serde_json::to_value(doc).unwrap());
}

#[test]
fn ask_reads_stdin() {
    let mut child = Command::new(BIN)
        .args(["ask", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"garbage piled up at cc3")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains("agency: iiitSweeper"));
}

#[test]
fn ask_reports_typed_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = civic311(dir.path(), &["ask", "insects at hostel cafeteria"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("AMBIGUOUS_LOCATION"), "{err}");
    assert!(err.contains("iiitBH4") && err.contains("iiitCafeteria"));
}

#[test]
fn validate_counts_things() {
    let dir = tempfile::tempdir().unwrap();
    let out = civic311(dir.path(), &["--fixture", "full", "validate"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "48 things, 0 violations\n");
    let out = civic311(dir.path(), &["validate", "replica"]);
    assert_eq!(stdout(&out), "11 things, 0 violations\n");

    let broken = civic311::model::FixtureName::Replica
        .source()
        .replace("O3110:has311Type O3110:Overgrown ;\n", "");
    std::fs::write(dir.path().join("broken.ttl"), broken).unwrap();
    let out = civic311(dir.path(), &["validate", "broken.ttl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stdout(&out).contains("has311Type: missing"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn unknown_fixture_is_rejected_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let out = civic311(dir.path(), &["--fixture", "huge", "ask", "grass at cc3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown fixture"));
    let out = civic311(
        dir.path(),
        &["--fixture", "missing.ttl", "ask", "grass at cc3"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn report_then_manage_requests() {
    let dir = tempfile::tempdir().unwrap();
    let out = civic311(
        dir.path(),
        &[
            "--format",
            "json",
            "ask",
            "--report",
            "--name",
            "Asha",
            "--contact",
            "asha@example.org",
            "trash piled up at cc3",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let id = v["request"]["id"].as_str().unwrap().to_string();
    assert!(dir.path().join("outbox").join(format!("{id}.txt")).exists());

    let out = civic311(dir.path(), &["requests", "list"]);
    assert_eq!(stdout(&out).lines().count(), 2);
    let out = civic311(dir.path(), &["requests", "set-status", &id, "resolved"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ILLEGAL_TRANSITION"));
    let out = civic311(
        dir.path(),
        &[
            "requests",
            "set-status",
            &id,
            "in_progress",
            "--note",
            "on it",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let out = civic311(dir.path(), &["requests", "show", &id]);
    assert!(stdout(&out).contains("status: in_progress"));
    let out = civic311(dir.path(), &["requests", "list", "--status", "notified"]);
    assert_eq!(stdout(&out).lines().count(), 1);
    let out = civic311(dir.path(), &["requests", "show", "SR-nope"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn corrupt_ledger_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ledger.jsonl"), "{\"id\":").unwrap();
    let out = civic311(dir.path(), &["requests", "list"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrupt ledger at line 1"));
}

struct Server(Child, String);

impl Server {
    fn start(dir: &Path) -> Self {
        let mut child = Command::new(BIN)
            .current_dir(dir)
            .args(["--fixture", "replica", "serve", "--bind", "127.0.0.1:0"])
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on http://")
            .expect("address line")
            .to_string();
        Server(child, addr)
    }

    fn request(&self, method: &str, path: &str, body: &str) -> (u16, serde_json::Value) {
        let mut s = TcpStream::connect(&self.1).unwrap();
        write!(
            s,
            "{method} {path} HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        let mut resp = String::new();
        s.read_to_string(&mut resp).unwrap();
        let status: u16 = resp[9..12].parse().unwrap();
        let body = &resp[resp.find("\r\n\r\n").unwrap() + 4..];
        (status, serde_json::from_str(body).unwrap())
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn served_requests_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(dir.path());
    let (status, created) = server.request(
        "POST",
        "/requests",
        r#"{"description":"Overgrown Grass near Computer Center III","reporter":{"name":"A","contact":"a@example.org"}}"#,
    );
    assert_eq!(status, 201);
    let id = created["request"]["id"].as_str().unwrap().to_string();
    drop(server);

    let ledger_before = std::fs::read(dir.path().join("ledger.jsonl")).unwrap();
    assert_eq!(
        std::fs::read_dir(dir.path().join("outbox"))
            .unwrap()
            .count(),
        1
    );
    let server = Server::start(dir.path());
    let (status, shown) = server.request("GET", &format!("/requests/{id}"), "");
    assert_eq!(status, 200);
    assert_eq!(shown, created["request"]);
    let (status, _) = server.request(
        "PATCH",
        &format!("/requests/{id}/status"),
        r#"{"status":"in_progress"}"#,
    );
    assert_eq!(status, 200);
    let ledger_after = std::fs::read(dir.path().join("ledger.jsonl")).unwrap();
    assert!(
        ledger_after.starts_with(&ledger_before),
        "the ledger is append-only"
    );
    let (status, services) = server.request("GET", "/services", "");
    assert_eq!(status, 200);
    assert_eq!(services.as_array().unwrap().len(), 8);
}

#[test]
fn serve_refuses_a_bad_fixture() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.ttl"),
        "@prefix x: <http://e/> .\nx:a x:b .",
    )
    .unwrap();
    let out = civic311(
        dir.path(),
        &["--fixture", "bad.ttl", "serve", "--bind", "127.0.0.1:0"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty(), "nothing was bound");
}
