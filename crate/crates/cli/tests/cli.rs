use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

use selbench_core::dataset::store_suite;
use selbench_core::evaluator::Timeouts;
use selbench_core::fixtures::fixture_suites;
use selbench_core::protocol::Selector;
use selbench_rpc::client::RemoteSession;

const BIN: &str = env!("CARGO_BIN_EXE_selbench");

fn selbench(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("SELBENCH_TOOLS").output().expect("run selbench")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_fixtures(dir: &Path, n: usize) {
    fs::create_dir_all(dir).unwrap();
    for s in fixture_suites(n) {
        store_suite(&s, dir.join(format!("{}.json", s.suite_id))).unwrap();
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A `serve-baseline` child process, killed on drop.
struct Served {
    child: Child,
    address: String,
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn serve(name: &str, seed: u64) -> Served {
    let mut child = Command::new(BIN)
        .args(["serve-baseline", name, "--seed", &seed.to_string(), "--port", "0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let address = line.trim().rsplit(' ').next().unwrap().to_owned();
    Served { child, address }
}

#[test]
fn help_documents_every_flag_with_defaults() {
    for sub in ["generate", "evaluate", "serve-baseline", "report", "validate"] {
        let out = selbench(&[sub, "--help"]);
        assert_eq!(code(&out), 0, "{sub}");
        let text = stdout(&out);
        for line in text.lines().map(str::trim_start).filter(|l| l.starts_with("--") || l.starts_with('-')) {
            let flag = line.split_whitespace().next().unwrap();
            if ["-h,", "--help", "-V,", "--version"].contains(&flag) {
                continue;
            }
            // Value-taking flags show a default, except optional ones and
            // repeatable selectors that default to empty.
            let takes_value = line.contains('<');
            let optional = ["--shuffle-seed", "--lenient", "--launch"].iter().any(|f| line.contains(f));
            if takes_value && !optional {
                assert!(section(&text, flag).contains("[default:"), "{sub} {flag}");
            }
        }
    }
    assert_eq!(code(&selbench(&["--help"])), 0);
    assert_eq!(code(&selbench(&["--version"])), 0);
}

/// Help text from `flag` up to the next flag.
fn section<'a>(text: &'a str, flag: &str) -> &'a str {
    let start = text.find(&format!("{flag} ")).or_else(|| text.find(flag)).unwrap();
    let rest = &text[start..];
    let end = rest[2..].find("\n  -").map(|i| i + 2).unwrap_or(rest.len());
    &rest[..end]
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&selbench(&["frobnicate"])), 1);
    assert_eq!(code(&selbench(&["generate", "--no-such-flag"])), 1);
    assert_eq!(code(&selbench(&["evaluate"])), 1);
    let dir = tempfile::tempdir().unwrap();
    write_fixtures(dir.path(), 1);
    let out = selbench(&["evaluate", p(dir.path()), "-t", "nonsense", "-o", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let out = selbench(&["evaluate", p(dir.path()), "--init-fraction", "1.5", "-o", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), 1);
    let out = selbench(&["evaluate", p(dir.path()), "--lenient", "ghost", "-o", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), 1);
}

#[test]
fn generate_writes_suites_and_manifest_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = selbench(&["generate", "--suites", "3", "--cases", "30", "--seed", "1", "-o", p(d)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let mut names: Vec<String> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "synthetic_001.json", "synthetic_002.json", "synthetic_003.json"]);
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n}");
    }
    assert_eq!(code(&selbench(&["validate", p(&a)])), 0);
}

#[test]
fn generate_rejects_unsplittable_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out = selbench(&["generate", "--cases", "4", "-o", p(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("cases_per_suite"));
}

#[test]
fn evaluate_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bench = dir.path().join("bench");
    write_fixtures(&bench, 3);
    let out_dir = dir.path().join("run");
    let out = selbench(&["evaluate", p(&bench), "-t", "random", "-t", "select-all", "--seed", "7", "-o", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let printed = stdout(&out);
    assert!(printed.starts_with("Performance Metrics Statistics (N=3)\n"));

    let detail = fs::read_to_string(out_dir.join("detail.csv")).unwrap();
    assert_eq!(detail.lines().count(), 1 + 6);
    for f in ["run.json", "config.json", "aggregate.csv", "aggregate.txt"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let report = selbench(&["report", p(&out_dir)]);
    assert_eq!(code(&report), 0);
    assert_eq!(stdout(&report), printed);
    let report = selbench(&["report", p(&out_dir.join("run.json")), "--format", "detail"]);
    assert_eq!(stdout(&report), detail);
}

#[test]
fn environment_overrides_tools_and_timeouts() {
    let dir = tempfile::tempdir().unwrap();
    let bench = dir.path().join("bench");
    write_fixtures(&bench, 2);
    let out_dir = dir.path().join("run");
    let out = Command::new(BIN)
        .args(["evaluate", p(&bench), "-o", p(&out_dir)])
        .env("SELBENCH_TOOLS", "select-all,threshold")
        .env("SELBENCH_INIT_TIMEOUT", "42")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let config: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    let names: Vec<&str> = config["tools"].as_array().unwrap().iter().map(|t| t["tool_name"].as_str().unwrap()).collect();
    assert_eq!(names, ["select-all-baseline", "threshold-baseline"]);
    assert_eq!(config["options"]["timeouts"]["initialize"], 42.0);
}

#[test]
fn unreachable_endpoint_exits_3_with_failure_rows() {
    let dir = tempfile::tempdir().unwrap();
    let bench = dir.path().join("bench");
    write_fixtures(&bench, 2);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let out_dir = dir.path().join("run");
    let tool = format!("ghost=127.0.0.1:{port}");
    let out = selbench(&["evaluate", p(&bench), "-t", "random", "-t", &tool, "--connect-timeout", "2", "-o", p(&out_dir)]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let detail = fs::read_to_string(out_dir.join("detail.csv")).unwrap();
    let ghost: Vec<&str> = detail.lines().filter(|l| l.starts_with("ghost,")).collect();
    assert_eq!(ghost.len(), 2);
    assert!(ghost.iter().all(|l| l.contains("unreachable(handshake)")));
    assert!(detail.lines().filter(|l| l.starts_with("random-baseline,")).count() == 2);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"suite_id\": \"x\", \"cases\": [").unwrap();
    assert_eq!(code(&selbench(&["validate", p(&bad)])), 2);
    assert_eq!(code(&selbench(&["evaluate", p(&bad), "-o", p(&dir.path().join("o"))])), 2);
    assert_eq!(code(&selbench(&["evaluate", p(&dir.path().join("absent.json")), "-o", p(&dir.path().join("o"))])), 2);
}

#[test]
fn truncated_run_file_reports_parse_location() {
    let dir = tempfile::tempdir().unwrap();
    let full = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/fixture_run.json")).unwrap();
    let truncated = dir.path().join("run.json");
    fs::write(&truncated, &full[..full.len() / 2]).unwrap();
    let out = selbench(&["report", p(&truncated)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line"), "{}", stderr(&out));
}

#[test]
fn report_matches_golden_files() {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data");
    let run = format!("{data}/fixture_run.json");
    let text = selbench(&["report", &run]);
    assert_eq!(code(&text), 0);
    assert_eq!(stdout(&text), fs::read_to_string(format!("{data}/fixture_run.aggregate.txt")).unwrap());
    let csv = selbench(&["report", &run, "--format", "csv"]);
    assert_eq!(stdout(&csv), fs::read_to_string(format!("{data}/fixture_run.aggregate.csv")).unwrap());
    // One block per tool, statistic rows in fixed order.
    let printed = stdout(&text);
    let lines: Vec<&str> = printed.lines().collect();
    for (block, tool) in ["random-baseline", "select-all-baseline", "threshold-baseline"].iter().enumerate() {
        let rows = &lines[2 + 5 * block..7 + 5 * block];
        assert!(rows[0].starts_with(tool));
        for (row, stat) in rows.iter().zip(["max", "mean", "std", "min", "missing"]) {
            assert_eq!(row.split_whitespace().find(|w| !w.contains('-')), Some(stat));
        }
    }
}

#[test]
fn serve_baseline_answers_name_and_matches_in_process() {
    let served = serve("random", 7);
    let mut session = RemoteSession::connect(
        &served.address,
        Timeouts { connect: Duration::from_secs(5), ..Default::default() },
    )
    .unwrap();
    assert_eq!(session.name().unwrap().name, "random-baseline");

    let dir = tempfile::tempdir().unwrap();
    let bench = dir.path().join("bench");
    write_fixtures(&bench, 4);
    let tool = format!("wire={}", served.address);
    let out_dir = dir.path().join("run");
    let out = selbench(&["evaluate", p(&bench), "-t", "random", "-t", &tool, "--seed", "7", "-o", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let detail = fs::read_to_string(out_dir.join("detail.csv")).unwrap();
    // Compare everything except the tool name and the two timing columns.
    let strip = |l: &str| {
        let f: Vec<&str> = l.split(',').collect();
        [&f[1..3], &f[5..]].concat().join(",")
    };
    let local: Vec<String> = detail.lines().filter(|l| l.starts_with("random-baseline,")).map(strip).collect();
    let wire: Vec<String> = detail.lines().filter(|l| l.starts_with("wire,")).map(strip).collect();
    assert_eq!(local.len(), 4);
    assert_eq!(local, wire);
}

#[test]
fn serve_baseline_rejects_unknown_name_and_busy_port() {
    assert_eq!(code(&selbench(&["serve-baseline", "oracle-peeker", "--port", "0"])), 2);
    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port().to_string();
    let out = selbench(&["serve-baseline", "random", "--port", &port]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}
