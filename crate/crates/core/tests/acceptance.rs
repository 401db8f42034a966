//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion.

mod support;

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::Arc;

use chrono::DateTime;
use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestRunner};
use pubflow::client::{Client, StubConfig};
use pubflow::engine::{Caller, Engine, EngineOptions, InstanceState, ProcessInstance};
use pubflow::procdef::{check_soundness, definition_to_xml, parse_definition};
use pubflow::repository::{
    build_dc, minimal_object_xml, parse_dc, Condition, DatastreamProps, DublinCoreRecord, FieldSearchQuery,
    ObjectFields, Payload, Repository, INGEST_FORMAT,
};
use pubflow::service::{self, Access, Role, ENDPOINTS};
use serde_json::{json, Value};
use support::repo::{self, ManualClock};
use support::server::{self, Api};
use support::{graphs, token_game, workflows};

type Check = fn() -> Result<String, String>;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(RunnerConfig {
        failure_persistence: None,
        ..RunnerConfig::with_cases(cases)
    })
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(u32, &str, Check); 9] = [
        (1, "version pinning", version_pinning),
        (2, "soundness agrees with the token game", soundness_equivalence),
        (3, "pid format and monotonicity across kill -9", pid_monotonicity),
        (4, "Dublin Core round trip", dc_round_trip),
        (5, "datastream versioning", datastream_versioning),
        (6, "search matches a full scan", search_oracle),
        (7, "publication scenario through the stub", publication_scenario),
        (8, "unsound deploy refused", unsound_refusal),
        (9, "task isolation and role matrix", isolation_and_matrix),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, title, check) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let started = std::time::Instant::now();
        let outcome = match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = started.elapsed().as_secs_f32();
        match outcome {
            Ok(note) => println!("PASS criterion {n}: {title} ({note}; {secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n}: {title}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- engine

fn engine_options() -> EngineOptions {
    EngineOptions {
        fsync: false,
        clock: Arc::new(|| DateTime::from_timestamp_millis(1_750_000_000_000).unwrap()),
        ..EngineOptions::default()
    }
    .with_actor("qa", "quinn")
    .with_actor("admin", "root")
}

fn root_node(inst: &ProcessInstance) -> String {
    inst.tokens[0].current_node.clone()
}

/// Drives one instance with the given decisions and records every node the
/// root token rests on, including the final end node.
fn walk(e: &Engine, def_id: &str, decisions: &[(&str, Option<&str>)]) -> (ProcessInstance, Vec<String>) {
    let (inst, first) = e.start_instance(def_id, "alice", BTreeMap::new()).unwrap();
    let mut path = vec![root_node(&inst)];
    let mut current = inst;
    let mut open = vec![first];
    for (actor, transition) in decisions {
        let task = open.pop().unwrap_or_else(|| panic!("no open task before {actor}/{transition:?}"));
        assert_eq!(&task.actor_id, actor, "task {} goes to {}", task.task_name, task.actor_id);
        current = e.complete_task(&task.task_instance_id, *transition, BTreeMap::new(), &Caller::actor(*actor)).unwrap();
        path.push(root_node(&current));
        open = e
            .find_task_instances("alice")
            .into_iter()
            .chain(e.find_task_instances("quinn"))
            .filter(|t| t.instance_id == current.instance_id)
            .collect();
        assert!(open.len() <= 1);
    }
    assert!(open.is_empty(), "tasks left over: {open:?}");
    (current, path)
}

fn version_pinning() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let e = Engine::open(dir.path(), engine_options()).unwrap();
    let v1 = e.deploy(workflows::publication_v1(), None, None).unwrap();
    let (old, submit) = e.start_instance(&v1.definition_id, "alice", BTreeMap::new()).unwrap();
    let v2 = e.deploy(workflows::publication_v2(), None, None).unwrap();
    ensure(v2.version == 2 && v1.version == 1, || format!("versions {} {}", v1.version, v2.version))?;

    let mut old_path = vec![root_node(&old)];
    let alice = Caller::actor("alice");
    let inst = e.complete_task(&submit.task_instance_id, Some("to_qa"), BTreeMap::new(), &alice).unwrap();
    old_path.push(root_node(&inst));
    let review = e.find_task_instances("quinn");
    ensure(review.len() == 1, || format!("review tasks {review:?}"))?;
    let inst = e
        .complete_task(&review[0].task_instance_id, Some("approve"), BTreeMap::new(), &Caller::actor("quinn"))
        .unwrap();
    old_path.push(root_node(&inst));
    ensure(old_path == ["submit", "review", "published"], || format!("v1 instance path {old_path:?}"))?;
    ensure(inst.state == InstanceState::Ended, || format!("v1 instance {:?}", inst.state))?;
    ensure(inst.definition_id == v1.definition_id, || "v1 instance moved definitions".into())?;
    ensure(e.find_task_instances("quinn").is_empty(), || "v1 instance produced a final_check task".into())?;
    ensure(old.instance_id == inst.instance_id, || "instance id changed".into())?;

    let (fresh, path) = walk(
        &e,
        &v2.definition_id,
        &[("alice", Some("to_qa")), ("quinn", Some("approve")), ("quinn", None)],
    );
    ensure(path == ["submit", "review", "final_check", "published"], || format!("v2 path {path:?}"))?;
    ensure(fresh.state == InstanceState::Ended && fresh.definition_id == v2.definition_id, || {
        format!("v2 instance {:?} on {}", fresh.state, fresh.definition_id)
    })?;

    // The same holds after a restart from the journal.
    let (pinned, _) = e.start_instance(&v1.definition_id, "alice", BTreeMap::new()).unwrap();
    drop(e);
    let e = Engine::open(dir.path(), engine_options()).unwrap();
    let task = e.find_task_instances("alice").into_iter().find(|t| t.instance_id == pinned.instance_id).unwrap();
    e.complete_task(&task.task_instance_id, Some("to_qa"), BTreeMap::new(), &alice).unwrap();
    let review = e.find_task_instances("quinn");
    let done = e
        .complete_task(&review[0].task_instance_id, Some("approve"), BTreeMap::new(), &Caller::actor("quinn"))
        .unwrap();
    ensure(root_node(&done) == "published" && done.state == InstanceState::Ended, || {
        format!("after restart v1 instance rests on {}", root_node(&done))
    })?;
    Ok("v1 submit-review-published, v2 submit-review-final_check-published".into())
}

fn soundness_equivalence() -> Result<String, String> {
    let mut runner = runner(1000);
    let cases = Cell::new(0usize);
    let sound = Cell::new(0usize);
    let disagreements = RefCell::new(Vec::new());
    runner
        .run(&any::<u64>(), |seed| {
            let def = graphs::random_definition(seed);
            let xml = definition_to_xml(&def);
            let reparsed = parse_definition(xml.as_bytes())
                .map_err(|e| TestCaseError::fail(format!("seed {seed} not schema-valid: {e}")))?;
            prop_assert_eq!(&reparsed, &def);
            prop_assert!(def.nodes.len() <= 8, "seed {} has {} nodes", seed, def.nodes.len());
            let verdict = token_game::explore(&def);
            let report = check_soundness(&def);
            cases.set(cases.get() + 1);
            sound.set(sound.get() + verdict.sound as usize);
            if report.sound != verdict.sound {
                disagreements.borrow_mut().push(seed);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let (cases, sound, disagreements) = (cases.get(), sound.get(), disagreements.into_inner());
    ensure(disagreements.is_empty(), || format!("disagreement on seeds {disagreements:?}"))?;
    ensure(sound > 0 && sound < cases, || format!("degenerate sample: {sound} of {cases} sound"))?;
    Ok(format!("{cases} graphs, {sound} sound, 100% agreement"))
}

// ---------------------------------------------------------------- server process

struct ServerProcess {
    child: Child,
    base: String,
}

impl ServerProcess {
    fn spawn(config_path: &Path) -> ServerProcess {
        let mut child = Command::new(env!("CARGO_BIN_EXE_pubflow"))
            .args(["serve", "--config"])
            .arg(config_path)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("server binary starts");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let base = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("banner {line:?}")).to_owned();
        ServerProcess { child, base }
    }

    fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn ingest_over_http(http: &reqwest::blocking::Client, base: &str, token: &str) -> Result<String, String> {
    let resp = http
        .post(format!("{base}/repo/objects?format={INGEST_FORMAT}&logMessage=initial"))
        .bearer_auth(token)
        .body(minimal_object_xml("ESCIPUB", "article"))
        .send()
        .map_err(|e| e.to_string())?;
    if resp.status().as_u16() != 201 {
        return Err(format!("status {}", resp.status()));
    }
    let body: Value = resp.json().map_err(|e| e.to_string())?;
    Ok(body["pid"].as_str().unwrap_or_default().to_owned())
}

fn login_over_http(http: &reqwest::blocking::Client, base: &str, user: &str) -> String {
    let body: Value = http
        .post(format!("{base}/auth/login"))
        .json(&json!({"username": user, "password": format!("{user}-pw")}))
        .send()
        .unwrap()
        .json()
        .unwrap();
    body["token"].as_str().unwrap().to_owned()
}

fn serial(pid: &str) -> u64 {
    pid.strip_prefix("escipub:").and_then(|s| s.parse().ok()).unwrap_or_else(|| panic!("pid {pid}"))
}

fn pid_monotonicity() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let mut config = server::config(&dir.path().join("data"));
    config.fsync = true;
    let config_path = dir.path().join("pubflow.toml");
    std::fs::write(&config_path, config.to_toml()).unwrap();
    let http = reqwest::blocking::Client::new();

    let srv = ServerProcess::spawn(&config_path);
    let token = login_over_http(&http, &srv.base, "alice");
    let first = ingest_over_http(&http, &srv.base, &token)?;
    let second = ingest_over_http(&http, &srv.base, &token)?;
    srv.kill();
    let srv = ServerProcess::spawn(&config_path);
    let token = login_over_http(&http, &srv.base, "alice");
    let third = ingest_over_http(&http, &srv.base, &token)?;
    ensure([&first, &second, &third] == ["escipub:1", "escipub:2", "escipub:3"], || {
        format!("first three pids {first} {second} {third}")
    })?;

    // Kill while a writer is busy, a few times over.
    let mut acknowledged = vec![first, second, third];
    let mut srv = srv;
    for round in 0..4u64 {
        let base = srv.base.clone();
        let writer = {
            let http = http.clone();
            let token = login_over_http(&http, &base, "alice");
            std::thread::spawn(move || {
                let mut got = Vec::new();
                while let Ok(pid) = ingest_over_http(&http, &base, &token) {
                    got.push(pid);
                }
                got
            })
        };
        std::thread::sleep(std::time::Duration::from_millis(150 + 60 * round));
        srv.kill();
        acknowledged.extend(writer.join().unwrap());
        srv = ServerProcess::spawn(&config_path);
    }
    let token = login_over_http(&http, &srv.base, "alice");
    let last = ingest_over_http(&http, &srv.base, &token)?;
    let serials: Vec<u64> = acknowledged.iter().map(|p| serial(p)).collect();
    let unique: BTreeSet<u64> = serials.iter().copied().collect();
    ensure(unique.len() == serials.len(), || format!("repeated serial among {serials:?}"))?;
    ensure(serials.windows(2).all(|w| w[0] < w[1]), || format!("serials not increasing: {serials:?}"))?;
    let max = *serials.iter().max().unwrap();
    ensure(serial(&last) > max, || format!("{last} after acknowledged escipub:{max}"))?;
    Ok(format!("escipub:1..3, then {} pids over 5 kills, next {last}", serials.len()))
}

// ---------------------------------------------------------------- repository

fn dc_props() -> DatastreamProps {
    DatastreamProps {
        mime_type: Some("text/xml".into()),
        log_message: "metadata".into(),
        ..DatastreamProps::default()
    }
}

fn ingest(r: &Repository, label: &str) -> String {
    r.ingest(minimal_object_xml(label, "article").as_bytes(), INGEST_FORMAT, "initial creation")
        .unwrap()
        .to_string()
}

fn with_pid(mut record: DublinCoreRecord, pid: &str) -> DublinCoreRecord {
    if !record.identifier.iter().any(|i| i == pid) {
        record.identifier.push(pid.to_owned());
    }
    record
}

fn dc_round_trip() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let clock = ManualClock::new();
    let r = repo::open(dir.path(), &clock);
    let mut runner = runner(200);
    let multi = Cell::new(0usize);
    let empty_fields = Cell::new(0usize);
    runner
        .run(&repo::dc_record(), |record| {
            let pid = ingest(&r, "dc");
            let expected = with_pid(record, &pid);
            let version = r
                .modify_datastream(&pid, "DC", dc_props(), Payload::Value(build_dc(&expected).into_bytes()))
                .unwrap();
            let fetched = r.get_datastream(&pid, "DC", Some(version)).unwrap();
            let parsed = parse_dc(&fetched.content).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&parsed, &expected);
            prop_assert_eq!(&r.get_object(&pid).unwrap().dc, &expected);
            multi.set(multi.get() + (expected.creator.len() > 1 || expected.subject.len() > 1) as usize);
            empty_fields.set(empty_fields.get() + (expected.title.is_empty() || expected.creator.iter().any(String::is_empty)) as usize);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let (multi, empty_fields) = (multi.get(), empty_fields.get());
    ensure(multi > 0 && empty_fields > 0, || "sample lacked repeated or empty fields".into())?;
    Ok(format!("200 records, {multi} with repeated creator/subject, {empty_fields} with empty fields"))
}

fn datastream_versioning() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let clock = ManualClock::new();
    let r = repo::open(dir.path(), &clock);
    let mut runner = runner(40);
    runner
        .run(&proptest::collection::vec(repo::dc_record(), 0..12), |records| {
            let pid = ingest(&r, "versions");
            let original = r.get_datastream(&pid, "DC", Some(1)).unwrap().content;
            for (i, record) in records.iter().enumerate() {
                clock.tick(1);
                let n = r
                    .modify_datastream(&pid, "DC", dc_props(), Payload::Value(build_dc(&with_pid(record.clone(), &pid)).into_bytes()))
                    .unwrap();
                prop_assert_eq!(n as usize, i + 2);
            }
            let object = r.get_object(&pid).unwrap();
            prop_assert_eq!(object.datastreams["DC"].versions.len(), records.len() + 1);
            for v in 1..=records.len() as u32 + 1 {
                prop_assert!(r.get_datastream(&pid, "DC", Some(v)).is_ok(), "version {} missing", v);
            }
            prop_assert_eq!(&r.get_datastream(&pid, "DC", Some(1)).unwrap().content, &original);
            let missing = r.get_datastream(&pid, "DC", Some(records.len() as u32 + 2)).unwrap_err();
            prop_assert_eq!(missing.code(), "UNKNOWN_VERSION");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("40 objects with 0..11 modifies each".into())
}

fn search_oracle() -> Result<String, String> {
    let store = (
        proptest::collection::vec((repo::word(), repo::search_record()), 0..=200),
        proptest::collection::vec((proptest::collection::vec(repo::condition(), 1..3), 1usize..250), 6..12),
    );
    let mut runner = runner(100);
    let seen_ops = RefCell::new(BTreeSet::new());
    let queries_run = Cell::new(0usize);
    let largest = Cell::new(0usize);
    runner
        .run(&store, |(objects, queries)| {
            let dir = tempfile::tempdir().unwrap();
            let clock = ManualClock::new();
            let r = repo::open(dir.path(), &clock);
            let mut model = Vec::new();
            largest.set(largest.get().max(objects.len()));
            for (label, record) in objects {
                let created = clock.tick(3600);
                let pid = ingest(&r, &label);
                let modified = clock.tick(1);
                let record = with_pid(record, &pid);
                r.modify_datastream(&pid, "DC", dc_props(), Payload::Value(build_dc(&record).into_bytes())).unwrap();
                model.push(ObjectFields {
                    pid,
                    label,
                    c_date: repo::stamp(created),
                    m_date: repo::stamp(modified),
                    dc: record,
                });
            }
            let forced = repo::OPERATORS.iter().map(|op| (vec![("creator".to_owned(), op.to_string(), "alice".to_owned())], 200));
            for (conditions, max) in queries.into_iter().chain(forced) {
                for (_, op, _) in &conditions {
                    seen_ops.borrow_mut().insert(op.clone());
                }
                let query = FieldSearchQuery {
                    conditions: conditions.iter().map(|(f, o, v)| Condition::new(f, o, v)).collect(),
                };
                let got = r.find_objects(&query, max).unwrap();
                let (expected, complete) = repo::naive_find(&model, &conditions, max);
                prop_assert_eq!(got.rows.iter().map(|x| x.pid.clone()).collect::<Vec<_>>(), expected, "{:?}", conditions);
                prop_assert_eq!(got.complete, complete);
                queries_run.set(queries_run.get() + 1);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let (seen_ops, queries_run, largest) = (seen_ops.into_inner(), queries_run.get(), largest.get());
    ensure(seen_ops.len() == 6, || format!("operators covered {seen_ops:?}"))?;

    // Through the service: each author finds exactly their own objects.
    let dir = tempfile::tempdir().unwrap();
    let srv = server::start(dir.path());
    let stub = |user: &str| {
        Client::new(StubConfig {
            base_url: srv.base_url.clone(),
            username: user.into(),
            password: format!("{user}-pw"),
            timeout_seconds: 30,
        })
        .unwrap()
    };
    let (alice, bob) = (stub("alice"), stub("bob"));
    let mut owned: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (i, (name, who)) in [("alice", &alice), ("bob", &bob), ("alice", &alice), ("bob", &bob), ("alice", &alice)]
        .into_iter()
        .enumerate()
    {
        let pid = who.ingest_new_object().map_err(|e| e.to_string())?;
        let mut fields = BTreeMap::new();
        fields.insert("creator".to_owned(), vec![name.to_owned()]);
        fields.insert("title".to_owned(), vec![format!("paper {i} by {name}")]);
        ensure(who.change_dc(&pid, &fields).map_err(|e| e.to_string())?, || format!("dc change on {pid}"))?;
        owned.entry(name).or_default().push(pid);
    }
    let untouched = alice.ingest_new_object().map_err(|e| e.to_string())?;
    for (name, who) in [("alice", &alice), ("bob", &bob)] {
        let rows = who.do_query("creator", "eq", name, 100).map_err(|e| e.to_string())?;
        let got: Vec<String> = rows.into_iter().map(|r| r.pid).collect();
        ensure(got == owned[name], || format!("{name} sees {got:?}, owns {:?}", owned[name]))?;
        ensure(!got.contains(&untouched), || "object without creator matched".into())?;
    }
    Ok(format!("100 stores up to {largest} objects, {queries_run} queries, all six operators"))
}

// ---------------------------------------------------------------- scenario

fn publication_scenario() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let srv = server::start(&dir.path().join("data"));
    let stub = |user: &str| {
        Client::new(StubConfig {
            base_url: srv.base_url.clone(),
            username: user.into(),
            password: format!("{user}-pw"),
            timeout_seconds: 30,
        })
        .unwrap()
    };
    let (root, alice, quinn) = (stub("root"), stub("alice"), stub("quinn"));
    let e = |err: pubflow::client::ClientError| err.to_string();

    let archive = dir.path().join("publication.zip");
    std::fs::write(&archive, workflows::archive(&workflows::publication_v1())).unwrap();
    let deployed = root.deploy_archive(&archive).map_err(e)?;
    ensure(deployed.name == "publication" && deployed.version == 1, || format!("{deployed:?}"))?;
    let latest = alice.latest_definitions().map_err(e)?;
    ensure(latest == [deployed.clone()], || format!("latest {latest:?}"))?;

    let pid = alice.ingest_new_object().map_err(e)?;
    ensure(pid == "escipub:1", || format!("pid {pid}"))?;
    let mut dc = BTreeMap::new();
    dc.insert("creator".to_owned(), vec!["alice".to_owned()]);
    dc.insert("title".to_owned(), vec!["Workflows for open access".to_owned()]);
    ensure(alice.change_dc(&pid, &dc).map_err(e)?, || "dc change refused".into())?;

    let mut vars = BTreeMap::new();
    vars.insert("pid".to_owned(), pid.clone());
    let started = alice.start(&deployed.definition_id, &vars).map_err(e)?;
    let instance_id = started.instance.instance_id.clone();
    ensure(started.task.task_name == "submit_article" && started.task.actor_id == "alice", || {
        format!("first task {:?}", started.task)
    })?;
    let tasks = alice.tasks().map_err(e)?;
    ensure(tasks.len() == 1 && tasks[0].task_instance_id == started.task.task_instance_id, || format!("alice tasks {tasks:?}"))?;

    let file = dir.path().join("article.pdf");
    let first_bytes: Vec<u8> = (0..4096u32).map(|i| (i * 7 % 251) as u8).collect();
    std::fs::write(&file, &first_bytes).unwrap();
    let staged = alice.upload_staging(&file).map_err(e)?;
    ensure(staged.size == 4096 && staged.mime_type == "application/pdf", || format!("staged {staged:?}"))?;
    let v = alice.save_article(&pid, &staged, "alice").map_err(e)?;
    ensure(v == 1, || format!("first save gave version {v}"))?;
    let inst = alice.complete(&started.task.task_instance_id, Some("to_qa"), &BTreeMap::new()).map_err(e)?;
    ensure(inst.state == "running", || format!("after submit {inst:?}"))?;
    ensure(alice.tasks().map_err(e)?.is_empty(), || "alice still holds a task".into())?;

    let review = quinn.tasks().map_err(e)?;
    ensure(review.len() == 1 && review[0].task_name == "review" && review[0].instance_id == instance_id, || {
        format!("quinn tasks {review:?}")
    })?;
    quinn.complete(&review[0].task_instance_id, Some("rework"), &BTreeMap::new()).map_err(e)?;
    let rework = alice.tasks().map_err(e)?;
    ensure(
        rework.len() == 1 && rework[0].task_name == "rework_article" && rework[0].actor_id == "alice",
        || format!("rework went to {rework:?}"),
    )?;
    ensure(stub("bob").tasks().map_err(e)?.is_empty(), || "bob got a task".into())?;

    let second_bytes: Vec<u8> = first_bytes.iter().rev().copied().chain([1, 2, 3]).collect();
    std::fs::write(&file, &second_bytes).unwrap();
    let staged = alice.upload_staging(&file).map_err(e)?;
    let v = alice.save_article(&pid, &staged, "alice").map_err(e)?;
    ensure(v == 2, || format!("second save gave version {v}"))?;
    alice.complete(&rework[0].task_instance_id, Some("to_qa"), &BTreeMap::new()).map_err(e)?;

    let review = quinn.tasks().map_err(e)?;
    ensure(review.len() == 1 && review[0].task_name == "review", || format!("second review {review:?}"))?;
    let done = quinn.complete(&review[0].task_instance_id, Some("approve"), &BTreeMap::new()).map_err(e)?;
    ensure(done.state == "ended", || format!("instance {done:?}"))?;
    ensure(quinn.tasks().map_err(e)?.is_empty() && alice.tasks().map_err(e)?.is_empty(), || "tasks left open".into())?;

    let rows = alice.do_query("creator", "eq", "alice", 100).map_err(e)?;
    ensure(rows.len() == 1 && rows[0].pid == pid, || format!("query rows {rows:?}"))?;
    let staging: Vec<_> = std::fs::read_dir(dir.path().join("data/staging")).unwrap().collect();
    ensure(staging.is_empty(), || format!("staging holds {} files", staging.len()))?;

    // Content check over the wire: both versions kept, bytes exact.
    let api = Api::new(&srv);
    let token = api.login("alice");
    for (version, bytes) in [(1, &first_bytes), (2, &second_bytes)] {
        let (status, meta) = api.get(&format!("/repo/objects/{pid}/datastreams/ARTICLE?version={version}"), &token);
        ensure(status == 200 && meta["formatURI"] == "alice" && meta["mimeType"] == "application/pdf", || {
            format!("version {version}: {status} {meta}")
        })?;
        let raw = api
            .request("GET", &format!("/repo/objects/{pid}/datastreams/ARTICLE/content?version={version}"), Some(&token))
            .send()
            .unwrap()
            .bytes()
            .unwrap();
        ensure(raw.as_ref() == bytes.as_slice(), || format!("version {version} bytes differ"))?;
    }
    Ok(format!("{pid} published via {instance_id}, ARTICLE at version 2"))
}

fn unsound_refusal() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let bytes = workflows::archive(&workflows::with_orphan());
    {
        let e = Engine::open(dir.path(), engine_options()).unwrap();
        let err = e.deploy_archive(&bytes).unwrap_err();
        ensure(err.code() == "UNSOUND_DEFINITION", || format!("code {}", err.code()))?;
        let named = err.violations().iter().any(|v| v.code.as_str() == "UNREACHABLE_NODE" && v.subject == "orphan");
        ensure(named, || format!("violations {:?}", err.violations()))?;
        ensure(e.latest_definitions().is_empty(), || "definition listed".into())?;
    }
    let records = pubflow::journal::read_all(dir.path()).unwrap();
    ensure(records.is_empty(), || format!("{} journal records written", records.len()))?;
    let e = Engine::open(dir.path(), engine_options()).unwrap();
    ensure(e.deployments().is_empty(), || "deployment survived reopen".into())?;

    // Same refusal through the service, which leaves no trace either.
    let sdir = tempfile::tempdir().unwrap();
    let srv = server::start(sdir.path());
    let api = Api::new(&srv);
    let root = api.login("root");
    let (status, body) = api.upload("/api/definitions", &root, "archive", "orphan.zip", bytes);
    ensure(status == 422 && body["code"] == "UNSOUND_DEFINITION", || format!("{status} {body}"))?;
    let named = body["detail"].as_array().unwrap().iter().any(|v| v["code"] == "UNREACHABLE_NODE" && v["subject"] == "orphan");
    ensure(named, || format!("detail {body}"))?;
    drop(srv);
    let engine_dir = sdir.path().join("engine");
    ensure(engine_dir.is_dir(), || "service engine directory missing".into())?;
    let records = pubflow::journal::read_all(&engine_dir).unwrap();
    ensure(records.is_empty(), || format!("service journaled {} records", records.len()))?;
    Ok("UNREACHABLE_NODE orphan, empty journal, nothing after reopen".into())
}

// ---------------------------------------------------------------- roles

const PRINCIPALS: [(&str, Option<&str>); 4] =
    [("anonymous", None), ("author", Some("alice")), ("qa", Some("quinn")), ("admin", Some("root"))];

fn roles_of(principal: &str) -> Option<Vec<Role>> {
    match principal {
        "author" => Some(vec![Role::Author]),
        "qa" => Some(vec![Role::Qa]),
        "admin" => Some(vec![Role::Admin]),
        _ => None,
    }
}

fn role_matrix() -> Result<usize, String> {
    let rows = server::markdown_table(&server::wire_doc(), "Operation");
    ensure(rows.len() == ENDPOINTS.len(), || format!("{} documented, {} served", rows.len(), ENDPOINTS.len()))?;
    let dir = tempfile::tempdir().unwrap();
    let srv = server::start(dir.path());
    let api = Api::new(&srv);
    let mut cells = 0;
    for ep in ENDPOINTS {
        let row = rows
            .iter()
            .find(|r| r[0] == ep.name)
            .ok_or_else(|| format!("{} not documented", ep.name))?;
        ensure(row[1] == ep.method && row[2] == ep.path, || format!("{} documented as {} {}", ep.name, row[1], row[2]))?;
        let path = ep
            .path
            .replace("{definitionId}", "def-999")
            .replace("{id}", "nope-1")
            .replace("{name}", "x")
            .replace("{pid}", "escipub:999")
            .replace("{dsId}", "ZZ");
        for (column, (principal, user)) in PRINCIPALS.iter().enumerate() {
            let documented = match row[3 + column].as_str() {
                "yes" => true,
                "no" => false,
                other => return Err(format!("cell {other:?} for {} / {principal}", ep.name)),
            };
            ensure(ep.access.allows(roles_of(principal).as_deref()) == documented, || {
                format!("{} for {principal}: table disagrees with docs", ep.name)
            })?;
            let token = user.map(|u| api.login(u));
            let (status, body) = api.call(ep.method, &path, token.as_deref(), |r| r.json(&json!({})));
            let code = body.get("code").and_then(Value::as_str).unwrap_or("");
            let denied = matches!(code, "UNAUTHENTICATED" | "FORBIDDEN");
            ensure(denied != documented, || format!("{} {path} as {principal}: {status} {body}", ep.method))?;
            if denied {
                let expected = if user.is_none() { 401 } else { 403 };
                ensure(status == expected, || format!("{} as {principal}: status {status}", ep.name))?;
            }
            cells += 1;
        }
        if let Access::Public = ep.access {
            ensure(row[3..].iter().all(|c| c == "yes"), || format!("{} is public", ep.name))?;
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone)]
enum Step {
    Start(usize),
    Act(usize, bool),
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        (0usize..3).prop_map(Step::Start),
        (any::<prop::sample::Index>(), any::<bool>()).prop_map(|(i, rework)| Step::Act(i.index(1 << 16), rework)),
    ]
}

const AUTHORS: [&str; 3] = ["alice", "bob", "carol"];

fn task_ids(api: &Api, token: &str) -> BTreeSet<String> {
    let (status, body) = api.get("/api/tasks", token);
    assert_eq!(status, 200, "{body}");
    body.as_array().unwrap().iter().map(|t| t["taskInstanceId"].as_str().unwrap().to_owned()).collect()
}

fn task_isolation() -> Result<usize, String> {
    let dir = tempfile::tempdir().unwrap();
    let mut config = server::config(dir.path());
    config.users.push(service::UserEntry::new("carol", "salt-carol", "carol-pw", &[Role::Author]));
    let srv = service::spawn(config).unwrap();
    let api = Api::new(&srv);
    let root = api.login("root");
    let (status, dep) = api.upload("/api/definitions", &root, "archive", "p.zip", workflows::archive(&workflows::publication_v1()));
    assert_eq!(status, 201, "{dep}");
    let def_id = dep["definitionId"].as_str().unwrap().to_owned();
    let users: Vec<&str> = AUTHORS.iter().copied().chain(["quinn"]).collect();
    let tokens: BTreeMap<&str, String> = users.iter().map(|u| (*u, api.login(u))).collect();

    // Expected holder of every open task, plus the instance initiator.
    let open: RefCell<BTreeMap<String, (String, String)>> = RefCell::new(BTreeMap::new());
    let checks = Cell::new(0usize);
    let mut runner = runner(30);
    runner
        .run(&proptest::collection::vec(step(), 1..14), |steps| {
            let mut open = open.borrow_mut();
            for s in steps {
                match s {
                    Step::Start(a) => {
                        let author = AUTHORS[a];
                        let (status, body) = api.json(
                            "POST",
                            &format!("/api/processes/{def_id}/start"),
                            &tokens[author],
                            json!({"variables": {"pid": "escipub:1"}}),
                        );
                        prop_assert_eq!(status, 201, "{}", body);
                        let id = body["task"]["taskInstanceId"].as_str().unwrap().to_owned();
                        prop_assert_eq!(body["task"]["actorId"].as_str(), Some(author));
                        open.insert(id, (author.to_owned(), author.to_owned()));
                    }
                    Step::Act(_, _) if open.is_empty() => continue,
                    Step::Act(i, rework) => {
                        let (id, (holder, initiator)) =
                            open.iter().nth(i % open.len()).map(|(k, v)| (k.clone(), v.clone())).unwrap();
                        let intruder = users.iter().find(|u| **u != holder).unwrap();
                        let (status, body) =
                            api.json("POST", &format!("/api/tasks/{id}/complete"), &tokens[intruder], json!({"transition": "to_qa"}));
                        prop_assert_eq!((status, body["code"].as_str()), (403, Some("FORBIDDEN_ACTOR")));
                        let (transition, next) = if holder == "quinn" {
                            if rework {
                                ("rework", Some(initiator.clone()))
                            } else {
                                ("approve", None)
                            }
                        } else {
                            ("to_qa", Some("quinn".to_owned()))
                        };
                        let (status, body) = api.json(
                            "POST",
                            &format!("/api/tasks/{id}/complete"),
                            &tokens[holder.as_str()],
                            json!({"transition": transition}),
                        );
                        prop_assert_eq!(status, 200, "{}", body);
                        open.remove(&id);
                        let Some(next) = next else {
                            prop_assert_eq!(body["state"].as_str(), Some("ended"));
                            continue;
                        };
                        let after = task_ids(&api, &tokens[next.as_str()]);
                        let mut fresh: Vec<_> = after.iter().filter(|t| !open.contains_key(*t)).cloned().collect();
                        prop_assert_eq!(fresh.len(), 1, "new task for {} after {}: {:?}", next, id, fresh);
                        open.insert(fresh.pop().unwrap(), (next, initiator));
                    }
                }
                for u in &users {
                    let expected: BTreeSet<String> =
                        open.iter().filter(|(_, (h, _))| h == u).map(|(k, _)| k.clone()).collect();
                    prop_assert_eq!(task_ids(&api, &tokens[u]), expected, "task list of {}", u);
                    checks.set(checks.get() + 1);
                }
                let (status, body) = api.get("/api/tasks", &root);
                prop_assert_eq!(status, 200);
                prop_assert!(body.as_array().unwrap().is_empty(), "admin holds tasks {}", body);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(checks.get())
}

fn isolation_and_matrix() -> Result<String, String> {
    let cells = role_matrix()?;
    let checks = task_isolation()?;
    Ok(format!("{cells} matrix cells, {checks} task-list comparisons"))
}
