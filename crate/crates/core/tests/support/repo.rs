use std::path::Path;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};
use proptest::prelude::*;
use pubflow::repository::{DcElement, DublinCoreRecord, ObjectFields, Repository, RepositoryOptions};
use regex::RegexBuilder;

/// Clock the test moves by hand; every call in one operation sees the same
/// instant.
#[derive(Clone)]
pub struct ManualClock(Arc<Mutex<DateTime<Utc>>>);

impl ManualClock {
    pub fn new() -> Self {
        ManualClock(Arc::new(Mutex::new(DateTime::from_timestamp(1_700_000_000, 0).unwrap())))
    }

    pub fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }

    pub fn tick(&self, seconds: i64) -> DateTime<Utc> {
        let mut t = self.0.lock().unwrap();
        *t += Duration::seconds(seconds);
        *t
    }

    pub fn options(&self, namespace: &str) -> RepositoryOptions {
        let me = self.clone();
        RepositoryOptions {
            fsync: false,
            clock: Arc::new(move || me.now()),
            ..RepositoryOptions::new(namespace)
        }
    }
}

pub fn open(dir: &Path, clock: &ManualClock) -> Repository {
    Repository::open(dir, clock.options("escipub")).unwrap()
}

pub fn stamp(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string()
}

/// Text that survives XML: printable ASCII incl. markup characters, a few
/// non-ASCII letters, tabs and newlines.
pub fn dc_value() -> impl Strategy<Value = String> {
    "[ -~\t\näöüßé]{0,16}"
}

pub fn dc_record() -> impl Strategy<Value = DublinCoreRecord> {
    proptest::collection::vec(proptest::collection::vec(dc_value(), 0..4), 12).prop_map(|lists| {
        let mut r = DublinCoreRecord::default();
        for (e, values) in DcElement::ALL.into_iter().zip(lists) {
            *r.get_mut(e) = values;
        }
        r
    })
}

/// Small vocabulary so that conditions actually hit.
pub const WORDS: &[&str] = &[
    "alice", "bob", "Alice", "workflow", "network", "Work", "2021-03-04", "2022", "x*y", "",
];

pub fn word() -> impl Strategy<Value = String> {
    prop::sample::select(WORDS).prop_map(str::to_owned)
}

pub fn search_record() -> impl Strategy<Value = DublinCoreRecord> {
    (
        proptest::collection::vec(word(), 0..3),
        proptest::collection::vec(word(), 0..3),
        proptest::collection::vec(word(), 0..2),
        proptest::collection::vec(word(), 0..2),
    )
        .prop_map(|(creator, title, subject, date)| DublinCoreRecord {
            creator,
            title,
            subject,
            date,
            ..DublinCoreRecord::default()
        })
}

pub const FIELDS: &[&str] = &["pid", "label", "cDate", "mDate", "creator", "title", "subject", "date", "identifier"];
pub const OPERATORS: &[&str] = &["eq", "has", "gt", "ge", "lt", "le"];

pub fn query_value() -> impl Strategy<Value = String> {
    prop_oneof![
        word(),
        Just("wor*".to_owned()),
        Just("*work".to_owned()),
        Just("*LICE".to_owned()),
        Just("a*e".to_owned()),
        Just("*".to_owned()),
        Just("escipub:1".to_owned()),
        Just("2023-11-14T22".to_owned()),
    ]
}

pub fn condition() -> impl Strategy<Value = (String, String, String)> {
    (prop::sample::select(FIELDS), prop::sample::select(OPERATORS), query_value())
        .prop_map(|(f, o, v)| (f.to_owned(), o.to_owned(), v))
}

fn field_values<'a>(row: &'a ObjectFields, field: &str) -> Vec<&'a str> {
    match field {
        "pid" => vec![&row.pid],
        "label" => vec![&row.label],
        "cDate" => vec![&row.c_date],
        "mDate" => vec![&row.m_date],
        other => {
            let e: DcElement = other.parse().expect("test fields are valid");
            row.dc.get(e).iter().map(String::as_str).collect()
        }
    }
}

fn holds(value: &str, op: &str, target: &str) -> bool {
    match op {
        "eq" => value == target,
        "gt" => value > target,
        "ge" => value >= target,
        "lt" => value < target,
        "le" => value <= target,
        "has" if target.contains('*') => {
            let pattern = target.split('*').map(regex::escape).collect::<Vec<_>>().join(".*");
            RegexBuilder::new(&format!("^(?s:{pattern})$"))
                .case_insensitive(true)
                .build()
                .unwrap()
                .is_match(value)
        }
        "has" => value.to_lowercase().contains(&target.to_lowercase()),
        _ => unreachable!("unknown operator {op}"),
    }
}

/// Full scan in PID-serial order, truncated by hand.
pub fn naive_find(rows: &[ObjectFields], conditions: &[(String, String, String)], max: usize) -> (Vec<String>, bool) {
    let hits: Vec<String> = rows
        .iter()
        .filter(|row| {
            conditions
                .iter()
                .all(|(f, o, v)| field_values(row, f).into_iter().any(|x| holds(x, o, v)))
        })
        .map(|row| row.pid.clone())
        .collect();
    let complete = hits.len() <= max;
    (hits.into_iter().take(max).collect(), complete)
}
