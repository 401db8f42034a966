use std::path::Path;

use pubflow::service::{self, Config, Role, RunningServer, UserEntry};
use reqwest::blocking::{Client, RequestBuilder};
use reqwest::Method;
use serde_json::Value;

/// Password of every test user is `<name>-pw`.
pub fn users() -> Vec<UserEntry> {
    [
        ("alice", &[Role::Author][..]),
        ("bob", &[Role::Author][..]),
        ("quinn", &[Role::Qa][..]),
        ("root", &[Role::Admin][..]),
    ]
    .into_iter()
    .map(|(name, roles)| UserEntry::new(name, &format!("salt-{name}"), &format!("{name}-pw"), roles))
    .collect()
}

pub fn config(dir: &Path) -> Config {
    let mut c = Config::new("escipub", dir);
    c.port = 0;
    c.fsync = false;
    c.users = users();
    c
}

pub fn start(dir: &Path) -> RunningServer {
    service::spawn(config(dir)).expect("server starts")
}

pub struct Api {
    pub base: String,
    pub http: Client,
}

impl Api {
    pub fn new(server: &RunningServer) -> Api {
        Api {
            base: server.base_url.clone(),
            http: Client::new(),
        }
    }

    pub fn login(&self, user: &str) -> String {
        let (status, body) = self.call("POST", "/auth/login", None, |r| {
            r.json(&serde_json::json!({"username": user, "password": format!("{user}-pw")}))
        });
        assert_eq!(status, 200, "login {user}: {body}");
        body["token"].as_str().unwrap().to_owned()
    }

    pub fn request(&self, method: &str, path: &str, token: Option<&str>) -> RequestBuilder {
        let r = self
            .http
            .request(Method::from_bytes(method.as_bytes()).unwrap(), format!("{}{}", self.base, path));
        match token {
            Some(t) => r.bearer_auth(t),
            None => r,
        }
    }

    /// Sends and returns status plus body (JSON, or a string for non-JSON).
    pub fn call(
        &self,
        method: &str,
        path: &str,
        token: Option<&str>,
        body: impl FnOnce(RequestBuilder) -> RequestBuilder,
    ) -> (u16, Value) {
        let resp = body(self.request(method, path, token)).send().expect("request");
        let status = resp.status().as_u16();
        let text = resp.text().unwrap_or_default();
        let value = serde_json::from_str(&text).unwrap_or(Value::String(text));
        (status, value)
    }

    pub fn json(&self, method: &str, path: &str, token: &str, body: Value) -> (u16, Value) {
        self.call(method, path, Some(token), |r| r.json(&body))
    }

    pub fn get(&self, path: &str, token: &str) -> (u16, Value) {
        self.call("GET", path, Some(token), |r| r)
    }

    pub fn upload(&self, path: &str, token: &str, field: &str, filename: &str, bytes: Vec<u8>) -> (u16, Value) {
        let form = reqwest::blocking::multipart::Form::new()
            .part(field.to_owned(), reqwest::blocking::multipart::Part::bytes(bytes).file_name(filename.to_owned()));
        self.call("POST", path, Some(token), |r| r.multipart(form))
    }
}

/// Rows of the first markdown table whose header starts with `first`.
pub fn markdown_table(markdown: &str, first: &str) -> Vec<Vec<String>> {
    let mut lines = markdown.lines().skip_while(|l| !l.starts_with(&format!("| {first} |")));
    lines.next().expect("table header");
    lines.next().expect("separator");
    lines
        .take_while(|l| l.starts_with('|'))
        .map(|l| l.trim_matches('|').split('|').map(|c| c.trim().to_owned()).collect())
        .collect()
}

pub fn wire_doc() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/wire.md")).expect("docs/wire.md")
}
