use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pubflow::client::{Client, ClientError, StubConfig, DEFAULT_MAX_RESULTS};
use pubflow::service::{self, hash_password, Config};

/// Command-line front end for a pubflow server.
#[derive(Parser)]
#[command(name = "pubflow", version)]
struct Cli {
    #[command(flatten)]
    conn: Connection,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Connection {
    #[arg(long, env = "PUBFLOW_SERVER", global = true, default_value = "http://127.0.0.1:8080")]
    server: String,
    #[arg(long, env = "PUBFLOW_USER", global = true)]
    user: Option<String>,
    #[arg(long, env = "PUBFLOW_PASSWORD", global = true, hide_env_values = true)]
    password: Option<String>,
    /// Request timeout in seconds.
    #[arg(long, global = true, default_value_t = 60)]
    timeout: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Deploy a process archive.
    Deploy { archive: PathBuf },
    /// List the latest version of each deployed definition.
    Definitions,
    /// Create an empty article object and print its PID.
    Ingest,
    /// Dublin Core metadata.
    Dc {
        #[command(subcommand)]
        action: DcAction,
    },
    /// Article files.
    Article {
        #[command(subcommand)]
        action: ArticleAction,
    },
    /// Single-condition field search.
    Query {
        field: String,
        operator: String,
        value: String,
        #[arg(long, default_value_t = DEFAULT_MAX_RESULTS)]
        max: usize,
    },
    /// Start a process instance.
    Start {
        definition_id: String,
        /// Process variable, repeatable.
        #[arg(long = "var", value_name = "NAME=VALUE")]
        vars: Vec<String>,
    },
    /// List your open tasks.
    Tasks,
    /// Complete a task.
    Complete {
        task_id: String,
        #[arg(long)]
        transition: Option<String>,
        #[arg(long = "var", value_name = "NAME=VALUE")]
        vars: Vec<String>,
    },
    /// Administer a process instance.
    Admin {
        #[arg(value_parser = ["advance", "stop"])]
        action: String,
        instance_id: String,
    },
    /// Run the server.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the passwordHash value for a config user entry.
    HashPassword {
        #[arg(long)]
        salt: String,
        password: String,
    },
}

#[derive(Subcommand)]
enum DcAction {
    /// Replace the DC record; repeat a key for multiple values.
    Set {
        pid: String,
        #[arg(value_name = "ELEMENT=VALUE", required = true)]
        fields: Vec<String>,
    },
}

#[derive(Subcommand)]
enum ArticleAction {
    /// Upload a file and store it as the ARTICLE datastream.
    Put {
        pid: String,
        file: PathBuf,
        /// Recorded as formatURI; defaults to the user name.
        #[arg(long)]
        creator: Option<String>,
    },
}

fn pairs(items: &[String]) -> Result<Vec<(String, String)>, ClientError> {
    items
        .iter()
        .map(|item| {
            item.split_once('=')
                .map(|(k, v)| (k.to_owned(), v.to_owned()))
                .ok_or_else(|| ClientError::Usage(format!("expected NAME=VALUE, got '{item}'")))
        })
        .collect()
}

fn var_map(items: &[String]) -> Result<BTreeMap<String, String>, ClientError> {
    Ok(pairs(items)?.into_iter().collect())
}

struct Output {
    json: bool,
}

impl Output {
    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
        } else {
            println!("{}", text());
        }
    }
}

fn client(conn: &Connection) -> Result<Client, ClientError> {
    let user = conn.user.clone().ok_or_else(|| ClientError::Usage("--user or PUBFLOW_USER is required".into()))?;
    let password = conn
        .password
        .clone()
        .ok_or_else(|| ClientError::Usage("--password or PUBFLOW_PASSWORD is required".into()))?;
    Client::new(StubConfig {
        base_url: conn.server.clone(),
        username: user,
        password,
        timeout_seconds: conn.timeout,
    })
}

fn run(cli: Cli) -> Result<(), ClientError> {
    let out = Output { json: cli.json };
    match cli.command {
        Command::Serve { config } => {
            let config = Config::load(&config).map_err(|e| ClientError::Usage(e.to_string()))?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| ClientError::Usage(e.to_string()))?;
            runtime
                .block_on(service::serve(config))
                .map_err(|e| ClientError::Usage(e.to_string()))
        }
        Command::HashPassword { salt, password } => {
            let hash = hash_password(&salt, &password);
            out.emit(&hash, || hash.clone());
            Ok(())
        }
        Command::Deploy { archive } => {
            let c = client(&cli.conn)?;
            let d = c.deploy_archive(&archive)?;
            out.emit(&d, || format!("deployed {} version {} as {}", d.name, d.version, d.definition_id));
            Ok(())
        }
        Command::Definitions => {
            let defs = client(&cli.conn)?.latest_definitions()?;
            out.emit(&defs, || {
                defs.iter()
                    .map(|d| format!("{}\t{}\tv{}", d.definition_id, d.name, d.version))
                    .collect::<Vec<_>>()
                    .join("\n")
            });
            Ok(())
        }
        Command::Ingest => {
            let pid = client(&cli.conn)?.ingest_new_object()?;
            out.emit(&serde_json::json!({"pid": pid}), || pid.clone());
            Ok(())
        }
        Command::Dc {
            action: DcAction::Set { pid, fields },
        } => {
            let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for (k, v) in pairs(&fields)? {
                map.entry(k).or_default().push(v);
            }
            if client(&cli.conn)?.change_dc(&pid, &map)? {
                out.emit(&serde_json::json!({"success": true}), || format!("updated DC of {pid}"));
                Ok(())
            } else {
                Err(ClientError::Server {
                    status: 0,
                    code: "DC_REJECTED".into(),
                    message: format!("the server rejected the DC update for {pid}"),
                    detail: None,
                })
            }
        }
        Command::Article {
            action: ArticleAction::Put { pid, file, creator },
        } => {
            let c = client(&cli.conn)?;
            let creator = creator.or(cli.conn.user.clone()).unwrap_or_default();
            let staged = c.upload_staging(&file)?;
            let version = c.save_article(&pid, &staged, &creator)?;
            let report = serde_json::json!({"pid": pid, "versionNo": version, "size": staged.size, "mimeType": staged.mime_type});
            out.emit(&report, || {
                format!("{pid} ARTICLE version {version} ({}, {} bytes)", staged.mime_type, staged.size)
            });
            Ok(())
        }
        Command::Query {
            field,
            operator,
            value,
            max,
        } => {
            let rows = client(&cli.conn)?.do_query(&field, &operator, &value, max)?;
            out.emit(&rows, || {
                rows.iter()
                    .map(|r| {
                        let title = r.dc.get("title").and_then(|t| t.first()).cloned().unwrap_or_default();
                        format!("{}\t{}\t{}", r.pid, r.c_date, title)
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            });
            Ok(())
        }
        Command::Start { definition_id, vars } => {
            let started = client(&cli.conn)?.start(&definition_id, &var_map(&vars)?)?;
            out.emit(&started, || {
                format!(
                    "{} started; task {} ({}) for {}",
                    started.instance.instance_id, started.task.task_instance_id, started.task.task_name, started.task.actor_id
                )
            });
            Ok(())
        }
        Command::Tasks => {
            let tasks = client(&cli.conn)?.tasks()?;
            out.emit(&tasks, || {
                tasks
                    .iter()
                    .map(|t| format!("{}\t{}\t{}\t{}", t.task_instance_id, t.instance_id, t.node_name, t.task_name))
                    .collect::<Vec<_>>()
                    .join("\n")
            });
            Ok(())
        }
        Command::Complete {
            task_id,
            transition,
            vars,
        } => {
            let inst = client(&cli.conn)?.complete(&task_id, transition.as_deref(), &var_map(&vars)?)?;
            out.emit(&inst, || format!("{} is {}", inst.instance_id, inst.state));
            Ok(())
        }
        Command::Admin { action, instance_id } => {
            let inst = client(&cli.conn)?.admin(&instance_id, &action)?;
            out.emit(&inst, || format!("{} is {}", inst.instance_id, inst.state));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json {
                let body = match &e {
                    ClientError::Server {
                        status,
                        code,
                        message,
                        detail,
                    } => serde_json::json!({"status": status, "code": code, "message": message, "detail": detail}),
                    other => serde_json::json!({"message": other.to_string()}),
                };
                eprintln!("{body}");
            } else {
                eprintln!("pubflow: {e}");
                if let ClientError::Server { detail: Some(detail), .. } = &e {
                    if let Some(items) = detail.as_array() {
                        for v in items {
                            eprintln!(
                                "  {} {}: {}",
                                v["code"].as_str().unwrap_or("?"),
                                v["subject"].as_str().unwrap_or(""),
                                v["message"].as_str().unwrap_or("")
                            );
                        }
                    }
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
