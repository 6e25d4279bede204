use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use mfr::blobs::BlobStore;
use mfr::dataset::{self, DatasetError};
use mfr::model_file::{load_model, save_model, ModelFileError};
use mfr::outbox::{Outbox, OutboxError, DEFAULT_OUTBOX_CAP};
use mfr::registry::{
    Category, EnrollDraft, ItemDraft, ItemKind, PersonDraft, PersonKind, RegistryError, Store,
    StoreError, StoreOptions, MAX_PAGE,
};
use mfr::replay::{sync_replay, HttpTransport, RetryPolicy, SyncError, TransportError};
use mfr::service::{self, App, ConfigError, ServiceConfig, ServiceError, StartError};
use mfr::sync::ReportPayload;
use serde::de::DeserializeOwned;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(
    name = "mfr",
    version,
    about = "Missing-and-found recognition: kiosk client and admin tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Offline report queue and sync.
    #[command(subcommand)]
    Kiosk(KioskCommand),
    /// Dataset, model and server administration.
    #[command(subcommand)]
    Admin(AdminCommand),
}

#[derive(Debug, Args)]
struct OutboxArgs {
    /// Outbox file.
    #[arg(long, env = "MF_OUTBOX", default_value = "outbox.log")]
    outbox: PathBuf,
    /// Kiosk id; required when the outbox is created.
    #[arg(long, env = "MF_KIOSK_ID")]
    kiosk_id: Option<String>,
    /// Maximum number of unsent reports.
    #[arg(long, default_value_t = DEFAULT_OUTBOX_CAP)]
    cap: usize,
}

#[derive(Debug, Args)]
struct ServerArgs {
    /// Base URL of the service, e.g. http://127.0.0.1:8080.
    #[arg(long, env = "MF_SERVER")]
    server: Option<String>,
    #[arg(long, env = "MF_TOKEN", hide_env_values = true)]
    token: Option<String>,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Service config file (TOML); MF_* variables override it.
    #[arg(long, env = "MF_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum KioskCommand {
    /// Queue an item report.
    QueueItem {
        #[command(flatten)]
        outbox: OutboxArgs,
        /// found or lost.
        #[arg(long)]
        kind: String,
        /// watch, phone, bag, document, jewelry or other.
        #[arg(long)]
        category: String,
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long, default_value = "")]
        location: String,
        /// RFC 3339 time the item was found or lost.
        #[arg(long)]
        claimed_time: Option<DateTime<Utc>>,
        #[arg(long)]
        photo: Option<PathBuf>,
    },
    /// Queue a person report.
    QueuePerson {
        #[command(flatten)]
        outbox: OutboxArgs,
        /// missing, found-alive or deceased.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        photo: PathBuf,
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long, default_value = "")]
        location: String,
        /// Enrolled person a MISSING report is about.
        #[arg(long)]
        subject: Option<String>,
        #[arg(long)]
        claimed_time: Option<DateTime<Utc>>,
    },
    /// Send unsent reports to the server.
    Sync {
        #[command(flatten)]
        outbox: OutboxArgs,
        #[arg(long, env = "MF_SERVER")]
        server: String,
        #[arg(long, env = "MF_TOKEN", hide_env_values = true)]
        token: String,
    },
}

#[derive(Debug, Subcommand)]
enum AdminCommand {
    /// Write a synthetic face dataset.
    GenDataset {
        #[arg(long)]
        identities: usize,
        #[arg(long)]
        variations: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an eigenface model from a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        /// Use only the first N variations of each identity.
        #[arg(long)]
        variations: Option<usize>,
        #[command(flatten)]
        detector: DetectorArg,
    },
    /// Derive the match threshold from a dataset.
    CalibrateThreshold {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        variations: Option<usize>,
        /// Store the result as `threshold` in this config file.
        #[arg(long)]
        write: Option<PathBuf>,
        #[command(flatten)]
        detector: DetectorArg,
    },
    /// Enroll persons, either one from photos or every identity of a dataset.
    Enroll {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        remote: ServerArgs,
        /// Dataset to enroll in bulk.
        #[arg(long, conflicts_with_all = ["name", "photo"])]
        data: Option<PathBuf>,
        #[arg(long, requires = "data")]
        variations: Option<usize>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value = "")]
        nationality: String,
        #[arg(long)]
        group_id: Option<String>,
        #[arg(long)]
        photo: Vec<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Identify the face in a photo.
    QueryPhoto {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        remote: ServerArgs,
        #[arg(long)]
        photo: PathBuf,
        #[arg(long)]
        top_n: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Search reports with the query grammar.
    Search {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        remote: ServerArgs,
        query: String,
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
}

#[derive(Debug, Args)]
struct DetectorArg {
    /// Config file whose detector settings to use.
    #[arg(long, env = "MF_CONFIG")]
    config: Option<PathBuf>,
}

impl DetectorArg {
    fn params(&self) -> Result<mfr_core::DetectorParams, CliError> {
        Ok(match &self.config {
            Some(_) => ServiceConfig::load(self.config.as_deref())?.detector,
            None => mfr_core::DetectorParams::default(),
        })
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Network(String),
    #[error("{0}")]
    Auth(String),
    #[error("{0}")]
    Corrupt(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 2,
            Self::Network(_) => 3,
            Self::Auth(_) => 4,
            Self::Corrupt(_) => 5,
            Self::Other(_) => 1,
        }
    }
}

impl From<OutboxError> for CliError {
    fn from(e: OutboxError) -> Self {
        match e {
            OutboxError::Validation(_)
            | OutboxError::Full(_)
            | OutboxError::WrongKiosk { .. }
            | OutboxError::Missing(_) => Self::Validation(e.to_string()),
            OutboxError::Corrupt { .. } | OutboxError::Codec(_) | OutboxError::Inconsistent(_) => {
                Self::Corrupt(e.to_string())
            }
            _ => Self::Other(e.to_string()),
        }
    }
}

impl From<SyncError> for CliError {
    fn from(e: SyncError) -> Self {
        match e {
            SyncError::ServerUnreachable { .. } | SyncError::ShortAck { .. } => {
                Self::Network(e.to_string())
            }
            SyncError::AuthFailure(_) => Self::Auth(e.to_string()),
            SyncError::Transport(TransportError::Rejected {
                status: 400..=499, ..
            }) => Self::Validation(e.to_string()),
            SyncError::Transport(_) => Self::Network(e.to_string()),
            SyncError::Outbox(o) => o.into(),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::CorruptLog { .. } | StoreError::Replay { .. } | StoreError::Codec(_) => {
                Self::Corrupt(e.to_string())
            }
            _ => Self::Other(e.to_string()),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e.status() {
            400 | 404 | 409 | 413 | 422 => Self::Validation(e.to_string()),
            401 | 403 => Self::Auth(e.to_string()),
            _ => match e {
                ServiceError::Registry(RegistryError::Store(s)) => s.into(),
                other => Self::Other(other.to_string()),
            },
        }
    }
}

impl From<RegistryError> for CliError {
    fn from(e: RegistryError) -> Self {
        ServiceError::from(e).into()
    }
}

impl From<StartError> for CliError {
    fn from(e: StartError) -> Self {
        match e {
            StartError::Store(s) => s.into(),
            StartError::Model(ModelFileError::Io(_)) => Self::Other(e.to_string()),
            StartError::Model(_) => Self::Corrupt(e.to_string()),
            StartError::Config(_) | StartError::Credentials(_) => Self::Validation(e.to_string()),
            StartError::Service(s) => s.into(),
            StartError::Io(_) => Self::Other(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        match e {
            ModelFileError::Io(_) => Self::Other(e.to_string()),
            _ => Self::Corrupt(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => Self::Other(e.to_string()),
            DatasetError::Manifest(_) => Self::Corrupt(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Other(e.to_string())
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

/// Parses an enum value the way it is spelled in JSON, accepting any case
/// and `-` for `_`.
fn parse_enum<T: DeserializeOwned>(what: &str, s: &str, upper: bool) -> Result<T, CliError> {
    let norm = s.trim().replace('-', "_");
    let norm = if upper {
        norm.to_ascii_uppercase()
    } else {
        norm.to_ascii_lowercase()
    };
    serde_json::from_value(Value::String(norm))
        .map_err(|_| CliError::Validation(format!("unknown {what} {s:?}")))
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Other(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn open_outbox(args: &OutboxArgs) -> Result<Outbox, CliError> {
    Ok(Outbox::open(
        &args.outbox,
        args.kiosk_id.as_deref(),
        args.cap,
    )?)
}

fn kiosk(cmd: KioskCommand) -> Result<(), CliError> {
    match cmd {
        KioskCommand::QueueItem {
            outbox,
            kind,
            category,
            description,
            location,
            claimed_time,
            photo,
        } => {
            let draft = ItemDraft {
                kind: parse_enum::<ItemKind>("kind", &kind, true)?,
                category: parse_enum::<Category>("category", &category, false)?,
                description,
                location,
                claimed_time,
            };
            let photo = photo.as_deref().map(read).transpose()?;
            let mut ob = open_outbox(&outbox)?;
            let seq = ob.queue(ReportPayload::item(draft, photo.as_deref()), Utc::now())?;
            print_json(&serde_json::json!({ "kiosk_id": ob.kiosk_id(), "seq": seq }))
        }
        KioskCommand::QueuePerson {
            outbox,
            kind,
            photo,
            description,
            location,
            subject,
            claimed_time,
        } => {
            let draft = PersonDraft {
                kind: parse_enum::<PersonKind>("kind", &kind, true)?,
                description,
                location,
                subject_person_id: subject,
                claimed_time,
            };
            let photo = read(&photo)?;
            let mut ob = open_outbox(&outbox)?;
            let seq = ob.queue(ReportPayload::person(draft, Some(&photo)), Utc::now())?;
            print_json(&serde_json::json!({ "kiosk_id": ob.kiosk_id(), "seq": seq }))
        }
        KioskCommand::Sync {
            outbox,
            server,
            token,
        } => {
            let mut ob = open_outbox(&outbox)?;
            let mut transport = HttpTransport::new(&server, &token)
                .map_err(|e| CliError::Network(e.to_string()))?;
            let summary = sync_replay(&mut ob, &mut transport, &mut RetryPolicy::default())?;
            print_json(&summary)
        }
    }
}

/// Opens the local data directory for offline admin work.
fn local_app(config: &ConfigArg) -> Result<(ServiceConfig, App), CliError> {
    let cfg = ServiceConfig::load(config.config.as_deref())?;
    let store = Store::open(
        cfg.store_dir(),
        StoreOptions {
            sync: cfg.sync_writes,
            snapshot_every: cfg.snapshot_every,
            ..StoreOptions::default()
        },
    )?;
    let blobs = BlobStore::open(cfg.blob_dir())?;
    let path = cfg.model_path();
    let model = if path.exists() {
        Some(load_model(&path)?)
    } else {
        None
    };
    let app = App::new(
        store,
        blobs,
        model,
        cfg.detector.clone(),
        cfg.threshold,
        cfg.top_n,
    )?;
    Ok((cfg, app))
}

struct Remote {
    base: String,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl Remote {
    fn from_args(args: &ServerArgs) -> Result<Option<Self>, CliError> {
        let Some(base) = &args.server else {
            return Ok(None);
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| CliError::Network(e.to_string()))?;
        Ok(Some(Self {
            base: format!("{}/api/v1", base.trim_end_matches('/')),
            token: args.token.clone(),
            client,
        }))
    }

    fn request(&self, method: reqwest::Method, path: &str) -> reqwest::blocking::RequestBuilder {
        let rb = self.client.request(method, format!("{}{path}", self.base));
        match &self.token {
            Some(t) => rb.bearer_auth(t),
            None => rb,
        }
    }

    fn finish(rb: reqwest::blocking::RequestBuilder) -> Result<Value, CliError> {
        let resp = rb.send().map_err(|e| CliError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let body: Value = resp.json().map_err(|e| CliError::Network(e.to_string()))?;
        if (200..300).contains(&status) {
            return Ok(body);
        }
        let code = body.get("code").and_then(Value::as_str).unwrap_or("ERROR");
        let msg = body.get("message").and_then(Value::as_str).unwrap_or("");
        let text = format!("{code}: {msg}");
        Err(match status {
            401 | 403 => CliError::Auth(text),
            400..=499 => CliError::Validation(text),
            _ => CliError::Network(text),
        })
    }
}

fn photo_part(bytes: Vec<u8>, name: &str) -> reqwest::blocking::multipart::Part {
    reqwest::blocking::multipart::Part::bytes(bytes).file_name(name.to_string())
}

fn admin(cmd: AdminCommand) -> Result<(), CliError> {
    match cmd {
        AdminCommand::GenDataset {
            identities,
            variations,
            seed,
            out,
        } => {
            let m = dataset::generate_dataset(&out, identities, variations, seed)?;
            print_json(&serde_json::json!({
                "out": out,
                "identities": m.identities.len(),
                "variations": m.variations,
                "seed": m.seed,
            }))
        }
        AdminCommand::Train {
            data,
            k,
            out,
            variations,
            detector,
        } => {
            let version = if out.exists() {
                load_model(&out)?.version() + 1
            } else {
                1
            };
            let manifest = dataset::load_manifest(&data)?;
            let v = variations.unwrap_or(manifest.variations);
            let model = dataset::train_from_dataset(&data, v, k, version, &detector.params()?)?;
            save_model(&model, &out)?;
            print_json(&serde_json::json!({
                "out": out,
                "version": model.version(),
                "k": model.k(),
                "orthonormality_error": model.orthonormality_error(),
            }))
        }
        AdminCommand::CalibrateThreshold {
            data,
            model,
            variations,
            write,
            detector,
        } => {
            let model = load_model(&model)?;
            let manifest = dataset::load_manifest(&data)?;
            let v = variations.unwrap_or(manifest.variations);
            let theta = dataset::calibrate_from_dataset(&data, v, &model, &detector.params()?)?;
            if let Some(path) = &write {
                write_threshold(path, theta)?;
            }
            print_json(&serde_json::json!({ "threshold": theta, "model_version": model.version() }))
        }
        AdminCommand::Enroll {
            config,
            remote,
            data,
            variations,
            name,
            nationality,
            group_id,
            photo,
        } => {
            let mut jobs: Vec<(EnrollDraft, Vec<Vec<u8>>)> = Vec::new();
            if let Some(root) = &data {
                let manifest = dataset::load_manifest(root)?;
                let v = variations.unwrap_or(manifest.variations);
                for id in &manifest.identities {
                    let photos = id
                        .files
                        .iter()
                        .take(v)
                        .map(|rel| Ok(dataset::read_file(root, rel)?))
                        .collect::<Result<Vec<_>, CliError>>()?;
                    jobs.push((
                        EnrollDraft {
                            full_name: id.name.clone(),
                            nationality: String::new(),
                            group_id: Some(format!("dataset-{}", manifest.seed)),
                        },
                        photos,
                    ));
                }
            } else {
                let full_name = name
                    .ok_or_else(|| CliError::Validation("--name or --data is required".into()))?;
                let photos = photo
                    .iter()
                    .map(|p| read(p))
                    .collect::<Result<Vec<_>, _>>()?;
                jobs.push((
                    EnrollDraft {
                        full_name,
                        nationality,
                        group_id,
                    },
                    photos,
                ));
            }
            let mut enrolled = Vec::new();
            if let Some(r) = Remote::from_args(&remote)? {
                for (draft, photos) in jobs {
                    let mut form = reqwest::blocking::multipart::Form::new()
                        .text("full_name", draft.full_name);
                    form = form.text("nationality", draft.nationality);
                    if let Some(g) = draft.group_id {
                        form = form.text("group_id", g);
                    }
                    for (i, p) in photos.into_iter().enumerate() {
                        form = form.part("photos", photo_part(p, &format!("photo{i}")));
                    }
                    let person = Remote::finish(
                        r.request(reqwest::Method::POST, "/persons").multipart(form),
                    )?;
                    enrolled.push(person.get("person_id").cloned().unwrap_or(Value::Null));
                }
            } else {
                let (_, app) = local_app(&config)?;
                for (draft, photos) in jobs {
                    let person = app.enroll(&draft, &photos)?;
                    enrolled.push(Value::String(person.person_id));
                }
            }
            print_json(&serde_json::json!({ "enrolled": enrolled.len(), "person_ids": enrolled }))
        }
        AdminCommand::Serve { config } => {
            let cfg = ServiceConfig::load(config.config.as_deref())?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(cfg))?;
            Ok(())
        }
        AdminCommand::QueryPhoto {
            config,
            remote,
            photo,
            top_n,
            threshold,
        } => {
            let bytes = read(&photo)?;
            if let Some(r) = Remote::from_args(&remote)? {
                let mut form = reqwest::blocking::multipart::Form::new()
                    .part("photo", photo_part(bytes, "probe"));
                if let Some(n) = top_n {
                    form = form.text("top_n", n.to_string());
                }
                if let Some(t) = threshold {
                    form = form.text("threshold", t.to_string());
                }
                print_json(&Remote::finish(
                    r.request(reqwest::Method::POST, "/identify")
                        .multipart(form),
                )?)
            } else {
                let (_, app) = local_app(&config)?;
                print_json(&app.identify(&bytes, top_n, threshold)?)
            }
        }
        AdminCommand::Search {
            config,
            remote,
            query,
            limit,
        } => {
            if !(1..=MAX_PAGE).contains(&limit) {
                return Err(CliError::Validation(format!(
                    "--limit must be within 1..={MAX_PAGE}"
                )));
            }
            if let Some(r) = Remote::from_args(&remote)? {
                let path = format!("/reports?query={}&limit={limit}", encode_component(&query));
                print_json(&Remote::finish(r.request(reqwest::Method::GET, &path))?)
            } else {
                let (_, app) = local_app(&config)?;
                let results = app.store.search(&query, None, None, limit)?;
                print_json(&serde_json::json!({ "results": results }))
            }
        }
    }
}

/// Percent-encodes everything outside the URL unreserved set.
fn encode_component(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-_.~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

/// Sets `threshold` in a TOML config file, keeping its other keys.
fn write_threshold(path: &Path, theta: f64) -> Result<(), CliError> {
    let mut table: toml::Table = match std::fs::read_to_string(path) {
        Ok(text) => text
            .parse()
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => toml::Table::new(),
        Err(e) => return Err(e.into()),
    };
    table.insert("threshold".into(), toml::Value::Float(theta));
    let text = toml::to_string(&table).map_err(|e| CliError::Other(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Kiosk(c) => kiosk(c),
        Command::Admin(c) => admin(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
