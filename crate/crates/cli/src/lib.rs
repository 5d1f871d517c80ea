//! The `adamant` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 domain
//! condition (broken anchors, unknown quote, ...), 3 I/O failure.

pub mod corpus;
pub mod interchange;
pub mod stats;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use adamant_core::anchor::locate_quote;
use adamant_core::annotation::AnnotationEdit;
use adamant_core::store::StoreError;
use adamant_core::{Annotation, AnnotationType, FilterCriteria, PageUrl, SearchScope, Store, Visibility};
use adamant_server::service::{CreateRequest, DocumentRequest, PatchRequest};
use adamant_server::{Config, ConfigError, ListParams, Service, ServiceError};
use clap::{ArgGroup, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "adamant", version, about = "Annotate documentation pages and keep the anchors attached")]
pub struct Cli {
    /// Store directory; overrides the config file and ADAMANT_STORE.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Config file (default: ./adamant.toml when present).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Acting user.
    #[arg(long, global = true, env = "ADAMANT_USER", default_value = "local")]
    pub user: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API over the configured store.
    Serve,
    /// Register html files as document snapshots.
    ImportDocs {
        /// Directories, html files, or docs-manifest.json files mapping files to urls.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Annotate the stored snapshot of a page by quoting its text.
    Annotate {
        #[arg(long)]
        url: String,
        #[arg(long)]
        quote: String,
        #[arg(long = "type", default_value = "normal")]
        kind: AnnotationType,
        #[arg(long, default_value = "")]
        body: String,
        #[arg(long = "tag")]
        tags: Vec<String>,
        /// public, private or group:<id>
        #[arg(long, default_value = "public", value_parser = parse_visibility)]
        visibility: Visibility,
        /// Which occurrence (1-based) when the quote appears more than once.
        #[arg(long)]
        occurrence: Option<usize>,
    },
    /// Re-resolve anchors against the latest snapshots.
    #[command(group(ArgGroup::new("pages").required(true).args(["url", "all"])))]
    Reanchor {
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        all: bool,
        #[arg(long)]
        json: bool,
    },
    /// Tag or delete every matching annotation you own.
    #[command(group(ArgGroup::new("action").required(true).args(["add_tag", "delete"])))]
    Batch {
        /// e.g. `type=issue,tag=grid,after=2021-01-01`
        #[arg(long)]
        filter: String,
        #[arg(long)]
        add_tag: Option<String>,
        #[arg(long)]
        delete: bool,
        #[arg(long)]
        dry_run: bool,
    },
    /// Write all live annotations to an interchange file.
    Export {
        #[arg(long)]
        out: PathBuf,
    },
    /// Load annotations from an interchange file.
    Import { file: PathBuf },
    /// Counts by type, answered questions, body length and pins.
    Stats {
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// List annotations, optionally filtered and sorted.
    List {
        #[arg(long)]
        url: Option<String>,
        /// page, site or all
        #[arg(long)]
        scope: Option<String>,
        #[arg(long)]
        filter: Option<String>,
        /// Full-text query.
        #[arg(long)]
        q: Option<String>,
        /// document_order, time_desc or time_asc
        #[arg(long)]
        sort: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Full-text search.
    Search {
        text: String,
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        scope: Option<String>,
        #[arg(long)]
        json: bool,
    },
}

fn parse_visibility(s: &str) -> std::result::Result<Visibility, String> {
    match s {
        "public" => Ok(Visibility::Public),
        "private" => Ok(Visibility::Private),
        _ => match s.strip_prefix("group:") {
            Some(g) if !g.is_empty() => Ok(Visibility::Group(g.to_string())),
            _ => Err(format!("expected public, private or group:<id>, got `{s}`")),
        },
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{code}: {message}")]
    Domain { code: String, message: String },
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Domain { .. } => EXIT_DOMAIN,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn domain(code: &str, message: impl Into<String>) -> Self {
        CliError::Domain {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match &e {
            ServiceError::Store(StoreError::Io(_) | StoreError::Corrupt { .. } | StoreError::Json(_)) => {
                CliError::Io(e.to_string())
            }
            ServiceError::Store(StoreError::Locked(_)) => CliError::Io(format!("store-locked: {e}")),
            ServiceError::Anonymous | ServiceError::BadParam { .. } => CliError::Usage(e.to_string()),
            ServiceError::Internal(_) => CliError::Io(e.to_string()),
            ServiceError::Store(_) => CliError::domain(e.code(), e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        ServiceError::Store(e).into()
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn io_error(what: impl std::fmt::Display, e: std::io::Error) -> CliError {
    CliError::Io(format!("{what}: {e}"))
}

fn load_config(cli: &Cli) -> Result<Config> {
    let default = Path::new("adamant.toml");
    let path = cli.config.as_deref().or(default.is_file().then_some(default));
    match Config::load(path) {
        Ok(mut c) => {
            if let Some(dir) = &cli.store {
                c.store_dir = dir.clone();
            }
            Ok(c)
        }
        Err(ConfigError::MissingStore) if cli.store.is_some() => {
            Ok(Config::load_with(path, None, cli.store.as_ref().map(|p| p.display().to_string()))?)
        }
        Err(e) => Err(e.into()),
    }
}

fn open_store(cli: &Cli) -> Result<Arc<Store>> {
    let config = load_config(cli)?;
    Ok(Arc::new(Store::open(&config.store_dir)?))
}

fn page_url(raw: &str) -> Result<PageUrl> {
    PageUrl::parse(raw).map_err(|e| CliError::Usage(e.to_string()))
}

fn json_line(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| io_error("stdout", e))
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    if let Command::Serve = cli.command {
        return serve(cli, out);
    }
    let store = open_store(cli)?;
    let svc = Service::new(store.clone());
    let user = cli.user.as_str();
    let w = |e| io_error("stdout", e);
    match &cli.command {
        Command::Serve => unreachable!("handled above"),
        Command::ImportDocs { paths } => import_docs(&svc, user, paths, out, err),
        Command::Annotate {
            url,
            quote,
            kind,
            body,
            tags,
            visibility,
            occurrence,
        } => {
            let page = page_url(url)?;
            let doc = store
                .get_document(&page)
                .ok_or_else(|| CliError::domain("no-snapshot", format!("no document snapshot for {page}")))?;
            let hits = locate_quote(&doc, quote);
            let selector = match (hits.len(), occurrence) {
                (0, _) => return Err(CliError::domain("quote-not-found", format!("`{quote}` does not occur on {page}"))),
                (n, None) if n > 1 => {
                    return Err(CliError::domain(
                        "ambiguous-quote",
                        format!("`{quote}` occurs {n} times on {page}; pick one with --occurrence 1..{n}"),
                    ))
                }
                (_, None) => hits[0].clone(),
                (n, Some(k)) => hits
                    .get(k.wrapping_sub(1))
                    .cloned()
                    .ok_or_else(|| CliError::domain("quote-not-found", format!("occurrence {k} requested, `{quote}` occurs {n} times")))?,
            };
            let created = svc.create(
                Some(user),
                CreateRequest {
                    kind: *kind,
                    body: body.clone(),
                    anchors: vec![selector],
                    tags: tags.iter().cloned().collect(),
                    visibility: Some(visibility.clone()),
                },
            )?;
            json_line(out, &created)?;
            Ok(EXIT_OK)
        }
        Command::Reanchor { url, all, json } => {
            let urls = if *all {
                store.document_urls()
            } else {
                vec![page_url(url.as_deref().unwrap_or_default())?]
            };
            let mut summaries = Vec::new();
            for u in &urls {
                summaries.push(svc.reanchor(Some(user), u.as_str())?);
            }
            let broken: usize = summaries.iter().map(|s| s.broken).sum();
            if *json {
                json_line(out, &summaries)?;
            } else {
                writeln!(out, "{:<48} {:>8} {:>9} {:>6}", "url", "attached", "relocated", "broken").map_err(w)?;
                for s in &summaries {
                    writeln!(out, "{:<48} {:>8} {:>9} {:>6}", s.url.as_str(), s.attached, s.relocated, s.broken)
                        .map_err(w)?;
                }
                for s in &summaries {
                    for r in s.anchors.iter().filter(|r| r.resolution.is_broken()) {
                        writeln!(out, "broken: {} anchor {} on {}", r.annotation_id, r.anchor_index + 1, s.url)
                            .map_err(w)?;
                    }
                }
            }
            Ok(if broken > 0 { EXIT_DOMAIN } else { EXIT_OK })
        }
        Command::Batch {
            filter,
            add_tag,
            delete,
            dry_run,
        } => {
            let criteria: FilterCriteria = filter.parse().map_err(|e: adamant_core::search::SearchError| CliError::Usage(e.to_string()))?;
            let matched = adamant_core::search::filter(store.query_all(Some(user)), &criteria);
            let mut own = Vec::new();
            for a in matched {
                if a.author == user {
                    own.push(a);
                } else {
                    writeln!(err, "warning: skipping {} (owned by {})", a.id, a.author).map_err(w)?;
                }
            }
            let verb = if *delete { "deleted" } else { "tagged" };
            for a in &own {
                if *dry_run {
                    writeln!(out, "would be {verb}: {}", a.id).map_err(w)?;
                } else if *delete {
                    svc.delete(Some(user), &a.id)?;
                } else if let Some(tag) = add_tag {
                    let edit = AnnotationEdit {
                        add_tags: vec![tag.clone()],
                        ..Default::default()
                    };
                    svc.edit(
                        Some(user),
                        &a.id,
                        PatchRequest {
                            expected_revision: a.revision,
                            edit,
                        },
                    )?;
                }
            }
            if *dry_run {
                writeln!(out, "dry run: {} annotation(s) would be {verb}", own.len()).map_err(w)?;
            } else {
                writeln!(out, "{} annotation(s) {verb}", own.len()).map_err(w)?;
            }
            Ok(EXIT_OK)
        }
        Command::Export { out: path } => {
            let records = store.all_records();
            let text = interchange::export(&records);
            std::fs::write(path, &text).map_err(|e| io_error(path.display(), e))?;
            let n = records.iter().filter(|a| !a.deleted).count();
            writeln!(out, "exported {n} annotation(s) to {}", path.display()).map_err(w)?;
            Ok(EXIT_OK)
        }
        Command::Import { file } => {
            let text = std::fs::read_to_string(file).map_err(|e| io_error(file.display(), e))?;
            let records = interchange::parse(&text).map_err(|e| CliError::domain("malformed-interchange", e.0))?;
            for r in &records {
                store.ensure_user(&r.author)?;
                for reply in &r.replies {
                    store.ensure_user(&reply.author)?;
                }
            }
            for r in records.iter().cloned() {
                store.import_annotation(r)?;
            }
            writeln!(out, "imported {} annotation(s)", records.len()).map_err(w)?;
            Ok(EXIT_OK)
        }
        Command::Stats { url, json } => {
            let scope = match url {
                Some(u) => SearchScope::Page(page_url(u)?),
                None => SearchScope::All,
            };
            let records = store.query_scope(&scope, Some(user));
            let s = stats::compute(&records, &store.reader_pins());
            if *json {
                json_line(out, &s)?;
            } else {
                writeln!(out, "{s}").map_err(w)?;
            }
            Ok(EXIT_OK)
        }
        Command::List {
            url,
            scope,
            filter,
            q,
            sort,
            json,
        } => {
            let params = ListParams {
                url: url.clone(),
                scope: scope.clone(),
                q: q.clone(),
                sort: sort.clone(),
                ..Default::default()
            };
            let mut listing = params.parse()?;
            if let Some(f) = filter {
                listing.criteria = f.parse().map_err(|e: adamant_core::search::SearchError| CliError::Usage(e.to_string()))?;
            }
            let found = svc.list(Some(user), &listing)?;
            print_list(out, &found, *json)?;
            Ok(EXIT_OK)
        }
        Command::Search { text, url, scope, json } => {
            let params = ListParams {
                url: url.clone(),
                scope: scope.clone(),
                q: Some(text.clone()),
                ..Default::default()
            };
            let found = svc.list(Some(user), &params.parse()?)?;
            print_list(out, &found, *json)?;
            Ok(EXIT_OK)
        }
    }
}

fn print_list(out: &mut dyn Write, found: &[Annotation], json: bool) -> Result<()> {
    if json {
        return json_line(out, &found);
    }
    for a in found {
        let quote = a.anchors.first().map(|s| s.quote.as_str()).unwrap_or("");
        let body: String = a.body.lines().next().unwrap_or("").chars().take(60).collect();
        writeln!(out, "{}  {:<9} {:<12} {:?}  {}", a.id, a.kind.as_str(), a.state.status(), quote, body)
            .map_err(|e| io_error("stdout", e))?;
    }
    Ok(())
}

fn import_docs(svc: &Service, user: &str, paths: &[PathBuf], out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let w = |e| io_error("stdout", e);
    let mut files = Vec::new();
    for path in paths {
        files.extend(corpus::plan(path).map_err(|e| match e {
            corpus::CorpusError::Io { .. } => CliError::Io(e.to_string()),
            corpus::CorpusError::Manifest { .. } => CliError::domain("bad-manifest", e.to_string()),
        })?);
    }
    let mut imported = 0;
    for f in &files {
        let html = match std::fs::read_to_string(&f.path) {
            Ok(h) => h,
            Err(e) => {
                writeln!(err, "warning: skipping {}: {e}", f.name).map_err(w)?;
                continue;
            }
        };
        match svc.register_document(Some(user), DocumentRequest { url: f.url.clone(), html }) {
            Ok(s) => {
                imported += 1;
                writeln!(
                    out,
                    "{}\t{}\tversion {}\t{} elements\t{} chars",
                    f.name, s.url, s.version, s.elements, s.text_length
                )
                .map_err(w)?;
            }
            Err(ServiceError::Store(e @ (StoreError::Anchor(_) | StoreError::Annotation(_)))) => {
                writeln!(err, "warning: skipping {}: {e}", f.name).map_err(w)?;
            }
            Err(e) => return Err(e.into()),
        }
    }
    writeln!(out, "imported {imported} of {} file(s)", files.len()).map_err(w)?;
    Ok(if !files.is_empty() && imported == 0 { EXIT_DOMAIN } else { EXIT_OK })
}

fn serve(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let config = load_config(cli)?;
    config.require_store_dir()?;
    let store = Arc::new(Store::open(&config.store_dir)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| io_error("runtime", e))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(config.listen_addr)
            .await
            .map_err(|e| io_error(config.listen_addr, e))?;
        let addr = listener.local_addr().map_err(|e| io_error("listener", e))?;
        writeln!(out, "listening on http://{addr}").map_err(|e| io_error("stdout", e))?;
        out.flush().map_err(|e| io_error("stdout", e))?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        adamant_server::serve(listener, Service::new(store), shutdown)
            .await
            .map_err(|e| io_error("server", e))?;
        Ok(EXIT_OK)
    })
}
