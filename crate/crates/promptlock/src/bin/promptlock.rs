//! Operator command line for both protection protocols.
//!
//! Exit codes: 0 success, 2 I/O, 3 validation, 4 environment, 5 protocol
//! or API error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use promptlock::bridge::{
    bridge_router, BridgeHttpClient, BridgeService, Placement, PlacementConfig,
};
use promptlock::config::{Config, ENV_ISSUER_SECRET_FILE, ENV_STORE_DIR};
use promptlock::escrow::{
    escrow_router, AddListingRequest, EscrowHttpClient, EscrowService,
};
use promptlock::mockllm::{self, HttpProvider, Provider};
use promptlock::sealer::{self, ContentKey, TaskPrompt};
use promptlock::store::{Durability, Store};
use promptlock::{config, fingerprint};

#[derive(Parser)]
#[command(name = "promptlock", version, about = "Sealed-prompt protection toolkit")]
struct Cli {
    /// Path to a JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Seal a task file into an armored envelope with a fresh content key.
    Seal(SealArgs),
    /// Recover the task body from an envelope, byte-exact.
    Unseal(UnsealArgs),
    /// Issue a PLKEY1 user-key token for a buyer.
    IssueKey(IssueKeyArgs),
    /// Run the bridge or escrow service.
    Serve(ServeArgs),
    /// Manage escrow listings.
    Listings(ListingsArgs),
    /// Purchase a listing, receiving an envelope and a bearer token.
    Buy(BuyArgs),
    /// Redeem a bearer token for an artifact (buying first if needed).
    Redeem(RedeemArgs),
    /// Run the extraction-attack corpus against a bridge session.
    Attack(AttackArgs),
    /// Report per-message latency overhead for a bridge placement.
    SimulatePlacement(SimulatePlacementArgs),
}

#[derive(Args)]
struct SealArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    preamble: PathBuf,
    #[arg(long)]
    key_out: PathBuf,
    #[arg(long)]
    envelope_out: PathBuf,
    /// Escrow base URL to embed, marking this a marketplace envelope.
    #[arg(long)]
    escrow_locator: Option<String>,
}

#[derive(Args)]
struct UnsealArgs {
    #[arg(long)]
    envelope: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IssueKeyArgs {
    #[arg(long)]
    user_id: String,
    #[arg(long)]
    key: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[command(subcommand)]
    component: ServeComponent,
}

#[derive(Subcommand)]
enum ServeComponent {
    Bridge {
        #[arg(long)]
        listen: Option<String>,
    },
    Escrow {
        #[arg(long)]
        listen: Option<String>,
        /// Public base URL embedded into sealed envelopes.
        #[arg(long)]
        locator: Option<String>,
    },
}

#[derive(Args)]
struct ListingsArgs {
    #[command(subcommand)]
    action: ListingsAction,
}

#[derive(Subcommand)]
enum ListingsAction {
    Add {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        description: String,
        #[arg(long)]
        preamble: PathBuf,
        #[arg(long)]
        escrow_url: Option<String>,
    },
    Ls {
        #[arg(long)]
        escrow_url: Option<String>,
    },
}

#[derive(Args)]
struct BuyArgs {
    #[arg(long)]
    prompt_id: String,
    #[arg(long)]
    escrow_url: Option<String>,
    /// Write the purchased envelope here instead of stdout.
    #[arg(long)]
    envelope_out: Option<PathBuf>,
}

#[derive(Args)]
struct RedeemArgs {
    /// Purchase this listing first, then redeem the fresh token.
    #[arg(long, conflicts_with = "token")]
    prompt_id: Option<String>,
    /// Redeem an existing bearer token.
    #[arg(long)]
    token: Option<String>,
    #[arg(long)]
    request: String,
    #[arg(long)]
    escrow_url: Option<String>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    session_id: String,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Plaintext task file; leaks are counted against its 5-word windows.
    #[arg(long)]
    task_file: PathBuf,
    #[arg(long)]
    bridge_url: Option<String>,
}

#[derive(Args)]
struct SimulatePlacementArgs {
    #[arg(long, value_parser = parse_placement)]
    placement: Placement,
    #[arg(long, default_value_t = 0)]
    delay_user_owner: i64,
    #[arg(long, default_value_t = 0)]
    delay_owner_provider: i64,
    #[arg(long, default_value_t = 0)]
    delay_user_provider: i64,
    #[arg(long, default_value_t = 1)]
    messages: u64,
}

fn parse_placement(s: &str) -> Result<Placement, String> {
    match s {
        "user_side" | "user-side" => Ok(Placement::UserSide),
        "owner_side" | "owner-side" => Ok(Placement::OwnerSide),
        "provider_side" | "provider-side" => Ok(Placement::ProviderSide),
        _ => Err("expected user_side, owner_side, or provider_side".into()),
    }
}

enum CliError {
    Io(String),
    Validation(String),
    Environment(String),
    Api(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Environment(_) => 4,
            CliError::Api(_) => 5,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io",
            CliError::Validation(_) => "validation",
            CliError::Environment(_) => "environment",
            CliError::Api(_) => "api",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Validation(m) | CliError::Environment(m) | CliError::Api(m) => m,
        }
    }
}

fn io_err(context: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{context}: {e}"))
}

struct Out {
    json: bool,
}

impl Out {
    fn emit(&self, human: String, machine: serde_json::Value) {
        if self.json {
            println!("{machine}");
        } else {
            println!("{human}");
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = Out { json: cli.json };
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&out, e),
    };
    match run(cli.command, &config, &out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&out, e),
    }
}

fn fail(out: &Out, err: CliError) -> ExitCode {
    if out.json {
        eprintln!("{}", json!({ "error": err.kind(), "message": err.message() }));
    } else {
        eprintln!("error ({}): {}", err.kind(), err.message());
    }
    ExitCode::from(err.exit_code())
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let base = match &cli.config {
        Some(path) => Config::load(path).map_err(io_err("reading config"))?,
        None => Config::default(),
    };
    Ok(base.apply_env())
}

fn read_file(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(io_err(&format!("reading {}", path.display())))
}

fn write_file(path: &PathBuf, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(io_err(&format!("writing {}", path.display())))
}

fn read_key(path: &PathBuf) -> Result<ContentKey, CliError> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("bad key file: {e}")))
}

fn issuer_secret(config: &Config) -> Result<Vec<u8>, CliError> {
    let path = config.issuer_secret_path.clone().ok_or_else(|| {
        CliError::Environment(format!(
            "issuer secret file not configured (set {ENV_ISSUER_SECRET_FILE} or issuer_secret_path)"
        ))
    })?;
    std::fs::read(&path).map_err(io_err(&format!("reading issuer secret {path}")))
}

fn escrow_client(flag: &Option<String>, config: &Config) -> Result<EscrowHttpClient, CliError> {
    let url = flag
        .clone()
        .or_else(|| config.escrow_url.clone())
        .ok_or_else(|| CliError::Environment("escrow URL not configured".into()))?;
    Ok(EscrowHttpClient::new(url))
}

fn bridge_client(flag: &Option<String>, config: &Config) -> Result<BridgeHttpClient, CliError> {
    let url = flag
        .clone()
        .or_else(|| config.bridge_url.clone())
        .ok_or_else(|| CliError::Environment("bridge URL not configured".into()))?;
    Ok(BridgeHttpClient::new(url))
}

fn api_err(e: impl std::fmt::Display) -> CliError {
    CliError::Api(e.to_string())
}

fn run(command: Command, config: &Config, out: &Out) -> Result<(), CliError> {
    match command {
        Command::Seal(args) => cmd_seal(args, out),
        Command::Unseal(args) => cmd_unseal(args, out),
        Command::IssueKey(args) => cmd_issue_key(args, config, out),
        Command::Serve(args) => cmd_serve(args, config),
        Command::Listings(args) => cmd_listings(args, config, out),
        Command::Buy(args) => cmd_buy(args, config, out),
        Command::Redeem(args) => cmd_redeem(args, config, out),
        Command::Attack(args) => cmd_attack(args, config, out),
        Command::SimulatePlacement(args) => cmd_simulate_placement(args, out),
    }
}

fn cmd_seal(args: SealArgs, out: &Out) -> Result<(), CliError> {
    let body = read_file(&args.task)?;
    let preamble = read_file(&args.preamble)?;
    let key = ContentKey::generate();
    let envelope = sealer::seal(
        &TaskPrompt::new(body),
        &key,
        preamble.trim_end_matches('\n'),
        args.escrow_locator.as_deref(),
    )
    .map_err(|e| CliError::Validation(e.to_string()))?;
    write_file(&args.envelope_out, &envelope.to_armored())?;
    write_file(
        &args.key_out,
        &serde_json::to_string(&key).expect("key serializes"),
    )?;
    let prompt_id = envelope.header.prompt_id.clone();
    out.emit(
        format!("sealed prompt {prompt_id}"),
        json!({ "prompt_id": prompt_id }),
    );
    Ok(())
}

fn cmd_unseal(args: UnsealArgs, out: &Out) -> Result<(), CliError> {
    let armored = read_file(&args.envelope)?;
    let key = read_key(&args.key)?;
    let envelope =
        sealer::parse_sealed(&armored).map_err(|e| CliError::Validation(e.to_string()))?;
    let task = sealer::unseal(&envelope, &key).map_err(|e| CliError::Validation(e.to_string()))?;
    write_file(&args.out, task.body())?;
    out.emit(
        format!("unsealed prompt {}", envelope.header.prompt_id),
        json!({ "prompt_id": envelope.header.prompt_id }),
    );
    Ok(())
}

fn cmd_issue_key(args: IssueKeyArgs, config: &Config, out: &Out) -> Result<(), CliError> {
    let key = read_key(&args.key)?;
    let secret = issuer_secret(config)?;
    let token = sealer::encode_user_key(&args.user_id, &key, &secret)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    out.emit(token.clone(), json!({ "user_key": token }));
    Ok(())
}

fn cmd_listings(args: ListingsArgs, config: &Config, out: &Out) -> Result<(), CliError> {
    match args.action {
        ListingsAction::Add {
            task,
            description,
            preamble,
            escrow_url,
        } => {
            let client = escrow_client(&escrow_url, config)?;
            let listing = client
                .add_listing(&AddListingRequest {
                    description,
                    preamble: read_file(&preamble)?.trim_end_matches('\n').to_string(),
                    task_body: read_file(&task)?,
                })
                .map_err(api_err)?;
            out.emit(
                format!("listed prompt {} (key v{})", listing.prompt_id, listing.key_version),
                serde_json::to_value(&listing).unwrap(),
            );
        }
        ListingsAction::Ls { escrow_url } => {
            let client = escrow_client(&escrow_url, config)?;
            let listings = client.listings().map_err(api_err)?;
            if out.json {
                println!("{}", serde_json::to_string(&listings).unwrap());
            } else {
                for l in &listings {
                    println!("{}\tv{}\t{}", l.prompt_id, l.key_version, l.description);
                }
            }
        }
    }
    Ok(())
}

fn cmd_buy(args: BuyArgs, config: &Config, out: &Out) -> Result<(), CliError> {
    let client = escrow_client(&args.escrow_url, config)?;
    let purchase = client.purchase(&args.prompt_id).map_err(api_err)?;
    if let Some(path) = &args.envelope_out {
        write_file(path, &purchase.envelope)?;
    }
    let machine = json!({
        "envelope": args.envelope_out.is_none().then_some(&purchase.envelope),
        "token_id": purchase.token.token_id,
        "bound_key_version": purchase.token.bound_key_version,
    });
    if out.json {
        println!("{machine}");
    } else {
        println!("token {}", purchase.token.token_id);
        if args.envelope_out.is_none() {
            print!("{}", purchase.envelope);
        }
    }
    Ok(())
}

fn cmd_redeem(args: RedeemArgs, config: &Config, out: &Out) -> Result<(), CliError> {
    let client = escrow_client(&args.escrow_url, config)?;
    let token_id = match (&args.prompt_id, &args.token) {
        (Some(prompt_id), None) => client.purchase(prompt_id).map_err(api_err)?.token.token_id,
        (None, Some(token)) => token.clone(),
        _ => {
            return Err(CliError::Validation(
                "provide exactly one of --prompt-id or --token".into(),
            ))
        }
    };
    let artifact = client.redeem_full(&token_id, &args.request).map_err(api_err)?;
    let state = client
        .token_status(&token_id)
        .map(|t| format!("{:?}", t.state).to_lowercase())
        .unwrap_or_else(|_| "unknown".into());
    out.emit(
        format!("{artifact}\ntoken {token_id} is now {state}"),
        json!({ "artifact": artifact, "token_id": token_id, "token_state": state }),
    );
    Ok(())
}

fn cmd_attack(args: AttackArgs, config: &Config, out: &Out) -> Result<(), CliError> {
    let client = bridge_client(&args.bridge_url, config)?;
    let corpus = match &args.corpus {
        Some(path) => mockllm::parse_corpus(&read_file(path)?).map_err(CliError::Validation)?,
        None => mockllm::builtin_corpus(),
    };
    let task_body = read_file(&args.task_file)?;
    let fp = fingerprint::Fingerprint::of(&task_body);
    let mut leaks = 0usize;
    let mut redactions = 0usize;
    let mut leaking_queries = Vec::new();
    for q in &corpus {
        let reply = client.chat(&args.session_id, &q.query_text).map_err(api_err)?;
        if reply.redacted {
            redactions += 1;
        }
        if fp.matches(&reply.response) {
            leaks += 1;
            leaking_queries.push(q.query_text.clone());
        }
    }
    out.emit(
        format!(
            "attempts {}  leaks {leaks}  redactions {redactions}",
            corpus.len()
        ),
        json!({
            "attempts": corpus.len(),
            "leaks": leaks,
            "redactions": redactions,
            "leaking_queries": leaking_queries,
        }),
    );
    Ok(())
}

fn cmd_simulate_placement(args: SimulatePlacementArgs, out: &Out) -> Result<(), CliError> {
    let config = PlacementConfig {
        delay_owner_provider: args.delay_owner_provider,
        delay_user_owner: args.delay_user_owner,
        delay_user_provider: args.delay_user_provider,
        placement: args.placement,
    };
    let overhead = promptlock::bridge::simulate_placement(&config, args.messages)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    out.emit(
        format!("per-message overhead: {overhead} ms"),
        json!({ "per_message_overhead_ms": overhead }),
    );
    Ok(())
}

fn cmd_serve(args: ServeArgs, config: &Config) -> Result<(), CliError> {
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::Environment(format!("starting runtime: {e}")))?;
    runtime.block_on(async {
        match args.component {
            ServeComponent::Bridge { listen } => serve_bridge(listen, config).await,
            ServeComponent::Escrow { listen, locator } => {
                serve_escrow(listen, locator, config).await
            }
        }
    })
}

fn provider_from_config(config: &Config) -> Arc<dyn Provider> {
    match &config.provider_endpoint {
        Some(endpoint) => Arc::new(HttpProvider::new(endpoint.clone())),
        None => Arc::new(mockllm::MockProvider),
    }
}

async fn bind(addr: &str) -> Result<tokio::net::TcpListener, CliError> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Environment(format!("binding {addr}: {e}")))
}

async fn shutdown_signal() {
    let ctrl_c = tokio::signal::ctrl_c();
    #[cfg(unix)]
    {
        let mut term =
            tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
                .expect("installing SIGTERM handler");
        tokio::select! {
            _ = ctrl_c => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = ctrl_c.await;
    }
}

async fn serve_bridge(listen: Option<String>, config: &Config) -> Result<(), CliError> {
    let service = BridgeService::new().with_provider(provider_from_config(config));
    if let Some(registry_path) = &config.issuer_registry_path {
        let secret = issuer_secret(config)?;
        let entries = config::load_registry(registry_path, &secret)
            .map_err(|e| CliError::Io(format!("loading registry: {e}")))?;
        for entry in entries {
            service.register_issuer(entry);
        }
    }
    let addr = listen
        .or_else(|| config.listen_addr.clone())
        .unwrap_or_else(|| "127.0.0.1:7100".into());
    let listener = bind(&addr).await?;
    eprintln!("bridge listening on {addr}");
    axum::serve(listener, bridge_router(Arc::new(service)))
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(|e| CliError::Environment(e.to_string()))
}

async fn serve_escrow(
    listen: Option<String>,
    locator: Option<String>,
    config: &Config,
) -> Result<(), CliError> {
    let store_dir = config.store_dir.clone().ok_or_else(|| {
        CliError::Environment(format!(
            "store directory not configured (set {ENV_STORE_DIR} or store_dir)"
        ))
    })?;
    let store = Store::open(&store_dir, Durability::Fsync)
        .map_err(|e| CliError::Io(format!("opening store {store_dir}: {e}")))?;
    let addr = listen
        .or_else(|| config.listen_addr.clone())
        .unwrap_or_else(|| "127.0.0.1:7200".into());
    let locator = locator.unwrap_or_else(|| format!("http://{addr}"));
    let mut service =
        EscrowService::new(Arc::new(store), locator).with_provider(provider_from_config(config));
    if let Some(days) = config.token_ttl_days {
        service = service.with_token_ttl(chrono::Duration::days(days));
    }
    let listener = bind(&addr).await?;
    eprintln!("escrow listening on {addr}");
    axum::serve(listener, escrow_router(Arc::new(service)))
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(|e| CliError::Environment(e.to_string()))
}
