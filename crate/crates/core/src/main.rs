//! `pacsim`: operator surface for the simulated attestation toolkit.
//!
//! Exit codes: 0 success / verdict UNCHANGED, 1 runtime error / verdict
//! ERROR, 2 verdict TAMPERED, 64 usage error, 74 I/O error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::RngCore;

use pacsim_core::certgen::{
    build_tbs, decode_der, sign_pac, IssuerPolicy, PacMode, PacPayload,
    PlatformAttributeCertificate,
};
use pacsim_core::complist::{diff, parse_log};
use pacsim_core::crypto::{SignatureAlgorithm, SigningKey};
use pacsim_core::der;
use pacsim_core::device::{
    new_device, spec_from_state, swap_identity, tamper_elf, tamper_firmware, tamper_gpio,
    DeviceSpec, MacAddr,
};
use pacsim_core::measure::{measure, parse_rendered_log, render_log};
use pacsim_core::verify::{
    run_verification, Approach, NoncePolicy, TcpProverChannel, Verdict, VerificationReport,
    VerifyError,
};
use pacsim_core::wire::{device_id_for_ek, serve_prover, CertStore, Message, StoreError};

const EXIT_OK: i32 = 0;
const EXIT_ERROR: i32 = 1;
const EXIT_TAMPERED: i32 = 2;
const EXIT_USAGE: i32 = 64;
const EXIT_IO: i32 = 74;

#[derive(Parser)]
#[command(
    name = "pacsim",
    version,
    about = "Platform attribute certificate attestation, simulated at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StoreArgs {
    /// Store root directory; defaults to $PACSIM_STORE.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Device id inside the store; optional when the store holds one device.
    #[arg(long)]
    device: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Boot a device from its config, measure it, and issue the ground-truth
    /// certificate into the store.
    GenGroundTruth {
        /// Device config file (TOML).
        #[arg(long)]
        device: PathBuf,
        /// Store root to provision into.
        #[arg(long)]
        out: PathBuf,
        /// Reuse an existing signing key (DER) instead of generating one.
        #[arg(long)]
        key: Option<PathBuf>,
        /// Signing algorithm for a newly generated key.
        #[arg(long, default_value = "ecdsa-p256", value_parser = ["ecdsa-p256", "rsa-2048"])]
        algorithm: String,
        /// Issuer name embedded in certificates.
        #[arg(long, default_value = "pacsim verifier")]
        issuer_name: String,
    },
    /// Run the prover daemon for a device config.
    Serve {
        #[arg(long)]
        device: PathBuf,
        /// Listen address, e.g. 127.0.0.1:7500.
        #[arg(long)]
        endpoint: String,
    },
    /// Run one verification session against a prover and print the report.
    Attest {
        #[command(flatten)]
        store: StoreArgs,
        /// Prover address, e.g. 127.0.0.1:7500.
        #[arg(long)]
        endpoint: String,
        /// sig = compare certificate signatures, comp = compare components.
        #[arg(long, value_parser = ["sig", "comp"])]
        approach: String,
        /// Send a fresh nonce and require an EK quote over it.
        #[arg(long)]
        nonce: bool,
        /// Print the report as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Apply tamper operations to a device config file (test harness).
    Tamper {
        #[arg(long)]
        device: PathBuf,
        /// Set a GPIO level: pin=level. Repeatable.
        #[arg(long = "gpio", value_name = "PIN=LEVEL")]
        gpio: Vec<String>,
        /// Patch firmware bytes: offset=hexbytes.
        #[arg(long, value_name = "OFFSET=HEX")]
        firmware: Option<String>,
        /// Append a section to the ELF image; file contains hex.
        #[arg(long, value_name = "HEXFILE")]
        elf_append: Option<PathBuf>,
        /// Swap identity: eth_mac,wifi_mac,bt_mac,chip_id.
        #[arg(long, value_name = "ETH,WIFI,BT,CHIP")]
        identity: Option<String>,
        /// Replace the endorsement key seed (models a different secure
        /// element, e.g. a counterfeit clone).
        #[arg(long, value_name = "HEX32")]
        ek_seed: Option<String>,
    },
    /// ASN.1 pretty-print of a certificate file.
    Decode { file: PathBuf },
    /// Issue a delta certificate for the latest measured changes.
    Delta {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        endpoint: String,
    },
    /// List the stored certificate chain for a device.
    History {
        #[command(flatten)]
        store: StoreArgs,
    },
}

fn main() {
    // die quietly when stdout is a closed pipe (e.g. `pacsim decode | head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pacsim: {}", e.message);
            e.exit_code
        }
    };
    std::process::exit(code);
}

struct CliError {
    message: String,
    exit_code: i32,
}

impl CliError {
    fn usage(message: impl Into<String>) -> CliError {
        CliError {
            message: message.into(),
            exit_code: EXIT_USAGE,
        }
    }

    fn io(message: impl std::fmt::Display) -> CliError {
        CliError {
            message: message.to_string(),
            exit_code: EXIT_IO,
        }
    }

    fn other(message: impl std::fmt::Display) -> CliError {
        CliError {
            message: message.to_string(),
            exit_code: EXIT_ERROR,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> CliError {
        match e {
            StoreError::Io { .. } | StoreError::AppendOnly(_) => CliError::io(e),
            other => CliError::other(other),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> CliError {
        match e {
            VerifyError::Store(s) => s.into(),
            other => CliError::other(other),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn load_spec(path: &Path) -> Result<DeviceSpec, CliError> {
    DeviceSpec::load(path).map_err(CliError::other)
}

fn open_store(args: &StoreArgs) -> Result<(CertStore, String), CliError> {
    let store = match &args.store {
        Some(root) => CertStore::open(root),
        None => CertStore::from_env()
            .map_err(|_| CliError::usage("no store given: pass --store or set PACSIM_STORE"))?,
    };
    let device_id = match &args.device {
        Some(id) => id.clone(),
        None => store.sole_device()?,
    };
    Ok((store, device_id))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::GenGroundTruth {
            device,
            out,
            key,
            algorithm,
            issuer_name,
        } => gen_ground_truth(&device, &out, key.as_deref(), &algorithm, &issuer_name),
        Command::Serve { device, endpoint } => {
            let spec = load_spec(&device)?;
            let state = new_device(&spec).map_err(CliError::other)?;
            eprintln!("pacsim prover listening on {endpoint}");
            serve_prover(&state, endpoint.as_str()).map_err(CliError::io)?;
            Ok(EXIT_OK)
        }
        Command::Attest {
            store,
            endpoint,
            approach,
            nonce,
            json,
        } => attest(&store, &endpoint, &approach, nonce, json),
        Command::Tamper {
            device,
            gpio,
            firmware,
            elf_append,
            identity,
            ek_seed,
        } => tamper(
            &device,
            &gpio,
            firmware.as_deref(),
            elf_append.as_deref(),
            identity.as_deref(),
            ek_seed.as_deref(),
        ),
        Command::Decode { file } => decode(&file),
        Command::Delta { store, endpoint } => delta(&store, &endpoint),
        Command::History { store } => history(&store),
    }
}

fn gen_ground_truth(
    device_cfg: &Path,
    out: &Path,
    key_path: Option<&Path>,
    algorithm: &str,
    issuer_name: &str,
) -> Result<i32, CliError> {
    let spec = load_spec(device_cfg)?;
    let state = new_device(&spec).map_err(CliError::other)?;
    let log = measure(&state, None);
    let cl = parse_log(&render_log(&log), &state.platform_meta).map_err(CliError::other)?;

    let signing_key = match key_path {
        Some(path) => SigningKey::from_private_der(&read_file(path)?).map_err(CliError::other)?,
        None => {
            let alg = SignatureAlgorithm::from_name(algorithm)
                .ok_or_else(|| CliError::usage(format!("unknown algorithm {algorithm}")))?;
            let mut seed = [0u8; 32];
            rand::thread_rng().fill_bytes(&mut seed);
            SigningKey::generate(alg, &seed).map_err(CliError::other)?
        }
    };

    let policy = IssuerPolicy {
        issuer_name: issuer_name.to_string(),
        ..IssuerPolicy::default()
    };
    let tbs = build_tbs(
        &cl,
        &log.ek_reference,
        &policy,
        PacMode::Base,
        signing_key.algorithm(),
    )
    .map_err(CliError::other)?;
    let pac = sign_pac(&tbs, &signing_key).map_err(CliError::other)?;

    let device_id = device_id_for_ek(&log.ek_reference.ek_public);
    let store = CertStore::open(out);
    let path = store.init_device(&device_id, &signing_key, &pac)?;
    let cl_path =
        store.save_componentlist(&device_id, &pacsim_core::complist::to_canonical_json(&cl))?;
    println!("device id     : {device_id}");
    println!("serial        : {}", pac.serial_hex());
    println!("algorithm     : {}", signing_key.algorithm().name());
    println!("ground truth  : {}", path.display());
    println!("componentlist : {}", cl_path.display());
    Ok(EXIT_OK)
}

fn attest(
    store_args: &StoreArgs,
    endpoint: &str,
    approach: &str,
    nonce: bool,
    json: bool,
) -> Result<i32, CliError> {
    let (store, device_id) = open_store(store_args)?;
    let approach = match approach {
        "sig" => Approach::Signature,
        "comp" => Approach::Component,
        other => return Err(CliError::usage(format!("unknown approach {other}"))),
    };
    let issuer_key = store.signing_key(&device_id)?;
    let mut channel = TcpProverChannel::new(endpoint);
    let nonce_policy = if nonce {
        NoncePolicy::Require
    } else {
        NoncePolicy::Off
    };

    let report = run_verification(
        &mut channel,
        &store,
        &device_id,
        approach,
        &issuer_key,
        nonce_policy,
    )?;
    print_report(&report, json);
    Ok(exit_code_for(&report))
}

fn print_report(report: &VerificationReport, json: bool) {
    if json {
        println!("{}", String::from_utf8_lossy(&report.to_json()));
    } else {
        print!("{}", report.to_text());
    }
}

/// Exit code as a total function of the verdict.
fn exit_code_for(report: &VerificationReport) -> i32 {
    match report.overall {
        Verdict::Unchanged => EXIT_OK,
        Verdict::Tampered => EXIT_TAMPERED,
        Verdict::Error => EXIT_ERROR,
    }
}

fn tamper(
    device_cfg: &Path,
    gpio: &[String],
    firmware: Option<&str>,
    elf_append: Option<&Path>,
    identity: Option<&str>,
    ek_seed: Option<&str>,
) -> Result<i32, CliError> {
    let spec = load_spec(device_cfg)?;
    let mut state = new_device(&spec).map_err(CliError::other)?;
    let mut applied = Vec::new();

    for assignment in gpio {
        let (pin, level) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--gpio wants PIN=LEVEL, got {assignment}")))?;
        let pin: u16 = pin
            .parse()
            .map_err(|_| CliError::usage(format!("bad pin number {pin}")))?;
        let level: u8 = level
            .parse()
            .map_err(|_| CliError::usage(format!("bad level {level}")))?;
        state = tamper_gpio(&state, pin, level).map_err(CliError::other)?;
        applied.push(format!("gpio {pin}={level}"));
    }

    if let Some(patch) = firmware {
        let (offset, hex_bytes) = patch
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--firmware wants OFFSET=HEX, got {patch}")))?;
        let offset: usize = offset
            .parse()
            .map_err(|_| CliError::usage(format!("bad offset {offset}")))?;
        let bytes = hex::decode(hex_bytes)
            .map_err(|e| CliError::usage(format!("bad firmware patch hex: {e}")))?;
        state = tamper_firmware(&state, offset, &bytes).map_err(CliError::other)?;
        applied.push(format!("firmware {offset}+{}B", bytes.len()));
    }

    if let Some(path) = elf_append {
        let text = String::from_utf8(read_file(path)?)
            .map_err(|_| CliError::usage("ELF section file must contain hex text"))?;
        let section = hex::decode(text.trim())
            .map_err(|e| CliError::usage(format!("bad ELF section hex: {e}")))?;
        state = tamper_elf(&state, &section).map_err(CliError::other)?;
        applied.push(format!("elf-append {}B", section.len()));
    }

    if let Some(identity) = identity {
        let parts: Vec<&str> = identity.split(',').collect();
        let [eth, wifi, bt, chip] = parts.as_slice() else {
            return Err(CliError::usage("--identity wants ETH,WIFI,BT,CHIP_ID"));
        };
        let eth = MacAddr::parse(eth).map_err(CliError::other)?;
        let wifi = MacAddr::parse(wifi).map_err(CliError::other)?;
        let bt = MacAddr::parse(bt).map_err(CliError::other)?;
        let chip: u64 = chip
            .parse()
            .map_err(|_| CliError::usage(format!("bad chip id {chip}")))?;
        state = swap_identity(&state, eth, wifi, bt, chip).map_err(CliError::other)?;
        applied.push("identity swap".into());
    }

    let mut new_spec = spec_from_state(&spec, &state);

    if let Some(seed) = ek_seed {
        let bytes = hex::decode(seed).map_err(|e| CliError::usage(format!("bad seed hex: {e}")))?;
        if bytes.len() != 32 {
            return Err(CliError::usage("--ek-seed wants 32 hex-encoded bytes"));
        }
        new_spec.ek_seed = seed.to_string();
        new_spec.ek_binding_sig_hex = None; // a new element provisions fresh
        applied.push("ek seed replaced".into());
    }

    if applied.is_empty() {
        return Err(CliError::usage("no tamper operation given"));
    }
    new_spec.save(device_cfg).map_err(CliError::io)?;
    println!("applied: {}", applied.join(", "));
    println!("rewrote {}", device_cfg.display());
    Ok(EXIT_OK)
}

fn decode(file: &Path) -> Result<i32, CliError> {
    let bytes = read_file(file)?;
    let dump = der::dump(&bytes).map_err(CliError::other)?;
    print!("{dump}");
    match decode_der(&bytes) {
        Ok(pac) => {
            println!();
            print_pac_summary(&pac);
        }
        Err(e) => println!("\n(not a platform attribute certificate: {e})"),
    }
    Ok(EXIT_OK)
}

fn print_pac_summary(pac: &PlatformAttributeCertificate) {
    println!("issuer        : {}", pac.tbs.issuer);
    println!("serial        : {}", pac.serial_hex());
    println!(
        "validity      : {} .. {} (epoch seconds)",
        pac.tbs.not_before, pac.tbs.not_after
    );
    println!("algorithm     : {}", pac.tbs.signature_algorithm.name());
    println!(
        "holder EK     : sha256:{}",
        hex::encode(pac.tbs.holder.ek_public_digest)
    );
    let p = &pac.tbs.platform;
    println!(
        "platform      : {} {} v{} serial {}",
        p.manufacturer, p.model, p.version, p.serial
    );
    match &pac.tbs.payload {
        PacPayload::Base(components) => {
            println!("components    : {}", components.len());
            for c in components {
                let serial = if c.serial.len() > 40 {
                    format!("{}...", &c.serial[..40])
                } else {
                    c.serial.clone()
                };
                println!(
                    "  class={:08x} registry={} model={} serial={}",
                    c.class, c.registry, c.model, serial
                );
            }
        }
        PacPayload::Delta(changes) => {
            println!(
                "delta of      : {}",
                pac.tbs
                    .base_certificate_ref
                    .map(hex::encode)
                    .unwrap_or_else(|| "?".into())
            );
            println!("changes       : {}", changes.len());
            for ch in changes {
                println!(
                    "  {:?} class={:08x} model={} old={:?} new={:?}",
                    ch.kind, ch.identifier.class, ch.identifier.model, ch.old_serial, ch.new_serial
                );
            }
        }
    }
}

fn delta(store_args: &StoreArgs, endpoint: &str) -> Result<i32, CliError> {
    let (store, device_id) = open_store(store_args)?;
    let issuer_key = store.signing_key(&device_id)?;
    let gt = store.ground_truth(&device_id)?;
    let gt_list = gt
        .component_list()
        .ok_or_else(|| CliError::other("ground truth is not a base certificate"))?;

    // effective inventory after replaying the existing delta chain
    let chain = store.history(&device_id)?;
    let deltas: Vec<PlatformAttributeCertificate> = chain
        .iter()
        .filter(|c| matches!(c.tbs.payload, PacPayload::Delta(_)))
        .cloned()
        .collect();
    let effective = pacsim_core::certgen::apply_deltas(&gt_list, &gt.tbs.serial_number, &deltas)
        .map_err(CliError::other)?;
    let prev_serial = deltas
        .last()
        .map(|d| d.tbs.serial_number)
        .unwrap_or(gt.tbs.serial_number);

    // fresh measurement
    let reply =
        pacsim_core::wire::request_measurement(endpoint, None, std::time::Duration::from_secs(10))
            .map_err(CliError::other)?;
    let log_text = match reply {
        Message::MeasurementLog { log, .. } => log,
        Message::Error { code, detail } => {
            return Err(CliError::other(format!("prover error {code}: {detail}")))
        }
        other => return Err(CliError::other(format!("unexpected reply {other:?}"))),
    };
    let log = parse_rendered_log(&log_text).map_err(CliError::other)?;
    let fresh = parse_log(&log_text, &gt.tbs.platform).map_err(CliError::other)?;

    let changes = diff(&effective, &fresh);
    if changes.is_empty() {
        println!("no changes since the last certificate; nothing to issue");
        return Ok(EXIT_OK);
    }
    let policy = IssuerPolicy {
        issuer_name: gt.tbs.issuer.clone(),
        not_before: gt.tbs.not_before,
        validity_secs: gt.tbs.not_after - gt.tbs.not_before,
        oid_arc: gt.tbs.oid_arc.clone(),
        policy_text: gt.tbs.policy_text.clone(),
    };
    let tbs = build_tbs(
        &fresh,
        &log.ek_reference,
        &policy,
        PacMode::Delta {
            base_serial: prev_serial,
            changes,
        },
        issuer_key.algorithm(),
    )
    .map_err(CliError::other)?;
    let pac = sign_pac(&tbs, &issuer_key).map_err(CliError::other)?;
    let path = store.append_cert(&device_id, &pac)?;
    println!("delta serial  : {}", pac.serial_hex());
    println!("references    : {}", hex::encode(prev_serial));
    println!("stored        : {}", path.display());
    Ok(EXIT_OK)
}

fn history(store_args: &StoreArgs) -> Result<i32, CliError> {
    // an empty store has an empty (not erroneous) history
    if store_args.device.is_none() {
        if let Some(root) = &store_args.store {
            if CertStore::open(root).device_ids()?.is_empty() {
                println!("store is empty: 0 certificates");
                return Ok(EXIT_OK);
            }
        }
    }
    let (store, device_id) = open_store(store_args)?;
    let paths = store.history_paths(&device_id)?;
    let certs = store.history(&device_id)?;
    println!("device {device_id}: {} certificate(s)", certs.len());
    for (i, (path, cert)) in paths.iter().zip(&certs).enumerate() {
        let kind = match cert.tbs.payload {
            PacPayload::Base(_) => {
                if i == 0 {
                    "base (ground truth)"
                } else {
                    "base"
                }
            }
            PacPayload::Delta(_) => "delta",
        };
        println!(
            "  [{i:04}] {} serial={} {}",
            kind,
            cert.serial_hex(),
            path.file_name().unwrap_or_default().to_string_lossy()
        );
    }
    Ok(EXIT_OK)
}
