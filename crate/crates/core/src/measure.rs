//! Prover-side attestation functions: extract the platform attributes from a
//! device state, produce the monitor-style log, and pull the endorsement key
//! reference out of the secure element.
//!
//! Rendered log format (the wire payload body, bit-exact):
//!
//! ```text
//! CLASS=<8 lowercase hex>|LABEL=<text>|VALUE=<text>\n   (one per entry)
//! EK_PUB=<hex>\n
//! EK_BINDING=<hex>\n
//! EK_QUOTE=<hex>\n        (only when a nonce was supplied)
//! NONCE=<hex>\n           (echo, only when a nonce was supplied)
//! ```
//!
//! Entry order is fixed: processor, flash, ethernet MAC, Wi-Fi MAC,
//! Bluetooth MAC, firmware hash, bootloader hash, ELF hash, secure-boot
//! public-key hash (only when secure boot is enabled), GPIO levels.
//! Labels must not contain `|` or newlines.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::device::DeviceState;

/// TCG component class registry values for the measured attributes.
pub const CLASS_PROCESSOR: u32 = 0x0001_0008;
pub const CLASS_FLASH: u32 = 0x0006_000a;
pub const CLASS_ETHERNET: u32 = 0x0009_0000;
pub const CLASS_WIFI: u32 = 0x0009_0003;
pub const CLASS_BLUETOOTH: u32 = 0x0009_0004;
pub const CLASS_FIRMWARE: u32 = 0x0013_0003;
pub const CLASS_BOOTLOADER: u32 = 0x0013_0005;
/// Shared by the ELF image and the secure-boot public key rows.
pub const CLASS_ELF: u32 = 0x0013_0000;
pub const CLASS_GPIO: u32 = 0x000e_0000;

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("digest must be 32 bytes, got {0}")]
    BadDigestLength(usize),
    #[error("log line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("log is missing the {0} line")]
    MissingEkLine(&'static str),
}

/// One measured attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub component_class: u32,
    pub label: String,
    pub value: String,
}

/// Endorsement key reference extracted from the secure element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EkReference {
    /// SEC1 uncompressed P-256 point.
    pub ek_public: Vec<u8>,
    pub binding_sig: Vec<u8>,
    /// Signature over `digest || nonce`, present only in nonce mode.
    pub quote_sig: Option<Vec<u8>>,
}

/// Ordered measurement record: the ESP-monitor log analog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementLog {
    pub entries: Vec<LogEntry>,
    pub ek_reference: EkReference,
    pub nonce_echo: Option<Vec<u8>>,
}

fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

fn gpio_levels_value(state: &DeviceState) -> String {
    state
        .gpio_bank
        .iter()
        .map(|p| p.level().to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn build_entries(state: &DeviceState) -> Vec<LogEntry> {
    let entry = |class: u32, label: &str, value: String| LogEntry {
        component_class: class,
        label: label.to_string(),
        value,
    };
    let mut entries = vec![
        entry(CLASS_PROCESSOR, "Chip ID", state.chip_id.to_string()),
        entry(CLASS_FLASH, "Flash ID", state.flash_id.to_string()),
        entry(CLASS_ETHERNET, "MAC", state.eth_mac.to_string()),
        entry(CLASS_WIFI, "MAC", state.wifi_mac.to_string()),
        entry(CLASS_BLUETOOTH, "MAC", state.bt_mac.to_string()),
        entry(CLASS_FIRMWARE, "SHA256", sha256_hex(&state.firmware_image)),
        entry(
            CLASS_BOOTLOADER,
            "SHA256",
            sha256_hex(&state.bootloader_image),
        ),
        entry(CLASS_ELF, "SHA256", sha256_hex(&state.elf_image)),
    ];
    if state.secure_boot_enabled {
        entries.push(entry(
            CLASS_ELF,
            "SHA256",
            sha256_hex(&state.secure_boot_pubkey),
        ));
    }
    entries.push(entry(CLASS_GPIO, "Pins/Levels", gpio_levels_value(state)));
    entries
}

fn render_entries(entries: &[LogEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        debug_assert!(!e.label.contains('|') && !e.label.contains('\n'));
        debug_assert!(!e.value.contains('\n'));
        out.push_str(&format!(
            "CLASS={:08x}|LABEL={}|VALUE={}\n",
            e.component_class, e.label, e.value
        ));
    }
    out
}

/// The part of the rendering covered by the quote signature: all entries plus
/// the EK_PUB and EK_BINDING lines.
fn render_quoted_part(entries: &[LogEntry], ek_public: &[u8], binding_sig: &[u8]) -> String {
    let mut out = render_entries(entries);
    out.push_str(&format!("EK_PUB={}\n", hex::encode(ek_public)));
    out.push_str(&format!("EK_BINDING={}\n", hex::encode(binding_sig)));
    out
}

/// Digest the quote signature covers (before the nonce is appended).
pub fn quoted_digest(log: &MeasurementLog) -> [u8; 32] {
    let part = render_quoted_part(
        &log.entries,
        &log.ek_reference.ek_public,
        &log.ek_reference.binding_sig,
    );
    Sha256::digest(part.as_bytes()).into()
}

/// Extracts the endorsement key reference, optionally quoting `digest||nonce`.
pub fn extract_ek_reference(
    state: &DeviceState,
    digest: &[u8],
    nonce: Option<&[u8]>,
) -> Result<EkReference, MeasureError> {
    if digest.len() != 32 {
        return Err(MeasureError::BadDigestLength(digest.len()));
    }
    let quote_sig = nonce.map(|n| {
        let mut msg = digest.to_vec();
        msg.extend_from_slice(n);
        state.secure_element.sign(&msg)
    });
    Ok(EkReference {
        ek_public: state.secure_element.ek_public().to_sec1(),
        binding_sig: state.secure_element.device_binding_sig().to_vec(),
        quote_sig,
    })
}

/// Takes the full measurement snapshot of a device.
///
/// Hashes are SHA-256 over the exact image bytes rendered as lowercase hex;
/// MACs are colon-separated lowercase hex; GPIO levels are comma-separated in
/// pin order. Equal states (and equal nonce) produce equal logs.
pub fn measure(state: &DeviceState, nonce: Option<&[u8]>) -> MeasurementLog {
    let entries = build_entries(state);
    let quoted = render_quoted_part(
        &entries,
        &state.secure_element.ek_public().to_sec1(),
        state.secure_element.device_binding_sig(),
    );
    let digest: [u8; 32] = Sha256::digest(quoted.as_bytes()).into();
    let ek_reference =
        extract_ek_reference(state, &digest, nonce).expect("digest is always 32 bytes");
    MeasurementLog {
        entries,
        ek_reference,
        nonce_echo: nonce.map(|n| n.to_vec()),
    }
}

/// Renders the log to its wire text form. `parse_rendered_log` inverts this.
pub fn render_log(log: &MeasurementLog) -> String {
    let mut out = render_quoted_part(
        &log.entries,
        &log.ek_reference.ek_public,
        &log.ek_reference.binding_sig,
    );
    if let Some(quote) = &log.ek_reference.quote_sig {
        out.push_str(&format!("EK_QUOTE={}\n", hex::encode(quote)));
    }
    if let Some(nonce) = &log.nonce_echo {
        out.push_str(&format!("NONCE={}\n", hex::encode(nonce)));
    }
    out
}

fn decode_hex_line(line: &str, line_no: usize, key: &str) -> Result<Vec<u8>, MeasureError> {
    let value = line
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or(MeasureError::MalformedLine {
            line: line_no,
            reason: format!("expected {key}= line"),
        })?;
    hex::decode(value).map_err(|e| MeasureError::MalformedLine {
        line: line_no,
        reason: format!("bad hex after {key}=: {e}"),
    })
}

/// Parses the rendered text form back into a `MeasurementLog`.
pub fn parse_rendered_log(text: &str) -> Result<MeasurementLog, MeasureError> {
    let mut entries = Vec::new();
    let mut lines = text.lines().enumerate().peekable();

    while let Some((_, line)) = lines.peek() {
        if !line.starts_with("CLASS=") {
            break;
        }
        let (idx, line) = lines.next().unwrap();
        let line_no = idx + 1;
        entries.push(parse_rendered_log_entry(line, line_no)?);
    }

    let (idx, line) = lines.next().ok_or(MeasureError::MissingEkLine("EK_PUB"))?;
    let ek_public = decode_hex_line(line, idx + 1, "EK_PUB")?;
    let (idx, line) = lines
        .next()
        .ok_or(MeasureError::MissingEkLine("EK_BINDING"))?;
    let binding_sig = decode_hex_line(line, idx + 1, "EK_BINDING")?;

    let mut quote_sig = None;
    if let Some((_, line)) = lines.peek() {
        if line.starts_with("EK_QUOTE=") {
            let (idx, line) = lines.next().unwrap();
            quote_sig = Some(decode_hex_line(line, idx + 1, "EK_QUOTE")?);
        }
    }
    let mut nonce_echo = None;
    if let Some((_, line)) = lines.peek() {
        if line.starts_with("NONCE=") {
            let (idx, line) = lines.next().unwrap();
            nonce_echo = Some(decode_hex_line(line, idx + 1, "NONCE")?);
        }
    }
    if let Some((idx, line)) = lines.next() {
        return Err(MeasureError::MalformedLine {
            line: idx + 1,
            reason: format!("unexpected trailing line {line:?}"),
        });
    }

    Ok(MeasurementLog {
        entries,
        ek_reference: EkReference {
            ek_public,
            binding_sig,
            quote_sig,
        },
        nonce_echo,
    })
}

/// Parses one `CLASS=..|LABEL=..|VALUE=..` line; shared with the component
/// list parser.
pub(crate) fn parse_rendered_log_entry(
    line: &str,
    line_no: usize,
) -> Result<LogEntry, MeasureError> {
    let err = |reason: &str| MeasureError::MalformedLine {
        line: line_no,
        reason: reason.to_string(),
    };
    let rest = line
        .strip_prefix("CLASS=")
        .ok_or_else(|| err("missing CLASS="))?;
    if rest.len() < 8 {
        return Err(err("class value must be 8 hex digits"));
    }
    let (class_hex, rest) = rest.split_at(8);
    let component_class =
        u32::from_str_radix(class_hex, 16).map_err(|_| err("class value must be 8 hex digits"))?;
    if class_hex.chars().any(|c| c.is_ascii_uppercase()) {
        return Err(err("class value must be lowercase hex"));
    }
    let rest = rest
        .strip_prefix("|LABEL=")
        .ok_or_else(|| err("missing |LABEL="))?;
    let bar = rest.find('|').ok_or_else(|| err("missing |VALUE="))?;
    let label = &rest[..bar];
    let value = rest[bar..]
        .strip_prefix("|VALUE=")
        .ok_or_else(|| err("missing |VALUE="))?;
    Ok(LogEntry {
        component_class,
        label: label.to_string(),
        value: value.to_string(),
    })
}
