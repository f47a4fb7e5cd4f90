//! In-memory model of an ESP32-S3-class prover with an attached secure
//! element, plus the tamper operations used to stage attacks against it.
//!
//! A `DeviceState` is an immutable value: tamper operations return a new
//! state and touch only the fields their contract names. Construction is a
//! pure function of the `DeviceSpec`, so the same config file always boots
//! the same device.

use std::path::Path;
use std::sync::{Arc, Mutex};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::p256::{self, Point};

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("duplicate MAC address {0}")]
    DuplicateMac(MacAddr),
    #[error("{0} image is empty")]
    EmptyImage(&'static str),
    #[error("GPIO pin count must be at least 1")]
    ZeroPinCount,
    #[error("invalid GPIO spec: {0}")]
    BadGpioSpec(String),
    #[error("unknown GPIO pin {0}")]
    UnknownPin(u16),
    #[error("GPIO pin {0} is disabled")]
    DisabledPin(u16),
    #[error("GPIO level must be 0 or 1, got {0}")]
    BadLevel(u8),
    #[error("patch out of range: offset {offset} + {len} exceeds image size {image_len}")]
    PatchOutOfRange {
        offset: usize,
        len: usize,
        image_len: usize,
    },
    #[error("appended ELF section is empty")]
    EmptySection,
    #[error("malformed MAC address: {0:?}")]
    MalformedMac(String),
    #[error("the simulator only models reproducible builds")]
    NonReproducibleBuild,
    #[error("device config: {0}")]
    Config(String),
}

// ---------------------------------------------------------------------------
// Identity primitives
// ---------------------------------------------------------------------------

/// 6-byte MAC address, rendered as colon-separated lowercase hex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub fn parse(s: &str) -> Result<MacAddr, DeviceError> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 6 {
            return Err(DeviceError::MalformedMac(s.to_string()));
        }
        let mut bytes = [0u8; 6];
        for (i, part) in parts.iter().enumerate() {
            if part.len() != 2 {
                return Err(DeviceError::MalformedMac(s.to_string()));
            }
            bytes[i] = u8::from_str_radix(part, 16)
                .map_err(|_| DeviceError::MalformedMac(s.to_string()))?;
        }
        Ok(MacAddr(bytes))
    }
}

impl std::fmt::Display for MacAddr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let b = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl Serialize for MacAddr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<MacAddr, D::Error> {
        let s = String::deserialize(d)?;
        MacAddr::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpioDirection {
    Input,
    Output,
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GpioPin {
    pub number: u16,
    pub direction: GpioDirection,
    level: u8,
}

impl GpioPin {
    /// Disabled pins always report level 0.
    pub fn level(&self) -> u8 {
        if self.direction == GpioDirection::Disabled {
            0
        } else {
            self.level
        }
    }
}

/// Platform metadata copied into certificates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformMeta {
    pub manufacturer: String,
    pub model: String,
    pub version: String,
    pub serial: String,
}

// ---------------------------------------------------------------------------
// Secure element
// ---------------------------------------------------------------------------

/// Simulated single-slot secure element holding the endorsement key.
///
/// The private scalar is reachable only through [`SecureElementSim::sign`]
/// and never appears in any serialized or debug form. Clones share the same
/// signing slot, mirroring one physical element per device.
#[derive(Clone)]
pub struct SecureElementSim {
    ek_private: BigUint,
    ek_public: Point,
    device_binding_sig: Vec<u8>,
    slot: Arc<Mutex<()>>,
}

impl PartialEq for SecureElementSim {
    fn eq(&self, other: &Self) -> bool {
        self.ek_private == other.ek_private
            && self.ek_public == other.ek_public
            && self.device_binding_sig == other.device_binding_sig
    }
}

impl std::fmt::Debug for SecureElementSim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecureElementSim")
            .field("ek_public", &hex::encode(self.ek_public.to_sec1()))
            .field("device_binding_sig", &hex::encode(&self.device_binding_sig))
            .finish_non_exhaustive()
    }
}

impl SecureElementSim {
    /// `binding_override` carries a binding signature created at an earlier
    /// provisioning; without it the element signs a fresh binding over the
    /// current chip id.
    fn provision(
        seed: &[u8; 32],
        chip_id: u64,
        binding_override: Option<Vec<u8>>,
    ) -> SecureElementSim {
        let ek_private = p256::scalar_from_seed(seed);
        let ek_public = p256::base_mult(&ek_private);
        let device_binding_sig = binding_override.unwrap_or_else(|| {
            let binding = binding_message(&ek_public, chip_id);
            crate::crypto::ecdsa_signature_to_der(&p256::sign(&ek_private, &binding))
        });
        SecureElementSim {
            ek_private,
            ek_public,
            device_binding_sig,
            slot: Arc::new(Mutex::new(())),
        }
    }

    pub fn ek_public(&self) -> &Point {
        &self.ek_public
    }

    pub fn device_binding_sig(&self) -> &[u8] {
        &self.device_binding_sig
    }

    /// Deterministic ECDSA over `message`; one signer at a time.
    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        let _slot = self.slot.lock().expect("secure element slot");
        crate::crypto::ecdsa_signature_to_der(&p256::sign(&self.ek_private, message))
    }
}

/// The message the endorsement key signs to bind itself to the processor:
/// SEC1 public point followed by the chip id as 8 big-endian bytes.
pub fn binding_message(ek_public: &Point, chip_id: u64) -> Vec<u8> {
    let mut msg = ek_public.to_sec1();
    msg.extend_from_slice(&chip_id.to_be_bytes());
    msg
}

// ---------------------------------------------------------------------------
// Device spec (config file schema)
// ---------------------------------------------------------------------------

fn default_true() -> bool {
    true
}

pub const DEFAULT_GPIO_COUNT: u16 = 45;

fn default_gpio_count() -> u16 {
    DEFAULT_GPIO_COUNT
}

/// GPIO bank declaration. `directions` uses one char per pin (`i`, `o`, `d`),
/// `levels` one char per pin (`0`, `1`); both default to all-input, all-zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GpioSpec {
    #[serde(default = "default_gpio_count")]
    pub count: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<String>,
}

impl Default for GpioSpec {
    fn default() -> GpioSpec {
        GpioSpec {
            count: DEFAULT_GPIO_COUNT,
            directions: None,
            levels: None,
        }
    }
}

/// Everything needed to boot a simulated device. Loadable from a UTF-8 TOML
/// file; byte strings are hex-encoded in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub chip_id: u64,
    pub flash_id: u64,
    pub eth_mac: MacAddr,
    pub wifi_mac: MacAddr,
    pub bt_mac: MacAddr,
    /// 32-byte hex seed for endorsement key generation.
    pub ek_seed: String,
    /// Binding signature from the original provisioning (hex DER). The
    /// element signs one at first boot when absent; tamper rewrites keep it,
    /// since real hardware binds once.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ek_binding_sig_hex: Option<String>,
    #[serde(default = "default_true")]
    pub secure_boot_enabled: bool,
    #[serde(default = "default_true")]
    pub reproducible_build: bool,
    #[serde(with = "hex_bytes")]
    pub firmware_hex: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub bootloader_hex: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub elf_hex: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub secure_boot_pubkey_hex: Vec<u8>,
    #[serde(default)]
    pub gpio: GpioSpec,
    pub platform: PlatformMeta,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s).map_err(serde::de::Error::custom)
    }
}

impl DeviceSpec {
    pub fn from_toml_str(text: &str) -> Result<DeviceSpec, DeviceError> {
        toml::from_str(text).map_err(|e| DeviceError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("device spec serializes")
    }

    pub fn load(path: &Path) -> Result<DeviceSpec, DeviceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DeviceError::Config(format!("{}: {e}", path.display())))?;
        DeviceSpec::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), DeviceError> {
        std::fs::write(path, self.to_toml_string())
            .map_err(|e| DeviceError::Config(format!("{}: {e}", path.display())))
    }

    fn ek_seed_bytes(&self) -> Result<[u8; 32], DeviceError> {
        let bytes = hex::decode(&self.ek_seed)
            .map_err(|_| DeviceError::Config("ek_seed must be hex".into()))?;
        bytes
            .try_into()
            .map_err(|_| DeviceError::Config("ek_seed must be 32 bytes".into()))
    }
}

// ---------------------------------------------------------------------------
// Device state
// ---------------------------------------------------------------------------

/// The full simulated prover platform: the measurement target.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub chip_id: u64,
    pub flash_id: u64,
    pub eth_mac: MacAddr,
    pub wifi_mac: MacAddr,
    pub bt_mac: MacAddr,
    pub firmware_image: Vec<u8>,
    pub bootloader_image: Vec<u8>,
    pub elf_image: Vec<u8>,
    pub secure_boot_pubkey: Vec<u8>,
    pub secure_boot_enabled: bool,
    pub gpio_bank: Vec<GpioPin>,
    pub secure_element: SecureElementSim,
    pub platform_meta: PlatformMeta,
}

fn parse_gpio_bank(spec: &GpioSpec) -> Result<Vec<GpioPin>, DeviceError> {
    if spec.count == 0 {
        return Err(DeviceError::ZeroPinCount);
    }
    let count = spec.count as usize;
    let directions: Vec<GpioDirection> = match &spec.directions {
        None => vec![GpioDirection::Input; count],
        Some(s) => {
            if s.chars().count() != count {
                return Err(DeviceError::BadGpioSpec(format!(
                    "directions has {} entries, expected {count}",
                    s.chars().count()
                )));
            }
            s.chars()
                .map(|c| match c {
                    'i' => Ok(GpioDirection::Input),
                    'o' => Ok(GpioDirection::Output),
                    'd' => Ok(GpioDirection::Disabled),
                    other => Err(DeviceError::BadGpioSpec(format!(
                        "direction char {other:?} (want i/o/d)"
                    ))),
                })
                .collect::<Result<_, _>>()?
        }
    };
    let levels: Vec<u8> = match &spec.levels {
        None => vec![0; count],
        Some(s) => {
            if s.chars().count() != count {
                return Err(DeviceError::BadGpioSpec(format!(
                    "levels has {} entries, expected {count}",
                    s.chars().count()
                )));
            }
            s.chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    other => Err(DeviceError::BadGpioSpec(format!(
                        "level char {other:?} (want 0/1)"
                    ))),
                })
                .collect::<Result<_, _>>()?
        }
    };
    Ok(directions
        .into_iter()
        .zip(levels)
        .enumerate()
        .map(|(i, (direction, level))| GpioPin {
            number: i as u16,
            direction,
            level,
        })
        .collect())
}

/// Boots a device from its spec. Pure: identical specs produce identical
/// states, including the endorsement key material.
pub fn new_device(spec: &DeviceSpec) -> Result<DeviceState, DeviceError> {
    if !spec.reproducible_build {
        return Err(DeviceError::NonReproducibleBuild);
    }
    let macs = [spec.eth_mac, spec.wifi_mac, spec.bt_mac];
    for i in 0..macs.len() {
        for j in i + 1..macs.len() {
            if macs[i] == macs[j] {
                return Err(DeviceError::DuplicateMac(macs[i]));
            }
        }
    }
    if spec.firmware_hex.is_empty() {
        return Err(DeviceError::EmptyImage("firmware"));
    }
    if spec.bootloader_hex.is_empty() {
        return Err(DeviceError::EmptyImage("bootloader"));
    }
    if spec.elf_hex.is_empty() {
        return Err(DeviceError::EmptyImage("elf"));
    }
    if spec.secure_boot_enabled && spec.secure_boot_pubkey_hex.is_empty() {
        return Err(DeviceError::EmptyImage("secure boot public key"));
    }
    let gpio_bank = parse_gpio_bank(&spec.gpio)?;
    let seed = spec.ek_seed_bytes()?;
    let binding_override = spec
        .ek_binding_sig_hex
        .as_deref()
        .map(hex::decode)
        .transpose()
        .map_err(|_| DeviceError::Config("ek_binding_sig_hex must be hex".into()))?;
    Ok(DeviceState {
        chip_id: spec.chip_id,
        flash_id: spec.flash_id,
        eth_mac: spec.eth_mac,
        wifi_mac: spec.wifi_mac,
        bt_mac: spec.bt_mac,
        firmware_image: spec.firmware_hex.clone(),
        bootloader_image: spec.bootloader_hex.clone(),
        elf_image: spec.elf_hex.clone(),
        secure_boot_pubkey: spec.secure_boot_pubkey_hex.clone(),
        secure_boot_enabled: spec.secure_boot_enabled,
        gpio_bank,
        secure_element: SecureElementSim::provision(&seed, spec.chip_id, binding_override),
        platform_meta: spec.platform.clone(),
    })
}

// ---------------------------------------------------------------------------
// Tamper operations
// ---------------------------------------------------------------------------

/// Sets the level of one GPIO pin, returning the modified state.
pub fn tamper_gpio(state: &DeviceState, pin: u16, level: u8) -> Result<DeviceState, DeviceError> {
    if level > 1 {
        return Err(DeviceError::BadLevel(level));
    }
    let idx = state
        .gpio_bank
        .iter()
        .position(|p| p.number == pin)
        .ok_or(DeviceError::UnknownPin(pin))?;
    if state.gpio_bank[idx].direction == GpioDirection::Disabled {
        return Err(DeviceError::DisabledPin(pin));
    }
    let mut next = state.clone();
    next.gpio_bank[idx].level = level;
    Ok(next)
}

/// Overwrites firmware bytes at `offset` with `replacement`.
pub fn tamper_firmware(
    state: &DeviceState,
    offset: usize,
    replacement: &[u8],
) -> Result<DeviceState, DeviceError> {
    let image_len = state.firmware_image.len();
    if offset
        .checked_add(replacement.len())
        .is_none_or(|end| end > image_len)
    {
        return Err(DeviceError::PatchOutOfRange {
            offset,
            len: replacement.len(),
            image_len,
        });
    }
    let mut next = state.clone();
    next.firmware_image[offset..offset + replacement.len()].copy_from_slice(replacement);
    Ok(next)
}

/// Appends a section to the ELF image. Rebuilding from a changed ELF also
/// changes the flashed firmware, modeled by appending the section's SHA-256
/// digest to the firmware image.
pub fn tamper_elf(state: &DeviceState, section: &[u8]) -> Result<DeviceState, DeviceError> {
    if section.is_empty() {
        return Err(DeviceError::EmptySection);
    }
    let mut next = state.clone();
    next.elf_image.extend_from_slice(section);
    let digest: [u8; 32] = Sha256::digest(section).into();
    next.firmware_image.extend_from_slice(&digest);
    Ok(next)
}

/// Replaces the identity fields. The secure element is untouched: a cloned
/// identity cannot clone the endorsement key, and the original binding
/// signature still covers the provisioning-time chip id.
pub fn swap_identity(
    state: &DeviceState,
    eth_mac: MacAddr,
    wifi_mac: MacAddr,
    bt_mac: MacAddr,
    chip_id: u64,
) -> Result<DeviceState, DeviceError> {
    let macs = [eth_mac, wifi_mac, bt_mac];
    for i in 0..macs.len() {
        for j in i + 1..macs.len() {
            if macs[i] == macs[j] {
                return Err(DeviceError::DuplicateMac(macs[i]));
            }
        }
    }
    let mut next = state.clone();
    next.eth_mac = eth_mac;
    next.wifi_mac = wifi_mac;
    next.bt_mac = bt_mac;
    next.chip_id = chip_id;
    Ok(next)
}

/// Rebuilds a config for a (possibly tampered) state, keeping the settings
/// that are not part of the measured surface (seed, directions, platform).
pub fn spec_from_state(old: &DeviceSpec, state: &DeviceState) -> DeviceSpec {
    let mut spec = old.clone();
    spec.chip_id = state.chip_id;
    spec.eth_mac = state.eth_mac;
    spec.wifi_mac = state.wifi_mac;
    spec.bt_mac = state.bt_mac;
    spec.firmware_hex = state.firmware_image.clone();
    spec.bootloader_hex = state.bootloader_image.clone();
    spec.elf_hex = state.elf_image.clone();
    spec.secure_boot_pubkey_hex = state.secure_boot_pubkey.clone();
    spec.ek_binding_sig_hex = Some(hex::encode(state.secure_element.device_binding_sig()));
    spec.gpio.levels = Some(
        state
            .gpio_bank
            .iter()
            .map(|p| if p.level() == 1 { '1' } else { '0' })
            .collect(),
    );
    spec
}


#[cfg(test)]
mod tests {
    use super::testutil::{sample_device, sample_spec};
    use super::*;

    #[test]
    fn construction_echoes_spec() {
        let dev = sample_device();
        assert_eq!(dev.chip_id, 2113559);
        assert_eq!(dev.eth_mac.to_string(), "f4:12:fa:e3:91:ef");
        assert_eq!(dev.wifi_mac.to_string(), "f4:12:fa:e3:91:ec");
        assert_eq!(dev.bt_mac.to_string(), "f4:12:fa:e3:91:ee");
        assert_eq!(dev.gpio_bank.len(), 45);
    }

    #[test]
    fn duplicate_mac_rejected() {
        let mut spec = sample_spec();
        spec.wifi_mac = spec.eth_mac;
        assert!(matches!(
            new_device(&spec),
            Err(DeviceError::DuplicateMac(_))
        ));
    }

    #[test]
    fn empty_image_rejected() {
        let mut spec = sample_spec();
        spec.firmware_hex.clear();
        assert_eq!(
            new_device(&spec).unwrap_err(),
            DeviceError::EmptyImage("firmware")
        );
    }

    #[test]
    fn zero_pin_count_rejected() {
        let mut spec = sample_spec();
        spec.gpio = GpioSpec {
            count: 0,
            directions: None,
            levels: None,
        };
        assert_eq!(new_device(&spec).unwrap_err(), DeviceError::ZeroPinCount);
    }

    #[test]
    fn construction_is_reproducible() {
        let a = new_device(&sample_spec()).unwrap();
        let b = new_device(&sample_spec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.secure_element.ek_public().to_sec1(),
            b.secure_element.ek_public().to_sec1()
        );
    }

    #[test]
    fn binding_signature_verifies() {
        let dev = sample_device();
        let msg = binding_message(dev.secure_element.ek_public(), dev.chip_id);
        let sig = crate::crypto::ecdsa_signature_from_der(dev.secure_element.device_binding_sig())
            .unwrap();
        assert!(p256::verify(dev.secure_element.ek_public(), &msg, &sig));
    }

    #[test]
    fn gpio_tamper_changes_exactly_one_pin() {
        let dev = sample_device();
        let tampered = tamper_gpio(&dev, 2, 1).unwrap();
        let diffs: Vec<u16> = dev
            .gpio_bank
            .iter()
            .zip(&tampered.gpio_bank)
            .filter(|(a, b)| a != b)
            .map(|(a, _)| a.number)
            .collect();
        assert_eq!(diffs, vec![2]);
        // everything else untouched
        let mut reverted = tampered.clone();
        reverted.gpio_bank = dev.gpio_bank.clone();
        assert_eq!(reverted, dev);
    }

    #[test]
    fn gpio_tamper_idempotent_and_reversible() {
        let dev = sample_device();
        let current = dev.gpio_bank[2].level();
        assert_eq!(tamper_gpio(&dev, 2, current).unwrap(), dev);
        let flipped = tamper_gpio(&dev, 2, 1 - current).unwrap();
        assert_eq!(tamper_gpio(&flipped, 2, current).unwrap(), dev);
    }

    #[test]
    fn gpio_tamper_rejects_bad_pins() {
        let dev = sample_device();
        assert_eq!(
            tamper_gpio(&dev, 999, 1).unwrap_err(),
            DeviceError::UnknownPin(999)
        );
        let mut spec = sample_spec();
        spec.gpio.directions = Some(format!("d{}", "i".repeat(44)));
        let dev = new_device(&spec).unwrap();
        assert_eq!(
            tamper_gpio(&dev, 0, 1).unwrap_err(),
            DeviceError::DisabledPin(0)
        );
    }

    #[test]
    fn firmware_patch_changes_only_firmware() {
        let dev = sample_device();
        let patched = tamper_firmware(&dev, 0, &[dev.firmware_image[0] ^ 0xff]).unwrap();
        assert_ne!(patched.firmware_image, dev.firmware_image);
        let mut reverted = patched.clone();
        reverted.firmware_image = dev.firmware_image.clone();
        assert_eq!(reverted, dev);
    }

    #[test]
    fn firmware_patch_identical_bytes_is_noop() {
        let dev = sample_device();
        let same = dev.firmware_image[..3].to_vec();
        assert_eq!(tamper_firmware(&dev, 0, &same).unwrap(), dev);
    }

    #[test]
    fn firmware_patch_out_of_range() {
        let dev = sample_device();
        let len = dev.firmware_image.len();
        assert!(matches!(
            tamper_firmware(&dev, len, &[0x00]),
            Err(DeviceError::PatchOutOfRange { .. })
        ));
    }

    #[test]
    fn elf_append_perturbs_both_images_deterministically() {
        let dev = sample_device();
        let a = tamper_elf(&dev, b"injected library").unwrap();
        let b = tamper_elf(&dev, b"injected library").unwrap();
        assert_eq!(a, b);
        assert_ne!(a.elf_image, dev.elf_image);
        assert_ne!(a.firmware_image, dev.firmware_image);
        let mut reverted = a.clone();
        reverted.elf_image = dev.elf_image.clone();
        reverted.firmware_image = dev.firmware_image.clone();
        assert_eq!(reverted, dev);
    }

    #[test]
    fn elf_append_rejects_empty_section() {
        let dev = sample_device();
        assert_eq!(
            tamper_elf(&dev, b"").unwrap_err(),
            DeviceError::EmptySection
        );
    }

    #[test]
    fn identity_swap_keeps_secure_element() {
        let dev = sample_device();
        let swapped = swap_identity(
            &dev,
            MacAddr::parse("02:00:00:00:00:01").unwrap(),
            MacAddr::parse("02:00:00:00:00:02").unwrap(),
            MacAddr::parse("02:00:00:00:00:03").unwrap(),
            777,
        )
        .unwrap();
        assert_eq!(swapped.secure_element, dev.secure_element);
        assert_eq!(swapped.chip_id, 777);
        // swapping back restores the original state exactly
        let back =
            swap_identity(&swapped, dev.eth_mac, dev.wifi_mac, dev.bt_mac, dev.chip_id).unwrap();
        assert_eq!(back, dev);
    }

    #[test]
    fn identity_swap_to_self_is_noop() {
        let dev = sample_device();
        let same = swap_identity(&dev, dev.eth_mac, dev.wifi_mac, dev.bt_mac, dev.chip_id).unwrap();
        assert_eq!(same, dev);
    }

    #[test]
    fn mac_with_five_bytes_rejected() {
        assert!(matches!(
            MacAddr::parse("f4:12:fa:e3:91"),
            Err(DeviceError::MalformedMac(_))
        ));
    }

    #[test]
    fn config_rewrite_preserves_the_provisioned_binding() {
        let spec = sample_spec();
        let dev = new_device(&spec).unwrap();
        let swapped = swap_identity(
            &dev,
            MacAddr::parse("02:00:00:00:00:01").unwrap(),
            MacAddr::parse("02:00:00:00:00:02").unwrap(),
            MacAddr::parse("02:00:00:00:00:03").unwrap(),
            909,
        )
        .unwrap();
        let rewritten = spec_from_state(&spec, &swapped);
        let rebooted = new_device(&rewritten).unwrap();
        // the element does not re-sign: the original binding survives
        assert_eq!(
            rebooted.secure_element.device_binding_sig(),
            dev.secure_element.device_binding_sig()
        );
        assert_eq!(rebooted.chip_id, 909);
    }

    #[test]
    fn ek_private_never_leaks_from_debug_output() {
        let spec = sample_spec();
        let dev = new_device(&spec).unwrap();
        let seed: [u8; 32] = hex::decode(&spec.ek_seed).unwrap().try_into().unwrap();
        let scalar_hex = format!("{:064x}", p256::scalar_from_seed(&seed));
        let debug = format!("{dev:?}");
        assert!(!debug.contains(&scalar_hex));
        let log = crate::measure::render_log(&crate::measure::measure(&dev, None));
        assert!(!log.contains(&scalar_hex));
    }

    #[test]
    fn spec_toml_round_trip() {
        let spec = sample_spec();
        let text = spec.to_toml_string();
        let back = DeviceSpec::from_toml_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn non_reproducible_build_rejected() {
        let mut spec = sample_spec();
        spec.reproducible_build = false;
        assert_eq!(
            new_device(&spec).unwrap_err(),
            DeviceError::NonReproducibleBuild
        );
    }
}
