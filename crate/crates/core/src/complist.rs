//! Component inventory: parse a rendered measurement log into the canonical
//! component list document, serialize it as canonical JSON, and diff two
//! snapshots.
//!
//! Canonical JSON (file extension `.componentlist.json`): UTF-8, keys sorted,
//! no insignificant whitespace. Schema:
//!
//! ```json
//! {
//!   "components": [
//!     {
//!       "componentClass": "00010008",
//!       "componentClassRegistry": "TCG",
//!       "fieldReplaceable": false,
//!       "manufacturer": "...",        // omitted when not provided
//!       "model": "Chip ID",
//!       "revision": "...",            // omitted when not provided
//!       "serial": "2113559"
//!     }
//!   ],
//!   "platform": {
//!     "manufacturer": "...", "model": "...", "serial": "...", "version": "..."
//!   }
//! }
//! ```
//!
//! Components are kept in canonical order (class, then serial); duplicate
//! (class, serial) pairs are rejected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::PlatformMeta;

/// Registry identifier for the component classes measured here.
pub const REGISTRY_TCG: &str = "TCG";

#[derive(Debug, Error, PartialEq)]
pub enum ComplistError {
    #[error("log line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("log line {line}: component serial must not be empty")]
    EmptySerial { line: usize },
    #[error("duplicate component (class {class:08x}, serial {serial:?})")]
    DuplicateComponent { class: u32, serial: String },
    #[error("component list JSON: {0}")]
    BadJson(String),
    #[error("change cannot be applied: {0}")]
    ConflictingChange(String),
}

fn hex_class(class: u32) -> String {
    format!("{class:08x}")
}

mod class_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(class: &u32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::hex_class(*class))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 8 || s.chars().any(|c| c.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom(
                "componentClass must be 8 lowercase hex digits",
            ));
        }
        u32::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}

/// One inventoried platform component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentIdentifier {
    #[serde(rename = "componentClass", with = "class_hex")]
    pub class: u32,
    #[serde(rename = "componentClassRegistry")]
    pub registry: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub manufacturer: Option<String>,
    pub model: String,
    /// The component UID: hash, identifier or rendered value.
    pub serial: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub revision: Option<String>,
    #[serde(rename = "fieldReplaceable")]
    pub field_replaceable: bool,
}

/// Canonical, class-tagged inventory document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentList {
    pub platform: PlatformMeta,
    pub components: Vec<ComponentIdentifier>,
}

impl ComponentList {
    /// Canonicalizes the component order and enforces uniqueness.
    pub fn new(
        platform: PlatformMeta,
        mut components: Vec<ComponentIdentifier>,
    ) -> Result<ComponentList, ComplistError> {
        components.sort_by(|a, b| (a.class, &a.serial).cmp(&(b.class, &b.serial)));
        for pair in components.windows(2) {
            if pair[0].class == pair[1].class && pair[0].serial == pair[1].serial {
                return Err(ComplistError::DuplicateComponent {
                    class: pair[0].class,
                    serial: pair[0].serial.clone(),
                });
            }
        }
        Ok(ComponentList {
            platform,
            components,
        })
    }
}

/// Parses rendered measurement-log text into a component list.
///
/// Entry lines become components (class, label as model, value as serial);
/// the EK reference and nonce lines are not components and are skipped.
/// Unknown component class values pass through as opaque 4-byte values.
pub fn parse_log(text: &str, platform: &PlatformMeta) -> Result<ComponentList, ComplistError> {
    let mut components = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        if ["EK_PUB=", "EK_BINDING=", "EK_QUOTE=", "NONCE="]
            .iter()
            .any(|p| line.starts_with(p))
        {
            continue;
        }
        let entry = crate::measure::parse_rendered_log_entry(line, line_no).map_err(|e| {
            ComplistError::MalformedLine {
                line: line_no,
                reason: e.to_string(),
            }
        })?;
        if entry.value.is_empty() {
            return Err(ComplistError::EmptySerial { line: line_no });
        }
        components.push(ComponentIdentifier {
            class: entry.component_class,
            registry: REGISTRY_TCG.to_string(),
            manufacturer: None,
            model: entry.label,
            serial: entry.value,
            revision: None,
            field_replaceable: false,
        });
    }
    ComponentList::new(platform.clone(), components)
}

/// Byte-deterministic canonical JSON: sorted keys, no extra whitespace.
pub fn to_canonical_json(cl: &ComponentList) -> Vec<u8> {
    // routing through Value sorts object keys
    let value = serde_json::to_value(cl).expect("component list serializes");
    serde_json::to_string(&value)
        .expect("json value renders")
        .into_bytes()
}

pub fn from_json(bytes: &[u8]) -> Result<ComponentList, ComplistError> {
    let raw: ComponentList =
        serde_json::from_slice(bytes).map_err(|e| ComplistError::BadJson(e.to_string()))?;
    for c in &raw.components {
        if c.serial.is_empty() {
            return Err(ComplistError::BadJson(
                "component serial must not be empty".into(),
            ));
        }
    }
    ComponentList::new(raw.platform, raw.components)
}

// ---------------------------------------------------------------------------
// Diffing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ChangeKind {
    Added,
    Removed,
    Modified,
}

/// One tracked difference between two snapshots. For `Added` and `Modified`
/// the identifier carries the new component; for `Removed` the old one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentChange {
    pub kind: ChangeKind,
    pub identifier: ComponentIdentifier,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub old_serial: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub new_serial: Option<String>,
}

/// Computes the changes turning `old` into `new`.
///
/// Components are correlated by (class, model). Within a correlation group,
/// identical components pair off first; the remaining entries pair
/// positionally as MODIFIED, and unmatched leftovers become REMOVED/ADDED.
pub fn diff(old: &ComponentList, new: &ComponentList) -> Vec<ComponentChange> {
    type Key<'a> = (u32, &'a str);
    let mut groups: BTreeMap<Key, (Vec<&ComponentIdentifier>, Vec<&ComponentIdentifier>)> =
        BTreeMap::new();
    for c in &old.components {
        groups.entry((c.class, &c.model)).or_default().0.push(c);
    }
    for c in &new.components {
        groups.entry((c.class, &c.model)).or_default().1.push(c);
    }

    let mut changes = Vec::new();
    for (_key, (olds, news)) in groups {
        let mut news_left: Vec<Option<&ComponentIdentifier>> =
            news.iter().map(|c| Some(*c)).collect();
        let mut olds_left: Vec<&ComponentIdentifier> = Vec::new();
        for o in olds {
            if let Some(slot) = news_left
                .iter_mut()
                .find(|slot| slot.is_some_and(|n| n == o))
            {
                *slot = None; // unchanged
            } else {
                olds_left.push(o);
            }
        }
        let mut news_left: Vec<&ComponentIdentifier> = news_left.into_iter().flatten().collect();

        let paired = olds_left.len().min(news_left.len());
        for (o, n) in olds_left.iter().zip(news_left.iter()).take(paired) {
            changes.push(ComponentChange {
                kind: ChangeKind::Modified,
                identifier: (*n).clone(),
                old_serial: Some(o.serial.clone()),
                new_serial: Some(n.serial.clone()),
            });
        }
        for o in olds_left.drain(..).skip(paired) {
            changes.push(ComponentChange {
                kind: ChangeKind::Removed,
                identifier: o.clone(),
                old_serial: Some(o.serial.clone()),
                new_serial: None,
            });
        }
        for n in news_left.drain(..).skip(paired) {
            changes.push(ComponentChange {
                kind: ChangeKind::Added,
                identifier: n.clone(),
                old_serial: None,
                new_serial: Some(n.serial.clone()),
            });
        }
    }
    changes
}

/// Replays a change list on top of `base`; inverse of [`diff`].
pub fn apply_changes(
    base: &ComponentList,
    changes: &[ComponentChange],
) -> Result<ComponentList, ComplistError> {
    let mut components = base.components.clone();
    for change in changes {
        match change.kind {
            ChangeKind::Added => components.push(change.identifier.clone()),
            ChangeKind::Removed => {
                let pos = components
                    .iter()
                    .position(|c| c == &change.identifier)
                    .ok_or_else(|| {
                        ComplistError::ConflictingChange(format!(
                            "REMOVED component (class {:08x}, serial {:?}) is not present",
                            change.identifier.class, change.identifier.serial
                        ))
                    })?;
                components.remove(pos);
            }
            ChangeKind::Modified => {
                let old_serial = change.old_serial.as_deref().ok_or_else(|| {
                    ComplistError::ConflictingChange("MODIFIED change lacks old_serial".into())
                })?;
                let pos = components
                    .iter()
                    .position(|c| {
                        c.class == change.identifier.class
                            && c.model == change.identifier.model
                            && c.serial == old_serial
                    })
                    .ok_or_else(|| {
                        ComplistError::ConflictingChange(format!(
                            "MODIFIED component (class {:08x}, model {:?}, serial {:?}) \
                             is not present",
                            change.identifier.class, change.identifier.model, old_serial
                        ))
                    })?;
                components[pos] = change.identifier.clone();
            }
        }
    }
    ComponentList::new(base.platform.clone(), components)
}
