//! Slot templates constrain the shape of an agent's memory. A template is an
//! ordered tree of named slots; a memory state must mirror that tree exactly.
//!
//! On disk a template is a JSON object: a leaf slot maps its identifier to a
//! description string, a slot with children maps its identifier to a nested
//! object.

use serde_json::{Map, Value};
use thiserror::Error;

/// One named slot in a memory template. Leaves carry a description; branches
/// carry child slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotSpec {
    pub identifier: String,
    pub description: String,
    pub children: Vec<SlotSpec>,
}

impl SlotSpec {
    pub fn leaf(identifier: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            identifier: identifier.into(),
            description: description.into(),
            children: Vec::new(),
        }
    }

    pub fn branch(identifier: impl Into<String>, children: Vec<SlotSpec>) -> Self {
        Self {
            identifier: identifier.into(),
            description: String::new(),
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template has no slots")]
    NoSlots,
    #[error("template is not a JSON object")]
    NotAnObject,
    #[error("empty slot identifier at {path}")]
    EmptyIdentifier { path: String },
    #[error("duplicate slot identifier at {path}")]
    DuplicateIdentifier { path: String },
    #[error("slot at {path} must be a description string or a nested object")]
    InvalidSlotValue { path: String },
}

/// An ordered tree of named slots. Immutable once built; share freely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryTemplate {
    id: String,
    slots: Vec<SlotSpec>,
}

impl MemoryTemplate {
    /// Builds a template from explicit slots, enforcing non-empty unique
    /// identifiers per level and at least one top-level slot.
    pub fn new(id: impl Into<String>, slots: Vec<SlotSpec>) -> Result<Self, TemplateError> {
        if slots.is_empty() {
            return Err(TemplateError::NoSlots);
        }
        check_level(&slots, "")?;
        Ok(Self {
            id: id.into(),
            slots,
        })
    }

    /// Parses the JSON file form: `{"slot": "description", "nested": {...}}`.
    pub fn from_json(id: impl Into<String>, value: &Value) -> Result<Self, TemplateError> {
        let map = value.as_object().ok_or(TemplateError::NotAnObject)?;
        let slots = parse_level(map, "")?;
        Self::new(id, slots)
    }

    /// Renders the JSON file form back out. Round-trips with [`from_json`]:
    /// slot order is preserved.
    ///
    /// [`from_json`]: MemoryTemplate::from_json
    pub fn to_json(&self) -> Value {
        Value::Object(render_level(&self.slots))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn slots(&self) -> &[SlotSpec] {
        &self.slots
    }

    /// Slash-separated paths of every leaf slot, in template order.
    pub fn leaf_paths(&self) -> Vec<String> {
        let mut paths = Vec::new();
        collect_leaf_paths(&self.slots, "", &mut paths);
        paths
    }
}

fn check_level(slots: &[SlotSpec], prefix: &str) -> Result<(), TemplateError> {
    let mut seen = std::collections::HashSet::new();
    for slot in slots {
        let path = format!("{prefix}/{}", slot.identifier);
        if slot.identifier.is_empty() {
            return Err(TemplateError::EmptyIdentifier { path });
        }
        if !seen.insert(slot.identifier.as_str()) {
            return Err(TemplateError::DuplicateIdentifier { path });
        }
        if !slot.children.is_empty() {
            check_level(&slot.children, &path)?;
        }
    }
    Ok(())
}

fn parse_level(map: &Map<String, Value>, prefix: &str) -> Result<Vec<SlotSpec>, TemplateError> {
    let mut slots = Vec::with_capacity(map.len());
    for (key, value) in map {
        let path = format!("{prefix}/{key}");
        match value {
            Value::String(description) => slots.push(SlotSpec::leaf(key, description.clone())),
            Value::Object(children) => {
                slots.push(SlotSpec::branch(key, parse_level(children, &path)?))
            }
            _ => return Err(TemplateError::InvalidSlotValue { path }),
        }
    }
    Ok(slots)
}

fn render_level(slots: &[SlotSpec]) -> Map<String, Value> {
    let mut map = Map::new();
    for slot in slots {
        let value = if slot.is_leaf() {
            Value::String(slot.description.clone())
        } else {
            Value::Object(render_level(&slot.children))
        };
        map.insert(slot.identifier.clone(), value);
    }
    map
}

fn collect_leaf_paths(slots: &[SlotSpec], prefix: &str, out: &mut Vec<String>) {
    for slot in slots {
        let path = format!("{prefix}/{}", slot.identifier);
        if slot.is_leaf() {
            out.push(path);
        } else {
            collect_leaf_paths(&slot.children, &path, out);
        }
    }
}
