//! Memory states and structural validation against a template.
//!
//! Validation never fails as an operation: structural problems come back as
//! path-addressed violations so callers can decide what to do with them.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::template::{MemoryTemplate, SlotSpec};

/// An agent's memory contents at some point in the conversation.
///
/// `turn_index` counts this agent's updates: the initial memory is 0 and each
/// update adds exactly 1, whether or not the update was accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryState {
    pub template_id: String,
    pub turn_index: u64,
    pub content: Map<String, Value>,
}

impl MemoryState {
    /// Compact JSON of the content alone, in template slot order.
    pub fn content_json(&self) -> String {
        serde_json::to_string(&Value::Object(self.content.clone()))
            .expect("memory content serialization")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Template slot with no matching key in the state.
    Missing,
    /// State key that no template slot allows.
    Extra,
    /// Leaf slot holding something other than a string.
    NonString,
    /// Branch slot holding something other than an object.
    NonMap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that `state.content` mirrors the template's slot tree exactly:
/// no extra keys, no missing keys, strings at leaves, objects at branches.
pub fn validate_state(state: &MemoryState, template: &MemoryTemplate) -> ValidationResult {
    validate_content(&state.content, template)
}

/// Content-level variant of [`validate_state`] for callers holding a bare map
/// (e.g. a freshly parsed update response).
pub fn validate_content(content: &Map<String, Value>, template: &MemoryTemplate) -> ValidationResult {
    let mut violations = Vec::new();
    validate_level(content, template.slots(), "", &mut violations);
    ValidationResult { violations }
}

fn validate_level(
    map: &Map<String, Value>,
    slots: &[SlotSpec],
    prefix: &str,
    violations: &mut Vec<Violation>,
) {
    for slot in slots {
        let path = format!("{prefix}/{}", slot.identifier);
        match map.get(&slot.identifier) {
            None => violations.push(Violation {
                path,
                kind: ViolationKind::Missing,
            }),
            Some(value) => {
                if slot.is_leaf() {
                    if !value.is_string() {
                        violations.push(Violation {
                            path,
                            kind: ViolationKind::NonString,
                        });
                    }
                } else {
                    match value.as_object() {
                        Some(child_map) => {
                            validate_level(child_map, &slot.children, &path, violations)
                        }
                        None => violations.push(Violation {
                            path,
                            kind: ViolationKind::NonMap,
                        }),
                    }
                }
            }
        }
    }
    for key in map.keys() {
        if !slots.iter().any(|s| &s.identifier == key) {
            violations.push(Violation {
                path: format!("{prefix}/{key}"),
                kind: ViolationKind::Extra,
            });
        }
    }
}

/// The all-empty starting memory for a template: every leaf is `""`,
/// `turn_index` is 0.
pub fn initial_memory(template: &MemoryTemplate) -> MemoryState {
    MemoryState {
        template_id: template.id().to_string(),
        turn_index: 0,
        content: empty_level(template.slots()),
    }
}

fn empty_level(slots: &[SlotSpec]) -> Map<String, Value> {
    let mut map = Map::new();
    for slot in slots {
        let value = if slot.is_leaf() {
            Value::String(String::new())
        } else {
            Value::Object(empty_level(&slot.children))
        };
        map.insert(slot.identifier.clone(), value);
    }
    map
}

/// Reorders `content` (already known to validate) into template slot order.
/// A pure key reordering: values are untouched. Keeps snapshots and prompts
/// stable when an update response lists keys in a different order.
pub fn normalize_order(content: &Map<String, Value>, template: &MemoryTemplate) -> Map<String, Value> {
    normalize_level(content, template.slots())
}

fn normalize_level(map: &Map<String, Value>, slots: &[SlotSpec]) -> Map<String, Value> {
    let mut out = Map::new();
    for slot in slots {
        if let Some(value) = map.get(&slot.identifier) {
            let value = if slot.is_leaf() {
                value.clone()
            } else {
                match value.as_object() {
                    Some(child) => Value::Object(normalize_level(child, &slot.children)),
                    None => value.clone(),
                }
            };
            out.insert(slot.identifier.clone(), value);
        }
    }
    out
}
