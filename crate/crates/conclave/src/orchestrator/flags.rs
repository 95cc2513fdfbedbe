//! Flag scanning and consensus detection.
//!
//! ACCEPT is matched as a case-sensitive whole token so prose like
//! "acceptance" never counts. The finalize marker is matched as the substring
//! "FINALIZE" or "FINALIZATION" — configurations in the wild use both
//! spellings and they are not substrings of each other.

use crate::transcript::{Flag, Transcript};

/// Scans an output for control flags. Deterministic pure function of the text.
pub fn detect_flags(output_text: &str) -> Vec<Flag> {
    let mut flags = Vec::new();
    if contains_token(output_text, "ACCEPT") {
        flags.push(Flag::Accept);
    }
    if output_text.contains("FINALIZE") || output_text.contains("FINALIZATION") {
        flags.push(Flag::Finalize);
    }
    flags
}

/// Whole-token containment: `needle` present with no word character
/// (alphanumeric or `_`) on either side.
fn contains_token(haystack: &str, needle: &str) -> bool {
    let bytes = haystack.as_bytes();
    let mut start = 0;
    while let Some(pos) = haystack[start..].find(needle) {
        let begin = start + pos;
        let end = begin + needle.len();
        let left_ok = begin == 0 || !is_word_byte(bytes[begin - 1]);
        let right_ok = end == bytes.len() || !is_word_byte(bytes[end]);
        if left_ok && right_ok {
            return true;
        }
        start = begin + 1;
    }
    false
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// True when every worker has spoken and each worker's most recent turn
/// carries ACCEPT. Acceptance of a superseded proposal does not count: only
/// the latest turn per worker governs.
pub fn consensus_reached(transcript: &Transcript, workers: &[String]) -> bool {
    workers.iter().all(|worker| {
        transcript
            .turns()
            .iter()
            .rev()
            .find(|t| &t.speaker == worker)
            .map(|t| t.flags.contains(&Flag::Accept))
            .unwrap_or(false)
    })
}
