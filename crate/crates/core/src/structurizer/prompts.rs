//! Single-shot prompt templates, stored as text assets.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::schema::CategoryKey;
use crate::cohort::{DocSlot, PatientRecord};
use crate::error::{Error, Result};

pub const INSTRUCTION_BLOCK: &str = "Strictly follow the format of the example provided.";
pub const NOT_AVAILABLE: &str = "Not available";
const EXAMPLE_INTRO: &str = "The following is an example of the response.\n";

const BUILTIN: [(CategoryKey, &str); 7] = [
    (CategoryKey::GeneralCondition, include_str!("../../assets/prompts/general_condition.txt")),
    (CategoryKey::Pathology, include_str!("../../assets/prompts/pathology.txt")),
    (CategoryKey::DiseaseExtent, include_str!("../../assets/prompts/disease_extent.txt")),
    (CategoryKey::DiseaseControl, include_str!("../../assets/prompts/disease_control.txt")),
    (CategoryKey::RtAim, include_str!("../../assets/prompts/RT_aim.txt")),
    (CategoryKey::ReRt, include_str!("../../assets/prompts/re_RT.txt")),
    (CategoryKey::Emergency, include_str!("../../assets/prompts/emergency.txt")),
];

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Slot(DocSlot),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub key: CategoryKey,
    pub body: String,
    pub example_response: String,
    pieces: Vec<Piece>,
}

/// A placeholder is `{` identifier `}`. Braces around anything else (the
/// example response, for instance) are literal text.
fn scan(body: &str) -> Result<Vec<Piece>> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let ident_len = after
            .char_indices()
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
            .map_or(after.len(), |(i, _)| i);
        if ident_len > 0 && after[ident_len..].starts_with('}') {
            let name = &after[..ident_len];
            let slot = DocSlot::from_name(name)
                .ok_or_else(|| Error::Template(format!("unknown placeholder {{{name}}}")))?;
            text.push_str(&rest[..open]);
            if !text.is_empty() {
                pieces.push(Piece::Text(std::mem::take(&mut text)));
            }
            pieces.push(Piece::Slot(slot));
            rest = &after[ident_len + 1..];
        } else {
            text.push_str(&rest[..=open]);
            rest = after;
        }
    }
    text.push_str(rest);
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    Ok(pieces)
}

impl PromptTemplate {
    pub fn new(key: CategoryKey, body: impl Into<String>) -> Result<Self> {
        let body: String = body.into();
        let pieces = scan(&body)?;
        let last_paragraph = body.trim_end().rsplit("\n\n").next().unwrap_or("");
        if !last_paragraph.starts_with(INSTRUCTION_BLOCK) {
            return Err(Error::Template(format!("{key}: body must end with the instruction block")));
        }
        let example_response = body
            .split_once(EXAMPLE_INTRO)
            .and_then(|(_, tail)| tail.split("\n\n").next())
            .map(str::to_string)
            .ok_or_else(|| Error::Template(format!("{key}: no example response")))?;
        if !example_response.contains(&format!("\"{key}=")) {
            return Err(Error::Template(format!("{key}: example response does not use the key")));
        }
        Ok(PromptTemplate {
            key,
            body,
            example_response,
            pieces,
        })
    }

    pub fn slots(&self) -> Vec<DocSlot> {
        let mut out = Vec::new();
        for p in &self.pieces {
            if let Piece::Slot(s) = p {
                if !out.contains(s) {
                    out.push(*s);
                }
            }
        }
        out
    }

    /// Substitutes document text; empty slots read "Not available".
    pub fn render(&self, record: &PatientRecord) -> String {
        let mut out = String::with_capacity(self.body.len() + 1024);
        for p in &self.pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(s) => out.push_str(record.document(*s).unwrap_or(NOT_AVAILABLE)),
            }
        }
        out
    }

    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.body.as_bytes()))
    }
}

pub fn render_prompt(template: &PromptTemplate, record: &PatientRecord) -> String {
    template.render(record)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    templates: BTreeMap<CategoryKey, PromptTemplate>,
}

impl PromptSet {
    /// The seven templates compiled into the crate.
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(k, body)| (*k, PromptTemplate::new(*k, *body).expect("builtin prompt is valid")))
            .collect();
        PromptSet { templates }
    }

    /// Loads `<key>.txt` for every category from `dir`. Checksums that
    /// differ from the builtin assets are logged.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let builtin = PromptSet::builtin();
        let mut templates = BTreeMap::new();
        for key in CategoryKey::ALL {
            let path = dir.join(format!("{key}.txt"));
            let body = std::fs::read_to_string(&path)?;
            let t = PromptTemplate::new(key, body)?;
            if t.checksum() != builtin.get(key).checksum() {
                log::warn!("prompt {key} differs from the builtin asset (sha256 {})", t.checksum());
            }
            templates.insert(key, t);
        }
        Ok(PromptSet { templates })
    }

    pub fn get(&self, key: CategoryKey) -> &PromptTemplate {
        &self.templates[&key]
    }

    pub fn checksums(&self) -> BTreeMap<CategoryKey, String> {
        self.templates.iter().map(|(k, t)| (*k, t.checksum())).collect()
    }

    /// Digest over all seven template checksums.
    pub fn combined_checksum(&self) -> String {
        let mut h = Sha256::new();
        for (k, c) in self.checksums() {
            h.update(k.as_str().as_bytes());
            h.update(c.as_bytes());
        }
        hex::encode(h.finalize())
    }
}
