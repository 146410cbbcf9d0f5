use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;

use super::PromptError;

static TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("token regex"));

/// Matches any `{identifier}` left in rendered text.
pub fn find_placeholder(text: &str) -> Option<&str> {
    TOKEN.captures(text).map(|c| c.get(1).expect("group").as_str())
}

/// A value bound to a template token.
#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    Required(String),
    /// Absent or blank values remove the surrounding block: the line when it
    /// is a list item, otherwise the whole blank-line-delimited paragraph.
    Optional(Option<String>),
}

impl Slot {
    fn value(&self) -> Option<&str> {
        match self {
            Slot::Required(v) => Some(v.as_str()),
            Slot::Optional(v) => v.as_deref(),
        }
        .filter(|v| !v.trim().is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    name: &'static str,
    text: &'static str,
}

macro_rules! asset {
    ($name:literal) => {
        Template {
            name: $name,
            text: include_str!(concat!("../../templates/", $name, ".txt")),
        }
    };
}

pub const THERAPY_SYSTEM: Template = asset!("therapy_system");
pub const THERAPY_HUMAN: Template = asset!("therapy_human");
pub const CRITIC_SYSTEM: Template = asset!("critic_system");
pub const CRITIC_HUMAN: Template = asset!("critic_human");
pub const REFINE_SYSTEM: Template = asset!("refine_system");
pub const REFINE_HUMAN: Template = asset!("refine_human");
pub const HUMAN_REVISION: Template = asset!("human_revision");

pub const ALL: [Template; 7] = [
    THERAPY_SYSTEM,
    THERAPY_HUMAN,
    CRITIC_SYSTEM,
    CRITIC_HUMAN,
    REFINE_SYSTEM,
    REFINE_HUMAN,
    HUMAN_REVISION,
];

impl Template {
    pub fn name(&self) -> &'static str {
        self.name
    }

    /// Template body without the trailing newline of the asset file.
    pub fn text(&self) -> &'static str {
        self.text.trim_end_matches('\n')
    }

    /// Token names in order of appearance.
    pub fn tokens(&self) -> Vec<&'static str> {
        TOKEN
            .captures_iter(self.text())
            .map(|c| c.get(1).expect("group").as_str())
            .collect()
    }

    /// Single-pass substitution. Substituted values are never rescanned.
    pub fn render(&self, slots: &[(&str, Slot)]) -> Result<String, PromptError> {
        let slots: HashMap<&str, &Slot> = slots.iter().map(|(k, v)| (*k, v)).collect();
        for name in self.tokens() {
            match slots.get(name) {
                Some(Slot::Optional(_)) => {}
                Some(s) if s.value().is_some() => {}
                _ => return Err(PromptError::MissingContext(name.to_owned())),
            }
        }
        let absent = |line: &str| {
            TOKEN.captures_iter(line).any(|c| slots[&c[1]].value().is_none())
        };

        let mut paragraphs = Vec::new();
        'para: for para in self.text().split("\n\n") {
            let mut kept = Vec::new();
            for line in para.lines() {
                if absent(line) {
                    if line.trim_start().starts_with("- ") {
                        continue;
                    }
                    continue 'para;
                }
                let out = TOKEN.replace_all(line, |c: &regex::Captures<'_>| {
                    slots[&c[1]].value().expect("checked").to_owned()
                });
                kept.push(out.into_owned());
            }
            if !kept.is_empty() {
                paragraphs.push(kept.join("\n"));
            }
        }
        Ok(paragraphs.join("\n\n"))
    }
}
