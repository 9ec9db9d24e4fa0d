use std::fmt;

use thiserror::Error;

/// Values available to a name template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateVars<'a> {
    /// Entry id.
    pub name: &'a str,
    /// 1-based queue position.
    pub index: usize,
    /// Export date, `YYYY-MM-DD`.
    pub date: &'a str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Name,
    Index,
    Date,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Var(Var),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unknown template variable {{{0}}}")]
    UnknownVariable(String),
    #[error("unbalanced brace at byte {0}")]
    UnbalancedBrace(usize),
}

/// A file name pattern such as `{name}-{date}.png`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameTemplate {
    raw: String,
    segments: Vec<Segment>,
}

impl NameTemplate {
    pub fn parse(raw: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut rest = raw;
        let mut offset = 0;
        while !rest.is_empty() {
            match rest.find(['{', '}']) {
                None => {
                    segments.push(Segment::Literal(rest.to_string()));
                    break;
                }
                Some(i) if rest.as_bytes()[i] == b'}' => return Err(TemplateError::UnbalancedBrace(offset + i)),
                Some(i) => {
                    if i > 0 {
                        segments.push(Segment::Literal(rest[..i].to_string()));
                    }
                    let after = &rest[i + 1..];
                    let close = after.find('}').ok_or(TemplateError::UnbalancedBrace(offset + i))?;
                    let name = &after[..close];
                    if name.contains('{') {
                        return Err(TemplateError::UnbalancedBrace(offset + i));
                    }
                    let var = match name {
                        "name" => Var::Name,
                        "index" => Var::Index,
                        "date" => Var::Date,
                        other => return Err(TemplateError::UnknownVariable(other.to_string())),
                    };
                    segments.push(Segment::Var(var));
                    let consumed = i + 1 + close + 1;
                    offset += consumed;
                    rest = &rest[consumed..];
                }
            }
        }
        Ok(NameTemplate { raw: raw.to_string(), segments })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    /// Substituted values are inserted verbatim and never re-scanned.
    pub fn substitute(&self, vars: &TemplateVars<'_>) -> String {
        let mut out = String::with_capacity(self.raw.len() + vars.name.len());
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Var(Var::Name) => out.push_str(vars.name),
                Segment::Var(Var::Index) => out.push_str(&vars.index.to_string()),
                Segment::Var(Var::Date) => out.push_str(vars.date),
            }
        }
        out
    }
}

impl Default for NameTemplate {
    fn default() -> Self {
        NameTemplate::parse("{name}.png").expect("default template parses")
    }
}

impl fmt::Display for NameTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl serde::Serialize for NameTemplate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.raw)
    }
}

impl<'de> serde::Deserialize<'de> for NameTemplate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = <String as serde::Deserialize>::deserialize(d)?;
        NameTemplate::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// Parses and substitutes in one step.
pub fn substitute_name_template(raw: &str, vars: &TemplateVars<'_>) -> Result<String, TemplateError> {
    Ok(NameTemplate::parse(raw)?.substitute(vars))
}
