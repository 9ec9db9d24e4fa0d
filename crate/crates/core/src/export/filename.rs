use thiserror::Error;

/// What a target file system accepts in a single path component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OsFilenameRules {
    pub forbidden: Vec<char>,
    pub forbid_control: bool,
    pub forbid_trailing_dot_space: bool,
    /// In bytes.
    pub max_len: usize,
    /// Matched case-insensitively against the part before the first dot.
    pub reserved: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilenameError {
    #[error("file name is empty")]
    Empty,
    #[error("character {0:?} is not allowed in file names")]
    ForbiddenChar(char),
    #[error("file name is {len} bytes, the limit is {max}")]
    TooLong { len: usize, max: usize },
    #[error("{0:?} is a reserved device name")]
    ReservedName(String),
}

impl OsFilenameRules {
    pub fn windows() -> Self {
        let mut reserved: Vec<String> = ["CON", "PRN", "AUX", "NUL"].iter().map(|s| s.to_string()).collect();
        for i in 1..=9 {
            reserved.push(format!("COM{i}"));
            reserved.push(format!("LPT{i}"));
        }
        OsFilenameRules {
            forbidden: vec!['\\', '/', '|', ':', '*', '?', '"', '<', '>'],
            forbid_control: true,
            forbid_trailing_dot_space: true,
            max_len: 255,
            reserved,
        }
    }

    pub fn posix() -> Self {
        OsFilenameRules {
            forbidden: vec!['/', '\0'],
            forbid_control: false,
            forbid_trailing_dot_space: false,
            max_len: 255,
            reserved: Vec::new(),
        }
    }

    /// Rules for the operating system this binary runs on.
    pub fn host() -> Self {
        if cfg!(windows) { Self::windows() } else { Self::posix() }
    }
}

pub fn validate_filename(name: &str, rules: &OsFilenameRules) -> Result<(), FilenameError> {
    if name.is_empty() || name == "." || name == ".." {
        return Err(FilenameError::Empty);
    }
    if let Some(c) = name.chars().find(|c| rules.forbidden.contains(c) || (rules.forbid_control && c.is_control())) {
        return Err(FilenameError::ForbiddenChar(c));
    }
    if rules.forbid_trailing_dot_space {
        if let Some(c) = name.chars().last().filter(|c| *c == '.' || *c == ' ') {
            return Err(FilenameError::ForbiddenChar(c));
        }
    }
    if name.len() > rules.max_len {
        return Err(FilenameError::TooLong { len: name.len(), max: rules.max_len });
    }
    let stem = name.split('.').next().unwrap_or(name).trim_end();
    if rules.reserved.iter().any(|r| r.eq_ignore_ascii_case(stem)) {
        return Err(FilenameError::ReservedName(stem.to_string()));
    }
    Ok(())
}
