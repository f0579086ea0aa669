//! Line-oriented `key = value` text with one level of `[section]` headers.
//!
//! Used for run configs and device library files. `#` and `;` start a comment
//! (whole line or trailing). Keys before the first header belong to the root
//! section, whose name is the empty string. Section and key order is kept.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IniError {
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for IniError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.msg)
        } else {
            write!(f, "line {}: {}", self.line, self.msg)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    #[cfg(test)]
    pub fn raw(&self, key: &str) -> Option<&str> {
        self.get(key).map(|e| e.value.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&Entry, IniError> {
        self.get(key).ok_or_else(|| IniError {
            line: self.line,
            msg: format!("missing key `{key}` in [{}]", self.name),
        })
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, IniError> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => e.parse().map(Some),
        }
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, IniError> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    /// Fails on any key not in `known`.
    pub fn deny_unknown(&self, known: &[&str]) -> Result<(), IniError> {
        match self.entries.iter().find(|e| !known.contains(&e.key.as_str())) {
            Some(e) => Err(IniError {
                line: e.line,
                msg: format!("unknown key `{}` in [{}]", e.key, self.name),
            }),
            None => Ok(()),
        }
    }
}

impl Entry {
    pub fn err(&self, msg: impl Into<String>) -> IniError {
        IniError {
            line: self.line,
            msg: format!("`{}`: {}", self.key, msg.into()),
        }
    }

    pub fn parse<T: FromStr>(&self) -> Result<T, IniError> {
        self.value
            .parse()
            .map_err(|_| self.err(format!("cannot parse `{}`", self.value)))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn list(&self) -> Vec<&str> {
        self.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect()
    }

    pub fn parse_list<T: FromStr>(&self) -> Result<Vec<T>, IniError> {
        self.list()
            .into_iter()
            .map(|s| s.parse().map_err(|_| self.err(format!("cannot parse `{s}`"))))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, IniError> {
        let mut sections = vec![Section {
            name: String::new(),
            line: 0,
            entries: Vec::new(),
        }];
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw_line).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| IniError {
                    line: line_no,
                    msg: "unterminated section header".into(),
                })?;
                let name = name.trim();
                if name.is_empty() {
                    return Err(IniError {
                        line: line_no,
                        msg: "empty section name".into(),
                    });
                }
                if sections.iter().any(|s| s.name == name) {
                    return Err(IniError {
                        line: line_no,
                        msg: format!("duplicate section [{name}]"),
                    });
                }
                sections.push(Section {
                    name: name.to_string(),
                    line: line_no,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| IniError {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(IniError {
                    line: line_no,
                    msg: "empty key".into(),
                });
            }
            let section = sections.last_mut().expect("root section always present");
            if section.get(key).is_some() {
                return Err(IniError {
                    line: line_no,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            section.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line: line_no,
            });
        }
        Ok(Self { sections })
    }

    pub fn root(&self) -> &Section {
        &self.sections[0]
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn require_section(&self, name: &str) -> Result<&Section, IniError> {
        self.section(name).ok_or_else(|| IniError {
            line: 0,
            msg: format!("missing section [{name}]"),
        })
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(pos) => &line[..pos],
        None => line,
    }
}
