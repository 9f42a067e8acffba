//! Minimal line-oriented record format shared by instance dumps, matching
//! graph dumps and oracle witnesses.
//!
//! Each non-empty line is `keyword [positional ...] [key=value ...]`; text
//! after `#` is a comment. Floats are written with Rust's shortest
//! round-trip representation so dumps reload bit-exactly.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub line: usize,
    pub keyword: String,
    pub positional: Vec<String>,
    pub named: BTreeMap<String, String>,
}

impl Record {
    pub fn pos<T: FromStr>(&self, idx: usize) -> Result<T> {
        let raw = self.positional.get(idx).ok_or_else(|| Error::Parse {
            line: self.line,
            reason: format!("`{}` needs positional argument {}", self.keyword, idx + 1),
        })?;
        raw.parse().map_err(|_| Error::Parse {
            line: self.line,
            reason: format!("bad value `{raw}`"),
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.named.get(key).ok_or_else(|| Error::Parse {
            line: self.line,
            reason: format!("`{}` is missing `{key}=`", self.keyword),
        })?;
        raw.parse().map_err(|_| Error::Parse {
            line: self.line,
            reason: format!("bad value for `{key}`: `{raw}`"),
        })
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        if self.named.contains_key(key) {
            self.get(key)
        } else {
            Ok(default)
        }
    }
}

pub fn parse(text: &str) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let keyword = tokens.next().unwrap_or_default().to_string();
        let mut positional = Vec::new();
        let mut named = BTreeMap::new();
        for tok in tokens {
            match tok.split_once('=') {
                Some((k, v)) => {
                    if named.insert(k.to_string(), v.to_string()).is_some() {
                        return Err(Error::Parse {
                            line: n + 1,
                            reason: format!("duplicate key `{k}`"),
                        });
                    }
                }
                None => positional.push(tok.to_string()),
            }
        }
        out.push(Record {
            line: n + 1,
            keyword,
            positional,
            named,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records_and_comments() {
        let recs = parse("# header\nedge 0 1 cost=2.5 weight=1  # trailing\n\nnote x\n").unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].keyword, "edge");
        assert_eq!(recs[0].pos::<usize>(1).unwrap(), 1);
        assert_eq!(recs[0].get::<f64>("cost").unwrap(), 2.5);
        assert_eq!(recs[0].line, 2);
        assert!(recs[1].get::<f64>("cost").is_err());
    }

    #[test]
    fn rejects_duplicate_keys() {
        assert!(parse("a k=1 k=2").is_err());
    }
}
