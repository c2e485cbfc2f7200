//! Canonical domain names and calendar months.

use std::borrow::Borrow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("empty host in {0:?}")]
    Empty(String),
    #[error("invalid host {0:?}")]
    Invalid(String),
    #[error("malformed month {0:?}, expected YYYY-MM")]
    Month(String),
}

/// A canonical host name: lowercase, no scheme, port, path or trailing dot.
///
/// Subdomains are kept as-is, so `news.google.com` and `www.google.com` are
/// distinct domains.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Domain(String);

impl Domain {
    /// Canonicalizes a raw referrer or target value.
    ///
    /// Accepts bare hosts as well as URLs (`https://www.RT.com:443/path?q`).
    pub fn parse(raw: &str) -> Result<Self, DomainError> {
        let mut s = raw.trim();
        if let Some(idx) = s.find("://") {
            s = &s[idx + 3..];
        } else if let Some(rest) = s.strip_prefix("//") {
            s = rest;
        }
        let end = s.find(['/', '?', '#']).unwrap_or(s.len());
        s = &s[..end];
        if let Some(at) = s.rfind('@') {
            s = &s[at + 1..];
        }
        if let Some(colon) = s.rfind(':') {
            let port = &s[colon + 1..];
            if port.chars().all(|c| c.is_ascii_digit()) {
                s = &s[..colon];
            } else {
                return Err(DomainError::Invalid(raw.to_string()));
            }
        }
        let s = s.strip_suffix('.').unwrap_or(s);
        if s.is_empty() {
            return Err(DomainError::Empty(raw.to_string()));
        }
        let host = s.to_lowercase();
        let valid = host
            .split('.')
            .all(|label| !label.is_empty() && label.chars().all(is_host_char));
        if !valid {
            return Err(DomainError::Invalid(raw.to_string()));
        }
        Ok(Domain(host))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

fn is_host_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '_'
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Domain {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::parse(s)
    }
}

impl Borrow<str> for Domain {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for Domain {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl Serialize for Domain {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Domain::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// A calendar month, formatted `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: u16,
    month: u8,
}

impl Month {
    pub fn new(year: u16, month: u8) -> Result<Self, DomainError> {
        if !(1..=12).contains(&month) || year == 0 || year > 9999 {
            return Err(DomainError::Month(format!("{year}-{month}")));
        }
        Ok(Month { year, month })
    }

    pub fn year(&self) -> u16 {
        self.year
    }

    pub fn month(&self) -> u8 {
        self.month
    }

    /// The month after this one.
    pub fn succ(&self) -> Month {
        if self.month == 12 {
            Month { year: self.year + 1, month: 1 }
        } else {
            Month { year: self.year, month: self.month + 1 }
        }
    }

    /// Buckets a timestamp (`2022-10-03T12:00:00Z`, `2022-10-03 12:00:00`
    /// or `2022-10-03`) to its month.
    pub fn from_timestamp(raw: &str) -> Result<Self, DomainError> {
        use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime};
        let raw = raw.trim();
        let date = if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
            dt.naive_utc().date()
        } else if let Ok(dt) = NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S") {
            dt.date()
        } else if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
            d
        } else {
            return Err(DomainError::Month(raw.to_string()));
        };
        Month::new(date.year() as u16, date.month() as u8)
    }
}

impl FromStr for Month {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || DomainError::Month(s.to_string());
        let s = s.trim();
        let (y, m) = s.split_once('-').ok_or_else(err)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(err());
        }
        let year: u16 = y.parse().map_err(|_| err())?;
        let month: u8 = m.parse().map_err(|_| err())?;
        Month::new(year, month).map_err(|_| err())
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}
