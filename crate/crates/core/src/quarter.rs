//! Calendar quarters, the time axis of every count series.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuarterError {
    #[error("invalid quarter `{0}`: expected YYYYQn with n in 1..=4")]
    Syntax(String),
    #[error("quarter index {0} out of range 1..=4")]
    Index(u8),
    #[error("quarter range is empty: {from} is after {to}")]
    EmptyRange { from: Quarter, to: Quarter },
}

/// A calendar quarter. Ordering is chronological.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    year: u16,
    q: u8,
}

impl Quarter {
    pub fn new(year: u16, q: u8) -> Result<Self, QuarterError> {
        if !(1..=4).contains(&q) {
            return Err(QuarterError::Index(q));
        }
        Ok(Quarter { year, q })
    }

    pub fn year(self) -> u16 {
        self.year
    }

    /// Quarter index, 1 through 4.
    pub fn q(self) -> u8 {
        self.q
    }

    pub fn next(self) -> Quarter {
        if self.q == 4 {
            Quarter { year: self.year + 1, q: 1 }
        } else {
            Quarter { year: self.year, q: self.q + 1 }
        }
    }

    /// Chronological position, useful for arithmetic between quarters.
    pub fn ordinal(self) -> u32 {
        u32::from(self.year) * 4 + u32::from(self.q - 1)
    }

    /// The `yyQq` suffix used in FDA extract file names, e.g. `04Q1`.
    pub fn file_tag(self) -> String {
        format!("{:02}Q{}", self.year % 100, self.q)
    }

    /// Parses a `yyQq` file tag. Two-digit years map into 2000..=2099.
    pub fn from_file_tag(tag: &str) -> Result<Self, QuarterError> {
        let bytes = tag.as_bytes();
        if bytes.len() != 4
            || !bytes[0].is_ascii_digit()
            || !bytes[1].is_ascii_digit()
            || !bytes[2].eq_ignore_ascii_case(&b'q')
            || !bytes[3].is_ascii_digit()
        {
            return Err(QuarterError::Syntax(tag.to_string()));
        }
        let yy = u16::from(bytes[0] - b'0') * 10 + u16::from(bytes[1] - b'0');
        Quarter::new(2000 + yy, bytes[3] - b'0')
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = QuarterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (year, q) = s.split_once(['Q', 'q']).ok_or_else(|| QuarterError::Syntax(s.to_string()))?;
        if year.len() != 4 || q.len() != 1 {
            return Err(QuarterError::Syntax(s.to_string()));
        }
        let year: u16 = year.parse().map_err(|_| QuarterError::Syntax(s.to_string()))?;
        let q: u8 = q.parse().map_err(|_| QuarterError::Syntax(s.to_string()))?;
        Quarter::new(year, q).map_err(|_| QuarterError::Syntax(s.to_string()))
    }
}

impl Serialize for Quarter {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An inclusive span of quarters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuarterRange {
    pub from: Quarter,
    pub to: Quarter,
}

impl QuarterRange {
    pub fn new(from: Quarter, to: Quarter) -> Result<Self, QuarterError> {
        if from > to {
            return Err(QuarterError::EmptyRange { from, to });
        }
        Ok(QuarterRange { from, to })
    }

    pub fn contains(&self, q: Quarter) -> bool {
        self.from <= q && q <= self.to
    }

    pub fn len(&self) -> usize {
        (self.to.ordinal() - self.from.ordinal()) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = Quarter> {
        let to = self.to;
        std::iter::successors(Some(self.from), move |q| {
            let n = q.next();
            (n <= to).then_some(n)
        })
    }
}

impl fmt::Display for QuarterRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.from, self.to)
    }
}
