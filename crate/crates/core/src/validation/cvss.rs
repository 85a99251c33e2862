//! CVSS v3.1 base-score calculator and Stage-C severity recalibration.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CvssError {
    #[error("malformed vector: {0}")]
    MalformedVector(String),
    #[error("stored score {stored} does not match recomputed {computed} for {vector}")]
    ScoreMismatch {
        vector: String,
        stored: String,
        computed: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BaseMetrics {
    pub av: u8,
    pub ac: u8,
    pub pr: u8,
    pub ui: u8,
    pub scope_changed: bool,
    pub c: u8,
    pub i: u8,
    pub a: u8,
}

const AV: [(char, f64); 4] = [('N', 0.85), ('A', 0.62), ('L', 0.55), ('P', 0.2)];
const AC: [(char, f64); 2] = [('L', 0.77), ('H', 0.44)];
const PR: [char; 3] = ['N', 'L', 'H'];
const UI: [(char, f64); 2] = [('N', 0.85), ('R', 0.62)];
const CIA: [(char, f64); 3] = [('H', 0.56), ('L', 0.22), ('N', 0.0)];

fn index_of(table: &[char], value: &str, metric: &str) -> Result<u8, CvssError> {
    let mut chars = value.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => table
            .iter()
            .position(|t| *t == c)
            .map(|p| p as u8)
            .ok_or_else(|| CvssError::MalformedVector(format!("{metric}:{value}"))),
        _ => Err(CvssError::MalformedVector(format!("{metric}:{value}"))),
    }
}

fn keys<const N: usize>(table: &[(char, f64); N]) -> Vec<char> {
    table.iter().map(|(c, _)| *c).collect()
}

impl BaseMetrics {
    /// Parse a base vector, with or without the `CVSS:3.1/` prefix. All eight
    /// base metrics must appear exactly once.
    pub fn parse(vector: &str) -> Result<Self, CvssError> {
        let body = vector.trim();
        let body = match body.strip_prefix("CVSS:") {
            Some(rest) => rest
                .strip_prefix("3.1/")
                .ok_or_else(|| CvssError::MalformedVector(format!("unsupported version in {vector}")))?,
            None => body,
        };
        let mut slots: [Option<u8>; 8] = [None; 8];
        for part in body.split('/') {
            let (metric, value) = part
                .split_once(':')
                .ok_or_else(|| CvssError::MalformedVector(format!("bad component {part:?}")))?;
            let (slot, idx) = match metric {
                "AV" => (0, index_of(&keys(&AV), value, metric)?),
                "AC" => (1, index_of(&keys(&AC), value, metric)?),
                "PR" => (2, index_of(&PR, value, metric)?),
                "UI" => (3, index_of(&keys(&UI), value, metric)?),
                "S" => (4, index_of(&['U', 'C'], value, metric)?),
                "C" => (5, index_of(&keys(&CIA), value, metric)?),
                "I" => (6, index_of(&keys(&CIA), value, metric)?),
                "A" => (7, index_of(&keys(&CIA), value, metric)?),
                _ => return Err(CvssError::MalformedVector(format!("unknown metric {metric}"))),
            };
            if slots[slot].replace(idx).is_some() {
                return Err(CvssError::MalformedVector(format!("duplicate metric {metric}")));
            }
        }
        let mut vals = [0u8; 8];
        for (n, slot) in slots.iter().enumerate() {
            vals[n] = slot.ok_or_else(|| CvssError::MalformedVector(format!("missing metric in {vector}")))?;
        }
        Ok(Self {
            av: vals[0],
            ac: vals[1],
            pr: vals[2],
            ui: vals[3],
            scope_changed: vals[4] == 1,
            c: vals[5],
            i: vals[6],
            a: vals[7],
        })
    }

    pub fn canonical(&self) -> String {
        format!(
            "CVSS:3.1/AV:{}/AC:{}/PR:{}/UI:{}/S:{}/C:{}/I:{}/A:{}",
            AV[self.av as usize].0,
            AC[self.ac as usize].0,
            PR[self.pr as usize],
            UI[self.ui as usize].0,
            if self.scope_changed { 'C' } else { 'U' },
            CIA[self.c as usize].0,
            CIA[self.i as usize].0,
            CIA[self.a as usize].0,
        )
    }

    /// Base score in tenths (0..=100).
    pub fn score_tenths(&self) -> u32 {
        let pr = match (self.pr, self.scope_changed) {
            (0, _) => 0.85,
            (1, false) => 0.62,
            (1, true) => 0.68,
            (_, false) => 0.27,
            (_, true) => 0.5,
        };
        let iss = 1.0
            - (1.0 - CIA[self.c as usize].1)
                * (1.0 - CIA[self.i as usize].1)
                * (1.0 - CIA[self.a as usize].1);
        let impact = if self.scope_changed {
            7.52 * (iss - 0.029) - 3.25 * (iss - 0.02f64).powi(15)
        } else {
            6.42 * iss
        };
        if impact <= 0.0 {
            return 0;
        }
        let exploitability =
            8.22 * AV[self.av as usize].1 * AC[self.ac as usize].1 * pr * UI[self.ui as usize].1;
        let raw = if self.scope_changed {
            (1.08 * (impact + exploitability)).min(10.0)
        } else {
            (impact + exploitability).min(10.0)
        };
        roundup_tenths(raw)
    }

    /// Every one of the 2592 base vectors, in a fixed order.
    pub fn all() -> impl Iterator<Item = BaseMetrics> {
        (0..2592u32).map(|mut n| {
            let mut take = |radix: u32| {
                let v = (n % radix) as u8;
                n /= radix;
                v
            };
            let a = take(3);
            let i = take(3);
            let c = take(3);
            let s = take(2);
            let ui = take(2);
            let pr = take(3);
            let ac = take(2);
            let av = take(4);
            BaseMetrics {
                av,
                ac,
                pr,
                ui,
                scope_changed: s == 1,
                c,
                i,
                a,
            }
        })
    }
}

/// CVSS v3.1 Roundup: smallest one-decimal value >= input, computed on
/// integers to sidestep floating-point artifacts such as 4.000000001.
fn roundup_tenths(x: f64) -> u32 {
    let int_input = (x * 100_000.0).round() as u64;
    if int_input.is_multiple_of(10_000) {
        (int_input / 10_000) as u32
    } else {
        (int_input / 10_000 + 1) as u32
    }
}

pub fn format_tenths(tenths: u32) -> String {
    format!("{}.{}", tenths / 10, tenths % 10)
}

pub fn cvss_base_score(vector: &str) -> Result<f64, CvssError> {
    Ok(BaseMetrics::parse(vector)?.score_tenths() as f64 / 10.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityVector {
    pub version: String,
    pub vector: String,
    /// One-decimal score kept as text so stored records stay bit-exact.
    pub score: String,
}

impl SeverityVector {
    pub fn from_vector(vector: &str) -> Result<Self, CvssError> {
        let metrics = BaseMetrics::parse(vector)?;
        Ok(Self {
            version: "3.1".into(),
            vector: metrics.canonical(),
            score: format_tenths(metrics.score_tenths()),
        })
    }

    pub fn score_tenths(&self) -> u32 {
        BaseMetrics::parse(&self.vector)
            .map(|m| m.score_tenths())
            .unwrap_or(0)
    }

    pub fn score_value(&self) -> f64 {
        self.score_tenths() as f64 / 10.0
    }

    /// Recompute the score from the vector and compare with the stored text.
    pub fn verify(&self) -> Result<(), CvssError> {
        if self.version != "3.1" {
            return Err(CvssError::MalformedVector(format!("version {}", self.version)));
        }
        let metrics = BaseMetrics::parse(&self.vector)?;
        let computed = format_tenths(metrics.score_tenths());
        if computed != self.score {
            return Err(CvssError::ScoreMismatch {
                vector: self.vector.clone(),
                stored: self.score.clone(),
                computed,
            });
        }
        Ok(())
    }
}

impl fmt::Display for SeverityVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.score, self.vector)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recalibration {
    pub before: SeverityVector,
    pub after: SeverityVector,
    pub direction: Direction,
}

/// Minimum-score proposal wins; ties keep the earliest proposal. With no
/// proposals the claimed vector stands.
pub fn recalibrate(claimed: &SeverityVector, assessments: &[SeverityVector]) -> Recalibration {
    let after = assessments
        .iter()
        .fold(None::<&SeverityVector>, |best, s| match best {
            Some(b) if b.score_tenths() <= s.score_tenths() => Some(b),
            _ => Some(s),
        })
        .unwrap_or(claimed)
        .clone();
    let direction = match after.score_tenths().cmp(&claimed.score_tenths()) {
        std::cmp::Ordering::Less => Direction::Down,
        std::cmp::Ordering::Greater => Direction::Up,
        std::cmp::Ordering::Equal => Direction::Unchanged,
    };
    Recalibration {
        before: claimed.clone(),
        after,
        direction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(v: &str) -> SeverityVector {
        SeverityVector::from_vector(v).unwrap()
    }

    #[test]
    fn reference_scores() {
        assert_eq!(cvss_base_score("AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H").unwrap(), 9.8);
        assert_eq!(cvss_base_score("CVSS:3.1/AV:L/AC:L/PR:L/UI:N/S:U/C:H/I:H/A:H").unwrap(), 7.8);
        assert_eq!(cvss_base_score("AV:N/AC:L/PR:N/UI:N/S:C/C:N/I:N/A:N").unwrap(), 0.0);
        assert_eq!(cvss_base_score("AV:N/AC:L/PR:N/UI:N/S:C/C:H/I:H/A:H").unwrap(), 10.0);
    }

    #[test]
    fn malformed_vectors() {
        for bad in [
            "",
            "AV:N/AC:L",
            "AV:X/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H",
            "AV:N/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H",
            "CVSS:3.0/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H",
            "AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:HH",
        ] {
            assert!(matches!(cvss_base_score(bad), Err(CvssError::MalformedVector(_))), "{bad}");
        }
    }

    #[test]
    fn canonical_ordering() {
        let v = sv("A:H/I:H/C:H/S:U/UI:N/PR:L/AC:L/AV:L");
        assert_eq!(v.vector, "CVSS:3.1/AV:L/AC:L/PR:L/UI:N/S:U/C:H/I:H/A:H");
        assert_eq!(v.score, "7.8");
    }

    #[test]
    fn tampered_score_detected() {
        let mut v = sv("AV:L/AC:L/PR:L/UI:N/S:U/C:H/I:H/A:H");
        v.score = "8.1".into();
        assert!(matches!(v.verify(), Err(CvssError::ScoreMismatch { .. })));
    }

    #[test]
    fn recalibrate_takes_minimum() {
        let claimed = sv("AV:L/AC:L/PR:L/UI:N/S:U/C:H/I:H/A:H");
        let low = sv("AV:L/AC:L/PR:L/UI:N/S:U/C:N/I:N/A:H");
        let r = recalibrate(&claimed, &[claimed.clone(), low.clone()]);
        assert_eq!(r.after.score, "5.5");
        assert_eq!(r.direction, Direction::Down);
        let r = recalibrate(&low, std::slice::from_ref(&low));
        assert_eq!(r.direction, Direction::Unchanged);
    }

    #[test]
    fn enumeration_is_exhaustive_and_distinct() {
        let all: std::collections::HashSet<_> = BaseMetrics::all().map(|m| m.canonical()).collect();
        assert_eq!(all.len(), 2592);
    }
}
