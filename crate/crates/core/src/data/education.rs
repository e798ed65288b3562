//! Education categories, their years of schooling and coarse level.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EducationLevel {
    Low,
    Mid,
    High,
}

impl EducationLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            EducationLevel::Low => "low",
            EducationLevel::Mid => "mid",
            EducationLevel::High => "high",
        }
    }
}

impl fmt::Display for EducationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EducationCategory {
    Uneducated,
    Kindergarten,
    PreElementary,
    Elementary,
    JuniorHigh,
    SeniorHigh,
    Vocational,
    Bachelor,
    PostGraduate,
}

/// A category with its years of formal education and level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EducationRecord {
    pub category: EducationCategory,
    pub years: u32,
    pub level: EducationLevel,
}

impl EducationCategory {
    pub const ALL: [EducationCategory; 9] = [
        EducationCategory::Uneducated,
        EducationCategory::Kindergarten,
        EducationCategory::PreElementary,
        EducationCategory::Elementary,
        EducationCategory::JuniorHigh,
        EducationCategory::SeniorHigh,
        EducationCategory::Vocational,
        EducationCategory::Bachelor,
        EducationCategory::PostGraduate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EducationCategory::Uneducated => "uneducated",
            EducationCategory::Kindergarten => "kindergarten",
            EducationCategory::PreElementary => "pre-elementary",
            EducationCategory::Elementary => "elementary",
            EducationCategory::JuniorHigh => "junior-high",
            EducationCategory::SeniorHigh => "senior-high",
            EducationCategory::Vocational => "vocational",
            EducationCategory::Bachelor => "bachelor",
            EducationCategory::PostGraduate => "post-graduate",
        }
    }

    pub fn record(self) -> EducationRecord {
        use EducationCategory::*;
        use EducationLevel::*;
        let (years, level) = match self {
            Uneducated => (0, Low),
            Kindergarten => (0, Low),
            PreElementary => (3, Low),
            Elementary => (6, Low),
            JuniorHigh => (9, Mid),
            SeniorHigh => (12, Mid),
            Vocational => (14, Mid),
            Bachelor => (16, High),
            PostGraduate => (19, High),
        };
        EducationRecord {
            category: self,
            years,
            level,
        }
    }
}

impl FromStr for EducationCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let key = s.trim();
        EducationCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == key)
            .ok_or_else(|| Error::Schema(format!("unknown education category `{s}`")))
    }
}

impl fmt::Display for EducationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
