use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VariantTag {
    Base,
    NoFastDecision,
    WeakIrOnly,
    NoSeamlessFt,
    NoDdap,
}

impl VariantTag {
    pub const ALL: [VariantTag; 5] = [
        VariantTag::Base,
        VariantTag::NoFastDecision,
        VariantTag::WeakIrOnly,
        VariantTag::NoSeamlessFt,
        VariantTag::NoDdap,
    ];

    pub fn cli_name(self) -> &'static str {
        match self {
            VariantTag::Base => "base",
            VariantTag::NoFastDecision => "no-fast",
            VariantTag::WeakIrOnly => "weak-ir",
            VariantTag::NoSeamlessFt => "no-seamless",
            VariantTag::NoDdap => "no-ddap",
        }
    }
}

impl fmt::Display for VariantTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for VariantTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariantTag::ALL
            .into_iter()
            .find(|v| v.cli_name() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}; expected one of base, no-fast, weak-ir, no-seamless, no-ddap"))
    }
}

/// One of the five protocols plus its tunables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AlgorithmVariant {
    pub tag: VariantTag,
    /// Client timeout while waiting for every node (no-seamless only).
    /// `None` means four times the message-delay bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_ticks: Option<u64>,
}

impl AlgorithmVariant {
    pub fn new(tag: VariantTag) -> Self {
        Self { tag, timeout_ticks: None }
    }

    pub fn base() -> Self {
        Self::new(VariantTag::Base)
    }

    pub fn timeout(&self, delta: u64) -> u64 {
        self.timeout_ticks.unwrap_or(4 * delta)
    }
}

impl From<VariantTag> for AlgorithmVariant {
    fn from(tag: VariantTag) -> Self {
        Self::new(tag)
    }
}

impl fmt::Display for AlgorithmVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.tag.fmt(f)
    }
}
