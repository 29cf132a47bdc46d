use std::path::Path;

use dmtlink_core::channel::LinkConfig;
use dmtlink_core::modem::DmtConfig;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatePolicy {
    FixedFull,
    FixedHalf,
    AutoFallback,
}

/// One experiment: a link, a modem configuration and an OSNR sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    /// OSNR set points in dB (0.1 nm), strictly increasing.
    pub osnr_sweep: Vec<f64>,
    /// Frame cap per sweep point.
    pub payload_frames: usize,
    /// Stop a point early once this many bit errors are counted.
    #[serde(default = "default_min_errors")]
    pub min_errors: u64,
    /// Payload frames sent through the link per block.
    #[serde(default = "default_batch_frames")]
    pub batch_frames: usize,
    pub rate_policy: RatePolicy,
    #[serde(default)]
    pub modem: DmtConfig,
    #[serde(default)]
    pub link: LinkConfig,
}

fn default_min_errors() -> u64 {
    100
}

fn default_batch_frames() -> usize {
    30
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let s: Scenario = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(format!("{}: {m}", self.name)));
        if self.name.is_empty() {
            return bad("name must not be empty".into());
        }
        if self.osnr_sweep.is_empty() {
            return bad("osnr_sweep must not be empty".into());
        }
        if self.osnr_sweep.iter().any(|x| x.is_nan())
            || self.osnr_sweep.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("osnr_sweep must be strictly increasing".into());
        }
        if self.payload_frames == 0 || self.batch_frames == 0 {
            return bad("payload_frames and batch_frames must be at least 1".into());
        }
        self.modem.validate().or_else(|e| bad(e.to_string()))?;
        self.link.validate().or_else(|e| bad(e.to_string()))?;
        if (self.link.electrical_rate - self.modem.dac_rate).abs() > 1e-6 * self.modem.dac_rate {
            return bad("link electrical_rate must equal the modem dac_rate".into());
        }
        Ok(())
    }
}

const BUNDLED: &[(&str, &str)] = &[
    ("b2b-dsb", include_str!("../scenarios/b2b-dsb.toml")),
    (
        "dsb-dcf-10km",
        include_str!("../scenarios/dsb-dcf-10km.toml"),
    ),
    (
        "dsb-dcf-20km",
        include_str!("../scenarios/dsb-dcf-20km.toml"),
    ),
    (
        "dsb-dcf-40km",
        include_str!("../scenarios/dsb-dcf-40km.toml"),
    ),
    (
        "dsb-dcf-60km",
        include_str!("../scenarios/dsb-dcf-60km.toml"),
    ),
    ("vsb-b2b", include_str!("../scenarios/vsb-b2b.toml")),
    ("vsb-10km", include_str!("../scenarios/vsb-10km.toml")),
    ("vsb-20km", include_str!("../scenarios/vsb-20km.toml")),
    ("vsb-40km", include_str!("../scenarios/vsb-40km.toml")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_toml(text).expect("bundled scenarios are valid"))
}

/// Resolves a CLI argument: an existing file path, else a bundled name.
pub fn resolve(arg: &str) -> Result<Scenario, HarnessError> {
    let path = Path::new(arg);
    if path.is_file() {
        return Scenario::from_file(path);
    }
    bundled(arg).ok_or_else(|| HarnessError::UnknownScenario(arg.to_string()))
}
