//! Scenario configuration.
//!
//! Files are flat key/value text with dotted section keys, e.g.
//!
//! ```text
//! scheme = "soft"
//! sim_time = "auto"
//! app.kind = "video"
//! app.rate = 500000
//! mobility.speed = 4
//! ```
//!
//! The syntax is a subset of TOML (table headers such as `[app]` are also
//! accepted). Every key is optional; see [`ScenarioConfig::standard`] for the
//! defaults and the README for the full schema.

use std::path::Path;

use thiserror::Error;
use toml::Value;

use crate::engine::{IfaceId, NodeId};
use crate::ipv6::{interface_iid, Ipv6Address, Prefix};
use crate::llc::{ApFilter, HandoverScheme};
use crate::mipv6::MipParams;
use crate::radio::{ApConfig, ApId, Position, RadioParams, TractorPath};
use crate::traffic::{FlowKind, VoipConfig};

/// Path length covered by an `auto` run: `sim_time = AUTO_PATH_METERS / speed`.
pub const AUTO_PATH_METERS: f64 = 2000.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {msg}")]
    InvalidValue { key: String, msg: String },
}

impl ConfigError {
    fn invalid(key: &str, msg: impl Into<String>) -> Self {
        ConfigError::InvalidValue {
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    /// The offending key, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey(k) | ConfigError::InvalidValue { key: k, .. } => Some(k),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimDuration {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Application {
    Video { rate_bps: f64, packet_bits: u64 },
    Voip(VoipConfig),
}

impl Application {
    pub fn kind(&self) -> FlowKind {
        match self {
            Application::Video { .. } => FlowKind::Video,
            Application::Voip(_) => FlowKind::Voip,
        }
    }

    /// Nominal rate: the stream rate for video, the codec rate for VoIP.
    pub fn rate_bps(&self) -> f64 {
        match self {
            Application::Video { rate_bps, .. } => *rate_bps,
            Application::Voip(v) => v.codec_rate,
        }
    }

    pub fn video(rate_bps: f64) -> Self {
        Application::Video {
            rate_bps,
            packet_bits: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ipv6Params {
    pub dad_duration: f64,
    pub ra_interval: f64,
}

impl Default for Ipv6Params {
    fn default() -> Self {
        Ipv6Params {
            dad_duration: 1.0,
            ra_interval: 1.0,
        }
    }
}

/// One-way latencies of the wired side, seconds. The home agent, foreign
/// router and correspondent hang off a core router; each access point is
/// bridged to its network's router.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WiredParams {
    pub cn_latency: f64,
    pub ha_latency: f64,
    pub fr_latency: f64,
    pub ap_latency: f64,
    pub bitrate_bps: f64,
}

impl Default for WiredParams {
    fn default() -> Self {
        WiredParams {
            cn_latency: 0.010,
            ha_latency: 0.001,
            fr_latency: 0.001,
            ap_latency: 0.001,
            bitrate_bps: 100e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub scheme: HandoverScheme,
    pub sim_time: SimDuration,
    pub app: Application,
    /// Application start time, seconds.
    pub app_start: f64,
    pub mobility: TractorPath,
    pub radio: RadioParams,
    pub miss_threshold: u32,
    pub home_ap: ApConfig,
    pub foreign_ap: ApConfig,
    /// Per-interface allowed networks (`home`, `foreign`, `any`). None picks
    /// the scheme default: one `any` interface for hard, `home` + `foreign`
    /// for soft.
    pub interfaces: Option<Vec<String>>,
    pub ipv6: Ipv6Params,
    pub mip: MipParams,
    pub wired: WiredParams,
    pub cn_address: Ipv6Address,
    /// Handover count the run must produce; None disables the check.
    pub expected_handovers: Option<u32>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::standard()
    }
}

pub const HOME_AP_ID: ApId = ApId(1);
pub const FOREIGN_AP_ID: ApId = ApId(2);
pub const MN_NODE: NodeId = NodeId(0);

impl ScenarioConfig {
    /// The standard two-network geometry: access points 200 m apart with
    /// ~125 m coverage each (50 m overlap), and a five-row tractor path whose
    /// forward pass is exactly 1000 m, so 2000 m of travel crosses the
    /// midline ten times.
    pub fn standard() -> Self {
        ScenarioConfig {
            seed: 1,
            scheme: HandoverScheme::Soft,
            sim_time: SimDuration::Auto,
            app: Application::video(0.5e6),
            app_start: 2.0,
            mobility: TractorPath {
                x1: 4.0,
                y1: 0.0,
                x2: 196.0,
                y2: 50.0,
                row_count: 5,
                speed: 1.0,
            },
            radio: RadioParams::default(),
            miss_threshold: 3,
            home_ap: ApConfig {
                ap_id: HOME_AP_ID,
                name: "home".into(),
                position: Position::new(0.0, 20.0),
                channel: 1,
                tx_power_dbm: -3.0,
                beacon_interval: 0.1,
                beacon_offset: 0.0,
                prefix: Prefix(0x2001_0db8_0001_0000),
            },
            foreign_ap: ApConfig {
                ap_id: FOREIGN_AP_ID,
                name: "foreign".into(),
                position: Position::new(200.0, 20.0),
                channel: 6,
                tx_power_dbm: -3.0,
                beacon_interval: 0.1,
                beacon_offset: 0.05,
                prefix: Prefix(0x2001_0db8_0002_0000),
            },
            interfaces: None,
            ipv6: Ipv6Params::default(),
            mip: MipParams::default(),
            wired: WiredParams::default(),
            cn_address: Prefix(0x2001_0db8_00ff_0000).address(0x10),
            expected_handovers: Some(10),
        }
    }

    pub fn with_scheme(mut self, scheme: HandoverScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_speed(mut self, speed: f64) -> Self {
        self.mobility.speed = speed;
        self
    }

    pub fn with_app(mut self, app: Application) -> Self {
        self.app = app;
        self
    }

    pub fn resolved_sim_time(&self) -> f64 {
        match self.sim_time {
            SimDuration::Auto => AUTO_PATH_METERS / self.mobility.speed,
            SimDuration::Fixed(t) => t,
        }
    }

    pub fn interface_names(&self) -> Vec<String> {
        match &self.interfaces {
            Some(v) => v.clone(),
            None => match self.scheme {
                HandoverScheme::Hard => vec!["any".into()],
                HandoverScheme::Soft => vec!["home".into(), "foreign".into()],
            },
        }
    }

    pub fn interface_filters(&self) -> Result<Vec<ApFilter>, ConfigError> {
        self.interface_names()
            .iter()
            .map(|spec| {
                let mut ids = Vec::new();
                for part in spec.split(',').map(str::trim) {
                    match part {
                        "any" => return Ok(ApFilter::Any),
                        "home" => ids.push(self.home_ap.ap_id),
                        "foreign" => ids.push(self.foreign_ap.ap_id),
                        other => {
                            return Err(ConfigError::invalid(
                                "mn.interfaces",
                                format!("unknown network `{other}` (expected home|foreign|any)"),
                            ))
                        }
                    }
                }
                Ok(ApFilter::Only(ids))
            })
            .collect()
    }

    pub fn aps(&self) -> [&ApConfig; 2] {
        [&self.home_ap, &self.foreign_ap]
    }

    pub fn home_agent_address(&self) -> Ipv6Address {
        self.home_ap.prefix.address(1)
    }

    pub fn foreign_router_address(&self) -> Ipv6Address {
        self.foreign_ap.prefix.address(1)
    }

    /// Home address the mobile node will form on its first home interface.
    pub fn expected_home_address(&self) -> Ipv6Address {
        let filters = self.interface_filters().unwrap_or_default();
        let idx = filters
            .iter()
            .position(|f| f.allows(self.home_ap.ap_id))
            .unwrap_or(0);
        self.home_ap
            .prefix
            .address(interface_iid(MN_NODE, IfaceId(idx as u32)))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, format!("must be positive, got {v}")))
            }
        };
        positive("mobility.speed", self.mobility.speed)?;
        if self.mobility.row_count == 0 {
            return Err(ConfigError::invalid("mobility.rows", "must be at least 1"));
        }
        if let SimDuration::Fixed(t) = self.sim_time {
            positive("sim_time", t)?;
        }
        if !(self.app_start >= 0.0) {
            return Err(ConfigError::invalid("app.start", "must be non-negative"));
        }
        match &self.app {
            Application::Video { rate_bps, packet_bits } => {
                positive("app.rate", *rate_bps)?;
                if *packet_bits == 0 {
                    return Err(ConfigError::invalid("app.packet_size", "must be positive"));
                }
            }
            Application::Voip(v) => v
                .validate()
                .map_err(|e| ConfigError::invalid("voip", e.to_string()))?,
        }
        positive("radio.frequency", self.radio.frequency_hz)?;
        positive("radio.d_ref", self.radio.d_ref)?;
        positive("radio.bitrate", self.radio.bitrate_bps)?;
        if self.miss_threshold == 0 {
            return Err(ConfigError::invalid("radio.miss_threshold", "must be at least 1"));
        }
        for (name, ap) in [("home", &self.home_ap), ("foreign", &self.foreign_ap)] {
            positive(&format!("{name}.beacon_interval"), ap.beacon_interval)?;
            if !(ap.beacon_offset >= 0.0) {
                return Err(ConfigError::invalid(
                    &format!("{name}.beacon_offset"),
                    "must be non-negative",
                ));
            }
        }
        if self.home_ap.channel == self.foreign_ap.channel {
            return Err(ConfigError::invalid(
                "foreign.channel",
                "the two networks must use distinct channels",
            ));
        }
        if self.home_ap.prefix == self.foreign_ap.prefix {
            return Err(ConfigError::invalid("foreign.prefix", "must differ from home.prefix"));
        }
        positive("ipv6.dad_duration", self.ipv6.dad_duration)?;
        positive("ipv6.ra_interval", self.ipv6.ra_interval)?;
        positive("mipv6.binding_lifetime", self.mip.binding_lifetime)?;
        positive("mipv6.bu_retransmit", self.mip.retransmit_interval)?;
        if self.mip.max_attempts == 0 {
            return Err(ConfigError::invalid("mipv6.bu_max_attempts", "must be at least 1"));
        }
        positive("wired.bitrate", self.wired.bitrate_bps)?;
        for (key, v) in [
            ("wired.cn_latency", self.wired.cn_latency),
            ("wired.ha_latency", self.wired.ha_latency),
            ("wired.fr_latency", self.wired.fr_latency),
            ("wired.ap_latency", self.wired.ap_latency),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(key, "must be non-negative"));
            }
        }
        let filters = self.interface_filters()?;
        match (self.scheme, filters.len()) {
            (HandoverScheme::Hard, 1) => {}
            (HandoverScheme::Hard, n) => {
                return Err(ConfigError::invalid(
                    "mn.interfaces",
                    format!("hard scheme needs exactly 1 interface, got {n}"),
                ))
            }
            (HandoverScheme::Soft, n) if n >= 2 => {}
            (HandoverScheme::Soft, n) => {
                return Err(ConfigError::invalid(
                    "mn.interfaces",
                    format!("soft scheme needs at least 2 interfaces, got {n}"),
                ))
            }
        }
        Ok(())
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(ConfigError::invalid(key, format!("expected a number, got {other}"))),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        other => Err(ConfigError::invalid(
            key,
            format!("expected a non-negative integer, got {other}"),
        )),
    }
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str()
        .ok_or_else(|| ConfigError::invalid(key, format!("expected a string, got {v}")))
}

fn as_prefix(key: &str, v: &Value) -> Result<Prefix, ConfigError> {
    as_str(key, v)?
        .parse()
        .map_err(|e| ConfigError::invalid(key, format!("{e}")))
}

fn apply_ap(ap: &mut ApConfig, field: &str, key: &str, v: &Value) -> Result<(), ConfigError> {
    match field {
        "x" => ap.position.x = as_f64(key, v)?,
        "y" => ap.position.y = as_f64(key, v)?,
        "channel" => {
            ap.channel = u8::try_from(as_u64(key, v)?)
                .map_err(|_| ConfigError::invalid(key, "channel out of range"))?
        }
        "tx_power" => ap.tx_power_dbm = as_f64(key, v)?,
        "beacon_interval" => ap.beacon_interval = as_f64(key, v)?,
        "beacon_offset" => ap.beacon_offset = as_f64(key, v)?,
        "prefix" => ap.prefix = as_prefix(key, v)?,
        _ => return Err(ConfigError::UnknownKey(key.to_string())),
    }
    Ok(())
}

/// Parses scenario text on top of the standard defaults and validates it.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut pairs = Vec::new();
    flatten("", &table, &mut pairs);

    let mut cfg = ScenarioConfig::standard();
    let mut voip = VoipConfig::default();
    let mut app_kind = FlowKind::Video;
    let mut video_rate = 0.5e6;
    let mut packet_bits = 10_000u64;
    let mut beacon_interval: Option<f64> = None;

    for (key, v) in &pairs {
        let k = key.as_str();
        match k {
            "seed" => cfg.seed = as_u64(k, v)?,
            "scheme" => {
                cfg.scheme = as_str(k, v)?
                    .parse()
                    .map_err(|e: String| ConfigError::invalid(k, e))?
            }
            "sim_time" => {
                cfg.sim_time = match v {
                    Value::String(s) if s == "auto" => SimDuration::Auto,
                    other => SimDuration::Fixed(as_f64(k, other).map_err(|_| {
                        ConfigError::invalid(k, "expected \"auto\" or a number of seconds")
                    })?),
                }
            }
            "expected_handovers" => {
                cfg.expected_handovers = match v {
                    Value::String(s) if s == "none" => None,
                    other => Some(
                        u32::try_from(as_u64(k, other)?)
                            .map_err(|_| ConfigError::invalid(k, "too large"))?,
                    ),
                }
            }
            "app.kind" => {
                app_kind = match as_str(k, v)? {
                    "video" => FlowKind::Video,
                    "voip" => FlowKind::Voip,
                    other => {
                        return Err(ConfigError::invalid(
                            k,
                            format!("unknown application `{other}` (expected video|voip)"),
                        ))
                    }
                }
            }
            "app.rate" => video_rate = as_f64(k, v)?,
            "app.packet_size" => packet_bits = as_u64(k, v)?,
            "app.start" => cfg.app_start = as_f64(k, v)?,
            "voip.packetization_interval" => voip.packetization_interval = as_f64(k, v)?,
            "voip.playout_delay" => voip.playout_delay = as_f64(k, v)?,
            "voip.spurt_mean" => voip.spurt_mean = as_f64(k, v)?,
            "voip.silence_mean" => voip.silence_mean = as_f64(k, v)?,
            "voip.codec_rate" => voip.codec_rate = as_f64(k, v)?,
            "mobility.x1" => cfg.mobility.x1 = as_f64(k, v)?,
            "mobility.y1" => cfg.mobility.y1 = as_f64(k, v)?,
            "mobility.x2" => cfg.mobility.x2 = as_f64(k, v)?,
            "mobility.y2" => cfg.mobility.y2 = as_f64(k, v)?,
            "mobility.rows" => {
                cfg.mobility.row_count = u32::try_from(as_u64(k, v)?)
                    .map_err(|_| ConfigError::invalid(k, "too large"))?
            }
            "mobility.speed" => cfg.mobility.speed = as_f64(k, v)?,
            "radio.frequency" => cfg.radio.frequency_hz = as_f64(k, v)?,
            "radio.sensitivity" => cfg.radio.sensitivity_dbm = as_f64(k, v)?,
            "radio.d_ref" => cfg.radio.d_ref = as_f64(k, v)?,
            "radio.bitrate" => cfg.radio.bitrate_bps = as_f64(k, v)?,
            "radio.beacon_interval" => beacon_interval = Some(as_f64(k, v)?),
            "radio.miss_threshold" => {
                cfg.miss_threshold = u32::try_from(as_u64(k, v)?)
                    .map_err(|_| ConfigError::invalid(k, "too large"))?
            }
            "mn.interfaces" => {
                let list = v
                    .as_array()
                    .ok_or_else(|| ConfigError::invalid(k, "expected a list of strings"))?;
                cfg.interfaces = Some(
                    list.iter()
                        .map(|e| as_str(k, e).map(str::to_string))
                        .collect::<Result<_, _>>()?,
                );
            }
            "ipv6.dad_duration" => cfg.ipv6.dad_duration = as_f64(k, v)?,
            "ipv6.ra_interval" => cfg.ipv6.ra_interval = as_f64(k, v)?,
            "mipv6.binding_lifetime" => cfg.mip.binding_lifetime = as_f64(k, v)?,
            "mipv6.bu_retransmit" => cfg.mip.retransmit_interval = as_f64(k, v)?,
            "mipv6.bu_max_attempts" => {
                cfg.mip.max_attempts = u32::try_from(as_u64(k, v)?)
                    .map_err(|_| ConfigError::invalid(k, "too large"))?
            }
            "wired.cn_latency" => cfg.wired.cn_latency = as_f64(k, v)?,
            "wired.ha_latency" => cfg.wired.ha_latency = as_f64(k, v)?,
            "wired.fr_latency" => cfg.wired.fr_latency = as_f64(k, v)?,
            "wired.ap_latency" => cfg.wired.ap_latency = as_f64(k, v)?,
            "wired.bitrate" => cfg.wired.bitrate_bps = as_f64(k, v)?,
            "cn.address" => {
                let addr: std::net::Ipv6Addr = as_str(k, v)?
                    .parse()
                    .map_err(|e| ConfigError::invalid(k, format!("{e}")))?;
                cfg.cn_address = addr.into();
            }
            _ => {
                if let Some(field) = k.strip_prefix("home.") {
                    apply_ap(&mut cfg.home_ap, field, k, v)?;
                } else if let Some(field) = k.strip_prefix("foreign.") {
                    apply_ap(&mut cfg.foreign_ap, field, k, v)?;
                } else {
                    return Err(ConfigError::UnknownKey(key.clone()));
                }
            }
        }
    }
    if let Some(bi) = beacon_interval {
        cfg.home_ap.beacon_interval = bi;
        cfg.foreign_ap.beacon_interval = bi;
    }
    cfg.app = match app_kind {
        FlowKind::Video => Application::Video {
            rate_bps: video_rate,
            packet_bits,
        },
        FlowKind::Voip => Application::Voip(voip),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_soft_video_parses_with_auto_time() {
        let cfg = parse_scenario(
            r#"
            scheme = "soft"
            app.kind = "video"
            app.rate = 500000
            sim_time = "auto"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.scheme, HandoverScheme::Soft);
        assert_eq!(cfg.sim_time, SimDuration::Auto);
        assert_eq!(cfg.app, Application::video(0.5e6));
        assert_eq!(cfg.interface_names(), vec!["home", "foreign"]);
    }

    #[test]
    fn auto_time_scales_with_speed() {
        let cfg = parse_scenario("mobility.speed = 4\nsim_time = \"auto\"").unwrap();
        assert_eq!(cfg.resolved_sim_time(), 500.0);
        for (speed, t) in [(1.0, 2000.0), (2.0, 1000.0), (8.0, 250.0), (10.0, 200.0)] {
            assert_eq!(ScenarioConfig::standard().with_speed(speed).resolved_sim_time(), t);
        }
    }

    #[test]
    fn hard_with_two_interfaces_is_rejected() {
        let err = parse_scenario("scheme = \"hard\"\nmn.interfaces = [\"home\", \"foreign\"]").unwrap_err();
        assert_eq!(err.key(), Some("mn.interfaces"));
    }

    #[test]
    fn soft_with_one_interface_is_rejected() {
        let err = parse_scenario("mn.interfaces = [\"any\"]").unwrap_err();
        assert_eq!(err.key(), Some("mn.interfaces"));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_scenario("mobility.sped = 3").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(ref k) if k == "mobility.sped"));
    }

    #[test]
    fn bad_value_is_named() {
        let err = parse_scenario("mobility.speed = \"fast\"").unwrap_err();
        assert_eq!(err.key(), Some("mobility.speed"));
        let err = parse_scenario("mobility.speed = 0").unwrap_err();
        assert_eq!(err.key(), Some("mobility.speed"));
        let err = parse_scenario("home.prefix = \"not-an-address\"").unwrap_err();
        assert_eq!(err.key(), Some("home.prefix"));
    }

    #[test]
    fn table_headers_are_accepted() {
        let cfg = parse_scenario("[app]\nkind = \"voip\"\n[voip]\nplayout_delay = 0.01").unwrap();
        match cfg.app {
            Application::Voip(v) => assert_eq!(v.playout_delay, 0.01),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn same_channel_is_rejected() {
        let err = parse_scenario("foreign.channel = 1").unwrap_err();
        assert_eq!(err.key(), Some("foreign.channel"));
    }

    #[test]
    fn syntax_error_is_reported() {
        assert!(matches!(parse_scenario("scheme = "), Err(ConfigError::Syntax(_))));
    }

    #[test]
    fn standard_geometry_constants() {
        let cfg = ScenarioConfig::standard();
        assert_eq!(cfg.mobility.pass_length(), 1000.0);
        let r = cfg.radio.coverage_radius(cfg.home_ap.tx_power_dbm);
        let overlap = 2.0 * r - cfg.home_ap.position.distance(&cfg.foreign_ap.position);
        assert!(overlap >= 40.0, "overlap {overlap}");
    }
}
