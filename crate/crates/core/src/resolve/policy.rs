use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Minimum depth or width at which a propagation becomes a FIFO.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Threshold {
    At(u64),
    Infinite,
}

impl Threshold {
    pub fn admits(self, value: u64) -> bool {
        match self {
            Threshold::At(t) => value >= t,
            Threshold::Infinite => false,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::At(t) => write!(f, "{t}"),
            Threshold::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Threshold {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, PolicyError> {
        match s.trim() {
            "inf" | "infinite" | "none" => Ok(Threshold::Infinite),
            t => t.parse().map(Threshold::At).map_err(|_| PolicyError::BadThreshold(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftregMode {
    Auto,
    ForceReg,
    ForceSrl,
}

impl fmt::Display for ShiftregMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShiftregMode::Auto => "auto",
            ShiftregMode::ForceReg => "force_reg",
            ShiftregMode::ForceSrl => "force_srl",
        })
    }
}

impl FromStr for ShiftregMode {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, PolicyError> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "auto" => Ok(ShiftregMode::Auto),
            "force_reg" | "forcereg" => Ok(ShiftregMode::ForceReg),
            "force_srl" | "forcesrl" => Ok(ShiftregMode::ForceSrl),
            _ => Err(PolicyError::BadShiftreg(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("depth threshold must be at least 2, got {0}")]
    DepthTooSmall(u64),
    #[error("width threshold must be at least 1")]
    WidthTooSmall,
    #[error("invalid threshold `{0}`")]
    BadThreshold(String),
    #[error("invalid shift-register mode `{0}`")]
    BadShiftreg(String),
    #[error("unknown strategy `{0}`")]
    BadStrategy(String),
}

/// Depth and width thresholds plus the shift-register style used for
/// chains that stay below them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrimitivePolicy {
    pub depth_threshold: Threshold,
    pub width_threshold: Threshold,
    pub shiftreg: ShiftregMode,
}

impl PrimitivePolicy {
    pub fn new(depth: Threshold, width: Threshold, shiftreg: ShiftregMode) -> Result<Self, PolicyError> {
        if let Threshold::At(d) = depth {
            if d < 2 {
                return Err(PolicyError::DepthTooSmall(d));
            }
        }
        if width == Threshold::At(0) {
            return Err(PolicyError::WidthTooSmall);
        }
        Ok(PrimitivePolicy { depth_threshold: depth, width_threshold: width, shiftreg })
    }

    pub fn chains(shiftreg: ShiftregMode) -> Self {
        PrimitivePolicy { depth_threshold: Threshold::Infinite, width_threshold: Threshold::Infinite, shiftreg }
    }

    pub fn auto() -> Self {
        Self::chains(ShiftregMode::Auto)
    }

    /// Same chain style, FIFOs disabled.
    pub fn without_fifos(self) -> Self {
        Self::chains(self.shiftreg)
    }

    pub fn fifo(depth: u64, width: u64) -> Result<Self, PolicyError> {
        Self::new(Threshold::At(depth), Threshold::At(width), ShiftregMode::Auto)
    }
}

impl Default for PrimitivePolicy {
    fn default() -> Self {
        Self::auto()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStyle {
    /// Leave shift-register extraction to the synthesizer.
    SynthDefault,
    NoExtract,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Wire,
    Register,
    RegisterChain { depth: u64, style: ChainStyle },
    ShiftRegister { depth: u64 },
    Fifo { depth: u64, width: u32 },
}

impl PrimitiveKind {
    pub fn latency(self) -> u64 {
        match self {
            PrimitiveKind::Wire => 0,
            PrimitiveKind::Register => 1,
            PrimitiveKind::RegisterChain { depth, .. }
            | PrimitiveKind::ShiftRegister { depth }
            | PrimitiveKind::Fifo { depth, .. } => depth,
        }
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrimitiveKind::Wire => f.write_str("wire"),
            PrimitiveKind::Register => f.write_str("reg"),
            PrimitiveKind::RegisterChain { depth, style: ChainStyle::SynthDefault } => write!(f, "regs[{depth}]"),
            PrimitiveKind::RegisterChain { depth, style: ChainStyle::NoExtract } => write!(f, "regs[{depth}] noextract"),
            PrimitiveKind::ShiftRegister { depth } => write!(f, "srl[{depth}]"),
            PrimitiveKind::Fifo { depth, width } => write!(f, "fifo[{depth}x{width}]"),
        }
    }
}

/// Picks the hardware primitive implementing a propagation of `latency`
/// cycles for a `width`-bit signal.
pub fn select_primitive(latency: u64, width: u32, policy: &PrimitivePolicy) -> PrimitiveKind {
    match latency {
        0 => PrimitiveKind::Wire,
        1 => PrimitiveKind::Register,
        l if policy.depth_threshold.admits(l) && policy.width_threshold.admits(width as u64) => {
            PrimitiveKind::Fifo { depth: l, width }
        }
        l => match policy.shiftreg {
            ShiftregMode::Auto => PrimitiveKind::RegisterChain { depth: l, style: ChainStyle::SynthDefault },
            ShiftregMode::ForceReg => PrimitiveKind::RegisterChain { depth: l, style: ChainStyle::NoExtract },
            ShiftregMode::ForceSrl => PrimitiveKind::ShiftRegister { depth: l },
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    ExhaustiveForward,
    PeerToPeerBackward,
    DirectBackward(PrimitivePolicy),
}

impl Strategy {
    pub fn policy(&self) -> PrimitivePolicy {
        match self {
            Strategy::DirectBackward(p) => *p,
            _ => PrimitivePolicy::auto(),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::ExhaustiveForward => f.write_str("ExhaustiveForward"),
            Strategy::PeerToPeerBackward => f.write_str("PeerToPeer"),
            Strategy::DirectBackward(p) => match (p.depth_threshold, p.width_threshold, p.shiftreg) {
                (Threshold::Infinite, Threshold::Infinite, ShiftregMode::Auto) => f.write_str("DirectAuto"),
                (Threshold::Infinite, Threshold::Infinite, ShiftregMode::ForceReg) => f.write_str("DirectForceReg"),
                (Threshold::Infinite, Threshold::Infinite, ShiftregMode::ForceSrl) => f.write_str("DirectForceSRL"),
                (d, w, ShiftregMode::Auto) => write!(f, "DirectFIFO:{d}:{w}"),
                (d, w, m) => write!(f, "DirectFIFO:{d}:{w}:{m}"),
            },
        }
    }
}

impl FromStr for Strategy {
    type Err = PolicyError;

    /// Accepts `exhaustive`, `p2p`, `direct`, and the named variants
    /// `DirectAuto`, `DirectForceReg`, `DirectForceSRL`, `DirectFIFO:D:W`.
    fn from_str(s: &str) -> Result<Self, PolicyError> {
        let lower = s.to_ascii_lowercase();
        let direct = |m| Ok(Strategy::DirectBackward(PrimitivePolicy::chains(m)));
        match lower.as_str() {
            "exhaustive" | "exhaustiveforward" | "exhaustive_forward" => Ok(Strategy::ExhaustiveForward),
            "p2p" | "peertopeer" | "peer_to_peer" => Ok(Strategy::PeerToPeerBackward),
            "direct" | "directauto" => direct(ShiftregMode::Auto),
            "directforcereg" => direct(ShiftregMode::ForceReg),
            "directforcesrl" => direct(ShiftregMode::ForceSrl),
            _ => {
                let parts: Vec<&str> = lower.split(':').collect();
                if parts[0] != "directfifo" || !(3..=4).contains(&parts.len()) {
                    return Err(PolicyError::BadStrategy(s.to_string()));
                }
                let mode = match parts.get(3) {
                    Some(m) => m.parse()?,
                    None => ShiftregMode::Auto,
                };
                let policy = PrimitivePolicy::new(parts[1].parse()?, parts[2].parse()?, mode)?;
                Ok(Strategy::DirectBackward(policy))
            }
        }
    }
}
