use pipeforge::protocol::Protocol;
use pipeforge::resolve::{PolicyError, PrimitivePolicy, ShiftregMode, Strategy, Threshold};

/// What `generate` and `simulate` do with a parsed pipeline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub protocol: Protocol,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("unknown protocol `{0}` (expected raw or ready_valid)")]
    Protocol(String),
    #[error("--depth-threshold/--width-threshold/--shiftreg only apply to --strategy direct, not `{0}`")]
    PolicyWithoutDirect(String),
    #[error("strategy `{0}` already fixes the policy; use --strategy direct with policy flags")]
    PolicyTwice(String),
}

impl RunConfig {
    pub fn new(
        strategy: &str,
        depth: Option<&str>,
        width: Option<&str>,
        shiftreg: Option<&str>,
        protocol: &str,
    ) -> Result<Self, ConfigError> {
        let protocol: Protocol = protocol.parse().map_err(|_| ConfigError::Protocol(protocol.to_string()))?;
        let parsed: Strategy = strategy.parse()?;
        let has_policy = depth.is_some() || width.is_some() || shiftreg.is_some();
        if !has_policy {
            return Ok(RunConfig { strategy: parsed, protocol });
        }
        match parsed {
            Strategy::DirectBackward(_) if strategy.eq_ignore_ascii_case("direct") => {
                let depth = depth.map(str::parse).transpose()?.unwrap_or(Threshold::Infinite);
                let width = width.map(str::parse).transpose()?.unwrap_or(Threshold::Infinite);
                let mode = shiftreg.map(str::parse).transpose()?.unwrap_or(ShiftregMode::Auto);
                let policy = PrimitivePolicy::new(depth, width, mode)?;
                Ok(RunConfig { strategy: Strategy::DirectBackward(policy), protocol })
            }
            Strategy::DirectBackward(_) => Err(ConfigError::PolicyTwice(strategy.to_string())),
            _ => Err(ConfigError::PolicyWithoutDirect(strategy.to_string())),
        }
    }
}
