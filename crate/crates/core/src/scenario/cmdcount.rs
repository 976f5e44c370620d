//! Control-plane command counts needed to (re)prioritise traffic across
//! `N` virtual switches with `M` leaf processes each, `P` of them prioritised.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommandMode {
    /// Configure a rate for every process queue.
    StrictFull,
    /// Re-adjust the non-prioritised queues once priorities change.
    StrictProactiveAdjust,
    /// Only the prioritised queues need a command.
    RlSpDrr,
}

impl CommandMode {
    pub const ALL: [CommandMode; 3] = [
        CommandMode::StrictFull,
        CommandMode::StrictProactiveAdjust,
        CommandMode::RlSpDrr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CommandMode::StrictFull => "STRICT_FULL",
            CommandMode::StrictProactiveAdjust => "STRICT_PROACTIVE_ADJUST",
            CommandMode::RlSpDrr => "RL_SP_DRR",
        }
    }
}

impl fmt::Display for CommandMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CommandMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        CommandMode::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown mode {s:?}; expected one of STRICT_FULL, STRICT_PROACTIVE_ADJUST, RL_SP_DRR"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandCountQuery {
    pub n_switches: u64,
    pub processes_per_switch: u64,
    pub prioritized: u64,
    pub mode: CommandMode,
}

impl CommandCountQuery {
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if self.n_switches < 1 {
            v.push("number of switches must be at least 1".to_string());
        }
        if self.processes_per_switch < 1 {
            v.push("processes per switch must be at least 1".to_string());
        }
        if self.prioritized > self.processes_per_switch {
            v.push(format!(
                "prioritized processes ({}) exceed processes per switch ({})",
                self.prioritized, self.processes_per_switch
            ));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

pub fn command_count(q: &CommandCountQuery) -> Result<u64> {
    q.validate()?;
    let per_switch = match q.mode {
        CommandMode::StrictFull => q.processes_per_switch,
        CommandMode::StrictProactiveAdjust => q.processes_per_switch - q.prioritized,
        CommandMode::RlSpDrr => q.prioritized,
    };
    q.n_switches
        .checked_mul(per_switch)
        .ok_or_else(|| Error::InvalidConfig("command count overflows u64".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: u64, m: u64, p: u64, mode: CommandMode) -> CommandCountQuery {
        CommandCountQuery {
            n_switches: n,
            processes_per_switch: m,
            prioritized: p,
            mode,
        }
    }

    #[test]
    fn worked_examples() {
        assert_eq!(command_count(&q(2, 3, 1, CommandMode::StrictFull)).unwrap(), 6);
        assert_eq!(command_count(&q(2, 3, 1, CommandMode::RlSpDrr)).unwrap(), 2);
        assert_eq!(command_count(&q(2, 3, 1, CommandMode::StrictProactiveAdjust)).unwrap(), 4);
    }

    #[test]
    fn invalid_queries() {
        assert!(command_count(&q(2, 3, 4, CommandMode::RlSpDrr)).is_err());
        assert!(command_count(&q(0, 3, 1, CommandMode::RlSpDrr)).is_err());
        assert!(command_count(&q(1, 0, 0, CommandMode::StrictFull)).is_err());
    }

    #[test]
    fn mode_names_parse() {
        for m in CommandMode::ALL {
            assert_eq!(m.as_str().parse::<CommandMode>().unwrap(), m);
        }
        assert_eq!("rl-sp-drr".parse::<CommandMode>().unwrap(), CommandMode::RlSpDrr);
        assert!("fifo".parse::<CommandMode>().is_err());
    }
}
