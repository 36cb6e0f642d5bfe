use std::fmt;

/// What went wrong, which fixes the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Config,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Data,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Numeric,
            message: message.into(),
        }
    }

    pub fn code(&self) -> i32 {
        match self.kind {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Numeric => 4,
        }
    }

    /// `error kind=<kind> code=<n>: <message>` on one line.
    pub fn line(&self) -> String {
        let kind = match self.kind {
            Kind::Config => "config",
            Kind::Data => "data",
            Kind::Numeric => "numeric",
        };
        let msg = self.message.replace(['\n', '\r'], " ");
        format!("error kind={kind} code={}: {msg}", self.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<seqrl_core::Error> for CliError {
    fn from(e: seqrl_core::Error) -> Self {
        use seqrl_core::Error as E;
        let kind = match &e {
            E::InvalidArgument(_) | E::UnknownActionName(_) => Kind::Config,
            E::NonFiniteReward(_) | E::Undefined(_) => Kind::Numeric,
            _ => Kind::Data,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<seqrl_models::Error> for CliError {
    fn from(e: seqrl_models::Error) -> Self {
        use seqrl_models::Error as E;
        match e {
            E::Data(inner) => inner.into(),
            E::Config(_) => Self::config(e.to_string()),
            E::NonFinite { .. } | E::Divergence { .. } => Self::numeric(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<seqrl_eval::Error> for CliError {
    fn from(e: seqrl_eval::Error) -> Self {
        use seqrl_eval::Error as E;
        match e {
            E::Model(inner) => inner.into(),
            E::Data(inner) => inner.into(),
            E::Config(_) | E::ActionMismatch { .. } => Self::config(e.to_string()),
            E::DegenerateBaseline(_) => Self::numeric(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<seqrl_analysis::Error> for CliError {
    fn from(e: seqrl_analysis::Error) -> Self {
        use seqrl_analysis::Error as E;
        match e {
            E::Scores(inner) => inner.into(),
            E::OutOfRange(_) => Self::numeric(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}
