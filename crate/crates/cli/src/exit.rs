use std::fmt;
use std::path::Path;

/// A failed command, carrying the process exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    /// A check ran and did not pass.
    Check(String),
    Config(String),
    Io(String),
    Diverged(String),
    Incompatible(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Diverged(_) => 4,
            Failure::Incompatible(_) => 5,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Check(m)
            | Failure::Config(m)
            | Failure::Io(m)
            | Failure::Diverged(m)
            | Failure::Incompatible(m) => f.write_str(m),
        }
    }
}

impl From<vdensity::Error> for Failure {
    fn from(e: vdensity::Error) -> Self {
        use vdensity::Error as E;
        let msg = e.to_string();
        match e {
            E::Io { .. } | E::Format(_) => Failure::Io(msg),
            E::Invalid(_) | E::Shape(_) => Failure::Config(msg),
            E::Diverged { .. } | E::SvdFailed => Failure::Diverged(msg),
            E::FeatureHash { .. } => Failure::Incompatible(msg),
        }
    }
}

pub type CmdResult = Result<(), Failure>;
