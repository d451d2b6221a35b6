use windshare::Error;

/// A command failure: exit code plus the machine-readable report printed on
/// stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: String,
    pub message: String,
}

pub const CONFIG: u8 = 2;
pub const DATA: u8 = 3;
pub const TRANSPORT: u8 = 4;
pub const INTERNAL: u8 = 5;

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: CONFIG,
            kind: "usage".into(),
            message: message.into(),
        }
    }

    pub fn io(what: &str, e: std::io::Error) -> Self {
        Failure {
            code: DATA,
            kind: "io".into(),
            message: format!("{what}: {e}"),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "message": self.message,
            "exit_code": self.code,
        })
        .to_string()
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Param(_) => CONFIG,
        Error::Format(_)
        | Error::Grid(_)
        | Error::Length(_)
        | Error::EmptyIntersection
        | Error::EmptySet
        | Error::Shape(_)
        | Error::Range { .. }
        | Error::Model(_)
        | Error::Io(_) => DATA,
        Error::Transport { .. } | Error::Topology(_) | Error::FrameDecode(_) => TRANSPORT,
        Error::NodeFailed { source, .. } => exit_code(source),
        Error::Inconsistency { .. } | Error::EmptySampleSpace | Error::MissingBoundary { .. } => INTERNAL,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}
