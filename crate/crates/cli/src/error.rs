use zbs_client::ClientError;

pub const EXIT_PARSE: u8 = 3;
pub const EXIT_IO: u8 = 4;
pub const EXIT_CONFIG: u8 = 5;
pub const EXIT_OTHER: u8 = 6;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn new(code: u8, e: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            source: e.into(),
        }
    }

    pub fn parse(e: impl Into<anyhow::Error>) -> Self {
        Self::new(EXIT_PARSE, e)
    }

    pub fn io(e: impl Into<anyhow::Error>) -> Self {
        Self::new(EXIT_IO, e)
    }

    pub fn config(e: impl Into<anyhow::Error>) -> Self {
        Self::new(EXIT_CONFIG, e)
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        let code = match e.kind() {
            Some("parse") => EXIT_PARSE,
            Some("config") => EXIT_CONFIG,
            _ => EXIT_OTHER,
        };
        Self::new(code, e)
    }
}

/// Attach a path to an I/O error.
pub fn io_at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(anyhow::anyhow!("{}: {e}", path.display()))
}
