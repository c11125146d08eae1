use std::fmt;
use std::io::Write;
use std::path::Path;

use nonlocality_core::bounds::SweepRow;
use nonlocality_core::json::format_f64;
use nonlocality_core::Error;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Assertion = 1,
    Usage = 2,
    Budget = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            exit: Exit::Usage,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let exit = match &e {
            Error::BudgetExceeded { .. } | Error::TooLarge { .. } => Exit::Budget,
            Error::OutsidePromise(_)
            | Error::OutOfRange { .. }
            | Error::Arity { .. }
            | Error::InvalidParams(_)
            | Error::Schema(_)
            | Error::UnknownGenerator(_)
            | Error::Io(_)
            | Error::Json(_) => Exit::Usage,
            _ => Exit::Assertion,
        };
        CliError {
            exit,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Rendered command output and whether its checks passed.
#[derive(Debug)]
pub struct Outcome {
    pub text: String,
    pub passed: bool,
}

impl Outcome {
    pub fn pass(text: String) -> Self {
        Outcome { text, passed: true }
    }
}

/// 17 significant digits.
pub fn sig17(v: f64) -> String {
    format_f64(v)
}

/// Two decimals, as values are usually quoted.
pub fn dp2(v: f64) -> String {
    format!("{v:.2}")
}

pub fn json<T: serde::Serialize + ?Sized>(value: &T) -> CliResult<String> {
    let mut s = nonlocality_core::json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub const SWEEP_COLUMNS: [&str; 7] = [
    "n",
    "l_eta",
    "eta_upper",
    "l_rpub",
    "rpub_lower_real",
    "rpub_lower_bits",
    "mode",
];

pub fn sweep_csv(rows: &[SweepRow]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError {
        exit: Exit::Assertion,
        message: e.to_string(),
    };
    w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.l_eta.to_string(),
            sig17(r.eta_upper),
            r.l_rpub.to_string(),
            sig17(r.rpub_lower_real),
            r.rpub_lower_bits.to_string(),
            r.mode.as_str().to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError {
        exit: Exit::Assertion,
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Write to `path` (creating parent directories) or to stdout.
pub fn emit(text: &str, path: Option<&Path>) -> CliResult<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}
