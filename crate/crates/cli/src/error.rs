//! One error type for every command, with a stable machine-readable code.

use std::fmt;

use pathdyn::advect::AdvectError;
use pathdyn::distribution::DistributionError;
use pathdyn::field::FieldError;
use pathdyn::simfield::FormatError;
use pathdyn::store::StoreError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::new("usage", message)
    }

    /// Prefix the message with the file it concerns.
    pub fn at(mut self, path: &std::path::Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }

    /// `ERROR code=<code> msg="<message>"`, one line.
    pub fn line(&self) -> String {
        format!("ERROR code={} msg={:?}", self.code, self.message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        let code = match &e {
            FieldError::InvalidGrid(_) => "invalid_grid",
            FieldError::BadMagic(_) => "bad_magic",
            FieldError::UnsupportedVersion(_) => "unsupported_version",
            FieldError::MalformedHeader(_) => "malformed_header",
            FieldError::SizeMismatch { .. } => "size_mismatch",
            FieldError::NonFinite(_) => "non_finite",
            FieldError::UnknownFlow(_) => "unknown_flow",
            FieldError::Io(_) => "io",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<AdvectError> for CliError {
    fn from(e: AdvectError) -> Self {
        let code = match &e {
            AdvectError::InvalidParams(_) => "invalid_params",
            AdvectError::OutsideTimeDomain { .. } => "outside_time_domain",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<DistributionError> for CliError {
    fn from(e: DistributionError) -> Self {
        let code = match &e {
            DistributionError::NoValidSamples => "no_valid_samples",
            DistributionError::EmptyRegion => "empty_region",
            DistributionError::InvalidRegion(_) => "invalid_region",
            DistributionError::InvalidBinning(_) => "invalid_binning",
            DistributionError::PolicyMismatch => "policy_mismatch",
            DistributionError::AbsoluteContinuity { .. } => "absolute_continuity",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::Advect(inner) => return inner.into(),
            StoreError::BadMagic => "bad_magic",
            StoreError::UnsupportedVersion(_) => "unsupported_version",
            StoreError::FingerprintMismatch { .. } => "fingerprint_mismatch",
            StoreError::Truncated { .. } => "truncated",
            StoreError::TrailingBytes { .. } => "size_mismatch",
            StoreError::Malformed(_) => "malformed_header",
            StoreError::Io(_) => "io",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        let code = match &e {
            FormatError::Io(_) => "io",
            _ => "format",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<pathdyn::simfield::ImageError> for CliError {
    fn from(e: pathdyn::simfield::ImageError) -> Self {
        CliError::new("image", e.to_string())
    }
}
