//! Closed set of fault codes carried by fault envelopes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaultCode {
    AuthFailed,
    UnknownService,
    UnknownOperation,
    Validation,
    TypeMismatch,
    ServiceDown,
    Timeout,
    Translation,
    Internal,
}

impl FaultCode {
    pub const ALL: [FaultCode; 9] = [
        FaultCode::AuthFailed,
        FaultCode::UnknownService,
        FaultCode::UnknownOperation,
        FaultCode::Validation,
        FaultCode::TypeMismatch,
        FaultCode::ServiceDown,
        FaultCode::Timeout,
        FaultCode::Translation,
        FaultCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultCode::AuthFailed => "AUTH_FAILED",
            FaultCode::UnknownService => "UNKNOWN_SERVICE",
            FaultCode::UnknownOperation => "UNKNOWN_OPERATION",
            FaultCode::Validation => "VALIDATION",
            FaultCode::TypeMismatch => "TYPE_MISMATCH",
            FaultCode::ServiceDown => "SERVICE_DOWN",
            FaultCode::Timeout => "TIMEOUT",
            FaultCode::Translation => "TRANSLATION",
            FaultCode::Internal => "INTERNAL",
        }
    }

    /// HTTP status used when this fault travels over the REST grammar.
    pub fn http_status(self) -> u16 {
        match self {
            FaultCode::AuthFailed => 401,
            FaultCode::UnknownService | FaultCode::UnknownOperation => 404,
            FaultCode::Validation | FaultCode::TypeMismatch => 400,
            FaultCode::ServiceDown => 503,
            FaultCode::Timeout => 504,
            FaultCode::Translation => 502,
            FaultCode::Internal => 500,
        }
    }

    /// Faults worth retrying from the client side.
    pub fn is_retryable(self) -> bool {
        matches!(self, FaultCode::Timeout | FaultCode::ServiceDown)
    }
}

impl fmt::Display for FaultCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultCode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultCode::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or(())
    }
}

/// A fault code plus human-readable detail. Also serves as the error type of
/// every pipeline stage, since each failure ends up in a fault envelope.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("{code}: {detail}")]
pub struct Fault {
    pub code: FaultCode,
    pub detail: String,
}

impl Fault {
    /// NUL cannot appear in envelope text, and details often quote the
    /// offending input, so it is replaced with U+FFFD.
    pub fn new(code: FaultCode, detail: impl Into<String>) -> Self {
        let mut detail = detail.into();
        if detail.contains('\0') {
            detail = detail.replace('\0', "\u{fffd}");
        }
        Fault { code, detail }
    }

    pub fn validation(detail: impl Into<String>) -> Self {
        Fault::new(FaultCode::Validation, detail)
    }

    pub fn translation(detail: impl Into<String>) -> Self {
        Fault::new(FaultCode::Translation, detail)
    }

    pub fn internal(detail: impl Into<String>) -> Self {
        Fault::new(FaultCode::Internal, detail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detail_never_carries_nul() {
        let f = Fault::validation("name `a\0b`");
        assert_eq!(f.detail, "name `a\u{fffd}b`");
    }

    #[test]
    fn codes_round_trip_through_text() {
        for code in FaultCode::ALL {
            assert_eq!(code.as_str().parse::<FaultCode>(), Ok(code));
        }
        assert!("CONFLICT".parse::<FaultCode>().is_err());
    }

    #[test]
    fn only_transport_faults_are_retryable() {
        let retryable: Vec<_> = FaultCode::ALL.into_iter().filter(|c| c.is_retryable()).collect();
        assert_eq!(retryable, vec![FaultCode::ServiceDown, FaultCode::Timeout]);
    }
}
