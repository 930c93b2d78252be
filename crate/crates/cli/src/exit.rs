use lpr_core::Error;

pub const INTERNAL: u8 = 1;
pub const CONFIG: u8 = 3;
pub const DATA: u8 = 4;
pub const IO: u8 = 5;
pub const ENDPOINT: u8 = 6;

/// Process exit status for each failure class. 2 is left to clap for usage errors.
pub fn code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::InvalidArgument(_) => CONFIG,
        Error::Io { .. } | Error::IoContext { .. } => IO,
        Error::Endpoint { .. } | Error::EmptyCompletion => ENDPOINT,
        Error::DuplicateId { .. }
        | Error::MissingField { .. }
        | Error::Encoding { .. }
        | Error::Malformed { .. }
        | Error::EmptyText { .. }
        | Error::UnresolvedTargets { .. }
        | Error::EmptyInput(_)
        | Error::UnknownHandle { .. }
        | Error::UnknownPassageId(_)
        | Error::BinaryFormat { .. }
        | Error::DimensionMismatch { .. }
        | Error::ZeroVector
        | Error::MissingGold(_)
        | Error::DuplicateQuery(_)
        | Error::Json(_)
        | Error::Csv(_) => DATA,
        Error::MissingPlaceholder { .. } | Error::Stage { .. } | Error::InFile { .. } => INTERNAL,
    }
}
