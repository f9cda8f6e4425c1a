pub mod crossval;
pub mod eval;
pub mod gen_data;
pub mod gradcheck;
pub mod plan;
pub mod train;

use graze_core::Error;
use std::path::Path;

/// Attaches the offending path to bare I/O errors so `error[E_IO]` lines
/// name the file that failed.
pub(crate) fn with_path(err: Error, path: &Path) -> Error {
    match err {
        Error::Io(io) => {
            Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display())))
        }
        other => other,
    }
}
