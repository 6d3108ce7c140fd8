//! The measurement runtime wrappers report to, shipped as C source and
//! built as `libwrapmon.so` next to the wrapper libraries.
//!
//! Its interface, with C linkage:
//!
//! ```c
//! unsigned libwrap_region_register(const char *name, const char *file, int line);
//! void libwrap_enter(unsigned region);
//! void libwrap_exit(unsigned region);
//! void libwrap_flush(void);
//! ```
//!
//! Registering the same (name, file, line) again returns the same id. A
//! mismatched exit aborts the process. The profile is written at exit to
//! `$LIBWRAP_PROFILE_OUT` (`%p` expands to the process id), by default
//! `libwrap_profile.<pid>.json`; see [`crate::profile`] for the format.
//! Open calls of the exiting thread are closed at that point; other threads'
//! open calls keep their counts but not their time. Profiles are lost when
//! the process dies from a signal.

use std::path::{Path, PathBuf};

use crate::toolchain::{ToolError, Toolchain};

pub const MONITOR_SOURCE: &str = include_str!("../csrc/libwrapmon.c");
pub const MONITOR_LIBRARY: &str = "libwrapmon.so";
pub const PROFILE_ENV: &str = "LIBWRAP_PROFILE_OUT";
pub const VERBOSE_ENV: &str = "LIBWRAP_VERBOSE";

/// Writes the runtime's source to `out_dir` and builds the shared library there.
pub fn build_monitor(toolchain: &Toolchain, out_dir: &Path) -> Result<PathBuf, BuildMonitorError> {
    let src = out_dir.join("libwrapmon.c");
    crate::fsutil::write_atomic(&src, MONITOR_SOURCE.as_bytes()).map_err(BuildMonitorError::Io)?;
    let lib = out_dir.join(MONITOR_LIBRARY);
    let args: Vec<String> = vec![
        "-std=c99".into(),
        "-O2".into(),
        "-shared".into(),
        "-fPIC".into(),
        "-pthread".into(),
        format!("-Wl,-soname,{MONITOR_LIBRARY}"),
        src.to_string_lossy().into_owned(),
        "-o".into(),
        lib.to_string_lossy().into_owned(),
    ];
    toolchain.cc(&args, None).map_err(BuildMonitorError::Compile)?;
    Ok(lib)
}

#[derive(Debug, thiserror::Error)]
pub enum BuildMonitorError {
    #[error("cannot write the measurement runtime source: {0}")]
    Io(#[source] std::io::Error),
    #[error("cannot build the measurement runtime: {0}")]
    Compile(#[source] ToolError),
}
