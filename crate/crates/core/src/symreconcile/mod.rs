//! Checking declared functions against the symbols the target library defines.
//!
//! Two modes compute the same [`SymbolReport`]. [`probe_check`] compiles and
//! links one small program per function, with and without the target
//! libraries, which follows the linker exactly (including linker scripts).
//! [`reconcile`] compares names against symbol tables read with
//! [`read_symbols`], which is much faster. Weak definitions count as defined.

mod probe;

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use object::read::archive::ArchiveFile;
use object::{FileKind, Object, ObjectKind, ObjectSymbol};
use thiserror::Error;

use crate::config::WrapperConfig;
use crate::declscan::FunctionDecl;
use crate::fsutil::{absolutize, write_atomic};
use crate::toolchain::{ToolError, Toolchain};

pub use probe::{probe_check, ProbeOptions, PROGRESS_NOTICE_THRESHOLD};

pub const MISSING_FILE: &str = "missing.txt";
pub const RESOLVABLE_FILE: &str = "resolvable_without_target.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LibraryKind {
    SharedObject,
    StaticArchive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    pub origin: PathBuf,
    pub kind: LibraryKind,
    pub defined: BTreeSet<String>,
    pub undefined: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolReport {
    /// Declared but not defined by the target libraries. Sorted, unique.
    pub missing: Vec<String>,
    /// Link even without the target libraries, i.e. come from system libraries.
    pub resolvable_without_target: Vec<String>,
}

impl SymbolReport {
    pub fn new(missing: impl IntoIterator<Item = String>, resolvable: impl IntoIterator<Item = String>) -> Self {
        let missing: BTreeSet<String> = missing.into_iter().collect();
        let resolvable: BTreeSet<String> = resolvable
            .into_iter()
            .filter(|n| !missing.contains(n))
            .collect();
        SymbolReport {
            missing: missing.into_iter().collect(),
            resolvable_without_target: resolvable.into_iter().collect(),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.missing.is_empty() && self.resolvable_without_target.is_empty()
    }

    /// Writes `missing.txt` and `resolvable_without_target.txt`, one name per line.
    pub fn write_lists(&self, dir: &Path) -> io::Result<(PathBuf, PathBuf)> {
        let missing = dir.join(MISSING_FILE);
        let resolvable = dir.join(RESOLVABLE_FILE);
        write_atomic(&missing, lines(&self.missing).as_bytes())?;
        write_atomic(&resolvable, lines(&self.resolvable_without_target).as_bytes())?;
        Ok((missing, resolvable))
    }
}

fn lines(names: &[String]) -> String {
    names.iter().map(|n| format!("{n}\n")).collect()
}

#[derive(Debug, Error)]
pub enum ReconcileError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: not a shared object or static archive (magic bytes: {magic})", path.display())]
    UnrecognizedFormat { path: PathBuf, magic: String },
    #[error("{}: malformed object file: {message}", path.display())]
    Malformed { path: PathBuf, message: String },
    #[error("library `{spec}` not found (searched {searched})")]
    LibraryNotFound { spec: String, searched: String },
    #[error("no target libraries configured; set `libs` in the wrapper configuration")]
    NoLibraries,
    #[error("the compiler cannot {what}: {source}")]
    Sanity {
        what: &'static str,
        #[source]
        source: ToolError,
    },
    #[error("probe for `{name}` does not compile: {source}")]
    ProbeCompile {
        name: String,
        #[source]
        source: ToolError,
    },
    #[error("cannot generate a probe for `{name}`: {reason}")]
    ProbeSource { name: String, reason: String },
    #[error("cannot create a probe directory: {0}")]
    TempDir(#[source] io::Error),
}

/// Reads the global symbols of a shared object (its dynamic symbol table)
/// or of every member of a static archive. Version suffixes are stripped.
pub fn read_symbols(library: &Path) -> Result<SymbolTable, ReconcileError> {
    let data = fs::read(library).map_err(|source| ReconcileError::Io {
        path: library.to_path_buf(),
        source,
    })?;
    let malformed = |e: object::Error| ReconcileError::Malformed {
        path: library.to_path_buf(),
        message: e.to_string(),
    };
    let mut defined = BTreeSet::new();
    let mut undefined = BTreeSet::new();
    let is_archive = data.starts_with(b"!<arch>\n") || data.starts_with(b"!<thin>\n");
    let kind = match FileKind::parse(&*data) {
        _ if is_archive => {
            let archive = ArchiveFile::parse(&*data).map_err(malformed)?;
            for member in archive.members() {
                let member = member.map_err(malformed)?;
                let bytes = member.data(&*data).map_err(malformed)?;
                // Archives may carry non-object members; only objects have symbols.
                let Ok(file) = object::File::parse(bytes) else {
                    continue;
                };
                collect(file.symbols(), &mut defined, &mut undefined);
            }
            LibraryKind::StaticArchive
        }
        Ok(FileKind::Elf32 | FileKind::Elf64 | FileKind::MachO32 | FileKind::MachO64) => {
            let file = object::File::parse(&*data).map_err(malformed)?;
            if file.kind() == ObjectKind::Dynamic {
                collect(file.dynamic_symbols(), &mut defined, &mut undefined);
                LibraryKind::SharedObject
            } else {
                collect(file.symbols(), &mut defined, &mut undefined);
                LibraryKind::StaticArchive
            }
        }
        _ => {
            let magic = data
                .iter()
                .take(8)
                .map(|b| format!("{b:02x}"))
                .collect::<Vec<_>>()
                .join(" ");
            return Err(ReconcileError::UnrecognizedFormat {
                path: library.to_path_buf(),
                magic: if magic.is_empty() { "none, empty file".into() } else { magic },
            });
        }
    };
    undefined.retain(|n| !defined.contains(n));
    Ok(SymbolTable {
        origin: library.to_path_buf(),
        kind,
        defined,
        undefined,
    })
}

fn collect<'d, S: ObjectSymbol<'d>>(
    symbols: impl Iterator<Item = S>,
    defined: &mut BTreeSet<String>,
    undefined: &mut BTreeSet<String>,
) {
    for sym in symbols {
        let Ok(name) = sym.name() else { continue };
        if name.is_empty() || sym.is_local() {
            continue;
        }
        let name = strip_version(name).to_string();
        if sym.is_undefined() {
            undefined.insert(name);
        } else {
            defined.insert(name);
        }
    }
}

/// `memcpy@GLIBC_2.14` and `memcpy@@GLIBC_2.14` are `memcpy`.
pub fn strip_version(name: &str) -> &str {
    name.split_once('@').map_or(name, |(base, _)| base)
}

/// Symbol-table mode. A candidate is missing when no table defines it and it
/// is not in `system_symbols`; names in `system_symbols` are reported as
/// resolvable without the target.
pub fn reconcile(
    candidates: &[FunctionDecl],
    tables: &[SymbolTable],
    system_symbols: &BTreeSet<String>,
) -> SymbolReport {
    let missing = candidates
        .iter()
        .filter(|c| !system_symbols.contains(&c.name))
        .filter(|c| !tables.iter().any(|t| t.defined.contains(&c.name)))
        .map(|c| c.name.clone());
    let resolvable = candidates
        .iter()
        .filter(|c| system_symbols.contains(&c.name))
        .map(|c| c.name.clone());
    SymbolReport::new(missing, resolvable)
}

/// Finds the files behind the configured `libs`: `-lX` through the `-L`
/// directories of the linker flags and then the compiler's own search path,
/// and plain paths relative to `base_dir`.
pub fn locate_libraries(
    config: &WrapperConfig,
    base_dir: &Path,
    toolchain: &Toolchain,
) -> Result<Vec<PathBuf>, ReconcileError> {
    let search: Vec<PathBuf> = library_dirs(config.linker_flags.iter().chain(&config.libs))
        .into_iter()
        .map(|d| absolutize(Path::new(&d), base_dir))
        .collect();
    let mut out = Vec::new();
    let mut tokens = config.libs.iter();
    while let Some(tok) = tokens.next() {
        let name = if tok == "-l" {
            tokens.next().map(String::as_str)
        } else {
            tok.strip_prefix("-l")
        };
        if let Some(name) = name {
            out.push(find_library(name, &search, toolchain)?);
        } else if !tok.starts_with('-') {
            out.push(absolutize(Path::new(tok), base_dir));
        }
    }
    if out.is_empty() {
        return Err(ReconcileError::NoLibraries);
    }
    Ok(out)
}

/// The `-L` directories among `flags`, in order.
pub fn library_dirs<'a>(flags: impl IntoIterator<Item = &'a String>) -> Vec<String> {
    let mut out = Vec::new();
    let mut iter = flags.into_iter();
    while let Some(flag) = iter.next() {
        if flag == "-L" {
            if let Some(d) = iter.next() {
                out.push(d.clone());
            }
        } else if let Some(d) = flag.strip_prefix("-L") {
            out.push(d.to_string());
        }
    }
    out
}

fn find_library(name: &str, search: &[PathBuf], toolchain: &Toolchain) -> Result<PathBuf, ReconcileError> {
    // `-l:file.so` names a file exactly.
    let candidates: Vec<String> = match name.strip_prefix(':') {
        Some(exact) => vec![exact.to_string()],
        None => vec![format!("lib{name}.so"), format!("lib{name}.a")],
    };
    for dir in search {
        for c in &candidates {
            let p = dir.join(c);
            if p.is_file() {
                return Ok(p);
            }
        }
    }
    for c in &candidates {
        // Prints the bare name back when the file is not found.
        if let Ok(out) = toolchain.cc(&[format!("-print-file-name={c}")], None) {
            let p = PathBuf::from(String::from_utf8_lossy(&out.stdout).trim());
            if p.is_absolute() && p.is_file() {
                return Ok(p);
            }
        }
    }
    let mut searched: Vec<String> = search.iter().map(|d| d.display().to_string()).collect();
    searched.push("the compiler's library path".into());
    Err(ReconcileError::LibraryNotFound {
        spec: format!("-l{name}"),
        searched: searched.join(", "),
    })
}
