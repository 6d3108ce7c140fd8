//! Header scanning: preprocess the umbrella header with the user's compiler
//! and extract every external C function declaration from the result.

mod lexer;
mod parser;
pub mod types;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::WrapperConfig;
use crate::toolchain::{ToolError, Toolchain};
pub use lexer::parse_line_marker;
use types::{FunctionType, Param, RenderError, TypeEnv, TypeExpr, TypeKind};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location {
    pub file: PathBuf,
    pub line: u32,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file.display(), self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDecl {
    pub name: String,
    pub return_type: TypeExpr,
    pub params: Vec<Param>,
    pub variadic: bool,
    pub empty_parens_unknown_args: bool,
    pub is_inline_or_static: bool,
    pub noreturn: bool,
    pub location: Location,
}

impl FunctionDecl {
    pub fn function_type(&self) -> FunctionType {
        FunctionType {
            ret: self.return_type.clone(),
            params: self.params.clone(),
            variadic: self.variadic,
            unknown_args: self.empty_parens_unknown_args,
        }
    }

    /// `int foo(int a, char *b)`, with parameter names as declared.
    pub fn prototype(&self) -> Result<String, RenderError> {
        TypeExpr::new(TypeKind::Function(Box::new(self.function_type()))).declare(&self.name)
    }

    /// Same name and signature, ignoring parameter names and location.
    pub fn same_signature(&self, other: &FunctionDecl) -> bool {
        self.name == other.name && self.function_type().same_signature(&other.function_type())
    }
}

/// A declaration that was seen but deliberately left out of the result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub name: String,
    pub location: Location,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    /// In order of first declaration.
    pub decls: Vec<FunctionDecl>,
    pub env: TypeEnv,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Error)]
pub enum DeclScanError {
    #[error("{}:{line}: {message} (at `{token}`)", file.display())]
    Syntax {
        file: PathBuf,
        line: u32,
        token: String,
        message: String,
    },
    #[error("conflicting declarations of `{name}` at {first} and {second}")]
    Incompatible {
        name: String,
        first: Location,
        second: Location,
    },
    #[error("preprocessing {header} failed: {source}")]
    Preprocess {
        header: PathBuf,
        #[source]
        source: ToolError,
    },
}

/// Parses preprocessed C. `origin` names the input before the first line marker.
pub fn parse_declarations(source: &str, origin: &str) -> Result<ScanResult, DeclScanError> {
    let lexed = lexer::tokenize(source, origin).map_err(|e| DeclScanError::Syntax {
        file: e.file,
        line: e.line,
        token: String::new(),
        message: e.message,
    })?;
    parser::Parser::new(&lexed.tokens, &lexed.files).run()
}

/// Runs `cc -E` on the umbrella header with the configured preprocessor
/// flags. The working directory is the header's directory, so relative `-I`
/// flags and line-marker paths are relative to it.
pub fn preprocess(
    config: &WrapperConfig,
    header: &Path,
    toolchain: &Toolchain,
) -> Result<String, DeclScanError> {
    let mut args: Vec<String> = vec!["-E".into(), "-x".into(), "c".into()];
    args.extend(config.preprocessor_flags.iter().cloned());
    let file_name = header
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| header.to_string_lossy().into_owned());
    args.push(file_name);
    let cwd = header.parent().filter(|p| !p.as_os_str().is_empty());
    let output = toolchain
        .cc(&args, cwd)
        .map_err(|source| DeclScanError::Preprocess {
            header: header.to_path_buf(),
            source,
        })?;
    Ok(String::from_utf8_lossy(&output.stdout).into_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum WarningKind {
    /// No out-of-line symbol is guaranteed; calls may be inlined.
    InlineOrStatic,
    /// `...` without a `va_list` counterpart cannot be forwarded in C.
    VariadicWithoutMapping,
    /// `f()` not declared as taking no arguments.
    UnknownArguments,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub kind: WarningKind,
    pub name: String,
    pub location: Location,
    /// Whether the function is left out of the wrapper because of this warning.
    pub excluded: bool,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            WarningKind::InlineOrStatic => {
                "is inline or static; calls to it may not be interceptable"
            }
            WarningKind::VariadicWithoutMapping => {
                "has an ellipsis argument which cannot be forwarded in C; add an ellipsis_mapping to its v-version to wrap it"
            }
            WarningKind::UnknownArguments => {
                "is declared with an empty argument list (unknown arguments in C); add variadic_is_void if it takes none"
            }
        };
        write!(f, "{}: warning: `{}` {what}", self.location, self.name)?;
        if self.excluded {
            f.write_str(" (skipped)")?;
        }
        Ok(())
    }
}

/// Warnings for declarations that cannot be wrapped as written.
pub fn warn_unwrappable(
    decls: &[FunctionDecl],
    ellipsis_mappings: &BTreeMap<String, String>,
    variadic_is_void: &BTreeSet<String>,
) -> Vec<Warning> {
    let mut out = Vec::new();
    for d in decls {
        let mut warn = |kind, excluded| {
            out.push(Warning {
                kind,
                name: d.name.clone(),
                location: d.location.clone(),
                excluded,
            })
        };
        if d.is_inline_or_static {
            warn(WarningKind::InlineOrStatic, false);
        }
        if d.variadic && !ellipsis_mappings.contains_key(&d.name) {
            warn(WarningKind::VariadicWithoutMapping, true);
        }
        if d.empty_parens_unknown_args && !variadic_is_void.contains(&d.name) {
            warn(WarningKind::UnknownArguments, true);
        }
    }
    out
}
