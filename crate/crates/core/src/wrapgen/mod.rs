//! Wrapper generation: the wrap plan and every C source derived from it.
//!
//! A plan yields two wrapper sources. The link-time wrapper defines
//! `__wrap_F` for each function `F` and forwards to `__real_F`; it becomes
//! active when the application is linked with `-Wl,--wrap=F`. The runtime
//! wrapper defines `F` itself and forwards to the next definition found by
//! the dynamic loader, so it becomes active when it precedes the library in
//! link order or is preloaded. Both report enter and exit events to the
//! measurement runtime, registering one region per function on first call.
//!
//! When both are active, a call passes through `__wrap_F` and then the
//! runtime `F`. A per-wrapper thread-local guard set by the link-time
//! wrapper tells the runtime wrapper to forward without recording, so each
//! call is recorded once.

mod emit;
mod probe;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::config::{WrapperConfig, HEADER_FILE};
use crate::declscan::types::{FunctionType, Param, TypeEnv};
use crate::declscan::{warn_unwrappable, FunctionDecl, Warning};
use crate::filterset::FilterSet;
use crate::fsutil::absolutize;
use crate::symreconcile::library_dirs;

pub use emit::{generate_call_all_example, generate_linktime_source, generate_runtime_source};
pub use probe::{generate_probe_source, sanity_probe_source};

#[derive(Debug, Clone)]
pub struct WrapPlan {
    pub wrapper_name: String,
    pub display_name: String,
    /// In declaration order: by file, then line.
    pub functions: Vec<FunctionDecl>,
    /// Planned variadic function to the `va_list` function it forwards to.
    pub ellipsis_mappings: BTreeMap<String, String>,
    pub variadic_is_void: BTreeSet<String>,
    /// Declarations of the mapping targets.
    pub mapping_targets: BTreeMap<String, FunctionDecl>,
    /// Header included by the generated sources.
    pub header: String,
    /// Loaded explicitly by runtime wrappers when the next-object lookup fails, in order.
    pub fallback_libraries: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("{setting} names `{name}`, which is not declared in the headers")]
    UnknownFunction { setting: &'static str, name: String },
    #[error("ellipsis mapping {from} -> {to}: {reason}")]
    InvalidMapping {
        from: String,
        to: String,
        reason: String,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot generate a wrapper for `{name}`: {reason}")]
pub struct GenError {
    pub name: String,
    pub reason: String,
}

/// Selects the functions to wrap: those the filter accepts, minus those
/// that cannot be forwarded. Warnings cover the selected functions only.
pub fn build_plan(
    decls: &[FunctionDecl],
    env: &TypeEnv,
    filter: &FilterSet,
    config: &WrapperConfig,
) -> Result<(WrapPlan, Vec<Warning>), PlanError> {
    let by_name: BTreeMap<&str, &FunctionDecl> = decls.iter().map(|d| (d.name.as_str(), d)).collect();

    let mut mapping_targets = BTreeMap::new();
    for (from, to) in &config.ellipsis_mappings {
        let unknown = |name: &str| PlanError::UnknownFunction {
            setting: "ellipsis_mapping",
            name: name.to_string(),
        };
        let f = by_name.get(from.as_str()).ok_or_else(|| unknown(from))?;
        let v = by_name.get(to.as_str()).ok_or_else(|| unknown(to))?;
        check_mapping(f, v, env).map_err(|reason| PlanError::InvalidMapping {
            from: from.clone(),
            to: to.clone(),
            reason,
        })?;
        mapping_targets.insert(to.clone(), (*v).clone());
    }
    for name in &config.variadic_is_void {
        if !by_name.contains_key(name.as_str()) {
            return Err(PlanError::UnknownFunction {
                setting: "variadic_is_void",
                name: name.clone(),
            });
        }
    }

    let selected: Vec<FunctionDecl> = decls.iter().filter(|d| filter.decide(d)).cloned().collect();
    let warnings = warn_unwrappable(&selected, &config.ellipsis_mappings, &config.variadic_is_void);
    let excluded: BTreeSet<&str> = warnings
        .iter()
        .filter(|w| w.excluded)
        .map(|w| w.name.as_str())
        .collect();
    let mut functions: Vec<FunctionDecl> = selected
        .iter()
        .filter(|d| !excluded.contains(d.name.as_str()))
        .cloned()
        .collect();
    functions.sort_by(|a, b| a.location.cmp(&b.location).then_with(|| a.name.cmp(&b.name)));

    let planned: BTreeSet<&str> = functions.iter().map(|f| f.name.as_str()).collect();
    let ellipsis_mappings: BTreeMap<String, String> = config
        .ellipsis_mappings
        .iter()
        .filter(|(from, _)| planned.contains(from.as_str()))
        .map(|(a, b)| (a.clone(), b.clone()))
        .collect();
    mapping_targets.retain(|to, _| ellipsis_mappings.values().any(|v| v == to));
    let variadic_is_void = config
        .variadic_is_void
        .iter()
        .filter(|n| planned.contains(n.as_str()))
        .cloned()
        .collect();

    let plan = WrapPlan {
        wrapper_name: config.name.clone(),
        display_name: config.display_name.clone(),
        functions,
        ellipsis_mappings,
        variadic_is_void,
        mapping_targets,
        header: HEADER_FILE.to_string(),
        fallback_libraries: fallback_libraries(config, &filter.base_dir),
    };
    Ok((plan, warnings))
}

fn check_mapping(f: &FunctionDecl, v: &FunctionDecl, env: &TypeEnv) -> Result<(), String> {
    if !f.variadic {
        return Err(format!("`{}` has no ellipsis argument", f.name));
    }
    if v.variadic || v.empty_parens_unknown_args {
        return Err(format!("`{}` must take a fixed argument list ending in va_list", v.name));
    }
    if v.params.len() != f.params.len() + 1 || !v.params.last().is_some_and(|p| env.is_va_list(&p.ty)) {
        return Err(format!(
            "`{}` must take the fixed arguments of `{}` followed by a va_list",
            v.name, f.name
        ));
    }
    let same = |a: &crate::declscan::types::TypeExpr, b: &crate::declscan::types::TypeExpr| {
        env.resolve(a).unqualified() == env.resolve(b).unqualified()
    };
    if !same(&f.return_type, &v.return_type) {
        return Err("return types differ".into());
    }
    for (i, (a, b)) in f.params.iter().zip(&v.params).enumerate() {
        if !same(&a.ty, &b.ty) {
            return Err(format!("parameter {} types differ", i + 1));
        }
    }
    Ok(())
}

/// Shared objects for the runtime wrapper's explicit-load fallback: each
/// `-lX` as `libX.so` in the `-L` directories, then by bare name; paths as given.
pub fn fallback_libraries(config: &WrapperConfig, base_dir: &Path) -> Vec<String> {
    let dirs = library_dirs(config.linker_flags.iter().chain(&config.libs));
    let mut out = Vec::new();
    let mut tokens = config.libs.iter();
    while let Some(tok) = tokens.next() {
        let name = if tok == "-l" {
            tokens.next().map(String::as_str)
        } else {
            tok.strip_prefix("-l")
        };
        match name {
            Some(exact) if exact.starts_with(':') => out.push(exact[1..].to_string()),
            Some(name) => {
                for d in &dirs {
                    let p = absolutize(Path::new(d), base_dir).join(format!("lib{name}.so"));
                    out.push(p.to_string_lossy().into_owned());
                }
                out.push(format!("lib{name}.so"));
            }
            None if tok.contains(".so") => {
                out.push(absolutize(Path::new(tok), base_dir).to_string_lossy().into_owned())
            }
            None => {}
        }
    }
    out.dedup();
    out
}

impl WrapPlan {
    /// The signature a wrapper is generated with: `f()` listed in
    /// `variadic_is_void` becomes `f(void)`.
    pub fn signature(&self, decl: &FunctionDecl) -> FunctionType {
        let mut ft = decl.function_type();
        if ft.unknown_args && self.variadic_is_void.contains(&decl.name) {
            ft.unknown_args = false;
        }
        ft
    }

    /// Value of the forwarding guard while `__wrap_F` forwards `functions[index]`.
    pub fn guard_value(index: usize) -> usize {
        index + 1
    }

    /// C identifier fragment for the wrapper name.
    pub fn symbol_stem(&self) -> String {
        c_stem(&self.wrapper_name)
    }

    pub fn guard_symbol(&self) -> String {
        format!("libwrap_{}_forwarding", self.symbol_stem())
    }
}

pub(crate) fn c_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Linker arguments activating the link-time wrapper, one per function.
pub fn generate_wrap_flags(plan: &WrapPlan) -> Vec<String> {
    plan.functions
        .iter()
        .map(|f| format!("-Wl,--wrap={}", f.name))
        .collect()
}

/// The `.wrap` manifest: wrapped function names, one per line.
pub fn generate_manifest(plan: &WrapPlan) -> String {
    plan.functions.iter().map(|f| format!("{}\n", f.name)).collect()
}

/// Reads a `.wrap` manifest back into linker arguments.
pub fn wrap_flags_from_manifest(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|name| format!("-Wl,--wrap={name}"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Linktime,
    Runtime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Linkage {
    Static,
    Shared,
}

/// One of the four wrapper libraries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Variant {
    pub method: Method,
    pub linkage: Linkage,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::new(Method::Linktime, Linkage::Static),
        Variant::new(Method::Linktime, Linkage::Shared),
        Variant::new(Method::Runtime, Linkage::Static),
        Variant::new(Method::Runtime, Linkage::Shared),
    ];

    pub const fn new(method: Method, linkage: Linkage) -> Self {
        Variant { method, linkage }
    }

    pub fn library_file(&self, wrapper_name: &str) -> String {
        let method = match self.method {
            Method::Linktime => "linktime",
            Method::Runtime => "runtime",
        };
        let ext = match self.linkage {
            Linkage::Static => "a",
            Linkage::Shared => "so",
        };
        format!("libwrap_{wrapper_name}_{method}.{ext}")
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.to_string() == s)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.method {
            Method::Linktime => "linktime",
            Method::Runtime => "runtime",
        };
        let l = match self.linkage {
            Linkage::Static => "static",
            Linkage::Shared => "shared",
        };
        write!(f, "{m}-{l}")
    }
}

pub fn linktime_source_file(wrapper_name: &str) -> String {
    format!("wrap_{wrapper_name}_linktime.c")
}

pub fn runtime_source_file(wrapper_name: &str) -> String {
    format!("wrap_{wrapper_name}_runtime.c")
}

pub fn manifest_file(wrapper_name: &str) -> String {
    format!("{wrapper_name}.wrap")
}

pub const CALL_ALL_FILE: &str = "call_all.c";

/// Parameters renamed `arg0`, `arg1`, ... so generated code never depends
/// on the names (or their absence) in the header.
pub(crate) fn named_params(ft: &FunctionType) -> FunctionType {
    let mut ft = ft.clone();
    for (i, p) in ft.params.iter_mut().enumerate() {
        *p = Param {
            name: Some(format!("arg{i}")),
            ty: p.ty.clone(),
        };
    }
    ft
}
