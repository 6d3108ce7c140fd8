use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{ReconcileError, SymbolReport};
use crate::config::WrapperConfig;
use crate::declscan::types::TypeEnv;
use crate::declscan::FunctionDecl;
use crate::toolchain::Toolchain;
use crate::wrapgen::{generate_probe_source, sanity_probe_source};

/// Above this many candidates, probing is slow enough to warrant a notice.
pub const PROGRESS_NOTICE_THRESHOLD: usize = 1000;

pub struct ProbeOptions<'a> {
    /// Concurrent probes; 0 means one per available CPU.
    pub jobs: usize,
    /// Called with (finished, total) after each probe.
    pub progress: Option<&'a (dyn Fn(usize, usize) + Sync)>,
}

impl Default for ProbeOptions<'_> {
    fn default() -> Self {
        ProbeOptions {
            jobs: 0,
            progress: None,
        }
    }
}

enum Outcome {
    Resolved,
    Missing,
    WithoutTarget,
}

/// Probe mode. Each candidate gets its own program, compiled once and linked
/// twice: with the target libraries (failure means missing) and without them
/// (success means a system library provides it). Commands run in `workdir`
/// so that relative paths in the flags resolve as for a build.
pub fn probe_check(
    candidates: &[FunctionDecl],
    env: &TypeEnv,
    config: &WrapperConfig,
    toolchain: &Toolchain,
    workdir: &Path,
    options: &ProbeOptions<'_>,
) -> Result<SymbolReport, ReconcileError> {
    sanity_check(config, toolchain, workdir)?;
    if candidates.is_empty() {
        return Ok(SymbolReport::default());
    }

    let jobs = match options.jobs {
        0 => std::thread::available_parallelism().map_or(4, |n| n.get()),
        n => n,
    }
    .min(candidates.len());
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Outcome, ReconcileError>>>> =
        Mutex::new((0..candidates.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= candidates.len() {
                    break;
                }
                let outcome = probe_one(&candidates[i], env, config, toolchain, workdir);
                let failed = outcome.is_err();
                results.lock().unwrap()[i] = Some(outcome);
                let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
                if let Some(progress) = options.progress {
                    progress(finished, candidates.len());
                }
                if failed {
                    // Stop handing out work; the first error is reported.
                    next.store(candidates.len(), Ordering::Relaxed);
                }
            });
        }
    });

    let mut missing = Vec::new();
    let mut resolvable = Vec::new();
    for (decl, outcome) in candidates.iter().zip(results.into_inner().unwrap()) {
        match outcome {
            None | Some(Ok(Outcome::Resolved)) => {}
            Some(Ok(Outcome::Missing)) => missing.push(decl.name.clone()),
            Some(Ok(Outcome::WithoutTarget)) => resolvable.push(decl.name.clone()),
            Some(Err(e)) => return Err(e),
        }
    }
    Ok(SymbolReport::new(missing, resolvable))
}

fn link_args(object: &Path, exe: &Path, config: &WrapperConfig, with_target: bool) -> Vec<String> {
    let mut args = vec![
        object.to_string_lossy().into_owned(),
        "-o".into(),
        exe.to_string_lossy().into_owned(),
    ];
    args.extend(config.linker_flags.iter().cloned());
    if with_target {
        args.extend(config.libs.iter().cloned());
    }
    args
}

fn compile_args(source: &Path, object: &Path, config: &WrapperConfig) -> Vec<String> {
    let mut args = config.preprocessor_flags.clone();
    args.extend([
        "-w".into(),
        "-fno-builtin".into(),
        "-c".into(),
        source.to_string_lossy().into_owned(),
        "-o".into(),
        object.to_string_lossy().into_owned(),
    ]);
    args
}

fn sanity_check(config: &WrapperConfig, toolchain: &Toolchain, workdir: &Path) -> Result<(), ReconcileError> {
    let dir = tempfile::Builder::new()
        .prefix("libwrap-probe-")
        .tempdir()
        .map_err(ReconcileError::TempDir)?;
    let src = dir.path().join("hello.c");
    std::fs::write(&src, sanity_probe_source()).map_err(ReconcileError::TempDir)?;
    let obj = dir.path().join("hello.o");
    let exe = dir.path().join("hello");
    toolchain
        .cc(&compile_args(&src, &obj, config), Some(workdir))
        .map_err(|source| ReconcileError::Sanity {
            what: "compile a trivial program",
            source,
        })?;
    toolchain
        .cc(&link_args(&obj, &exe, config, false), Some(workdir))
        .map_err(|source| ReconcileError::Sanity {
            what: "link a trivial program",
            source,
        })?;
    toolchain
        .cc(&link_args(&obj, &exe, config, true), Some(workdir))
        .map_err(|source| ReconcileError::Sanity {
            what: "link a trivial program against the target libraries",
            source,
        })?;
    Ok(())
}

fn probe_one(
    decl: &FunctionDecl,
    env: &TypeEnv,
    config: &WrapperConfig,
    toolchain: &Toolchain,
    workdir: &Path,
) -> Result<Outcome, ReconcileError> {
    let source = generate_probe_source(decl, env).map_err(|e| ReconcileError::ProbeSource {
        name: e.name,
        reason: e.reason,
    })?;
    let dir = tempfile::Builder::new()
        .prefix("libwrap-probe-")
        .tempdir()
        .map_err(ReconcileError::TempDir)?;
    let src = dir.path().join("probe.c");
    std::fs::write(&src, source).map_err(ReconcileError::TempDir)?;
    let obj = dir.path().join("probe.o");
    let exe = dir.path().join("probe");
    toolchain
        .cc(&compile_args(&src, &obj, config), Some(workdir))
        .map_err(|source| ReconcileError::ProbeCompile {
            name: decl.name.clone(),
            source,
        })?;
    if toolchain.cc(&link_args(&obj, &exe, config, true), Some(workdir)).is_err() {
        return Ok(Outcome::Missing);
    }
    if toolchain.cc(&link_args(&obj, &exe, config, false), Some(workdir)).is_ok() {
        return Ok(Outcome::WithoutTarget);
    }
    Ok(Outcome::Resolved)
}
