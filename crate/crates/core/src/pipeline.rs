//! The workflow on a working directory: `build`, `check`, `install` and
//! `installcheck`. Every compiler invocation runs in the working directory,
//! so relative paths in the configured flags mean the same thing as in the
//! user's own build.
//!
//! A failing step reports the [`Stage`], the command that failed (through the
//! underlying error) and what to do next.

use std::collections::BTreeMap;
use std::error::Error as StdError;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use thiserror::Error;

use crate::config::{WorkingDir, WrapperConfig, CONFIG_FILE, EXAMPLE_FILE, FILTER_FILE, HEADER_FILE};
use crate::declscan::{parse_declarations, preprocess, ScanResult, Warning};
use crate::filterset::{suggest_exclusions, FilterSet};
use crate::fsutil::{absolutize, write_atomic};
use crate::linkcmd::{install_dir, rewrite, InstalledWrapper, Registry, Request};
use crate::monitor::{build_monitor, MONITOR_LIBRARY, PROFILE_ENV};
use crate::profile::{CallTree, Profile};
use crate::symreconcile::{
    library_dirs, locate_libraries, probe_check, read_symbols, reconcile, ProbeOptions, SymbolReport,
    PROGRESS_NOTICE_THRESHOLD,
};
use crate::toolchain::{CommandLine, Toolchain};
use crate::wrapgen::{
    build_plan, generate_call_all_example, generate_linktime_source, generate_manifest,
    generate_runtime_source, generate_wrap_flags, linktime_source_file, manifest_file,
    runtime_source_file, Linkage, Method, Variant, WrapPlan, CALL_ALL_FILE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Setup,
    Example,
    Preprocess,
    Parse,
    Plan,
    LinkCheck,
    Compile,
    Check,
    Install,
    InstallCheck,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Setup => "reading the working directory",
            Stage::Example => "building the example program",
            Stage::Preprocess => "preprocessing the headers",
            Stage::Parse => "scanning the declarations",
            Stage::Plan => "selecting the functions to wrap",
            Stage::LinkCheck => "linking a call to every wrapped function",
            Stage::Compile => "building the wrapper libraries",
            Stage::Check => "checking the wrapped functions against the libraries",
            Stage::Install => "installing the wrapper",
            Stage::InstallCheck => "testing the installed wrapper",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} failed: {source}\nnext: {next}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn StdError + Send + Sync>,
    /// What the user should do about it.
    pub next: String,
}

impl StageError {
    fn new(stage: Stage, source: impl Into<Box<dyn StdError + Send + Sync>>, next: impl Into<String>) -> Self {
        StageError {
            stage,
            source: source.into(),
            next: next.into(),
        }
    }
}

/// Receives progress lines and warnings as the pipeline runs.
pub type Log<'a> = &'a (dyn Fn(&str) + Sync);

fn setup_err(e: impl Into<Box<dyn StdError + Send + Sync>>) -> StageError {
    StageError::new(
        Stage::Setup,
        e,
        "run `libwrap init` to create the working directory, or pass its path",
    )
}

fn io_err(stage: Stage, path: &Path) -> impl FnOnce(std::io::Error) -> StageError + '_ {
    move |e| {
        StageError::new(
            stage,
            format!("{}: {e}", path.display()),
            "check the permissions and free space of the working directory",
        )
    }
}

fn path_arg(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// The working directory with an absolute root.
pub fn open_dir(root: &Path) -> Result<WorkingDir, StageError> {
    let cwd = std::env::current_dir().map_err(setup_err)?;
    WorkingDir::open(absolutize(root, &cwd)).map_err(setup_err)
}

/// The declarations, the filter and the resulting plan.
pub struct Analysis {
    pub config: WrapperConfig,
    pub scan: ScanResult,
    pub filter: FilterSet,
    pub plan: WrapPlan,
    pub warnings: Vec<Warning>,
}

/// Stages 2 to 4: preprocess, scan, filter and plan. Warnings and skipped
/// declarations go to `log`.
pub fn analyze(dir: &WorkingDir, toolchain: &Toolchain, log: Log<'_>) -> Result<Analysis, StageError> {
    let config = dir.load_config().map_err(setup_err)?;
    let source = preprocess(&config, &dir.header_aggregate, toolchain).map_err(|e| {
        StageError::new(
            Stage::Preprocess,
            e,
            format!(
                "fix the #include lines in {} or the preprocessor flags (`libwrap init --update --cppflags ...`)",
                dir.header_aggregate.display()
            ),
        )
    })?;
    let scan = parse_declarations(&source, HEADER_FILE).map_err(|e| {
        StageError::new(
            Stage::Parse,
            e,
            "exclude the header from the umbrella header, or report the construct as a libwrap bug",
        )
    })?;
    for d in &scan.diagnostics {
        log(&format!("{}: note: {}", d.location, d.message));
    }
    let filter_text = fs::read_to_string(&dir.filter_file).map_err(io_err(Stage::Plan, &dir.filter_file))?;
    let filter = FilterSet::from_text(
        &filter_text,
        &dir.filter_file.to_string_lossy(),
        &config.preprocessor_flags,
        &dir.root,
    )
    .map_err(|e| StageError::new(Stage::Plan, e, format!("fix the rule in {FILTER_FILE}")))?;
    let (plan, warnings) = build_plan(&scan.decls, &scan.env, &filter, &config).map_err(|e| {
        StageError::new(
            Stage::Plan,
            e,
            "fix the setting with `libwrap init --update` or edit libwrap.conf",
        )
    })?;
    for w in &warnings {
        log(&w.to_string());
    }
    Ok(Analysis {
        config,
        scan,
        filter,
        plan,
        warnings,
    })
}

/// Everything `build` produced.
#[derive(Debug)]
pub struct BuildReport {
    pub plan: WrapPlan,
    pub warnings: Vec<Warning>,
    /// In `Variant::ALL` order.
    pub libraries: Vec<(Variant, PathBuf)>,
    pub monitor: PathBuf,
    pub manifest: PathBuf,
}

fn example_link_args(dir: &WorkingDir, config: &WrapperConfig, output: &Path) -> Vec<String> {
    let mut args = config.preprocessor_flags.clone();
    args.push(format!("-I{}", dir.root.display()));
    args.push(EXAMPLE_FILE.into());
    args.extend(["-o".into(), path_arg(output)]);
    args.extend(config.linker_flags.iter().cloned());
    args.extend(config.libs.iter().cloned());
    args
}

/// Runs the whole build: example, analysis, link check, then the four wrapper
/// libraries and the measurement runtime in `build/`.
pub fn build(dir: &WorkingDir, toolchain: &Toolchain, log: Log<'_>) -> Result<BuildReport, StageError> {
    let config = dir.load_config().map_err(setup_err)?;
    let out = dir.build_dir();
    fs::create_dir_all(&out).map_err(io_err(Stage::Setup, &out))?;
    let cc = |stage: Stage, args: &[String], next: &str| {
        toolchain
            .cc(args, Some(&dir.root))
            .map(|_| ())
            .map_err(|e| StageError::new(stage, e, next))
    };

    log("building the example program");
    cc(
        Stage::Example,
        &example_link_args(dir, &config, &out.join("example")),
        &format!(
            "the provided example is wrong: make {} build against the library, or fix the flags \
             with `libwrap init --update`",
            dir.example_source.display()
        ),
    )?;

    log("scanning the headers");
    let analysis = analyze(dir, toolchain, log)?;
    let plan = analysis.plan;
    if plan.functions.is_empty() {
        return Err(StageError::new(
            Stage::Plan,
            "nothing to wrap: no declared function passes the filter",
            format!(
                "check that {} includes the library headers and that {} selects them",
                HEADER_FILE, FILTER_FILE
            ),
        ));
    }
    log(&format!("wrapping {} functions", plan.functions.len()));

    let gen = |e: crate::wrapgen::GenError| {
        StageError::new(Stage::Compile, e, "exclude the function in libwrap.filter")
    };
    let write = |name: &str, text: &str| -> Result<PathBuf, StageError> {
        let p = out.join(name);
        write_atomic(&p, text.as_bytes()).map_err(io_err(Stage::Setup, &p))?;
        Ok(p)
    };

    log("linking a call to every wrapped function");
    let call_all = write(CALL_ALL_FILE, &generate_call_all_example(&plan).map_err(gen)?)?;
    let mut args = config.preprocessor_flags.clone();
    args.push(format!("-I{}", dir.root.display()));
    args.extend([path_arg(&call_all), "-o".into(), path_arg(&out.join("call_all"))]);
    args.extend(config.linker_flags.iter().cloned());
    args.extend(config.libs.iter().cloned());
    cc(
        Stage::LinkCheck,
        &args,
        &format!(
            "some wrapped functions have no definition in the libraries; run `libwrap check {}` \
             and add the suggested exclusions to {FILTER_FILE}",
            dir.root.display()
        ),
    )?;

    log("building the wrapper libraries");
    let bug = "this is likely a libwrap bug; please report the command above";
    let monitor = build_monitor(toolchain, &out).map_err(|e| StageError::new(Stage::Compile, e, bug))?;
    let manifest = write(&manifest_file(&config.name), &generate_manifest(&plan))?;
    let mut objects = BTreeMap::new();
    for (method, file, text) in [
        (Method::Linktime, linktime_source_file(&config.name), generate_linktime_source(&plan).map_err(gen)?),
        (Method::Runtime, runtime_source_file(&config.name), generate_runtime_source(&plan).map_err(gen)?),
    ] {
        let src = write(&file, &text)?;
        let obj = src.with_extension("o");
        let mut args = config.preprocessor_flags.clone();
        args.push(format!("-I{}", dir.root.display()));
        args.extend(["-fPIC".into(), "-O2".into(), "-c".into(), path_arg(&src), "-o".into(), path_arg(&obj)]);
        cc(Stage::Compile, &args, bug)?;
        objects.insert(method, obj);
    }

    let ar = std::env::var("AR").unwrap_or_else(|_| "ar".into());
    let mut libraries = Vec::new();
    for variant in Variant::ALL {
        let lib = out.join(variant.library_file(&config.name));
        let obj = path_arg(&objects[&variant.method]);
        match variant.linkage {
            Linkage::Static => {
                let _ = fs::remove_file(&lib);
                let command = CommandLine(vec![ar.clone(), "rcs".into(), path_arg(&lib), obj]);
                toolchain
                    .run(&command, Some(&dir.root))
                    .map_err(|e| StageError::new(Stage::Compile, e, bug))?;
            }
            Linkage::Shared => {
                let mut args = vec![
                    "-shared".into(),
                    format!("-Wl,-soname,{}", variant.library_file(&config.name)),
                    obj,
                    "-o".into(),
                    path_arg(&lib),
                ];
                if variant.method == Method::Linktime {
                    args.extend(generate_wrap_flags(&plan));
                }
                args.extend(config.linker_flags.iter().cloned());
                args.extend(config.libs.iter().cloned());
                args.extend([
                    format!("-L{}", out.display()),
                    "-lwrapmon".into(),
                    "-Wl,-rpath,$ORIGIN".into(),
                ]);
                if variant.method == Method::Runtime {
                    args.push("-ldl".into());
                }
                cc(Stage::Compile, &args, bug)?;
            }
        }
        libraries.push((variant, lib));
    }
    Ok(BuildReport {
        plan,
        warnings: analysis.warnings,
        libraries,
        monitor,
        manifest,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    /// Compile and link a program per function.
    Probe,
    /// Compare against the symbol tables of the libraries.
    Symtab,
}

#[derive(Debug)]
pub struct CheckReport {
    pub report: SymbolReport,
    pub candidates: usize,
    /// Filter lines excluding the missing functions; empty when clean.
    pub suggestion: String,
    pub missing_list: PathBuf,
    pub resolvable_list: PathBuf,
}

/// Checks every planned function against the target libraries and writes
/// the two lists to `build/`.
pub fn check(
    dir: &WorkingDir,
    toolchain: &Toolchain,
    mode: CheckMode,
    jobs: usize,
    log: Log<'_>,
) -> Result<CheckReport, StageError> {
    let analysis = analyze(dir, toolchain, log)?;
    let candidates = &analysis.plan.functions;
    let n = candidates.len();
    let check_err = |e| {
        StageError::new(
            Stage::Check,
            e,
            "make sure the library flags in libwrap.conf link a program (`libwrap init --update --libs ...`)",
        )
    };
    let report = match mode {
        CheckMode::Probe => {
            if n > PROGRESS_NOTICE_THRESHOLD {
                log(&format!(
                    "checking {n} functions, one test program each; this may take some time"
                ));
            }
            let step = (n / 10).max(1);
            let progress = |done: usize, total: usize| {
                if total > PROGRESS_NOTICE_THRESHOLD && (done % step == 0 || done == total) {
                    log(&format!("checked {done} of {total}"));
                }
            };
            let options = ProbeOptions {
                jobs,
                progress: Some(&progress),
            };
            probe_check(candidates, &analysis.scan.env, &analysis.config, toolchain, &dir.root, &options)
                .map_err(check_err)?
        }
        CheckMode::Symtab => {
            let libs = locate_libraries(&analysis.config, &dir.root, toolchain).map_err(check_err)?;
            let tables = libs
                .iter()
                .map(|l| read_symbols(l))
                .collect::<Result<Vec<_>, _>>()
                .map_err(check_err)?;
            reconcile(candidates, &tables, &Default::default())
        }
    };
    let out = dir.build_dir();
    fs::create_dir_all(&out).map_err(io_err(Stage::Check, &out))?;
    let (missing_list, resolvable_list) = report.write_lists(&out).map_err(io_err(Stage::Check, &out))?;
    Ok(CheckReport {
        suggestion: suggest_exclusions(&report),
        report,
        candidates: n,
        missing_list,
        resolvable_list,
    })
}

/// Copies the built wrapper to `<prefix>/lib/libwrap/<name>/`.
pub fn install(dir: &WorkingDir, prefix: &Path) -> Result<InstalledWrapper, StageError> {
    let config = dir.load_config().map_err(setup_err)?;
    let out = dir.build_dir();
    let mut files: Vec<String> = Variant::ALL.iter().map(|v| v.library_file(&config.name)).collect();
    files.push(MONITOR_LIBRARY.into());
    files.push(manifest_file(&config.name));
    let missing: Vec<&String> = files.iter().filter(|f| !out.join(f).is_file()).collect();
    if !missing.is_empty() {
        return Err(StageError::new(
            Stage::Install,
            format!(
                "missing build artifacts in {}: {}",
                out.display(),
                missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            ),
            format!("run `libwrap build {}` first", dir.root.display()),
        ));
    }
    let dest = install_dir(prefix, &config.name);
    fs::create_dir_all(&dest).map_err(io_err(Stage::Install, &dest))?;
    for f in &files {
        let to = dest.join(f);
        // Replace rather than overwrite: the old file may be mapped by a running process.
        let tmp = dest.join(format!(".{f}.tmp"));
        fs::copy(out.join(f), &tmp).map_err(io_err(Stage::Install, &to))?;
        fs::rename(&tmp, &to).map_err(io_err(Stage::Install, &to))?;
    }
    config
        .store(&dest.join(CONFIG_FILE))
        .map_err(|e| StageError::new(Stage::Install, e, "check the install prefix"))?;
    InstalledWrapper::open(&dest)
        .map_err(|e| StageError::new(Stage::Install, e, "check the install prefix"))?
        .ok_or_else(|| StageError::new(Stage::Install, "installation vanished", "check the install prefix"))
}

#[derive(Debug)]
pub struct MethodRun {
    pub method: Method,
    pub variant: Variant,
    pub executable: PathBuf,
    pub profile_path: PathBuf,
    pub profile: Profile,
}

#[derive(Debug)]
pub struct InstallCheckReport {
    pub wrapper: InstalledWrapper,
    pub runs: Vec<MethodRun>,
}

impl InstallCheckReport {
    /// Whether both methods recorded the same calls.
    pub fn counts_agree(&self) -> bool {
        let counts: Vec<_> = self
            .runs
            .iter()
            .map(|r| CallTree::from_profile(&r.profile).counts())
            .collect();
        counts.windows(2).all(|w| w[0] == w[1])
    }

    /// How to look at the results and use the wrapper.
    pub fn instructions(&self) -> String {
        let name = &self.wrapper.name;
        let mut text = String::from("Profiles written:\n");
        for r in &self.runs {
            text.push_str(&format!("  {:<17} {}\n", format!("{}:", r.variant), r.profile_path.display()));
        }
        text.push_str(&format!(
            "\nInspect a profile with:\n  libwrap report {}\n\
             \nLink an application with the wrapper:\n  libwrap link --libwrap={name} <link command>\n  \
             libwrap link --libwrap=runtime:{name} <link command>\n",
            self.runs.first().map_or(String::new(), |r| r.profile_path.display().to_string())
        ));
        let runtime = Variant::new(Method::Runtime, Linkage::Shared);
        if self.wrapper.variants.contains(&runtime) {
            text.push_str(&format!(
                "\nOr, without relinking, preload the runtime wrapper:\n  LD_PRELOAD={} ./app\n",
                self.wrapper.library(runtime).display()
            ));
        }
        text
    }
}

/// Builds the example with the installed wrapper, once per method, runs
/// both executables and reads their profiles.
pub fn installcheck(
    dir: &WorkingDir,
    registry: &Registry,
    toolchain: &Toolchain,
    log: Log<'_>,
) -> Result<InstallCheckReport, StageError> {
    let config = dir.load_config().map_err(setup_err)?;
    let next_install = format!("run `libwrap install {}` first", dir.root.display());
    let wrapper = registry
        .find(&config.name)
        .map_err(|e| StageError::new(Stage::InstallCheck, e, next_install.clone()))?;
    let out = dir.build_dir();
    fs::create_dir_all(&out).map_err(io_err(Stage::InstallCheck, &out))?;

    let lib_path = {
        let mut dirs: Vec<PathBuf> = library_dirs(config.linker_flags.iter().chain(&config.libs))
            .iter()
            .map(|d| absolutize(Path::new(d), &dir.root))
            .collect();
        if let Some(old) = std::env::var_os("LD_LIBRARY_PATH") {
            dirs.extend(std::env::split_paths(&old));
        }
        std::env::join_paths(dirs).unwrap_or_default()
    };

    let mut runs = Vec::new();
    for method in [Method::Linktime, Method::Runtime] {
        let request = Request {
            method: Some(method),
            linkage: None,
            name: config.name.clone(),
        };
        let variant = wrapper
            .select(&request)
            .map_err(|e| StageError::new(Stage::InstallCheck, e, next_install.clone()))?;
        let exe = out.join(format!("installcheck_{}", variant.to_string().replace('-', "_")));
        let mut command = toolchain.cc.clone();
        command.extend(example_link_args(dir, &config, &exe));
        let command = rewrite(&command, &[(wrapper.clone(), variant)])
            .map_err(|e| StageError::new(Stage::InstallCheck, e, next_install.clone()))?;
        log(&format!("linking the example with the {variant} wrapper"));
        toolchain.run(&CommandLine(command), Some(&dir.root)).map_err(|e| {
            StageError::new(
                Stage::InstallCheck,
                e,
                "the example built in `libwrap build` no longer links; rebuild and reinstall",
            )
        })?;

        let profile_path = out.join(format!("installcheck_{}.json", variant.to_string().replace('-', "_")));
        let _ = fs::remove_file(&profile_path);
        log(&format!("running {}", exe.display()));
        let output = Command::new(&exe)
            .current_dir(&dir.root)
            .env(PROFILE_ENV, &profile_path)
            .env("LD_LIBRARY_PATH", &lib_path)
            .output()
            .map_err(|e| StageError::new(Stage::InstallCheck, format!("cannot run {}: {e}", exe.display()), "check the example program"))?;
        if !output.status.success() {
            return Err(StageError::new(
                Stage::InstallCheck,
                format!(
                    "{} exited with {}\n{}",
                    exe.display(),
                    output.status,
                    String::from_utf8_lossy(&output.stderr).trim_end()
                ),
                format!("make {} exit with status 0", dir.example_source.display()),
            ));
        }
        let profile = Profile::load(&profile_path).map_err(|e| {
            StageError::new(
                Stage::InstallCheck,
                e,
                "the measurement runtime did not write a profile; run the example with LIBWRAP_VERBOSE=1",
            )
        })?;
        runs.push(MethodRun {
            method,
            variant,
            executable: exe,
            profile_path,
            profile,
        });
    }
    Ok(InstallCheckReport { wrapper, runs })
}
