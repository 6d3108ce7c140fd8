use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use libwrap_core::config::{
    init_working_dir, next_steps, update_config, ConfigChanges, ConfigError, Language, WorkingDir, WrapperConfig,
};
use libwrap_core::linkcmd::{rewrite, LinkError, Registry, Request};
use libwrap_core::pipeline::{self, CheckMode, StageError};
use libwrap_core::profile::{merge, render_flat, render_tree, Profile, ProfileError};
use libwrap_core::toolchain::{CommandLine, Toolchain};
use libwrap_core::wrapgen::Variant;
use thiserror::Error;

use crate::{Cli, Cmd, InitArgs, Mode};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Stage(#[from] StageError),
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Link(#[from] LinkError),
    #[error("{0}")]
    Profile(#[from] ProfileError),
    #[error("{what}: {reason}")]
    Invalid { what: String, reason: String },
    #[error("cannot run `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
}

fn log(line: &str) {
    eprintln!("{line}");
}

/// The prefix of the toolkit's own install tree: the parent of the `bin`
/// directory holding this executable.
fn default_prefix() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    Some(exe.parent()?.parent()?.to_path_buf())
}

pub fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let mut toolchain = Toolchain::from_env();
    toolchain.print_commands = cli.print_commands;
    match cli.command {
        Cmd::Init(args) => init(args),
        Cmd::Build { dir } => {
            let dir = pipeline::open_dir(&dir)?;
            let report = pipeline::build(&dir, &toolchain, &log)?;
            println!(
                "built the {} wrapper for {} functions:",
                report.plan.display_name,
                report.plan.functions.len()
            );
            for (_, lib) in &report.libraries {
                println!("  {}", lib.display());
            }
            println!("next: libwrap install {}", dir.root.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Check { dir, mode, jobs } => {
            let dir = pipeline::open_dir(&dir)?;
            let mode = match mode {
                Mode::Probe => CheckMode::Probe,
                Mode::Symtab => CheckMode::Symtab,
            };
            let r = pipeline::check(&dir, &toolchain, mode, jobs, &log)?;
            println!("checked {} functions", r.candidates);
            if r.report.is_clean() {
                println!("wrapper is consistent");
                return Ok(ExitCode::SUCCESS);
            }
            if !r.report.missing.is_empty() {
                println!(
                    "{} functions are not defined in the libraries (list in {}):",
                    r.report.missing.len(),
                    r.missing_list.display()
                );
                for name in &r.report.missing {
                    println!("  {name}");
                }
            }
            if !r.report.resolvable_without_target.is_empty() {
                println!(
                    "{} functions link without the libraries (list in {}):",
                    r.report.resolvable_without_target.len(),
                    r.resolvable_list.display()
                );
                for name in &r.report.resolvable_without_target {
                    println!("  {name}");
                }
            }
            if !r.suggestion.is_empty() {
                println!("\nadd these lines to {}:\n", dir.filter_file.display());
                print!("{}", r.suggestion);
            }
            Ok(ExitCode::from(1))
        }
        Cmd::Install { dir, prefix } => {
            let dir = pipeline::open_dir(&dir)?;
            let prefix = install_prefix(&dir, prefix)?;
            let w = pipeline::install(&dir, &prefix)?;
            println!("installed the {} wrapper to {}", w.name, w.dir.display());
            println!("next: libwrap installcheck {}", dir.root.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Installcheck { dir, prefix } => {
            let dir = pipeline::open_dir(&dir)?;
            let prefix = install_prefix(&dir, prefix)?;
            let registry = Registry::from_env(Some(prefix));
            let report = pipeline::installcheck(&dir, &registry, &toolchain, &log)?;
            if !report.counts_agree() {
                return Err(CliError::Invalid {
                    what: "installcheck".into(),
                    reason: "the link-time and runtime wrappers recorded different calls".into(),
                });
            }
            print!("{}", report.instructions());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Link {
            wrappers,
            dry_run,
            command,
        } => link(&wrappers, dry_run, &command, &toolchain),
        Cmd::Info { name, prefix } => {
            let registry = Registry::from_env(prefix.or_else(default_prefix));
            info(&registry, name.as_deref())
        }
        Cmd::Report { files, flat } => {
            let profiles = files
                .iter()
                .map(|f| Profile::load(f))
                .collect::<Result<Vec<_>, _>>()?;
            let tree = merge(&profiles);
            print!("{}", if flat { render_flat(&tree) } else { render_tree(&tree) });
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn install_prefix(dir: &WorkingDir, given: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let config = dir.load_config()?;
    let cwd = std::env::current_dir().map_err(|e| CliError::Invalid {
        what: "current directory".into(),
        reason: e.to_string(),
    })?;
    given
        .map(|p| libwrap_core::fsutil::absolutize(&p, &cwd))
        .or(config.install_prefix)
        .or_else(default_prefix)
        .ok_or_else(|| CliError::Invalid {
            what: "install prefix".into(),
            reason: "cannot determine the toolkit's install tree; pass --prefix".into(),
        })
}

fn split_flags(what: &str, value: Option<&str>) -> Result<Vec<String>, CliError> {
    match value {
        None => Ok(Vec::new()),
        Some(v) => shlex::split(v).ok_or_else(|| CliError::Invalid {
            what: what.into(),
            reason: format!("unbalanced quotes in {v:?}"),
        }),
    }
}

fn init(args: InitArgs) -> Result<ExitCode, CliError> {
    let _: Language = args.language.parse()?;
    let mut mappings = BTreeMap::new();
    for m in &args.ellipsis_mappings {
        let (from, to) = m.split_once('=').ok_or_else(|| CliError::Invalid {
            what: "--ellipsis-mapping".into(),
            reason: format!("expected FUNC=VFUNC, got {m:?}"),
        })?;
        mappings.insert(from.trim().to_string(), to.trim().to_string());
    }
    let changes = ConfigChanges {
        display_name: args.display_name.clone(),
        preprocessor_flags: split_flags("--cppflags", args.cppflags.as_deref())?,
        linker_flags: split_flags("--ldflags", args.ldflags.as_deref())?,
        libs: split_flags("--libs", args.libs.as_deref())?,
        ellipsis_mappings: mappings,
        variadic_is_void: args.variadic_is_void.iter().cloned().collect::<BTreeSet<_>>(),
        install_prefix: args.prefix.clone(),
    };
    if args.update {
        let dir = WorkingDir::open(&args.dir)?;
        let config = update_config(&dir, &changes)?;
        if let Some(name) = &args.name {
            if *name != config.name {
                return Err(CliError::Invalid {
                    what: "--name".into(),
                    reason: format!("the working directory holds the `{}` wrapper", config.name),
                });
            }
        }
        println!("updated {}", dir.config_file.display());
        return Ok(ExitCode::SUCCESS);
    }
    let name = args.name.clone().unwrap_or_default();
    let config = WrapperConfig::new(name).merged(&changes)?;
    let dir = init_working_dir(&config, &args.dir)?;
    print!("{}", next_steps(&dir));
    Ok(ExitCode::SUCCESS)
}

fn link(requests: &[String], dry_run: bool, command: &[String], toolchain: &Toolchain) -> Result<ExitCode, CliError> {
    let registry = Registry::from_env(default_prefix());
    let mut wrappers = Vec::new();
    for r in requests {
        let request = Request::parse(r)?;
        let wrapper = registry.find(&request.name)?;
        let variant = wrapper.select(&request)?;
        wrappers.push((wrapper, variant));
    }
    let rewritten = CommandLine(rewrite(command, &wrappers)?);
    if dry_run {
        println!("{rewritten}");
        return Ok(ExitCode::SUCCESS);
    }
    if toolchain.print_commands {
        eprintln!("+ {rewritten}");
    }
    let status = Command::new(&rewritten.0[0])
        .args(&rewritten.0[1..])
        .status()
        .map_err(|source| CliError::Spawn {
            command: rewritten.to_string(),
            source,
        })?;
    Ok(match status.code() {
        Some(0) => ExitCode::SUCCESS,
        Some(c) => ExitCode::from(u8::try_from(c).unwrap_or(1)),
        None => ExitCode::from(1),
    })
}

fn info(registry: &Registry, name: Option<&str>) -> Result<ExitCode, CliError> {
    let Some(name) = name else {
        let all = registry.list();
        if all.is_empty() {
            println!("no wrappers installed");
            return Ok(ExitCode::SUCCESS);
        }
        let rows: Vec<(&String, String, String)> = all
            .values()
            .map(|w| {
                let variants: Vec<String> = w.variants.iter().map(Variant::to_string).collect();
                (&w.name, variants.join(","), display(&w.dir))
            })
            .collect();
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(4);
        let vwidth = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(8);
        println!("{:<width$}  {:<vwidth$}  DIRECTORY", "NAME", "VARIANTS");
        for (name, variants, dir) in rows {
            println!("{name:<width$}  {variants:<vwidth$}  {dir}");
        }
        return Ok(ExitCode::SUCCESS);
    };
    let w = registry.find(name)?;
    let functions = std::fs::read_to_string(&w.manifest)
        .map(|t| t.lines().filter(|l| !l.trim().is_empty()).count())
        .unwrap_or(0);
    println!("name: {}", w.name);
    println!("directory: {}", w.dir.display());
    for v in &w.variants {
        println!("variant: {v} {}", w.library(*v).display());
    }
    println!("wrapped functions: {functions} (listed in {})", display(&w.manifest));
    println!("\nconfiguration:");
    print!("{}", w.config.serialize());
    Ok(ExitCode::SUCCESS)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
