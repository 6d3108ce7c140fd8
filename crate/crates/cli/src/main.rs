mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Create, check, install and use interception wrappers for C libraries.
#[derive(Debug, Parser)]
#[command(name = "libwrap", version, about)]
struct Cli {
    /// Print every compiler and tool invocation before running it.
    #[arg(long, global = true)]
    print_commands: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Create a working directory for a new wrapper, or update its settings.
    Init(InitArgs),
    /// Build the example, scan the headers and build the wrapper libraries.
    Build {
        /// Working directory.
        #[arg(default_value = ".")]
        dir: PathBuf,
    },
    /// Check the wrapped functions against the symbols the libraries define.
    Check {
        #[arg(default_value = ".")]
        dir: PathBuf,
        /// How to check: link a test program per function, or read symbol tables.
        #[arg(long, value_enum, default_value_t = Mode::Probe)]
        mode: Mode,
        /// Concurrent test programs (0: one per CPU).
        #[arg(long, short = 'j', default_value_t = 0)]
        jobs: usize,
    },
    /// Install the built wrapper.
    Install {
        #[arg(default_value = ".")]
        dir: PathBuf,
        /// Install prefix; the wrapper goes to PREFIX/lib/libwrap/NAME.
        #[arg(long)]
        prefix: Option<PathBuf>,
    },
    /// Link and run the example with the installed wrapper, once per method.
    Installcheck {
        #[arg(default_value = ".")]
        dir: PathBuf,
        /// Install prefix used by `install`.
        #[arg(long)]
        prefix: Option<PathBuf>,
    },
    /// Run a compile or link command with wrappers activated.
    Link {
        /// Wrapper to activate, as [METHOD:]NAME with METHOD one of linktime,
        /// runtime or either suffixed with -static or -shared.
        #[arg(long = "libwrap", value_name = "WRAPPER", required = true)]
        wrappers: Vec<String>,
        /// Print the rewritten command instead of running it.
        #[arg(long)]
        dry_run: bool,
        /// The command, e.g. `cc app.c -lfoo -o app`.
        #[arg(required = true, trailing_var_arg = true, allow_hyphen_values = true)]
        command: Vec<String>,
    },
    /// List installed wrappers, or show one in detail.
    Info {
        name: Option<String>,
        /// Also look in this install prefix.
        #[arg(long)]
        prefix: Option<PathBuf>,
    },
    /// Show profiles as a call tree; several files are merged.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Per-function totals sorted by exclusive time instead of the tree.
        #[arg(long)]
        flat: bool,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Mode {
    Probe,
    Symtab,
}

#[derive(Debug, Args)]
struct InitArgs {
    /// Working directory to create (or to update with --update).
    dir: PathBuf,
    /// Wrapper name, used for the library and install directory names.
    #[arg(long, required_unless_present = "update")]
    name: Option<String>,
    /// Human-readable name of the wrapped library.
    #[arg(long)]
    display_name: Option<String>,
    /// Preprocessor flags for the library headers, e.g. "-I/opt/foo/include".
    #[arg(long, allow_hyphen_values = true)]
    cppflags: Option<String>,
    /// Linker flags, e.g. "-L/opt/foo/lib -Wl,-rpath,/opt/foo/lib".
    #[arg(long, allow_hyphen_values = true)]
    ldflags: Option<String>,
    /// The libraries to wrap, e.g. "-lfoo".
    #[arg(long, allow_hyphen_values = true)]
    libs: Option<String>,
    /// Language of the library headers.
    #[arg(short = 'x', default_value = "c")]
    language: String,
    /// Forward the variadic FUNC to VFUNC, which takes a va_list instead of `...`.
    #[arg(long = "ellipsis-mapping", value_name = "FUNC=VFUNC")]
    ellipsis_mappings: Vec<String>,
    /// FUNC, declared as `FUNC()`, takes no arguments.
    #[arg(long = "variadic-is-void", value_name = "FUNC")]
    variadic_is_void: Vec<String>,
    /// Default install prefix for this wrapper.
    #[arg(long)]
    prefix: Option<PathBuf>,
    /// Merge the settings into an existing working directory.
    #[arg(long)]
    update: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("libwrap: error: {e}");
            ExitCode::from(1)
        }
    }
}
