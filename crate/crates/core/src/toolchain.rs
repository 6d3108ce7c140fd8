//! Running the configured C compiler.

use std::fmt;
use std::io;
use std::path::Path;
use std::process::{Command, Output};

use thiserror::Error;

/// A command line, displayed shell-quoted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandLine(pub Vec<String>);

impl fmt::Display for CommandLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let quoted: Vec<String> = self.0.iter().map(|a| shell_quote(a)).collect();
        f.write_str(&quoted.join(" "))
    }
}

pub fn shell_quote(arg: &str) -> String {
    let safe = !arg.is_empty()
        && arg
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_=+/.,:@%^".contains(c));
    if safe {
        arg.to_string()
    } else {
        format!("'{}'", arg.replace('\'', r"'\''"))
    }
}

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("failed to run `{command}`: {source}")]
    Spawn {
        command: CommandLine,
        #[source]
        source: io::Error,
    },
    #[error("command failed ({status}): {command}\n{stderr}")]
    Failed {
        command: CommandLine,
        status: String,
        stderr: String,
    },
}

#[derive(Debug, Clone)]
pub struct Toolchain {
    /// Compiler driver plus any leading arguments, e.g. `["gcc", "-m64"]`.
    pub cc: Vec<String>,
    /// Echo every command to standard error before running it.
    pub print_commands: bool,
}

impl Default for Toolchain {
    fn default() -> Self {
        Toolchain {
            cc: vec!["cc".into()],
            print_commands: false,
        }
    }
}

impl Toolchain {
    /// Uses `$CC` when set, otherwise `cc`.
    pub fn from_env() -> Self {
        let cc = std::env::var("CC")
            .ok()
            .map(|v| v.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .filter(|v| !v.is_empty())
            .unwrap_or_else(|| vec!["cc".into()]);
        Toolchain {
            cc,
            print_commands: false,
        }
    }

    pub fn cc_command(&self, args: &[String]) -> CommandLine {
        let mut argv = self.cc.clone();
        argv.extend(args.iter().cloned());
        CommandLine(argv)
    }

    /// Runs `cc args...`; a non-zero exit is an error carrying the compiler's stderr.
    pub fn cc(&self, args: &[String], cwd: Option<&Path>) -> Result<Output, ToolError> {
        self.run(&self.cc_command(args), cwd)
    }

    pub fn run(&self, command: &CommandLine, cwd: Option<&Path>) -> Result<Output, ToolError> {
        if self.print_commands {
            eprintln!("+ {command}");
        }
        let mut cmd = Command::new(&command.0[0]);
        cmd.args(&command.0[1..]);
        if let Some(dir) = cwd {
            cmd.current_dir(dir);
        }
        let output = cmd.output().map_err(|source| ToolError::Spawn {
            command: command.clone(),
            source,
        })?;
        if output.status.success() {
            Ok(output)
        } else {
            Err(ToolError::Failed {
                command: command.clone(),
                status: output.status.to_string(),
                stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
            })
        }
    }
}
