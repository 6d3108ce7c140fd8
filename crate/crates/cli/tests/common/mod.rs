//! Helpers shared by the CLI test targets: fixture libraries built with the
//! system C compiler and a driver for the `libwrap` binary.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const LIBWRAP: &str = env!("CARGO_BIN_EXE_libwrap");

pub struct Sandbox {
    pub root: tempfile::TempDir,
}

impl Sandbox {
    pub fn new() -> Self {
        Sandbox {
            root: tempfile::Builder::new().prefix("libwrap-test-").tempdir().unwrap(),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.path().join(rel)
    }

    pub fn prefix(&self) -> PathBuf {
        self.path("prefix")
    }

    /// Runs `libwrap` with the sandbox prefix on the search path.
    pub fn libwrap(&self, args: &[&str]) -> Output {
        Command::new(LIBWRAP)
            .args(args)
            .current_dir(self.root.path())
            .env("LIBWRAP_PATH", self.prefix())
            .env_remove("LIBWRAP_PROFILE_OUT")
            .output()
            .unwrap()
    }

    /// Like [`Sandbox::libwrap`], failing with the output on a non-zero exit.
    pub fn libwrap_ok(&self, args: &[&str]) -> String {
        let out = self.libwrap(args);
        if !out.status.success() {
            panic!("libwrap {} failed:\n{}", args.join(" "), show(&out));
        }
        String::from_utf8_lossy(&out.stdout).into_owned()
    }
}

pub fn show(out: &Output) -> String {
    format!(
        "status {}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

pub fn write(path: &Path, text: &str) {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).unwrap();
    }
    fs::write(path, text).unwrap();
}

pub fn run_checked(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{cmd:?} failed:\n{}", show(&out));
    out
}

/// A shared library `lib<name>.so` in `dir` built from `source`.
pub fn shared_library(dir: &Path, name: &str, source: &str, extra: &[&str]) -> PathBuf {
    let src = dir.join(format!("{name}.c"));
    write(&src, source);
    let lib = dir.join(format!("lib{name}.so"));
    run_checked(
        Command::new("cc")
            .args(["-shared", "-fPIC", "-O1", "-I"])
            .arg(dir)
            .arg(&src)
            .arg("-o")
            .arg(&lib)
            .args(extra),
    );
    lib
}

/// A working directory for a wrapper around the libraries in `libdir`.
/// `extra` are further `init` arguments.
pub fn init_wrapper(
    sb: &Sandbox,
    name: &str,
    libdir: &Path,
    libs: &str,
    headers: &[&str],
    example: &str,
    extra: &[&str],
) -> PathBuf {
    let dir = sb.path(&format!("work-{name}"));
    let lib = libdir.display().to_string();
    let mut args = vec![
        "init".to_string(),
        dir.display().to_string(),
        "--name".into(),
        name.into(),
        "--cppflags".into(),
        format!("-I{lib}"),
        "--ldflags".into(),
        format!("-L{lib} -Wl,-rpath,{lib}"),
        "--libs".into(),
        libs.into(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    sb.libwrap_ok(&args);
    let mut umbrella = fs::read_to_string(dir.join("libwrap.h")).unwrap();
    for h in headers {
        umbrella.push_str(&format!("#include <{h}>\n"));
    }
    write(&dir.join("libwrap.h"), &umbrella);
    write(&dir.join("main.c"), example);
    dir
}

/// Compiles and links `source` against the libraries in `libdir`, through
/// `libwrap link --libwrap=REQUEST` unless `request` is `None`.
pub fn link_program(
    sb: &Sandbox,
    request: Option<&str>,
    workdir: &Path,
    libdir: &Path,
    libs: &[&str],
    exe: &Path,
) {
    let lib = libdir.display().to_string();
    let mut cmd: Vec<String> = vec![
        "cc".into(),
        "-O1".into(),
        format!("-I{}", workdir.display()),
        format!("-I{lib}"),
        workdir.join("main.c").display().to_string(),
        "-o".into(),
        exe.display().to_string(),
        format!("-L{lib}"),
        format!("-Wl,-rpath,{lib}"),
    ];
    cmd.extend(libs.iter().map(|s| s.to_string()));
    match request {
        None => {
            run_checked(Command::new(&cmd[0]).args(&cmd[1..]));
        }
        Some(r) => {
            let mut args = vec!["link".to_string(), format!("--libwrap={r}"), "--".into()];
            args.extend(cmd);
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            sb.libwrap_ok(&args);
        }
    }
}

/// Runs `exe` with its profile written to `profile`; returns stdout.
pub fn run_program(exe: &Path, profile: &Path, args: &[&str]) -> Vec<u8> {
    let _ = fs::remove_file(profile);
    let out = run_checked(
        Command::new(exe)
            .args(args)
            .env("LIBWRAP_PROFILE_OUT", profile)
            .env_remove("LD_PRELOAD"),
    );
    out.stdout
}
