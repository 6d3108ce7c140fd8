//! Per-wrapper configuration and the working directory scaffold.
//!
//! The configuration is stored as a line-oriented `key = value` file. List
//! keys are repeated once per element, ellipsis mappings are written as
//! `ellipsis_mapping = printf:vprintf`, and lines starting with `#` are
//! comments. Serialization is deterministic, so re-writing an unchanged
//! configuration produces a byte-identical file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::fsutil::{dir_is_empty_or_missing, write_atomic};

pub const CONFIG_FILE: &str = "libwrap.conf";
pub const HEADER_FILE: &str = "libwrap.h";
pub const EXAMPLE_FILE: &str = "main.c";
pub const FILTER_FILE: &str = "libwrap.filter";
pub const README_FILE: &str = "README.md";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid wrapper name {0:?}: only letters, digits, '_' and '-' are allowed")]
    InvalidName(String),
    #[error("language {0:?} is not supported; only C libraries can be wrapped")]
    UnsupportedLanguage(String),
    #[error("{field}: invalid value {value:?} ({reason})")]
    InvalidValue {
        field: &'static str,
        value: String,
        reason: &'static str,
    },
    #[error("{0:?} is listed both as an ellipsis mapping and as variadic-is-void")]
    OverlappingVariadic(String),
    #[error("refusing to initialize {0}: directory is not empty")]
    DestinationNotEmpty(PathBuf),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{0}: not an initialized working directory (missing {1})")]
    NotInitialized(PathBuf, &'static str),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ConfigError + '_ {
    move |source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Language {
    #[default]
    C,
}

impl FromStr for Language {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "c" | "C" => Ok(Language::C),
            other => Err(ConfigError::UnsupportedLanguage(other.to_string())),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("c")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WrapperConfig {
    pub name: String,
    pub display_name: String,
    pub language: Language,
    pub preprocessor_flags: Vec<String>,
    pub linker_flags: Vec<String>,
    pub libs: Vec<String>,
    /// Variadic function name to the name of its `va_list` counterpart.
    pub ellipsis_mappings: BTreeMap<String, String>,
    /// Functions declared with `()` that really take no arguments.
    pub variadic_is_void: BTreeSet<String>,
    /// `None` installs into the toolkit's own tree.
    pub install_prefix: Option<PathBuf>,
}

impl WrapperConfig {
    pub fn new(name: impl Into<String>) -> Self {
        let name = name.into();
        WrapperConfig {
            display_name: name.clone(),
            name,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !is_valid_name(&self.name) {
            return Err(ConfigError::InvalidName(self.name.clone()));
        }
        check_line_value("display_name", &self.display_name, true)?;
        for flag in &self.preprocessor_flags {
            check_line_value("preprocessor_flags", flag, false)?;
        }
        for flag in &self.linker_flags {
            check_line_value("linker_flags", flag, false)?;
        }
        for lib in &self.libs {
            check_line_value("libs", lib, false)?;
        }
        for (from, to) in &self.ellipsis_mappings {
            check_identifier("ellipsis_mappings", from)?;
            check_identifier("ellipsis_mappings", to)?;
        }
        for f in &self.variadic_is_void {
            check_identifier("variadic_is_void", f)?;
            if self.ellipsis_mappings.contains_key(f) {
                return Err(ConfigError::OverlappingVariadic(f.clone()));
            }
        }
        if let Some(prefix) = &self.install_prefix {
            let s = prefix.to_string_lossy();
            check_line_value("install_prefix", &s, false)?;
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str("# libwrap wrapper configuration\n");
        out.push_str("# list keys may be repeated; one element per line\n");
        push_kv(&mut out, "name", &self.name);
        push_kv(&mut out, "display_name", &self.display_name);
        push_kv(&mut out, "language", &self.language.to_string());
        for v in &self.preprocessor_flags {
            push_kv(&mut out, "preprocessor_flags", v);
        }
        for v in &self.linker_flags {
            push_kv(&mut out, "linker_flags", v);
        }
        for v in &self.libs {
            push_kv(&mut out, "libs", v);
        }
        for (from, to) in &self.ellipsis_mappings {
            push_kv(&mut out, "ellipsis_mapping", &format!("{from}:{to}"));
        }
        for v in &self.variadic_is_void {
            push_kv(&mut out, "variadic_is_void", v);
        }
        if let Some(prefix) = &self.install_prefix {
            push_kv(&mut out, "install_prefix", &prefix.to_string_lossy());
        }
        out
    }

    /// Parses the `key = value` format. `origin` is only used in messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let err = |line: usize, message: String| ConfigError::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut cfg = WrapperConfig::default();
        let mut name = None;
        let mut display_name = None;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(lineno, format!("expected `key = value`, got {line:?}")))?;
            let key = key.trim();
            let value = value.trim().to_string();
            match key {
                "name" => name = Some(value),
                "display_name" => display_name = Some(value),
                "language" => {
                    cfg.language = value
                        .parse()
                        .map_err(|e: ConfigError| err(lineno, e.to_string()))?
                }
                "preprocessor_flags" => cfg.preprocessor_flags.push(value),
                "linker_flags" => cfg.linker_flags.push(value),
                "libs" => cfg.libs.push(value),
                "ellipsis_mapping" => {
                    let (from, to) = value.split_once(':').ok_or_else(|| {
                        err(
                            lineno,
                            format!("ellipsis_mapping must be `name:vname`, got {value:?}"),
                        )
                    })?;
                    cfg.ellipsis_mappings
                        .insert(from.trim().to_string(), to.trim().to_string());
                }
                "variadic_is_void" => {
                    cfg.variadic_is_void.insert(value);
                }
                "install_prefix" => cfg.install_prefix = Some(PathBuf::from(value)),
                other => return Err(err(lineno, format!("unknown key {other:?}"))),
            }
        }
        cfg.name = name.ok_or_else(|| err(0, "missing required key `name`".into()))?;
        cfg.display_name = match display_name {
            Some(d) if !d.is_empty() => d,
            _ => cfg.name.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn store(&self, path: &Path) -> Result<(), ConfigError> {
        self.validate()?;
        write_atomic(path, self.serialize().as_bytes()).map_err(io_err(path))
    }

    /// Returns the merged configuration without touching any file.
    pub fn merged(&self, changes: &ConfigChanges) -> Result<Self, ConfigError> {
        let mut next = self.clone();
        if let Some(d) = &changes.display_name {
            next.display_name = d.clone();
        }
        next.preprocessor_flags
            .extend(changes.preprocessor_flags.iter().cloned());
        next.linker_flags
            .extend(changes.linker_flags.iter().cloned());
        next.libs.extend(changes.libs.iter().cloned());
        for (k, v) in &changes.ellipsis_mappings {
            next.ellipsis_mappings.insert(k.clone(), v.clone());
        }
        next.variadic_is_void
            .extend(changes.variadic_is_void.iter().cloned());
        if let Some(p) = &changes.install_prefix {
            next.install_prefix = Some(p.clone());
        }
        next.validate()?;
        Ok(next)
    }
}

/// A partial configuration: lists are appended, maps and sets are merged,
/// scalars replace the stored value when present.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigChanges {
    pub display_name: Option<String>,
    pub preprocessor_flags: Vec<String>,
    pub linker_flags: Vec<String>,
    pub libs: Vec<String>,
    pub ellipsis_mappings: BTreeMap<String, String>,
    pub variadic_is_void: BTreeSet<String>,
    pub install_prefix: Option<PathBuf>,
}

fn push_kv(out: &mut String, key: &str, value: &str) {
    out.push_str(key);
    out.push_str(" = ");
    out.push_str(value);
    out.push('\n');
}

pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

pub fn is_c_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn check_identifier(field: &'static str, value: &str) -> Result<(), ConfigError> {
    if is_c_identifier(value) {
        Ok(())
    } else {
        Err(ConfigError::InvalidValue {
            field,
            value: value.to_string(),
            reason: "not a C identifier",
        })
    }
}

// Values must survive the line-oriented format unchanged.
fn check_line_value(
    field: &'static str,
    value: &str,
    allow_empty: bool,
) -> Result<(), ConfigError> {
    let reason = if value.is_empty() && !allow_empty {
        Some("empty")
    } else if value.contains(['\n', '\r']) {
        Some("contains a line break")
    } else if value.trim() != value {
        Some("leading or trailing whitespace")
    } else {
        None
    };
    match reason {
        Some(reason) => Err(ConfigError::InvalidValue {
            field,
            value: value.to_string(),
            reason,
        }),
        None => Ok(()),
    }
}

/// The files making up an initialized working directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkingDir {
    pub root: PathBuf,
    pub header_aggregate: PathBuf,
    pub example_source: PathBuf,
    pub filter_file: PathBuf,
    pub config_file: PathBuf,
    pub readme: PathBuf,
}

impl WorkingDir {
    pub fn at(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        WorkingDir {
            header_aggregate: root.join(HEADER_FILE),
            example_source: root.join(EXAMPLE_FILE),
            filter_file: root.join(FILTER_FILE),
            config_file: root.join(CONFIG_FILE),
            readme: root.join(README_FILE),
            root,
        }
    }

    /// Opens an existing working directory, checking that the scaffold is present.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let dir = Self::at(root);
        for (path, what) in [
            (&dir.config_file, CONFIG_FILE),
            (&dir.header_aggregate, HEADER_FILE),
            (&dir.example_source, EXAMPLE_FILE),
            (&dir.filter_file, FILTER_FILE),
        ] {
            if !path.is_file() {
                return Err(ConfigError::NotInitialized(dir.root.clone(), what));
            }
        }
        Ok(dir)
    }

    pub fn load_config(&self) -> Result<WrapperConfig, ConfigError> {
        WrapperConfig::load(&self.config_file)
    }

    pub fn build_dir(&self) -> PathBuf {
        self.root.join("build")
    }
}

/// Creates the scaffold for a new wrapper in `dest`, which must be empty or absent.
pub fn init_working_dir(config: &WrapperConfig, dest: &Path) -> Result<WorkingDir, ConfigError> {
    config.validate()?;
    if !dir_is_empty_or_missing(dest).map_err(io_err(dest))? {
        return Err(ConfigError::DestinationNotEmpty(dest.to_path_buf()));
    }
    fs::create_dir_all(dest).map_err(io_err(dest))?;
    let dir = WorkingDir::at(dest);

    let files: [(&Path, String); 5] = [
        (&dir.header_aggregate, stub_header(config)),
        (&dir.example_source, stub_example(config)),
        (&dir.filter_file, stub_filter(config)),
        (&dir.readme, readme_text(config)),
        (&dir.config_file, config.serialize()),
    ];
    for (path, contents) in files {
        write_atomic(path, contents.as_bytes()).map_err(io_err(path))?;
    }
    Ok(dir)
}

/// Merges `changes` into the stored configuration. On validation failure the
/// file on disk is left untouched.
pub fn update_config(
    dir: &WorkingDir,
    changes: &ConfigChanges,
) -> Result<WrapperConfig, ConfigError> {
    let current = dir.load_config()?;
    let next = current.merged(changes)?;
    next.store(&dir.config_file)?;
    Ok(next)
}

/// The instructions printed after a successful `init`.
pub fn next_steps(dir: &WorkingDir) -> String {
    format!(
        "Initialized wrapper working directory {root}\n\
         \n\
         Next steps:\n\
         \x20 1. Add an #include line for every library header to {header}\n\
         \x20 2. Write a small program using the library in {example}\n\
         \x20 3. Run `libwrap build {root}` to generate and build the wrapper\n\
         \x20    If it reports a mismatch, run `libwrap check {root}` and adjust {filter}\n\
         \x20 4. Run `libwrap install {root}` and `libwrap installcheck {root}`\n\
         \n\
         See {readme} for an explanation of warnings and errors.\n",
        root = dir.root.display(),
        header = dir.header_aggregate.display(),
        example = dir.example_source.display(),
        filter = dir.filter_file.display(),
        readme = dir.readme.display(),
    )
}

fn stub_header(config: &WrapperConfig) -> String {
    format!(
        "/* Umbrella header for the {} wrapper.\n \
         * Include every header an application normally includes from the library. */\n\n\
         /* #include <mylib.h> */\n",
        config.display_name
    )
}

fn stub_example(config: &WrapperConfig) -> String {
    format!(
        "/* Example program for the {} wrapper.\n \
         * It is compiled, linked and run to verify the library and the wrapper. */\n\
         #include \"libwrap.h\"\n\n\
         int\nmain(void)\n{{\n    return 0;\n}}\n",
        config.display_name
    )
}

fn stub_filter(config: &WrapperConfig) -> String {
    let mut out = String::from(
        "# Filter for the functions to wrap.\n\
         # Rules are `INCLUDE <glob>` or `EXCLUDE <glob>`; the last matching rule wins.\n\
         # `FILES:` rules match the header a function is declared in (the default section),\n\
         # `FUNCTIONS:` rules match function names.\n\
         # Without a matching FILES rule only headers below the -I directories are wrapped.\n",
    );
    let dirs = include_dirs(&config.preprocessor_flags);
    if !dirs.is_empty() {
        out.push_str("#\n# Include directories from the preprocessor flags:\n");
        for d in dirs {
            out.push_str(&format!("#   INCLUDE {}/*\n", d.trim_end_matches('/')));
        }
    }
    out.push_str("\nFILES:\n\nFUNCTIONS:\n");
    out
}

/// Directories given with `-I` (either `-Idir` or `-I dir`).
pub fn include_dirs(flags: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut iter = flags.iter();
    while let Some(flag) = iter.next() {
        if flag == "-I" {
            if let Some(dir) = iter.next() {
                out.push(dir.clone());
            }
        } else if let Some(dir) = flag.strip_prefix("-I") {
            out.push(dir.to_string());
        }
    }
    out
}

fn readme_text(config: &WrapperConfig) -> String {
    format!(
        r#"# Wrapper working directory: {display}

This directory holds everything needed to build the `{name}` library wrapper.

| File | Purpose |
|------|---------|
| `libwrap.conf` | wrapper configuration (flags, libraries, variadic settings) |
| `libwrap.h` | umbrella header: include every library header here |
| `main.c` | example program using the library |
| `libwrap.filter` | include/exclude rules for the functions to wrap |

## Steps

1. `libwrap build .` links the example against the library, scans `libwrap.h`,
   applies the filter, verifies that every selected function links, and builds
   the link-time and runtime wrapper libraries (static and shared).
2. `libwrap check .` compiles and links a probe for every selected function,
   with and without the target libraries, and writes `missing.txt` and
   `resolvable_without_target.txt`. Append the suggested `EXCLUDE` lines to
   `libwrap.filter` and repeat `build`.
3. `libwrap install .` and `libwrap installcheck .` install the wrapper and
   verify it with the example program.
4. `libwrap link --libwrap={name} cc app.c ... -o app` activates the wrapper.

## Warnings and errors

* **variadic function without mapping**: functions with `...` cannot be forwarded
  in C. If the library has a `va_list` counterpart (like `vprintf` for `printf`),
  add `ellipsis_mapping = printf:vprintf` to `libwrap.conf`; otherwise the
  function is skipped.
* **unknown argument list**: `f()` declares a function with unspecified
  arguments in C. If it really takes none, add `variadic_is_void = f`.
* **inline or static function**: calls to these are usually not visible to the
  linker and cannot be intercepted; the wrapper is still generated.
* **asm-renamed declaration**: the header redirects the function to another
  symbol; it is skipped.
* **example failed to link**: the example program or the link flags are wrong.
* **call-all example failed to link**: some declared functions are missing from
  the library; run `libwrap check`.
"#,
        display = config.display_name,
        name = config.name
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> WrapperConfig {
        let mut cfg = WrapperConfig::new("fftw3");
        cfg.libs.push("-lfftw3".into());
        cfg.preprocessor_flags.push("-I/opt/fftw/include".into());
        cfg
    }

    #[test]
    fn display_name_defaults_to_name() {
        let cfg = WrapperConfig::parse("name = zlib\n", "t").unwrap();
        assert_eq!(cfg.display_name, "zlib");
    }

    #[test]
    fn invalid_name_rejected() {
        let cfg = WrapperConfig::new("bad name!");
        assert!(matches!(cfg.validate(), Err(ConfigError::InvalidName(_))));
        let dir = tempfile::tempdir().unwrap();
        assert!(init_working_dir(&cfg, &dir.path().join("w")).is_err());
        assert!(!dir.path().join("w").exists());
    }

    #[test]
    fn cplusplus_rejected() {
        let err = "c++".parse::<Language>().unwrap_err();
        assert!(err.to_string().contains("only C"));
        assert!(WrapperConfig::parse("name = q\nlanguage = c++\n", "t").is_err());
    }

    #[test]
    fn init_creates_scaffold() {
        let tmp = tempfile::tempdir().unwrap();
        let dest = tmp.path().join("fftw3");
        let dir = init_working_dir(&sample(), &dest).unwrap();
        for p in [
            &dir.config_file,
            &dir.header_aggregate,
            &dir.example_source,
            &dir.filter_file,
            &dir.readme,
        ] {
            assert!(p.is_file(), "{} missing", p.display());
        }
        assert_eq!(fs::read_dir(&dest).unwrap().count(), 5);
        assert_eq!(dir.load_config().unwrap(), sample());
        assert!(fs::read_to_string(&dir.filter_file)
            .unwrap()
            .contains("INCLUDE /opt/fftw/include/*"));
    }

    #[test]
    fn second_init_refuses_and_keeps_edits() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = init_working_dir(&sample(), tmp.path()).unwrap();
        fs::write(&dir.header_aggregate, "#include <fftw3.h>\n").unwrap();
        let err = init_working_dir(&sample(), tmp.path()).unwrap_err();
        assert!(matches!(err, ConfigError::DestinationNotEmpty(_)));
        assert_eq!(
            fs::read_to_string(&dir.header_aggregate).unwrap(),
            "#include <fftw3.h>\n"
        );
    }

    #[test]
    fn update_appends_flags() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = init_working_dir(&sample(), tmp.path()).unwrap();
        let changes = ConfigChanges {
            preprocessor_flags: vec!["-I/opt/x".into()],
            ..Default::default()
        };
        let cfg = update_config(&dir, &changes).unwrap();
        assert_eq!(cfg.preprocessor_flags, ["-I/opt/fftw/include", "-I/opt/x"]);
        assert_eq!(dir.load_config().unwrap(), cfg);
    }

    #[test]
    fn empty_update_is_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = init_working_dir(&sample(), tmp.path()).unwrap();
        let before = fs::read(&dir.config_file).unwrap();
        update_config(&dir, &ConfigChanges::default()).unwrap();
        assert_eq!(fs::read(&dir.config_file).unwrap(), before);
    }

    #[test]
    fn update_stores_ellipsis_mapping() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = init_working_dir(&sample(), tmp.path()).unwrap();
        let mut changes = ConfigChanges::default();
        changes
            .ellipsis_mappings
            .insert("printf".into(), "vprintf".into());
        update_config(&dir, &changes).unwrap();
        let text = fs::read_to_string(&dir.config_file).unwrap();
        assert!(text.contains("ellipsis_mapping = printf:vprintf\n"));
        assert_eq!(
            dir.load_config().unwrap().ellipsis_mappings["printf"],
            "vprintf"
        );
    }

    #[test]
    fn invalid_update_leaves_file_intact() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = sample();
        cfg.variadic_is_void.insert("printf".into());
        let dir = init_working_dir(&cfg, tmp.path()).unwrap();
        let before = fs::read(&dir.config_file).unwrap();
        let mut changes = ConfigChanges::default();
        changes
            .ellipsis_mappings
            .insert("printf".into(), "vprintf".into());
        assert!(matches!(
            update_config(&dir, &changes),
            Err(ConfigError::OverlappingVariadic(_))
        ));
        assert_eq!(fs::read(&dir.config_file).unwrap(), before);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = WrapperConfig::parse("name = a\n\nbogus = 1\n", "cfg").unwrap_err();
        assert_eq!(err.to_string(), "cfg:3: unknown key \"bogus\"");
        assert!(WrapperConfig::parse("name = a\nno equals sign\n", "cfg").is_err());
    }

    #[test]
    fn next_steps_name_the_build_subcommand() {
        let dir = WorkingDir::at("/w");
        assert!(next_steps(&dir).contains("libwrap build /w"));
    }

    fn line_value() -> impl Strategy<Value = String> {
        "[-A-Za-z0-9_=/.,:#${} ]{0,12}[-A-Za-z0-9_=/.,:#${}]"
            .prop_map(|s| s.trim_start().to_string())
            .prop_filter("non-empty", |s| !s.is_empty())
    }

    fn ident() -> impl Strategy<Value = String> {
        "[A-Za-z_][A-Za-z0-9_]{0,10}"
    }

    prop_compose! {
        fn arb_config()(
            name in "[A-Za-z0-9_-]{1,16}",
            display in proptest::option::of(line_value()),
            cpp in proptest::collection::vec(line_value(), 0..4),
            ld in proptest::collection::vec(line_value(), 0..4),
            libs in proptest::collection::vec(line_value(), 0..4),
            maps in proptest::collection::btree_map(ident(), ident(), 0..4),
            voids in proptest::collection::btree_set(ident(), 0..4),
            prefix in proptest::option::of("/[a-z/]{1,10}[a-z]"),
        ) -> WrapperConfig {
            let variadic_is_void = voids.into_iter().filter(|v| !maps.contains_key(v)).collect();
            WrapperConfig {
                display_name: display.unwrap_or_else(|| name.clone()),
                name,
                language: Language::C,
                preprocessor_flags: cpp,
                linker_flags: ld,
                libs,
                ellipsis_mappings: maps,
                variadic_is_void,
                install_prefix: prefix.map(PathBuf::from),
            }
        }
    }

    proptest! {
        #[test]
        fn serialize_roundtrip(cfg in arb_config()) {
            prop_assert!(cfg.validate().is_ok());
            let text = cfg.serialize();
            let back = WrapperConfig::parse(&text, "prop").unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.serialize(), text);
        }
    }
}
