//! Installed wrappers and the link-step rewriter that activates them.
//!
//! An installed wrapper is a directory holding its configuration snapshot,
//! the `.wrap` manifest, the measurement runtime and any of the four wrapper
//! libraries. Wrappers are looked up in the directories of `LIBWRAP_PATH`
//! (each either an install prefix or a directory of wrappers), then in the
//! default prefix.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{WrapperConfig, CONFIG_FILE};
use crate::monitor::MONITOR_LIBRARY;
use crate::wrapgen::{manifest_file, wrap_flags_from_manifest, Linkage, Method, Variant};

pub const SEARCH_PATH_ENV: &str = "LIBWRAP_PATH";

/// Install location of wrapper `name` below `prefix`.
pub fn install_dir(prefix: &Path, name: &str) -> PathBuf {
    prefix.join("lib").join("libwrap").join(name)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstalledWrapper {
    pub name: String,
    pub dir: PathBuf,
    pub config: WrapperConfig,
    /// Present variants, in `Variant::ALL` order.
    pub variants: Vec<Variant>,
    pub manifest: PathBuf,
}

impl InstalledWrapper {
    /// Reads the wrapper installed in `dir`, if there is one.
    pub fn open(dir: &Path) -> Result<Option<Self>, LinkError> {
        let config_path = dir.join(CONFIG_FILE);
        if !config_path.is_file() {
            return Ok(None);
        }
        let config = WrapperConfig::load(&config_path).map_err(|e| LinkError::Broken {
            dir: dir.to_path_buf(),
            reason: e.to_string(),
        })?;
        let variants: Vec<Variant> = Variant::ALL
            .into_iter()
            .filter(|v| dir.join(v.library_file(&config.name)).is_file())
            .collect();
        if variants.is_empty() {
            return Err(LinkError::Broken {
                dir: dir.to_path_buf(),
                reason: "no wrapper library".into(),
            });
        }
        let manifest = dir.join(manifest_file(&config.name));
        if variants.iter().any(|v| v.method == Method::Linktime) && !manifest.is_file() {
            return Err(LinkError::Broken {
                dir: dir.to_path_buf(),
                reason: format!("missing {}", manifest.display()),
            });
        }
        Ok(Some(InstalledWrapper {
            name: config.name.clone(),
            dir: dir.to_path_buf(),
            config,
            variants,
            manifest,
        }))
    }

    pub fn library(&self, variant: Variant) -> PathBuf {
        self.dir.join(variant.library_file(&self.name))
    }

    pub fn wrap_flags(&self) -> Result<Vec<String>, LinkError> {
        let text = fs::read_to_string(&self.manifest).map_err(|e| LinkError::Broken {
            dir: self.dir.clone(),
            reason: format!("cannot read {}: {e}", self.manifest.display()),
        })?;
        Ok(wrap_flags_from_manifest(&text))
    }

    /// The variant serving `request`: the requested method (link-time by
    /// default), preferring the shared library unless a linkage is given.
    pub fn select(&self, request: &Request) -> Result<Variant, LinkError> {
        let method = request.method.unwrap_or(Method::Linktime);
        let linkages = match request.linkage {
            Some(l) => vec![l],
            None => vec![Linkage::Shared, Linkage::Static],
        };
        linkages
            .into_iter()
            .map(|l| Variant::new(method, l))
            .find(|v| self.variants.contains(v))
            .ok_or_else(|| LinkError::MissingVariant {
                name: self.name.clone(),
                requested: request.variant_label(),
                available: self.variants.iter().map(Variant::to_string).collect(),
            })
    }

    /// Arguments inserted into a link command for `variant`.
    pub fn link_arguments(&self, variant: Variant) -> Result<Vec<String>, LinkError> {
        let dir = self.dir.to_string_lossy().into_owned();
        let mut args = Vec::new();
        if variant.method == Method::Linktime {
            args.extend(self.wrap_flags()?);
        }
        args.push(self.library(variant).to_string_lossy().into_owned());
        if variant.linkage == Linkage::Static {
            args.push(self.dir.join(MONITOR_LIBRARY).to_string_lossy().into_owned());
            if variant.method == Method::Runtime {
                args.push("-ldl".into());
            }
        }
        args.push(format!("-Wl,-rpath,{dir}"));
        if variant.linkage == Linkage::Shared {
            args.push(format!("-Wl,-rpath-link,{dir}"));
        }
        Ok(args)
    }
}

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("unknown wrapper `{name}`; {}", available_text(available))]
    UnknownWrapper { name: String, available: Vec<String> },
    #[error("wrapper `{name}` has no {requested} library; available: {}", available.join(", "))]
    MissingVariant {
        name: String,
        requested: String,
        available: Vec<String>,
    },
    #[error("invalid wrapper request `{0}`; expected [METHOD:]NAME with METHOD one of linktime, runtime, linktime-static, linktime-shared, runtime-static, runtime-shared")]
    BadRequest(String),
    #[error("broken wrapper installation in {}: {reason}", dir.display())]
    Broken { dir: PathBuf, reason: String },
    #[error("no command given")]
    EmptyCommand,
}

fn available_text(names: &[String]) -> String {
    if names.is_empty() {
        "no wrappers installed".into()
    } else {
        format!("installed wrappers: {}", names.join(", "))
    }
}

/// A `--libwrap` argument: `[METHOD:]NAME`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub method: Option<Method>,
    pub linkage: Option<Linkage>,
    pub name: String,
}

impl Request {
    pub fn parse(s: &str) -> Result<Self, LinkError> {
        let bad = || LinkError::BadRequest(s.to_string());
        let (method, linkage, name) = match s.split_once(':') {
            None => (None, None, s),
            Some((prefix, name)) => {
                let (m, l) = match prefix.split_once('-') {
                    Some((m, l)) => (m, Some(l)),
                    None => (prefix, None),
                };
                let method = match m {
                    "linktime" => Method::Linktime,
                    "runtime" => Method::Runtime,
                    _ => return Err(bad()),
                };
                let linkage = match l {
                    None => None,
                    Some("static") => Some(Linkage::Static),
                    Some("shared") => Some(Linkage::Shared),
                    Some(_) => return Err(bad()),
                };
                (Some(method), linkage, name)
            }
        };
        if !crate::config::is_valid_name(name) {
            return Err(bad());
        }
        Ok(Request {
            method,
            linkage,
            name: name.to_string(),
        })
    }

    fn variant_label(&self) -> String {
        let m = match self.method.unwrap_or(Method::Linktime) {
            Method::Linktime => "linktime",
            Method::Runtime => "runtime",
        };
        match self.linkage {
            Some(Linkage::Static) => format!("{m}-static"),
            Some(Linkage::Shared) => format!("{m}-shared"),
            None => m.to_string(),
        }
    }
}

/// Where installed wrappers are looked up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    pub roots: Vec<PathBuf>,
}

impl Registry {
    /// The `LIBWRAP_PATH` entries followed by `default_prefix`.
    pub fn from_env(default_prefix: Option<PathBuf>) -> Self {
        let mut roots: Vec<PathBuf> = std::env::var_os(SEARCH_PATH_ENV)
            .map(|v| std::env::split_paths(&v).filter(|p| !p.as_os_str().is_empty()).collect())
            .unwrap_or_default();
        roots.extend(default_prefix);
        // Paths end up in rpaths, which must not depend on the directory of the run.
        if let Ok(cwd) = std::env::current_dir() {
            roots = roots.iter().map(|r| crate::fsutil::absolutize(r, &cwd)).collect();
        }
        Registry { roots }
    }

    fn candidates(&self, name: &str) -> Vec<PathBuf> {
        self.roots
            .iter()
            .flat_map(|r| [install_dir(r, name), r.join(name)])
            .collect()
    }

    /// The first installation of `name` along the search path.
    pub fn find(&self, name: &str) -> Result<InstalledWrapper, LinkError> {
        for dir in self.candidates(name) {
            if let Some(w) = InstalledWrapper::open(&dir)? {
                return Ok(w);
            }
        }
        Err(LinkError::UnknownWrapper {
            name: name.to_string(),
            available: self.list().into_keys().collect(),
        })
    }

    /// All wrappers found, by name; earlier roots shadow later ones.
    /// Broken installations are skipped.
    pub fn list(&self) -> BTreeMap<String, InstalledWrapper> {
        let mut out = BTreeMap::new();
        for root in &self.roots {
            for parent in [root.join("lib").join("libwrap"), root.clone()] {
                let Ok(entries) = fs::read_dir(&parent) else {
                    continue;
                };
                let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).collect();
                dirs.sort();
                for dir in dirs {
                    if let Ok(Some(w)) = InstalledWrapper::open(&dir) {
                        out.entry(w.name.clone()).or_insert(w);
                    }
                }
            }
        }
        out
    }
}

/// Options that make the driver stop before linking.
const NO_LINK: [&str; 3] = ["-c", "-S", "-E"];

/// Whether `command` (compiler driver and arguments) performs a link step.
pub fn links(command: &[String]) -> bool {
    !command.iter().skip(1).any(|a| NO_LINK.contains(&a.as_str()))
}

/// Inserts the arguments activating each wrapper into `command`. A wrapper's
/// arguments go right before the first of its target library arguments (its
/// configured `libs`) in the command, or at the end when there is none.
/// Commands that do not link are returned unchanged.
pub fn rewrite(command: &[String], wrappers: &[(InstalledWrapper, Variant)]) -> Result<Vec<String>, LinkError> {
    if command.is_empty() {
        return Err(LinkError::EmptyCommand);
    }
    if !links(command) {
        return Ok(command.to_vec());
    }
    // Insertions keyed by the index of the user argument they precede.
    let mut before: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (wrapper, variant) in wrappers {
        let args = wrapper.link_arguments(*variant)?;
        let at = command
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, a)| is_target_arg(a, &wrapper.config.libs))
            .map_or(command.len(), |(i, _)| i);
        before.entry(at).or_default().extend(args);
    }
    let mut out = Vec::with_capacity(command.len() + before.values().map(Vec::len).sum::<usize>());
    for (i, arg) in command.iter().enumerate() {
        if let Some(args) = before.remove(&i) {
            out.extend(args);
        }
        out.push(arg.clone());
    }
    if let Some(args) = before.remove(&command.len()) {
        out.extend(args);
    }
    Ok(out)
}

fn is_target_arg(arg: &str, libs: &[String]) -> bool {
    libs.iter()
        .filter(|l| l.starts_with("-l") && l.len() > 2 || !l.starts_with('-'))
        .any(|l| l == arg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_install(root: &Path, name: &str, variants: &[Variant]) -> InstalledWrapper {
        let dir = install_dir(root, name);
        fs::create_dir_all(&dir).unwrap();
        let mut config = WrapperConfig::new(name);
        config.libs = vec![format!("-l{name}"), "-lm".into()];
        config.store(&dir.join(CONFIG_FILE)).unwrap();
        fs::write(dir.join(manifest_file(name)), "foo\nbar\n").unwrap();
        for v in variants {
            fs::write(dir.join(v.library_file(name)), "").unwrap();
        }
        InstalledWrapper::open(&dir).unwrap().unwrap()
    }

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn requests() {
        assert_eq!(
            Request::parse("fftw3").unwrap(),
            Request { method: None, linkage: None, name: "fftw3".into() }
        );
        let r = Request::parse("runtime-static:fftw3").unwrap();
        assert_eq!((r.method, r.linkage), (Some(Method::Runtime), Some(Linkage::Static)));
        assert!(Request::parse("dynamic:fftw3").is_err());
        assert!(Request::parse("linktime:").is_err());
    }

    #[test]
    fn linktime_flags_go_before_the_target_library() {
        let root = tempfile::tempdir().unwrap();
        let w = fake_install(root.path(), "fftw3", &Variant::ALL);
        let dir = w.dir.display().to_string();
        let v = w.select(&Request::parse("fftw3").unwrap()).unwrap();
        let out = rewrite(&argv("cc app.c -lfftw3 -o app"), &[(w, v)]).unwrap();
        assert_eq!(
            out,
            argv(&format!(
                "cc app.c -Wl,--wrap=foo -Wl,--wrap=bar {dir}/libwrap_fftw3_linktime.so \
                 -Wl,-rpath,{dir} -Wl,-rpath-link,{dir} -lfftw3 -o app"
            ))
        );
    }

    #[test]
    fn runtime_requests_add_no_wrap_flags() {
        let root = tempfile::tempdir().unwrap();
        let w = fake_install(root.path(), "fftw3", &Variant::ALL);
        let dir = w.dir.display().to_string();
        let v = w.select(&Request::parse("runtime:fftw3").unwrap()).unwrap();
        let out = rewrite(&argv("cc app.c -o app -lm -lfftw3"), &[(w.clone(), v)]).unwrap();
        assert_eq!(
            out,
            argv(&format!(
                "cc app.c -o app {dir}/libwrap_fftw3_runtime.so -Wl,-rpath,{dir} -Wl,-rpath-link,{dir} -lm -lfftw3"
            ))
        );
        let v = w.select(&Request::parse("runtime-static:fftw3").unwrap()).unwrap();
        let out = rewrite(&argv("cc app.o"), &[(w, v)]).unwrap();
        assert_eq!(
            out,
            argv(&format!(
                "cc app.o {dir}/libwrap_fftw3_runtime.a {dir}/libwrapmon.so -ldl -Wl,-rpath,{dir}"
            ))
        );
    }

    #[test]
    fn compile_only_commands_pass_through() {
        let root = tempfile::tempdir().unwrap();
        let w = fake_install(root.path(), "z", &Variant::ALL);
        let cmd = argv("cc -c app.c -lz");
        assert_eq!(rewrite(&cmd, &[(w, Variant::ALL[1])]).unwrap(), cmd);
    }

    #[test]
    fn several_wrappers_compose() {
        let root = tempfile::tempdir().unwrap();
        let a = fake_install(root.path(), "a", &Variant::ALL);
        let b = fake_install(root.path(), "b", &Variant::ALL);
        let rt = Variant::new(Method::Runtime, Linkage::Shared);
        let out = rewrite(&argv("cc x.c -lb -la"), &[(a, rt), (b, rt)]).unwrap();
        let pos = |s: &str| out.iter().position(|a| a.ends_with(s)).unwrap();
        assert!(pos("libwrap_b_runtime.so") < pos("-lb"));
        assert!(pos("-lb") < pos("libwrap_a_runtime.so"));
        assert!(pos("libwrap_a_runtime.so") < pos("-la"));
    }

    #[test]
    fn missing_and_unknown_wrappers_are_explained() {
        let root = tempfile::tempdir().unwrap();
        let w = fake_install(root.path(), "only", &[Variant::new(Method::Linktime, Linkage::Static)]);
        let err = w.select(&Request::parse("runtime:only").unwrap()).unwrap_err();
        assert_eq!(err.to_string(), "wrapper `only` has no runtime library; available: linktime-static");
        assert_eq!(w.select(&Request::parse("only").unwrap()).unwrap().linkage, Linkage::Static);

        let reg = Registry { roots: vec![root.path().to_path_buf()] };
        let err = reg.find("nonexistent").unwrap_err();
        assert_eq!(err.to_string(), "unknown wrapper `nonexistent`; installed wrappers: only");
        let empty = Registry { roots: vec![] };
        assert!(empty.find("x").unwrap_err().to_string().ends_with("no wrappers installed"));
    }

    #[test]
    fn search_path_accepts_prefixes_and_wrapper_directories() {
        let root = tempfile::tempdir().unwrap();
        let w = fake_install(root.path(), "a", &Variant::ALL);
        let reg = Registry { roots: vec![w.dir.parent().unwrap().to_path_buf()] };
        assert_eq!(reg.find("a").unwrap().dir, w.dir);
        let reg = Registry { roots: vec![root.path().to_path_buf()] };
        assert_eq!(reg.list().keys().collect::<Vec<_>>(), ["a"]);
    }
}
