mod common;

use std::fs;
use std::path::Path;

use common::*;
use libwrap_core::config::{next_steps, WorkingDir};

const HEADER: &str = "int tw_add(int a, int b);\ndouble tw_half(double x);\n";
const LIB: &str = "#include \"tw.h\"\nint tw_add(int a, int b) { return a + b; }\ndouble tw_half(double x) { return x / 2; }\n";
const EXAMPLE: &str = "#include <stdio.h>\n#include \"libwrap.h\"\n\
int main(void) { printf(\"%d %g\\n\", tw_add(2, 3), tw_half(5)); return 0; }\n";

/// A working directory for the two-function `tw` library.
fn tw(sb: &Sandbox) -> (std::path::PathBuf, std::path::PathBuf) {
    let libdir = sb.path("twlib");
    write(&libdir.join("tw.h"), HEADER);
    shared_library(&libdir, "tw", LIB, &[]);
    let work = init_wrapper(sb, "tw", &libdir, "-ltw", &["tw.h"], EXAMPLE, &[]);
    (work, libdir)
}

fn installed_tw(sb: &Sandbox) -> (std::path::PathBuf, std::path::PathBuf) {
    let (work, libdir) = tw(sb);
    let w = work.to_str().unwrap();
    sb.libwrap_ok(&["build", w]);
    sb.libwrap_ok(&["install", w, "--prefix", sb.prefix().to_str().unwrap()]);
    (work, libdir)
}

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn usage_errors_exit_with_two() {
    let sb = Sandbox::new();
    assert_eq!(sb.libwrap(&[]).status.code(), Some(2));
    assert_eq!(sb.libwrap(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(sb.libwrap(&["init", "x"]).status.code(), Some(2), "--name is required");
    assert_eq!(sb.libwrap(&["link", "--", "cc"]).status.code(), Some(2), "--libwrap is required");
}

#[test]
fn failures_exit_with_one_and_a_message() {
    let sb = Sandbox::new();
    let out = sb.libwrap(&["build", "nowhere"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("libwrap: error: "), "{}", show(&out));

    let out = sb.libwrap(&["init", "cxx", "--name", "cxx", "-x", "c++"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("c++"), "{}", show(&out));
}

#[test]
fn init_prints_the_next_steps() {
    let sb = Sandbox::new();
    let dir = sb.path("w");
    let out = sb.libwrap_ok(&["init", dir.to_str().unwrap(), "--name", "w"]);
    let wd = WorkingDir::open(&dir).unwrap();
    assert_eq!(out, next_steps(&wd));
    for file in [&wd.config_file, &wd.header_aggregate, &wd.filter_file, &wd.example_source, &wd.readme] {
        assert!(file.is_file(), "{} missing", file.display());
    }
    let again = sb.libwrap(&["init", dir.to_str().unwrap(), "--name", "w"]);
    assert_eq!(again.status.code(), Some(1), "init must not overwrite: {}", show(&again));
}

#[test]
fn init_update_merges_settings() {
    let sb = Sandbox::new();
    let dir = sb.path("w");
    let d = dir.to_str().unwrap();
    sb.libwrap_ok(&["init", d, "--name", "w", "--libs", "-lw"]);
    sb.libwrap_ok(&["init", d, "--update", "--ellipsis-mapping", "wprintf=wvprintf"]);
    let config = WorkingDir::open(&dir).unwrap().load_config().unwrap();
    assert_eq!(config.libs, ["-lw"]);
    assert_eq!(config.ellipsis_mappings.get("wprintf").map(String::as_str), Some("wvprintf"));

    let out = sb.libwrap(&["init", d, "--update", "--name", "other"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn consistent_wrapper_checks_clean() {
    let sb = Sandbox::new();
    let (work, _) = tw(&sb);
    for mode in ["probe", "symtab"] {
        let out = sb.libwrap(&["check", work.to_str().unwrap(), "--mode", mode]);
        assert!(out.status.success(), "{}", show(&out));
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert_eq!(stdout, "checked 2 functions\nwrapper is consistent\n");
    }
}

#[test]
fn installcheck_needs_an_install() {
    let sb = Sandbox::new();
    let (work, _) = tw(&sb);
    let w = work.to_str().unwrap();
    sb.libwrap_ok(&["build", w]);
    let out = sb.libwrap(&["installcheck", w, "--prefix", sb.prefix().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", show(&out));
    assert!(stderr(&out).contains("unknown wrapper `tw`"), "{}", show(&out));
}

#[test]
fn install_info_installcheck_and_link() {
    let sb = Sandbox::new();
    let (work, libdir) = installed_tw(&sb);
    let installed = sb.prefix().join("lib/libwrap/tw");

    let list = sb.libwrap_ok(&["info"]);
    let lines: Vec<&str> = list.lines().collect();
    assert!(lines[0].starts_with("NAME"), "{list}");
    assert!(lines.iter().any(|l| l.starts_with("tw ")
        && l.contains("linktime-static,linktime-shared,runtime-static,runtime-shared")
        && l.ends_with(installed.to_str().unwrap())));

    let detail = sb.libwrap_ok(&["info", "tw"]);
    assert!(detail.contains("name: tw\n"), "{detail}");
    assert!(detail.contains("wrapped functions: 2 "), "{detail}");
    assert!(detail.contains("-ltw"), "{detail}");

    let check = sb.libwrap_ok(&["installcheck", work.to_str().unwrap(), "--prefix", sb.prefix().to_str().unwrap()]);
    assert!(check.contains("libwrap link --libwrap=tw"), "{check}");
    assert!(check.contains(&format!("LD_PRELOAD={}", installed.join("libwrap_tw_runtime.so").display())));

    let dry = sb.libwrap_ok(&["link", "--libwrap=tw", "--dry-run", "--", "cc", "app.c", "-o", "app", "-ltw"]);
    let d = installed.display();
    assert_eq!(
        dry.trim_end(),
        format!(
            "cc app.c -o app -Wl,--wrap=tw_add -Wl,--wrap=tw_half {d}/libwrap_tw_linktime.so -Wl,-rpath,{d} -Wl,-rpath-link,{d} -ltw"
        )
    );
    let dry = sb.libwrap_ok(&["link", "--libwrap=runtime-static:tw", "--dry-run", "--", "cc", "app.c", "-ltw"]);
    assert_eq!(
        dry.trim_end(),
        format!("cc app.c {d}/libwrap_tw_runtime.a {d}/libwrapmon.so -ldl -Wl,-rpath,{d} -ltw")
    );

    let exe = sb.path("app");
    link_program(&sb, Some("tw"), &work, &libdir, &["-ltw"], &exe);
    let profile = sb.path("app.json");
    assert_eq!(run_program(&exe, &profile, &[]), b"5 2.5\n");
    let report = sb.libwrap_ok(&["report", profile.to_str().unwrap()]);
    let names: Vec<&str> = report.lines().skip(1).map(|l| l.split_whitespace().last().unwrap()).collect();
    assert_eq!(names, ["tw_add", "tw_half"]);
}

#[test]
fn link_names_unknown_wrappers() {
    let sb = Sandbox::new();
    let out = sb.libwrap(&["link", "--libwrap=nope", "--", "cc", "a.c"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown wrapper `nope`; no wrappers installed"), "{}", show(&out));
}

#[test]
fn link_passes_the_exit_status_through() {
    let sb = Sandbox::new();
    installed_tw(&sb);
    let out = sb.libwrap(&["link", "--libwrap=tw", "--", "sh", "-c", "exit 7"]);
    assert_eq!(out.status.code(), Some(7), "{}", show(&out));
}

fn write_profile(path: &Path, pid: u32, count: u64) {
    let json = format!(
        r#"{{"pid":{pid},"regions":[{{"id":0,"name":"outer","file":"a.h","line":1}},{{"id":1,"name":"inner","file":"a.h","line":2}}],
"calltree":[{{"region":0,"count":{count},"incl_ns":3000000000,"excl_ns":1000000000,
"children":[{{"region":1,"count":2,"incl_ns":2000000000,"excl_ns":2000000000,"children":[]}}]}}]}}"#
    );
    fs::write(path, json).unwrap();
}

#[test]
fn report_merges_profiles() {
    let sb = Sandbox::new();
    let (a, b) = (sb.path("a.json"), sb.path("b.json"));
    write_profile(&a, 1, 1);
    write_profile(&b, 2, 3);
    let tree = sb.libwrap_ok(&["report", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(
        tree,
        "       count     incl [s]     excl [s]  region\n\
         \x20          4     6.000000     2.000000  outer\n\
         \x20          4     4.000000     4.000000    inner\n"
    );
    let flat = sb.libwrap_ok(&["report", "--flat", a.to_str().unwrap()]);
    assert_eq!(
        flat,
        "       count     incl [s]     excl [s]  region\n\
         \x20          2     2.000000     2.000000  inner\n\
         \x20          1     3.000000     1.000000  outer\n"
    );
    fs::write(&b, "{").unwrap();
    let out = sb.libwrap(&["report", b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
