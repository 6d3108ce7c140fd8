use std::fmt::Write as _;

use super::{named_params, GenError, WrapPlan};
use crate::declscan::types::{FunctionType, TypeExpr, TypeKind};
use crate::declscan::FunctionDecl;

const MONITOR_DECLS: &str = "\
unsigned libwrap_region_register(const char *name, const char *file, int line);
void libwrap_enter(unsigned region);
void libwrap_exit(unsigned region);
";

const REGION_HELPER: &str = "\
/* Region ids are cached as id + 1 so that 0 means unregistered. Concurrent
   first calls may both register; registration of the same triple is
   idempotent, so they agree on the id. */
__attribute__((unused)) static unsigned libwrap_region(unsigned *slot, const char *name,
                                                       const char *file, int line)
{
    unsigned id = __atomic_load_n(slot, __ATOMIC_ACQUIRE);
    if (id == 0) {
        id = libwrap_region_register(name, file, line) + 1;
        __atomic_store_n(slot, id, __ATOMIC_RELEASE);
    }
    return id - 1;
}
";

pub(crate) fn c_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\{:03o}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn gen_err(decl: &FunctionDecl) -> impl Fn(crate::declscan::types::RenderError) -> GenError + '_ {
    move |e| GenError {
        name: decl.name.clone(),
        reason: e.reason,
    }
}

fn function_expr(ft: FunctionType) -> TypeExpr {
    TypeExpr::new(TypeKind::Function(Box::new(ft)))
}

/// How a wrapper passes its arguments on.
struct Forward {
    /// Declared name (`F` or the mapped `vF`).
    target: String,
    /// Argument list, e.g. `arg0, arg1` or `arg0, ap`.
    args: String,
    /// Whether a `va_list ap` is built from the wrapper's own `...`.
    va: Option<String>,
    /// Signature of the function called.
    callee: FunctionType,
}

fn forward(plan: &WrapPlan, decl: &FunctionDecl, sig: &FunctionType) -> Forward {
    let fixed: Vec<String> = (0..sig.params.len()).map(|i| format!("arg{i}")).collect();
    match plan.ellipsis_mappings.get(&decl.name) {
        Some(to) if sig.variadic => {
            let last = fixed.last().cloned().unwrap_or_default();
            let mut args = fixed;
            args.push("ap".into());
            Forward {
                target: to.clone(),
                args: args.join(", "),
                va: Some(last),
                callee: plan.mapping_targets[to].function_type(),
            }
        }
        _ => Forward {
            target: decl.name.clone(),
            args: fixed.join(", "),
            va: None,
            callee: sig.clone(),
        },
    }
}

/// Statements performing `call`, storing the result in `ret` when non-void.
fn call_stmt(ret: &TypeExpr, call: &str, noreturn: bool) -> Result<String, crate::declscan::types::RenderError> {
    if noreturn {
        return Ok(format!("{call};\n    __builtin_unreachable();"));
    }
    if ret.is_void() {
        Ok(format!("{call};"))
    } else {
        Ok(format!("{} = {call};", ret.declare("ret")?))
    }
}

fn header_comment(out: &mut String, what: &str, plan: &WrapPlan) {
    let _ = writeln!(
        out,
        "/* {what} for {}, generated by libwrap. Do not edit. */\n",
        plan.display_name.replace("*/", "* /")
    );
}

fn region_args(decl: &FunctionDecl) -> String {
    format!(
        "{}, {}, {}",
        c_string(&decl.name),
        c_string(&decl.location.file.to_string_lossy()),
        decl.location.line
    )
}

/// `__wrap_F` definitions forwarding to `__real_F`.
pub fn generate_linktime_source(plan: &WrapPlan) -> Result<String, GenError> {
    let guard = plan.guard_symbol();
    let mut out = String::new();
    header_comment(&mut out, "Link-time wrapper", plan);
    let _ = writeln!(out, "#include {}", c_string(&plan.header));
    if !plan.ellipsis_mappings.is_empty() {
        out.push_str("#include <stdarg.h>\n");
    }
    out.push('\n');
    out.push_str(MONITOR_DECLS);
    let _ = writeln!(
        out,
        "\n/* Nonzero while a wrapper below forwards; read by the runtime wrapper. */\n\
         __attribute__((weak)) __thread unsigned {guard};\n"
    );
    out.push_str(REGION_HELPER);

    // Every `__real_` the wrappers call, including planned mapping targets.
    let planned: std::collections::BTreeSet<&str> = plan.functions.iter().map(|f| f.name.as_str()).collect();
    for decl in &plan.functions {
        let sig = plan.signature(decl);
        let real = function_expr(named_params(&sig))
            .declare(&format!("__real_{}", decl.name))
            .map_err(gen_err(decl))?;
        let _ = writeln!(out, "\nextern {real};");
    }

    for (index, decl) in plan.functions.iter().enumerate() {
        let sig = plan.signature(decl);
        let fwd = forward(plan, decl, &sig);
        // A mapped target that is itself wrapped is reached through `__real_`
        // so the forwarded call is not recorded as a nested region.
        let callee = if fwd.va.is_none() || planned.contains(fwd.target.as_str()) {
            format!("__real_{}", fwd.target)
        } else {
            fwd.target.clone()
        };
        let head = function_expr(named_params(&sig))
            .declare(&format!("__wrap_{}", decl.name))
            .map_err(gen_err(decl))?;
        let call = call_stmt(&sig.ret, &format!("{callee}({})", fwd.args), decl.noreturn)
            .map_err(gen_err(decl))?;
        let slot = format!("libwrap_region_{}", decl.name);

        let _ = writeln!(out, "\n/* {} */", decl.location.to_string().replace("*/", "* /"));
        let _ = writeln!(out, "static unsigned {slot};\n");
        let _ = writeln!(out, "{head}\n{{");
        let _ = writeln!(out, "    unsigned region = libwrap_region(&{slot}, {});", region_args(decl));
        if !decl.noreturn {
            let _ = writeln!(out, "    unsigned forwarding = {guard};");
        }
        if let Some(last) = &fwd.va {
            let _ = writeln!(out, "    va_list ap;\n    va_start(ap, {last});");
        }
        let _ = writeln!(out, "    libwrap_enter(region);");
        let _ = writeln!(out, "    {guard} = {};", WrapPlan::guard_value(index));
        let _ = writeln!(out, "    {call}");
        if !decl.noreturn {
            let _ = writeln!(out, "    {guard} = forwarding;");
            if fwd.va.is_some() {
                let _ = writeln!(out, "    va_end(ap);");
            }
            let _ = writeln!(out, "    libwrap_exit(region);");
            if !sig.ret.is_void() {
                let _ = writeln!(out, "    return ret;");
            }
        }
        out.push_str("}\n");
    }
    Ok(out)
}

/// Same-named definitions forwarding to the next definition in load order.
/// Inline or static functions are skipped: a definition cannot coexist with
/// the body in the header.
pub fn generate_runtime_source(plan: &WrapPlan) -> Result<String, GenError> {
    let guard = plan.guard_symbol();
    let mut out = String::new();
    header_comment(&mut out, "Runtime wrapper", plan);
    let _ = writeln!(out, "#include {}", c_string(&plan.header));
    out.push_str("#include <dlfcn.h>\n#include <stdio.h>\n#include <stdlib.h>\n");
    if !plan.ellipsis_mappings.is_empty() {
        out.push_str("#include <stdarg.h>\n");
    }
    out.push_str("\n#ifndef RTLD_NEXT\n#define RTLD_NEXT ((void *) -1l)\n#endif\n");
    // Definitions below spell array parameters decayed, e.g. `char buf[16]` as `char *`.
    out.push_str(
        "#if defined(__GNUC__) && !defined(__clang__) && __GNUC__ >= 11\n\
         #pragma GCC diagnostic ignored \"-Warray-parameter\"\n\
         #endif\n\n",
    );
    out.push_str(MONITOR_DECLS);
    let _ = writeln!(out, "\n__attribute__((weak)) __thread unsigned {guard};\n");
    out.push_str(REGION_HELPER);

    out.push_str("\nstatic const char *const libwrap_libraries[] = {\n");
    for lib in &plan.fallback_libraries {
        let _ = writeln!(out, "    {},", c_string(lib));
    }
    out.push_str("    0\n};\n");
    let _ = write!(
        out,
        r#"
/* The original definition: the next one after this object, else one in
   the target libraries loaded explicitly. Aborts when there is none. */
__attribute__((unused)) static void *libwrap_resolve(void **slot, const char *symbol)
{{
    const char *const *lib;
    void *fn = __atomic_load_n(slot, __ATOMIC_ACQUIRE);
    if (fn)
        return fn;
    fn = dlsym(RTLD_NEXT, symbol);
    for (lib = libwrap_libraries; !fn && *lib; ++lib) {{
        void *handle = dlopen(*lib, RTLD_LAZY | RTLD_GLOBAL);
        if (handle)
            fn = dlsym(handle, symbol);
    }}
    if (!fn) {{
        fprintf(stderr, "libwrap: no original definition of `%s` for the {} wrapper; searched the objects loaded after the wrapper", symbol);
        for (lib = libwrap_libraries; *lib; ++lib)
            fprintf(stderr, ", %s", *lib);
        fputc('\n', stderr);
        abort();
    }}
    __atomic_store_n(slot, fn, __ATOMIC_RELEASE);
    return fn;
}}
"#,
        plan.display_name.replace('%', "%%").replace('"', "\\\"")
    );

    for (index, decl) in plan.functions.iter().enumerate() {
        if decl.is_inline_or_static {
            let _ = writeln!(out, "\n/* {}: inline or static, not wrapped at runtime */", decl.name);
            continue;
        }
        let sig = plan.signature(decl);
        let fwd = forward(plan, decl, &sig);
        let head = function_expr(named_params(&sig))
            .declare(&decl.name)
            .map_err(gen_err(decl))?;
        let fn_ptr = TypeExpr::pointer_to(function_expr(strip_names(&fwd.callee)));
        let local = fn_ptr.declare("original").map_err(gen_err(decl))?;
        let cast = fn_ptr.declare("").map_err(gen_err(decl))?;
        let call = call_stmt(&sig.ret, &format!("original({})", fwd.args), decl.noreturn)
            .map_err(gen_err(decl))?;
        let orig_slot = format!("libwrap_original_{}", decl.name);
        let slot = format!("libwrap_region_{}", decl.name);

        let _ = writeln!(out, "\n/* {} */", decl.location.to_string().replace("*/", "* /"));
        let _ = writeln!(out, "static void *{orig_slot};");
        let _ = writeln!(out, "static unsigned {slot};\n");
        let _ = writeln!(out, "{head}\n{{");
        let _ = writeln!(
            out,
            "    {local} = __extension__ ({cast}) libwrap_resolve(&{orig_slot}, {});",
            c_string(&fwd.target)
        );
        if let Some(last) = &fwd.va {
            let _ = writeln!(out, "    va_list ap;\n    va_start(ap, {last});");
        }
        let tail = |out: &mut String, indent: &str| {
            if decl.noreturn {
                return;
            }
            if fwd.va.is_some() {
                let _ = writeln!(out, "{indent}va_end(ap);");
            }
        };
        // Reached from the link-time wrapper, which records the call itself.
        let _ = writeln!(out, "    if ({guard} == {}) {{", WrapPlan::guard_value(index));
        let _ = writeln!(out, "        {guard} = 0;");
        let _ = writeln!(out, "        {}", call.replace("\n    ", "\n        "));
        tail(&mut out, "        ");
        if !decl.noreturn {
            if sig.ret.is_void() {
                out.push_str("        return;\n");
            } else {
                out.push_str("        return ret;\n");
            }
        }
        out.push_str("    }\n");
        let _ = writeln!(out, "    unsigned region = libwrap_region(&{slot}, {});", region_args(decl));
        let _ = writeln!(out, "    libwrap_enter(region);");
        let _ = writeln!(out, "    {}", call);
        if !decl.noreturn {
            tail(&mut out, "    ");
            let _ = writeln!(out, "    libwrap_exit(region);");
            if !sig.ret.is_void() {
                let _ = writeln!(out, "    return ret;");
            }
        }
        out.push_str("}\n");
    }
    Ok(out)
}

fn strip_names(ft: &FunctionType) -> FunctionType {
    let mut ft = ft.clone();
    for p in &mut ft.params {
        p.name = None;
    }
    ft
}

/// Zero-valued argument objects and a call expression for `decl`.
pub(crate) fn zero_call(
    decl: &FunctionDecl,
    sig: &FunctionType,
    anon: &dyn Fn(crate::declscan::types::RecordKind, usize) -> Option<String>,
) -> Result<String, GenError> {
    let mut body = String::from("    {\n");
    let mut args = Vec::new();
    for (i, p) in sig.params.iter().enumerate() {
        let name = format!("a{i}");
        let d = p.ty.declare_with(&name, anon).map_err(gen_err(decl))?;
        let _ = writeln!(body, "        static {d};");
        args.push(name);
    }
    let _ = writeln!(body, "        (void) {}({});", decl.name, args.join(", "));
    body.push_str("    }\n");
    Ok(body)
}

/// A program calling every planned function once, inside a branch that is
/// never taken. It only has to link.
pub fn generate_call_all_example(plan: &WrapPlan) -> Result<String, GenError> {
    let mut out = String::new();
    header_comment(&mut out, "Link check calling every wrapped function", plan);
    let _ = writeln!(out, "#include {}\n", c_string(&plan.header));
    out.push_str("static volatile int libwrap_never;\n\nint main(void)\n{\n    if (libwrap_never) {\n");
    for decl in &plan.functions {
        let sig = plan.signature(decl);
        let call = zero_call(decl, &sig, &|_, _| None)?;
        for line in call.lines() {
            let _ = writeln!(out, "    {line}");
        }
    }
    out.push_str("    }\n    return 0;\n}\n");
    Ok(out)
}
