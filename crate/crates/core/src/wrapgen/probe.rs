//! Header-free link probes: one small program per function that declares
//! just the types it needs, rebuilt from the scanned type definitions.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use super::emit::zero_call;
use super::GenError;
use crate::declscan::types::{FunctionType, RecordKind, RecordTag, TypeEnv, TypeExpr, TypeKind};
use crate::declscan::FunctionDecl;

struct Prelude<'e> {
    env: &'e TypeEnv,
    /// Definitions keyed by source order.
    items: BTreeMap<usize, String>,
    forward: BTreeSet<(&'static str, String)>,
    typedefs_seen: HashSet<String>,
    records_seen: HashSet<RecordTag>,
}

impl<'e> Prelude<'e> {
    fn new(env: &'e TypeEnv) -> Self {
        Prelude {
            env,
            items: BTreeMap::new(),
            forward: BTreeSet::new(),
            typedefs_seen: HashSet::new(),
            records_seen: HashSet::new(),
        }
    }

    fn anon(&self) -> impl Fn(RecordKind, usize) -> Option<String> + 'e {
        let env = self.env;
        move |kind, n| {
            env.records
                .get(&RecordTag::Anonymous(n))
                .map(|d| format!("{} {{ {} }}", kind.keyword(), d.body))
        }
    }

    fn need_type(&mut self, ty: &TypeExpr) -> Result<(), String> {
        let mut refs = Vec::new();
        ty.visit(&mut |t| match &t.kind {
            TypeKind::Typedef(n) => refs.push(Ref::Typedef(n.clone())),
            TypeKind::Record { kind, tag } => refs.push(Ref::Record(*kind, tag.clone())),
            _ => {}
        });
        for r in refs {
            match r {
                Ref::Typedef(n) => self.need_typedef(&n)?,
                Ref::Record(k, t) => self.need_record(k, &t)?,
            }
        }
        Ok(())
    }

    fn need_typedef(&mut self, name: &str) -> Result<(), String> {
        if !self.typedefs_seen.insert(name.to_string()) {
            return Ok(());
        }
        let Some(def) = self.env.typedefs.get(name) else {
            // Compiler built-ins such as __builtin_va_list need no definition.
            return Ok(());
        };
        self.need_type(&def.ty)?;
        let text = def
            .ty
            .declare_with(name, &self.anon())
            .map_err(|e| format!("typedef `{name}`: {}", e.reason))?;
        self.items.insert(def.order, format!("typedef {text};"));
        Ok(())
    }

    fn need_record(&mut self, kind: RecordKind, tag: &RecordTag) -> Result<(), String> {
        if !self.records_seen.insert(tag.clone()) {
            return Ok(());
        }
        if let RecordTag::Named(name) = tag {
            if kind != RecordKind::Enum {
                self.forward.insert((kind.keyword(), name.clone()));
            }
        }
        let Some(def) = self.env.records.get(tag) else {
            if let (RecordKind::Enum, RecordTag::Named(name)) = (kind, tag) {
                self.forward.insert(("enum", name.clone()));
            }
            return Ok(());
        };
        for t in &def.typedef_deps {
            self.need_typedef(t)?;
        }
        for (k, t) in &def.record_deps {
            self.need_record(*k, &RecordTag::Named(t.clone()))?;
        }
        if let RecordTag::Named(name) = tag {
            self.items.insert(
                def.order,
                format!("{} {name} {{ {} }};", kind.keyword(), def.body),
            );
        }
        Ok(())
    }

    fn render(&self) -> String {
        let mut out = String::new();
        for (kw, name) in &self.forward {
            let _ = writeln!(out, "{kw} {name};");
        }
        for text in self.items.values() {
            out.push_str(text);
            out.push('\n');
        }
        out
    }
}

enum Ref {
    Typedef(String),
    Record(RecordKind, RecordTag),
}

/// A unit declaring `decl` and calling it with zero-valued arguments, with
/// the types it mentions defined in place of the library's headers.
/// `f()` in `variadic_is_void` is called without arguments like any `f()`.
pub fn generate_probe_source(decl: &FunctionDecl, env: &TypeEnv) -> Result<String, GenError> {
    let err = |reason: String| GenError {
        name: decl.name.clone(),
        reason,
    };
    let mut ft: FunctionType = decl.function_type();
    for p in &mut ft.params {
        p.name = None;
    }
    let fn_ty = TypeExpr::new(TypeKind::Function(Box::new(ft.clone())));
    let mut prelude = Prelude::new(env);
    prelude.need_type(&fn_ty).map_err(err)?;
    let anon = prelude.anon();
    let proto = fn_ty
        .declare_with(&decl.name, &anon)
        .map_err(|e| err(e.reason))?;

    let mut out = format!("/* link probe for {} */\n", decl.name);
    out.push_str(&prelude.render());
    let _ = writeln!(out, "{proto};\n");
    out.push_str("static volatile int libwrap_never;\n\nint main(void)\n{\n    if (libwrap_never)\n");
    out.push_str(&zero_call(decl, &ft, &anon)?);
    out.push_str("    return 0;\n}\n");
    Ok(out)
}

/// Checks that the toolchain can build a program at all.
pub fn sanity_probe_source() -> &'static str {
    "int main(void)\n{\n    return 0;\n}\n"
}
