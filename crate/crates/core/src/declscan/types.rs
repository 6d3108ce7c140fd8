//! C type expressions and declarator rendering.

use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Qualifiers {
    pub is_const: bool,
    pub is_volatile: bool,
    pub is_restrict: bool,
}

impl Qualifiers {
    pub const NONE: Qualifiers = Qualifiers {
        is_const: false,
        is_volatile: false,
        is_restrict: false,
    };

    pub fn is_empty(&self) -> bool {
        !(self.is_const || self.is_volatile || self.is_restrict)
    }

    pub fn union(self, other: Qualifiers) -> Qualifiers {
        Qualifiers {
            is_const: self.is_const || other.is_const,
            is_volatile: self.is_volatile || other.is_volatile,
            is_restrict: self.is_restrict || other.is_restrict,
        }
    }

    fn words(&self) -> impl Iterator<Item = &'static str> {
        [
            (self.is_const, "const"),
            (self.is_volatile, "volatile"),
            (self.is_restrict, "restrict"),
        ]
        .into_iter()
        .filter_map(|(on, w)| on.then_some(w))
    }
}

impl fmt::Display for Qualifiers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let words: Vec<_> = self.words().collect();
        f.write_str(&words.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordKind {
    Struct,
    Union,
    Enum,
}

impl RecordKind {
    pub fn keyword(self) -> &'static str {
        match self {
            RecordKind::Struct => "struct",
            RecordKind::Union => "union",
            RecordKind::Enum => "enum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RecordTag {
    Named(String),
    /// Untagged definition, numbered in order of appearance.
    Anonymous(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Param {
    pub name: Option<String>,
    pub ty: TypeExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FunctionType {
    pub ret: TypeExpr,
    pub params: Vec<Param>,
    pub variadic: bool,
    /// `f()` in C: the argument list is unspecified.
    pub unknown_args: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TypeKind {
    /// Builtin arithmetic or `void` type, in canonical spelling (`unsigned long`).
    Scalar(String),
    Record {
        kind: RecordKind,
        tag: RecordTag,
    },
    Typedef(String),
    Pointer(Box<TypeExpr>),
    Function(Box<FunctionType>),
    Array(Box<TypeExpr>, Option<u64>),
}

/// A C type. Qualifiers belong to the outermost level; for arrays they are the
/// qualifiers written inside the brackets of a parameter (`char *argv[const]`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TypeExpr {
    pub quals: Qualifiers,
    pub kind: TypeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderError {
    pub reason: String,
}

impl fmt::Display for RenderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.reason)
    }
}

impl std::error::Error for RenderError {}

impl TypeExpr {
    pub fn new(kind: TypeKind) -> Self {
        TypeExpr {
            quals: Qualifiers::NONE,
            kind,
        }
    }

    pub fn scalar(name: &str) -> Self {
        Self::new(TypeKind::Scalar(name.to_string()))
    }

    pub fn typedef(name: &str) -> Self {
        Self::new(TypeKind::Typedef(name.to_string()))
    }

    pub fn record(kind: RecordKind, tag: &str) -> Self {
        Self::new(TypeKind::Record {
            kind,
            tag: RecordTag::Named(tag.to_string()),
        })
    }

    pub fn pointer_to(inner: TypeExpr) -> Self {
        Self::new(TypeKind::Pointer(Box::new(inner)))
    }

    pub fn with_quals(mut self, quals: Qualifiers) -> Self {
        self.quals = self.quals.union(quals);
        self
    }

    pub fn is_void(&self) -> bool {
        matches!(&self.kind, TypeKind::Scalar(s) if s == "void")
    }

    /// The same type with its outermost qualifiers removed.
    pub fn unqualified(&self) -> TypeExpr {
        TypeExpr {
            quals: Qualifiers::NONE,
            kind: self.kind.clone(),
        }
    }

    /// Parameter adjustment: arrays become pointers, functions become
    /// pointers to functions.
    pub fn decayed(self) -> TypeExpr {
        match self.kind {
            TypeKind::Array(elem, _) => TypeExpr {
                quals: self.quals,
                kind: TypeKind::Pointer(elem),
            },
            TypeKind::Function(_) => TypeExpr::pointer_to(self),
            _ => self,
        }
    }

    /// Abstract rendering, e.g. `const char *` or `void (*)(int)`.
    pub fn canonical(&self) -> String {
        self.declare("").unwrap_or_else(|e| format!("<{e}>"))
    }

    /// Renders a full C declaration of `name` with this type (`name` may be empty).
    pub fn declare(&self, name: &str) -> Result<String, RenderError> {
        render(self, name.to_string(), &|_, _| None)
    }

    /// Like [`declare`](Self::declare), with untagged records spelled out by
    /// `anon` (e.g. as `struct { int x; }`).
    pub fn declare_with(
        &self,
        name: &str,
        anon: &dyn Fn(RecordKind, usize) -> Option<String>,
    ) -> Result<String, RenderError> {
        render(self, name.to_string(), anon)
    }

    /// Calls `f` on this type and on every type nested inside it.
    pub fn visit(&self, f: &mut impl FnMut(&TypeExpr)) {
        f(self);
        match &self.kind {
            TypeKind::Pointer(inner) | TypeKind::Array(inner, _) => inner.visit(f),
            TypeKind::Function(ft) => {
                ft.ret.visit(f);
                for p in &ft.params {
                    p.ty.visit(f);
                }
            }
            _ => {}
        }
    }
}

fn join_space(left: &str, right: &str) -> String {
    if right.is_empty() {
        left.to_string()
    } else if left.is_empty() {
        right.to_string()
    } else {
        format!("{left} {right}")
    }
}

type AnonRenderer<'a> = &'a dyn Fn(RecordKind, usize) -> Option<String>;

fn render(ty: &TypeExpr, inner: String, anon: AnonRenderer<'_>) -> Result<String, RenderError> {
    match &ty.kind {
        TypeKind::Scalar(name) => Ok(join_space(&join_space(&ty.quals.to_string(), name), &inner)),
        TypeKind::Typedef(name) => Ok(join_space(&join_space(&ty.quals.to_string(), name), &inner)),
        TypeKind::Record { kind, tag } => match tag {
            RecordTag::Named(tag) => Ok(join_space(
                &join_space(&ty.quals.to_string(), &format!("{} {tag}", kind.keyword())),
                &inner,
            )),
            RecordTag::Anonymous(n) => match anon(*kind, *n) {
                Some(spelled) => Ok(join_space(
                    &join_space(&ty.quals.to_string(), &spelled),
                    &inner,
                )),
                None => Err(RenderError {
                    reason: format!("untagged {} type has no name to refer to", kind.keyword()),
                }),
            },
        },
        TypeKind::Pointer(target) => {
            let quals = ty.quals.to_string();
            let mut decl = String::from("*");
            decl.push_str(&quals);
            if !inner.is_empty() {
                if !quals.is_empty() {
                    decl.push(' ');
                }
                decl.push_str(&inner);
            }
            if matches!(target.kind, TypeKind::Array(..) | TypeKind::Function(_)) {
                decl = format!("({decl})");
            }
            render(target, decl, anon)
        }
        TypeKind::Array(elem, extent) => {
            let quals = ty.quals.to_string();
            let ext = extent.map(|n| n.to_string()).unwrap_or_default();
            let suffix = format!("[{}]", join_space(&quals, &ext));
            render(elem, format!("{inner}{suffix}"), anon)
        }
        TypeKind::Function(ft) => {
            if matches!(ft.ret.kind, TypeKind::Function(_) | TypeKind::Array(..)) {
                return Err(RenderError {
                    reason: "function returning a function or array".into(),
                });
            }
            let params = render_params(ft, anon)?;
            render(&ft.ret, format!("{inner}({params})"), anon)
        }
    }
}

fn render_params(ft: &FunctionType, anon: AnonRenderer<'_>) -> Result<String, RenderError> {
    if ft.unknown_args {
        return Ok(String::new());
    }
    if ft.params.is_empty() && !ft.variadic {
        return Ok("void".into());
    }
    let mut parts = Vec::with_capacity(ft.params.len() + 1);
    for p in &ft.params {
        parts.push(render(&p.ty, p.name.clone().unwrap_or_default(), anon)?);
    }
    if ft.variadic {
        parts.push("...".into());
    }
    Ok(parts.join(", "))
}

impl FunctionType {
    pub fn same_signature(&self, other: &FunctionType) -> bool {
        self.ret == other.ret
            && self.variadic == other.variadic
            && self.unknown_args == other.unknown_args
            && self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.ty == b.ty)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedefDef {
    pub name: String,
    pub ty: TypeExpr,
    /// Position among all typedef and record definitions, in source order.
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordDef {
    pub kind: RecordKind,
    pub tag: RecordTag,
    /// Token text between the braces.
    pub body: String,
    pub typedef_deps: Vec<String>,
    pub record_deps: Vec<(RecordKind, String)>,
    pub order: usize,
}

/// Typedefs and record definitions seen while scanning, used to resolve
/// typedef names and to rebuild header-free declarations.
#[derive(Debug, Clone, Default)]
pub struct TypeEnv {
    pub typedefs: HashMap<String, TypedefDef>,
    pub records: HashMap<RecordTag, RecordDef>,
    /// Enumeration constant to the tag of the enum defining it.
    pub enum_constants: HashMap<String, RecordTag>,
}

impl TypeEnv {
    /// Expands typedef names recursively. Unknown typedef names are kept.
    pub fn resolve(&self, ty: &TypeExpr) -> TypeExpr {
        self.resolve_depth(ty, 0)
    }

    fn resolve_depth(&self, ty: &TypeExpr, depth: usize) -> TypeExpr {
        if depth > 64 {
            return ty.clone();
        }
        let kind = match &ty.kind {
            TypeKind::Typedef(name) => match self.typedefs.get(name) {
                Some(def) => {
                    let resolved = self.resolve_depth(&def.ty, depth + 1);
                    return resolved.with_quals(ty.quals);
                }
                None => ty.kind.clone(),
            },
            TypeKind::Pointer(t) => TypeKind::Pointer(Box::new(self.resolve_depth(t, depth + 1))),
            TypeKind::Array(t, n) => {
                TypeKind::Array(Box::new(self.resolve_depth(t, depth + 1)), *n)
            }
            TypeKind::Function(ft) => TypeKind::Function(Box::new(FunctionType {
                ret: self.resolve_depth(&ft.ret, depth + 1),
                params: ft
                    .params
                    .iter()
                    .map(|p| Param {
                        name: None,
                        ty: self.resolve_depth(&p.ty, depth + 1).decayed(),
                    })
                    .collect(),
                variadic: ft.variadic,
                unknown_args: ft.unknown_args,
            })),
            other => other.clone(),
        };
        TypeExpr {
            quals: ty.quals,
            kind,
        }
    }

    /// True when the type is (a typedef of) the compiler's `va_list`.
    pub fn is_va_list(&self, ty: &TypeExpr) -> bool {
        matches!(&self.resolve(ty).kind, TypeKind::Typedef(n) if n == "__builtin_va_list")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn func(ret: TypeExpr, params: Vec<TypeExpr>, variadic: bool) -> TypeExpr {
        TypeExpr::new(TypeKind::Function(Box::new(FunctionType {
            ret,
            params: params
                .into_iter()
                .map(|ty| Param { name: None, ty })
                .collect(),
            variadic,
            unknown_args: false,
        })))
    }

    #[test]
    fn renders_simple_declarators() {
        let cchar = TypeExpr::scalar("char").with_quals(Qualifiers {
            is_const: true,
            ..Qualifiers::NONE
        });
        let p = TypeExpr::pointer_to(cchar);
        assert_eq!(p.declare("fmt").unwrap(), "const char *fmt");
        assert_eq!(p.canonical(), "const char *");
        let cp = TypeExpr::pointer_to(TypeExpr::scalar("char")).with_quals(Qualifiers {
            is_const: true,
            ..Qualifiers::NONE
        });
        assert_eq!(cp.declare("s").unwrap(), "char *const s");
        assert_eq!(cp.canonical(), "char *const");
    }

    #[test]
    fn renders_function_pointers_and_arrays() {
        let handler = TypeExpr::pointer_to(func(
            TypeExpr::scalar("void"),
            vec![TypeExpr::scalar("int")],
            false,
        ));
        assert_eq!(handler.declare("cb").unwrap(), "void (*cb)(int)");
        // void (*signal(int, void (*)(int)))(int)
        let signal = func(
            handler.clone(),
            vec![TypeExpr::scalar("int"), handler],
            false,
        );
        assert_eq!(
            signal.declare("signal").unwrap(),
            "void (*signal(int, void (*)(int)))(int)"
        );
        let row = TypeExpr::new(TypeKind::Array(Box::new(TypeExpr::scalar("int")), Some(4)));
        assert_eq!(TypeExpr::pointer_to(row).canonical(), "int (*)[4]");
        let empty = func(TypeExpr::scalar("int"), vec![], false);
        assert_eq!(empty.declare("f").unwrap(), "int f(void)");
        let printf = func(TypeExpr::scalar("int"), vec![TypeExpr::scalar("int")], true);
        assert_eq!(printf.declare("g").unwrap(), "int g(int, ...)");
    }

    #[test]
    fn anonymous_record_is_unrenderable() {
        let t = TypeExpr::new(TypeKind::Record {
            kind: RecordKind::Struct,
            tag: RecordTag::Anonymous(0),
        });
        assert!(t.declare("x").is_err());
    }

    #[test]
    fn decay_moves_bracket_qualifiers_to_pointer() {
        let arr = TypeExpr {
            quals: Qualifiers {
                is_restrict: true,
                ..Qualifiers::NONE
            },
            kind: TypeKind::Array(Box::new(TypeExpr::scalar("int")), Some(3)),
        };
        assert_eq!(arr.decayed().canonical(), "int *restrict");
    }

    #[test]
    fn resolve_expands_typedef_chains() {
        let mut env = TypeEnv::default();
        env.typedefs.insert(
            "__gnuc_va_list".into(),
            TypedefDef {
                name: "__gnuc_va_list".into(),
                ty: TypeExpr::typedef("__builtin_va_list"),
                order: 0,
            },
        );
        env.typedefs.insert(
            "va_list".into(),
            TypedefDef {
                name: "va_list".into(),
                ty: TypeExpr::typedef("__gnuc_va_list"),
                order: 1,
            },
        );
        assert!(env.is_va_list(&TypeExpr::typedef("va_list")));
        assert!(!env.is_va_list(&TypeExpr::scalar("int")));
    }
}
