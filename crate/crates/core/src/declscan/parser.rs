//! Recursive descent over preprocessed C, collecting external function
//! declarations, typedefs and record definitions.
//!
//! Function bodies, initializers and record bodies are skipped by brace or
//! delimiter balancing; only declarators are parsed in full.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use super::lexer::{TokKind, Token};
use super::types::{
    FunctionType, Param, Qualifiers, RecordDef, RecordKind, RecordTag, TypeEnv, TypeExpr, TypeKind,
    TypedefDef,
};
use super::{DeclScanError, Diagnostic, FunctionDecl, Location, ScanResult};

/// Typedef names the compiler provides without a declaration.
const BUILTIN_TYPEDEFS: [&str; 4] = [
    "__builtin_va_list",
    "__builtin_ms_va_list",
    "__int128_t",
    "__uint128_t",
];

const SCALAR_WORDS: [&str; 25] = [
    "void",
    "char",
    "short",
    "int",
    "long",
    "float",
    "double",
    "signed",
    "__signed",
    "__signed__",
    "unsigned",
    "_Bool",
    "_Complex",
    "__complex__",
    "__int128",
    "_Float16",
    "_Float32",
    "_Float64",
    "_Float128",
    "_Float32x",
    "_Float64x",
    "_Float128x",
    "__float128",
    "__fp16",
    "__bf16",
];

/// Built-in types on some compilers and typedefs in the C library on others.
fn is_soft_scalar(w: &str) -> bool {
    w.starts_with("_Float") || matches!(w, "__float128" | "__fp16" | "__bf16")
}

fn is_qualifier(w: &str) -> bool {
    matches!(
        w,
        "const"
            | "__const"
            | "__const__"
            | "volatile"
            | "__volatile"
            | "__volatile__"
            | "restrict"
            | "__restrict"
            | "__restrict__"
    )
}

fn is_storage(w: &str) -> bool {
    matches!(
        w,
        "typedef" | "extern" | "static" | "auto" | "register" | "_Thread_local" | "__thread"
    )
}

fn is_function_specifier(w: &str) -> bool {
    matches!(w, "inline" | "__inline" | "__inline__" | "_Noreturn")
}

fn is_attribute(w: &str) -> bool {
    matches!(w, "__attribute__" | "__attribute")
}

fn is_asm(w: &str) -> bool {
    matches!(w, "asm" | "__asm" | "__asm__")
}

fn add_qualifier(q: &mut Qualifiers, w: &str) {
    match w {
        "const" | "__const" | "__const__" => q.is_const = true,
        "volatile" | "__volatile" | "__volatile__" => q.is_volatile = true,
        _ => q.is_restrict = true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Storage {
    None,
    Typedef,
    Extern,
    Static,
    Other,
}

struct Specs {
    storage: Storage,
    inline: bool,
    noreturn: bool,
    base: TypeExpr,
}

enum Suffix {
    Array {
        quals: Qualifiers,
        extent: Option<u64>,
        opaque: bool,
    },
    Function(FunctionType),
}

#[derive(Default)]
struct Declarator {
    name: Option<(String, usize)>,
    ptrs: Vec<Qualifiers>,
    inner: Option<Box<Declarator>>,
    suffixes: Vec<Suffix>,
}

struct Applied {
    name: Option<(String, usize)>,
    ty: TypeExpr,
    /// Array extents that could not be evaluated.
    opaque_extents: usize,
    top_level_opaque: bool,
}

impl Declarator {
    fn apply(self, base: TypeExpr) -> Applied {
        self.apply_with(base, false)
    }

    /// `base_opaque` says whether `base` itself is an array with an
    /// unevaluated extent.
    fn apply_with(self, base: TypeExpr, base_opaque: bool) -> Applied {
        let mut ty = base;
        let mut opaque_extents = 0;
        let mut top_level_opaque = base_opaque;
        for q in self.ptrs {
            ty = TypeExpr::pointer_to(ty).with_quals(q);
            top_level_opaque = false;
        }
        for suffix in self.suffixes.into_iter().rev() {
            ty = match suffix {
                Suffix::Array {
                    quals,
                    extent,
                    opaque,
                } => {
                    opaque_extents += usize::from(opaque);
                    top_level_opaque = opaque;
                    TypeExpr {
                        quals,
                        kind: TypeKind::Array(Box::new(ty), extent),
                    }
                }
                Suffix::Function(mut ft) => {
                    top_level_opaque = false;
                    ft.ret = ty;
                    TypeExpr::new(TypeKind::Function(Box::new(ft)))
                }
            };
        }
        match self.inner {
            Some(inner) => {
                let mut applied = inner.apply_with(ty, top_level_opaque);
                applied.opaque_extents += opaque_extents;
                applied
            }
            None => Applied {
                name: self.name,
                ty,
                opaque_extents,
                top_level_opaque,
            },
        }
    }
}

pub(crate) struct Parser<'a> {
    toks: &'a [Token],
    files: &'a [PathBuf],
    pos: usize,
    typedef_names: HashSet<String>,
    env: TypeEnv,
    order: usize,
    anon: usize,
    decls: Vec<FunctionDecl>,
    index: HashMap<String, usize>,
    skipped: HashMap<String, Diagnostic>,
    /// An `overloadable` attribute was seen in the current declaration.
    overloadable: bool,
    /// An error that an `overloadable` attribute later in the declaration would excuse.
    deferred_error: Option<(usize, String)>,
}

type PResult<T> = Result<T, DeclScanError>;

impl<'a> Parser<'a> {
    pub(crate) fn new(toks: &'a [Token], files: &'a [PathBuf]) -> Self {
        Parser {
            toks,
            files,
            pos: 0,
            typedef_names: BUILTIN_TYPEDEFS.iter().map(|s| s.to_string()).collect(),
            env: TypeEnv::default(),
            order: 0,
            anon: 0,
            decls: Vec::new(),
            index: HashMap::new(),
            skipped: HashMap::new(),
            overloadable: false,
            deferred_error: None,
        }
    }

    pub(crate) fn run(mut self) -> PResult<ScanResult> {
        while self.pos < self.toks.len() {
            self.external_declaration()?;
        }
        let mut diagnostics: Vec<Diagnostic> = self.skipped.into_values().collect();
        diagnostics.sort_by(|a, b| (&a.location, &a.name).cmp(&(&b.location, &b.name)));
        let renamed: HashSet<&str> = diagnostics.iter().map(|d| d.name.as_str()).collect();
        let decls = self
            .decls
            .into_iter()
            .filter(|d| !renamed.contains(d.name.as_str()))
            .collect();
        Ok(ScanResult {
            decls,
            env: self.env,
            diagnostics,
        })
    }

    // ---- token helpers -------------------------------------------------

    fn peek_text(&self, n: usize) -> &'a str {
        self.toks.get(self.pos + n).map_or("", |t| t.text.as_str())
    }

    fn peek_kind(&self, n: usize) -> Option<TokKind> {
        self.toks.get(self.pos + n).map(|t| t.kind)
    }

    fn at(&self, text: &str) -> bool {
        self.peek_text(0) == text
    }

    fn bump(&mut self) -> &'a Token {
        let t = &self.toks[self.pos];
        self.pos += 1;
        t
    }

    fn location_of(&self, idx: usize) -> Location {
        let t = self.toks.get(idx).or_else(|| self.toks.last());
        match t {
            Some(t) => Location {
                file: self.files[t.file as usize].clone(),
                line: t.line,
            },
            None => Location {
                file: self.files.first().cloned().unwrap_or_default(),
                line: 0,
            },
        }
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let loc = self.location_of(self.pos);
        Err(DeclScanError::Syntax {
            file: loc.file,
            line: loc.line,
            token: self
                .toks
                .get(self.pos)
                .map_or_else(|| "<end of input>".to_string(), |t| t.text.clone()),
            message: message.into(),
        })
    }

    fn expect(&mut self, text: &str) -> PResult<()> {
        if self.at(text) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected `{text}`"))
        }
    }

    fn is_ident(&self, n: usize) -> bool {
        self.peek_kind(n) == Some(TokKind::Ident)
    }

    /// Skips a balanced group starting at an opening delimiter and returns its tokens.
    fn skip_balanced(&mut self) -> PResult<&'a [Token]> {
        let open = self.peek_text(0);
        let close = match open {
            "(" => ")",
            "[" => "]",
            "{" => "}",
            _ => return self.error("expected an opening delimiter"),
        };
        let start = self.pos;
        let mut depth = 0usize;
        while self.pos < self.toks.len() {
            let t = self.peek_text(0);
            if t == open {
                depth += 1;
            } else if t == close {
                depth -= 1;
                if depth == 0 {
                    self.pos += 1;
                    return Ok(&self.toks[start + 1..self.pos - 1]);
                }
            }
            self.pos += 1;
        }
        self.pos = start;
        self.error(format!("unbalanced `{open}`"))
    }

    /// Skips `__attribute__((...))`; returns whether it requests `noreturn`.
    fn attribute(&mut self) -> PResult<bool> {
        self.bump();
        if !self.at("(") {
            return self.error("expected `(` after __attribute__");
        }
        let inner = self.skip_balanced()?;
        if inner
            .iter()
            .any(|t| t.text == "overloadable" || t.text == "__overloadable__")
        {
            self.overloadable = true;
        }
        Ok(inner
            .iter()
            .any(|t| t.text == "noreturn" || t.text == "__noreturn__"))
    }

    fn skip_attributes(&mut self) -> PResult<bool> {
        let mut noreturn = false;
        while is_attribute(self.peek_text(0)) {
            noreturn |= self.attribute()?;
        }
        Ok(noreturn)
    }

    fn is_keyword(&self, n: usize) -> bool {
        let w = self.peek_text(n);
        self.is_ident(n)
            && ((SCALAR_WORDS.contains(&w)
                && !(is_soft_scalar(w) && self.typedef_names.contains(w)))
                || is_qualifier(w)
                || is_storage(w)
                || is_function_specifier(w)
                || is_attribute(w)
                || is_asm(w)
                || matches!(
                    w,
                    "struct" | "union" | "enum" | "__extension__" | "_Atomic" | "_Alignas"
                ))
    }

    fn is_type_start(&self, n: usize) -> bool {
        self.is_keyword(n) || (self.is_ident(n) && self.typedef_names.contains(self.peek_text(n)))
    }

    // ---- top level -----------------------------------------------------

    fn external_declaration(&mut self) -> PResult<()> {
        match self.peek_text(0) {
            ";" => {
                self.bump();
                return Ok(());
            }
            "_Static_assert" => {
                self.bump();
                self.skip_balanced()?;
                return self.expect(";");
            }
            w if is_asm(w) => {
                self.bump();
                while is_qualifier(self.peek_text(0)) || self.at("volatile") {
                    self.bump();
                }
                self.skip_balanced()?;
                return self.expect(";");
            }
            _ => {}
        }

        self.overloadable = false;
        self.deferred_error = None;
        let specs = self.declaration_specifiers()?;
        if self.at(";") {
            self.bump();
            return Ok(());
        }
        loop {
            let declarator = self.declarator(false)?;
            let mut noreturn = specs.noreturn;
            let mut asm_label = None;
            loop {
                let w = self.peek_text(0);
                if is_attribute(w) {
                    noreturn |= self.attribute()?;
                } else if is_asm(w) {
                    self.bump();
                    let inner = self.skip_balanced()?;
                    let label: String = inner
                        .iter()
                        .filter(|t| t.kind == TokKind::Str)
                        .map(|t| t.text.trim_matches('"'))
                        .collect();
                    asm_label = Some(label);
                } else {
                    break;
                }
            }
            if !self.overloadable {
                if let Some((pos, message)) = self.deferred_error.take() {
                    self.pos = pos;
                    return self.error(message);
                }
            }
            let applied = declarator.apply(specs.base.clone());
            let Some((name, name_idx)) = applied.name.clone() else {
                return self.error("expected a declarator name");
            };

            let mut is_function = false;
            if specs.storage == Storage::Typedef {
                self.typedef_names.insert(name.clone());
                let order = self.next_order();
                self.env.typedefs.insert(
                    name.clone(),
                    TypedefDef {
                        name: name.clone(),
                        ty: applied.ty.clone(),
                        order,
                    },
                );
            } else if let Some(ft) = self.function_type_of(&applied.ty) {
                is_function = true;
                let nested_opaque = applied.opaque_extents;
                if nested_opaque > 0 {
                    let saved = self.pos;
                    self.pos = name_idx;
                    let err = self.error(format!(
                        "array extent in the type of `{name}` is not an integer constant"
                    ));
                    self.pos = saved;
                    return err;
                }
                let location = self.location_of(name_idx);
                if let Some(label) = asm_label {
                    self.skipped.insert(
                        name.clone(),
                        Diagnostic {
                            name: name.clone(),
                            location: location.clone(),
                            message: format!(
                                "declaration of `{name}` is renamed to symbol `{label}` with an asm label; skipped"
                            ),
                        },
                    );
                }
                if self.overloadable {
                    self.skipped
                        .entry(name.clone())
                        .or_insert_with(|| Diagnostic {
                            name: name.clone(),
                            location: location.clone(),
                            message: format!("`{name}` is declared overloadable; skipped"),
                        });
                } else {
                    let decl = FunctionDecl {
                        name,
                        return_type: ft.ret,
                        params: ft.params,
                        variadic: ft.variadic,
                        empty_parens_unknown_args: ft.unknown_args,
                        is_inline_or_static: specs.inline || specs.storage == Storage::Static,
                        noreturn,
                        location,
                    };
                    self.add_decl(decl)?;
                }
            }

            match self.peek_text(0) {
                "{" if is_function => {
                    self.skip_balanced()?;
                    return Ok(());
                }
                "=" => {
                    self.skip_initializer()?;
                    if self.at(",") {
                        self.bump();
                        continue;
                    }
                    return self.expect(";");
                }
                "," => {
                    self.bump();
                }
                ";" => {
                    self.bump();
                    return Ok(());
                }
                _ => return self.error("expected `;`, `,` or a function body after declarator"),
            }
        }
    }

    fn next_order(&mut self) -> usize {
        self.order += 1;
        self.order - 1
    }

    /// The function type behind a declarator type, looking through typedef names
    /// at the top level only (`fn_t foo;`).
    fn function_type_of(&self, ty: &TypeExpr) -> Option<FunctionType> {
        let mut cur = ty;
        for _ in 0..64 {
            match &cur.kind {
                TypeKind::Function(ft) => return Some((**ft).clone()),
                TypeKind::Typedef(n) => cur = &self.env.typedefs.get(n)?.ty,
                _ => return None,
            }
        }
        None
    }

    fn add_decl(&mut self, decl: FunctionDecl) -> PResult<()> {
        match self.index.get(&decl.name) {
            None => {
                self.index.insert(decl.name.clone(), self.decls.len());
                self.decls.push(decl);
                Ok(())
            }
            Some(&i) => {
                let existing = &self.decls[i];
                let a = self.env.resolve(&TypeExpr::new(TypeKind::Function(Box::new(
                    existing.function_type(),
                ))));
                let b = self.env.resolve(&TypeExpr::new(TypeKind::Function(Box::new(
                    decl.function_type(),
                ))));
                let (TypeKind::Function(fa), TypeKind::Function(fb)) = (&a.kind, &b.kind) else {
                    unreachable!()
                };
                let compatible = fa.same_signature(fb)
                    || (fa.unknown_args && fa.ret == fb.ret)
                    || (fb.unknown_args && fa.ret == fb.ret);
                if !compatible {
                    return Err(DeclScanError::Incompatible {
                        name: decl.name,
                        first: existing.location.clone(),
                        second: decl.location,
                    });
                }
                let existing = &mut self.decls[i];
                existing.is_inline_or_static |= decl.is_inline_or_static;
                existing.noreturn |= decl.noreturn;
                if existing.empty_parens_unknown_args && !decl.empty_parens_unknown_args {
                    existing.params = decl.params;
                    existing.variadic = decl.variadic;
                    existing.empty_parens_unknown_args = false;
                }
                Ok(())
            }
        }
    }

    fn skip_initializer(&mut self) -> PResult<()> {
        self.expect("=")?;
        while self.pos < self.toks.len() {
            match self.peek_text(0) {
                "(" | "[" | "{" => {
                    self.skip_balanced()?;
                }
                "," | ";" => return Ok(()),
                _ => self.pos += 1,
            }
        }
        self.error("unterminated initializer")
    }

    // ---- specifiers ----------------------------------------------------

    fn declaration_specifiers(&mut self) -> PResult<Specs> {
        let mut storage = Storage::None;
        let mut inline = false;
        let mut noreturn = false;
        let mut quals = Qualifiers::NONE;
        let mut words: Vec<&'a str> = Vec::new();
        let mut base: Option<TypeExpr> = None;
        let start = self.pos;

        loop {
            if !self.is_ident(0) {
                break;
            }
            let w = self.peek_text(0);
            match w {
                _ if is_storage(w) => {
                    self.bump();
                    storage = match w {
                        "typedef" => Storage::Typedef,
                        "extern" => Storage::Extern,
                        "static" => Storage::Static,
                        "_Thread_local" | "__thread" => storage,
                        _ => Storage::Other,
                    };
                }
                "inline" | "__inline" | "__inline__" => {
                    self.bump();
                    inline = true;
                }
                "_Noreturn" => {
                    self.bump();
                    noreturn = true;
                }
                _ if is_qualifier(w) => {
                    self.bump();
                    add_qualifier(&mut quals, w);
                }
                _ if is_attribute(w) => noreturn |= self.attribute()?,
                "__extension__" => {
                    self.bump();
                }
                "_Alignas" => {
                    self.bump();
                    self.skip_balanced()?;
                }
                "_Atomic" => return self.error("_Atomic types are not supported"),
                "typeof" | "__typeof" | "__typeof__" => {
                    return self.error("typeof specifiers are not supported")
                }
                "struct" | "union" | "enum" => {
                    if base.is_some() || !words.is_empty() {
                        return self.error("conflicting type specifiers");
                    }
                    base = Some(self.record_specifier()?);
                }
                _ if is_soft_scalar(w) && self.typedef_names.contains(w) => {
                    if base.is_some() || !words.is_empty() {
                        break;
                    }
                    self.bump();
                    base = Some(TypeExpr::typedef(w));
                }
                _ if is_soft_scalar(w)
                    && (base.is_some()
                        || words
                            .iter()
                            .any(|x| !matches!(*x, "_Complex" | "__complex__"))) =>
                {
                    break
                }
                _ if SCALAR_WORDS.contains(&w) => {
                    if base.is_some() {
                        return self.error("conflicting type specifiers");
                    }
                    self.bump();
                    words.push(w);
                }
                _ if base.is_none() && words.is_empty() && self.typedef_names.contains(w) => {
                    self.bump();
                    base = Some(TypeExpr::typedef(w));
                }
                _ => break,
            }
        }

        let base = match base {
            Some(b) => b,
            None if !words.is_empty() => match canonical_scalar(&words) {
                Some(s) => TypeExpr::scalar(&s),
                None => {
                    self.pos = start;
                    return self.error(format!(
                        "invalid type specifier combination `{}`",
                        words.join(" ")
                    ));
                }
            },
            None => {
                if self.is_ident(0) && self.is_ident(1) {
                    return self.error(format!("unknown type name `{}`", self.peek_text(0)));
                }
                return self.error("expected a type specifier");
            }
        };
        Ok(Specs {
            storage,
            inline,
            noreturn,
            base: base.with_quals(quals),
        })
    }

    fn record_specifier(&mut self) -> PResult<TypeExpr> {
        let kind = match self.bump().text.as_str() {
            "struct" => RecordKind::Struct,
            "union" => RecordKind::Union,
            _ => RecordKind::Enum,
        };
        self.skip_attributes()?;
        let tag = if self.is_ident(0) && !is_attribute(self.peek_text(0)) {
            Some(self.bump().text.clone())
        } else {
            None
        };
        self.skip_attributes()?;
        if kind == RecordKind::Enum && self.at(":") {
            return self.error("enums with a fixed underlying type are not supported");
        }
        let tag = if self.at("{") {
            let body = self.skip_balanced()?;
            let tag = match tag {
                Some(t) => RecordTag::Named(t),
                None => {
                    self.anon += 1;
                    RecordTag::Anonymous(self.anon - 1)
                }
            };
            self.define_record(kind, tag.clone(), body);
            tag
        } else {
            match tag {
                Some(t) => RecordTag::Named(t),
                None => {
                    return self.error(format!("expected a tag or body after `{}`", kind.keyword()))
                }
            }
        };
        Ok(TypeExpr::new(TypeKind::Record { kind, tag }))
    }

    fn define_record(&mut self, kind: RecordKind, tag: RecordTag, body: &[Token]) {
        let mut text = String::new();
        let mut typedef_deps = Vec::new();
        let mut record_deps = Vec::new();
        let mut enum_deps = Vec::new();
        for (i, t) in body.iter().enumerate() {
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(&t.text);
            if t.kind != TokKind::Ident {
                continue;
            }
            if let Some(k) = match t.text.as_str() {
                "struct" => Some(RecordKind::Struct),
                "union" => Some(RecordKind::Union),
                "enum" => Some(RecordKind::Enum),
                _ => None,
            } {
                if let Some(next) = body.get(i + 1).filter(|n| n.kind == TokKind::Ident) {
                    record_deps.push((k, next.text.clone()));
                }
            } else if self.typedef_names.contains(&t.text) {
                typedef_deps.push(t.text.clone());
            } else if let Some(owner) = self.env.enum_constants.get(&t.text) {
                if let RecordTag::Named(n) = owner {
                    enum_deps.push((RecordKind::Enum, n.clone()));
                }
            }
        }
        record_deps.extend(enum_deps);
        if kind == RecordKind::Enum {
            let mut depth = 0i32;
            let mut expect_name = true;
            for t in body {
                match t.text.as_str() {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" | "}" => depth -= 1,
                    "," if depth == 0 => {
                        expect_name = true;
                        continue;
                    }
                    _ => {}
                }
                if expect_name && depth == 0 && t.kind == TokKind::Ident {
                    self.env.enum_constants.insert(t.text.clone(), tag.clone());
                }
                expect_name = false;
            }
        }
        typedef_deps.dedup();
        record_deps.dedup();
        let order = self.next_order();
        self.env.records.entry(tag.clone()).or_insert(RecordDef {
            kind,
            tag,
            body: text,
            typedef_deps,
            record_deps,
            order,
        });
    }

    // ---- declarators ---------------------------------------------------

    fn pointer_qualifiers(&mut self) -> PResult<Qualifiers> {
        let mut q = Qualifiers::NONE;
        loop {
            let w = self.peek_text(0);
            if is_qualifier(w) {
                self.bump();
                add_qualifier(&mut q, w);
            } else if is_attribute(w) {
                self.attribute()?;
            } else if w == "_Atomic" {
                return self.error("_Atomic types are not supported");
            } else {
                return Ok(q);
            }
        }
    }

    fn starts_nested_declarator(&self) -> bool {
        // at "("
        match self.peek_text(1) {
            "*" | "(" | "^" => true,
            w if is_attribute(w) => true,
            _ if self.is_ident(1) => !self.is_type_start(1),
            _ => false,
        }
    }

    fn declarator(&mut self, abstract_ok: bool) -> PResult<Declarator> {
        let mut d = Declarator::default();
        while self.at("*") {
            self.bump();
            d.ptrs.push(self.pointer_qualifiers()?);
        }
        self.skip_attributes()?;
        // After the specifiers, a typedef name in this position is the declared name.
        if self.is_ident(0) && (!self.is_keyword(0) || is_soft_scalar(self.peek_text(0))) {
            d.name = Some((self.peek_text(0).to_string(), self.pos));
            self.bump();
        } else if self.at("(") && self.starts_nested_declarator() {
            self.bump();
            d.inner = Some(Box::new(self.declarator(abstract_ok)?));
            self.expect(")")?;
        } else if !abstract_ok && !self.at("(") {
            return self.error("expected a declarator");
        }
        loop {
            if self.at("[") {
                d.suffixes.push(self.array_suffix()?);
            } else if self.at("(") {
                d.suffixes.push(Suffix::Function(self.parameter_list()?));
            } else {
                break;
            }
        }
        Ok(d)
    }

    fn array_suffix(&mut self) -> PResult<Suffix> {
        self.expect("[")?;
        let mut quals = Qualifiers::NONE;
        loop {
            let w = self.peek_text(0);
            if is_qualifier(w) {
                self.bump();
                add_qualifier(&mut quals, w);
            } else if w == "static" {
                self.bump();
            } else if is_attribute(w) {
                self.attribute()?;
            } else {
                break;
            }
        }
        let start = self.pos;
        let mut depth = 0usize;
        while self.pos < self.toks.len() {
            match self.peek_text(0) {
                "(" | "[" => depth += 1,
                ")" if depth > 0 => depth -= 1,
                "]" if depth == 0 => break,
                "]" => depth -= 1,
                ";" | "{" | "}" => return self.error("unterminated array declarator"),
                _ => {}
            }
            self.pos += 1;
        }
        let expr = &self.toks[start..self.pos];
        self.expect("]")?;
        if expr.is_empty() || (expr.len() == 1 && expr[0].text == "*") {
            return Ok(Suffix::Array {
                quals,
                extent: None,
                opaque: false,
            });
        }
        let value = ConstEval { toks: expr, pos: 0 }.eval();
        Ok(Suffix::Array {
            quals,
            extent: value,
            opaque: value.is_none(),
        })
    }

    fn parameter_list(&mut self) -> PResult<FunctionType> {
        self.expect("(")?;
        let mut ft = FunctionType {
            ret: TypeExpr::scalar("int"),
            params: Vec::new(),
            variadic: false,
            unknown_args: false,
        };
        if self.at(")") {
            self.bump();
            ft.unknown_args = true;
            return Ok(ft);
        }
        if self.at("void") && self.peek_text(1) == ")" {
            self.pos += 2;
            return Ok(ft);
        }
        loop {
            if self.at("...") {
                if ft.params.is_empty() && !self.overloadable && self.deferred_error.is_none() {
                    self.deferred_error = Some((
                        self.pos,
                        "a variadic function needs at least one named parameter".into(),
                    ));
                }
                self.bump();
                ft.variadic = true;
                break;
            }
            if self.is_ident(0) && !self.is_type_start(0) {
                if self.is_ident(1) || self.peek_text(1) == "*" {
                    return self.error(format!("unknown type name `{}`", self.peek_text(0)));
                }
                return self.error("K&R-style parameter identifier lists are not supported");
            }
            let specs = self.declaration_specifiers()?;
            let declarator = self.declarator(true)?;
            self.skip_attributes()?;
            let applied = declarator.apply(specs.base);
            // The outermost extent disappears when the array decays.
            let decays = usize::from(applied.top_level_opaque);
            if applied.opaque_extents > decays {
                return self.error("array extent in a parameter type is not an integer constant");
            }
            ft.params.push(Param {
                name: applied.name.map(|(n, _)| n),
                ty: applied.ty.decayed(),
            });
            if self.at(",") {
                self.bump();
            } else {
                break;
            }
        }
        self.expect(")")?;
        Ok(ft)
    }
}

/// Builds the canonical spelling of a builtin type from its specifier words.
pub(crate) fn canonical_scalar(words: &[&str]) -> Option<String> {
    let mut longs = 0;
    let (mut signed, mut unsigned, mut short, mut int, mut complex) =
        (false, false, false, false, false);
    let mut base: Option<&str> = None;
    for &w in words {
        match w {
            "long" => longs += 1,
            "signed" | "__signed" | "__signed__" => {
                if signed || unsigned {
                    return None;
                }
                signed = true;
            }
            "unsigned" => {
                if signed || unsigned {
                    return None;
                }
                unsigned = true;
            }
            "short" => {
                if short {
                    return None;
                }
                short = true;
            }
            "int" => {
                if int {
                    return None;
                }
                int = true;
            }
            "_Complex" | "__complex__" => complex = true,
            other => {
                if base.is_some() {
                    return None;
                }
                base = Some(other);
            }
        }
    }
    let sign_prefix = if unsigned { "unsigned " } else { "" };
    let out = match base {
        Some("void") | Some("_Bool") => {
            if longs > 0 || signed || unsigned || short || int || complex {
                return None;
            }
            base.unwrap().to_string()
        }
        Some("char") => {
            if longs > 0 || short || int || complex {
                return None;
            }
            match (signed, unsigned) {
                (true, _) => "signed char".into(),
                (_, true) => "unsigned char".into(),
                _ => "char".into(),
            }
        }
        Some("__int128") => {
            if longs > 0 || short || int || complex {
                return None;
            }
            format!("{sign_prefix}__int128")
        }
        Some(f) => {
            // floating types
            if signed || unsigned || short || int {
                return None;
            }
            let name = match (f, longs) {
                ("double", 1) => "long double".to_string(),
                (f, 0) => f.to_string(),
                _ => return None,
            };
            if complex {
                format!("{name} _Complex")
            } else {
                name
            }
        }
        None => {
            if complex {
                if longs > 0 || short || signed || unsigned {
                    return None;
                }
                return Some("double _Complex".into());
            }
            let size = match (short, longs) {
                (true, 0) => "short",
                (false, 0) => "int",
                (false, 1) => "long",
                (false, 2) => "long long",
                _ => return None,
            };
            if unsigned && size == "int" {
                "unsigned int".into()
            } else {
                format!("{sign_prefix}{size}")
            }
        }
    };
    Some(out)
}

/// Integer constant expressions in array extents.
struct ConstEval<'a> {
    toks: &'a [Token],
    pos: usize,
}

impl ConstEval<'_> {
    fn eval(mut self) -> Option<u64> {
        let v = self.binary(0)?;
        if self.pos != self.toks.len() || v < 0 {
            return None;
        }
        u64::try_from(v).ok()
    }

    fn peek(&self) -> &str {
        self.toks.get(self.pos).map_or("", |t| t.text.as_str())
    }

    fn binary(&mut self, min_prec: u8) -> Option<i128> {
        let mut lhs = self.unary()?;
        loop {
            let op = self.peek().to_string();
            let prec = match op.as_str() {
                "|" => 1,
                "^" => 2,
                "&" => 3,
                "<<" | ">>" => 4,
                "+" | "-" => 5,
                "*" | "/" | "%" => 6,
                _ => return Some(lhs),
            };
            if prec < min_prec {
                return Some(lhs);
            }
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            lhs = match op.as_str() {
                "|" => lhs | rhs,
                "^" => lhs ^ rhs,
                "&" => lhs & rhs,
                "<<" => lhs.checked_shl(u32::try_from(rhs).ok()?)?,
                ">>" => lhs.checked_shr(u32::try_from(rhs).ok()?)?,
                "+" => lhs.checked_add(rhs)?,
                "-" => lhs.checked_sub(rhs)?,
                "*" => lhs.checked_mul(rhs)?,
                "/" => lhs.checked_div(rhs)?,
                _ => lhs.checked_rem(rhs)?,
            };
        }
    }

    fn unary(&mut self) -> Option<i128> {
        match self.peek() {
            "-" => {
                self.pos += 1;
                Some(-self.unary()?)
            }
            "+" => {
                self.pos += 1;
                self.unary()
            }
            "~" => {
                self.pos += 1;
                Some(!self.unary()?)
            }
            "(" => {
                self.pos += 1;
                let v = self.binary(0)?;
                (self.peek() == ")").then(|| self.pos += 1)?;
                Some(v)
            }
            "sizeof" => {
                self.pos += 1;
                if self.peek() != "(" {
                    return None;
                }
                self.pos += 1;
                let mut words = Vec::new();
                let mut pointer = false;
                while self.peek() != ")" {
                    let w = self.peek();
                    if w.is_empty() {
                        return None;
                    }
                    if w == "*" {
                        pointer = true;
                    } else if !is_qualifier(w) {
                        words.push(w.to_string());
                    }
                    self.pos += 1;
                }
                self.pos += 1;
                if pointer {
                    return Some(8);
                }
                let refs: Vec<&str> = words.iter().map(String::as_str).collect();
                scalar_size(&canonical_scalar(&refs)?)
            }
            _ => {
                let t = self.toks.get(self.pos)?;
                if t.kind != TokKind::Number {
                    return None;
                }
                self.pos += 1;
                parse_int_literal(&t.text)
            }
        }
    }
}

// LP64 sizes, matching the hosts the generated code targets.
fn scalar_size(name: &str) -> Option<i128> {
    Some(match name {
        "char" | "signed char" | "unsigned char" | "_Bool" => 1,
        "short" | "unsigned short" => 2,
        "int" | "unsigned int" | "float" => 4,
        "long" | "unsigned long" | "long long" | "unsigned long long" | "double" => 8,
        "long double" | "__int128" | "unsigned __int128" => 16,
        _ => return None,
    })
}

fn parse_int_literal(text: &str) -> Option<i128> {
    let t = text.trim_end_matches(['u', 'U', 'l', 'L']);
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        i128::from_str_radix(hex, 16).ok()
    } else if t.len() > 1 && t.starts_with('0') {
        i128::from_str_radix(&t[1..], 8).ok()
    } else {
        t.parse().ok()
    }
}
