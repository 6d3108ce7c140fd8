//! Tokenizer for preprocessed C, tracking line markers.

use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokKind {
    Ident,
    Number,
    Str,
    Char,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokKind,
    pub text: String,
    /// Index into [`Lexed::files`].
    pub file: u32,
    pub line: u32,
}

#[derive(Debug, Default)]
pub struct Lexed {
    pub tokens: Vec<Token>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub file: PathBuf,
    pub line: u32,
    pub message: String,
}

const PUNCTS: [&str; 48] = [
    "...", "<<=", ">>=", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "*=",
    "/=", "%=", "+=", "-=", "&=", "^=", "|=", "##", "(", ")", "[", "]", "{", "}", ";", ",", ".",
    "&", "*", "+", "-", "~", "!", "/", "%", "<", ">", "^", "|", "?", ":", "=", "#",
];

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
}

pub fn tokenize(source: &str, default_file: &str) -> Result<Lexed, LexError> {
    let mut out = Lexed::default();
    let mut file_ids = std::collections::HashMap::new();
    let mut intern = |out: &mut Lexed, name: &str| -> u32 {
        *file_ids.entry(name.to_string()).or_insert_with(|| {
            out.files.push(PathBuf::from(name));
            (out.files.len() - 1) as u32
        })
    };
    let mut file = intern(&mut out, default_file);
    let mut line: u32 = 1;
    let mut at_line_start = true;
    let mut cur = Cursor {
        src: source.as_bytes(),
        pos: 0,
    };

    while cur.pos < cur.src.len() {
        let c = cur.src[cur.pos];
        match c {
            b'\n' => {
                line = line.wrapping_add(1);
                at_line_start = true;
                cur.pos += 1;
            }
            b' ' | b'\t' | b'\r' | 0x0b | 0x0c => cur.pos += 1,
            b'#' if at_line_start => {
                let end = memchr_newline(cur.src, cur.pos);
                let directive = &source[cur.pos + 1..end];
                cur.pos = end;
                if let Some((marker_line, marker_file)) = parse_line_marker(directive) {
                    file = intern(&mut out, &marker_file);
                    // The marker names the line of the *next* source line.
                    line = marker_line.wrapping_sub(1);
                }
                // Other directives left in preprocessed output (#pragma, #ident) are ignored.
            }
            b'/' if cur.src.get(cur.pos + 1) == Some(&b'*') => {
                let start_line = line;
                let mut i = cur.pos + 2;
                loop {
                    if i + 1 >= cur.src.len() {
                        return Err(LexError {
                            file: out.files[file as usize].clone(),
                            line: start_line,
                            message: "unterminated comment".into(),
                        });
                    }
                    if cur.src[i] == b'\n' {
                        line = line.wrapping_add(1);
                    }
                    if cur.src[i] == b'*' && cur.src[i + 1] == b'/' {
                        break;
                    }
                    i += 1;
                }
                cur.pos = i + 2;
            }
            b'/' if cur.src.get(cur.pos + 1) == Some(&b'/') => {
                cur.pos = memchr_newline(cur.src, cur.pos);
            }
            _ => {
                at_line_start = false;
                let start = cur.pos;
                let kind = if c.is_ascii_alphabetic() || c == b'_' || c == b'$' {
                    // Encoding prefixes on string and char literals.
                    let mut i = cur.pos;
                    while i < cur.src.len()
                        && (cur.src[i].is_ascii_alphanumeric()
                            || cur.src[i] == b'_'
                            || cur.src[i] == b'$')
                    {
                        i += 1;
                    }
                    let word = &source[start..i];
                    if matches!(word, "L" | "u" | "U" | "u8")
                        && matches!(cur.src.get(i), Some(b'"') | Some(b'\''))
                    {
                        let q = cur.src[i];
                        cur.pos = i;
                        scan_quoted(&mut cur, q).map_err(|m| LexError {
                            file: out.files[file as usize].clone(),
                            line,
                            message: m,
                        })?;
                        if q == b'"' {
                            TokKind::Str
                        } else {
                            TokKind::Char
                        }
                    } else {
                        cur.pos = i;
                        TokKind::Ident
                    }
                } else if c.is_ascii_digit()
                    || (c == b'.' && cur.src.get(cur.pos + 1).is_some_and(u8::is_ascii_digit))
                {
                    // pp-number
                    let mut i = cur.pos + 1;
                    while i < cur.src.len() {
                        let d = cur.src[i];
                        if matches!(d, b'+' | b'-')
                            && matches!(cur.src[i - 1], b'e' | b'E' | b'p' | b'P')
                        {
                            i += 1;
                        } else if d.is_ascii_alphanumeric() || d == b'.' || d == b'_' {
                            i += 1;
                        } else {
                            break;
                        }
                    }
                    cur.pos = i;
                    TokKind::Number
                } else if c == b'"' || c == b'\'' {
                    scan_quoted(&mut cur, c).map_err(|m| LexError {
                        file: out.files[file as usize].clone(),
                        line,
                        message: m,
                    })?;
                    if c == b'"' {
                        TokKind::Str
                    } else {
                        TokKind::Char
                    }
                } else {
                    let rest = &source[cur.pos..];
                    match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
                        Some(p) => {
                            cur.pos += p.len();
                            TokKind::Punct
                        }
                        None => {
                            let ch = rest.chars().next().unwrap_or('?');
                            return Err(LexError {
                                file: out.files[file as usize].clone(),
                                line,
                                message: format!("unexpected character {ch:?}"),
                            });
                        }
                    }
                };
                out.tokens.push(Token {
                    kind,
                    text: source[start..cur.pos].to_string(),
                    file,
                    line,
                });
            }
        }
    }
    Ok(out)
}

fn memchr_newline(src: &[u8], from: usize) -> usize {
    src[from..]
        .iter()
        .position(|&b| b == b'\n')
        .map_or(src.len(), |p| from + p)
}

fn scan_quoted(cur: &mut Cursor<'_>, quote: u8) -> Result<(), String> {
    let mut i = cur.pos + 1;
    while i < cur.src.len() {
        match cur.src[i] {
            b'\\' => i += 2,
            b'\n' => break,
            b if b == quote => {
                cur.pos = i + 1;
                return Ok(());
            }
            _ => i += 1,
        }
    }
    Err(format!(
        "unterminated {} literal",
        if quote == b'"' { "string" } else { "character" }
    ))
}

/// Parses the body of `# 12 "file.h" 1 3` or `#line 12 "file.h"`.
pub fn parse_line_marker(directive: &str) -> Option<(u32, String)> {
    let rest = directive.trim_start();
    let rest = rest.strip_prefix("line").unwrap_or(rest).trim_start();
    let digits_end = rest
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(rest.len());
    if digits_end == 0 {
        return None;
    }
    let line: u32 = rest[..digits_end].parse().ok()?;
    let after = rest[digits_end..].trim_start();
    let quoted = after.strip_prefix('"')?;
    let mut name = String::new();
    let mut chars = quoted.chars();
    while let Some(c) = chars.next() {
        match c {
            '"' => return Some((line, name)),
            '\\' => {
                if let Some(n) = chars.next() {
                    name.push(n);
                }
            }
            c => name.push(c),
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_line_markers() {
        let src = "# 1 \"a.h\"\nint x;\n# 7 \"/usr/include/b.h\" 1 3 4\n\nvoid f(void);\n";
        let lexed = tokenize(src, "<input>").unwrap();
        let x = lexed.tokens.iter().find(|t| t.text == "x").unwrap();
        assert_eq!(lexed.files[x.file as usize], PathBuf::from("a.h"));
        assert_eq!(x.line, 1);
        let f = lexed.tokens.iter().find(|t| t.text == "f").unwrap();
        assert_eq!(
            lexed.files[f.file as usize],
            PathBuf::from("/usr/include/b.h")
        );
        assert_eq!(f.line, 8);
    }

    #[test]
    fn skips_pragmas_and_comments() {
        let src = "#pragma GCC visibility push(default)\n/* c\n */ int // x\n y;\n";
        let lexed = tokenize(src, "t.h").unwrap();
        let texts: Vec<_> = lexed.tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["int", "y", ";"]);
        assert_eq!(lexed.tokens[1].line, 4);
    }

    #[test]
    fn literals_and_punctuators() {
        let lexed = tokenize(r#"f("a\"b" L'x', 1.5e+3, ...) >>= ->"#, "t").unwrap();
        let texts: Vec<_> = lexed.tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(
            texts,
            [
                "f",
                "(",
                r#""a\"b""#,
                "L'x'",
                ",",
                "1.5e+3",
                ",",
                "...",
                ")",
                ">>=",
                "->"
            ]
        );
    }

    #[test]
    fn marker_parsing() {
        assert_eq!(
            parse_line_marker(" 3 \"x y.h\" 2"),
            Some((3, "x y.h".into()))
        );
        assert_eq!(parse_line_marker("line 9 \"z\""), Some((9, "z".into())));
        assert_eq!(parse_line_marker("pragma once"), None);
    }

    #[test]
    fn unterminated_string_is_an_error() {
        assert!(tokenize("\"abc\n", "t").is_err());
    }
}
