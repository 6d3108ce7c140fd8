//! Include/exclude rules selecting which declared functions get wrapped.
//!
//! A filter file has two sections. `FILES:` rules match the path of the
//! header a function is declared in, and `FUNCTIONS:` rules match its name.
//! Rules are shell-style globs; within a section the last matching rule
//! decides, and a function is wrapped only when both sections agree:
//!
//! ```text
//! # only the public headers
//! FILES:
//! EXCLUDE /opt/mylib/include/*
//! INCLUDE /opt/mylib/include/mylib.h
//!
//! FUNCTIONS:
//! EXCLUDE mylib_debug_*
//! ```
//!
//! When no `FILES:` rule matches, a header is selected if it lies below one
//! of the `-I` directories of the preprocessor flags. Without a matching
//! `FUNCTIONS:` rule a name is selected. The `FUNCTIONS:` section is an
//! extension of the plain path-based filter.
//!
//! `*` also matches `/`, so `INCLUDE /opt/mylib/include/*` covers
//! subdirectories. Relative paths (in patterns and in `-I` flags) are taken
//! relative to the working directory.

use std::fmt;
use std::path::{Path, PathBuf};

use glob::{MatchOptions, Pattern};
use thiserror::Error;

use crate::config::include_dirs;
use crate::declscan::FunctionDecl;
use crate::fsutil::{absolutize, normalize_path};
use crate::symreconcile::SymbolReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Include,
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Files,
    Functions,
}

#[derive(Debug, Clone)]
pub struct FilterRule {
    pub action: Action,
    pub domain: Domain,
    /// The pattern as written.
    pub pattern: String,
    glob: Pattern,
}

impl PartialEq for FilterRule {
    fn eq(&self, other: &Self) -> bool {
        self.action == other.action && self.domain == other.domain && self.pattern == other.pattern
    }
}

impl FilterRule {
    pub fn new(action: Action, domain: Domain, pattern: &str) -> Result<Self, glob::PatternError> {
        Ok(FilterRule {
            action,
            domain,
            pattern: pattern.to_string(),
            glob: Pattern::new(&collapse_stars(pattern))?,
        })
    }
}

/// `**` means the same as `*` here, but the glob engine reserves it for
/// whole path components.
fn collapse_stars(pattern: &str) -> String {
    let mut out = String::with_capacity(pattern.len());
    let mut in_class = false;
    let mut class_len = 0;
    for c in pattern.chars() {
        if in_class {
            // `]` right after `[` or `[!` is a member, not the end.
            if c == ']' && class_len > 0 {
                in_class = false;
            } else if !(c == '!' && class_len == 0) {
                class_len += 1;
            }
        } else if c == '[' {
            in_class = true;
            class_len = 0;
        } else if c == '*' && out.ends_with('*') {
            continue;
        }
        out.push(c);
    }
    out
}

impl fmt::Display for FilterRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let word = match self.action {
            Action::Include => "INCLUDE",
            Action::Exclude => "EXCLUDE",
        };
        write!(f, "{word} {}", self.pattern)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{origin}:{line}: {message}")]
pub struct FilterParseError {
    pub origin: String,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct FilterSet {
    pub rules: Vec<FilterRule>,
    /// Absolute, normalized.
    pub default_include_dirs: Vec<PathBuf>,
    /// Relative patterns and declaration paths are resolved against this.
    pub base_dir: PathBuf,
}

const MATCH: MatchOptions = MatchOptions {
    case_sensitive: true,
    require_literal_separator: false,
    require_literal_leading_dot: false,
};

/// Parses filter rules. `origin` names the file in error messages.
pub fn parse_filter(text: &str, origin: &str) -> Result<Vec<FilterRule>, FilterParseError> {
    let mut rules = Vec::new();
    let mut domain = Domain::Files;
    for (idx, raw) in text.lines().enumerate() {
        let err = |message: String| FilterParseError {
            origin: origin.to_string(),
            line: idx + 1,
            message,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "FILES:" => {
                domain = Domain::Files;
                continue;
            }
            "FUNCTIONS:" => {
                domain = Domain::Functions;
                continue;
            }
            _ => {}
        }
        let (keyword, pattern) = line
            .split_once(char::is_whitespace)
            .map(|(k, p)| (k, p.trim()))
            .unwrap_or((line, ""));
        let action = match keyword {
            "INCLUDE" => Action::Include,
            "EXCLUDE" => Action::Exclude,
            other => {
                return Err(err(format!(
                    "unknown keyword `{other}` (expected INCLUDE, EXCLUDE, FILES: or FUNCTIONS:)"
                )))
            }
        };
        if pattern.is_empty() {
            return Err(err(format!("{keyword} needs a pattern")));
        }
        let rule = FilterRule::new(action, domain, pattern)
            .map_err(|e| err(format!("invalid pattern `{pattern}`: {}", e.msg)))?;
        rules.push(rule);
    }
    Ok(rules)
}

impl FilterSet {
    pub fn new(rules: Vec<FilterRule>, default_include_dirs: &[PathBuf], base_dir: &Path) -> Self {
        let base_dir = normalize_path(base_dir);
        FilterSet {
            rules,
            default_include_dirs: default_include_dirs
                .iter()
                .map(|d| absolutize(d, &base_dir))
                .collect(),
            base_dir,
        }
    }

    /// Rules from `text`, default directories from the `-I` flags.
    pub fn from_text(
        text: &str,
        origin: &str,
        preprocessor_flags: &[String],
        base_dir: &Path,
    ) -> Result<Self, FilterParseError> {
        let rules = parse_filter(text, origin)?;
        let dirs: Vec<PathBuf> = include_dirs(preprocessor_flags)
            .into_iter()
            .map(PathBuf::from)
            .collect();
        Ok(FilterSet::new(rules, &dirs, base_dir))
    }

    pub fn decide(&self, decl: &FunctionDecl) -> bool {
        self.decide_at(&decl.location.file, &decl.name)
    }

    /// Whether a function `name` declared in `file` is wrapped.
    pub fn decide_at(&self, file: &Path, name: &str) -> bool {
        let file = absolutize(file, &self.base_dir);
        let file_str = file.to_string_lossy();
        let file_verdict = self
            .last_match(Domain::Files, |rule| self.file_pattern_matches(rule, &file_str))
            .unwrap_or_else(|| self.default_include_dirs.iter().any(|d| file.starts_with(d)));
        let name_verdict = self
            .last_match(Domain::Functions, |rule| rule.glob.matches_with(name, MATCH))
            .unwrap_or(true);
        file_verdict && name_verdict
    }

    fn last_match(&self, domain: Domain, matches: impl Fn(&FilterRule) -> bool) -> Option<bool> {
        self.rules
            .iter()
            .rev()
            .filter(|r| r.domain == domain)
            .find(|r| matches(r))
            .map(|r| r.action == Action::Include)
    }

    fn file_pattern_matches(&self, rule: &FilterRule, file: &str) -> bool {
        if rule.glob.matches_with(file, MATCH) {
            return true;
        }
        // A relative pattern is anchored at the base directory.
        if rule.pattern.starts_with('/') || rule.pattern.starts_with('*') {
            return false;
        }
        let base = Pattern::escape(&self.base_dir.to_string_lossy());
        let sep = if base.ends_with('/') { "" } else { "/" };
        Pattern::new(&format!("{base}{sep}{}", rule.pattern))
            .is_ok_and(|p| p.matches_with(file, MATCH))
    }
}

/// `FUNCTIONS:` exclusions for every name in the report, ready to append
/// to the filter file. Empty when there is nothing to exclude.
pub fn suggest_exclusions(report: &SymbolReport) -> String {
    let mut names: Vec<&str> = report
        .missing
        .iter()
        .chain(&report.resolvable_without_target)
        .map(String::as_str)
        .collect();
    names.sort_unstable();
    names.dedup();
    if names.is_empty() {
        return String::new();
    }
    let mut out = String::from("FUNCTIONS:\n");
    for name in names {
        out.push_str("EXCLUDE ");
        out.push_str(&Pattern::escape(name));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(text: &str, dirs: &[&str]) -> FilterSet {
        let dirs: Vec<PathBuf> = dirs.iter().map(PathBuf::from).collect();
        FilterSet::new(parse_filter(text, "f").unwrap(), &dirs, Path::new("/work"))
    }

    #[test]
    fn parses_sections_and_rules() {
        let rules = parse_filter("INCLUDE /usr/include/x86_64-linux-gnu/qt5/QtGui/*", "f").unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!((rules[0].action, rules[0].domain), (Action::Include, Domain::Files));

        assert!(parse_filter("", "f").unwrap().is_empty());

        let rules = parse_filter("FUNCTIONS:\nEXCLUDE q*_dbg", "f").unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!((rules[0].action, rules[0].domain), (Action::Exclude, Domain::Functions));
        assert_eq!(rules[0].pattern, "q*_dbg");
    }

    #[test]
    fn unknown_keyword_reports_line() {
        assert_eq!(collapse_stars("a**b[**]*"), "a*b[**]*");
        let err = parse_filter("# c\nINCLUDE a\nINCLUDES b\n", "lib.filter").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.to_string().starts_with("lib.filter:3: unknown keyword `INCLUDES`"), "{err}");
        assert_eq!(parse_filter("EXCLUDE\n", "f").unwrap_err().line, 1);
        assert_eq!(parse_filter("INCLUDE [a\n", "f").unwrap_err().line, 1);
    }

    #[test]
    fn default_is_include_dirs() {
        let f = set("", &["/opt/mylib/include"]);
        assert!(!f.decide_at(Path::new("/usr/include/stdio.h"), "printf"));
        assert!(f.decide_at(Path::new("/opt/mylib/include/m.h"), "m"));
        assert!(f.decide_at(Path::new("/opt/mylib/include/sub/../m.h"), "m"));
        assert!(!f.decide_at(Path::new("/opt/mylib/include2/m.h"), "m"));
    }

    #[test]
    fn last_match_wins() {
        let f = set(
            "EXCLUDE /opt/mylib/include/*\nINCLUDE /opt/mylib/include/m.h\n",
            &["/opt/mylib/include"],
        );
        assert!(f.decide_at(Path::new("/opt/mylib/include/m.h"), "m"));
        assert!(!f.decide_at(Path::new("/opt/mylib/include/n.h"), "n"));
    }

    #[test]
    fn domains_are_anded() {
        let f = set("INCLUDE /usr/include/*\nFUNCTIONS:\nEXCLUDE q*_dbg\n", &[]);
        assert!(f.decide_at(Path::new("/usr/include/q.h"), "q_open"));
        assert!(!f.decide_at(Path::new("/usr/include/q.h"), "q_open_dbg"));
        assert!(!f.decide_at(Path::new("/opt/q.h"), "q_open"));
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let f = set("EXCLUDE include/private/*\n", &["include"]);
        assert!(f.decide_at(Path::new("include/m.h"), "m"));
        assert!(f.decide_at(Path::new("/work/include/m.h"), "m"));
        assert!(!f.decide_at(Path::new("include/private/p.h"), "p"));
    }

    #[test]
    fn suggestions() {
        let report = SymbolReport {
            missing: vec!["qFoo".into()],
            resolvable_without_target: vec![],
        };
        assert_eq!(suggest_exclusions(&report), "FUNCTIONS:\nEXCLUDE qFoo\n");
        assert_eq!(suggest_exclusions(&SymbolReport::default()), "");

        let missing: Vec<String> = (0..818).map(|i| format!("missing_{i:03}")).collect();
        let report = SymbolReport {
            missing,
            resolvable_without_target: vec!["puts".into()],
        };
        let text = suggest_exclusions(&report);
        assert_eq!(text.lines().filter(|l| l.starts_with("EXCLUDE ")).count(), 819);
        let rules = parse_filter(&text, "s").unwrap();
        let f = FilterSet::new(rules, &[PathBuf::from("/i")], Path::new("/"));
        assert!(!f.decide_at(Path::new("/i/a.h"), "missing_817"));
        assert!(!f.decide_at(Path::new("/i/a.h"), "puts"));
        assert!(f.decide_at(Path::new("/i/a.h"), "present"));
    }

    /// Independent glob semantics: translate to an anchored regex.
    fn glob_to_regex(pattern: &str) -> String {
        let mut re = String::from("^");
        let chars: Vec<char> = pattern.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            match chars[i] {
                '*' => re.push_str(".*"),
                '?' => re.push('.'),
                '[' => {
                    let close = chars[i + 1..].iter().skip(1).position(|&c| c == ']').map(|p| p + i + 2);
                    let close = close.expect("generator only emits closed classes");
                    let mut body: Vec<char> = chars[i + 1..close].to_vec();
                    re.push('[');
                    if body.first() == Some(&'!') {
                        re.push('^');
                        body.remove(0);
                    }
                    for c in body {
                        if c == '-' {
                            re.push('-');
                        } else {
                            re.push_str(&regex::escape(&c.to_string()));
                        }
                    }
                    re.push(']');
                    i = close;
                }
                c => re.push_str(&regex::escape(&c.to_string())),
            }
            i += 1;
        }
        re.push('$');
        re
    }

    fn pattern_strategy() -> impl Strategy<Value = String> {
        let piece = prop_oneof![
            4 => "[a-c/._]".prop_map(|s| s),
            2 => Just("*".to_string()),
            1 => Just("?".to_string()),
            1 => "[a-c]{1,2}".prop_map(|s| format!("[{s}]")),
            1 => "[a-c]{1,2}".prop_map(|s| format!("[!{s}]")),
            1 => Just("[a-c]".to_string()),
        ];
        prop::collection::vec(piece, 1..8).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn glob_agrees_with_regex_oracle(
            pattern in pattern_strategy(),
            subject in "[a-c/._]{0,10}",
        ) {
            let oracle = regex::Regex::new(&glob_to_regex(&pattern)).unwrap();
            let rule = FilterRule::new(Action::Include, Domain::Functions, &pattern).unwrap();
            let ours = rule.glob.matches_with(&subject, MATCH);
            prop_assert_eq!(ours, oracle.is_match(&subject), "pattern {:?}", pattern);
        }

        #[test]
        fn decide_is_deterministic_and_order_sensitive(
            names in prop::collection::vec("[a-c]{1,3}", 1..6),
            subject in "[a-c]{1,3}",
        ) {
            let text: String = names
                .iter()
                .enumerate()
                .map(|(i, n)| format!("{} {n}*\n", if i % 2 == 0 { "EXCLUDE" } else { "INCLUDE" }))
                .collect();
            let f = set(&format!("INCLUDE /*\nFUNCTIONS:\n{text}"), &[]);
            let last = names
                .iter()
                .enumerate()
                .rev()
                .find(|(_, n)| subject.starts_with(n.as_str()))
                .map(|(i, _)| i % 2 == 1)
                .unwrap_or(true);
            prop_assert_eq!(f.decide_at(Path::new("/x.h"), &subject), last);
            prop_assert_eq!(f.decide_at(Path::new("/x.h"), &subject), last);
        }
    }
}
