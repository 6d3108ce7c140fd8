//! Profiles written by the measurement runtime: reading, merging and rendering.
//!
//! A profile file is JSON:
//!
//! ```json
//! {"pid": 4242,
//!  "regions": [{"id": 0, "name": "mylib_a", "file": "mylib.h", "line": 3}],
//!  "calltree": [{"region": 0, "count": 2, "incl_ns": 900, "excl_ns": 900, "children": []}]}
//! ```
//!
//! `calltree` lists the top-level calls. Each node aggregates every call of
//! its region along the same call path: `count` calls, `incl_ns` including
//! callees and `excl_ns` excluding them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub id: u32,
    pub name: String,
    pub file: String,
    pub line: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub region: u32,
    pub count: u64,
    pub incl_ns: u64,
    pub excl_ns: u64,
    #[serde(default)]
    pub children: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub pid: u64,
    pub regions: Vec<Region>,
    pub calltree: Vec<Node>,
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("cannot read profile {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: not a profile: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: node refers to unknown region {region}", path.display())]
    UnknownRegion { path: PathBuf, region: u32 },
}

impl Profile {
    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        let text = fs::read_to_string(path).map_err(|source| ProfileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        // Call trees nest one JSON object per frame, so deep recursion in the
        // profiled program exceeds serde_json's default depth limit.
        let mut de = serde_json::Deserializer::from_str(&text);
        de.disable_recursion_limit();
        let parsed = Profile::deserialize(serde_stacker::Deserializer::new(&mut de)).and_then(|p| de.end().map(|()| p));
        let profile = parsed.map_err(|source| ProfileError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        profile.check_regions(path)?;
        Ok(profile)
    }

    fn check_regions(&self, path: &Path) -> Result<(), ProfileError> {
        fn walk(nodes: &[Node], known: &dyn Fn(u32) -> bool, path: &Path) -> Result<(), ProfileError> {
            for n in nodes {
                if !known(n.region) {
                    return Err(ProfileError::UnknownRegion {
                        path: path.to_path_buf(),
                        region: n.region,
                    });
                }
                walk(&n.children, known, path)?;
            }
            Ok(())
        }
        walk(&self.calltree, &|r| self.regions.iter().any(|x| x.id == r), path)
    }

    fn region_name(&self, id: u32) -> &str {
        self.regions
            .iter()
            .find(|r| r.id == id)
            .map_or("<unknown>", |r| r.name.as_str())
    }
}

/// A call tree keyed by region name, the common form of one or more profiles.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallTree {
    pub roots: Vec<TreeNode>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TreeNode {
    pub name: String,
    pub count: u64,
    pub incl_ns: u64,
    pub excl_ns: u64,
    /// Sorted by name.
    pub children: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatEntry {
    pub name: String,
    pub count: u64,
    /// Time in the outermost calls of the region only, so recursion is not counted twice.
    pub incl_ns: u64,
    pub excl_ns: u64,
}

fn merge_nodes(into: &mut Vec<TreeNode>, nodes: &[Node], profile: &Profile) {
    for n in nodes {
        let name = profile.region_name(n.region);
        let idx = match into.binary_search_by(|t| t.name.as_str().cmp(name)) {
            Ok(i) => i,
            Err(i) => {
                into.insert(
                    i,
                    TreeNode {
                        name: name.to_string(),
                        ..TreeNode::default()
                    },
                );
                i
            }
        };
        let t = &mut into[idx];
        t.count += n.count;
        t.incl_ns += n.incl_ns;
        t.excl_ns += n.excl_ns;
        merge_nodes(&mut t.children, &n.children, profile);
    }
}

/// Merges profiles (e.g. of several processes) by region name and call path.
pub fn merge<'a>(profiles: impl IntoIterator<Item = &'a Profile>) -> CallTree {
    let mut tree = CallTree::default();
    for p in profiles {
        merge_nodes(&mut tree.roots, &p.calltree, p);
    }
    tree
}

impl CallTree {
    pub fn from_profile(profile: &Profile) -> Self {
        merge([profile])
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a TreeNode, &[&'a TreeNode])) {
        fn go<'a>(
            nodes: &'a [TreeNode],
            path: &mut Vec<&'a TreeNode>,
            f: &mut impl FnMut(&'a TreeNode, &[&'a TreeNode]),
        ) {
            for n in nodes {
                f(n, path);
                path.push(n);
                go(&n.children, path, f);
                path.pop();
            }
        }
        go(&self.roots, &mut Vec::new(), f);
    }

    /// Total calls per region over all call paths.
    pub fn counts(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        self.walk(&mut |n, _| *out.entry(n.name.clone()).or_insert(0) += n.count);
        out
    }

    /// Per-region totals, sorted by exclusive time (largest first), then name.
    pub fn flat(&self) -> Vec<FlatEntry> {
        let mut map: BTreeMap<&str, FlatEntry> = BTreeMap::new();
        self.walk(&mut |n, ancestors| {
            let e = map.entry(n.name.as_str()).or_insert_with(|| FlatEntry {
                name: n.name.clone(),
                count: 0,
                incl_ns: 0,
                excl_ns: 0,
            });
            e.count += n.count;
            e.excl_ns += n.excl_ns;
            if !ancestors.iter().any(|a| a.name == n.name) {
                e.incl_ns += n.incl_ns;
            }
        });
        let mut out: Vec<FlatEntry> = map.into_values().collect();
        out.sort_by(|a, b| b.excl_ns.cmp(&a.excl_ns).then_with(|| a.name.cmp(&b.name)));
        out
    }

    /// Sum of the top-level inclusive times.
    pub fn total_ns(&self) -> u64 {
        self.roots.iter().map(|r| r.incl_ns).sum()
    }

    /// Deepest call path length.
    pub fn depth(&self) -> usize {
        let mut max = 0;
        self.walk(&mut |_, ancestors| max = max.max(ancestors.len() + 1));
        max
    }

    /// Checks `excl = incl - sum(children incl) >= 0` at every node, allowing
    /// `tolerance_ns` for clock resolution.
    pub fn check_timing(&self, tolerance_ns: u64) -> Result<(), String> {
        let mut problem = None;
        self.walk(&mut |n, ancestors| {
            if problem.is_some() {
                return;
            }
            let children: u64 = n.children.iter().map(|c| c.incl_ns).sum();
            let path = || {
                let mut p: Vec<&str> = ancestors.iter().map(|a| a.name.as_str()).collect();
                p.push(&n.name);
                p.join(" > ")
            };
            if children > n.incl_ns + tolerance_ns {
                problem = Some(format!(
                    "{}: children take {children} ns, more than the inclusive {} ns",
                    path(),
                    n.incl_ns
                ));
            } else if n.excl_ns.abs_diff(n.incl_ns.saturating_sub(children)) > tolerance_ns {
                problem = Some(format!(
                    "{}: exclusive {} ns, expected {} ns",
                    path(),
                    n.excl_ns,
                    n.incl_ns.saturating_sub(children)
                ));
            }
        });
        problem.map_or(Ok(()), Err)
    }
}

fn secs(ns: u64) -> String {
    format!("{:.6}", ns as f64 / 1e9)
}

const HEADER: &str = "       count     incl [s]     excl [s]  region\n";

/// Indented call tree with count, inclusive and exclusive seconds per node.
pub fn render_tree(tree: &CallTree) -> String {
    fn go(out: &mut String, nodes: &[TreeNode], depth: usize) {
        for n in nodes {
            let _ = writeln!(
                out,
                "{:>12} {:>12} {:>12}  {}{}",
                n.count,
                secs(n.incl_ns),
                secs(n.excl_ns),
                "  ".repeat(depth),
                n.name
            );
            go(out, &n.children, depth + 1);
        }
    }
    let mut out = String::from(HEADER);
    go(&mut out, &tree.roots, 0);
    out
}

/// Per-region totals sorted by exclusive time.
pub fn render_flat(tree: &CallTree) -> String {
    let mut out = String::from(HEADER);
    for e in tree.flat() {
        let _ = writeln!(
            out,
            "{:>12} {:>12} {:>12}  {}",
            e.count,
            secs(e.incl_ns),
            secs(e.excl_ns),
            e.name
        );
    }
    out
}
