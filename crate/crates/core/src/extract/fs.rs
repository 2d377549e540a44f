use std::collections::BTreeMap;
use std::sync::Arc;

const MAX_SYMLINK_HOPS: usize = 40;

/// A node of the flattened image filesystem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    /// Regular file. `content` is `None` when the assembler was told not to
    /// retain this path's bytes.
    File {
        size: u64,
        content: Option<Arc<[u8]>>,
    },
    Dir,
    Symlink(String),
}

/// Normalises a tar or user path to `/a/b` form. `.` components are dropped
/// and `..` never climbs above the root.
pub fn normalize_path(path: &str) -> String {
    let mut parts: Vec<&str> = Vec::new();
    for comp in path.split('/') {
        match comp {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            c => parts.push(c),
        }
    }
    let mut out = String::with_capacity(path.len() + 1);
    for p in &parts {
        out.push('/');
        out.push_str(p);
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

fn parent_of(path: &str) -> &str {
    match path.rfind('/') {
        Some(0) | None => "/",
        Some(i) => &path[..i],
    }
}

/// Read-only view of a flattened image: normalised path → node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileTree {
    nodes: BTreeMap<String, Node>,
}

impl FileTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, path: &str) -> Option<&Node> {
        self.nodes.get(&normalize_path(path))
    }

    pub fn contains(&self, path: &str) -> bool {
        self.nodes.contains_key(&normalize_path(path))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Bytes of the regular file at `path`, without following symlinks.
    pub fn read(&self, path: &str) -> Option<&[u8]> {
        match self.get(path)? {
            Node::File { content: Some(c), .. } => Some(c),
            _ => None,
        }
    }

    /// Bytes of the file at `path` after resolving symlinks inside the image.
    pub fn read_resolved(&self, path: &str) -> Option<&[u8]> {
        let resolved = self.resolve(path)?;
        self.read(&resolved)
    }

    /// Resolves every symlink along `path` relative to the image root.
    /// Absolute targets restart at the image root and `..` stops there, so
    /// resolution never leaves the image. Returns `None` for dangling paths
    /// and symlink loops.
    pub fn resolve(&self, path: &str) -> Option<String> {
        let mut pending: Vec<String> = normalize_path(path)
            .split('/')
            .filter(|c| !c.is_empty())
            .rev()
            .map(str::to_string)
            .collect();
        let mut current = String::from("/");
        let mut hops = 0;
        while let Some(comp) = pending.pop() {
            if comp == "." {
                continue;
            }
            if comp == ".." {
                current = parent_of(&current).to_string();
                continue;
            }
            let candidate = if current == "/" {
                format!("/{comp}")
            } else {
                format!("{current}/{comp}")
            };
            match self.nodes.get(&candidate)? {
                Node::Symlink(target) => {
                    hops += 1;
                    if hops > MAX_SYMLINK_HOPS {
                        return None;
                    }
                    if target.starts_with('/') {
                        current = String::from("/");
                    }
                    for c in target.split('/').filter(|c| !c.is_empty()).rev() {
                        pending.push(c.to_string());
                    }
                }
                _ => current = candidate,
            }
        }
        Some(current)
    }

    /// Sorted list of every path in the view.
    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Node)> {
        self.nodes.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Regular files whose bytes were retained.
    pub fn files(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.nodes.iter().filter_map(|(k, v)| match v {
            Node::File { content: Some(c), .. } => Some((k.as_str(), &c[..])),
            _ => None,
        })
    }

    /// Files directly below `dir`.
    pub fn children(&self, dir: &str) -> Vec<&str> {
        let dir = normalize_path(dir);
        let prefix = if dir == "/" { dir.clone() } else { format!("{dir}/") };
        self.nodes
            .range(prefix.clone()..)
            .take_while(|(k, _)| k.starts_with(&prefix))
            .map(|(k, _)| k.as_str())
            .filter(|k| !k[prefix.len()..].contains('/') && *k != "/")
            .collect()
    }

    pub(crate) fn remove_tree(&mut self, path: &str) {
        self.nodes.remove(path);
        self.remove_descendants(path);
    }

    pub(crate) fn remove_descendants(&mut self, dir: &str) {
        let prefix = if dir == "/" { "/".to_string() } else { format!("{dir}/") };
        let doomed: Vec<String> = self
            .nodes
            .range(prefix.clone()..)
            .take_while(|(k, _)| k.starts_with(&prefix))
            .map(|(k, _)| k.clone())
            .collect();
        for k in doomed {
            self.nodes.remove(&k);
        }
    }

    pub(crate) fn insert(&mut self, path: String, node: Node) {
        if path == "/" {
            return;
        }
        self.ensure_parents(&path);
        if !matches!(node, Node::Dir) {
            // A non-directory replaces a whole subtree.
            self.remove_descendants(&path);
        } else if matches!(self.nodes.get(&path), Some(Node::Dir)) {
            return;
        }
        self.nodes.insert(path, node);
    }

    fn ensure_parents(&mut self, path: &str) {
        let mut parent = parent_of(path);
        let mut missing = Vec::new();
        while parent != "/" {
            match self.nodes.get(parent) {
                Some(Node::Dir) => break,
                _ => missing.push(parent.to_string()),
            }
            parent = parent_of(parent);
        }
        for p in missing {
            self.nodes.insert(p, Node::Dir);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(bytes: &[u8]) -> Node {
        Node::File {
            size: bytes.len() as u64,
            content: Some(Arc::from(bytes)),
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_path("./etc//a/"), "/etc/a");
        assert_eq!(normalize_path("../../x"), "/x");
        assert_eq!(normalize_path(""), "/");
    }

    #[test]
    fn symlinks_stay_inside_root() {
        let mut t = FileTree::new();
        t.insert("/var/lib/real/status".into(), file(b"ok"));
        t.insert("/var/lib/dpkg".into(), Node::Symlink("../lib/real".into()));
        t.insert("/escape".into(), Node::Symlink("../../../../etc/passwd".into()));
        t.insert("/etc/passwd".into(), file(b"image passwd"));
        t.insert("/loop".into(), Node::Symlink("/loop".into()));
        assert_eq!(t.read_resolved("/var/lib/dpkg/status"), Some(&b"ok"[..]));
        assert_eq!(t.read_resolved("/escape"), Some(&b"image passwd"[..]));
        assert_eq!(t.resolve("/loop"), None);
        assert_eq!(t.resolve("/nope"), None);
    }

    #[test]
    fn file_replaces_directory_subtree() {
        let mut t = FileTree::new();
        t.insert("/a/b/c".into(), file(b"1"));
        t.insert("/a/b".into(), file(b"2"));
        assert!(!t.contains("/a/b/c"));
        assert_eq!(t.read("/a/b"), Some(&b"2"[..]));
        assert_eq!(t.children("/a"), ["/a/b"]);
    }
}
