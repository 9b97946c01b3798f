//! The defect hierarchy: families → categories → leaf defects.

use serde::{Deserialize, Serialize};

use crate::text::normalize;

/// Children of a category: either further categories or a list of leaf
/// defect names. Mixed containers do not exist in the file format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Children {
    Categories(Vec<CategoryNode>),
    Leaves(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryNode {
    pub name: String,
    pub children: Children,
}

impl CategoryNode {
    pub fn leaves(name: impl Into<String>, leaves: &[&str]) -> Self {
        Self {
            name: name.into(),
            children: Children::Leaves(leaves.iter().map(|s| s.to_string()).collect()),
        }
    }

    pub fn categories(name: impl Into<String>, children: Vec<CategoryNode>) -> Self {
        Self { name: name.into(), children: Children::Categories(children) }
    }

    /// Every leaf below this node, in document order.
    pub fn subtree_leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        collect_leaves(self, &mut out);
        out
    }
}

fn collect_leaves<'a>(node: &'a CategoryNode, out: &mut Vec<&'a str>) {
    match &node.children {
        Children::Leaves(leaves) => out.extend(leaves.iter().map(String::as_str)),
        Children::Categories(children) => {
            for child in children {
                collect_leaves(child, out);
            }
        }
    }
}

/// Ordered forest of top-level defect families.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectTree {
    pub roots: Vec<CategoryNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Category,
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryEntry {
    pub name: String,
    pub depth: usize,
    pub kind: EntryKind,
}

/// Depth-annotated listing of the whole hierarchy in document order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryListing {
    pub entries: Vec<DirectoryEntry>,
}

impl DirectoryListing {
    pub fn leaf_count(&self) -> usize {
        self.entries.iter().filter(|e| e.kind == EntryKind::Leaf).count()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Two spaces of indentation per level; categories end with a colon.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            for _ in 0..entry.depth {
                out.push_str("  ");
            }
            out.push_str(&entry.name);
            if entry.kind == EntryKind::Category {
                out.push(':');
            }
            out.push('\n');
        }
        out
    }
}

/// Category names from a top-level family down to a leaf's parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryPath(pub Vec<String>);

impl CategoryPath {
    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn family(&self) -> Option<&str> {
        self.0.first().map(String::as_str)
    }

    /// `Surface defects → Main`
    pub fn display(&self) -> String {
        self.0.join(" → ")
    }
}

impl DefectTree {
    pub fn new(roots: Vec<CategoryNode>) -> Self {
        Self { roots }
    }

    pub fn families(&self) -> impl Iterator<Item = &str> {
        self.roots.iter().map(|r| r.name.as_str())
    }

    /// Recursive traversal: each family at depth 0, then its children one
    /// level deeper; leaf lists are emitted at the current indent.
    pub fn traverse(&self) -> DirectoryListing {
        let mut entries = Vec::new();
        for root in &self.roots {
            entries.push(DirectoryEntry {
                name: root.name.clone(),
                depth: 0,
                kind: EntryKind::Category,
            });
            traverse_node(&root.children, 1, &mut entries);
        }
        DirectoryListing { entries }
    }

    /// Depth-first search accumulating parent category names; returns the
    /// path of the first branch whose leaf list contains `target`.
    /// Comparison is case-insensitive and whitespace-normalized.
    pub fn find_path(&self, target: &str) -> Option<CategoryPath> {
        let wanted = normalize(target);
        if wanted.is_empty() {
            return None;
        }
        let mut path = Vec::new();
        for root in &self.roots {
            path.push(root.name.clone());
            if let Some(found) = find_in(&root.children, &wanted, &mut path) {
                return Some(found);
            }
            path.pop();
        }
        None
    }

    /// Leaf names in document order.
    pub fn leaves(&self) -> Vec<&str> {
        self.roots.iter().flat_map(|r| r.subtree_leaves()).collect()
    }

    /// Category names in document order, each distinct name once.
    pub fn category_names(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for root in &self.roots {
            walk_categories(root, &mut |node| {
                if !out.contains(&node.name.as_str()) {
                    out.push(node.name.as_str());
                }
            });
        }
        out
    }

    /// Every category node carrying `name` (normalized comparison), in
    /// document order. Placeholder names such as `Main` occur more than once.
    pub fn categories_named(&self, name: &str) -> Vec<&CategoryNode> {
        let wanted = normalize(name);
        let mut out = Vec::new();
        for root in &self.roots {
            walk_categories(root, &mut |node| {
                if normalize(&node.name) == wanted {
                    out.push(node);
                }
            });
        }
        out
    }

    /// How many category nodes carry each normalized name.
    pub fn category_occurrences(&self, name: &str) -> usize {
        self.categories_named(name).len()
    }
}

fn traverse_node(children: &Children, depth: usize, entries: &mut Vec<DirectoryEntry>) {
    match children {
        Children::Leaves(leaves) => {
            for leaf in leaves {
                entries.push(DirectoryEntry { name: leaf.clone(), depth, kind: EntryKind::Leaf });
            }
        }
        Children::Categories(categories) => {
            for category in categories {
                entries.push(DirectoryEntry {
                    name: category.name.clone(),
                    depth,
                    kind: EntryKind::Category,
                });
                traverse_node(&category.children, depth + 1, entries);
            }
        }
    }
}

fn find_in(children: &Children, wanted: &str, path: &mut Vec<String>) -> Option<CategoryPath> {
    match children {
        Children::Leaves(leaves) => {
            if leaves.iter().any(|leaf| normalize(leaf) == wanted) {
                return Some(CategoryPath(path.clone()));
            }
            None
        }
        Children::Categories(categories) => {
            for category in categories {
                path.push(category.name.clone());
                if let Some(found) = find_in(&category.children, wanted, path) {
                    return Some(found);
                }
                path.pop();
            }
            None
        }
    }
}

fn walk_categories<'a>(node: &'a CategoryNode, visit: &mut impl FnMut(&'a CategoryNode)) {
    visit(node);
    if let Children::Categories(children) = &node.children {
        for child in children {
            walk_categories(child, visit);
        }
    }
}
