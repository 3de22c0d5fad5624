//! Tree edit primitives and edit scripts.
//!
//! Three edits exist: `del(i)` removes node `i` and splices its children
//! into the parent's child list at its former position; `rep(i,a)` relabels
//! node `i`; `ins(i,c,C,a)` inserts a new node labeled `a` as the `c`-th
//! child of node `i`, adopting the `C` former children at positions
//! `c..c+C-1` as its children. Indices are 1-based preorder positions in
//! the tree the edit is applied to, not in the original tree of a script.
//!
//! The root is never deletable: with insertion only ever creating children
//! of existing nodes, allowing root deletion would make the edit graph
//! directed and break the symmetry of the induced distance.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trees::{Label, NodeIndex, Tree};

/// One node-level edit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TreeEdit {
    /// Remove node `i`; its children move up to its former position.
    Del(NodeIndex),
    /// Relabel node `i` with the given symbol.
    Rep(NodeIndex, Label),
    /// Insert a node as the `position`-th child of `parent`, adopting
    /// `adopted` former children starting at `position`.
    Ins {
        parent: NodeIndex,
        position: usize,
        adopted: usize,
        label: Label,
    },
}

impl fmt::Display for TreeEdit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeEdit::Del(i) => write!(f, "del({i})"),
            TreeEdit::Rep(i, a) => write!(f, "rep({i},{a})"),
            TreeEdit::Ins { parent, position, adopted, label } => {
                write!(f, "ins({parent},{position},{adopted},{label})")
            }
        }
    }
}

/// An ordered sequence of edits, applied left to right.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EditScript(pub Vec<TreeEdit>);

impl EditScript {
    pub fn new(edits: Vec<TreeEdit>) -> Self {
        EditScript(edits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The first `len` edits as a new script.
    pub fn prefix(&self, len: usize) -> EditScript {
        EditScript(self.0[..len].to_vec())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TreeEdit> {
        self.0.iter()
    }
}

impl fmt::Display for EditScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

// Edits serialize as their textual notation.
impl Serialize for TreeEdit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TreeEdit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_edit(&text).map_err(serde::de::Error::custom)
    }
}

fn parse_edit(text: &str) -> Result<TreeEdit, String> {
    let text = text.trim();
    let open = text.find('(').ok_or_else(|| format!("malformed edit {text:?}"))?;
    if !text.ends_with(')') {
        return Err(format!("malformed edit {text:?}"));
    }
    let name = &text[..open];
    let args: Vec<&str> = text[open + 1..text.len() - 1].split(',').map(str::trim).collect();
    let idx = |s: &str| s.parse::<usize>().map_err(|e| format!("bad index {s:?}: {e}"));
    let lab = |s: &str| Label::new(s).map_err(|e| e.to_string());
    match (name, args.as_slice()) {
        ("del", [i]) => Ok(TreeEdit::Del(idx(i)?)),
        ("rep", [i, a]) => Ok(TreeEdit::Rep(idx(i)?, lab(a)?)),
        ("ins", [i, c, cc, a]) => Ok(TreeEdit::Ins {
            parent: idx(i)?,
            position: idx(c)?,
            adopted: idx(cc)?,
            label: lab(a)?,
        }),
        _ => Err(format!("malformed edit {text:?}")),
    }
}

/// Why an edit was rejected. The tree is left untouched in every case.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EditError {
    #[error("node index {index} out of range for tree of size {size}")]
    IndexOutOfRange { index: NodeIndex, size: usize },
    #[error("cannot delete the root")]
    RootDeletion,
    #[error("insertion position {position} out of range for node with {arity} children")]
    PositionOutOfRange { position: usize, arity: usize },
    #[error(
        "insertion would adopt children {position}..{} but node has only {arity}",
        position + adopted - 1
    )]
    ChildRangeOverflow { position: usize, adopted: usize, arity: usize },
}

/// An edit script failed at a specific step.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("edit {step} of script inapplicable: {source}")]
pub struct ScriptError {
    /// 1-based position of the failing edit within the script.
    pub step: usize,
    pub source: EditError,
}

/// Applies one edit, returning the new tree.
pub fn apply_edit(tree: &Tree, edit: &TreeEdit) -> Result<Tree, EditError> {
    let size = tree.size();
    let target = match edit {
        TreeEdit::Del(i) => *i,
        TreeEdit::Rep(i, _) => *i,
        TreeEdit::Ins { parent, .. } => *parent,
    };
    if target < 1 || target > size {
        return Err(EditError::IndexOutOfRange { index: target, size });
    }
    match edit {
        TreeEdit::Del(i) => {
            if *i == 1 {
                return Err(EditError::RootDeletion);
            }
            let mut out = tree.clone();
            let path = path_to(&out, *i);
            let (parent_path, last) = path.split_at(path.len() - 1);
            let parent = node_mut(&mut out, parent_path);
            let removed = parent.children.remove(last[0]);
            for (k, child) in removed.children.into_iter().enumerate() {
                parent.children.insert(last[0] + k, child);
            }
            Ok(out)
        }
        TreeEdit::Rep(i, label) => {
            let mut out = tree.clone();
            let path = path_to(&out, *i);
            node_mut(&mut out, &path).label = label.clone();
            Ok(out)
        }
        TreeEdit::Ins { parent, position, adopted, label } => {
            let mut out = tree.clone();
            let path = path_to(&out, *parent);
            let node = node_mut(&mut out, &path);
            let arity = node.children.len();
            if *position < 1 || *position > arity + 1 {
                return Err(EditError::PositionOutOfRange { position: *position, arity });
            }
            if position - 1 + adopted > arity {
                return Err(EditError::ChildRangeOverflow {
                    position: *position,
                    adopted: *adopted,
                    arity,
                });
            }
            let grabbed: Vec<Tree> =
                node.children.drain(position - 1..position - 1 + adopted).collect();
            node.children.insert(position - 1, Tree::new(label.clone(), grabbed));
            Ok(out)
        }
    }
}

/// Applies a script edit by edit; the empty script is the identity.
pub fn apply_script(tree: &Tree, script: &EditScript) -> Result<Tree, ScriptError> {
    let mut cur = tree.clone();
    for (k, edit) in script.iter().enumerate() {
        cur = apply_edit(&cur, edit).map_err(|source| ScriptError { step: k + 1, source })?;
    }
    Ok(cur)
}

/// Child-position path from the root to preorder node `i` (must be in range).
fn path_to(tree: &Tree, i: NodeIndex) -> Vec<usize> {
    let mut path = Vec::new();
    let mut cur = tree;
    let mut offset = i - 1;
    while offset > 0 {
        offset -= 1;
        let mut consumed = 0;
        for (ci, child) in cur.children.iter().enumerate() {
            let s = child.size();
            if offset < consumed + s {
                path.push(ci);
                offset -= consumed;
                cur = child;
                break;
            }
            consumed += s;
        }
    }
    path
}

fn node_mut<'a>(tree: &'a mut Tree, path: &[usize]) -> &'a mut Tree {
    let mut cur = tree;
    for &ci in path {
        cur = &mut cur.children[ci];
    }
    cur
}

/// Draws an edit that is applicable to `tree`: the edit type is chosen
/// uniformly among the currently applicable types, then every parameter
/// uniformly among its valid values. The alphabet must be non-empty.
pub fn random_edit<R: Rng + ?Sized>(tree: &Tree, alphabet: &[Label], rng: &mut R) -> TreeEdit {
    assert!(!alphabet.is_empty(), "random_edit needs a non-empty alphabet");
    let size = tree.size();
    // Deletion applies only when a non-root node exists.
    let kinds: &[u8] = if size > 1 { &[0, 1, 2] } else { &[1, 2] };
    match kinds[rng.random_range(0..kinds.len())] {
        0 => TreeEdit::Del(rng.random_range(2..=size)),
        1 => {
            let i = rng.random_range(1..=size);
            let label = alphabet[rng.random_range(0..alphabet.len())].clone();
            TreeEdit::Rep(i, label)
        }
        _ => {
            let parent = rng.random_range(1..=size);
            let arity = arity_of(tree, parent);
            let position = rng.random_range(1..=arity + 1);
            let adopted = rng.random_range(0..=arity - (position - 1));
            let label = alphabet[rng.random_range(0..alphabet.len())].clone();
            TreeEdit::Ins { parent, position, adopted, label }
        }
    }
}

fn arity_of(tree: &Tree, i: NodeIndex) -> usize {
    let path = path_to(tree, i);
    let mut cur = tree;
    for &ci in &path {
        cur = &cur.children[ci];
    }
    cur.children.len()
}
