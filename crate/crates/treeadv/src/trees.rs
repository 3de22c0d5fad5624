//! Ordered labeled trees over a finite alphabet.
//!
//! Trees are immutable values: every mutation in this crate produces a new
//! tree. Nodes are addressed by their 1-based preorder index (depth-first,
//! left to right, parents before children); index 1 is always the root.
//!
//! The textual form is `label` for a leaf and `label(child,...,child)`
//! otherwise, with optional ASCII whitespace between tokens. Labels are
//! tokens over letters, digits and underscore, so multi-character symbols
//! from real syntax-tree datasets work unchanged.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// 1-based preorder position of a node within a specific tree.
pub type NodeIndex = usize;

/// A node symbol: a non-empty token over `[A-Za-z0-9_]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(String);

impl Label {
    /// Validates and wraps a symbol token.
    pub fn new(symbol: impl Into<String>) -> Result<Self, ParseError> {
        let symbol = symbol.into();
        if symbol.is_empty() {
            return Err(ParseError::new(ParseErrorKind::EmptyLabel, 0));
        }
        if let Some(bad) = symbol.chars().find(|c| !is_label_char(*c)) {
            return Err(ParseError::new(ParseErrorKind::InvalidLabelChar(bad), 0));
        }
        Ok(Label(symbol))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Label {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::new(s)
    }
}

fn is_label_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// An ordered, rooted, labeled tree. Size is always at least 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tree {
    pub label: Label,
    pub children: Vec<Tree>,
}

impl Tree {
    pub fn new(label: Label, children: Vec<Tree>) -> Self {
        Tree { label, children }
    }

    /// A childless node.
    pub fn leaf(label: Label) -> Self {
        Tree { label, children: Vec::new() }
    }

    /// Parses the `label(child,...,child)` notation.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut p = Parser { src: text, pos: 0 };
        p.skip_ws();
        let tree = p.parse_tree()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(ParseError::new(ParseErrorKind::TrailingInput, p.pos));
        }
        Ok(tree)
    }

    /// Renders the tree in the grammar accepted by [`Tree::parse`]; leaves
    /// are emitted without parentheses.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        self.write_to(&mut out);
        out
    }

    fn write_to(&self, out: &mut String) {
        out.push_str(self.label.as_str());
        if !self.children.is_empty() {
            out.push('(');
            for (i, child) in self.children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                child.write_to(out);
            }
            out.push(')');
        }
    }

    /// Number of nodes: `1 + sum of child sizes`.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Tree::size).sum::<usize>()
    }

    /// Looks up the node at 1-based preorder index `i`.
    pub fn node_at(&self, i: NodeIndex) -> Result<NodeInfo<'_>, IndexError> {
        let n = self.size();
        if i < 1 || i > n {
            return Err(IndexError { index: i, size: n });
        }
        let mut cur = self;
        let mut parent: Option<NodeIndex> = None;
        let mut child_position: Option<usize> = None;
        let mut cur_index = 1;
        // Descend: skip whole child subtrees until the offset lands inside one.
        let mut offset = i - 1;
        while offset > 0 {
            offset -= 1;
            let mut consumed = 0;
            for (pos, child) in cur.children.iter().enumerate() {
                let s = child.size();
                if offset < consumed + s {
                    parent = Some(cur_index);
                    child_position = Some(pos + 1);
                    cur_index += consumed + 1;
                    offset -= consumed;
                    cur = child;
                    break;
                }
                consumed += s;
            }
        }
        Ok(NodeInfo { label: &cur.label, parent, child_position })
    }

    /// Iterates over `(preorder index, node)` pairs in preorder.
    pub fn preorder(&self) -> impl Iterator<Item = (NodeIndex, &Tree)> {
        let mut nodes = Vec::with_capacity(self.size());
        fn walk<'a>(t: &'a Tree, nodes: &mut Vec<&'a Tree>) {
            nodes.push(t);
            for c in &t.children {
                walk(c, nodes);
            }
        }
        walk(self, &mut nodes);
        nodes.into_iter().enumerate().map(|(i, t)| (i + 1, t))
    }
}

/// What [`Tree::node_at`] reports about a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeInfo<'a> {
    pub label: &'a Label,
    /// Preorder index of the parent; `None` for the root.
    pub parent: Option<NodeIndex>,
    /// 1-based position under the parent; `None` for the root.
    pub child_position: Option<usize>,
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl FromStr for Tree {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tree::parse(s)
    }
}

// Trees cross serde boundaries (datasets, model files, attack records) in
// their textual form.
impl Serialize for Tree {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.serialize())
    }
}

impl<'de> Deserialize<'de> for Tree {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Tree::parse(&text).map_err(D::Error::custom)
    }
}

/// Parse failure, with the byte offset of the offending position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {position}: {kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
}

impl ParseError {
    fn new(kind: ParseErrorKind, position: usize) -> Self {
        ParseError { kind, position }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("expected a label")]
    EmptyLabel,
    #[error("invalid character {0:?} in label")]
    InvalidLabelChar(char),
    #[error("expected ',' or ')'")]
    ExpectedSeparator,
    #[error("unbalanced parentheses")]
    Unbalanced,
    #[error("trailing input after tree")]
    TrailingInput,
}

/// Node index outside `1..=size`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("node index {index} out of range for tree of size {size}")]
pub struct IndexError {
    pub index: NodeIndex,
    pub size: usize,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        let trimmed = rest.trim_start_matches([' ', '\t', '\n', '\r']);
        self.pos += rest.len() - trimmed.len();
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn parse_label(&mut self) -> Result<Label, ParseError> {
        let start = self.pos;
        let rest = &self.src[start..];
        let end = rest.find(|c| !is_label_char(c)).unwrap_or(rest.len());
        if end == 0 {
            return Err(ParseError::new(ParseErrorKind::EmptyLabel, start));
        }
        self.pos += end;
        Ok(Label(rest[..end].to_string()))
    }

    fn parse_tree(&mut self) -> Result<Tree, ParseError> {
        let label = self.parse_label()?;
        self.skip_ws();
        if self.peek() != Some('(') {
            return Ok(Tree::leaf(label));
        }
        self.pos += 1;
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            children.push(self.parse_tree()?);
            self.skip_ws();
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(')') => {
                    self.pos += 1;
                    return Ok(Tree::new(label, children));
                }
                Some(_) => {
                    return Err(ParseError::new(ParseErrorKind::ExpectedSeparator, self.pos))
                }
                None => return Err(ParseError::new(ParseErrorKind::Unbalanced, self.pos)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Tree {
        Tree::parse(s).unwrap()
    }

    #[test]
    fn parses_single_token_leaf() {
        let tree = t("a");
        assert_eq!(tree.label.as_str(), "a");
        assert!(tree.children.is_empty());
        assert_eq!(tree.size(), 1);
    }

    #[test]
    fn parses_nested_tree_in_preorder() {
        let tree = t("a(b(c,d),e)");
        assert_eq!(tree.size(), 5);
        let labels: Vec<&str> = tree.preorder().map(|(_, n)| n.label.as_str()).collect();
        assert_eq!(labels, ["a", "b", "c", "d", "e"]);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Tree::parse("a(b").is_err());
        assert!(Tree::parse("").is_err());
        assert!(Tree::parse("a(b,)").is_err());
        assert!(Tree::parse("a()").is_err());
        assert!(Tree::parse("a(b))").is_err());
        assert!(Tree::parse("a b").is_err());
        let err = Tree::parse("a(b").unwrap_err();
        assert_eq!(err.position, 3);
    }

    #[test]
    fn whitespace_between_tokens_is_ignored() {
        assert_eq!(t(" a ( b ( c , d ) , e ) "), t("a(b(c,d),e)"));
    }

    #[test]
    fn serializes_leaf_without_parens() {
        assert_eq!(t("a").serialize(), "a");
        assert_eq!(t("a(b(c,d),e)").serialize(), "a(b(c,d),e)");
    }

    #[test]
    fn size_is_additive() {
        assert_eq!(t("a").size(), 1);
        assert_eq!(t("a(b(c,d),e)").size(), 5);
        assert_eq!(t("a(b,b,b)").size(), 4);
    }

    #[test]
    fn node_at_reports_parent_and_child_position() {
        let tree = t("a(b(c,d),e)");
        let info = tree.node_at(2).unwrap();
        assert_eq!(info.label.as_str(), "b");
        assert_eq!(info.parent, Some(1));
        assert_eq!(info.child_position, Some(1));

        let info = tree.node_at(5).unwrap();
        assert_eq!(info.label.as_str(), "e");
        assert_eq!(info.parent, Some(1));
        assert_eq!(info.child_position, Some(2));

        let leaf = t("a");
        let root = leaf.node_at(1).unwrap();
        assert_eq!(root.label.as_str(), "a");
        assert_eq!(root.parent, None);
        assert_eq!(root.child_position, None);
    }

    #[test]
    fn node_at_rejects_out_of_range() {
        let tree = t("a(b)");
        assert!(tree.node_at(0).is_err());
        assert!(tree.node_at(3).is_err());
    }

    #[test]
    fn preorder_visits_parents_before_children() {
        let tree = t("f(g(a,b,c),h(d),e)");
        for (i, _) in tree.preorder() {
            let info = tree.node_at(i).unwrap();
            if let Some(p) = info.parent {
                assert!(p < i, "parent {p} must precede child {i}");
            }
        }
    }

    #[test]
    fn labels_validate_token_charset() {
        assert!(Label::new("if_stmt2").is_ok());
        assert!(Label::new("").is_err());
        assert!(Label::new("a b").is_err());
        assert!(Label::new("a-b").is_err());
    }

    #[test]
    fn serde_uses_textual_form() {
        let tree = t("a(b(c,d),e)");
        let json = serde_json::to_string(&tree).unwrap();
        assert_eq!(json, "\"a(b(c,d),e)\"");
        let back: Tree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tree);
    }
}
