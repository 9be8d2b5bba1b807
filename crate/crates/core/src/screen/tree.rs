use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::ElementId;

/// Integer screen rectangle, `right`/`bottom` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl Rect {
    pub const fn new(left: i32, top: i32, right: i32, bottom: i32) -> Self {
        Self {
            left,
            top,
            right,
            bottom,
        }
    }

    pub fn width(&self) -> i32 {
        self.right - self.left
    }

    pub fn height(&self) -> i32 {
        self.bottom - self.top
    }

    pub fn area(&self) -> i64 {
        i64::from(self.width().max(0)) * i64::from(self.height().max(0))
    }

    pub fn center(&self) -> (i32, i32) {
        ((self.left + self.right) / 2, (self.top + self.bottom) / 2)
    }

    pub fn scaled(&self, factor: f64) -> Rect {
        let s = |v: i32| (f64::from(v) * factor).round() as i32;
        Rect::new(s(self.left), s(self.top), s(self.right), s(self.bottom))
    }

    pub fn intersection_over_union(&self, other: &Rect) -> f64 {
        let inter = Rect::new(
            self.left.max(other.left),
            self.top.max(other.top),
            self.right.min(other.right),
            self.bottom.min(other.bottom),
        );
        if inter.width() <= 0 || inter.height() <= 0 {
            return 0.0;
        }
        let i = inter.area() as f64;
        i / (self.area() as f64 + other.area() as f64 - i)
    }

    /// uiautomator form `[l,t][r,b]`.
    pub fn parse_bounds(raw: &str) -> Option<Rect> {
        let nums: Vec<i32> = raw
            .split(['[', ']', ','])
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse().ok())
            .collect::<Option<_>>()?;
        match nums.as_slice() {
            [l, t, r, b] => Some(Rect::new(*l, *t, *r, *b)),
            _ => None,
        }
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{},{}]", self.left, self.top, self.right, self.bottom)
    }
}

/// One accessibility node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiNode {
    pub canonical_id: ElementId,
    pub class_name: String,
    pub resource_id: Option<String>,
    pub text: Option<String>,
    pub content_desc: Option<String>,
    pub bounds: Rect,
    pub clickable: bool,
    pub editable: bool,
    pub scrollable: bool,
    pub enabled: bool,
    pub checked: bool,
    pub children: Vec<UiNode>,
}

impl UiNode {
    /// `android.widget.Button` → `Button`.
    pub fn short_class(&self) -> &str {
        short_class(&self.class_name)
    }

    pub fn is_interactable(&self) -> bool {
        self.clickable || self.editable || self.scrollable
    }

    pub fn has_label(&self) -> bool {
        let non_empty = |s: &Option<String>| s.as_deref().is_some_and(|s| !s.trim().is_empty());
        non_empty(&self.text) || non_empty(&self.content_desc)
    }

    /// The list filter: interactable elements plus labelled leaves.
    pub fn is_listed(&self) -> bool {
        self.is_interactable() || (self.children.is_empty() && self.has_label())
    }
}

pub(crate) fn short_class(class_name: &str) -> &str {
    class_name.rsplit('.').next().unwrap_or(class_name)
}

/// A parsed accessibility dump. Real dumps have one root under
/// `<hierarchy>`, but nothing here depends on that.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiTree {
    pub roots: Vec<UiNode>,
}

impl UiTree {
    /// Pre-order (document order) traversal.
    pub fn nodes(&self) -> impl Iterator<Item = &UiNode> {
        let mut stack: Vec<&UiNode> = self.roots.iter().rev().collect();
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            stack.extend(node.children.iter().rev());
            Some(node)
        })
    }

    pub fn listed(&self) -> impl Iterator<Item = &UiNode> {
        self.nodes().filter(|n| n.is_listed())
    }

    /// Elements surviving the list filter (the per-screen UI count).
    pub fn listed_count(&self) -> usize {
        self.listed().count()
    }

    pub fn find(&self, id: &ElementId) -> Option<&UiNode> {
        self.nodes().find(|n| &n.canonical_id == id)
    }

    pub fn depth(&self) -> usize {
        fn depth(n: &UiNode) -> usize {
            1 + n.children.iter().map(depth).max().unwrap_or(0)
        }
        self.roots.iter().map(depth).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum A11yError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("node {path} has no bounds")]
    MissingBounds { path: String },
    #[error("node {path} has unparseable bounds {raw:?}")]
    BadBounds { path: String, raw: String },
    #[error("node {path} has negative extent {bounds}")]
    NegativeExtent { path: String, bounds: Rect },
}

/// Parses a uiautomator dump into a [`UiTree`] with canonical ids assigned.
pub fn parse_a11y(xml: &[u8]) -> Result<UiTree, A11yError> {
    let text = std::str::from_utf8(xml).map_err(|e| A11yError::Xml(e.to_string()))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| A11yError::Xml(e.to_string()))?;
    let root = doc.root_element();
    let root_name = root.tag_name().name();
    let mut roots = Vec::new();
    if root_name == "node" {
        roots.push(convert(root, &format!("/{root_name}"))?);
    } else {
        for (i, child) in root.children().filter(|c| c.has_tag_name("node")).enumerate() {
            roots.push(convert(child, &format!("/{root_name}/node[{i}]"))?);
        }
    }
    let mut tree = UiTree { roots };
    assign_canonical_ids(&mut tree);
    Ok(tree)
}

fn convert(node: roxmltree::Node<'_, '_>, path: &str) -> Result<UiNode, A11yError> {
    let attr = |name: &str| node.attribute(name).map(str::to_owned);
    let flag = |name: &str| node.attribute(name) == Some("true");
    let raw_bounds = node.attribute("bounds").ok_or_else(|| A11yError::MissingBounds {
        path: path.to_owned(),
    })?;
    let bounds = Rect::parse_bounds(raw_bounds).ok_or_else(|| A11yError::BadBounds {
        path: path.to_owned(),
        raw: raw_bounds.to_owned(),
    })?;
    if bounds.width() < 0 || bounds.height() < 0 {
        return Err(A11yError::NegativeExtent {
            path: path.to_owned(),
            bounds,
        });
    }
    let class_name = attr("class").unwrap_or_default();
    let editable = match node.attribute("editable") {
        Some(v) => v == "true",
        None => {
            let short = short_class(&class_name);
            short.contains("EditText") || short == "AutoCompleteTextView"
        }
    };
    let non_empty = |v: Option<String>| v.filter(|s| !s.is_empty());
    let children = node
        .children()
        .filter(|c| c.has_tag_name("node"))
        .enumerate()
        .map(|(i, c)| convert(c, &format!("{path}/node[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(UiNode {
        canonical_id: ElementId(String::new()),
        resource_id: non_empty(attr("resource-id")),
        text: non_empty(attr("text")),
        content_desc: non_empty(attr("content-desc")),
        bounds,
        clickable: flag("clickable"),
        editable,
        scrollable: flag("scrollable"),
        enabled: node.attribute("enabled") != Some("false"),
        checked: flag("checked"),
        class_name,
        children,
    })
}

/// Resource id when present, else `ShortClass@<8 hex of sha256("l,t,r,b")>`;
/// repeated bases get `#2`, `#3`, ... in document order.
fn assign_canonical_ids(tree: &mut UiTree) {
    fn visit(node: &mut UiNode, seen: &mut HashMap<String, usize>) {
        let base = match &node.resource_id {
            Some(rid) => rid.clone(),
            None => {
                let b = node.bounds;
                let digest = Sha256::digest(format!("{},{},{},{}", b.left, b.top, b.right, b.bottom));
                format!("{}@{}", short_class(&node.class_name), &hex::encode(digest)[..8])
            }
        };
        let k = seen.entry(base.clone()).or_insert(0);
        *k += 1;
        node.canonical_id = if *k == 1 {
            ElementId(base)
        } else {
            ElementId(format!("{base}#{k}"))
        };
        for child in &mut node.children {
            visit(child, seen);
        }
    }
    let mut seen = HashMap::new();
    for root in &mut tree.roots {
        visit(root, &mut seen);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_button() {
        let xml = br#"<hierarchy rotation="0"><node class="android.widget.Button" text="OK" clickable="true" bounds="[0,0][100,50]"/></hierarchy>"#;
        let tree = parse_a11y(xml).unwrap();
        assert_eq!(tree.depth(), 1);
        assert_eq!(tree.nodes().count(), 1);
        let n = &tree.roots[0];
        assert!(n.clickable);
        assert_eq!(n.text.as_deref(), Some("OK"));
        assert_eq!(n.short_class(), "Button");
    }

    #[test]
    fn empty_root() {
        let tree = parse_a11y(br#"<hierarchy rotation="0"/>"#).unwrap();
        assert_eq!(tree.nodes().count(), 0);
        assert_eq!(tree.listed_count(), 0);
    }

    #[test]
    fn missing_bounds_names_the_path() {
        let xml = br#"<hierarchy><node class="a" bounds="[0,0][1,1]"><node class="b"/></node></hierarchy>"#;
        assert_eq!(
            parse_a11y(xml),
            Err(A11yError::MissingBounds {
                path: "/hierarchy/node[0]/node[0]".into()
            })
        );
    }

    #[test]
    fn malformed_xml() {
        assert!(matches!(parse_a11y(b"<hierarchy><node"), Err(A11yError::Xml(_))));
    }

    #[test]
    fn negative_extent_rejected() {
        let xml = br#"<hierarchy><node class="a" bounds="[10,10][5,20]"/></hierarchy>"#;
        assert!(matches!(parse_a11y(xml), Err(A11yError::NegativeExtent { .. })));
    }

    #[test]
    fn duplicate_resource_ids_are_suffixed() {
        let xml = br#"<hierarchy>
            <node class="x.LinearLayout" resource-id="app:id/row" bounds="[0,0][10,10]"/>
            <node class="x.LinearLayout" resource-id="app:id/row" bounds="[0,10][10,20]"/>
            <node class="x.LinearLayout" resource-id="app:id/row" bounds="[0,20][10,30]"/>
        </hierarchy>"#;
        let tree = parse_a11y(xml).unwrap();
        let ids: Vec<_> = tree.nodes().map(|n| n.canonical_id.0.clone()).collect();
        assert_eq!(ids, ["app:id/row", "app:id/row#2", "app:id/row#3"]);
    }

    #[test]
    fn bounds_digest_id() {
        let xml = br#"<hierarchy><node class="android.view.View" bounds="[0,1120][720,1124]"/></hierarchy>"#;
        let tree = parse_a11y(xml).unwrap();
        let expected = &hex::encode(Sha256::digest("0,1120,720,1124"))[..8];
        assert_eq!(tree.roots[0].canonical_id.0, format!("View@{expected}"));
    }

    #[test]
    fn editable_inferred_from_class() {
        let xml = br#"<hierarchy><node class="android.widget.EditText" bounds="[0,0][1,1]"/><node class="x.Custom" editable="true" bounds="[0,0][1,1]"/></hierarchy>"#;
        let tree = parse_a11y(xml).unwrap();
        assert!(tree.nodes().all(|n| n.editable));
    }

    #[test]
    fn parse_is_deterministic() {
        let xml = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/screens/notes_home.xml")).unwrap();
        assert_eq!(parse_a11y(&xml).unwrap(), parse_a11y(&xml).unwrap());
    }

    #[test]
    fn iou() {
        let a = Rect::new(0, 0, 10, 10);
        assert_eq!(a.intersection_over_union(&a), 1.0);
        assert_eq!(a.intersection_over_union(&Rect::new(10, 10, 20, 20)), 0.0);
        assert!((a.intersection_over_union(&Rect::new(5, 0, 15, 10)) - 1.0 / 3.0).abs() < 1e-12);
    }
}
