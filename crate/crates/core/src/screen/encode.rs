use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::tree::{Rect, UiNode, UiTree};
use crate::dataset::ElementId;

/// Presentation index ↔ canonical id. Injective in both directions; the text
/// encoders produce contiguous indexes from 0, annotated images may skip
/// regions that match no element.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexMap {
    entries: Vec<(usize, ElementId)>,
    by_id: HashMap<ElementId, usize>,
}

impl IndexMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a contiguous map `0..ids.len()`.
    pub fn from_ids(ids: impl IntoIterator<Item = ElementId>) -> Self {
        let mut map = Self::new();
        for (i, id) in ids.into_iter().enumerate() {
            map.insert(i, id);
        }
        map
    }

    /// Adds an entry; returns false (and leaves the map unchanged) when either
    /// side is already mapped.
    pub fn insert(&mut self, index: usize, id: ElementId) -> bool {
        if self.by_id.contains_key(&id) || self.canonical(index).is_some() {
            return false;
        }
        let pos = self.entries.partition_point(|(i, _)| *i < index);
        self.entries.insert(pos, (index, id.clone()));
        self.by_id.insert(id, index);
        true
    }

    pub fn canonical(&self, index: usize) -> Option<&ElementId> {
        self.entries
            .binary_search_by_key(&index, |(i, _)| *i)
            .ok()
            .map(|pos| &self.entries[pos].1)
    }

    pub fn presentation(&self, id: &ElementId) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &ElementId)> {
        self.entries.iter().map(|(i, id)| (*i, id))
    }

    /// One past the largest index; bounds-check hint for error messages.
    pub fn index_limit(&self) -> usize {
        self.entries.last().map_or(0, |(i, _)| i + 1)
    }
}

impl Serialize for IndexMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.entries.iter())
    }
}

impl<'de> Deserialize<'de> for IndexMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let entries = Vec::<(usize, ElementId)>::deserialize(deserializer)?;
        let mut map = IndexMap::new();
        for (i, id) in entries {
            if !map.insert(i, id) {
                return Err(serde::de::Error::custom("index map is not injective"));
            }
        }
        Ok(map)
    }
}

/// One listed element, detached from the tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListedElement {
    pub index: usize,
    pub canonical_id: ElementId,
    pub class_name: String,
    pub text: Option<String>,
    pub content_desc: Option<String>,
    pub bounds: Rect,
    pub clickable: bool,
    pub editable: bool,
    pub scrollable: bool,
}

impl ListedElement {
    fn from_node(index: usize, node: &UiNode) -> Self {
        Self {
            index,
            canonical_id: node.canonical_id.clone(),
            class_name: node.class_name.clone(),
            text: node.text.clone(),
            content_desc: node.content_desc.clone(),
            bounds: node.bounds,
            clickable: node.clickable,
            editable: node.editable,
            scrollable: node.scrollable,
        }
    }

    pub fn short_class(&self) -> &str {
        super::tree::short_class(&self.class_name)
    }

    /// Human-facing label: text, else description, else class.
    pub fn label(&self) -> &str {
        self.text
            .as_deref()
            .filter(|s| !s.trim().is_empty())
            .or(self.content_desc.as_deref().filter(|s| !s.trim().is_empty()))
            .unwrap_or_else(|| self.short_class())
    }
}

/// The enumerated, list-filtered element set of one screen.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiElementList {
    pub elements: Vec<ListedElement>,
    pub index_map: IndexMap,
}

impl UiElementList {
    pub fn from_tree(tree: &UiTree) -> Self {
        let elements: Vec<ListedElement> = tree
            .listed()
            .enumerate()
            .map(|(i, n)| ListedElement::from_node(i, n))
            .collect();
        let index_map = IndexMap::from_ids(elements.iter().map(|e| e.canonical_id.clone()));
        Self { elements, index_map }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

fn quote_list(s: &str) -> String {
    s.replace('\\', "\\\\")
        .replace('"', "\\\"")
        .replace(['\n', '\r'], " ")
}

/// Flat enumerated list, one element per line:
/// `N. ShortClass text="..." desc="..." [clickable,editable,scrollable]`.
/// Empty attributes and an empty flag set are omitted.
pub fn encode_list(tree: &UiTree) -> (String, IndexMap) {
    let list = UiElementList::from_tree(tree);
    let text = render_list(&list);
    (text, list.index_map)
}

pub fn render_list(list: &UiElementList) -> String {
    let mut lines = Vec::with_capacity(list.elements.len());
    for e in &list.elements {
        let mut line = format!("{}. {}", e.index, e.short_class());
        if let Some(text) = e.text.as_deref().filter(|s| !s.is_empty()) {
            line.push_str(&format!(" text=\"{}\"", quote_list(text)));
        }
        if let Some(desc) = e.content_desc.as_deref().filter(|s| !s.is_empty()) {
            line.push_str(&format!(" desc=\"{}\"", quote_list(desc)));
        }
        let flags: Vec<&str> = [
            (e.clickable, "clickable"),
            (e.editable, "editable"),
            (e.scrollable, "scrollable"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect();
        if !flags.is_empty() {
            line.push_str(&format!(" [{}]", flags.join(",")));
        }
        lines.push(line);
    }
    lines.join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Div,
    Button,
    Paragraph,
    Image,
    TextInput,
    Toggle(&'static str),
}

/// Fixed class → tag table. Checked in this order: editable fields, toggles,
/// buttons, text views, image views; anything else is a layout `div`.
fn tag_for(node: &UiNode) -> Tag {
    let short = node.short_class();
    if node.editable {
        return Tag::TextInput;
    }
    match short {
        "CheckBox" | "CheckedTextView" | "MaterialCheckBox" | "AppCompatCheckBox" => {
            return Tag::Toggle("checkbox")
        }
        "Switch" | "SwitchCompat" | "SwitchMaterial" | "ToggleButton" => return Tag::Toggle("switch"),
        "RadioButton" | "AppCompatRadioButton" | "MaterialRadioButton" => return Tag::Toggle("radio"),
        _ => {}
    }
    if short.ends_with("Button") {
        Tag::Button
    } else if short.ends_with("TextView") {
        Tag::Paragraph
    } else if short.ends_with("ImageView") {
        Tag::Image
    } else {
        Tag::Div
    }
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\n' | '\r' => out.push(' '),
            _ => out.push(c),
        }
    }
    out
}

/// HTML-like rendering that preserves nesting. Interactable elements carry
/// `id="N"`; a node is emitted when it survives the list filter or has an
/// emitted descendant.
pub fn encode_html(tree: &UiTree) -> (String, IndexMap) {
    let mut out = String::new();
    let mut ids = Vec::new();
    for root in &tree.roots {
        render_html(root, &mut out, &mut ids);
    }
    (out, IndexMap::from_ids(ids))
}

fn emits(node: &UiNode) -> bool {
    node.is_listed() || node.children.iter().any(emits)
}

fn render_html(node: &UiNode, out: &mut String, ids: &mut Vec<ElementId>) {
    if !emits(node) {
        return;
    }
    let tag = tag_for(node);
    let name = match tag {
        Tag::Div => "div",
        Tag::Button => "button",
        Tag::Paragraph => "p",
        Tag::Image => "img",
        Tag::TextInput | Tag::Toggle(_) => "input",
    };
    out.push('<');
    out.push_str(name);
    if node.is_interactable() {
        out.push_str(&format!(" id=\"{}\"", ids.len()));
        ids.push(node.canonical_id.clone());
    }
    let text = node.text.as_deref().unwrap_or("");
    let desc = node.content_desc.as_deref().unwrap_or("");
    match tag {
        Tag::TextInput => {
            out.push_str(&format!(" type=\"text\" value=\"{}\"", escape_html(text)));
        }
        Tag::Toggle(kind) => {
            out.push_str(&format!(" type=\"{kind}\""));
            if node.checked {
                out.push_str(" checked");
            }
            if !text.is_empty() {
                out.push_str(&format!(" label=\"{}\"", escape_html(text)));
            }
        }
        _ => {}
    }
    if !desc.is_empty() {
        let attr = if tag == Tag::Image { "alt" } else { "description" };
        out.push_str(&format!(" {attr}=\"{}\"", escape_html(desc)));
    }
    out.push('>');
    if matches!(tag, Tag::Image | Tag::TextInput | Tag::Toggle(_)) {
        // void elements; their children (rare) follow as siblings
        for child in &node.children {
            render_html(child, out, ids);
        }
        return;
    }
    out.push_str(&escape_html(text));
    for child in &node.children {
        render_html(child, out, ids);
    }
    out.push_str(&format!("</{name}>"));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::screen::parse_a11y;

    fn tree(xml: &str) -> UiTree {
        parse_a11y(xml.as_bytes()).unwrap()
    }

    #[test]
    fn single_button_html_and_list() {
        let t = tree(r#"<hierarchy><node class="android.widget.Button" text="OK" clickable="true" bounds="[0,0][100,50]"/></hierarchy>"#);
        let (html, map) = encode_html(&t);
        assert_eq!(html, r#"<button id="0">OK</button>"#);
        assert_eq!(map.len(), 1);
        let (list, map) = encode_list(&t);
        assert_eq!(list, r#"0. Button text="OK" [clickable]"#);
        assert_eq!(map.canonical(0), Some(&t.roots[0].canonical_id));
    }

    #[test]
    fn group_of_text_views() {
        let t = tree(
            r#"<hierarchy><node class="android.view.ViewGroup" bounds="[0,0][100,100]">
                <node class="android.widget.TextView" text="a" bounds="[0,0][100,50]"/>
                <node class="android.widget.TextView" text="b" bounds="[0,50][100,100]"/>
            </node></hierarchy>"#,
        );
        let (html, map) = encode_html(&t);
        assert_eq!(html, "<div><p>a</p><p>b</p></div>");
        assert!(map.is_empty());
    }

    #[test]
    fn pure_layout_is_filtered() {
        let t = tree(
            r#"<hierarchy><node class="android.view.ViewGroup" bounds="[0,0][100,100]">
                <node class="android.widget.FrameLayout" bounds="[0,0][100,50]"/>
            </node></hierarchy>"#,
        );
        let (list, map) = encode_list(&t);
        assert_eq!(list, "");
        assert!(map.is_empty());
        assert_eq!(encode_html(&t).0, "");
    }

    #[test]
    fn empty_tree() {
        let t = UiTree::default();
        assert_eq!(encode_html(&t).0, "");
        assert_eq!(encode_list(&t).0, "");
    }

    #[test]
    fn quoting() {
        let t = tree(r#"<hierarchy><node class="x.TextView" text="say &quot;hi&quot; &lt;now&gt;" bounds="[0,0][1,1]"/></hierarchy>"#);
        assert_eq!(encode_list(&t).0, r#"0. TextView text="say \"hi\" <now>""#);
        assert_eq!(encode_html(&t).0, "<p>say &quot;hi&quot; &lt;now&gt;</p>");
    }

    #[test]
    fn index_map_rejects_collisions() {
        let mut map = IndexMap::new();
        assert!(map.insert(2, ElementId::new("a")));
        assert!(!map.insert(2, ElementId::new("b")));
        assert!(!map.insert(3, ElementId::new("a")));
        assert!(map.insert(0, ElementId::new("c")));
        assert_eq!(map.iter().map(|(i, _)| i).collect::<Vec<_>>(), [0, 2]);
        assert_eq!(map.index_limit(), 3);
        let json = serde_json::to_string(&map).unwrap();
        let back: IndexMap = serde_json::from_str(&json).unwrap();
        assert_eq!(back, map);
        assert!(serde_json::from_str::<IndexMap>(r#"[[0,"a"],[1,"a"]]"#).is_err());
    }
}
