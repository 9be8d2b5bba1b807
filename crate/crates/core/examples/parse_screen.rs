//! Parse one accessibility dump and print the two text encodings a model
//! sees, with the index map that turns a model's index back into a
//! canonical element id.

use std::path::PathBuf;

use replaybench::screen::{encode_html, encode_list, parse_a11y};

pub fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/screens/login_form.xml");
    let tree = parse_a11y(&std::fs::read(&path).unwrap()).unwrap();

    let (html, html_ids) = encode_html(&tree);
    println!("HTML encoding:\n{html}\n");
    let (list, list_ids) = encode_list(&tree);
    println!("List encoding:\n{list}\n");

    println!("html index -> canonical id");
    for (i, id) in html_ids.iter() {
        println!("  {i:>2} -> {id}");
    }
    assert_eq!(list_ids.len(), list.lines().count());
}
