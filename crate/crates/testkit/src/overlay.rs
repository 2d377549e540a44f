//! Random layer stacks and a plain map model of the overlay rules.

use std::collections::BTreeMap;

use proptest::prelude::*;

use crate::{FixtureImage, LayerBuilder};

const DIRS: &[&str] = &["a", "a/b", "c"];
const NAMES: &[&str] = &["x", "y", "b"];

#[derive(Debug, Clone)]
pub enum Op {
    Add(String, u8),
    Whiteout(String),
    Opaque(String),
}

pub fn op() -> impl Strategy<Value = Op> {
    let path = (0..DIRS.len(), 0..NAMES.len()).prop_map(|(d, n)| format!("{}/{}", DIRS[d], NAMES[n]));
    prop_oneof![
        4 => (path.clone(), any::<u8>()).prop_map(|(p, c)| Op::Add(p, c)),
        2 => path.prop_map(Op::Whiteout),
        1 => (0..DIRS.len()).prop_map(|d| Op::Opaque(DIRS[d].to_string())),
    ]
}

/// 1 to 4 layers of 1 to 5 operations.
pub fn stack() -> impl Strategy<Value = Vec<Vec<Op>>> {
    proptest::collection::vec(proptest::collection::vec(op(), 1..6), 1..5)
}

pub fn under(path: &str, dir: &str) -> bool {
    path.len() > dir.len() + 1 && path.starts_with(dir) && path.as_bytes()[dir.len()] == b'/'
}

/// Regular files of the overlay: relative path -> content byte.
pub fn model(stack: &[Vec<Op>]) -> BTreeMap<String, u8> {
    let mut files: BTreeMap<String, u8> = BTreeMap::new();
    for layer in stack {
        for op in layer {
            match op {
                Op::Whiteout(p) => files.retain(|k, _| k != p && !under(k, p)),
                Op::Opaque(d) => files.retain(|k, _| !under(k, d)),
                Op::Add(..) => {}
            }
        }
        for op in layer {
            if let Op::Add(p, c) = op {
                // A file replaces anything it shadows, including a directory.
                files.retain(|k, _| !under(k, p));
                // Adding below a path that is currently a file turns it into a directory.
                let mut parent = p.as_str();
                while let Some((head, _)) = parent.rsplit_once('/') {
                    files.remove(head);
                    parent = head;
                }
                files.insert(p.clone(), *c);
            }
        }
    }
    files
}

pub fn build(stack: &[Vec<Op>]) -> FixtureImage {
    let layers: Vec<LayerBuilder> = stack
        .iter()
        .map(|ops| {
            ops.iter().fold(LayerBuilder::new(), |b, op| match op {
                Op::Add(p, c) => b.file(p, vec![*c]),
                Op::Whiteout(p) => b.whiteout(p),
                Op::Opaque(d) => b.opaque(d),
            })
        })
        .collect();
    FixtureImage::from_layers(&layers)
}

/// Whited-out paths (absolute) that no layer at or above re-adds.
pub fn expected_absent(stack: &[Vec<Op>]) -> Vec<String> {
    let mut out = Vec::new();
    for (i, layer) in stack.iter().enumerate() {
        for op in layer {
            if let Op::Whiteout(p) = op {
                let readded = stack[i..]
                    .iter()
                    .flatten()
                    .any(|o| matches!(o, Op::Add(q, _) if q == p || under(q, p)));
                if !readded {
                    out.push(format!("/{p}"));
                }
            }
        }
    }
    out
}
