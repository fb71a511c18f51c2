//! Plain-text scene format, one box per line:
//!
//! ```text
//! # kind class_id instance_id x0 y0 x1 y1
//! G 0 0 10 10 30 30
//! P 0 0 11 9 31 29
//! ```
//!
//! `G` marks ground truth, `P` a proposal. `#` starts a comment.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LabeledBox;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneBoxes {
    pub proposals: Vec<LabeledBox>,
    pub ground_truth: Vec<LabeledBox>,
}

pub fn parse_scene(text: &str, origin: &Path) -> Result<SceneBoxes> {
    let bad = |line: usize, reason: String| Error::Ingestion {
        path: PathBuf::from(origin),
        reason: format!("line {line}: {reason}"),
    };
    let mut scene = SceneBoxes::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(bad(idx + 1, format!("expected 7 fields, found {}", fields.len())));
        }
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(idx + 1, format!("`{s}` is not a non-negative integer")))
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(idx + 1, format!("`{s}` is not a number")))
        };
        let b = LabeledBox::new(
            num(fields[3])?,
            num(fields[4])?,
            num(fields[5])?,
            num(fields[6])?,
            int(fields[1])?,
            int(fields[2])?,
        )
        .map_err(|e| bad(idx + 1, e.to_string()))?;
        match fields[0] {
            "P" | "p" => scene.proposals.push(b),
            "G" | "g" => scene.ground_truth.push(b),
            other => return Err(bad(idx + 1, format!("unknown kind `{other}`"))),
        }
    }
    Ok(scene)
}

pub fn read_scene_file(path: &Path) -> Result<SceneBoxes> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scene(&text, path)
}

pub fn write_scene(scene: &SceneBoxes) -> String {
    let mut out = String::from("# kind class_id instance_id x0 y0 x1 y1\n");
    let groups = [("G", &scene.ground_truth), ("P", &scene.proposals)];
    for (kind, boxes) in groups {
        for b in boxes {
            // `{}` on f64 prints the shortest round-tripping form.
            let _ = writeln!(
                out,
                "{kind} {} {} {} {} {} {}",
                b.class_id, b.instance_id, b.x0, b.y0, b.x1, b.y1
            );
        }
    }
    out
}

pub fn write_scene_file(path: &Path, scene: &SceneBoxes) -> Result<()> {
    std::fs::write(path, write_scene(scene)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let text = "# header\n\nG 1 0 0 0 2 2\nP 1 0 0.5 0 2 2  # near\n";
        let s = parse_scene(text, Path::new("mem")).unwrap();
        assert_eq!(s.ground_truth.len(), 1);
        assert_eq!(s.proposals.len(), 1);
        assert_eq!(s.proposals[0].x0, 0.5);
        assert_eq!(s.ground_truth[0].class_id, 1);
    }

    #[test]
    fn malformed_lines_name_the_source() {
        for text in ["G 1 0 0 0 2", "X 1 0 0 0 2 2", "G a 0 0 0 2 2", "G 1 0 2 0 1 2"] {
            let err = parse_scene(text, Path::new("scene7.txt")).unwrap_err();
            assert!(err.to_string().contains("scene7.txt"), "{err}");
            assert!(matches!(err, Error::Ingestion { .. }));
        }
    }

    #[test]
    fn round_trip() {
        let scene = SceneBoxes {
            proposals: vec![LabeledBox::new(0.1, 0.2, 3.3, 4.4, 2, 7).unwrap()],
            ground_truth: vec![LabeledBox::new(1.0 / 3.0, 0.0, 1.0, 1.0, 0, 1).unwrap()],
        };
        let back = parse_scene(&write_scene(&scene), Path::new("mem")).unwrap();
        assert_eq!(back, scene);
    }
}
