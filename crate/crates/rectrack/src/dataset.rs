//! Sequence directories: numbered P6 frames plus `annotations.txt` with one
//! `frame_index x1 y1 x2 y2 occluded` line per frame (the last column is
//! optional on import).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};
use rectrack_core::synthgen::{SequenceSource, SyntheticSequence};
use rectrack_core::{BoundingBox, Image};

use crate::error::{Error, Result};
use crate::ppm;

pub const ANNOTATIONS: &str = "annotations.txt";

/// A loaded sequence; `occluded` is `None` when the annotations carry no
/// occlusion column.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<Image>,
    pub truth: Vec<BoundingBox>,
    pub occluded: Option<Vec<bool>>,
}

pub fn frame_file_name(index: usize) -> String {
    format!("{index:05}.ppm")
}

pub fn annotations_text(truth: &[BoundingBox], occluded: Option<&[bool]>) -> String {
    let mut s = String::new();
    for (i, b) in truth.iter().enumerate() {
        let _ = write!(s, "{i} {} {} {} {}", b.x1, b.y1, b.x2, b.y2);
        if let Some(o) = occluded {
            let _ = write!(s, " {}", u8::from(o[i]));
        }
        s.push('\n');
    }
    s
}

/// Parses annotation lines; blank lines are ignored. Indices must run
/// 0, 1, 2, ... and the occlusion column must be present on all lines or none.
pub fn parse_annotations(text: &str) -> Result<(Vec<BoundingBox>, Option<Vec<bool>>)> {
    let mut truth = Vec::new();
    let mut flags = Vec::new();
    let mut with_flags: Option<bool> = None;
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("annotations line {}: {what}", lineno + 1));
        if fields.len() != 5 && fields.len() != 6 {
            return Err(bad("expected `frame_index x1 y1 x2 y2 [occluded]`"));
        }
        let has = fields.len() == 6;
        if *with_flags.get_or_insert(has) != has {
            return Err(bad("occlusion column present on some lines only"));
        }
        let index: usize = fields[0].parse().map_err(|_| bad("bad frame index"))?;
        if index != truth.len() {
            return Err(bad(&format!("frame index {index}, expected {}", truth.len())));
        }
        let c: Vec<f64> = fields[1..5]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad(&format!("bad coordinate {f:?}"))))
            .collect::<Result<_>>()?;
        let b = BoundingBox::new(c[0], c[1], c[2], c[3]).map_err(|e| bad(&e.to_string()))?;
        truth.push(b);
        if has {
            flags.push(match fields[5] {
                "0" => false,
                "1" => true,
                other => return Err(bad(&format!("occluded flag must be 0 or 1, got {other:?}"))),
            });
        }
    }
    Ok((truth, with_flags.unwrap_or(false).then_some(flags)))
}

pub fn write_sequence(dir: &Path, frames: &[Image], truth: &[BoundingBox], occluded: Option<&[bool]>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        ppm::write(&dir.join(frame_file_name(i)), f)?;
    }
    let path = dir.join(ANNOTATIONS);
    std::fs::write(&path, annotations_text(truth, occluded)).map_err(|e| Error::io(&path, e))
}

/// Every `*.ppm` file in `dir`, sorted by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "ppm") {
            paths.push(p);
        }
    }
    paths.sort();
    Ok(paths)
}

pub fn read_frames(dir: &Path) -> Result<Vec<Image>> {
    list_frames(dir)?.iter().map(|p| ppm::read(p)).collect()
}

pub fn read_sequence(dir: &Path) -> Result<Sequence> {
    let path = dir.join(ANNOTATIONS);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let (truth, occluded) = parse_annotations(&text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let frames = read_frames(dir)?;
    if frames.len() != truth.len() {
        return Err(Error::Format(format!(
            "{}: {} frames but {} annotation lines",
            dir.display(),
            frames.len(),
            truth.len()
        )));
    }
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Sequence { name, frames, truth, occluded })
}

/// Loads every subdirectory holding an annotations file, sorted by name.
pub fn read_dataset(root: &Path) -> Result<Vec<Sequence>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(root, e))?.path();
        if p.join(ANNOTATIONS).is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    dirs.iter().map(|d| read_sequence(d)).collect()
}

/// Samples random windows of stored sequences for training.
#[derive(Debug, Clone)]
pub struct DirectorySource {
    sequences: Vec<Sequence>,
}

impl DirectorySource {
    pub fn new(sequences: Vec<Sequence>) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::Usage("training data directory holds no sequences".into()));
        }
        Ok(Self { sequences })
    }
}

impl SequenceSource for DirectorySource {
    fn sample(&mut self, length: usize, rng: &mut dyn RngCore) -> rectrack_core::Result<SyntheticSequence> {
        let usable: Vec<&Sequence> = self.sequences.iter().filter(|s| s.frames.len() >= length).collect();
        if usable.is_empty() {
            return Err(rectrack_core::Error::Usage(format!("no stored sequence has {length} frames")));
        }
        let seq = usable[rng.random_range(0..usable.len())];
        let start = rng.random_range(0..=seq.frames.len() - length);
        let range = start..start + length;
        Ok(SyntheticSequence {
            frames: seq.frames[range.clone()].to_vec(),
            truth: seq.truth[range.clone()].to_vec(),
            occluded: seq.occluded.as_ref().map(|o| o[range.clone()].to_vec()).unwrap_or_else(|| vec![false; length]),
            seed: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotation_round_trip() {
        let truth =
            vec![BoundingBox::new(0.1, 0.2, 10.3, 20.4).unwrap(), BoundingBox::new(1.0, 2.0, 3.0, 4.0).unwrap()];
        let text = annotations_text(&truth, Some(&[false, true]));
        assert_eq!(text.lines().nth(1), Some("1 1 2 3 4 1"));
        let (t, o) = parse_annotations(&text).unwrap();
        assert_eq!(t, truth);
        assert_eq!(o, Some(vec![false, true]));
        let (_, o) = parse_annotations(&annotations_text(&truth, None)).unwrap();
        assert_eq!(o, None);
    }

    #[test]
    fn annotation_errors() {
        assert!(parse_annotations("0 0 0 1 1 0\n1 0 0 1 1\n").is_err());
        assert!(parse_annotations("1 0 0 1 1\n").is_err());
        assert!(parse_annotations("0 5 0 1 1\n").is_err());
        assert!(parse_annotations("0 0 0 1 1 2\n").is_err());
        assert!(parse_annotations("0 0 0 1\n").is_err());
    }
}
