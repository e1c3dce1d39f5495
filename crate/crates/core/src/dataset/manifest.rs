use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{list_frame_files, DatasetError, Label, Split, VideoEntry};

const FIELDS: [&str; 6] = ["id", "frame_dir", "label", "source_tag", "frame_count", "split"];
const SEED_KEY: &str = "seed:";

/// A validated list of videos. `split` is set when every entry belongs to the
/// same split (e.g. after [`Manifest::select`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    entries: Vec<VideoEntry>,
    split: Option<Split>,
    seed: u64,
}

impl Manifest {
    /// Builds a manifest, enforcing id uniqueness and split disjointness.
    pub fn new(entries: Vec<VideoEntry>, seed: u64) -> Result<Self, DatasetError> {
        let mut seen: HashMap<&str, Split> = HashMap::new();
        for e in &entries {
            if let Some(&first) = seen.get(e.id.as_str()) {
                return Err(if first == e.split {
                    DatasetError::DuplicateId(e.id.clone())
                } else {
                    DatasetError::SplitLeak {
                        id: e.id.clone(),
                        first,
                        second: e.split,
                    }
                });
            }
            seen.insert(&e.id, e.split);
        }
        let split = match entries.first() {
            Some(first) if entries.iter().all(|e| e.split == first.split) => Some(first.split),
            _ => None,
        };
        Ok(Self {
            entries,
            split,
            seed,
        })
    }

    pub fn entries(&self) -> &[VideoEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split(&self) -> Option<Split> {
        self.split
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Entries of one split, in manifest order.
    pub fn select(&self, split: Split) -> Manifest {
        Manifest {
            entries: self
                .entries
                .iter()
                .filter(|e| e.split == split)
                .cloned()
                .collect(),
            split: Some(split),
            seed: self.seed,
        }
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }
}

/// Checks that no id occurs in more than one of `manifests`.
pub fn check_disjoint(manifests: &[&Manifest]) -> Result<(), DatasetError> {
    let all: Vec<VideoEntry> = manifests
        .iter()
        .flat_map(|m| m.entries().iter().cloned())
        .collect();
    Manifest::new(all, 0).map(|_| ())
}

/// Parses manifest text. Relative frame directories are resolved against
/// `base_dir`; nothing on disk is touched.
pub fn parse_manifest(text: &str, base_dir: &Path, origin: &Path) -> Result<Manifest, DatasetError> {
    let mut entries = Vec::new();
    let mut seed = 0u64;
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.trim_start().strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix(SEED_KEY) {
                seed = value.trim().parse().map_err(|_| DatasetError::Parse {
                    path: origin.to_path_buf(),
                    line: line_no,
                    column: 1,
                    message: format!("bad seed `{}`", value.trim()),
                })?;
            }
            continue;
        }
        entries.push(parse_record(trimmed, line_no, base_dir, origin)?);
    }
    Manifest::new(entries, seed)
}

fn parse_record(
    line: &str,
    line_no: usize,
    base_dir: &Path,
    origin: &Path,
) -> Result<VideoEntry, DatasetError> {
    // (byte column, text) for each tab-separated field
    let mut fields = Vec::with_capacity(FIELDS.len());
    let mut col = 0;
    for part in line.split('\t') {
        fields.push((col + 1, part));
        col += part.len() + 1;
    }
    let err = |column: usize, message: String| DatasetError::Parse {
        path: origin.to_path_buf(),
        line: line_no,
        column,
        message,
    };
    if fields.len() != FIELDS.len() {
        return Err(err(
            1,
            format!(
                "expected {} tab-separated fields ({}), found {}",
                FIELDS.len(),
                FIELDS.join(", "),
                fields.len()
            ),
        ));
    }
    for (i, (c, text)) in fields.iter().enumerate() {
        if text.trim().is_empty() {
            return Err(err(*c, format!("empty `{}` field", FIELDS[i])));
        }
    }
    let (id_col, id) = fields[0];
    if id.contains(['/', '\\']) {
        return Err(err(id_col, format!("id `{id}` must not contain path separators")));
    }
    let label = fields[2].1.parse::<Label>().map_err(|m| err(fields[2].0, m))?;
    let frame_count = fields[4]
        .1
        .trim()
        .parse::<usize>()
        .map_err(|_| err(fields[4].0, format!("bad frame_count `{}`", fields[4].1)))?;
    let split = fields[5].1.parse::<Split>().map_err(|m| err(fields[5].0, m))?;
    let raw_dir = PathBuf::from(fields[1].1);
    let frame_dir = if raw_dir.is_absolute() {
        raw_dir
    } else {
        base_dir.join(raw_dir)
    };
    Ok(VideoEntry {
        id: id.to_string(),
        frame_dir,
        label,
        source_tag: fields[3].1.to_string(),
        frame_count,
        split,
    })
}

/// Loads and fully validates a manifest file, including the on-disk frame
/// counts of every entry.
pub fn load_manifest(path: &Path) -> Result<Manifest, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DatasetError::MissingFile(path.to_path_buf()),
        _ => DatasetError::io(path, e),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let manifest = parse_manifest(&text, base, path)?;
    for e in manifest.entries() {
        let found = list_frame_files(&e.frame_dir)?.len();
        if found != e.frame_count {
            return Err(DatasetError::FrameCountMismatch {
                id: e.id.clone(),
                expected: e.frame_count,
                found,
            });
        }
    }
    Ok(manifest)
}

/// Writes `manifest` to `path`; frame directories under the manifest's own
/// directory are stored relative to it.
pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<(), DatasetError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = String::new();
    let _ = writeln!(out, "# {}", FIELDS.join("\t"));
    let _ = writeln!(out, "# {SEED_KEY} {}", manifest.seed());
    for e in manifest.entries() {
        let dir = e.frame_dir.strip_prefix(base).unwrap_or(&e.frame_dir);
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            e.id,
            dir.display(),
            e.label,
            e.source_tag,
            e.frame_count,
            e.split
        );
    }
    std::fs::write(path, out).map_err(|e| DatasetError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::write_png;
    use crate::image::RgbImage;

    fn parse(text: &str) -> Result<Manifest, DatasetError> {
        parse_manifest(text, Path::new("/corpus"), Path::new("m.tsv"))
    }

    #[test]
    fn two_entries() {
        let m = parse(
            "# comment\n# seed: 7\nv01\tframes/v01\treal\tcam\t5\ttrain\nv02\tframes/v02\tfake\tsora\t5\ttest\n",
        )
        .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.seed(), 7);
        assert_eq!(m.entries()[0].frame_dir, Path::new("/corpus/frames/v01"));
        assert_eq!(m.entries()[1].label, Label::Fake);
        assert_eq!(m.split(), None);
        assert_eq!(m.select(Split::Test).split(), Some(Split::Test));
        assert_eq!(m.select(Split::Test).len(), 1);
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = parse("v01\ta\treal\tx\t1\ttrain\nv01\tb\tfake\tx\t1\ttrain\n").unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateId(ref id) if id == "v01"));
    }

    #[test]
    fn split_leak_rejected() {
        let err = parse("v01\ta\treal\tx\t1\ttrain\nv01\ta\treal\tx\t1\ttest\n").unwrap_err();
        assert!(matches!(err, DatasetError::SplitLeak { .. }));
    }

    #[test]
    fn parse_error_reports_line_and_column() {
        let err = parse("# hdr\nv01\ta\treal\tx\tfive\ttrain\n").unwrap_err();
        match err {
            DatasetError::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                // "v01\ta\treal\tx\t" is 13 bytes
                assert_eq!(column, 14);
            }
            other => panic!("unexpected {other}"),
        }
        assert!(matches!(
            parse("v01\ta\treal\n").unwrap_err(),
            DatasetError::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn disjointness_across_files() {
        let a = parse("v01\ta\treal\tx\t1\ttrain\n").unwrap();
        let b = parse("v02\ta\treal\tx\t1\ttest\n").unwrap();
        let c = parse("v01\ta\treal\tx\t1\ttest\n").unwrap();
        assert!(check_disjoint(&[&a, &b]).is_ok());
        assert!(matches!(
            check_disjoint(&[&a, &c]),
            Err(DatasetError::SplitLeak { .. })
        ));
    }

    #[test]
    fn frame_count_checked_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let frames = dir.path().join("frames/v01");
        std::fs::create_dir_all(&frames).unwrap();
        for i in 0..5 {
            write_png(&frames.join(format!("{i:04}.png")), &RgbImage::filled(8, 8, [1, 2, 3]))
                .unwrap();
        }
        let path = dir.path().join("manifest.tsv");
        std::fs::write(&path, "v01\tframes/v01\treal\tcam\t5\ttrain\n").unwrap();
        assert_eq!(load_manifest(&path).unwrap().len(), 1);
        std::fs::write(&path, "v01\tframes/v01\treal\tcam\t4\ttrain\n").unwrap();
        assert!(matches!(
            load_manifest(&path).unwrap_err(),
            DatasetError::FrameCountMismatch { expected: 4, found: 5, .. }
        ));
        assert!(matches!(
            load_manifest(&dir.path().join("nope.tsv")).unwrap_err(),
            DatasetError::MissingFile(_)
        ));
    }

    #[test]
    fn write_then_parse_preserves_entries() {
        let dir = tempfile::tempdir().unwrap();
        let m = parse_manifest(
            "a\tframes/a\treal\tcam\t3\ttrain\nb\tframes/b\tfake\tgen\t4\tval\n",
            dir.path(),
            Path::new("m"),
        )
        .unwrap();
        let path = dir.path().join("m.tsv");
        write_manifest(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("a\tframes/a\treal\tcam\t3\ttrain"));
        assert_eq!(parse_manifest(&text, dir.path(), &path).unwrap(), m);
    }
}
