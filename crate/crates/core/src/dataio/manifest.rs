use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub class_id: u32,
}

/// Ordered list of `(image path, class id)` entries. Paths are relative to
/// the directory holding the manifest file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Self {
        Manifest {
            root: root.into(),
            entries,
        }
    }

    /// Number of classes, `max id + 1`.
    pub fn num_classes(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.class_id as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn class_ids(&self) -> BTreeSet<u32> {
        self.entries.iter().map(|e| e.class_id).collect()
    }

    /// Class ids absent from `[0, C)`.
    pub fn missing_ids(&self) -> Vec<u32> {
        let present = self.class_ids();
        (0..self.num_classes() as u32)
            .filter(|c| !present.contains(c))
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}", e.path, e.class_id);
        }
        out
    }
}

/// Parses manifest text. In strict mode a gap in the class-id range is an
/// error; otherwise it is logged as a warning.
pub fn parse_manifest(
    text: &str,
    root: impl Into<PathBuf>,
    origin: &Path,
    strict: bool,
) -> Result<Manifest> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::ManifestParse {
            path: origin.to_path_buf(),
            line: line_no,
            msg,
        };
        let (path, id) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected \"path<TAB>classid\"".into()))?;
        let class_id: u32 = id.trim().parse().map_err(|_| {
            parse_err(format!(
                "class id {:?} is not a non-negative integer",
                id.trim()
            ))
        })?;
        if path.is_empty() {
            return Err(parse_err("empty path".into()));
        }
        if !seen.insert(path.to_string()) {
            return Err(Error::DuplicatePath(path.to_string()));
        }
        entries.push(ManifestEntry {
            path: path.to_string(),
            class_id,
        });
    }
    let manifest = Manifest::new(root, entries);
    let missing = manifest.missing_ids();
    if !missing.is_empty() {
        if strict {
            return Err(Error::ClassIdGap {
                missing,
                classes: manifest.num_classes() as u32,
            });
        }
        log::warn!(
            "{}: class ids missing from range: {:?}",
            origin.display(),
            missing
        );
    }
    Ok(manifest)
}

pub fn load_manifest(path: impl AsRef<Path>, strict: bool) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, root, path, strict)
}

pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest.to_tsv()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, strict: bool) -> Result<Manifest> {
        parse_manifest(text, "", Path::new("m.tsv"), strict)
    }

    #[test]
    fn two_entries() {
        let m = parse("a.pgm\t0\nb.pgm\t1\n", true).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.num_classes(), 2);
        assert_eq!(m.entries[1].path, "b.pgm");
    }

    #[test]
    fn bad_class_id_reports_line() {
        match parse("ok.pgm\t0\na.pgm\tx\n", true) {
            Err(Error::ManifestParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_rejected() {
        assert!(matches!(
            parse("a.pgm\t0\na.pgm\t1\n", true),
            Err(Error::DuplicatePath(_))
        ));
    }

    #[test]
    fn gap_is_error_only_in_strict_mode() {
        assert!(matches!(
            parse("a.pgm\t0\nb.pgm\t2\n", true),
            Err(Error::ClassIdGap { .. })
        ));
        let m = parse("a.pgm\t0\nb.pgm\t2\n", false).unwrap();
        assert_eq!(m.missing_ids(), vec![1]);
    }

    #[test]
    fn full_level_one_charset() {
        let text: String = (0..3755)
            .map(|i| format!("img/{i:05}.pgm\t{i}\n"))
            .collect();
        let m = parse(&text, true).unwrap();
        assert_eq!(m.num_classes(), 3755);
    }
}
