//! CSV dataset manifest: `path,label,subject_id,split`.

use std::fs;
use std::path::Path;

use super::{Diagnosis, Split};
use crate::error::{param_err, Result};

const HEADER: [&str; 4] = ["path", "label", "subject_id", "split"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: String,
    pub label: Diagnosis,
    pub subject_id: String,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(HEADER)?;
        for e in &self.entries {
            w.write_record([e.path.as_str(), e.label.code(), e.subject_id.as_str(), &e.split.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| param_err(format!("manifest buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| param_err(format!("manifest is not UTF-8: {e}")))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header.iter().ne(HEADER) {
            return Err(param_err(format!("manifest header must be {}, found {:?}", HEADER.join(","), header)));
        }
        let mut entries = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or_default();
            let ctx = |e: crate::Error| param_err(format!("manifest row {}: {e}", row + 1));
            entries.push(ManifestEntry {
                path: field(0).to_string(),
                label: field(1).parse().map_err(ctx)?,
                subject_id: field(2).to_string(),
                split: field(3).parse().map_err(ctx)?,
            });
        }
        Ok(DatasetManifest { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?)
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_awkward_fields() {
        let m = DatasetManifest {
            entries: vec![
                ManifestEntry { path: "volumes/AD-000.vxv".into(), label: Diagnosis::Ad, subject_id: "AD-000".into(), split: Split::Train },
                ManifestEntry { path: "dir, with comma/x.vxv".into(), label: Diagnosis::Hc, subject_id: "s \"q\"".into(), split: Split::Test },
            ],
        };
        let text = m.to_csv().unwrap();
        assert!(text.starts_with("path,label,subject_id,split\nvolumes/AD-000.vxv,AD,AD-000,train\n"));
        let back = DatasetManifest::from_csv(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_csv().unwrap(), text);
        assert_eq!(back.count(Split::Test), 1);
    }

    #[test]
    fn bad_rows_rejected() {
        assert!(DatasetManifest::from_csv("path,label,subject_id,split\na,XX,b,train\n").is_err());
        assert!(DatasetManifest::from_csv("path,label,subject_id,split\na,AD,b,holdout\n").is_err());
        assert!(DatasetManifest::from_csv("file,label,subject_id,split\n").is_err());
    }
}
