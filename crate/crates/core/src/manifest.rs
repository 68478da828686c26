//! Per-sample metadata and subset selection.
//!
//! The manifest CSV has the header `sample_id,group_id,class,source,split`.
//! Record `i` describes row `i` of the aligned embedding matrix.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[serde(alias = "validation")]
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub const ASSIGNABLE: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = OodError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" | "" => Ok(Split::Unassigned),
            other => Err(OodError::Parameter(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    /// Lesion identity; all samples of a group share a split.
    pub group_id: String,
    #[serde(rename = "class")]
    pub class_label: String,
    pub source: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SampleManifest {
    records: Vec<SampleRecord>,
}

impl SampleManifest {
    /// Validates unique sample ids and one split per group.
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(records.len());
        let mut group_split: HashMap<&str, Split> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if let Some(prev) = ids.insert(r.sample_id.as_str(), i) {
                return Err(OodError::Manifest(format!(
                    "duplicate sample_id {:?} at records {prev} and {i}",
                    r.sample_id
                )));
            }
            match group_split.get(r.group_id.as_str()) {
                Some(&s) if s != r.split => {
                    return Err(OodError::Leakage(format!(
                        "group {:?} spans splits {s} and {}",
                        r.group_id, r.split
                    )));
                }
                Some(_) => {}
                None => {
                    group_split.insert(&r.group_id, r.split);
                }
            }
        }
        Ok(SampleManifest { records })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| OodError::Format(format!("manifest header: {e}")))?
            .clone();
        let expected = ["sample_id", "group_id", "class", "source", "split"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(OodError::Format(format!(
                "manifest header must be {}, got {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        for (i, rec) in rdr.deserialize::<SampleRecord>().enumerate() {
            records.push(rec.map_err(|e| OodError::Format(format!("manifest line {}: {e}", i + 2)))?);
        }
        Self::new(records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| OodError::io(path, e))?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sample_id", "group_id", "class", "source", "split"])
            .expect("write to Vec");
        for r in &self.records {
            w.write_record([
                r.sample_id.as_str(),
                r.group_id.as_str(),
                r.class_label.as_str(),
                r.source.as_str(),
                r.split.as_str(),
            ])
            .expect("write to Vec");
        }
        String::from_utf8(w.into_inner().expect("flush Vec")).expect("utf8 input")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| OodError::io(path, e))
    }

    /// Indices of records matching `filter`; errors if none match.
    pub fn select(&self, filter: &Filter) -> Result<Vec<usize>> {
        let idx: Vec<usize> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| filter.matches(r))
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(OodError::EmptySelection(format!(
                "no samples match {filter}"
            )));
        }
        Ok(idx)
    }
}

/// Conjunction of class, source and split restrictions. An empty set means
/// no restriction on that axis.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filter {
    #[serde(default)]
    pub classes: BTreeSet<String>,
    #[serde(default)]
    pub sources: BTreeSet<String>,
    #[serde(default)]
    pub splits: BTreeSet<Split>,
}

impl Filter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn classes<I, S>(mut self, classes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.classes = classes.into_iter().map(Into::into).collect();
        self
    }

    pub fn sources<I, S>(mut self, sources: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.sources = sources.into_iter().map(Into::into).collect();
        self
    }

    pub fn split(mut self, split: Split) -> Self {
        self.splits = BTreeSet::from([split]);
        self
    }

    pub fn splits<I: IntoIterator<Item = Split>>(mut self, splits: I) -> Self {
        self.splits = splits.into_iter().collect();
        self
    }

    pub fn matches(&self, r: &SampleRecord) -> bool {
        (self.classes.is_empty() || self.classes.contains(&r.class_label))
            && (self.sources.is_empty() || self.sources.contains(&r.source))
            && (self.splits.is_empty() || self.splits.contains(&r.split))
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn axis<T: fmt::Display>(set: &BTreeSet<T>) -> String {
            if set.is_empty() {
                "*".to_string()
            } else {
                set.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("|")
            }
        }
        write!(
            f,
            "classes={} sources={} splits={}",
            axis(&self.classes),
            axis(&self.sources),
            axis(&self.splits)
        )
    }
}

/// Records of `manifest` matching `filter`, in manifest order.
pub fn filter_subset(manifest: &SampleManifest, filter: &Filter) -> Result<SampleManifest> {
    let idx = manifest.select(filter)?;
    Ok(SampleManifest {
        records: idx.into_iter().map(|i| manifest.records[i].clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, group: &str, class: &str, source: &str, split: Split) -> SampleRecord {
        SampleRecord {
            sample_id: id.into(),
            group_id: group.into(),
            class_label: class.into(),
            source: source.into(),
            split,
        }
    }

    fn mixed() -> SampleManifest {
        SampleManifest::new(vec![
            rec("a", "g1", "NV", "HAM", Split::Train),
            rec("b", "g2", "NV", "BCN", Split::Train),
            rec("c", "g3", "MEL", "HAM", Split::Test),
            rec("d", "g4", "DF", "HAM", Split::Test),
            rec("e", "g5", "VASC", "BCN", Split::Test),
            rec("f", "g6", "NV", "HAM", Split::Test),
        ])
        .unwrap()
    }

    #[test]
    fn nv_from_ham() {
        let sub = filter_subset(&mixed(), &Filter::new().classes(["NV"]).sources(["HAM"])).unwrap();
        let ids: Vec<_> = sub.records().iter().map(|r| r.sample_id.as_str()).collect();
        assert_eq!(ids, ["a", "f"]);
    }

    #[test]
    fn source_only() {
        let sub = filter_subset(&mixed(), &Filter::new().sources(["BCN"])).unwrap();
        let ids: Vec<_> = sub.records().iter().map(|r| r.sample_id.as_str()).collect();
        assert_eq!(ids, ["b", "e"]);
    }

    #[test]
    fn ood_pool() {
        let sub = filter_subset(&mixed(), &Filter::new().classes(["DF", "VASC"])).unwrap();
        let ids: Vec<_> = sub.records().iter().map(|r| r.sample_id.as_str()).collect();
        assert_eq!(ids, ["d", "e"]);
    }

    #[test]
    fn empty_selection_is_an_error() {
        let err = filter_subset(&mixed(), &Filter::new().classes(["SCC"])).unwrap_err();
        assert!(matches!(err, OodError::EmptySelection(_)));
    }

    #[test]
    fn split_filter() {
        let idx = mixed().select(&Filter::new().split(Split::Train)).unwrap();
        assert_eq!(idx, [0, 1]);
    }

    #[test]
    fn invariants_enforced() {
        let dup = SampleManifest::new(vec![
            rec("a", "g1", "NV", "HAM", Split::Train),
            rec("a", "g2", "NV", "HAM", Split::Train),
        ]);
        assert!(matches!(dup, Err(OodError::Manifest(_))));
        let leak = SampleManifest::new(vec![
            rec("a", "g1", "NV", "HAM", Split::Train),
            rec("b", "g1", "NV", "HAM", Split::Test),
        ]);
        assert!(matches!(leak, Err(OodError::Leakage(_))));
    }

    #[test]
    fn csv_round_trip() {
        let m = mixed();
        let text = m.to_csv();
        assert!(text.starts_with("sample_id,group_id,class,source,split\n"));
        assert_eq!(SampleManifest::from_csv_reader(text.as_bytes()).unwrap(), m);
    }

    #[test]
    fn bad_header() {
        let err = SampleManifest::from_csv_reader("id,group,class,source,split\n".as_bytes());
        assert!(matches!(err, Err(OodError::Format(_))));
    }

    #[test]
    fn unassigned_split_parses() {
        let text = "sample_id,group_id,class,source,split\nx,g,NV,HAM,unassigned\n";
        let m = SampleManifest::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(m.records()[0].split, Split::Unassigned);
    }
}
