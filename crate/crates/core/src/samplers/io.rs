use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{End, Sample, SampleEntry, SampleError, SampleSpec};

/// Sidecar metadata written next to a sample CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub spec: SampleSpec,
    pub size: usize,
    pub seconds: f64,
}

impl SampleMeta {
    /// `a/b.csv` -> `a/b.meta.json`
    pub fn path_for(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("meta.json")
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SampleError + '_ {
    move |source| SampleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_sample_csv<W: Write>(out: W, sample: &Sample) -> Result<(), SampleError> {
    let mut w = BufWriter::new(out);
    let fail = |e: std::io::Error| SampleError::Format(e.to_string());
    writeln!(w, "item_id,cluster,end").map_err(fail)?;
    for e in &sample.entries {
        match e.cluster {
            Some(c) => writeln!(w, "{},{},{}", e.item_id, c, e.end.as_str()),
            None => writeln!(w, "{},,{}", e.item_id, e.end.as_str()),
        }
        .map_err(fail)?;
    }
    w.flush().map_err(fail)
}

/// Reads sample entries, rejecting duplicates and ids `>= item_count`.
pub fn read_sample_csv(path: &Path, item_count: usize) -> Result<Vec<SampleEntry>, SampleError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| SampleError::Format(e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["item_id", "cluster", "end"] {
        return Err(SampleError::Format(format!(
            "{}: expected header item_id,cluster,end",
            path.display()
        )));
    }
    let mut seen = vec![false; item_count];
    let mut entries = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| SampleError::Format(e.to_string()))?;
        let bad = |what: &str| {
            SampleError::Format(format!("{}: row {}: {what}", path.display(), line + 1))
        };
        let item_id: usize = rec[0].parse().map_err(|_| bad("bad item_id"))?;
        if item_id >= item_count {
            return Err(bad(&format!(
                "item id {item_id} out of range for a run of {item_count} items"
            )));
        }
        if std::mem::replace(&mut seen[item_id], true) {
            return Err(bad(&format!("duplicate item id {item_id}")));
        }
        let cluster = match &rec[1] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("bad cluster"))?),
        };
        let end = match &rec[2] {
            "head" => End::Head,
            "tail" => End::Tail,
            "n/a" => End::NotApplicable,
            other => return Err(bad(&format!("bad end '{other}'"))),
        };
        entries.push(SampleEntry {
            item_id,
            cluster,
            end,
        });
    }
    entries.sort_by_key(|e| e.item_id);
    Ok(entries)
}

impl Sample {
    /// Rebuilds a sample read from disk.
    pub fn from_disk(spec: SampleSpec, entries: Vec<SampleEntry>) -> Self {
        Sample::from_entries(spec, entries, Vec::new())
    }
}
