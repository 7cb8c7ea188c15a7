//! Raw text to `FVC1` features plus a label file.
//!
//! Input has one image per line: `labels,f1,f2,...,fD`, where `labels` is a
//! `;`-separated list of non-negative integers. Lines starting with `#` are
//! skipped. Image ids are assigned consecutively from `first_id`.

use std::io::BufRead;
use std::path::Path;

use tlh_core::{FeatureMatrix, LabelMode, LabelStore};

use crate::error::{CliError, Context, Result};
use crate::files::write_with;

#[derive(Clone, Debug, PartialEq)]
pub struct IngestSummary {
    pub n: usize,
    pub d: usize,
    pub mode: LabelMode,
    pub classes: usize,
}

fn line_err(line: u64, msg: String) -> CliError {
    CliError::Core {
        context: "ingest".into(),
        source: tlh_core::Error::Parse {
            line: line as usize,
            msg,
        },
    }
}

pub fn parse_raw<R: BufRead>(
    input: R,
    mode: Option<LabelMode>,
    first_id: u64,
) -> Result<(FeatureMatrix, LabelStore)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            line_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() < 2 {
            return Err(line_err(line, "expected labels followed by at least one feature".into()));
        }
        let set = record[0]
            .split(';')
            .map(|l| {
                l.trim()
                    .parse::<u32>()
                    .map_err(|_| line_err(line, format!("bad label {l:?}")))
            })
            .collect::<Result<Vec<u32>>>()?;
        let d = record.len() - 1;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(line_err(line, format!("expected {expected} features, found {d}")));
            }
            _ => {}
        }
        for (j, field) in record.iter().skip(1).enumerate() {
            let v: f32 = field
                .parse()
                .map_err(|_| line_err(line, format!("feature {}: cannot parse {field:?}", j + 1)))?;
            if !v.is_finite() {
                return Err(line_err(line, format!("feature {}: value {field} is not a finite f32", j + 1)));
            }
            data.push(v as f64);
        }
        labels.push(set);
    }
    let d = dim.ok_or_else(|| CliError::Core {
        context: "ingest".into(),
        source: tlh_core::Error::Empty("ingest input"),
    })?;
    let n = labels.len();
    let mode = mode.unwrap_or(if labels.iter().all(|s| s.len() == 1) {
        LabelMode::Single
    } else {
        LabelMode::Multi
    });
    let ids = (first_id..first_id + n as u64).collect();
    let features = FeatureMatrix::new(n, d, data).context(|| "ingest".into())?;
    let store = LabelStore::with_ids(mode, labels, ids).context(|| "ingest".into())?;
    Ok((features, store))
}

pub fn run_ingest<R: BufRead>(
    input: R,
    features_out: &Path,
    labels_out: &Path,
    mode: Option<LabelMode>,
    first_id: u64,
) -> Result<IngestSummary> {
    let (features, store) = parse_raw(input, mode, first_id)?;
    write_with(features_out, |w| features.write_fvc(w))?;
    write_with(labels_out, |w| store.write(w))?;
    let mut classes: Vec<u32> = (0..store.len()).flat_map(|i| store.labels(i).to_vec()).collect();
    classes.sort_unstable();
    classes.dedup();
    Ok(IngestSummary {
        n: features.rows(),
        d: features.cols(),
        mode: store.mode(),
        classes: classes.len(),
    })
}
