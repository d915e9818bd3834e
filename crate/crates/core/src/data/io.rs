use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::{Collection, DataError, Label, Record, TaskDataset};
use crate::chem::{parse_smiles, FingerprintParams};

pub const INPUT_HEADER: [&str; 4] = ["compound_id", "smiles", "label", "date"];

struct RawRow {
    compound_id: String,
    smiles: String,
    label: Label,
    date: NaiveDate,
    line: u64,
}

/// Load one CSV file per task; the task name is the file stem.
pub fn load_collection(paths: &[PathBuf], params: FingerprintParams) -> Result<Collection, DataError> {
    let mut tasks = Vec::with_capacity(paths.len());
    for path in paths {
        let file = File::open(path).map_err(|source| DataError::Io {
            path: path.clone(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        tasks.push(load_task(&name, file, path, params)?);
    }
    Collection::new(tasks)
}

/// Parse a task table. Inconclusive rows are dropped; repeated compound ids
/// are merged when their labels agree and discarded otherwise.
pub fn load_task<R: Read>(
    name: &str,
    reader: R,
    origin: &Path,
    params: FingerprintParams,
) -> Result<TaskDataset, DataError> {
    let malformed = |line: u64, reason: String| DataError::MalformedRow {
        file: origin.to_path_buf(),
        line,
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    if header.iter().ne(INPUT_HEADER) {
        return Err(malformed(1, format!("expected header {}", INPUT_HEADER.join(","))));
    }

    let mut rows: Vec<RawRow> = Vec::new();
    for result in rdr.records() {
        let rec = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(malformed(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let label = match rec[2].to_ascii_lowercase().as_str() {
            "active" => Some(Label::Active),
            "inactive" => Some(Label::Inactive),
            "inconclusive" => None,
            other => return Err(malformed(line, format!("unknown label {other:?}"))),
        };
        let date = NaiveDate::parse_from_str(&rec[3], "%Y-%m-%d")
            .map_err(|e| malformed(line, format!("bad date {:?}: {e}", &rec[3])))?;
        if rec[0].is_empty() {
            return Err(malformed(line, "empty compound_id".into()));
        }
        if let Some(label) = label {
            rows.push(RawRow {
                compound_id: rec[0].to_string(),
                smiles: rec[1].to_string(),
                label,
                date,
                line,
            });
        }
    }

    // first-occurrence order; None marks a conflicting compound
    let mut first: HashMap<&str, Option<usize>> = HashMap::new();
    let mut order = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        match first.get_mut(row.compound_id.as_str()) {
            None => {
                first.insert(&row.compound_id, Some(i));
                order.push(i);
            }
            Some(slot) => {
                if let Some(j) = *slot {
                    if rows[j].label != row.label {
                        *slot = None;
                    }
                }
            }
        }
    }

    let mut records = Vec::new();
    for i in order {
        if first[rows[i].compound_id.as_str()].is_none() {
            continue;
        }
        let row = &rows[i];
        let mol = parse_smiles(&row.smiles).map_err(|source| DataError::UnparseableSmiles {
            file: origin.to_path_buf(),
            line: row.line,
            smiles: row.smiles.clone(),
            source,
        })?;
        let fingerprint = params
            .fingerprint(&mol)
            .map_err(|e| malformed(row.line, e.to_string()))?;
        records.push(Record {
            compound_id: row.compound_id.clone(),
            smiles: row.smiles.clone(),
            fingerprint,
            label: row.label,
            date: row.date,
        });
    }

    let task = TaskDataset {
        name: name.to_string(),
        records,
    };
    if task.n_active() == 0 || task.n_inactive() == 0 {
        return Err(DataError::EmptyTask {
            task: name.to_string(),
            reason: format!("{} actives, {} inactives after ingestion", task.n_active(), task.n_inactive()),
        });
    }
    Ok(task)
}

/// Write a task in the normalized input schema.
pub fn write_task_csv<W: Write>(task: &TaskDataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(INPUT_HEADER)?;
    for r in &task.records {
        let date = r.date.format("%Y-%m-%d").to_string();
        w.write_record([r.compound_id.as_str(), r.smiles.as_str(), r.label.as_str(), date.as_str()])?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: PathBuf::from("<writer>"),
        source,
    })?;
    Ok(())
}
