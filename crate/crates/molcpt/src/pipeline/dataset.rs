//! CSV ingestion into labeled molecular task datasets.

use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::smiles::{parse_smiles, MolGraph};

/// One molecule with a per-task label slot (`None` marks a missing label).
#[derive(Debug, Clone)]
pub struct TaskRecord {
    pub graph: MolGraph,
    pub smiles: String,
    pub labels: Vec<Option<bool>>,
}

/// Record indices per split; filled by scaffold splitting.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitAssignment {
    pub fn of(&self, split: &str) -> &[usize] {
        match split {
            "train" => &self.train,
            "valid" => &self.valid,
            "test" => &self.test,
            other => panic!("unknown split {other:?}"),
        }
    }
}

/// A set of molecules with binary task labels and a split assignment.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub name: String,
    pub records: Vec<TaskRecord>,
    pub task_count: usize,
    pub task_names: Vec<String>,
    pub split: SplitAssignment,
    /// Rows dropped because their SMILES failed to parse.
    pub skipped: usize,
}

impl TaskDataset {
    /// Graphs of the records listed in `indices`.
    pub fn graphs_of(&self, indices: &[usize]) -> Vec<&MolGraph> {
        indices.iter().map(|&i| &self.records[i].graph).collect()
    }

    /// All graphs, in record order.
    pub fn all_graphs(&self) -> Vec<&MolGraph> {
        self.records.iter().map(|r| &r.graph).collect()
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no `smiles` column in the CSV header")]
    MissingSmilesColumn,
    #[error("no row with a parseable SMILES string")]
    NoValidRows,
    #[error("row {row}, column {column:?}: label {value:?} is not 0, 1, or empty")]
    InvalidLabel {
        row: usize,
        column: String,
        value: String,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

fn parse_label(cell: &str, row: usize, column: &str) -> Result<Option<bool>, DatasetError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v == 0.0 => Ok(Some(false)),
        Ok(v) if v == 1.0 => Ok(Some(true)),
        _ => Err(DatasetError::InvalidLabel {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}

/// Reads a labeled dataset from a CSV file. The header must contain a
/// `smiles` column; every other column is a binary task whose cells are 0, 1,
/// or empty. Rows whose SMILES fail to parse are skipped and counted.
pub fn load_dataset(path: &Path) -> Result<TaskDataset, DatasetError> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let file = std::fs::File::open(path)?;
    load_dataset_reader(file, &name)
}

/// Same as [`load_dataset`] but over any reader, with an explicit name.
pub fn load_dataset_reader(reader: impl Read, name: &str) -> Result<TaskDataset, DatasetError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let smiles_col = headers
        .iter()
        .position(|h| h.trim() == "smiles")
        .ok_or(DatasetError::MissingSmilesColumn)?;
    let task_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != smiles_col)
        .map(|(_, h)| h.trim().to_string())
        .collect();
    let task_count = task_names.len();

    let mut records = Vec::new();
    let mut skipped = 0usize;
    for (row_idx, row) in csv.records().enumerate() {
        let row = row?;
        let smiles = row.get(smiles_col).unwrap_or("").trim().to_string();
        let graph = match parse_smiles(&smiles) {
            Ok(g) => g,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let mut labels = Vec::with_capacity(task_count);
        for (col_idx, cell) in row.iter().enumerate() {
            if col_idx == smiles_col {
                continue;
            }
            let column = headers.get(col_idx).unwrap_or("");
            labels.push(parse_label(cell, row_idx + 2, column)?);
        }
        records.push(TaskRecord {
            graph,
            smiles,
            labels,
        });
    }
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} rows with unparseable SMILES in {name}");
    }
    if records.is_empty() {
        return Err(DatasetError::NoValidRows);
    }
    Ok(TaskDataset {
        name: name.to_string(),
        records,
        task_count,
        task_names,
        split: SplitAssignment::default(),
        skipped,
    })
}
