//! Grid execution: a bounded worker pool, a resume journal and an ordered merge.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::report::Row;

/// One independent unit of work.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cell {
    pub name: String,
    pub seed: u64,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub workers: usize,
    /// Completed cells are appended here and skipped when the run is repeated.
    pub journal: Option<PathBuf>,
    /// Stop with [`CliError::Interrupted`] after this many newly completed cells.
    pub stop_after: Option<usize>,
}

impl RunOptions {
    pub fn with_workers(workers: usize) -> Self {
        Self {
            workers,
            ..Self::default()
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JournalEntry {
    hash: String,
    index: usize,
    cell: String,
    seed: u64,
    rows: Vec<Row>,
}

/// Rows already journalled for these cells under `hash`. Unreadable lines (a write cut
/// short by the interruption) are ignored.
fn load_journal(path: &PathBuf, hash: &str, cells: &[Cell]) -> Result<Vec<Option<Vec<Row>>>> {
    let mut done = vec![None; cells.len()];
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(CliError::io(path)(e)),
    };
    for line in text.lines() {
        let Ok(entry) = serde_json::from_str::<JournalEntry>(line) else {
            continue;
        };
        let matches = entry.hash == hash
            && cells
                .get(entry.index)
                .is_some_and(|c| c.name == entry.cell && c.seed == entry.seed);
        if matches {
            done[entry.index] = Some(entry.rows);
        }
    }
    Ok(done)
}

/// Run `f` on every cell with `options.workers` threads and concatenate the rows in
/// cell order. Returns the rows and how many cells came from the journal.
pub fn run_cells<F>(cells: &[Cell], hash: &str, options: &RunOptions, f: F) -> Result<(Vec<Row>, usize)>
where
    F: Fn(&Cell) -> Result<Vec<Row>> + Sync,
{
    let mut done = match &options.journal {
        Some(path) => load_journal(path, hash, cells)?,
        None => vec![None; cells.len()],
    };
    let resumed = done.iter().filter(|d| d.is_some()).count();
    let mut pending: Vec<usize> = (0..cells.len()).filter(|&i| done[i].is_none()).collect();
    let interrupted = options.stop_after.is_some_and(|k| k < pending.len());
    if let Some(k) = options.stop_after {
        pending.truncate(k);
    }

    let journal = match &options.journal {
        Some(path) => {
            let torn = fs::read(path).is_ok_and(|b| b.last().is_some_and(|&c| c != b'\n'));
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(CliError::io(path))?;
            if torn {
                file.write_all(b"\n").map_err(CliError::io(path))?;
            }
            Some(Mutex::new(file))
        }
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;

    let fresh: Vec<(usize, Vec<Row>)> = pool.install(|| {
        pending
            .par_iter()
            .map(|&i| {
                let cell = &cells[i];
                log::info!("cell {}/{}: {} seed {}", i + 1, cells.len(), cell.name, cell.seed);
                let rows = f(cell)?;
                if let (Some(file), Some(path)) = (&journal, &options.journal) {
                    let entry = JournalEntry {
                        hash: hash.to_string(),
                        index: i,
                        cell: cell.name.clone(),
                        seed: cell.seed,
                        rows: rows.clone(),
                    };
                    let mut line = serde_json::to_string(&entry).map_err(|e| CliError::Runtime(e.to_string()))?;
                    line.push('\n');
                    let mut file = file.lock().expect("journal lock");
                    file.write_all(line.as_bytes()).map_err(CliError::io(path))?;
                }
                Ok((i, rows))
            })
            .collect::<Result<_>>()
    })?;

    let completed = resumed + fresh.len();
    for (i, rows) in fresh {
        done[i] = Some(rows);
    }
    if interrupted {
        return Err(CliError::Interrupted {
            completed,
            total: cells.len(),
        });
    }
    Ok((done.into_iter().flat_map(|d| d.expect("every cell ran")).collect(), resumed))
}
