use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use cadesh::ingest::{parse_dataset, write_dataset};
use cadesh::{CadeshModel, Error, FlowRecord, Result};
use serde::Serialize;

pub const TRAINING_FILE: &str = "training.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const TEST_FILE: &str = "test.csv";
pub const REPORT_FILE: &str = "cleansing_report.json";

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))
}

/// Writes through a temporary file in the target directory and renames it
/// into place only after `fill` succeeds.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(&dir)
        .map_err(|e| Error::Data(format!("cannot write in {}: {e}", dir.display())))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path)
        .map_err(|e| Error::Data(format!("cannot write {}: {}", path.display(), e.error)))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn write_flows(path: &Path, flows: &[FlowRecord]) -> Result<()> {
    write_atomic(path, |w| write_dataset(flows, w))
}

pub fn read_flows(path: &Path) -> Result<Vec<FlowRecord>> {
    let (flows, report) = parse_dataset(BufReader::new(open(path)?))?;
    if report.rows_rejected > 0 {
        log::warn!("{}: {} rows rejected", path.display(), report.rows_rejected);
    }
    Ok(flows)
}

pub fn read_partition(dir: &Path, file: &str) -> Result<Vec<FlowRecord>> {
    read_flows(&dir.join(file))
}

pub fn read_model(path: &Path) -> Result<CadeshModel> {
    let model: CadeshModel = serde_json::from_reader(BufReader::new(open(path)?))
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    model.validate()?;
    Ok(model)
}
