use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::run::MetricsRecord;
use super::HarnessError;
use crate::learner::ArchKind;

pub const CSV_HEADER: [&str; 7] = ["run", "iter", "agent", "arch", "test_acc", "val_acc", "proxy_correct"];

fn csv_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Csv { path: path.to_owned(), message: e.to_string() }
}

/// Writes the records with 6-decimal floats; `proxy_correct` is empty when absent.
pub fn write_csv<W: Write>(records: &[MetricsRecord], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.run.to_string(),
            r.iter.to_string(),
            r.agent.to_string(),
            r.arch.to_string(),
            format!("{:.6}", r.test_acc),
            format!("{:.6}", r.val_acc),
            r.proxy_correct.map(|p| format!("{p:.6}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_csv(records, BufWriter::new(file)).map_err(|e| csv_err(path, e))
}

/// Parses a file written by [`emit_csv`].
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>, HarnessError> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => csv_err(path, format!("{other:?}")),
    })?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(csv_err(path, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let bad = |field: &str| csv_err(path, format!("line {}: bad {field}", line + 2));
        let num = |i: usize| row.get(i).ok_or_else(|| bad(CSV_HEADER[i]));
        let float = |i: usize| num(i)?.parse::<f64>().map_err(|_| bad(CSV_HEADER[i]));
        out.push(MetricsRecord {
            run: num(0)?.parse().map_err(|_| bad("run"))?,
            iter: num(1)?.parse().map_err(|_| bad("iter"))?,
            agent: num(2)?.parse().map_err(|_| bad("agent"))?,
            arch: num(3)?.parse::<ArchKind>().map_err(|_| bad("arch"))?,
            test_acc: float(4)?,
            val_acc: float(5)?,
            proxy_correct: match num(6)? {
                "" => None,
                _ => Some(float(6)?),
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records() -> Vec<MetricsRecord> {
        vec![
            MetricsRecord { run: 0, iter: 0, agent: 0, arch: ArchKind::Hl2, test_acc: 0.75, val_acc: 0.5, proxy_correct: None },
            MetricsRecord {
                run: 0,
                iter: 100,
                agent: 1,
                arch: ArchKind::Shl,
                test_acc: 0.8125,
                val_acc: 0.79,
                proxy_correct: Some(0.845),
            },
        ]
    }

    #[test]
    fn empty_stream_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "run,iter,agent,arch,test_acc,val_acc,proxy_correct\n");
    }

    #[test]
    fn two_records_three_lines() {
        let mut buf = Vec::new();
        write_csv(&records(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains('\r'));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0,0,0,HL2,0.750000,0.500000,");
        assert_eq!(lines[2], "0,100,1,SHL,0.812500,0.790000,0.845000");
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        emit_csv(&records(), &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), records());
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_csv(&path), Err(HarnessError::Csv { .. })));
        assert!(matches!(read_csv(dir.path().join("missing.csv")), Err(HarnessError::Io { .. })));
    }
}
