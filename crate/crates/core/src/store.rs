//! Event log persistence.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::events::{EventPayload, LedgerEvent};
use crate::state::CorruptLog;

/// Destination for committed event lines. One call is one batch and must
/// land as a single write.
pub trait EventSink: Send {
    fn append(&mut self, batch: &str) -> io::Result<()>;
}

/// Append-only log file.
pub struct FileLog {
    file: File,
    path: PathBuf,
    sync: bool,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("event log I/O: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Corrupt(#[from] CorruptLog),
    #[error("event log is not UTF-8")]
    NotUtf8,
}

/// What survived of a log after a crash.
#[derive(Debug, Clone, Default)]
pub struct DurablePrefix {
    pub events: Vec<LedgerEvent>,
    /// Byte length of the complete batches.
    pub len: usize,
    /// Bytes past `len` belonging to a torn write.
    pub discarded: usize,
}

/// Splits log bytes into complete events. A final line without its newline,
/// or a postings batch missing some of its commit events at the very end, is
/// an interrupted write and is left out. Anything malformed before that is
/// corruption.
pub fn durable_prefix(bytes: &[u8]) -> Result<DurablePrefix, StoreError> {
    let mut events = Vec::new();
    let mut ends = Vec::new();
    let mut offset = 0usize;
    while let Some(nl) = bytes[offset..].iter().position(|b| *b == b'\n') {
        let line = std::str::from_utf8(&bytes[offset..offset + nl]).map_err(|_| StoreError::NotUtf8)?;
        let seq = events.len() as u64 + 1;
        let event = LedgerEvent::parse_line(line).map_err(|e| CorruptLog {
            seq,
            reason: e.to_string(),
        })?;
        events.push(event);
        offset += nl + 1;
        ends.push(offset);
    }
    // Only the last postings batch can be short.
    let mut keep = events.len();
    if let Some(start) = events
        .iter()
        .rposition(|e| matches!(e.payload, EventPayload::PostingsApplied(_)))
    {
        if let EventPayload::PostingsApplied(p) = &events[start].payload {
            if start + p.commit_events as usize >= events.len() {
                keep = start;
            }
        }
    }
    events.truncate(keep);
    let len = if keep == 0 { 0 } else { ends[keep - 1] };
    Ok(DurablePrefix {
        events,
        len,
        discarded: bytes.len() - len,
    })
}

impl FileLog {
    /// Opens (creating if needed) the log at `path`, truncates any torn tail
    /// and returns what survived.
    pub fn open(path: impl AsRef<Path>, sync: bool) -> Result<(FileLog, DurablePrefix), StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let prefix = durable_prefix(&bytes)?;
        if prefix.discarded > 0 {
            file.set_len(prefix.len as u64)?;
            file.sync_data()?;
        }
        drop(file);
        let file = OpenOptions::new().append(true).open(&path)?;
        Ok((FileLog { file, path, sync }, prefix))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl EventSink for FileLog {
    fn append(&mut self, batch: &str) -> io::Result<()> {
        self.file.write_all(batch.as_bytes())?;
        self.file.flush()?;
        if self.sync {
            self.file.sync_data()?;
        }
        Ok(())
    }
}

/// In-memory log whose contents stay readable through a cloned handle.
#[derive(Clone, Default)]
pub struct MemoryLog {
    text: Arc<Mutex<String>>,
}

impl MemoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contents(&self) -> String {
        self.text.lock().expect("log lock").clone()
    }
}

impl EventSink for MemoryLog {
    fn append(&mut self, batch: &str) -> io::Result<()> {
        self.text.lock().expect("log lock").push_str(batch);
        Ok(())
    }
}

/// Sink that discards everything.
pub struct NullLog;

impl EventSink for NullLog {
    fn append(&mut self, _batch: &str) -> io::Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::WalletOpened;
    use chrono::{TimeZone, Utc};

    fn opened(seq: u64, id: &str) -> String {
        LedgerEvent {
            seq,
            at: Utc.with_ymd_and_hms(2026, 3, 1, 6, 0, 0).unwrap(),
            payload: EventPayload::WalletOpened(WalletOpened { owner: id.parse().unwrap() }),
        }
        .to_line()
    }

    #[test]
    fn torn_line_is_dropped_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        let first = format!("{}\n", opened(1, "234567890124"));
        let torn = &opened(2, "345678901238")[..30];
        std::fs::write(&path, format!("{first}{torn}")).unwrap();

        let (mut log, prefix) = FileLog::open(&path, false).unwrap();
        assert_eq!(prefix.events.len(), 1);
        assert_eq!(prefix.discarded, torn.len());
        assert_eq!(std::fs::read_to_string(&path).unwrap(), first);

        log.append(&format!("{}\n", opened(2, "345678901238"))).unwrap();
        let (_, again) = FileLog::open(&path, true).unwrap();
        assert_eq!(again.events.len(), 2);
        assert_eq!(again.discarded, 0);
    }

    #[test]
    fn garbage_before_the_tail_is_corruption() {
        let text = format!("not an event\n{}\n", opened(1, "234567890124"));
        assert!(matches!(durable_prefix(text.as_bytes()), Err(StoreError::Corrupt(_))));
    }

    #[test]
    fn memory_log_shares_contents() {
        let log = MemoryLog::new();
        let mut sink: Box<dyn EventSink> = Box::new(log.clone());
        sink.append("a\n").unwrap();
        sink.append("b\n").unwrap();
        assert_eq!(log.contents(), "a\nb\n");
    }
}
