//! Per-epoch append-only message logs.
//!
//! Each submission epoch has one file of records `len (u32 BE) ‖ crc32 (u32
//! BE) ‖ bytes`. A record cut short at the tail (a crash mid-append) is
//! dropped on reload; a checksum mismatch anywhere is reported as corruption.
//! Closing an epoch writes a marker file, after which appends are refused.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::{Result, StarError};

const HEADER_LEN: usize = 8;

#[derive(Default)]
struct EpochLog {
    records: Vec<Vec<u8>>,
    closed: bool,
    writer: Option<BufWriter<File>>,
}

/// Message storage, on disk or in memory.
pub struct EpochStore {
    dir: Option<PathBuf>,
    epochs: Mutex<BTreeMap<u64, EpochLog>>,
}

impl std::fmt::Debug for EpochStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EpochStore").field("dir", &self.dir).finish_non_exhaustive()
    }
}

fn log_path(dir: &Path, epoch: u64) -> PathBuf {
    dir.join(format!("epoch-{epoch:08}.log"))
}

fn closed_path(dir: &Path, epoch: u64) -> PathBuf {
    dir.join(format!("epoch-{epoch:08}.closed"))
}

/// Encodes one log record.
pub fn encode_record(bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + bytes.len());
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&crc32fast::hash(bytes).to_be_bytes());
    out.extend_from_slice(bytes);
    out
}

/// Decodes a log image; returns the records and the length of the valid prefix.
pub fn decode_records(epoch: u64, data: &[u8]) -> Result<(Vec<Vec<u8>>, usize)> {
    let mut records = Vec::new();
    let mut at = 0;
    while data.len() - at >= HEADER_LEN {
        let len = u32::from_be_bytes(data[at..at + 4].try_into().unwrap()) as usize;
        let crc = u32::from_be_bytes(data[at + 4..at + 8].try_into().unwrap());
        let Some(body) = data.get(at + HEADER_LEN..at + HEADER_LEN + len) else {
            break;
        };
        if crc32fast::hash(body) != crc {
            return Err(StarError::CorruptLog {
                epoch,
                offset: at as u64,
            });
        }
        records.push(body.to_vec());
        at += HEADER_LEN + len;
    }
    Ok((records, at))
}

impl EpochStore {
    pub fn in_memory() -> Self {
        EpochStore {
            dir: None,
            epochs: Mutex::new(BTreeMap::new()),
        }
    }

    /// Opens (or creates) a store directory and reloads every epoch in it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut epochs = BTreeMap::new();
        for entry in fs::read_dir(&dir)? {
            let name = entry?.file_name();
            let Some(epoch) = name
                .to_str()
                .and_then(|n| n.strip_prefix("epoch-"))
                .and_then(|n| n.strip_suffix(".log"))
                .and_then(|n| n.parse::<u64>().ok())
            else {
                continue;
            };
            let path = log_path(&dir, epoch);
            let mut data = Vec::new();
            File::open(&path)?.read_to_end(&mut data)?;
            let (records, valid) = decode_records(epoch, &data)?;
            if valid < data.len() {
                log::warn!("epoch {epoch}: dropping {} bytes of torn tail", data.len() - valid);
                OpenOptions::new().write(true).open(&path)?.set_len(valid as u64)?;
            }
            epochs.insert(
                epoch,
                EpochLog {
                    records,
                    closed: closed_path(&dir, epoch).exists(),
                    writer: None,
                },
            );
        }
        Ok(EpochStore {
            dir: Some(dir),
            epochs: Mutex::new(epochs),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn append(&self, epoch: u64, bytes: &[u8]) -> Result<()> {
        let mut epochs = self.epochs.lock().unwrap();
        let log = epochs.entry(epoch).or_default();
        if log.closed {
            return Err(StarError::EpochClosed(epoch));
        }
        if let Some(dir) = &self.dir {
            if log.writer.is_none() {
                let file = OpenOptions::new().create(true).append(true).open(log_path(dir, epoch))?;
                log.writer = Some(BufWriter::new(file));
            }
            let writer = log.writer.as_mut().unwrap();
            writer.write_all(&encode_record(bytes))?;
        }
        log.records.push(bytes.to_vec());
        Ok(())
    }

    /// Flushes and seals an epoch. Closing twice is a no-op.
    pub fn close(&self, epoch: u64) -> Result<()> {
        let mut epochs = self.epochs.lock().unwrap();
        let log = epochs.entry(epoch).or_default();
        if log.closed {
            return Ok(());
        }
        if let Some(mut writer) = log.writer.take() {
            writer.flush()?;
            writer.get_ref().sync_all()?;
        }
        if let Some(dir) = &self.dir {
            if !log_path(dir, epoch).exists() {
                File::create(log_path(dir, epoch))?;
            }
            File::create(closed_path(dir, epoch))?.sync_all()?;
        }
        log.closed = true;
        Ok(())
    }

    pub fn is_closed(&self, epoch: u64) -> bool {
        self.epochs.lock().unwrap().get(&epoch).is_some_and(|l| l.closed)
    }

    pub fn len(&self, epoch: u64) -> usize {
        self.epochs.lock().unwrap().get(&epoch).map_or(0, |l| l.records.len())
    }

    pub fn is_empty(&self, epoch: u64) -> bool {
        self.len(epoch) == 0
    }

    /// Copies out an epoch's records in append order.
    pub fn records(&self, epoch: u64) -> Vec<Vec<u8>> {
        self.epochs
            .lock()
            .unwrap()
            .get(&epoch)
            .map(|l| l.records.clone())
            .unwrap_or_default()
    }

    pub fn epochs(&self) -> Vec<u64> {
        self.epochs.lock().unwrap().keys().copied().collect()
    }

    /// Highest closed epoch, if any.
    pub fn last_closed(&self) -> Option<u64> {
        self.epochs
            .lock()
            .unwrap()
            .iter()
            .rev()
            .find(|(_, l)| l.closed)
            .map(|(e, _)| *e)
    }
}
