//! Columnar segment files.
//!
//! A segment stores one batch of records column by column, with a trailing
//! directory so a reader can learn the layout, per-column checksums, and
//! pruning metadata (timestamp min/max, a match-presence bitmap) from a few
//! small reads without touching the data blocks. The byte layout is pinned
//! in docs/segment-format.md; `write_segment` and `SegmentReader` are the
//! only code that may touch it.
//!
//! Writers produce a temporary file and rename it into place, so a segment
//! path either does not exist or holds a complete segment.

pub mod encoding;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use crate::model::{EnrichedRecord, EnrichmentMode, LogRecord};
use crate::rules::VersionTag;
use encoding::{CodecError, Reader};

pub const SEGMENT_EXTENSION: &str = "fseg";

const MAGIC: &[u8; 4] = b"FSG1";
const FOOTER_MAGIC: &[u8; 4] = b"FSGF";
const FORMAT_VERSION: u16 = 1;
const FOOTER_LEN: u64 = 20;

#[derive(Debug, thiserror::Error)]
pub enum SegmentError {
    #[error("segment {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt segment {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },
    #[error("segment {path} has no column {name}")]
    UnknownColumn { path: PathBuf, name: String },
    #[error("refusing to write an empty segment")]
    EmptyBatch,
    #[error("bad segment batch: {0}")]
    BadBatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    I64,
    U32,
    Str,
    Bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnEncoding {
    Plain,
    Dictionary,
    RunLength,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMeta {
    pub name: String,
    pub ty: ColumnType,
    pub encoding: ColumnEncoding,
    pub offset: u64,
    pub length: u64,
    /// Elements stored in the column. Equals the record count for every
    /// column except `match.vals`, which holds one element per match.
    pub elems: u32,
    pub crc32: u32,
    /// Min/max over stored values; present on integer columns.
    pub stats: Option<(i64, i64)>,
}

/// Which rules matched anywhere in a segment, as a bitmap over rule ids
/// `1..=max_rule_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchBitmap {
    max_rule_id: u32,
    bits: Vec<u8>,
}

impl MatchBitmap {
    fn from_ids<I: IntoIterator<Item = u32>>(max_rule_id: u32, ids: I) -> Self {
        let mut bits = vec![0u8; max_rule_id.div_ceil(8) as usize];
        for id in ids {
            debug_assert!(id >= 1 && id <= max_rule_id);
            let bit = id - 1;
            bits[(bit / 8) as usize] |= 1 << (bit % 8);
        }
        MatchBitmap { max_rule_id, bits }
    }

    /// False for ids outside `1..=max_rule_id`: no record here matched them.
    pub fn contains(&self, rule_id: u32) -> bool {
        if rule_id == 0 || rule_id > self.max_rule_id {
            return false;
        }
        let bit = rule_id - 1;
        self.bits[(bit / 8) as usize] & (1 << (bit % 8)) != 0
    }

    pub fn max_rule_id(&self) -> u32 {
        self.max_rule_id
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMeta {
    pub record_count: u32,
    pub enrichment: Option<EnrichmentMode>,
    /// Distinct engine versions that enriched rows here, in first-appearance
    /// order. Empty for segments written without enrichment.
    pub engine_versions: Vec<VersionTag>,
    pub match_bitmap: Option<MatchBitmap>,
    pub columns: Vec<ColumnMeta>,
}

impl SegmentMeta {
    pub fn column(&self, name: &str) -> Option<&ColumnMeta> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Closed timestamp range stored in the directory stats.
    pub fn time_range(&self) -> Option<(i64, i64)> {
        self.column("timestamp").and_then(|c| c.stats)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    I64(Vec<i64>),
    U32(Vec<u32>),
    Str(Vec<String>),
    Bool(Vec<bool>),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SegmentError + '_ {
    move |source| SegmentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, detail: impl Into<String>) -> SegmentError {
    SegmentError::Corrupt {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Writes one batch as a segment file. With `enrichment` set, match data and
/// the engine-version column are stored in the requested layout; without it
/// only the base record columns are written. Records missing a content field
/// that others carry get an empty string in that column, restored as absent
/// on read.
pub fn write_segment(
    path: &Path,
    records: &[EnrichedRecord],
    enrichment: Option<EnrichmentMode>,
) -> Result<SegmentMeta, SegmentError> {
    if records.is_empty() {
        return Err(SegmentError::EmptyBatch);
    }
    let n = records.len() as u32;

    let mut blocks: Vec<(ColumnMeta, Vec<u8>)> = Vec::new();
    let mut push = |name: &str,
                    ty: ColumnType,
                    enc: ColumnEncoding,
                    elems: u32,
                    stats: Option<(i64, i64)>,
                    bytes: Vec<u8>| {
        blocks.push((
            ColumnMeta {
                name: name.to_string(),
                ty,
                encoding: enc,
                offset: 0,
                length: bytes.len() as u64,
                elems,
                crc32: crc32fast::hash(&bytes),
                stats,
            },
            bytes,
        ));
    };

    let timestamps: Vec<i64> = records.iter().map(|r| r.base.timestamp).collect();
    let ts_stats = (
        *timestamps.iter().min().unwrap(),
        *timestamps.iter().max().unwrap(),
    );
    push(
        "timestamp",
        ColumnType::I64,
        ColumnEncoding::Plain,
        n,
        Some(ts_stats),
        encoding::encode_i64_plain(&timestamps),
    );

    let status: Vec<&str> = records.iter().map(|r| r.base.status.as_str()).collect();
    push(
        "status",
        ColumnType::Str,
        ColumnEncoding::Dictionary,
        n,
        None,
        encoding::encode_str_dict(&status),
    );
    let event_type: Vec<&str> = records.iter().map(|r| r.base.event_type.as_str()).collect();
    push(
        "event_type",
        ColumnType::Str,
        ColumnEncoding::Dictionary,
        n,
        None,
        encoding::encode_str_dict(&event_type),
    );

    let field_names: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.base.contents.keys().map(String::as_str))
        .collect();
    for field in field_names {
        let values: Vec<&str> = records
            .iter()
            .map(|r| r.base.contents.get(field).map_or("", String::as_str))
            .collect();
        push(
            field,
            ColumnType::Str,
            ColumnEncoding::Plain,
            n,
            None,
            encoding::encode_str_plain(&values),
        );
    }

    let mut engine_versions: Vec<VersionTag> = Vec::new();
    let mut match_bitmap = None;
    if let Some(mode) = enrichment {
        let version_strings: Vec<String> = records
            .iter()
            .map(|r| {
                if !engine_versions.contains(&r.engine_version) {
                    engine_versions.push(r.engine_version.clone());
                }
                r.engine_version.to_string()
            })
            .collect();
        push(
            "engine_version",
            ColumnType::Str,
            ColumnEncoding::RunLength,
            n,
            None,
            encoding::encode_str_rle(&version_strings),
        );

        let max_matched = records
            .iter()
            .flat_map(|r| r.matched_rule_ids().last().copied())
            .max()
            .unwrap_or(0);
        match mode {
            EnrichmentMode::SparseList => {
                let lens: Vec<u32> = records
                    .iter()
                    .map(|r| r.matched_rule_ids().len() as u32)
                    .collect();
                let vals: Vec<u32> = records
                    .iter()
                    .flat_map(|r| r.matched_rule_ids().iter().copied())
                    .collect();
                let vals_len = vals.len() as u32;
                push(
                    "match.lens",
                    ColumnType::U32,
                    ColumnEncoding::RunLength,
                    n,
                    None,
                    encoding::encode_u32_rle(&lens),
                );
                push(
                    "match.vals",
                    ColumnType::U32,
                    ColumnEncoding::Plain,
                    vals_len,
                    None,
                    encoding::encode_u32_plain(&vals),
                );
                match_bitmap = Some(MatchBitmap::from_ids(
                    max_matched,
                    records.iter().flat_map(|r| r.matched_rule_ids().iter().copied()),
                ));
            }
            EnrichmentMode::DenseBoolean { width } => {
                if max_matched > width {
                    return Err(SegmentError::BadBatch(format!(
                        "matched rule id {max_matched} exceeds dense width {width}"
                    )));
                }
                let mut column: Vec<bool> = vec![false; records.len()];
                for k in 1..=width {
                    for (slot, record) in column.iter_mut().zip(records) {
                        *slot = record.matched(k);
                    }
                    push(
                        &format!("rule_{k}"),
                        ColumnType::Bool,
                        ColumnEncoding::RunLength,
                        n,
                        None,
                        encoding::encode_bool_rle(&column),
                    );
                }
                match_bitmap = Some(MatchBitmap::from_ids(
                    width.max(max_matched),
                    records.iter().flat_map(|r| r.matched_rule_ids().iter().copied()),
                ));
            }
        }
    }

    // Assign offsets, then write header, blocks, directory, footer.
    let mut offset = 6u64;
    for (meta, _) in blocks.iter_mut() {
        meta.offset = offset;
        offset += meta.length;
    }
    let meta = SegmentMeta {
        record_count: n,
        enrichment,
        engine_versions,
        match_bitmap,
        columns: blocks.iter().map(|(m, _)| m.clone()).collect(),
    };
    let directory = encode_directory(&meta);

    let tmp = path.with_extension("fseg.tmp");
    let mut file = std::io::BufWriter::new(File::create(&tmp).map_err(io_err(path))?);
    let mut write = |bytes: &[u8]| file.write_all(bytes).map_err(io_err(path));
    write(MAGIC)?;
    write(&FORMAT_VERSION.to_le_bytes())?;
    for (_, bytes) in &blocks {
        write(bytes)?;
    }
    write(&directory)?;
    write(&offset.to_le_bytes())?;
    write(&(directory.len() as u32).to_le_bytes())?;
    write(&crc32fast::hash(&directory).to_le_bytes())?;
    write(FOOTER_MAGIC)?;
    file.into_inner()
        .map_err(|e| io_err(path)(e.into_error()))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(meta)
}

fn encode_directory(meta: &SegmentMeta) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&meta.record_count.to_le_bytes());
    match meta.enrichment {
        None => out.push(0),
        Some(EnrichmentMode::SparseList) => out.push(1),
        Some(EnrichmentMode::DenseBoolean { width }) => {
            out.push(2);
            out.extend_from_slice(&width.to_le_bytes());
        }
    }
    out.extend_from_slice(&(meta.engine_versions.len() as u16).to_le_bytes());
    for v in &meta.engine_versions {
        let s = v.to_string();
        out.extend_from_slice(&(s.len() as u16).to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    }
    match &meta.match_bitmap {
        None => out.push(0),
        Some(bitmap) => {
            out.push(1);
            out.extend_from_slice(&bitmap.max_rule_id.to_le_bytes());
            out.extend_from_slice(&(bitmap.bits.len() as u32).to_le_bytes());
            out.extend_from_slice(&bitmap.bits);
        }
    }
    out.extend_from_slice(&(meta.columns.len() as u32).to_le_bytes());
    for c in &meta.columns {
        out.extend_from_slice(&(c.name.len() as u16).to_le_bytes());
        out.extend_from_slice(c.name.as_bytes());
        out.push(match c.ty {
            ColumnType::I64 => 1,
            ColumnType::U32 => 2,
            ColumnType::Str => 3,
            ColumnType::Bool => 4,
        });
        out.push(match c.encoding {
            ColumnEncoding::Plain => 1,
            ColumnEncoding::Dictionary => 2,
            ColumnEncoding::RunLength => 3,
        });
        out.extend_from_slice(&c.offset.to_le_bytes());
        out.extend_from_slice(&c.length.to_le_bytes());
        out.extend_from_slice(&c.elems.to_le_bytes());
        out.extend_from_slice(&c.crc32.to_le_bytes());
        match c.stats {
            None => out.push(0),
            Some((min, max)) => {
                out.push(1);
                out.extend_from_slice(&min.to_le_bytes());
                out.extend_from_slice(&max.to_le_bytes());
            }
        }
    }
    out
}

fn decode_directory(bytes: &[u8]) -> Result<SegmentMeta, CodecError> {
    let mut r = Reader::new(bytes);
    let record_count = r.u32()?;
    let enrichment = match r.u8()? {
        0 => None,
        1 => Some(EnrichmentMode::SparseList),
        2 => Some(EnrichmentMode::DenseBoolean { width: r.u32()? }),
        b => return Err(CodecError(format!("bad enrichment tag {b}"))),
    };
    let version_count = r.u16()? as usize;
    let mut engine_versions = Vec::with_capacity(version_count);
    for _ in 0..version_count {
        let len = r.u16()? as usize;
        let s = r.str(len)?;
        engine_versions.push(
            s.parse::<VersionTag>()
                .map_err(|e| CodecError(e.to_string()))?,
        );
    }
    let match_bitmap = match r.u8()? {
        0 => None,
        1 => {
            let max_rule_id = r.u32()?;
            let len = r.u32()? as usize;
            if len != max_rule_id.div_ceil(8) as usize {
                return Err(CodecError("bitmap length disagrees with max rule id".into()));
            }
            Some(MatchBitmap {
                max_rule_id,
                bits: r.bytes(len)?.to_vec(),
            })
        }
        b => return Err(CodecError(format!("bad bitmap tag {b}"))),
    };
    let column_count = r.u32()? as usize;
    let mut columns = Vec::with_capacity(column_count);
    for _ in 0..column_count {
        let name_len = r.u16()? as usize;
        let name = r.str(name_len)?.to_string();
        let ty = match r.u8()? {
            1 => ColumnType::I64,
            2 => ColumnType::U32,
            3 => ColumnType::Str,
            4 => ColumnType::Bool,
            b => return Err(CodecError(format!("bad column type {b}"))),
        };
        let encoding = match r.u8()? {
            1 => ColumnEncoding::Plain,
            2 => ColumnEncoding::Dictionary,
            3 => ColumnEncoding::RunLength,
            b => return Err(CodecError(format!("bad column encoding {b}"))),
        };
        let offset = r.u64()?;
        let length = r.u64()?;
        let elems = r.u32()?;
        let crc32 = r.u32()?;
        let stats = match r.u8()? {
            0 => None,
            1 => Some((r.i64()?, r.i64()?)),
            b => return Err(CodecError(format!("bad stats tag {b}"))),
        };
        if name != "match.vals" && elems != record_count {
            return Err(CodecError(format!(
                "column {name} stores {elems} elements for {record_count} records"
            )));
        }
        columns.push(ColumnMeta {
            name,
            ty,
            encoding,
            offset,
            length,
            elems,
            crc32,
            stats,
        });
    }
    r.finish()?;
    Ok(SegmentMeta {
        record_count,
        enrichment,
        engine_versions,
        match_bitmap,
        columns,
    })
}

/// Read handle over one segment. Opening reads and validates only the footer
/// and directory; column blocks are fetched on demand so pruned segments
/// cost a few kilobytes of IO.
pub struct SegmentReader {
    file: File,
    path: PathBuf,
    meta: SegmentMeta,
}

impl SegmentReader {
    pub fn open(path: &Path) -> Result<Self, SegmentError> {
        let file = File::open(path).map_err(io_err(path))?;
        let len = file.metadata().map_err(io_err(path))?.len();
        if len < 6 + FOOTER_LEN {
            return Err(corrupt(path, "file too small"));
        }
        let mut head = [0u8; 6];
        file.read_exact_at(&mut head, 0).map_err(io_err(path))?;
        if &head[..4] != MAGIC {
            return Err(corrupt(path, "bad magic"));
        }
        let format = u16::from_le_bytes(head[4..6].try_into().unwrap());
        if format != FORMAT_VERSION {
            return Err(corrupt(path, format!("unsupported format version {format}")));
        }
        let mut footer = [0u8; FOOTER_LEN as usize];
        file.read_exact_at(&mut footer, len - FOOTER_LEN)
            .map_err(io_err(path))?;
        if &footer[16..20] != FOOTER_MAGIC {
            return Err(corrupt(path, "bad footer magic"));
        }
        let dir_offset = u64::from_le_bytes(footer[0..8].try_into().unwrap());
        let dir_len = u32::from_le_bytes(footer[8..12].try_into().unwrap()) as u64;
        let dir_crc = u32::from_le_bytes(footer[12..16].try_into().unwrap());
        if dir_offset + dir_len + FOOTER_LEN != len {
            return Err(corrupt(path, "directory bounds disagree with file size"));
        }
        let mut directory = vec![0u8; dir_len as usize];
        file.read_exact_at(&mut directory, dir_offset)
            .map_err(io_err(path))?;
        if crc32fast::hash(&directory) != dir_crc {
            return Err(corrupt(path, "directory checksum mismatch"));
        }
        let meta = decode_directory(&directory).map_err(|e| corrupt(path, e.to_string()))?;
        for c in &meta.columns {
            if c.offset + c.length > dir_offset {
                return Err(corrupt(
                    path,
                    format!("column {} overlaps the directory", c.name),
                ));
            }
        }
        Ok(SegmentReader {
            file,
            path: path.to_path_buf(),
            meta,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn meta(&self) -> &SegmentMeta {
        &self.meta
    }

    pub fn record_count(&self) -> u32 {
        self.meta.record_count
    }

    fn column_meta(&self, name: &str) -> Result<&ColumnMeta, SegmentError> {
        self.meta.column(name).ok_or_else(|| SegmentError::UnknownColumn {
            path: self.path.clone(),
            name: name.to_string(),
        })
    }

    /// Reads a column's raw block and verifies its checksum.
    pub fn read_block(&self, name: &str) -> Result<(Vec<u8>, &ColumnMeta), SegmentError> {
        let col = self.column_meta(name)?;
        let mut block = vec![0u8; col.length as usize];
        self.file
            .read_exact_at(&mut block, col.offset)
            .map_err(io_err(&self.path))?;
        if crc32fast::hash(&block) != col.crc32 {
            return Err(corrupt(
                &self.path,
                format!("column {} checksum mismatch", col.name),
            ));
        }
        Ok((block, col))
    }

    /// Decodes a full column.
    pub fn read_column(&self, name: &str) -> Result<ColumnData, SegmentError> {
        let (block, col) = self.read_block(name)?;
        let n = col.elems as usize;
        let wrap = |e: CodecError| corrupt(&self.path, format!("column {name}: {e}"));
        let data = match (col.ty, col.encoding) {
            (ColumnType::I64, ColumnEncoding::Plain) => {
                let values = encoding::decode_i64_plain(&block, n).map_err(wrap)?;
                if let Some((min, max)) = col.stats {
                    if values.iter().any(|v| *v < min || *v > max) {
                        return Err(corrupt(
                            &self.path,
                            format!("column {name}: value outside recorded stats"),
                        ));
                    }
                }
                ColumnData::I64(values)
            }
            (ColumnType::U32, ColumnEncoding::Plain) => {
                ColumnData::U32(encoding::decode_u32_plain(&block, n).map_err(wrap)?)
            }
            (ColumnType::U32, ColumnEncoding::RunLength) => {
                ColumnData::U32(encoding::decode_u32_rle(&block, n).map_err(wrap)?)
            }
            (ColumnType::Str, ColumnEncoding::Plain) => {
                ColumnData::Str(encoding::decode_str_plain(&block, n).map_err(wrap)?)
            }
            (ColumnType::Str, ColumnEncoding::Dictionary) => {
                ColumnData::Str(encoding::decode_str_dict(&block, n).map_err(wrap)?)
            }
            (ColumnType::Str, ColumnEncoding::RunLength) => {
                ColumnData::Str(encoding::decode_str_rle(&block, n).map_err(wrap)?)
            }
            (ColumnType::Bool, ColumnEncoding::RunLength) => {
                ColumnData::Bool(encoding::decode_bool_rle(&block, n).map_err(wrap)?)
            }
            (ty, enc) => {
                return Err(corrupt(
                    &self.path,
                    format!("column {name} has unsupported layout {ty:?}/{enc:?}"),
                ));
            }
        };
        Ok(data)
    }

    /// Timestamps for the given sorted ordinals.
    pub fn read_timestamps_at(&self, ordinals: &[u32]) -> Result<Vec<i64>, SegmentError> {
        let (block, col) = self.read_block("timestamp")?;
        encoding::decode_i64_plain_rows(&block, col.elems as usize, ordinals)
            .map_err(|e| corrupt(&self.path, format!("column timestamp: {e}")))
    }

    /// String column values for the given sorted ordinals, decoding only
    /// what is asked for where the layout allows it.
    pub fn read_str_rows(&self, name: &str, ordinals: &[u32]) -> Result<Vec<String>, SegmentError> {
        let (block, col) = self.read_block(name)?;
        let n = col.elems as usize;
        let wrap = |e: CodecError| corrupt(&self.path, format!("column {name}: {e}"));
        match (col.ty, col.encoding) {
            (ColumnType::Str, ColumnEncoding::Plain) => {
                encoding::decode_str_plain_rows(&block, n, ordinals).map_err(wrap)
            }
            (ColumnType::Str, _) => {
                let all = match self.read_column(name)? {
                    ColumnData::Str(values) => values,
                    _ => unreachable!(),
                };
                ordinals
                    .iter()
                    .map(|&o| {
                        all.get(o as usize).cloned().ok_or_else(|| {
                            corrupt(&self.path, format!("ordinal {o} out of range"))
                        })
                    })
                    .collect()
            }
            _ => Err(corrupt(&self.path, format!("column {name} is not a string column"))),
        }
    }

    /// Materializes base records, all of them or the given sorted ordinals.
    pub fn read_records(&self, ordinals: Option<&[u32]>) -> Result<Vec<LogRecord>, SegmentError> {
        let all: Vec<u32>;
        let ordinals = match ordinals {
            Some(o) => o,
            None => {
                all = (0..self.meta.record_count).collect();
                &all
            }
        };
        let timestamps = self.read_timestamps_at(ordinals)?;
        let status = self.read_str_rows("status", ordinals)?;
        let event_type = self.read_str_rows("event_type", ordinals)?;
        let content_columns: Vec<&ColumnMeta> = self
            .meta
            .columns
            .iter()
            .filter(|c| crate::model::is_content_field(&c.name))
            .collect();
        let mut contents: Vec<(String, Vec<String>)> = Vec::with_capacity(content_columns.len());
        for col in content_columns {
            contents.push((col.name.clone(), self.read_str_rows(&col.name, ordinals)?));
        }
        let mut out = Vec::with_capacity(ordinals.len());
        for i in 0..ordinals.len() {
            let mut record_contents = std::collections::BTreeMap::new();
            for (name, values) in &contents {
                // Empty cells mark fields the record did not carry.
                if !values[i].is_empty() {
                    record_contents.insert(name.clone(), values[i].clone());
                }
            }
            out.push(LogRecord {
                timestamp: timestamps[i],
                status: status[i].clone(),
                event_type: event_type[i].clone(),
                contents: record_contents,
            });
        }
        Ok(out)
    }

    /// Ordinals of records whose match list holds `rule_id`, in row order.
    /// Reads only the match columns, never record text.
    pub fn rule_rows(&self, rule_id: u32) -> Result<Vec<u32>, SegmentError> {
        match self.meta.enrichment {
            None => Err(corrupt(&self.path, "segment has no enrichment columns")),
            Some(EnrichmentMode::SparseList) => {
                let lens = match self.read_column("match.lens")? {
                    ColumnData::U32(v) => v,
                    _ => unreachable!(),
                };
                let vals = match self.read_column("match.vals")? {
                    ColumnData::U32(v) => v,
                    _ => unreachable!(),
                };
                let mut out = Vec::new();
                let mut at = 0usize;
                for (row, len) in lens.iter().enumerate() {
                    let end = at + *len as usize;
                    if end > vals.len() {
                        return Err(corrupt(&self.path, "match.lens overruns match.vals"));
                    }
                    if vals[at..end].contains(&rule_id) {
                        out.push(row as u32);
                    }
                    at = end;
                }
                Ok(out)
            }
            Some(EnrichmentMode::DenseBoolean { width }) => {
                if rule_id == 0 || rule_id > width {
                    // The writer rejects matches outside 1..=width, so the
                    // segment provably holds none.
                    return Ok(Vec::new());
                }
                let (block, col) = self.read_block(&format!("rule_{rule_id}"))?;
                let (first, runs) = encoding::decode_bool_rle_runs(&block, col.elems as usize)
                    .map_err(|e| corrupt(&self.path, format!("rule_{rule_id}: {e}")))?;
                let mut out = Vec::new();
                let mut value = first;
                let mut at = 0u32;
                for run in runs {
                    if value {
                        out.extend(at..at + run);
                    }
                    at += run;
                    value = !value;
                }
                Ok(out)
            }
        }
    }

    /// How many records here matched `rule_id`. Cheaper than `rule_rows`
    /// where the layout allows it; never touches record text.
    pub fn rule_match_count(&self, rule_id: u32) -> Result<u64, SegmentError> {
        match self.meta.enrichment {
            None => Err(corrupt(&self.path, "segment has no enrichment columns")),
            Some(EnrichmentMode::SparseList) => {
                let vals = match self.read_column("match.vals")? {
                    ColumnData::U32(v) => v,
                    _ => unreachable!(),
                };
                // Each record lists a rule at most once, so occurrences in
                // the flattened value stream count records directly.
                Ok(vals.iter().filter(|&&v| v == rule_id).count() as u64)
            }
            Some(EnrichmentMode::DenseBoolean { width }) => {
                if rule_id == 0 || rule_id > width {
                    return Ok(0);
                }
                let (block, col) = self.read_block(&format!("rule_{rule_id}"))?;
                let (first, runs) = encoding::decode_bool_rle_runs(&block, col.elems as usize)
                    .map_err(|e| corrupt(&self.path, format!("rule_{rule_id}: {e}")))?;
                let mut total = 0u64;
                let mut value = first;
                for run in runs {
                    if value {
                        total += run as u64;
                    }
                    value = !value;
                }
                Ok(total)
            }
        }
    }

    /// Ordinals of records whose `field` value contains `needle`, by raw
    /// substring scan of the stored column.
    pub fn rows_with_term(&self, field: &str, needle: &str) -> Result<Vec<u32>, SegmentError> {
        let (block, col) = self.read_block(field)?;
        let finder = memchr::memmem::Finder::new(needle.as_bytes());
        match (col.ty, col.encoding) {
            (ColumnType::Str, ColumnEncoding::Plain) => {
                let plain = encoding::StrPlainBlock::new(&block, col.elems)
                    .map_err(|e| corrupt(&self.path, format!("column {field}: {e}")))?;
                let mut out = Vec::new();
                plain.rows_containing(&finder, &mut out);
                Ok(out)
            }
            (ColumnType::Str, _) => {
                let values = match self.read_column(field)? {
                    ColumnData::Str(v) => v,
                    _ => unreachable!(),
                };
                Ok(values
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| finder.find(v.as_bytes()).is_some())
                    .map(|(i, _)| i as u32)
                    .collect())
            }
            _ => Err(corrupt(&self.path, format!("column {field} is not a string column"))),
        }
    }

    /// Per-record matched rule id lists, reconstructed from either
    /// enrichment layout. Errors if the segment was written without
    /// enrichment.
    pub fn read_match_lists(&self) -> Result<Vec<Vec<u32>>, SegmentError> {
        match self.meta.enrichment {
            None => Err(corrupt(&self.path, "segment has no enrichment columns")),
            Some(EnrichmentMode::SparseList) => {
                let lens = match self.read_column("match.lens")? {
                    ColumnData::U32(v) => v,
                    _ => unreachable!(),
                };
                let vals = match self.read_column("match.vals")? {
                    ColumnData::U32(v) => v,
                    _ => unreachable!(),
                };
                let total: u64 = lens.iter().map(|&l| l as u64).sum();
                if total != vals.len() as u64 {
                    return Err(corrupt(
                        &self.path,
                        format!("match.lens sums to {total} but match.vals holds {}", vals.len()),
                    ));
                }
                let mut out = Vec::with_capacity(lens.len());
                let mut at = 0usize;
                for len in lens {
                    let list = vals[at..at + len as usize].to_vec();
                    if list.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(corrupt(&self.path, "match list not strictly increasing"));
                    }
                    at += len as usize;
                    out.push(list);
                }
                Ok(out)
            }
            Some(EnrichmentMode::DenseBoolean { width }) => {
                let mut out = vec![Vec::new(); self.meta.record_count as usize];
                for k in 1..=width {
                    let (block, col) = self.read_block(&format!("rule_{k}"))?;
                    let (first, runs) =
                        encoding::decode_bool_rle_runs(&block, col.elems as usize)
                            .map_err(|e| corrupt(&self.path, format!("rule_{k}: {e}")))?;
                    let mut value = first;
                    let mut at = 0usize;
                    for run in runs {
                        if value {
                            for slot in &mut out[at..at + run as usize] {
                                slot.push(k);
                            }
                        }
                        at += run as usize;
                        value = !value;
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Segment files under `dir`, sorted by name.
pub fn list_segments(dir: &Path) -> Result<Vec<PathBuf>, SegmentError> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(io_err(dir))?;
    for entry in entries {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some(SEGMENT_EXTENSION) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
