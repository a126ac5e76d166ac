//! Sample pools, the HWS1 container format, charset filtering, and seeded
//! replica construction.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::rng::SplitMix64;
use crate::trajectory::{Point, Sample, Stroke};

pub const HWS_MAGIC: &[u8; 4] = b"HWS1";
pub const REPLICA_MAGIC: &str = "HWRL1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HwsError {
    #[error("bad magic at offset 0")]
    BadMagic,
    #[error("file truncated at offset {offset}")]
    TruncatedFile { offset: usize },
    #[error("label at offset {offset} is not valid UTF-8")]
    InvalidUtf8Label { offset: usize },
    #[error("empty label at offset {offset}")]
    EmptyLabel { offset: usize },
    #[error("sample at offset {offset} declares zero strokes")]
    ZeroStrokes { offset: usize },
    #[error("stroke at offset {offset} declares zero points")]
    ZeroPoints { offset: usize },
    #[error("{count} unexpected trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("label of sample {id} is {len} bytes, limit 65535")]
    LabelTooLong { id: u32, len: usize },
    #[error("sample {id} has {count} strokes, limit 65535")]
    TooManyStrokes { id: u32, count: usize },
    #[error("a stroke of sample {id} has {count} points, limit 65535")]
    TooManyPoints { id: u32, count: usize },
    #[error("pool has {0} samples, limit 2^32-1")]
    TooManySamples(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CharsetError {
    #[error("duplicate entry {label:?} on line {line}")]
    DuplicateEntry { label: String, line: usize },
    #[error("charset has no entries")]
    EmptyCharset,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplicaError {
    #[error("requested {requested} samples but pools hold only {available}")]
    PoolTooSmall { requested: usize, available: usize },
    #[error("size and replica count must be positive")]
    ZeroSize,
    #[error("source {0:?} appears in more than one pool")]
    DuplicateSource(String),
    #[error("pool {source_name:?} repeats sample id {id}")]
    DuplicateSampleId { source_name: String, id: u32 },
    #[error("replica file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("replica entry {source_name}:{id} not found in the loaded pools")]
    Unresolved { source_name: String, id: u32 },
    #[error("name {0:?} may not contain whitespace")]
    BadName(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePool {
    pub source_name: String,
    pub samples: Vec<Sample>,
}

impl SamplePool {
    pub fn new(source_name: impl Into<String>, samples: Vec<Sample>) -> Self {
        Self {
            source_name: source_name.into(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Sample> {
        // Parsed pools have ids equal to positions; fall back to a scan.
        match self.samples.get(id as usize) {
            Some(s) if s.id == id => Some(s),
            _ => self.samples.iter().find(|s| s.id == id),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], HwsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(HwsError::TruncatedFile {
                offset: self.bytes.len(),
            }),
        }
    }

    fn u16(&mut self) -> Result<u16, HwsError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn i16(&mut self) -> Result<i16, HwsError> {
        let b = self.take(2)?;
        Ok(i16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, HwsError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses an HWS1 file. Samples get ids `0..n` in file order and carry no
/// timing (every point has `t = 0`).
pub fn parse_hws(source_name: &str, bytes: &[u8]) -> Result<SamplePool, HwsError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != HWS_MAGIC {
        return Err(HwsError::BadMagic);
    }
    let count = cur.u32()?;
    // Each sample needs at least 8 bytes; don't trust the header for capacity.
    let mut samples = Vec::with_capacity((count as usize).min(bytes.len() / 8));
    for id in 0..count {
        let label_offset = cur.pos;
        let label_len = cur.u16()? as usize;
        let raw = cur.take(label_len)?;
        let label = std::str::from_utf8(raw).map_err(|_| HwsError::InvalidUtf8Label { offset: label_offset })?;
        if label.is_empty() {
            return Err(HwsError::EmptyLabel { offset: label_offset });
        }
        let strokes_offset = cur.pos;
        let stroke_count = cur.u16()?;
        if stroke_count == 0 {
            return Err(HwsError::ZeroStrokes { offset: strokes_offset });
        }
        let mut strokes = Vec::with_capacity(stroke_count as usize);
        for _ in 0..stroke_count {
            let points_offset = cur.pos;
            let point_count = cur.u16()?;
            if point_count == 0 {
                return Err(HwsError::ZeroPoints { offset: points_offset });
            }
            let mut points = Vec::with_capacity(point_count as usize);
            for _ in 0..point_count {
                let x = cur.i16()?;
                let y = cur.i16()?;
                points.push(Point::at(x, y));
            }
            strokes.push(Stroke::new(points).expect("non-empty untimed stroke"));
        }
        samples.push(Sample::new(id, label, strokes).expect("validated sample"));
    }
    if cur.pos != bytes.len() {
        return Err(HwsError::TrailingBytes {
            offset: cur.pos,
            count: bytes.len() - cur.pos,
        });
    }
    Ok(SamplePool::new(source_name, samples))
}

/// Serializes a pool as canonical HWS1 bytes. Ids and timestamps are not
/// stored.
pub fn write_hws(pool: &SamplePool) -> Result<Vec<u8>, HwsError> {
    let count = u32::try_from(pool.samples.len()).map_err(|_| HwsError::TooManySamples(pool.samples.len()))?;
    let mut out = Vec::with_capacity(8 + pool.samples.iter().map(|s| 6 + s.point_count() * 4).sum::<usize>());
    out.extend_from_slice(HWS_MAGIC);
    out.extend_from_slice(&count.to_be_bytes());
    for sample in &pool.samples {
        let label = sample.label().as_bytes();
        let label_len = u16::try_from(label.len()).map_err(|_| HwsError::LabelTooLong {
            id: sample.id,
            len: label.len(),
        })?;
        let strokes = sample.strokes();
        let stroke_count = u16::try_from(strokes.len()).map_err(|_| HwsError::TooManyStrokes {
            id: sample.id,
            count: strokes.len(),
        })?;
        out.extend_from_slice(&label_len.to_be_bytes());
        out.extend_from_slice(label);
        out.extend_from_slice(&stroke_count.to_be_bytes());
        for stroke in strokes {
            let n = u16::try_from(stroke.len()).map_err(|_| HwsError::TooManyPoints {
                id: sample.id,
                count: stroke.len(),
            })?;
            out.extend_from_slice(&n.to_be_bytes());
            for p in stroke.points() {
                out.extend_from_slice(&p.x.to_be_bytes());
                out.extend_from_slice(&p.y.to_be_bytes());
            }
        }
    }
    Ok(out)
}

/// A set of admissible labels. Membership is by whole label, so one entry
/// may span several codepoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Charset {
    pub name: String,
    members: BTreeSet<String>,
}

impl Charset {
    pub fn contains(&self, label: &str) -> bool {
        self.members.contains(label)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(String::as_str)
    }
}

/// Reads a charset: one label per line, surrounding whitespace trimmed,
/// blank lines and `#` comments skipped.
pub fn load_charset(name: &str, text: &str) -> Result<Charset, CharsetError> {
    let mut members = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let label = line.trim();
        if label.is_empty() || label.starts_with('#') {
            continue;
        }
        if !members.insert(label.to_owned()) {
            return Err(CharsetError::DuplicateEntry {
                label: label.to_owned(),
                line: i + 1,
            });
        }
    }
    if members.is_empty() {
        return Err(CharsetError::EmptyCharset);
    }
    Ok(Charset {
        name: name.to_owned(),
        members,
    })
}

pub fn filter_by_charset(pool: &SamplePool, charset: &Charset) -> SamplePool {
    SamplePool {
        source_name: pool.source_name.clone(),
        samples: pool
            .samples
            .iter()
            .filter(|s| charset.contains(s.label()))
            .cloned()
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReplicaEntry {
    pub source_name: String,
    pub sample_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestReplica {
    pub set_name: String,
    /// 1-based.
    pub replica_index: u32,
    pub seed: u64,
    pub entries: Vec<ReplicaEntry>,
}

impl TestReplica {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Looks every entry up in `pools`, in replica order.
    pub fn resolve<'p>(&self, pools: &'p [SamplePool]) -> Result<Vec<&'p Sample>, ReplicaError> {
        let by_name: HashMap<&str, &SamplePool> = pools.iter().map(|p| (p.source_name.as_str(), p)).collect();
        self.entries
            .iter()
            .map(|e| {
                by_name
                    .get(e.source_name.as_str())
                    .and_then(|p| p.get(e.sample_id))
                    .ok_or_else(|| ReplicaError::Unresolved {
                        source_name: e.source_name.clone(),
                        id: e.sample_id,
                    })
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{REPLICA_MAGIC} {} {} {}\n",
            self.set_name, self.replica_index, self.seed
        );
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}", e.source_name, e.sample_id);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ReplicaError> {
        let err = |line: usize, reason: &str| ReplicaError::Parse {
            line,
            reason: reason.to_owned(),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err(1, "missing header"))?;
        let fields: Vec<&str> = header.split(' ').collect();
        let [magic, set_name, index, seed] = fields[..] else {
            return Err(err(1, "header must have 4 space-separated fields"));
        };
        if magic != REPLICA_MAGIC {
            return Err(err(1, "bad magic"));
        }
        let replica_index = index.parse().map_err(|_| err(1, "bad replica index"))?;
        let seed = seed.parse().map_err(|_| err(1, "bad seed"))?;
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let (source, id) = line
                .split_once('\t')
                .ok_or_else(|| err(i + 2, "expected source<TAB>id"))?;
            let sample_id = id.parse().map_err(|_| err(i + 2, "bad sample id"))?;
            entries.push(ReplicaEntry {
                source_name: source.to_owned(),
                sample_id,
            });
        }
        Ok(Self {
            set_name: set_name.to_owned(),
            replica_index,
            seed,
            entries,
        })
    }
}

fn check_pools(pools: &[SamplePool]) -> Result<(), ReplicaError> {
    let mut names = HashSet::new();
    for pool in pools {
        if pool.source_name.is_empty() || pool.source_name.contains(['\t', '\n', '\r']) {
            return Err(ReplicaError::BadName(pool.source_name.clone()));
        }
        if !names.insert(pool.source_name.as_str()) {
            return Err(ReplicaError::DuplicateSource(pool.source_name.clone()));
        }
        let mut ids = HashSet::with_capacity(pool.len());
        for s in &pool.samples {
            if !ids.insert(s.id) {
                return Err(ReplicaError::DuplicateSampleId {
                    source_name: pool.source_name.clone(),
                    id: s.id,
                });
            }
        }
    }
    Ok(())
}

/// Draws `replica_count` test sets of `size` samples each, without
/// repetition inside a set, from the concatenation of `pools`.
///
/// Replica `i` (1-based) uses `SplitMix64::for_stream(seed, i)` and a
/// partial Fisher–Yates shuffle: for `k` in `0..size`, swap position `k`
/// with `k + below(n - k)`; the first `size` positions form the replica.
pub fn build_replicas(
    set_name: &str,
    pools: &[SamplePool],
    size: usize,
    replica_count: u32,
    seed: u64,
) -> Result<Vec<TestReplica>, ReplicaError> {
    if size == 0 || replica_count == 0 {
        return Err(ReplicaError::ZeroSize);
    }
    if set_name.is_empty() || set_name.contains(char::is_whitespace) {
        return Err(ReplicaError::BadName(set_name.to_owned()));
    }
    check_pools(pools)?;
    let universe: Vec<(&str, u32)> = pools
        .iter()
        .flat_map(|p| p.samples.iter().map(move |s| (p.source_name.as_str(), s.id)))
        .collect();
    if universe.len() < size {
        return Err(ReplicaError::PoolTooSmall {
            requested: size,
            available: universe.len(),
        });
    }
    Ok((1..=replica_count)
        .map(|index| {
            let mut rng = SplitMix64::for_stream(seed, u64::from(index));
            let mut order: Vec<usize> = (0..universe.len()).collect();
            let n = order.len();
            for k in 0..size {
                let j = k + rng.below((n - k) as u64) as usize;
                order.swap(k, j);
            }
            TestReplica {
                set_name: set_name.to_owned(),
                replica_index: index,
                seed,
                entries: order[..size]
                    .iter()
                    .map(|&g| ReplicaEntry {
                        source_name: universe[g].0.to_owned(),
                        sample_id: universe[g].1,
                    })
                    .collect(),
            }
        })
        .collect())
}
