//! Record container shared by feature ("FEA1") and embedding ("EMB1")
//! archives: per record the utterance id, the speaker id (u32 LE length then
//! UTF-8 bytes), `T` and `D` as u32 LE, then `T x D` f32 LE row-major.

use std::path::Path;

use spkver_core::features::FeatureMatrix;

use crate::{read_file, write_atomic, Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"FEA1";
pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub utterance_id: String,
    pub speaker_id: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

/// One or more embeddings of an utterance: a single row for a full-utterance
/// embedding, one row per chunk otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub utterance_id: String,
    pub speaker_id: String,
    pub vectors: Vec<Vec<f64>>,
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    put_len(out, s.len(), "id length")?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_len(out: &mut Vec<u8>, n: usize, what: &str) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::format("archive", format!("{what} exceeds u32")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

pub fn encode(magic: &[u8; 4], records: &[Record]) -> Result<Vec<u8>> {
    let mut out = magic.to_vec();
    for r in records {
        if r.data.len() != r.rows * r.cols {
            return Err(Error::format("archive", format!("record {} has a bad shape", r.utterance_id)));
        }
        put_str(&mut out, &r.utterance_id)?;
        put_str(&mut out, &r.speaker_id)?;
        put_len(&mut out, r.rows, "row count")?;
        put_len(&mut out, r.cols, "column count")?;
        for v in &r.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Little-endian cursor over a byte buffer.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8], context: &'a str) -> Self {
        Self { buf, pos: 0, context }
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub(crate) fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::format(self.context, format!("truncated at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub(crate) fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.bytes(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::format(self.context, "id is not UTF-8"))
    }

    pub(crate) fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.bytes(4)?;
        if got != magic {
            return Err(Error::format(
                self.context,
                format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(got), String::from_utf8_lossy(magic)),
            ));
        }
        Ok(())
    }
}

pub fn decode(magic: &[u8; 4], buf: &[u8], context: &str) -> Result<Vec<Record>> {
    let mut r = Reader::new(buf, context);
    r.magic(magic)?;
    let mut records = Vec::new();
    while !r.at_end() {
        let utterance_id = r.string()?;
        let speaker_id = r.string()?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(4).is_some_and(|b| b <= buf.len()))
            .ok_or_else(|| Error::format(context, format!("record {utterance_id} is too large")))?;
        let data = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        records.push(Record { utterance_id, speaker_id, rows, cols, data });
    }
    Ok(records)
}

fn feature_record(f: &FeatureMatrix) -> Record {
    Record {
        utterance_id: f.utterance_id.clone(),
        speaker_id: f.speaker_id.clone(),
        rows: f.num_frames(),
        cols: spkver_core::features::FEAT_DIM,
        data: f.as_slice().iter().map(|&v| v as f32).collect(),
    }
}

pub fn encode_features(data: &[FeatureMatrix]) -> Result<Vec<u8>> {
    encode(FEATURE_MAGIC, &data.iter().map(feature_record).collect::<Vec<_>>())
}

pub fn decode_features(buf: &[u8], context: &str) -> Result<Vec<FeatureMatrix>> {
    decode(FEATURE_MAGIC, buf, context)?
        .into_iter()
        .map(|r| {
            if r.cols != spkver_core::features::FEAT_DIM {
                return Err(Error::format(
                    context,
                    format!("record {} has {} columns, expected {}", r.utterance_id, r.cols, spkver_core::features::FEAT_DIM),
                ));
            }
            let frames = r.data.iter().map(|&v| f64::from(v)).collect();
            FeatureMatrix::new(r.utterance_id.clone(), r.speaker_id, frames).map_err(|e| {
                Error::format(context, format!("record {}: {e}", r.utterance_id))
            })
        })
        .collect()
}

pub fn write_features(path: &Path, data: &[FeatureMatrix]) -> Result<()> {
    write_atomic(path, &encode_features(data)?)
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureMatrix>> {
    decode_features(&read_file(path)?, &path.display().to_string())
}

pub fn encode_embeddings(sets: &[EmbeddingSet]) -> Result<Vec<u8>> {
    let records = sets
        .iter()
        .map(|s| {
            let cols = s.vectors.first().map_or(0, Vec::len);
            if s.vectors.iter().any(|v| v.len() != cols) {
                return Err(Error::format("archive", format!("ragged embeddings for {}", s.utterance_id)));
            }
            Ok(Record {
                utterance_id: s.utterance_id.clone(),
                speaker_id: s.speaker_id.clone(),
                rows: s.vectors.len(),
                cols,
                data: s.vectors.iter().flatten().map(|&v| v as f32).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    encode(EMBEDDING_MAGIC, &records)
}

pub fn decode_embeddings(buf: &[u8], context: &str) -> Result<Vec<EmbeddingSet>> {
    Ok(decode(EMBEDDING_MAGIC, buf, context)?
        .into_iter()
        .map(|r| EmbeddingSet {
            vectors: r
                .data
                .chunks(r.cols.max(1))
                .take(r.rows)
                .map(|c| c.iter().map(|&v| f64::from(v)).collect())
                .collect(),
            utterance_id: r.utterance_id,
            speaker_id: r.speaker_id,
        })
        .collect())
}

pub fn write_embeddings(path: &Path, sets: &[EmbeddingSet]) -> Result<()> {
    write_atomic(path, &encode_embeddings(sets)?)
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingSet>> {
    decode_embeddings(&read_file(path)?, &path.display().to_string())
}
