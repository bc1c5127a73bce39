//! Binary query-set files: magic `RUQS`, u32 version, u32 class count,
//! u64 on/off counts, then `(3×f32 position, f32 udf, u32 label)` records,
//! followed by the generation seed and the source id. Little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::generate::{QuerySample, QuerySet};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RUQS";
pub const QUERY_SET_VERSION: u32 = 1;

pub fn write_query_set(qs: &QuerySet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let mut header = Vec::with_capacity(28);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&QUERY_SET_VERSION.to_le_bytes());
    header.extend_from_slice(&qs.class_count.to_le_bytes());
    header.extend_from_slice(&(qs.on_surface.len() as u64).to_le_bytes());
    header.extend_from_slice(&(qs.off_surface.len() as u64).to_le_bytes());
    w.write_all(&header).map_err(io)?;
    let mut rec = [0u8; 20];
    for s in qs.iter() {
        for (a, c) in s.position.iter().enumerate() {
            rec[4 * a..4 * a + 4].copy_from_slice(&c.to_le_bytes());
        }
        rec[12..16].copy_from_slice(&s.udf.to_le_bytes());
        rec[16..20].copy_from_slice(&s.label.to_le_bytes());
        w.write_all(&rec).map_err(io)?;
    }
    w.write_all(&qs.seed.to_le_bytes()).map_err(io)?;
    w.write_all(&(qs.source.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(qs.source.as_bytes()).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_query_set(path: impl AsRef<Path>) -> Result<QuerySet> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let loc = path.display().to_string();
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut header = [0u8; 28];
    r.read_exact(&mut header).map_err(io)?;
    if &header[0..4] != MAGIC {
        return Err(Error::format(
            loc,
            format!("bad magic {:?}, expected {:?}", &header[0..4], MAGIC),
        ));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != QUERY_SET_VERSION {
        return Err(Error::format(
            loc,
            format!("query set version {version}, expected {QUERY_SET_VERSION}"),
        ));
    }
    let class_count = u32_at(8);
    let (n_on, n_off) = (u64_at(12) as usize, u64_at(20) as usize);
    let mut read_samples = |n: usize| -> Result<Vec<QuerySample>> {
        let mut out = Vec::with_capacity(n.min(1 << 24));
        let mut rec = [0u8; 20];
        for _ in 0..n {
            r.read_exact(&mut rec).map_err(io)?;
            let f = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().expect("4 bytes"));
            out.push(QuerySample {
                position: [f(0), f(4), f(8)],
                udf: f(12),
                label: u32::from_le_bytes(rec[16..20].try_into().expect("4 bytes")),
            });
        }
        Ok(out)
    };
    let on_surface = read_samples(n_on)?;
    let off_surface = read_samples(n_off)?;
    let mut tail = [0u8; 12];
    r.read_exact(&mut tail).map_err(io)?;
    let seed = u64::from_le_bytes(tail[0..8].try_into().expect("8 bytes"));
    let len = u32::from_le_bytes(tail[8..12].try_into().expect("4 bytes")) as usize;
    let mut source = vec![0u8; len];
    r.read_exact(&mut source).map_err(io)?;
    let source = String::from_utf8(source)
        .map_err(|_| Error::format(path.display().to_string(), "source id is not UTF-8"))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io)? != 0 {
        return Err(Error::format(path.display().to_string(), "trailing bytes after query set"));
    }
    let qs = QuerySet {
        on_surface,
        off_surface,
        class_count,
        source,
        seed,
    };
    qs.validate()?;
    Ok(qs)
}
