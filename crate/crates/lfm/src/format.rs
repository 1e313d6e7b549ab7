//! On-disk formats: the LFME embedding file and the class catalog JSON.
//!
//! An LFME file is little-endian throughout:
//!
//! ```text
//! magic  "LFME"           4 bytes
//! version u16 = 1
//! dim     u32
//! count   u64
//! count × { label u32, dim × f32 }
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use lfm_core::datamodel::{ClassCatalog, EmbeddingSet, SplitTag};
use lfm_core::linalg;

pub const MAGIC: [u8; 4] = *b"LFME";
pub const VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("not an LFME file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported LFME version {0}")]
    UnsupportedVersion(u16),
    #[error("file ends inside record {record} of {count}")]
    Truncated { record: u64, count: u64 },
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("label {0} does not fit in u32")]
    LabelTooLarge(usize),
    #[error("catalog json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] lfm_core::Error),
}

/// Writes `data` as LFME. Features are narrowed to f32.
pub fn write_embeddings<W: Write>(mut w: W, data: &EmbeddingSet) -> Result<(), FormatError> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let dim = u32::try_from(data.dim()).map_err(|_| {
        lfm_core::Error::InvalidParameter(format!("dimension {} does not fit in u32", data.dim()))
    })?;
    w.write_all(&dim.to_le_bytes())?;
    w.write_all(&(data.len() as u64).to_le_bytes())?;
    for (label, feature) in data.rows() {
        let label = u32::try_from(label).map_err(|_| FormatError::LabelTooLarge(label))?;
        w.write_all(&label.to_le_bytes())?;
        for &x in feature {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads an LFME stream. A row whose norm is off by more than the unit-norm
/// tolerance but still within f32 storage error is renormalised; rows that
/// were not unit norm to f32 precision are rejected.
pub fn read_embeddings<R: Read>(mut r: R, split: SplitTag) -> Result<EmbeddingSet, FormatError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let dim = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let count = u64::from_le_bytes(b8);

    let mut labels = Vec::new();
    let mut features = Vec::new();
    let mut record = vec![0u8; 4 + 4 * dim];
    let mut row = vec![0f64; dim];
    for i in 0..count {
        r.read_exact(&mut record).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => FormatError::Truncated { record: i, count },
            _ => FormatError::Io(e),
        })?;
        labels.push(u32::from_le_bytes(record[..4].try_into().unwrap()) as usize);
        for (x, chunk) in row.iter_mut().zip(record[4..].chunks_exact(4)) {
            *x = f64::from(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        let norm = linalg::norm(&row);
        let off = (norm - 1.0).abs();
        if off > linalg::UNIT_NORM_TOL && off <= 1e-5 {
            features.extend(row.iter().map(|x| x / norm));
        } else {
            features.extend_from_slice(&row);
        }
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(FormatError::TrailingBytes(rest.len()));
    }
    Ok(EmbeddingSet::new(dim, labels, features, split)?)
}

pub fn save_embeddings(path: &Path, data: &EmbeddingSet) -> Result<(), FormatError> {
    write_embeddings(BufWriter::new(File::create(path)?), data)
}

pub fn load_embeddings(path: &Path, split: SplitTag) -> Result<EmbeddingSet, FormatError> {
    read_embeddings(BufReader::new(File::open(path)?), split)
}

pub fn catalog_to_json(catalog: &ClassCatalog) -> Result<String, FormatError> {
    Ok(serde_json::to_string_pretty(catalog)?)
}

pub fn catalog_from_json(text: &str) -> Result<ClassCatalog, FormatError> {
    let catalog: ClassCatalog = serde_json::from_str(text)?;
    catalog.validate()?;
    Ok(catalog)
}

pub fn save_catalog(path: &Path, catalog: &ClassCatalog) -> Result<(), FormatError> {
    let mut text = catalog_to_json(catalog)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_catalog(path: &Path) -> Result<ClassCatalog, FormatError> {
    catalog_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingSet {
        let s = 0.5f64.sqrt();
        EmbeddingSet::new(
            2,
            vec![0, 1, 1],
            vec![1.0, 0.0, s, s, 0.0, -1.0],
            SplitTag::Train,
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &sample()).unwrap();
        assert_eq!(&buf[..4], b"LFME");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..10], &[2, 0, 0, 0]);
        assert_eq!(&buf[10..18], &[3, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(buf.len(), 18 + 3 * (4 + 2 * 4));
        assert_eq!(&buf[18..22], &[0, 0, 0, 0]);
        assert_eq!(&buf[22..26], &1.0f32.to_le_bytes());
    }

    #[test]
    fn round_trip() {
        let data = sample();
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &data).unwrap();
        let back = read_embeddings(&buf[..], SplitTag::Train).unwrap();
        assert_eq!(back.labels(), data.labels());
        for (a, b) in back.features().iter().zip(data.features()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_corrupt_input() {
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &sample()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_embeddings(&bad[..], SplitTag::Train),
            Err(FormatError::BadMagic(_))
        ));
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(
            read_embeddings(&bad[..], SplitTag::Train),
            Err(FormatError::UnsupportedVersion(2))
        ));
        assert!(matches!(
            read_embeddings(&buf[..buf.len() - 1], SplitTag::Train),
            Err(FormatError::Truncated {
                record: 2,
                count: 3
            })
        ));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(
            read_embeddings(&long[..], SplitTag::Train),
            Err(FormatError::TrailingBytes(1))
        ));
    }

    #[test]
    fn rejects_non_unit_rows() {
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &sample()).unwrap();
        buf[22..26].copy_from_slice(&2.0f32.to_le_bytes());
        assert!(matches!(
            read_embeddings(&buf[..], SplitTag::Train),
            Err(FormatError::Core(lfm_core::Error::NotUnitNorm {
                row: 0,
                ..
            }))
        ));
    }

    #[test]
    fn catalog_rejects_unknown_keys() {
        let ok = r#"{"names":["a","b"],"counts":[3,1],"prompt_template":"a photo of a {CLASS}","text_features":[[1.0,0.0],[0.0,1.0]]}"#;
        let c = catalog_from_json(ok).unwrap();
        assert_eq!(c.counts, vec![3, 1]);
        assert_eq!(catalog_from_json(&catalog_to_json(&c).unwrap()).unwrap(), c);
        let extra = ok.replace("\"counts\"", "\"colour\":1,\"counts\"");
        assert!(catalog_from_json(&extra).is_err());
    }
}
