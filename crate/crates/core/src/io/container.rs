//! `CSRBM1` model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CSRBM1"                      6 bytes, last byte is the version
//! record count                  u32
//! per record:
//!   name length, name           u16, UTF-8 bytes
//!   rank                        u8
//!   dims                        rank × u64
//!   data                        product(dims) × f64, row-major
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::rbm::RbmModel;
use crate::transforms::{SparsifyingModel, TransformKind};
use crate::{Error, Result};

pub const MAGIC_PREFIX: &[u8; 5] = b"CSRBM";
pub const FORMAT_VERSION: u8 = b'1';

/// Everything recovery needs, plus the configuration it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub sparsifier: SparsifyingModel,
    pub rbm: RbmModel,
    pub coeff_variances: DVector<f64>,
    pub repr_error_variances: DVector<f64>,
    pub config_echo: String,
    /// Training support patterns (`J×B`), kept between the dictionary and
    /// RBM training steps.
    pub support_patterns: Option<DMatrix<f64>>,
}

/// One named array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayRecord {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl ArrayRecord {
    pub fn vector(name: &str, v: &DVector<f64>) -> Self {
        Self {
            name: name.into(),
            dims: vec![v.len()],
            data: v.as_slice().to_vec(),
        }
    }

    /// Row-major copy of `m`.
    pub fn matrix(name: &str, m: &DMatrix<f64>) -> Self {
        Self {
            name: name.into(),
            dims: vec![m.nrows(), m.ncols()],
            data: m.transpose().as_slice().to_vec(),
        }
    }

    fn as_vector(&self) -> Result<DVector<f64>> {
        if self.dims.len() != 1 {
            return Err(Error::BadContainer(format!("{} is not rank 1", self.name)));
        }
        Ok(DVector::from_column_slice(&self.data))
    }

    fn as_matrix(&self) -> Result<DMatrix<f64>> {
        if self.dims.len() != 2 {
            return Err(Error::BadContainer(format!("{} is not rank 2", self.name)));
        }
        Ok(DMatrix::from_row_slice(self.dims[0], self.dims[1], &self.data))
    }
}

pub fn write_records(out: &mut impl Write, records: &[ArrayRecord]) -> Result<()> {
    out.write_all(MAGIC_PREFIX)?;
    out.write_all(&[FORMAT_VERSION])?;
    let count = u32::try_from(records.len())
        .map_err(|_| Error::InvalidInput("too many records".into()))?;
    out.write_all(&count.to_le_bytes())?;
    for r in records {
        let expected: usize = r.dims.iter().product();
        if expected != r.data.len() {
            return Err(Error::InvalidDimension(format!(
                "record {} has {} values for dims {:?}",
                r.name,
                r.data.len(),
                r.dims
            )));
        }
        let name = r.name.as_bytes();
        let len = u16::try_from(name.len())
            .map_err(|_| Error::InvalidInput("record name too long".into()))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(name)?;
        let rank = u8::try_from(r.dims.len())
            .map_err(|_| Error::InvalidInput("rank too large".into()))?;
        out.write_all(&[rank])?;
        for &d in &r.dims {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &r.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::BadContainer(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn read_records(bytes: &[u8]) -> Result<Vec<ArrayRecord>> {
    if bytes.len() < 6 || &bytes[..5] != MAGIC_PREFIX {
        return Err(Error::BadContainer("bad magic".into()));
    }
    if bytes[5] != FORMAT_VERSION {
        return Err(Error::ContainerVersion {
            found: bytes[5] as char,
            expected: FORMAT_VERSION as char,
        });
    }
    let mut cur = Cursor { bytes, pos: 6 };
    let count = u32::from_le_bytes(cur.take(4, "record count")?.try_into().unwrap());
    let mut records = Vec::with_capacity(count.min(64) as usize);
    for _ in 0..count {
        let len = u16::from_le_bytes(cur.take(2, "name length")?.try_into().unwrap());
        let name = std::str::from_utf8(cur.take(len as usize, "name")?)
            .map_err(|_| Error::BadContainer("record name is not UTF-8".into()))?
            .to_string();
        let rank = cur.take(1, "rank")?[0];
        let mut dims = Vec::with_capacity(rank as usize);
        let mut total: usize = 1;
        for _ in 0..rank {
            let d = usize::try_from(cur.u64("dims")?)
                .map_err(|_| Error::BadContainer("dimension overflow".into()))?;
            total = total
                .checked_mul(d)
                .ok_or_else(|| Error::BadContainer("dimension overflow".into()))?;
            dims.push(d);
        }
        let byte_len = total
            .checked_mul(8)
            .ok_or_else(|| Error::BadContainer("dimension overflow".into()))?;
        let raw = cur.take(byte_len, &name)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(ArrayRecord { name, dims, data });
    }
    if cur.pos != bytes.len() {
        return Err(Error::BadContainer("trailing bytes after last record".into()));
    }
    Ok(records)
}

fn text_record(name: &str, text: &str) -> ArrayRecord {
    ArrayRecord {
        name: name.into(),
        dims: vec![text.len()],
        data: text.bytes().map(f64::from).collect(),
    }
}

fn record_text(r: &ArrayRecord) -> Result<String> {
    let bytes = r
        .data
        .iter()
        .map(|&v| {
            if v.fract() == 0.0 && (0.0..=255.0).contains(&v) {
                Ok(v as u8)
            } else {
                Err(Error::BadContainer(format!("{} holds a non-byte value", r.name)))
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    String::from_utf8(bytes).map_err(|_| Error::BadContainer(format!("{} is not UTF-8", r.name)))
}

fn bundle_records(bundle: &ModelBundle) -> Vec<ArrayRecord> {
    let (code, levels) = match bundle.sparsifier.kind() {
        TransformKind::Wavelet { levels } => (0.0, levels as f64),
        TransformKind::Dictionary => (1.0, 0.0),
    };
    let mut records = vec![
        ArrayRecord {
            name: "transform_kind".into(),
            dims: vec![2],
            data: vec![code, levels],
        },
        ArrayRecord::matrix("synthesis", bundle.sparsifier.synthesis()),
        ArrayRecord::matrix("rbm_weights", bundle.rbm.weights()),
        ArrayRecord::vector("rbm_visible_bias", bundle.rbm.visible_bias()),
        ArrayRecord::vector("rbm_hidden_bias", bundle.rbm.hidden_bias()),
        ArrayRecord::vector("coeff_variances", &bundle.coeff_variances),
        ArrayRecord::vector("repr_error_variances", &bundle.repr_error_variances),
        text_record("config_echo", &bundle.config_echo),
    ];
    if let Some(p) = &bundle.support_patterns {
        records.push(ArrayRecord::matrix("support_patterns", p));
    }
    records
}

fn bundle_from_records(records: Vec<ArrayRecord>) -> Result<ModelBundle> {
    let find = |name: &str| {
        records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::BadContainer(format!("missing record {name}")))
    };
    let kind_rec = find("transform_kind")?;
    let kind = match kind_rec.data.as_slice() {
        [c, _] if *c == 1.0 => TransformKind::Dictionary,
        [c, l] if *c == 0.0 && l.fract() == 0.0 && *l >= 0.0 => TransformKind::Wavelet {
            levels: *l as usize,
        },
        _ => return Err(Error::BadContainer("unknown transform kind".into())),
    };
    let sparsifier = SparsifyingModel::from_parts(kind, find("synthesis")?.as_matrix()?)
        .map_err(|e| Error::BadContainer(format!("synthesis: {e}")))?;
    let rbm = RbmModel::new(
        find("rbm_weights")?.as_matrix()?,
        find("rbm_visible_bias")?.as_vector()?,
        find("rbm_hidden_bias")?.as_vector()?,
    )
    .map_err(|e| Error::BadContainer(format!("rbm: {e}")))?;
    let coeff_variances = find("coeff_variances")?.as_vector()?;
    let repr_error_variances = find("repr_error_variances")?.as_vector()?;
    if rbm.n_visible() != sparsifier.n_atoms()
        || coeff_variances.len() != sparsifier.n_atoms()
        || repr_error_variances.len() != sparsifier.n_samples()
    {
        return Err(Error::BadContainer("inconsistent array dimensions".into()));
    }
    let config_echo = record_text(find("config_echo")?)?;
    let support_patterns = match records.iter().find(|r| r.name == "support_patterns") {
        Some(r) => Some(r.as_matrix()?),
        None => None,
    };
    Ok(ModelBundle {
        sparsifier,
        rbm,
        coeff_variances,
        repr_error_variances,
        config_echo,
        support_patterns,
    })
}

pub fn encode_model(bundle: &ModelBundle) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_records(&mut out, &bundle_records(bundle))?;
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelBundle> {
    bundle_from_records(read_records(bytes)?)
}

pub fn save_model(path: &Path, bundle: &ModelBundle) -> Result<()> {
    let bytes = encode_model(bundle)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    if !path.exists() {
        return Err(Error::MissingData(path.to_path_buf()));
    }
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_model(&bytes)
}

/// Multi-channel signal file written by `convert` and `reconstruct`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFile {
    pub fs: f64,
    pub names: Vec<String>,
    pub signals: Vec<Vec<f64>>,
}

pub fn encode_samples(file: &SampleFile) -> Result<Vec<u8>> {
    if file.names.len() != file.signals.len() {
        return Err(Error::InvalidDimension("one name per signal required".into()));
    }
    if file.names.iter().any(|n| n.contains('\n')) {
        return Err(Error::InvalidInput("signal names must be single-line".into()));
    }
    let mut records = vec![
        ArrayRecord {
            name: "fs".into(),
            dims: vec![1],
            data: vec![file.fs],
        },
        text_record("signal_names", &file.names.join("\n")),
    ];
    for (i, s) in file.signals.iter().enumerate() {
        records.push(ArrayRecord {
            name: format!("signal_{i}"),
            dims: vec![s.len()],
            data: s.clone(),
        });
    }
    let mut out = Vec::new();
    write_records(&mut out, &records)?;
    Ok(out)
}

pub fn decode_samples(bytes: &[u8]) -> Result<SampleFile> {
    let records = read_records(bytes)?;
    let fs = match records.iter().find(|r| r.name == "fs").map(|r| r.data.as_slice()) {
        Some([fs]) if *fs > 0.0 => *fs,
        _ => return Err(Error::BadContainer("missing or invalid fs".into())),
    };
    let names_rec = records
        .iter()
        .find(|r| r.name == "signal_names")
        .ok_or_else(|| Error::BadContainer("missing signal_names".into()))?;
    let joined = record_text(names_rec)?;
    let names: Vec<String> = if joined.is_empty() {
        Vec::new()
    } else {
        joined.split('\n').map(String::from).collect()
    };
    let signals = (0..names.len())
        .map(|i| {
            let key = format!("signal_{i}");
            records
                .iter()
                .find(|r| r.name == key)
                .map(|r| r.data.clone())
                .ok_or_else(|| Error::BadContainer(format!("missing {key}")))
        })
        .collect::<Result<_>>()?;
    Ok(SampleFile { fs, names, signals })
}

pub fn save_samples(path: &Path, file: &SampleFile) -> Result<()> {
    fs::write(path, encode_samples(file)?)?;
    Ok(())
}

pub fn load_samples(path: &Path) -> Result<SampleFile> {
    if !path.exists() {
        return Err(Error::MissingData(path.to_path_buf()));
    }
    decode_samples(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn random_bundle(seed: u64, wavelet: bool) -> ModelBundle {
        let mut r = rng::seeded(seed);
        let sparsifier = if wavelet {
            SparsifyingModel::wavelet(16, 2).unwrap()
        } else {
            let mut d = DMatrix::from_fn(8, 12, |_, _| r.random_range(-1.0..1.0));
            for mut c in d.column_iter_mut() {
                let n = c.norm();
                c /= n;
            }
            SparsifyingModel::dictionary(d).unwrap()
        };
        let j = sparsifier.n_atoms();
        let n = sparsifier.n_samples();
        let rbm = RbmModel::new(
            DMatrix::from_fn(j, 5, |_, _| r.random_range(-1.0..1.0)),
            DVector::from_fn(j, |_, _| r.random_range(-3.0..0.0)),
            DVector::from_fn(5, |_, _| r.random_range(-1.0..1.0)),
        )
        .unwrap();
        ModelBundle {
            sparsifier,
            rbm,
            coeff_variances: DVector::from_fn(j, |_, _| r.random::<f64>()),
            repr_error_variances: DVector::from_fn(n, |_, _| r.random::<f64>() * 1e-3),
            config_echo: "window_n = 16\ntransform = wavelet # µ\n".into(),
            support_patterns: Some(DMatrix::from_fn(j, 7, |_, _| r.random_range(0..2) as f64)),
        }
    }

    fn bits(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for (seed, wavelet) in [(1, true), (2, false)] {
            let b = random_bundle(seed, wavelet);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.csrbm");
            save_model(&path, &b).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(
                bits(back.sparsifier.synthesis().as_slice()),
                bits(b.sparsifier.synthesis().as_slice())
            );
            assert_eq!(bits(back.rbm.weights().as_slice()), bits(b.rbm.weights().as_slice()));
            assert_eq!(bits(back.coeff_variances.as_slice()), bits(b.coeff_variances.as_slice()));
            assert_eq!(back, b);
            // re-encoding the loaded bundle reproduces the file
            assert_eq!(encode_model(&back).unwrap(), std::fs::read(&path).unwrap());
        }
    }

    #[test]
    fn rejects_bad_magic_truncation_and_version() {
        let bytes = encode_model(&random_bundle(3, false)).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(Error::BadContainer(_))));

        let mut v2 = bytes.clone();
        v2[5] = b'2';
        assert!(matches!(
            decode_model(&v2),
            Err(Error::ContainerVersion { found: '2', expected: '1' })
        ));

        for cut in [3, 9, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode_model(&bytes[..cut]), Err(Error::BadContainer(_))), "cut {cut}");
        }
    }

    #[test]
    fn sample_file_round_trip() {
        let f = SampleFile {
            fs: 360.0,
            names: vec!["MLII".into(), "V5".into()],
            signals: vec![vec![0.1, -0.2, 0.3], vec![1.0, 2.0, 3.0]],
        };
        assert_eq!(decode_samples(&encode_samples(&f).unwrap()).unwrap(), f);
        assert!(matches!(
            decode_samples(&encode_model(&random_bundle(4, true)).unwrap()),
            Err(Error::BadContainer(_))
        ));
    }

    #[test]
    fn row_major_layout() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut out = Vec::new();
        write_records(&mut out, &[ArrayRecord::matrix("m", &m)]).unwrap();
        // magic 6 + count 4 + name len 2 + name 1 + rank 1 + dims 16
        let first = f64::from_le_bytes(out[30..38].try_into().unwrap());
        let second = f64::from_le_bytes(out[38..46].try_into().unwrap());
        assert_eq!((first, second), (1.0, 2.0));
        let back = read_records(&out).unwrap();
        assert_eq!(back[0].as_matrix().unwrap(), m);
    }
}
