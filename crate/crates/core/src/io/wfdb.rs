//! PhysioNet WFDB header parsing and format-212 signal decoding.
//!
//! Only the subset needed for MIT-BIH and European ST-T records is handled:
//! single-segment records whose signals share one format-212 `.dat` file.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// Gain assumed when a signal line omits it (or gives 0).
pub const DEFAULT_GAIN: f64 = 200.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub file_name: String,
    pub format: u32,
    /// adu per physical unit.
    pub gain: f64,
    pub baseline: i32,
    pub units: String,
    pub adc_resolution: u32,
    pub adc_zero: i32,
    pub initial_value: Option<i32>,
    pub checksum: Option<i32>,
    pub block_size: Option<u32>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordMeta {
    pub record_name: String,
    pub n_signals: usize,
    pub sampling_freq: f64,
    pub n_samples: Option<usize>,
    pub signals: Vec<SignalSpec>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn leading_number(field: &str) -> &str {
    let end = field
        .char_indices()
        .find(|(i, c)| !(c.is_ascii_digit() || (*i == 0 && (*c == '-' || *c == '+')) || *c == '.' || *c == 'e' || *c == 'E'))
        .map_or(field.len(), |(i, _)| i);
    &field[..end]
}

/// Parse the text of a `.hea` file.
pub fn parse_wfdb_header(text: &str) -> Result<RecordMeta> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (ln, record_line) = lines
        .next()
        .ok_or_else(|| parse_err(1, "header has no record line"))?;
    let fields: Vec<&str> = record_line.split_whitespace().collect();
    if fields.len() < 2 {
        return Err(parse_err(ln, "record line needs at least a name and signal count"));
    }
    let record_name = fields[0].split('/').next().unwrap_or(fields[0]).to_string();
    if record_name.is_empty() {
        return Err(parse_err(ln, "empty record name"));
    }
    let n_signals: usize = fields[1]
        .parse()
        .map_err(|_| parse_err(ln, format!("bad signal count {:?}", fields[1])))?;
    // "360/0.5(12)" carries counter frequency and base counter; keep the sampling rate
    let sampling_freq = match fields.get(2) {
        Some(f) => {
            let head = f.split('/').next().unwrap_or(f);
            head.parse::<f64>()
                .map_err(|_| parse_err(ln, format!("bad sampling frequency {f:?}")))?
        }
        None => 250.0,
    };
    if !(sampling_freq > 0.0) {
        return Err(parse_err(ln, "sampling frequency must be positive"));
    }
    let n_samples = match fields.get(3) {
        Some(f) => Some(
            f.parse::<usize>()
                .map_err(|_| parse_err(ln, format!("bad sample count {f:?}")))?,
        ),
        None => None,
    };

    let mut signals = Vec::with_capacity(n_signals);
    for _ in 0..n_signals {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(ln, format!("expected {n_signals} signal lines")))?;
        signals.push(parse_signal_line(ln, line)?);
    }
    Ok(RecordMeta {
        record_name,
        n_signals,
        sampling_freq,
        n_samples,
        signals,
    })
}

fn parse_signal_line(ln: usize, line: &str) -> Result<SignalSpec> {
    let mut parts = line.splitn(9, char::is_whitespace).filter(|s| !s.is_empty());
    let file_name = parts
        .next()
        .ok_or_else(|| parse_err(ln, "missing file name"))?
        .to_string();
    let fmt_field = parts.next().ok_or_else(|| parse_err(ln, "missing format"))?;
    let format: u32 = leading_number(fmt_field)
        .parse()
        .map_err(|_| parse_err(ln, format!("bad format {fmt_field:?}")))?;

    let rest: Vec<&str> = parts.collect();
    // rest: gain[(baseline)][/units] adc_res adc_zero init checksum block description...
    let mut gain = DEFAULT_GAIN;
    let mut baseline = None;
    let mut units = String::from("mV");
    if let Some(g) = rest.first() {
        let (num_part, unit_part) = match g.split_once('/') {
            Some((a, b)) => (a, Some(b)),
            None => (*g, None),
        };
        let (gain_str, base_str) = match num_part.split_once('(') {
            Some((a, b)) => (
                a,
                Some(b.strip_suffix(')').ok_or_else(|| parse_err(ln, "unclosed baseline"))?),
            ),
            None => (num_part, None),
        };
        let gv: f64 = gain_str
            .parse()
            .map_err(|_| parse_err(ln, format!("bad gain {gain_str:?}")))?;
        if gv < 0.0 {
            return Err(parse_err(ln, "gain must be positive"));
        }
        if gv > 0.0 {
            gain = gv;
        }
        if let Some(b) = base_str {
            baseline = Some(
                b.parse::<i32>()
                    .map_err(|_| parse_err(ln, format!("bad baseline {b:?}")))?,
            );
        }
        if let Some(u) = unit_part {
            units = u.to_string();
        }
    }
    let int_field = |idx: usize, name: &str| -> Result<Option<i64>> {
        match rest.get(idx) {
            Some(f) => f
                .parse::<i64>()
                .map(Some)
                .map_err(|_| parse_err(ln, format!("bad {name} {f:?}"))),
            None => Ok(None),
        }
    };
    let adc_resolution = int_field(1, "ADC resolution")?.unwrap_or(12) as u32;
    let adc_zero = int_field(2, "ADC zero")?.unwrap_or(0) as i32;
    let initial_value = int_field(3, "initial value")?.map(|v| v as i32);
    let checksum = int_field(4, "checksum")?.map(|v| v as i32);
    let block_size = int_field(5, "block size")?.map(|v| v as u32);
    let description = rest.get(6..).map(|d| d.join(" ")).unwrap_or_default();

    Ok(SignalSpec {
        file_name,
        format,
        gain,
        baseline: baseline.unwrap_or(adc_zero),
        units,
        adc_resolution,
        adc_zero,
        initial_value,
        checksum,
        block_size,
        description,
    })
}

fn sign_extend_12(v: u16) -> i16 {
    let v = (v & 0x0FFF) as i16;
    if v >= 2048 { v - 4096 } else { v }
}

/// Decode a format-212 byte stream into per-signal sample arrays (adu).
///
/// Each byte triple carries two 12-bit two's-complement samples; samples are
/// interleaved across signals.
pub fn decode_format212(bytes: &[u8], n_signals: usize) -> Result<Vec<Vec<i16>>> {
    if !bytes.len().is_multiple_of(3) {
        return Err(Error::InvalidInput(format!(
            "format 212 data length {} is not a multiple of 3",
            bytes.len()
        )));
    }
    if n_signals == 0 {
        return Err(Error::InvalidInput("need at least one signal".into()));
    }
    let mut stream = Vec::with_capacity(bytes.len() / 3 * 2);
    for t in bytes.chunks_exact(3) {
        let (b0, b1, b2) = (t[0] as u16, t[1] as u16, t[2] as u16);
        stream.push(sign_extend_12(((b1 & 0x0F) << 8) | b0));
        stream.push(sign_extend_12(((b1 & 0xF0) << 4) | b2));
    }
    let frames = stream.len() / n_signals;
    let mut out = vec![Vec::with_capacity(frames); n_signals];
    for frame in stream.chunks_exact(n_signals) {
        for (s, &v) in frame.iter().enumerate() {
            out[s].push(v);
        }
    }
    Ok(out)
}

/// Inverse of [`decode_format212`]. Samples must lie in `[-2048, 2047]`.
/// An odd total sample count is padded with a zero sample.
pub fn encode_format212(signals: &[Vec<i16>]) -> Result<Vec<u8>> {
    let frames = signals.first().map_or(0, Vec::len);
    if signals.iter().any(|s| s.len() != frames) {
        return Err(Error::InvalidDimension("signals differ in length".into()));
    }
    let mut stream = Vec::with_capacity(frames * signals.len() + 1);
    for f in 0..frames {
        for s in signals {
            let v = s[f];
            if !(-2048..=2047).contains(&v) {
                return Err(Error::InvalidInput(format!("sample {v} exceeds 12 bits")));
            }
            stream.push((v as u16) & 0x0FFF);
        }
    }
    if stream.len() % 2 == 1 {
        stream.push(0);
    }
    let mut bytes = Vec::with_capacity(stream.len() / 2 * 3);
    for pair in stream.chunks_exact(2) {
        let (s0, s1) = (pair[0], pair[1]);
        bytes.push((s0 & 0xFF) as u8);
        bytes.push((((s0 >> 8) & 0x0F) | ((s1 >> 4) & 0xF0)) as u8);
        bytes.push((s1 & 0xFF) as u8);
    }
    Ok(bytes)
}

/// `(adu − baseline) / gain` for each signal.
pub fn to_millivolts(meta: &RecordMeta, adu: &[Vec<i16>]) -> Result<Vec<Vec<f64>>> {
    if adu.len() != meta.signals.len() {
        return Err(Error::InvalidDimension(format!(
            "{} sample arrays for {} signals",
            adu.len(),
            meta.signals.len()
        )));
    }
    Ok(adu
        .iter()
        .zip(&meta.signals)
        .map(|(samples, spec)| {
            samples
                .iter()
                .map(|&v| (v as f64 - spec.baseline as f64) / spec.gain)
                .collect()
        })
        .collect())
}

/// A decoded record in physical units.
#[derive(Debug, Clone)]
pub struct Record {
    pub meta: RecordMeta,
    pub signals: Vec<Vec<f64>>,
}

/// Read `<dir>/<name>.hea` and its format-212 data file.
pub fn read_record(dir: &Path, name: &str) -> Result<Record> {
    let hea = dir.join(format!("{name}.hea"));
    if !hea.exists() {
        return Err(Error::MissingData(hea));
    }
    let meta = parse_wfdb_header(&fs::read_to_string(&hea)?)?;
    if meta.signals.is_empty() {
        return Err(Error::InvalidInput(format!("record {name} has no signals")));
    }
    if let Some(spec) = meta.signals.iter().find(|s| s.format != 212) {
        return Err(Error::UnsupportedFormat(spec.format));
    }
    let file = &meta.signals[0].file_name;
    if meta.signals.iter().any(|s| &s.file_name != file) {
        return Err(Error::InvalidInput(
            "signals spread over several data files are not supported".into(),
        ));
    }
    let dat = dir.join(file);
    if !dat.exists() {
        return Err(Error::MissingData(dat));
    }
    let mut bytes = fs::read(&dat)?;
    bytes.truncate(bytes.len() / 3 * 3);
    let mut adu = decode_format212(&bytes, meta.n_signals)?;
    if let Some(n) = meta.n_samples {
        for s in &mut adu {
            s.truncate(n);
        }
    }
    let signals = to_millivolts(&meta, &adu)?;
    Ok(Record { meta, signals })
}

/// Files that [`read_record`] needs, for up-front existence checks.
pub fn record_files(dir: &Path, name: &str) -> Result<Vec<std::path::PathBuf>> {
    let hea = dir.join(format!("{name}.hea"));
    if !hea.exists() {
        return Err(Error::MissingData(hea));
    }
    let meta = parse_wfdb_header(&fs::read_to_string(&hea)?)?;
    let mut files = vec![hea];
    for s in &meta.signals {
        let p = dir.join(&s.file_name);
        if !files.contains(&p) {
            files.push(p);
        }
    }
    Ok(files)
}
