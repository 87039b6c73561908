//! CSV and binary formats for filters, PDPs, spectra, channels and SINR
//! records.
//!
//! Every CSV starts with a `# <schema> v<version>` line; further `#` lines
//! carry metadata and are skipped by readers.

use std::io::{BufRead, BufReader, Read, Write};

use serde::Deserialize;

use crate::channel::{ChannelSet, PowerDelayProfile};
use crate::dsp::C64;
use crate::error::{Error, Result};
use crate::harness::SinrRecord;
use crate::prototype::PrototypeFilter;

pub const FILTER_SCHEMA: &str = "# mmfbmc-filter v1";
pub const PDP_SCHEMA: &str = "# mmfbmc-pdp v1";
pub const SPECTRUM_SCHEMA: &str = "# mmfbmc-spectrum v1";
pub const SINR_SCHEMA: &str = "# mmfbmc-sinr v1";

/// Leading bytes of the binary channel format, after which come
/// `N, K, L` as little-endian u64 and the taps as interleaved f64 pairs.
pub const CHANNEL_MAGIC: &[u8; 8] = b"MMFBCH01";

/// Formats a dB value with four decimals.
pub fn fmt_db(v: f64) -> String {
    format!("{v:.4}")
}

/// Splits leading `#` lines off a CSV body; the first must equal `schema`.
fn split_header<R: Read>(r: R, schema: &str) -> Result<(Vec<String>, String)> {
    let mut comments = Vec::new();
    let mut body = String::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        if body.is_empty() && line.starts_with('#') {
            comments.push(line);
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    match comments.first() {
        Some(first) if first.trim() == schema => Ok((comments, body)),
        Some(first) => Err(Error::Parse(format!("expected '{schema}', found '{first}'"))),
        None => Err(Error::Parse(format!("missing schema line '{schema}'"))),
    }
}

fn meta_value(comments: &[String], key: &str) -> Result<usize> {
    let prefix = format!("# {key}=");
    comments
        .iter()
        .find_map(|c| c.strip_prefix(&prefix))
        .ok_or_else(|| Error::Parse(format!("missing '{key}' header")))?
        .trim()
        .parse()
        .map_err(|e| Error::Parse(format!("bad '{key}' header: {e}")))
}

#[derive(Deserialize)]
struct TapRow {
    #[allow(dead_code)]
    index: i64,
    real: f64,
    imag: f64,
}

/// Taps as `index,real,imag`, `index` being the lag from the center.
pub fn write_filter_csv<W: Write>(w: W, p: &PrototypeFilter) -> Result<()> {
    let mut w = w;
    writeln!(w, "{FILTER_SCHEMA}")?;
    writeln!(w, "# num_subcarriers={}", p.num_subcarriers())?;
    writeln!(w, "# overlap={}", p.overlap())?;
    writeln!(w, "# center_index={}", p.center_index())?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["index", "real", "imag"])?;
    for (lag, t) in (p.first_lag()..).zip(p.taps()) {
        csv.write_record([lag.to_string(), t.re.to_string(), t.im.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_filter_csv<R: Read>(r: R) -> Result<PrototypeFilter> {
    let (comments, body) = split_header(r, FILTER_SCHEMA)?;
    let m = meta_value(&comments, "num_subcarriers")?;
    let overlap = meta_value(&comments, "overlap")?;
    let center = meta_value(&comments, "center_index")?;
    let taps = csv::Reader::from_reader(body.as_bytes())
        .deserialize::<TapRow>()
        .map(|row| row.map(|t| C64::new(t.real, t.imag)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    PrototypeFilter::new(taps, m, overlap, center)
}

#[derive(Deserialize)]
struct PdpRow {
    #[allow(dead_code)]
    delay: usize,
    power: f64,
}

pub fn write_pdp_csv<W: Write>(w: W, pdp: &PowerDelayProfile) -> Result<()> {
    let mut w = w;
    writeln!(w, "{PDP_SCHEMA}")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["delay", "power"])?;
    for (l, p) in pdp.powers().iter().enumerate() {
        csv.write_record([l.to_string(), p.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads `delay,power` rows; the schema line is optional so hand-written
/// profiles load too. Delays must be `0, 1, 2, ...`.
pub fn read_pdp_csv<R: Read>(r: R) -> Result<PowerDelayProfile> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text)?;
    let body: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
        .map(|l| format!("{l}\n"))
        .collect();
    let rows = csv::Reader::from_reader(body.as_bytes())
        .deserialize::<PdpRow>()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    for (l, row) in rows.iter().enumerate() {
        if row.delay != l {
            return Err(Error::InvalidPdp(format!("row {l} has delay {}", row.delay)));
        }
    }
    PowerDelayProfile::new(rows.into_iter().map(|r| r.power).collect())
}

/// Named dB columns sampled on a common frequency grid.
pub fn write_spectrum_csv<W: Write>(w: W, grid_size: usize, columns: &[(&str, Vec<f64>)]) -> Result<()> {
    let mut w = w;
    writeln!(w, "{SPECTRUM_SCHEMA}")?;
    if let Some((name, c)) = columns.iter().find(|(_, c)| c.len() != grid_size) {
        return Err(Error::DimensionMismatch(format!("column '{name}' has {} of {grid_size} bins", c.len())));
    }
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["bin".to_string(), "normalized_frequency".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    csv.write_record(&header)?;
    for b in 0..grid_size {
        let mut row = vec![b.to_string(), (b as f64 / grid_size as f64).to_string()];
        row.extend(columns.iter().map(|(_, c)| fmt_db(c[b])));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

pub const SINR_COLUMNS: [&str; 10] =
    ["N", "K", "M", "detector", "variant", "snr_db", "sinr_db", "stderr_db", "saturation_db", "seed"];

/// SINR records, dB values with four decimals. `saturation_db` is empty
/// where it does not apply.
pub fn write_sinr_csv<W: Write>(w: W, records: &[SinrRecord]) -> Result<()> {
    let mut w = w;
    writeln!(w, "{SINR_SCHEMA}")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(SINR_COLUMNS)?;
    for r in records {
        csv.write_record([
            r.antennas.to_string(),
            r.users.to_string(),
            r.num_subcarriers.to_string(),
            r.detector.to_string(),
            r.waveform.to_string(),
            fmt_db(r.snr_db),
            fmt_db(r.sinr_db),
            fmt_db(r.stderr_db),
            r.saturation_db.map(fmt_db).unwrap_or_default(),
            r.seed.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// One parsed row of a SINR CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SinrRow {
    #[serde(rename = "N")]
    pub antennas: usize,
    #[serde(rename = "K")]
    pub users: usize,
    #[serde(rename = "M")]
    pub num_subcarriers: usize,
    pub detector: String,
    pub variant: String,
    pub snr_db: f64,
    pub sinr_db: f64,
    pub stderr_db: f64,
    pub saturation_db: Option<f64>,
    pub seed: u64,
}

pub fn read_sinr_csv<R: Read>(r: R) -> Result<Vec<SinrRow>> {
    let (_, body) = split_header(r, SINR_SCHEMA)?;
    Ok(csv::Reader::from_reader(body.as_bytes()).deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

pub fn write_channel_bin<W: Write>(mut w: W, ch: &ChannelSet) -> Result<()> {
    w.write_all(CHANNEL_MAGIC)?;
    for v in [ch.antennas(), ch.users(), ch.taps_per_link()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for t in ch.raw() {
        w.write_all(&t.re.to_le_bytes())?;
        w.write_all(&t.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_channel_bin<R: Read>(mut r: R) -> Result<ChannelSet> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHANNEL_MAGIC {
        return Err(Error::Parse("not a channel file".into()));
    }
    let mut word = [0u8; 8];
    let mut dims = [0usize; 3];
    for d in &mut dims {
        r.read_exact(&mut word)?;
        *d = usize::try_from(u64::from_le_bytes(word)).map_err(|_| Error::Parse("dimension overflow".into()))?;
    }
    let count = dims[0]
        .checked_mul(dims[1])
        .and_then(|x| x.checked_mul(dims[2]))
        .ok_or_else(|| Error::Parse("dimension overflow".into()))?;
    let mut taps = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        r.read_exact(&mut word)?;
        let re = f64::from_le_bytes(word);
        r.read_exact(&mut word)?;
        taps.push(C64::new(re, f64::from_le_bytes(word)));
    }
    ChannelSet::from_taps(dims[0], dims[1], dims[2], taps)
}
