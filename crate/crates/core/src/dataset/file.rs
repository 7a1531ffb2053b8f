//! Dataset file.
//!
//! ```text
//! "SPSENSE1" | version u32 | header_len u32 | header (UTF-8 `key: value` lines)
//! | records | CRC-32 of records (u32)
//! ```
//!
//! Each record: label u8, scenario u8, signal flag u8, interferer flag u8,
//! then `delta_f theta_sig tau_sig theta_ici tau_ici` as f64 (absent
//! interferer values are NaN), then the frame as interleaved f32 `(re, im)`.
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use num_complex::Complex32;

use super::{Dataset, DatasetSpec, Label, ScenarioId, SensingExample};
use crate::baseband::{Calibration, IqFrame};
use crate::binio::{self, Reader};
use crate::config::{sim_from_kv, sim_to_kv, KvMap};
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"SPSENSE1";
pub const DATASET_VERSION: u32 = 1;

fn record_len(frame_len: usize) -> usize {
    4 + 5 * 8 + frame_len * 8
}

fn header_text(ds: &Dataset) -> String {
    let s = &ds.spec;
    let c = &ds.calibration;
    let mut lines = vec![
        ("condition".to_string(), s.condition.to_string()),
        ("role".into(), s.role.to_string()),
        ("size".into(), s.size.to_string()),
        ("base_seed".into(), s.base_seed.to_string()),
        ("scenario_mix".into(), s.scenario_mix.to_string()),
        ("offset_law".into(), s.offset_law.to_string()),
    ];
    lines.extend(sim_to_kv(&ds.sim));
    lines.extend([
        ("calibration.signal_gain".into(), c.signal_gain.to_string()),
        ("calibration.noise_variance".into(), c.noise_variance.to_string()),
        ("calibration.passband_bins".into(), c.passband_bins.to_string()),
        ("calibration.inband_fraction".into(), c.inband_fraction.to_string()),
        ("creation_seed".into(), s.base_seed.to_string()),
    ]);
    lines.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
}

fn encode(ds: &Dataset) -> Result<Vec<u8>> {
    if ds.examples.is_empty() {
        return Err(Error::Config("refusing to save an empty dataset".into()));
    }
    ds.spec.validate()?;
    if ds.examples.len() != ds.spec.size {
        return Err(Error::Precondition(format!(
            "dataset holds {} examples but its spec says {}",
            ds.examples.len(),
            ds.spec.size
        )));
    }
    let frame_len = ds.sim.frame_len;
    let header = header_text(ds);
    let mut out = Vec::with_capacity(16 + header.len() + ds.examples.len() * record_len(frame_len) + 4);
    out.extend_from_slice(DATASET_MAGIC);
    binio::put_u32(&mut out, DATASET_VERSION);
    binio::put_u32(&mut out, header.len() as u32);
    out.extend_from_slice(header.as_bytes());

    let records_start = out.len();
    for ex in &ds.examples {
        if ex.frame.len() != frame_len {
            return Err(Error::Precondition(format!(
                "example {} has {} samples, expected {frame_len}",
                ex.example_index,
                ex.frame.len()
            )));
        }
        out.push(ex.label as u8);
        out.push(ex.scenario.code());
        out.push(ex.sig_present as u8);
        out.push(ex.ici_present as u8);
        for v in [
            ex.delta_f,
            ex.theta_sig,
            ex.tau_sig,
            ex.theta_ici.unwrap_or(f64::NAN),
            ex.tau_ici.unwrap_or(f64::NAN),
        ] {
            binio::put_f64(&mut out, v);
        }
        for s in ex.frame.samples() {
            binio::put_f32(&mut out, s.re);
            binio::put_f32(&mut out, s.im);
        }
    }
    let crc = crc32fast::hash(&out[records_start..]);
    binio::put_u32(&mut out, crc);
    Ok(out)
}

fn decode(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != DATASET_MAGIC {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let header_len = r.u32()? as usize;
    let header = std::str::from_utf8(r.take(header_len)?)
        .map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let kv = KvMap::new(binio::parse_kv_lines(header)?);

    let records_start = r.position();
    if bytes.len() < records_start + 4 {
        return Err(Error::Format("file ends before the checksum".into()));
    }
    let records = &bytes[records_start..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    binio::check_crc(records, stored)?;

    let spec = DatasetSpec {
        condition: kv.parse("condition")?,
        role: kv.parse("role")?,
        size: kv.parse("size")?,
        base_seed: kv.parse("base_seed")?,
        scenario_mix: kv.parse("scenario_mix")?,
        offset_law: kv.parse("offset_law")?,
    };
    spec.validate()?;
    let sim = sim_from_kv(&kv)?;
    let calibration = Calibration {
        signal_gain: kv.parse("calibration.signal_gain")?,
        noise_variance: kv.parse("calibration.noise_variance")?,
        passband_bins: kv.parse("calibration.passband_bins")?,
        inband_fraction: kv.parse("calibration.inband_fraction")?,
    };

    let frame_len = sim.frame_len;
    if records.len() != spec.size * record_len(frame_len) {
        return Err(Error::Format(format!(
            "record block is {} bytes, expected {} examples of {} bytes",
            records.len(),
            spec.size,
            record_len(frame_len)
        )));
    }
    let mut r = Reader::new(records);
    let mut examples = Vec::with_capacity(spec.size);
    for index in 0..spec.size as u64 {
        let label = Label::from_code(r.u8()?)?;
        let scenario = ScenarioId::from_code(r.u8()?)?;
        let sig_present = r.u8()? != 0;
        let ici_present = r.u8()? != 0;
        let delta_f = r.f64()?;
        let theta_sig = r.f64()?;
        let tau_sig = r.f64()?;
        let theta_ici = r.f64()?;
        let tau_ici = r.f64()?;
        let mut samples = Vec::with_capacity(frame_len);
        for _ in 0..frame_len {
            let re = r.f32()?;
            let im = r.f32()?;
            samples.push(Complex32::new(re, im));
        }
        examples.push(SensingExample {
            frame: IqFrame::new(samples)?,
            label,
            scenario,
            delta_f,
            theta_sig,
            tau_sig,
            theta_ici: (!theta_ici.is_nan()).then_some(theta_ici),
            tau_ici: (!tau_ici.is_nan()).then_some(tau_ici),
            sig_present,
            ici_present,
            example_index: index,
        });
    }
    Ok(Dataset { spec, sim, calibration, examples })
}

/// Serialize a dataset to `path`.
pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(ds)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    decode(&fs::read(path)?)
}
