use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leakage::{Basis, Bit, ReceiverModel};

/// One click as the receiver recorded it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub detector: u8,
    pub basis: Basis,
    pub bit: Bit,
    pub time_ps: f64,
}

/// What is announced for a click: basis and (possibly rounded) time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublicRecord {
    pub basis: Basis,
    pub time_ps: f64,
}

/// Uniform background clicks mixed into a session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Background {
    /// Probability that an event is background rather than signal.
    pub fraction: f64,
    /// Background times are uniform on `[frame.0, frame.1)`.
    pub frame: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SessionOptions {
    pub background: Option<Background>,
}

/// RNG for event `index`: the seed picks the key, the index picks the stream.
pub fn event_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `n` clicks: basis uniform, bit from the receiver prior, time from the
/// detector assigned to that basis and bit.
pub fn simulate_session(rcv: &ReceiverModel, n: usize, seed: u64) -> Vec<EventRecord> {
    simulate_session_with(rcv, n, seed, &SessionOptions::default()).expect("default options are valid")
}

pub fn simulate_session_with(
    rcv: &ReceiverModel,
    n: usize,
    seed: u64,
    opts: &SessionOptions,
) -> Result<Vec<EventRecord>> {
    if let Some(bg) = opts.background {
        if !(0.0..=1.0).contains(&bg.fraction) {
            return Err(Error::InvalidArgument(format!(
                "background fraction must lie in [0, 1], got {}",
                bg.fraction
            )));
        }
        if !(bg.frame.0.is_finite() && bg.frame.1.is_finite() && bg.frame.0 < bg.frame.1) {
            return Err(Error::InvalidArgument(format!(
                "background frame must be a finite interval, got [{}, {})",
                bg.frame.0, bg.frame.1
            )));
        }
    }
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = event_rng(seed, i);
            let basis = if rng.random::<bool>() { Basis::B } else { Basis::A };
            let bit = if rng.random::<f64>() < rcv.prior() { Bit::Zero } else { Bit::One };
            let detector = rcv.detector_for(basis, bit);
            let time_ps = match opts.background {
                Some(bg) if rng.random::<f64>() < bg.fraction => rng.random_range(bg.frame.0..bg.frame.1),
                _ => rcv.detector(detector).sample_one(&mut rng),
            };
            EventRecord {
                detector,
                basis,
                bit,
                time_ps,
            }
        })
        .collect())
}

/// Clicks per detector id, indexed from 0.
pub fn detector_counts(events: &[EventRecord]) -> [u64; 4] {
    let mut counts = [0; 4];
    for e in events {
        counts[e.detector as usize - 1] += 1;
    }
    counts
}

/// Drops detector and bit; rounds times to the nearest multiple of
/// `resolution` when one is given (halves round away from zero).
pub fn publish(events: &[EventRecord], resolution: Option<f64>) -> Result<Vec<PublicRecord>> {
    if let Some(r) = resolution {
        check_resolution(r)?;
    }
    Ok(events
        .iter()
        .map(|e| PublicRecord {
            basis: e.basis,
            time_ps: match resolution {
                Some(r) => (e.time_ps / r).round() * r,
                None => e.time_ps,
            },
        })
        .collect())
}

pub(crate) fn check_resolution(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("resolution must be > 0, got {r}")))
    }
}

const EVENT_HEADER: [&str; 4] = ["detector", "basis", "bit", "time_ps"];
const PUBLIC_HEADER: [&str; 2] = ["basis", "time_ps"];

pub fn write_events<W: Write>(events: &[EventRecord], writer: W) -> Result<()> {
    write_rows(events, writer)
}

pub fn write_public<W: Write>(records: &[PublicRecord], writer: W) -> Result<()> {
    write_rows(records, writer)
}

/// Reads `detector,basis,bit,time_ps` rows; errors name the file line.
pub fn read_events<R: Read>(reader: R) -> Result<Vec<EventRecord>> {
    let rows: Vec<EventRecord> = read_rows(reader, &EVENT_HEADER)?;
    for (k, e) in rows.iter().enumerate() {
        if !(1..=4).contains(&e.detector) {
            return Err(Error::Parse {
                line: k + 2,
                message: format!("detector must be 1..4, got {}", e.detector),
            });
        }
    }
    Ok(rows)
}

/// Reads `basis,time_ps` rows; errors name the file line.
pub fn read_public<R: Read>(reader: R) -> Result<Vec<PublicRecord>> {
    read_rows(reader, &PUBLIC_HEADER)
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r).map_err(crate::estimation::csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

trait Timed {
    fn time_ps(&self) -> f64;
}

impl Timed for EventRecord {
    fn time_ps(&self) -> f64 {
        self.time_ps
    }
}

impl Timed for PublicRecord {
    fn time_ps(&self) -> f64 {
        self.time_ps
    }
}

fn read_rows<T: for<'de> Deserialize<'de> + Timed, R: Read>(reader: R, header: &[&str]) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let found: Vec<String> = rdr
        .headers()
        .map_err(crate::estimation::csv_error)?
        .iter()
        .map(str::to_owned)
        .collect();
    if found != header {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`, found `{}`", header.join(","), found.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<T>() {
        let row = rec.map_err(crate::estimation::csv_error)?;
        if !row.time_ps().is_finite() {
            return Err(Error::Parse {
                line: out.len() + 2,
                message: format!("non-finite time {}", row.time_ps()),
            });
        }
        out.push(row);
    }
    Ok(out)
}
