//! Plain-text tables and binary dumps for inspecting trials.
//!
//! * array table: `index x y` per antenna, offsets in meters;
//! * channel table: `station kind re im theta tau` per path;
//! * waveform dump: one ASCII header line, then little-endian `f64` pairs
//!   `(re, im)`, antenna-major;
//! * problem dump: sizes, weight and allowance, snapshots and dictionaries
//!   as text.
//!
//! Floats are written with Rust's shortest round-trip formatting.

use std::io::{BufRead, Write};

use disoul_core::arrays::ArrayGeometry;
use disoul_core::channel::{ChannelRealization, PathKind};
use disoul_core::geometry::Position;
use disoul_core::sparse::SparseProblem;
use disoul_core::waveform::ReceivedWaveform;
use disoul_core::C64;

use crate::Error;

const WAVEFORM_MAGIC: &str = "disoul-waveform-v1";

fn invalid(msg: impl Into<String>) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into()))
}

pub fn write_array_table<W: Write>(geom: &ArrayGeometry, mut out: W) -> Result<(), Error> {
    writeln!(out, "# wavelength {}", geom.wavelength())?;
    writeln!(out, "# index x y")?;
    for (i, p) in geom.offsets().iter().enumerate() {
        writeln!(out, "{i} {} {}", p.x, p.y)?;
    }
    Ok(())
}

pub fn read_array_table<R: BufRead>(input: R) -> Result<ArrayGeometry, Error> {
    let mut wavelength = None;
    let mut offsets = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("# wavelength") {
            wavelength = Some(
                rest.trim()
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("line {}: bad wavelength", n + 1)))?,
            );
            continue;
        }
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        let parse = |s: &str| s.parse::<f64>().map_err(|_| invalid(format!("line {}: bad number `{s}`", n + 1)));
        match f.as_slice() {
            [i, x, y] if i.parse::<usize>() == Ok(offsets.len()) => offsets.push(Position::new(parse(x)?, parse(y)?)),
            _ => return Err(invalid(format!("line {}: expected `index x y`", n + 1))),
        }
    }
    let wavelength = wavelength.ok_or_else(|| invalid("missing `# wavelength` line"))?;
    Ok(ArrayGeometry::new(offsets, wavelength)?)
}

pub fn write_channel_table<W: Write>(channel: &ChannelRealization, mut out: W) -> Result<(), Error> {
    writeln!(out, "# station kind re im theta_rad tau_s")?;
    for (l, paths) in channel.stations.iter().enumerate() {
        for p in paths {
            let kind = match p.kind {
                PathKind::Los => "los",
                PathKind::Nlos => "nlos",
            };
            writeln!(out, "{l} {kind} {} {} {} {}", p.gain.re, p.gain.im, p.aoa, p.toa)?;
        }
    }
    Ok(())
}

pub fn write_waveform<W: Write>(w: &ReceivedWaveform, mut out: W) -> Result<(), Error> {
    writeln!(
        out,
        "{WAVEFORM_MAGIC} antennas={} samples={} dt={} noise_psd={}",
        w.antennas.len(),
        w.num_samples(),
        w.dt,
        w.noise_psd
    )?;
    for samples in &w.antennas {
        for s in samples {
            out.write_all(&s.re.to_le_bytes())?;
            out.write_all(&s.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_waveform<R: BufRead>(mut input: R) -> Result<ReceivedWaveform, Error> {
    let mut header = String::new();
    input.read_line(&mut header)?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some(WAVEFORM_MAGIC) {
        return Err(invalid("not a waveform dump"));
    }
    let (mut antennas, mut samples, mut dt, mut psd) = (None, None, None, None);
    for f in fields {
        let (k, v) = f.split_once('=').ok_or_else(|| invalid(format!("bad header field `{f}`")))?;
        let bad = || invalid(format!("bad header value `{f}`"));
        match k {
            "antennas" => antennas = Some(v.parse::<usize>().map_err(|_| bad())?),
            "samples" => samples = Some(v.parse::<usize>().map_err(|_| bad())?),
            "dt" => dt = Some(v.parse::<f64>().map_err(|_| bad())?),
            "noise_psd" => psd = Some(v.parse::<f64>().map_err(|_| bad())?),
            _ => return Err(invalid(format!("unknown header field `{k}`"))),
        }
    }
    let missing = |k: &str| invalid(format!("header lacks `{k}`"));
    let antennas = antennas.ok_or_else(|| missing("antennas"))?;
    let samples = samples.ok_or_else(|| missing("samples"))?;
    let dt = dt.ok_or_else(|| missing("dt"))?;
    let noise_psd = psd.ok_or_else(|| missing("noise_psd"))?;
    let mut buf = [0u8; 16];
    let mut data = Vec::with_capacity(antennas);
    for _ in 0..antennas {
        let mut row = Vec::with_capacity(samples);
        for _ in 0..samples {
            input.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(buf[8..].try_into().expect("8 bytes"));
            row.push(C64::new(re, im));
        }
        data.push(row);
    }
    if input.read(&mut buf)? != 0 {
        return Err(invalid("trailing bytes after waveform samples"));
    }
    Ok(ReceivedWaveform {
        antennas: data,
        dt,
        noise_psd,
    })
}

pub fn write_problem<W: Write>(p: &SparseProblem, mut out: W) -> Result<(), Error> {
    let nl = p.num_stations();
    writeln!(
        out,
        "problem stations {nl} locations {} weight {} epsilon {}",
        p.num_locations(),
        p.weight,
        p.epsilon
    )?;
    let cplx = |v: &C64| format!("{} {}", v.re, v.im);
    for l in 0..nl {
        let z = &p.snapshots[l];
        writeln!(out, "station {l} antennas {} angles {}", z.len(), p.num_angles(l))?;
        writeln!(out, "snapshot {}", z.iter().map(cplx).collect::<Vec<_>>().join(" "))?;
        let d = &p.location_dicts[l];
        for q in 0..d.cols() {
            writeln!(out, "location {q} {}", d.column(q).iter().map(cplx).collect::<Vec<_>>().join(" "))?;
        }
        let b = &p.angle_dicts[l];
        for m in 0..b.cols() {
            writeln!(out, "angle {m} {}", b.column(m).iter().map(cplx).collect::<Vec<_>>().join(" "))?;
        }
    }
    Ok(())
}
