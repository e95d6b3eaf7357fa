//! On-disk formats: trajectory files (text header + f64 binary
//! payload), complex volume files (f32-pair binary + text sidecar
//! header), waveform exports and delimited tables.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array3, ArrayD, IxDyn};
use num_complex::Complex64;

use crate::core::{traj_to_gradient, ScannerLimits, Trajectory};
use crate::{Error, Result};

const TRAJ_MAGIC: &str = "ktraj trajectory v1";
const VOL_MAGIC: &str = "ktraj volume v1";

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedFile { path: path.display().to_string(), reason: reason.into() }
}

fn fmt_f64(v: f64) -> String {
    // shortest round-trip representation keeps files byte-stable
    format!("{v}")
}

/// Writes a trajectory: line-oriented header terminated by `data`,
/// then `nfe * ns * nd` little-endian f64 in C order `[j, i, d]`.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{TRAJ_MAGIC}")?;
    writeln!(out, "nfe {}", traj.n_readout())?;
    writeln!(out, "ns {}", traj.n_shots())?;
    writeln!(out, "nd {}", traj.n_dims())?;
    writeln!(
        out,
        "fov_mm {}",
        traj.fov_mm.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" ")
    )?;
    writeln!(
        out,
        "matrix {}",
        traj.matrix_size.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
    )?;
    writeln!(out, "raster_s {}", fmt_f64(traj.raster_s))?;
    writeln!(out, "data")?;
    for v in traj.samples.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let bytes = fs::read(path)?;
    // split header from payload at the `data` line
    let mut offset = 0usize;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| malformed(path, "missing data marker"))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| malformed(path, "non-UTF8 header"))?
            .to_string();
        offset += nl + 1;
        if line == "data" {
            break;
        }
        lines.push(line);
        if lines.len() > 64 {
            return Err(malformed(path, "header too long"));
        }
    }
    if lines.first().map(String::as_str) != Some(TRAJ_MAGIC) {
        return Err(malformed(path, "not a trajectory file"));
    }
    let mut nfe = None;
    let mut ns = None;
    let mut nd = None;
    let mut fov = None;
    let mut matrix = None;
    let mut raster = None;
    for line in &lines[1..] {
        let (key, rest) = line
            .split_once(' ')
            .ok_or_else(|| malformed(path, format!("bad header line: {line}")))?;
        match key {
            "nfe" => nfe = Some(parse_usize(path, rest)?),
            "ns" => ns = Some(parse_usize(path, rest)?),
            "nd" => nd = Some(parse_usize(path, rest)?),
            "fov_mm" => fov = Some(parse_f64_list(path, rest)?),
            "matrix" => {
                matrix =
                    Some(rest.split(' ').map(|t| parse_usize(path, t)).collect::<Result<Vec<_>>>()?)
            }
            "raster_s" => raster = Some(parse_f64(path, rest)?),
            other => return Err(malformed(path, format!("unknown header key: {other}"))),
        }
    }
    let (nfe, ns, nd) = match (nfe, ns, nd) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(malformed(path, "missing nfe/ns/nd")),
    };
    let fov = fov.ok_or_else(|| malformed(path, "missing fov_mm"))?;
    let matrix = matrix.ok_or_else(|| malformed(path, "missing matrix"))?;
    let raster = raster.ok_or_else(|| malformed(path, "missing raster_s"))?;
    let need = nfe * ns * nd * 8;
    let payload = &bytes[offset..];
    if payload.len() != need {
        return Err(malformed(
            path,
            format!("payload is {} bytes, expected {need}", payload.len()),
        ));
    }
    let mut samples = Array3::zeros((nfe, ns, nd));
    for (k, v) in samples.iter_mut().enumerate() {
        let b: [u8; 8] = payload[k * 8..k * 8 + 8].try_into().expect("length checked");
        *v = f64::from_le_bytes(b);
        if !v.is_finite() {
            return Err(malformed(path, format!("non-finite sample at index {k}")));
        }
    }
    Trajectory::new(samples, fov, matrix, raster)
}

fn parse_usize(path: &Path, s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| malformed(path, format!("bad integer: {s}")))
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| malformed(path, format!("bad number: {s}")))
}

fn parse_f64_list(path: &Path, s: &str) -> Result<Vec<f64>> {
    s.split(' ').map(|t| parse_f64(path, t)).collect()
}

/// Writes a complex volume as `<base>.cplx` (little-endian f32
/// real/imag pairs, C order) plus the `<base>.hdr` sidecar.
pub fn write_volume(base: &Path, data: &ArrayD<Complex64>, spacing_mm: &[f64]) -> Result<()> {
    if spacing_mm.len() != data.ndim() {
        return Err(Error::ShapeMismatch("spacing vs volume dims".into()));
    }
    let mut hdr = Vec::new();
    writeln!(hdr, "{VOL_MAGIC}")?;
    writeln!(
        hdr,
        "dims {}",
        data.shape().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
    )?;
    writeln!(
        hdr,
        "spacing_mm {}",
        spacing_mm.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" ")
    )?;
    writeln!(hdr, "dtype complex64")?;
    writeln!(hdr, "order C")?;
    fs::write(base.with_extension("hdr"), hdr)?;
    let mut payload = Vec::with_capacity(data.len() * 8);
    for v in data.iter() {
        payload.extend_from_slice(&(v.re as f32).to_le_bytes());
        payload.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    fs::write(base.with_extension("cplx"), payload)?;
    Ok(())
}

pub fn read_volume(base: &Path) -> Result<(ArrayD<Complex64>, Vec<f64>)> {
    let hdr_path = base.with_extension("hdr");
    let hdr = fs::read_to_string(&hdr_path)?;
    let mut dims: Option<Vec<usize>> = None;
    let mut spacing: Option<Vec<f64>> = None;
    let mut lines = hdr.lines();
    if lines.next() != Some(VOL_MAGIC) {
        return Err(malformed(&hdr_path, "not a volume header"));
    }
    for line in lines {
        let (key, rest) = line
            .split_once(' ')
            .ok_or_else(|| malformed(&hdr_path, format!("bad header line: {line}")))?;
        match key {
            "dims" => {
                dims = Some(
                    rest.split(' ')
                        .map(|t| parse_usize(&hdr_path, t))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "spacing_mm" => spacing = Some(parse_f64_list(&hdr_path, rest)?),
            "dtype" => {
                if rest != "complex64" {
                    return Err(malformed(&hdr_path, format!("unsupported dtype: {rest}")));
                }
            }
            "order" => {
                if rest != "C" {
                    return Err(malformed(&hdr_path, format!("unsupported order: {rest}")));
                }
            }
            other => return Err(malformed(&hdr_path, format!("unknown header key: {other}"))),
        }
    }
    let dims = dims.ok_or_else(|| malformed(&hdr_path, "missing dims"))?;
    let spacing = spacing.ok_or_else(|| malformed(&hdr_path, "missing spacing_mm"))?;
    let data_path = base.with_extension("cplx");
    let mut payload = Vec::new();
    fs::File::open(&data_path)?.read_to_end(&mut payload)?;
    let n: usize = dims.iter().product();
    if payload.len() != n * 8 {
        return Err(malformed(
            &data_path,
            format!("payload is {} bytes, expected {}", payload.len(), n * 8),
        ));
    }
    let mut data = ArrayD::<Complex64>::zeros(IxDyn(&dims));
    for (k, v) in data.iter_mut().enumerate() {
        let re = f32::from_le_bytes(payload[k * 8..k * 8 + 4].try_into().expect("len"));
        let im = f32::from_le_bytes(payload[k * 8 + 4..k * 8 + 8].try_into().expect("len"));
        *v = Complex64::new(re as f64, im as f64);
    }
    Ok((data, spacing))
}

/// Per-shot gradient waveform files `waveform_shotNNN.tsv` with a
/// header row `time_s gx_mT_m gy_mT_m [gz_mT_m]`.
pub fn write_waveforms(dir: &Path, traj: &Trajectory, limits: &ScannerLimits) -> Result<()> {
    let g = traj_to_gradient(traj, limits)?;
    let nd = traj.n_dims();
    let axis_names = ["gx_mT_m", "gy_mT_m", "gz_mT_m"];
    for i in 0..traj.n_shots() {
        let mut out = String::new();
        out.push_str("time_s");
        for name in axis_names.iter().take(nd) {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        for j in 0..g.shape()[0] {
            out.push_str(&fmt_f64(j as f64 * traj.raster_s));
            for d in 0..nd {
                out.push('\t');
                out.push_str(&fmt_f64(g[[j, i, d]]));
            }
            out.push('\n');
        }
        fs::write(dir.join(format!("waveform_shot{i:03}.tsv")), out)?;
    }
    Ok(())
}

/// Writes a delimited table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join("\t"));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn sample_traj() -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = Array3::zeros((16, 3, 2));
        for v in s.iter_mut() {
            *v = (rng.gen::<f64>() - 0.5) * 6.0;
        }
        Trajectory::new(s, vec![220.0, 200.0], vec![64, 48], 4e-6).unwrap()
    }

    #[test]
    fn trajectory_roundtrip_is_byte_identical() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.ktr");
        let traj = sample_traj();
        write_trajectory(&path, &traj).unwrap();
        let first = fs::read(&path).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.samples, traj.samples);
        assert_eq!(back.fov_mm, traj.fov_mm);
        assert_eq!(back.matrix_size, traj.matrix_size);
        assert_eq!(back.raster_s, traj.raster_s);
        write_trajectory(&path, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn truncated_trajectory_is_malformed() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.ktr");
        let traj = sample_traj();
        write_trajectory(&path, &traj).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 5);
        fs::write(&path, bytes).unwrap();
        match read_trajectory(&path) {
            Err(Error::MalformedFile { .. }) => {}
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn volume_roundtrip() {
        let dir = tempdir().unwrap();
        let base = dir.path().join("vol");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut data = ArrayD::<Complex64>::zeros(IxDyn(&[6, 5]));
        for v in data.iter_mut() {
            // f32-representable values round-trip exactly
            *v = Complex64::new(
                (rng.gen::<f32>() - 0.5) as f64,
                (rng.gen::<f32>() - 0.5) as f64,
            );
        }
        write_volume(&base, &data, &[3.0, 4.0]).unwrap();
        let (back, spacing) = read_volume(&base).unwrap();
        assert_eq!(back, data);
        assert_eq!(spacing, vec![3.0, 4.0]);
        let cplx1 = fs::read(base.with_extension("cplx")).unwrap();
        let hdr1 = fs::read(base.with_extension("hdr")).unwrap();
        write_volume(&base, &back, &spacing).unwrap();
        assert_eq!(fs::read(base.with_extension("cplx")).unwrap(), cplx1);
        assert_eq!(fs::read(base.with_extension("hdr")).unwrap(), hdr1);
    }

    #[test]
    fn waveform_export_has_header_and_rows() {
        let dir = tempdir().unwrap();
        let traj = sample_traj();
        write_waveforms(dir.path(), &traj, &ScannerLimits::default()).unwrap();
        let text = fs::read_to_string(dir.path().join("waveform_shot000.tsv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "time_s\tgx_mT_m\tgy_mT_m");
        assert_eq!(lines.count(), traj.n_readout() - 1);
        assert!(dir.path().join("waveform_shot002.tsv").exists());
    }
}
