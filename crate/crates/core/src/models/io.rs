use std::io::{Read, Write};

use super::sim::PathBatch;
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"FIMPB1";
const FIELDS: [&str; 4] = ["S", "nu", "B", "W"];

/// One row per `(path, time)`: `path,t,S,nu,B,W`, 17 significant digits.
pub fn write_csv<W: Write>(batch: &PathBatch, mut out: W) -> Result<()> {
    writeln!(out, "path,t,S,nu,B,W")?;
    for p in 0..batch.n_paths {
        let v = batch.path(p);
        for k in 0..v.times.len() {
            writeln!(
                out,
                "{p},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                v.times[k], v.s[k], v.nu[k], v.b[k], v.w[k]
            )?;
        }
    }
    Ok(())
}

/// Compact little-endian layout: magic, step count, path count, field
/// names, the time grid, then each field path by path.
pub fn write_binary<W: Write>(batch: &PathBatch, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(batch.n_steps() as u64).to_le_bytes())?;
    out.write_all(&(batch.n_paths as u64).to_le_bytes())?;
    out.write_all(&(FIELDS.len() as u32).to_le_bytes())?;
    for name in FIELDS {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
    }
    let put = |out: &mut W, v: &[f64]| -> Result<()> {
        for x in v {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    };
    put(&mut out, &batch.times)?;
    for field in FIELDS {
        for p in 0..batch.n_paths {
            let v = batch.path(p);
            let data = match field {
                "S" => v.s,
                "nu" => v.nu,
                "B" => v.b,
                _ => v.w,
            };
            put(&mut out, data)?;
        }
    }
    Ok(())
}

fn take<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

/// Reads the layout written by [`write_binary`]. Seed and scheme are not
/// stored and come back as `0` and `""`.
pub fn read_binary<R: Read>(mut input: R) -> Result<PathBatch> {
    if &take::<6, _>(&mut input)? != MAGIC {
        return Err(Error::Domain("not a path batch file".into()));
    }
    let m = u64::from_le_bytes(take(&mut input)?) as usize;
    let n_paths = u64::from_le_bytes(take(&mut input)?) as usize;
    let n_fields = u32::from_le_bytes(take(&mut input)?) as usize;
    let mut names = Vec::with_capacity(n_fields);
    for _ in 0..n_fields {
        let len = u32::from_le_bytes(take(&mut input)?) as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name)?;
        names.push(String::from_utf8(name).map_err(|_| Error::Domain("field name is not UTF-8".into()))?);
    }
    if names != FIELDS {
        return Err(Error::Domain(format!("unexpected field list {names:?}")));
    }
    let mut read_vec = |n: usize| -> Result<Vec<f64>> {
        (0..n).map(|_| Ok(f64::from_le_bytes(take(&mut input)?))).collect()
    };
    let len = m + 1;
    let times = read_vec(len)?;
    let s = read_vec(len * n_paths)?;
    let nu = read_vec(len * n_paths)?;
    let b_all = read_vec(len * n_paths)?;
    let w = read_vec(len * n_paths)?;
    Ok(PathBatch { times, n_paths, s, nu, w, b: b_all[..len].to_vec(), seed: 0, scheme: String::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{simulate, ModelSpec};

    #[test]
    fn binary_round_trip() {
        let batch = simulate(&ModelSpec::heston_default(80.0, 0.03), 8, 3, 4).unwrap();
        let mut buf = Vec::new();
        write_binary(&batch, &mut buf).unwrap();
        assert_eq!(&buf[..6], b"FIMPB1");
        let back = read_binary(&buf[..]).unwrap();
        assert_eq!(back.s, batch.s);
        assert_eq!(back.b, batch.b);
        assert_eq!(back.times, batch.times);
        assert!(read_binary(&b"NOTAPB"[..]).is_err());
    }

    #[test]
    fn csv_round_trips_numbers() {
        let batch = simulate(&ModelSpec::heston_default(80.0, 0.0), 4, 2, 4).unwrap();
        let mut buf = Vec::new();
        write_csv(&batch, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 5);
        let s: f64 = lines[3].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(s, batch.path(0).s[2]);
    }
}
