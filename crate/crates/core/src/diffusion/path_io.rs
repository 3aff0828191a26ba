//! Sample path files.
//!
//! Binary layout (little endian): the 5-byte magic `IMPL1`, then `t0: f64`,
//! `dt: f64`, `n: u64`, `seed: u64`, followed by `n` states as `f64`.
//!
//! CSV layout: header `t,x` and one row per state. A leading comment line
//! `# t0=<f64> dt=<f64> seed=<u64>` makes the CSV form round-trip exactly;
//! without it `dt` is inferred from the first two times and the seed is 0.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::simulate::SamplePath;
use crate::{Error, Result};

pub const PATH_MAGIC: &[u8; 5] = b"IMPL1";
const HEADER_LEN: usize = 5 + 8 + 8 + 8 + 8;

impl SamplePath {
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.values.len());
        out.extend_from_slice(PATH_MAGIC);
        out.extend_from_slice(&self.t0.to_le_bytes());
        out.extend_from_slice(&self.dt.to_le_bytes());
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..5] != PATH_MAGIC {
            return Err(Error::Format("not an IMPL1 sample path".into()));
        }
        let word = |off: usize| -> [u8; 8] { bytes[off..off + 8].try_into().expect("slice of length 8") };
        let t0 = f64::from_le_bytes(word(5));
        let dt = f64::from_le_bytes(word(13));
        let n = u64::from_le_bytes(word(21)) as usize;
        let seed = u64::from_le_bytes(word(29));
        let body = &bytes[HEADER_LEN..];
        if body.len() != 8 * n {
            return Err(Error::Format(format!("header announces {n} states but body holds {} bytes", body.len())));
        }
        let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
        SamplePath::new(t0, dt, values, seed)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# t0={} dt={} seed={}", self.t0, self.dt, self.seed)?;
        writeln!(w, "t,x")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.time(i), v)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut meta: Option<(f64, f64, u64)> = None;
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if meta.is_none() {
                    meta = parse_meta(comment);
                }
                continue;
            }
            if !saw_header {
                if line.replace(' ', "") != "t,x" {
                    return Err(Error::Format(format!("expected CSV header `t,x`, got `{line}`")));
                }
                saw_header = true;
                continue;
            }
            let mut cols = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Format(format!("line {}: missing column", lineno + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))
            };
            times.push(parse(cols.next())?);
            values.push(parse(cols.next())?);
        }
        let (t0, dt, seed) = match meta {
            Some(m) => m,
            None => {
                if times.len() < 2 {
                    return Err(Error::Format("cannot infer dt from fewer than two rows".into()));
                }
                (times[0], times[1] - times[0], 0)
            }
        };
        SamplePath::new(t0, dt, values, seed)
    }

    /// Write as binary, or as CSV when the extension is `.csv`.
    pub fn save(&self, path: &Path) -> Result<()> {
        if is_csv(path) {
            let f = BufWriter::new(fs::File::create(path)?);
            self.write_csv(f)
        } else {
            fs::write(path, self.to_binary())?;
            Ok(())
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        if is_csv(path) {
            Self::read_csv(fs::File::open(path)?)
        } else {
            Self::from_binary(&fs::read(path)?)
        }
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().map(|e| e.eq_ignore_ascii_case("csv")).unwrap_or(false)
}

fn parse_meta(comment: &str) -> Option<(f64, f64, u64)> {
    let mut t0 = None;
    let mut dt = None;
    let mut seed = None;
    for kv in comment.split_whitespace() {
        let (k, v) = kv.split_once('=')?;
        match k {
            "t0" => t0 = v.parse().ok(),
            "dt" => dt = v.parse().ok(),
            "seed" => seed = v.parse().ok(),
            _ => {}
        }
    }
    Some((t0?, dt?, seed?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(
            values in proptest::collection::vec(-1e6f64..1e6, 1..200),
            dt in 1e-6f64..1.0,
            t0 in -10.0f64..10.0,
            seed in any::<u64>(),
        ) {
            let p = SamplePath::new(t0, dt, values, seed).unwrap();
            prop_assert_eq!(SamplePath::from_binary(&p.to_binary()).unwrap(), p.clone());
            let mut buf = Vec::new();
            p.write_csv(&mut buf).unwrap();
            prop_assert_eq!(SamplePath::read_csv(&buf[..]).unwrap(), p);
        }
    }

    #[test]
    fn binary_header_layout() {
        let p = SamplePath::new(0.5, 0.25, vec![1.0, -2.0], 7).unwrap();
        let b = p.to_binary();
        assert_eq!(&b[..5], b"IMPL1");
        assert_eq!(b.len(), 37 + 16);
        assert_eq!(u64::from_le_bytes(b[21..29].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(b[45..53].try_into().unwrap()), -2.0);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(SamplePath::from_binary(b"NOPE").is_err());
        let mut b = SamplePath::new(0.0, 0.1, vec![1.0, 2.0], 0).unwrap().to_binary();
        b.pop();
        assert!(SamplePath::from_binary(&b).is_err());
        assert!(SamplePath::read_csv(&b"a,b\n1,2\n"[..]).is_err());
    }

    #[test]
    fn csv_without_meta_infers_dt() {
        let p = SamplePath::read_csv(&b"t,x\n0,1.5\n0.5,2\n1,2.5\n"[..]).unwrap();
        assert_eq!(p.dt, 0.5);
        assert_eq!(p.values, vec![1.5, 2.0, 2.5]);
    }
}
