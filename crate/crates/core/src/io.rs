//! Snapshot files and initial-data generators.
//!
//! Snapshot layout (little endian): a 64-byte header
//!
//! | bytes  | content                               |
//! |--------|---------------------------------------|
//! | 0..8   | magic `CQNLS1\0\0`                    |
//! | 8..12  | dim (u32)                             |
//! | 12..24 | points per axis, 3 x u32 (unused = 1) |
//! | 24..48 | box length per axis, 3 x f64          |
//! | 48..52 | space tag (u32, 0 physical, 1 spectral) |
//! | 52..56 | reserved                              |
//! | 56..64 | gamma (f64)                           |
//!
//! followed by interleaved `re, im` f64 samples in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::BLOW_UP_AMPLITUDE;
use crate::spectral::{Field, Grid, Space};

pub const MAGIC: &[u8; 8] = b"CQNLS1\0\0";
pub const HEADER_LEN: usize = 64;

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub field: Field,
    pub gamma: f64,
}

pub fn encode_snapshot(field: &Field, gamma: f64) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * grid.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    for a in 0..3 {
        let n = grid.n_per_axis().get(a).copied().unwrap_or(1);
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for a in 0..3 {
        let l = grid.box_length().get(a).copied().unwrap_or(0.0);
        out.extend_from_slice(&l.to_le_bytes());
    }
    let tag: u32 = match field.space() {
        Space::Physical => 0,
        Space::Spectral => 1,
    };
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&gamma.to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let dim = u32_at(bytes, 8) as usize;
    if !(1..=3).contains(&dim) {
        return Err(Error::Format(format!("dimension {dim}")));
    }
    let n: Vec<usize> = (0..dim).map(|a| u32_at(bytes, 12 + 4 * a) as usize).collect();
    let l: Vec<f64> = (0..dim).map(|a| f64_at(bytes, 24 + 8 * a)).collect();
    let space = match u32_at(bytes, 48) {
        0 => Space::Physical,
        1 => Space::Spectral,
        t => return Err(Error::Format(format!("space tag {t}"))),
    };
    let gamma = f64_at(bytes, 56);
    let grid = Grid::new(&n, &l).map_err(|e| Error::Format(e.to_string()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 16 * grid.len() {
        return Err(Error::Format(format!(
            "expected {} sample bytes, found {}",
            16 * grid.len(),
            body.len()
        )));
    }
    let values = body
        .chunks_exact(16)
        .map(|c| Complex64::new(f64_at(c, 0), f64_at(c, 8)))
        .collect();
    Ok(Snapshot {
        field: Field::from_values(&grid, values, space)?,
        gamma,
    })
}

pub fn write_snapshot(path: &Path, field: &Field, gamma: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_snapshot(field, gamma))?;
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_snapshot(&bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    GaussianBump,
    RandomBandLimited,
    ModeSuperposition,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataGenSpec {
    pub kind: DataKind,
    /// Sup norm of `u` for the random kinds, peak of `Re u` for the bump.
    pub amplitude: f64,
    /// Gaussian width.
    pub width: f64,
    /// Ratio of `Im u` to `Re u` in the bump (`Im u = ratio * a x_1/w e^{...}`).
    pub imag_ratio: f64,
    /// Annulus `[lo, hi]` in `|xi|` for the random kinds.
    pub band: [f64; 2],
    pub modes: usize,
    pub seed: u64,
    /// Spectral cutoff as a fraction of the Nyquist wavenumber.
    pub cutoff_fraction: f64,
    pub path: Option<PathBuf>,
}

impl Default for DataGenSpec {
    fn default() -> Self {
        DataGenSpec {
            kind: DataKind::GaussianBump,
            amplitude: 0.1,
            width: 2.0,
            imag_ratio: 0.5,
            band: [0.5, 1.5],
            modes: 8,
            seed: 0,
            cutoff_fraction: 1.0 / 3.0,
            path: None,
        }
    }
}

impl DataGenSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidParameter(s));
        if !self.amplitude.is_finite() || self.amplitude.abs() >= BLOW_UP_AMPLITUDE - 1.0 {
            return bad(format!(
                "amplitude {} must stay below {} (blow-up guard)",
                self.amplitude,
                BLOW_UP_AMPLITUDE - 1.0
            ));
        }
        if !(self.cutoff_fraction > 0.0 && self.cutoff_fraction <= 1.0) {
            return bad(format!("cutoff fraction {} outside (0, 1]", self.cutoff_fraction));
        }
        match self.kind {
            DataKind::GaussianBump if !(self.width > 0.0) => bad(format!("width {}", self.width)),
            DataKind::RandomBandLimited | DataKind::ModeSuperposition
                if !(self.band[0] >= 0.0 && self.band[1] > self.band[0]) =>
            {
                bad(format!("band {:?}", self.band))
            }
            DataKind::ModeSuperposition if self.modes == 0 => bad("modes must be >= 1".into()),
            DataKind::File if self.path.is_none() => bad("file data needs a path".into()),
            _ => Ok(()),
        }
    }
}

fn band_mask(grid: &Grid, lo: f64, hi: f64) -> Vec<bool> {
    grid.k2().iter().map(|&k| k >= lo * lo && k <= hi * hi).collect()
}

/// Zeroes spectral modes with `|xi| > cut` and the zero mode of `Im u`.
fn finish(u: Field, cut: f64) -> Field {
    let grid = u.grid().clone();
    let k2 = grid.k2();
    let re = u.map(|v| Complex64::new(v.re, 0.0)).into_spectral();
    let im = u.map(|v| Complex64::new(v.im, 0.0)).into_spectral();
    let c2 = cut * cut;
    let re = re.map_indexed(|i, v| if k2[i] <= c2 { v } else { Complex64::new(0.0, 0.0) });
    let im = im.map_indexed(|i, v| {
        if k2[i] <= c2 && i != 0 {
            v
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let (re, im) = (re.into_physical(), im.into_physical());
    re.zip_map(&im, |a, b| Complex64::new(a.re, b.re)).expect("same grid")
}

fn normalize_sup(u: Field, amplitude: f64) -> Field {
    let peak = u.max_abs();
    if peak == 0.0 {
        u
    } else {
        u.scale(amplitude / peak)
    }
}

/// Deterministic initial data with mean-zero imaginary part.
pub fn generate_data(spec: &DataGenSpec, grid: &Grid) -> Result<Field> {
    spec.validate()?;
    let cut = spec.cutoff_fraction * grid.nyquist();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let u = match spec.kind {
        DataKind::GaussianBump => {
            let (a, w, r) = (spec.amplitude, spec.width, spec.imag_ratio);
            let raw = Field::from_fn(grid, |x| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let e = (-r2 / (2.0 * w * w)).exp();
                Complex64::new(a * e, r * a * x[0] / w * e)
            });
            finish(raw, cut)
        }
        DataKind::RandomBandLimited => {
            let hi = spec.band[1].min(cut);
            let mask = band_mask(grid, spec.band[0], hi);
            let vals: Vec<Complex64> = mask
                .iter()
                .enumerate()
                .map(|(i, &on)| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    if on && i != 0 {
                        Complex64::new(re, im)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            let u = Field::from_values(grid, vals, Space::Spectral)?.into_physical();
            normalize_sup(u, spec.amplitude)
        }
        DataKind::ModeSuperposition => {
            let hi = spec.band[1].min(cut);
            let mask = band_mask(grid, spec.band[0], hi);
            let candidates: Vec<usize> = (1..grid.len()).filter(|&i| mask[i]).collect();
            if candidates.is_empty() {
                return Err(Error::InvalidParameter("no grid wavenumbers inside the band".into()));
            }
            let picks: Vec<(usize, f64)> = (0..spec.modes)
                .map(|_| {
                    let i = candidates[rng.gen_range(0..candidates.len())];
                    (i, rng.gen_range(0.0..std::f64::consts::TAU))
                })
                .collect();
            let dim = grid.dim();
            let ks: Vec<(Vec<f64>, f64)> = picks
                .iter()
                .map(|&(i, ph)| ((0..dim).map(|a| grid.k_component(a, i)).collect(), ph))
                .collect();
            let u = Field::from_fn(grid, |x| {
                let mut s = Complex64::new(0.0, 0.0);
                for (k, ph) in &ks {
                    let arg: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + ph;
                    s += Complex64::new(arg.cos(), 0.5 * arg.sin());
                }
                s
            });
            normalize_sup(u, spec.amplitude)
        }
        DataKind::File => {
            let path = spec.path.as_ref().expect("validated");
            let snap = read_snapshot(path)?;
            if !snap.field.grid().same_as(grid) {
                return Err(Error::GridMismatch);
            }
            let u = snap.field.to_physical();
            let mean = u.values().iter().map(|v| v.im).sum::<f64>() / grid.len() as f64;
            u.map(|v| Complex64::new(v.re, v.im - mean))
        }
    };
    if u.max_abs() + 1.0 > BLOW_UP_AMPLITUDE || !u.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "generated |psi| reaches {:.3}, beyond the blow-up guard",
            u.max_abs() + 1.0
        )));
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(&[32, 16], &[20.0, 12.0]).unwrap()
    }

    #[test]
    fn snapshot_round_trip_is_bitwise() {
        let g = grid();
        let spec = DataGenSpec {
            kind: DataKind::RandomBandLimited,
            amplitude: 0.3,
            ..Default::default()
        };
        let u = generate_data(&spec, &g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.bin");
        write_snapshot(&p, &u, 0.37).unwrap();
        let s = read_snapshot(&p).unwrap();
        assert_eq!(s.gamma.to_bits(), 0.37f64.to_bits());
        assert!(s.field.grid().same_as(&g));
        assert!(u.values().iter().zip(s.field.values()).all(|(a, b)| {
            a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()
        }));
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 16 * g.len());
        assert_eq!(&bytes[..8], MAGIC);

        let spec_field = u.to_spectral();
        let back = decode_snapshot(&encode_snapshot(&spec_field, 0.5)).unwrap();
        assert_eq!(back.field.space(), Space::Spectral);
    }

    #[test]
    fn corrupt_snapshots_are_rejected() {
        let u = Field::zeros(&grid(), Space::Physical);
        let mut b = encode_snapshot(&u, 0.5);
        assert!(decode_snapshot(&b[..40]).is_err());
        b.pop();
        assert!(matches!(decode_snapshot(&b), Err(Error::Format(_))));
        let mut b = encode_snapshot(&u, 0.5);
        b[0] = b'X';
        assert!(decode_snapshot(&b).is_err());
    }

    #[test]
    fn zero_amplitude_gives_zero() {
        for kind in [DataKind::GaussianBump, DataKind::RandomBandLimited, DataKind::ModeSuperposition] {
            let spec = DataGenSpec {
                kind,
                amplitude: 0.0,
                ..Default::default()
            };
            assert_eq!(generate_data(&spec, &grid()).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn same_seed_same_bits() {
        for kind in [DataKind::RandomBandLimited, DataKind::ModeSuperposition] {
            let spec = DataGenSpec {
                kind,
                seed: 11,
                ..Default::default()
            };
            let a = generate_data(&spec, &grid()).unwrap();
            let b = generate_data(&spec, &grid()).unwrap();
            assert!(a.values().iter().zip(b.values()).all(|(x, y)| x == y));
        }
    }

    #[test]
    fn band_is_respected_and_imag_mean_is_zero() {
        let g = Grid::cube(2, 64, 2.0 * std::f64::consts::PI * 4.0).unwrap();
        let spec = DataGenSpec {
            kind: DataKind::RandomBandLimited,
            amplitude: 0.2,
            band: [2.0, 8.0],
            cutoff_fraction: 1.0,
            seed: 3,
            ..Default::default()
        };
        let u = generate_data(&spec, &g).unwrap();
        let s = u.to_spectral();
        let k2 = g.k2();
        let total: f64 = s.values().iter().map(|v| v.norm_sqr()).sum();
        let outside: f64 = s
            .values()
            .iter()
            .zip(k2)
            .filter(|(_, &k)| k < 4.0 || k > 64.0)
            .map(|(v, _)| v.norm_sqr())
            .sum();
        assert!(outside <= 1e-14 * total, "{outside} {total}");
        for kind in [DataKind::GaussianBump, DataKind::RandomBandLimited, DataKind::ModeSuperposition] {
            let u = generate_data(&DataGenSpec { kind, ..Default::default() }, &g).unwrap();
            let mean: f64 = u.values().iter().map(|v| v.im).sum::<f64>() / g.len() as f64;
            assert!(mean.abs() < 1e-15, "{kind:?} {mean}");
        }
    }

    #[test]
    fn blow_up_guard_rejects_large_amplitude() {
        let spec = DataGenSpec {
            amplitude: 12.0,
            ..Default::default()
        };
        assert!(generate_data(&spec, &grid()).is_err());
    }

    #[test]
    fn file_kind_reads_snapshots() {
        let g = grid();
        let u = generate_data(&DataGenSpec::default(), &g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.bin");
        write_snapshot(&p, &u, 0.5).unwrap();
        let spec = DataGenSpec {
            kind: DataKind::File,
            path: Some(p),
            ..Default::default()
        };
        let v = generate_data(&spec, &g).unwrap();
        assert!((&v - &u).max_abs() < 1e-15);
        assert!(matches!(generate_data(&spec, &Grid::cube(2, 16, 10.0).unwrap()), Err(Error::GridMismatch)));
    }
}
