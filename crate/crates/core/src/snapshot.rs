//! Versioned binary snapshot of kept parameter draws.
//!
//! Layout (little-endian): 8-byte magic, `u32` version, then `L`, `p`, `K`
//! and the draw count as `u64`, the four standardizer constants as `f64`, and
//! for each draw its sweep index followed by every parameter array.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, VaError};
use crate::gibbs::KeptDraw;
use crate::io::write_atomic;
use crate::model::{coef_dim, CategoricalModels, Loadings, ModelParams, ShrinkagePrecisions, Standardizer, N_CELLS};

const MAGIC: &[u8; 8] = b"VAFSNAP\0";
pub const VERSION: u32 = 1;

/// Kept draws and the standardizer they were fitted under.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub standardizer: Standardizer,
    /// `(sweep, params)` for each kept draw.
    pub draws: Vec<(u64, ModelParams)>,
}

impl Snapshot {
    pub fn from_kept(standardizer: Standardizer, kept: &[KeptDraw]) -> Self {
        Snapshot { standardizer, draws: kept.iter().map(|k| (k.sweep as u64, k.params.clone())).collect() }
    }
}

fn put_f64s(out: &mut Vec<u8>, vals: impl IntoIterator<Item = f64>) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(snap: &Snapshot) -> Result<Vec<u8>> {
    let first = snap.draws.first().map(|d| &d.1);
    let (l, p, k) = first.map_or((0, 0, 0), |m| (m.n_causes(), m.n_symptoms(), m.n_factors()));
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [l, p, k, snap.draws.len()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    let s = &snap.standardizer;
    put_f64s(&mut out, [s.age_mean, s.age_sd, s.sex_mean, s.sex_sd]);
    for (sweep, m) in &snap.draws {
        if (m.n_causes(), m.n_symptoms(), m.n_factors()) != (l, p, k) {
            return Err(VaError::Dimension("snapshot draws differ in shape".into()));
        }
        out.extend_from_slice(&sweep.to_le_bytes());
        put_f64s(&mut out, m.loadings.as_slice().iter().copied());
        put_f64s(&mut out, m.precisions.phi_b.iter().flatten().copied());
        put_f64s(&mut out, m.precisions.phi_lambda.iter().copied());
        put_f64s(&mut out, m.precisions.phi_c.iter().flatten().copied());
        put_f64s(&mut out, m.categorical.demog.iter().flatten().copied());
        put_f64s(&mut out, m.categorical.cause_prior.iter().copied());
        put_f64s(&mut out, m.categorical.concentration_demog);
        put_f64s(&mut out, m.categorical.concentration_cause.iter().copied());
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| VaError::Data("snapshot truncated".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn triples(&mut self, n: usize) -> Result<Vec<[f64; 3]>> {
        (0..n).map(|_| Ok([self.f64()?, self.f64()?, self.f64()?])).collect()
    }
}

pub fn decode(buf: &[u8]) -> Result<Snapshot> {
    let mut c = Cursor { buf, at: 0 };
    if c.take(8)? != MAGIC {
        return Err(VaError::Data("not a parameter snapshot".into()));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(VaError::Data(format!("unsupported snapshot version {version}")));
    }
    let [l, p, k, n] = [c.u64()?, c.u64()?, c.u64()?, c.u64()?].map(|v| v as usize);
    let standardizer = Standardizer { age_mean: c.f64()?, age_sd: c.f64()?, sex_mean: c.f64()?, sex_sd: c.f64()? };
    let per_draw = 8 * (1 + l * p * coef_dim(k) + 7 * p + l * (N_CELLS + 2) + N_CELLS);
    if n.checked_mul(per_draw).is_none_or(|total| total > buf.len()) {
        return Err(VaError::Data("snapshot truncated".into()));
    }
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        let sweep = c.u64()?;
        let mut loadings = Loadings::zeros(l, p, k);
        loadings.as_mut_slice().copy_from_slice(&c.f64s(l * p * coef_dim(k))?);
        let precisions =
            ShrinkagePrecisions { phi_b: c.triples(p)?, phi_lambda: c.f64s(p)?, phi_c: c.triples(p)? };
        let demog = (0..l)
            .map(|_| Ok([c.f64()?, c.f64()?, c.f64()?, c.f64()?]))
            .collect::<Result<Vec<_>>>()?;
        let cause_prior = c.f64s(l)?;
        let concentration_demog = [c.f64()?, c.f64()?, c.f64()?, c.f64()?];
        let concentration_cause = c.f64s(l)?;
        draws.push((
            sweep,
            ModelParams {
                loadings,
                precisions,
                categorical: CategoricalModels { demog, cause_prior, concentration_demog, concentration_cause },
            },
        ));
    }
    if c.at != buf.len() {
        return Err(VaError::Data("trailing bytes after snapshot".into()));
    }
    Ok(Snapshot { standardizer, draws })
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    write_atomic(path, &encode(snap)?)
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode(&buf)
}

/// Stream a snapshot to any writer.
pub fn write_to(mut w: impl Write, snap: &Snapshot) -> Result<()> {
    w.write_all(&encode(snap)?)?;
    Ok(())
}
