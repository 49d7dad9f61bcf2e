//! Dense Gaussian measurement matrices and measurements y = A x + w.
//!
//! Memory is m·n·8 bytes; the matrix is held in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::par;
use crate::rng::{fill_normal, normals, stream, Consumer};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"DAMPMAT1";
const COL_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Raw N(0, 1) entries.
    None,
    /// Every column scaled to unit ℓ₂ norm.
    #[default]
    Columns,
    /// Entries N(0, 1/m).
    InvSqrtM,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementMatrix {
    data: Vec<f64>,
    m: usize,
    n: usize,
    seed: u64,
    normalization: Normalization,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub y: Vec<f64>,
    pub sigma_w: f64,
    pub noise_seed: u64,
}

/// i.i.d. N(0, 1) entries, optionally column-normalized.
pub fn gen_matrix(m: usize, n: usize, seed: u64, normalize: bool) -> Result<MeasurementMatrix> {
    let norm = if normalize { Normalization::Columns } else { Normalization::None };
    gen_matrix_with(m, n, seed, norm)
}

pub fn gen_matrix_with(
    m: usize,
    n: usize,
    seed: u64,
    normalization: Normalization,
) -> Result<MeasurementMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::param(format!("matrix dimensions must be positive, got {m}x{n}")));
    }
    if m > n {
        return Err(Error::param(format!("m = {m} exceeds n = {n}")));
    }
    let mut data = vec![0.0; m * n];
    // one stream per row keeps generation parallel and reproducible
    par::for_each_chunk(&mut data, n, |row, out| {
        let mut rng = stream(seed, Consumer::Matrix, row as u64);
        fill_normal(&mut rng, out);
    });
    let mut a = MeasurementMatrix { data, m, n, seed, normalization };
    match normalization {
        Normalization::None => {}
        Normalization::Columns => {
            let inv: Vec<f64> = a.column_norms().iter().map(|c| 1.0 / c).collect();
            a.scale_columns(&inv);
        }
        Normalization::InvSqrtM => {
            let s = 1.0 / (m as f64).sqrt();
            a.data.iter_mut().for_each(|v| *v *= s);
        }
    }
    Ok(a)
}

impl MeasurementMatrix {
    /// Wrap explicit row-major data.
    pub fn from_rows(m: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * n || m == 0 || n == 0 {
            return Err(Error::dim(format!("{} values for a {m}x{n} matrix", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite matrix entry".into()));
        }
        let mut a = MeasurementMatrix { data, m, n, seed: 0, normalization: Normalization::None };
        if a.column_norms().iter().all(|c| (c - 1.0).abs() <= 1e-12) {
            a.normalization = Normalization::Columns;
        }
        Ok(a)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn column_normalized(&self) -> bool {
        self.normalization == Normalization::Columns
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn column_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.n];
        let (m, n, data) = (self.m, self.n, &self.data);
        par::for_each_chunk(&mut sq, COL_CHUNK, |c, out| {
            let j0 = c * COL_CHUNK;
            for i in 0..m {
                let row = &data[i * n + j0..i * n + j0 + out.len()];
                for (s, a) in out.iter_mut().zip(row) {
                    *s += a * a;
                }
            }
        });
        sq.into_iter().map(f64::sqrt).collect()
    }

    fn scale_columns(&mut self, s: &[f64]) {
        let n = self.n;
        par::for_each_chunk(&mut self.data, n, |_, row| {
            for (a, f) in row.iter_mut().zip(s) {
                *a *= f;
            }
        });
    }

    /// A v.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::dim(format!("apply: vector length {} vs n = {}", v.len(), self.n)));
        }
        Ok(par::map_indexed(self.m, |i| dot(self.row(i), v)))
    }

    /// Aᵀ u. Each output entry sums over rows in ascending order, so the
    /// result does not depend on the thread count.
    pub fn apply_adjoint(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.m {
            return Err(Error::dim(format!(
                "apply_adjoint: vector length {} vs m = {}",
                u.len(),
                self.m
            )));
        }
        let mut out = vec![0.0; self.n];
        let (n, data) = (self.n, &self.data);
        par::for_each_chunk(&mut out, COL_CHUNK, |c, acc| {
            let j0 = c * COL_CHUNK;
            for (i, &ui) in u.iter().enumerate() {
                let row = &data[i * n + j0..i * n + j0 + acc.len()];
                for (o, a) in acc.iter_mut().zip(row) {
                    *o += a * ui;
                }
            }
        });
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(self.m as u64).to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut header = [0u8; 24];
        r.read_exact(&mut header)?;
        if &header[..8] != MAGIC {
            return Err(Error::Format(format!("{}: bad matrix magic", path.display())));
        }
        let m = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
        let count = m
            .checked_mul(n)
            .ok_or_else(|| Error::Format(format!("{}: {m}x{n} overflows", path.display())))?;
        let mut bytes = Vec::with_capacity(count * 8);
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * 8 {
            return Err(Error::Format(format!(
                "{}: expected {} data bytes, found {}",
                path.display(),
                count * 8,
                bytes.len()
            )));
        }
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::from_rows(m, n, data)
    }
}

/// y = A x + σ_w g with g drawn from the noise stream of `noise_seed`.
pub fn measure(a: &MeasurementMatrix, x: &[f64], sigma_w: f64, noise_seed: u64) -> Result<Measurement> {
    if !(sigma_w >= 0.0) {
        return Err(Error::param(format!("sigma_w must be non-negative, got {sigma_w}")));
    }
    let mut y = a.apply(x)?;
    if sigma_w > 0.0 {
        let g = normals(noise_seed, Consumer::Noise, 0, a.m());
        for (yi, gi) in y.iter_mut().zip(g) {
            *yi += sigma_w * gi;
        }
    }
    Ok(Measurement { y, sigma_w, noise_seed })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
