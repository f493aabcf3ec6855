//! Binary "KPCA1" model container.
//!
//! All integers are little-endian `u64` unless noted, all reals little-endian
//! IEEE-754 `f64`:
//!
//! | field                     | type / size                                  |
//! |---------------------------|----------------------------------------------|
//! | magic                     | 5 bytes, ASCII `KPCA1`                       |
//! | kernel tag                | `u8`: 0 linear, 1 polynomial, 2 rbf          |
//! | degree                    | `u32` (0 unless polynomial)                  |
//! | offset                    | `f64` (0 unless polynomial)                  |
//! | gamma                     | `f64` (0 unless rbf)                         |
//! | n (training samples)      | `u64`                                        |
//! | d (input dimension)       | `u64`                                        |
//! | m (components)            | `u64`                                        |
//! | train_features            | `n * d` f64, row-major                       |
//! | alphas                    | `n * m` f64, row-major                       |
//! | eigenvalues               | `m` f64                                      |
//! | train_kernel_row_means    | `n` f64                                      |
//! | train_kernel_grand_mean   | `f64`                                        |
//!
//! There is no trailing data; a file with extra bytes is rejected.

use super::{KernelSpec, SubspaceModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 5] = b"KPCA1";

impl SubspaceModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, d, m) = (self.n_train(), self.input_dim(), self.n_components());
        let mut out = Vec::with_capacity(5 + 1 + 4 + 16 + 24 + 8 * (n * d + n * m + m + n + 1));
        out.extend_from_slice(MAGIC);
        let (tag, degree, offset, gamma) = match self.kernel {
            KernelSpec::Linear => (0u8, 0u32, 0.0, 0.0),
            KernelSpec::Polynomial { degree, offset } => (1, degree, offset, 0.0),
            KernelSpec::Rbf { gamma } => (2, 0, 0.0, gamma),
        };
        out.push(tag);
        out.extend_from_slice(&degree.to_le_bytes());
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&gamma.to_le_bytes());
        for v in [n, d, m] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        let reals = self
            .train_features
            .data()
            .iter()
            .chain(self.alphas.data())
            .chain(&self.eigenvalues)
            .chain(&self.train_kernel_row_means)
            .chain(std::iter::once(&self.train_kernel_grand_mean));
        for v in reals {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(5)? != MAGIC {
            return Err(Error::ModelFormat("bad magic (expected \"KPCA1\")".into()));
        }
        let tag = rd.take(1)?[0];
        let degree = u32::from_le_bytes(rd.array()?);
        let offset = rd.f64()?;
        let gamma = rd.f64()?;
        let kernel = match tag {
            0 => KernelSpec::Linear,
            1 => KernelSpec::Polynomial { degree, offset },
            2 => KernelSpec::Rbf { gamma },
            other => return Err(Error::ModelFormat(format!("unknown kernel tag {other}"))),
        };
        kernel.validate().map_err(|e| Error::ModelFormat(e.to_string()))?;
        let n = rd.usize()?;
        let d = rd.usize()?;
        let m = rd.usize()?;
        let needed = n
            .checked_mul(d)
            .and_then(|nd| n.checked_mul(m).and_then(|nm| nd.checked_add(nm)))
            .and_then(|s| s.checked_add(m + n + 1))
            .and_then(|s| s.checked_mul(8))
            .ok_or_else(|| Error::ModelFormat("dimensions overflow".into()))?;
        if bytes.len() - rd.pos != needed {
            return Err(Error::ModelFormat(format!(
                "payload is {} bytes, header implies {needed}",
                bytes.len() - rd.pos
            )));
        }
        let train_features = Matrix::from_vec(n, d, rd.f64s(n * d)?)?;
        let alphas = Matrix::from_vec(n, m, rd.f64s(n * m)?)?;
        let eigenvalues = rd.f64s(m)?;
        let train_kernel_row_means = rd.f64s(n)?;
        let train_kernel_grand_mean = rd.f64()?;
        Ok(SubspaceModel {
            kernel,
            train_features,
            alphas,
            eigenvalues,
            train_kernel_row_means,
            train_kernel_grand_mean,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos + k;
        if end > self.bytes.len() {
            return Err(Error::ModelFormat(format!("truncated at byte {}", self.bytes.len())));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(u64::from_le_bytes(self.array()?)).map_err(|_| Error::ModelFormat("dimension too large".into()))
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(8 * k)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}
