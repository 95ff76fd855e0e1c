//! `FDF1` field dumps: a UTF-8 header of `key = value` lines closed by a
//! `data` line, then little-endian `f64` pairs `(re, im)` in row-major order,
//! one plane per matrix entry `(i, j)` for matrix-valued fields.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forms::{CMatrix, HermitianField, MetricField, PsiField};
use crate::torus::{ScalarField, TorusGeometry};

const MAGIC: &str = "FDF1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Scalar,
    Hermitian,
    Metric,
    Psi,
}

impl FieldKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Scalar => "scalar",
            Self::Hermitian => "hermitian",
            Self::Metric => "metric",
            Self::Psi => "psi",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "scalar" => Ok(Self::Scalar),
            "hermitian" => Ok(Self::Hermitian),
            "metric" => Ok(Self::Metric),
            "psi" => Ok(Self::Psi),
            other => Err(Error::Format(format!("unknown field kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub enum FieldDump {
    Scalar(ScalarField),
    Hermitian(HermitianField),
    Metric(MetricField),
    Psi(PsiField),
}

impl FieldDump {
    pub fn kind(&self) -> FieldKind {
        match self {
            Self::Scalar(_) => FieldKind::Scalar,
            Self::Hermitian(_) => FieldKind::Hermitian,
            Self::Metric(_) => FieldKind::Metric,
            Self::Psi(_) => FieldKind::Psi,
        }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        match self {
            Self::Scalar(f) => f.geometry(),
            Self::Hermitian(f) => f.geometry(),
            Self::Metric(f) => f.geometry(),
            Self::Psi(f) => f.geometry(),
        }
    }

    pub fn into_scalar(self) -> Result<ScalarField> {
        match self {
            Self::Scalar(f) => Ok(f),
            other => Err(kind_mismatch("scalar", other.kind())),
        }
    }

    /// Accepts metric and hermitian dumps; the latter are checked for positivity.
    pub fn into_metric(self) -> Result<MetricField> {
        match self {
            Self::Metric(f) => Ok(f),
            Self::Hermitian(f) => MetricField::new(f),
            other => Err(kind_mismatch("metric", other.kind())),
        }
    }

    pub fn into_hermitian(self) -> Result<HermitianField> {
        match self {
            Self::Hermitian(f) => Ok(f),
            Self::Metric(f) => Ok(f.field().clone()),
            Self::Psi(f) => Ok(f.field().clone()),
            other => Err(kind_mismatch("hermitian", other.kind())),
        }
    }

    fn matrix_entries(&self) -> Option<&[CMatrix]> {
        match self {
            Self::Scalar(_) => None,
            Self::Hermitian(f) => Some(f.entries()),
            Self::Metric(f) => Some(f.field().entries()),
            Self::Psi(f) => Some(f.field().entries()),
        }
    }
}

fn kind_mismatch(want: &str, got: FieldKind) -> Error {
    Error::Format(format!("expected a {want} field, found {}", got.as_str()))
}

fn join(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn encode(dump: &FieldDump) -> Vec<u8> {
    let g = dump.geometry();
    let n = g.n();
    let planes = match dump {
        FieldDump::Scalar(_) => 1,
        _ => n * n,
    };
    let header = format!(
        "{MAGIC}\nn = {n}\nactive_axes = {}\ngrid_shape = {}\nkind = {}\nplanes = {planes}\ndata\n",
        join(g.active_axes()),
        join(g.grid_shape()),
        dump.kind().as_str(),
    );
    let mut out = header.into_bytes();
    out.reserve(planes * g.len() * 16);
    let mut push = |z: Complex64| {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    };
    match (dump, dump.matrix_entries()) {
        (FieldDump::Scalar(f), _) => f.samples().iter().for_each(|&z| push(z)),
        (_, Some(entries)) => {
            for i in 0..n {
                for j in 0..n {
                    entries.iter().for_each(|m| push(m[(i, j)]));
                }
            }
        }
        _ => unreachable!("matrix dumps carry entries"),
    }
    out
}

fn parse_list(value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad integer list {value:?}")))
        })
        .collect()
}

pub fn decode(bytes: &[u8]) -> Result<FieldDump> {
    let mut offset = 0;
    let mut lines = Vec::new();
    loop {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("header not terminated by a data line".into()))?;
        let line = std::str::from_utf8(&bytes[offset..offset + end])
            .map_err(|_| Error::Format("header is not UTF-8".into()))?
            .trim()
            .to_string();
        offset += end + 1;
        if line == "data" {
            break;
        }
        lines.push(line);
    }
    if lines.first().map(String::as_str) != Some(MAGIC) {
        return Err(Error::Format("missing FDF1 magic".into()));
    }
    let (mut n, mut axes, mut shape, mut kind, mut planes) = (None, None, None, None, None);
    for line in &lines[1..] {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header line {line:?}")))?;
        let value = value.trim();
        match key.trim() {
            "n" => n = Some(parse_list(value)?[0]),
            "active_axes" => axes = Some(parse_list(value)?),
            "grid_shape" => shape = Some(parse_list(value)?),
            "kind" => kind = Some(FieldKind::parse(value)?),
            "planes" => planes = Some(parse_list(value)?[0]),
            other => return Err(Error::Format(format!("unknown header key {other:?}"))),
        }
    }
    let missing = |k: &str| Error::Format(format!("header lacks {k}"));
    let n = n.ok_or_else(|| missing("n"))?;
    let geometry = TorusGeometry::new(
        n,
        axes.ok_or_else(|| missing("active_axes"))?,
        shape.ok_or_else(|| missing("grid_shape"))?,
    )?;
    let kind = kind.ok_or_else(|| missing("kind"))?;
    let expected_planes = if kind == FieldKind::Scalar { 1 } else { n * n };
    if planes.ok_or_else(|| missing("planes"))? != expected_planes {
        return Err(Error::Format(format!("{} field needs {expected_planes} planes", kind.as_str())));
    }
    let len = geometry.len();
    let payload = &bytes[offset..];
    if payload.len() != expected_planes * len * 16 {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            expected_planes * len * 16
        )));
    }
    let values: Vec<Complex64> = payload
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    if kind == FieldKind::Scalar {
        return Ok(FieldDump::Scalar(ScalarField::new(geometry, values)?));
    }
    let entries = (0..len)
        .map(|k| CMatrix::from_fn(n, n, |i, j| values[(i * n + j) * len + k]))
        .collect();
    let field = HermitianField::new(geometry, entries)?;
    Ok(match kind {
        FieldKind::Hermitian => FieldDump::Hermitian(field),
        FieldKind::Metric => FieldDump::Metric(MetricField::new(field)?),
        FieldKind::Psi => FieldDump::Psi(PsiField::new(field)),
        FieldKind::Scalar => unreachable!(),
    })
}

pub fn write(path: impl AsRef<Path>, dump: &FieldDump) -> Result<()> {
    fs::write(path, encode(dump))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<FieldDump> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane() -> TorusGeometry {
        TorusGeometry::new(3, vec![1, 4], vec![8, 10]).unwrap()
    }

    #[test]
    fn scalar_round_trip_is_bitwise() {
        let g = plane();
        let f = ScalarField::from_fn(&g, |x| Complex64::new(x[0].sin(), (x[3] * 0.1).exp()));
        let back = decode(&encode(&FieldDump::Scalar(f.clone()))).unwrap().into_scalar().unwrap();
        assert_eq!(back.geometry(), f.geometry());
        assert_eq!(back.samples(), f.samples());
    }

    #[test]
    fn metric_round_trip_and_header() {
        let g = plane();
        let m = HermitianField::from_fn(&g, |x| {
            let mut a = CMatrix::identity(3, 3) * Complex64::new(2.0 + x[0].cos(), 0.0);
            a[(0, 1)] = Complex64::new(0.1, 0.2 * x[3].sin());
            a[(1, 0)] = a[(0, 1)].conj();
            a
        })
        .unwrap();
        let metric = MetricField::new(m).unwrap();
        let bytes = encode(&FieldDump::Metric(metric.clone()));
        let text = String::from_utf8_lossy(&bytes[..80]);
        assert!(text.starts_with("FDF1\nn = 3\nactive_axes = 1,4\ngrid_shape = 8,10\nkind = metric\nplanes = 9\ndata\n"));
        let back = decode(&bytes).unwrap().into_metric().unwrap();
        assert_eq!(back.field().max_diff(metric.field()).unwrap(), 0.0);
    }

    #[test]
    fn rejects_malformed_input() {
        let g = plane();
        let bytes = encode(&FieldDump::Scalar(ScalarField::zeros(&g)));
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode(b"FDF2\ndata\n"), Err(Error::Format(_))));
        assert!(matches!(decode(b"FDF1\nn = 3\n"), Err(Error::Format(_))));
        let bad = HermitianField::constant(&g, &(CMatrix::identity(3, 3) * Complex64::new(-1.0, 0.0))).unwrap();
        let mut patched = encode(&FieldDump::Hermitian(bad));
        let at = patched.windows(16).position(|w| w == b"kind = hermitian").unwrap();
        patched[at..at + 16].copy_from_slice(b"kind = metric   ");
        assert!(decode(&patched).is_err());
    }
}
