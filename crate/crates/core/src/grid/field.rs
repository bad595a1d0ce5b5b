//! Dense anisotropic scalar fields on `ℝ³`.

use crate::error::{Error, Result};
use crate::heis::HPoint;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Box3 {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Self { lo, hi }
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|i| (self.hi[i] - self.lo[i]).max(0.0)).product()
    }

    pub fn contains(&self, p: &HPoint<f64>) -> bool {
        let c = [p.x1, p.x2, p.x3];
        (0..3).all(|i| c[i] >= self.lo[i] && c[i] <= self.hi[i])
    }

    pub fn union(&self, o: &Box3) -> Box3 {
        Box3 {
            lo: [0, 1, 2].map(|i| self.lo[i].min(o.lo[i])),
            hi: [0, 1, 2].map(|i| self.hi[i].max(o.hi[i])),
        }
    }

    /// Largest horizontal distance of the box from the `x3`-axis.
    pub fn horizontal_radius(&self) -> f64 {
        let a = self.lo[0].abs().max(self.hi[0].abs());
        let b = self.lo[1].abs().max(self.hi[1].abs());
        a.hypot(b)
    }

    /// A box containing the Korányi `r`-neighbourhood of this box: a point at
    /// horizontal radius `R` moves vertically by at most `r²/4 + R r / 2`
    /// within distance `r`.
    pub fn koranyi_padded(&self, r: f64) -> Box3 {
        let v = 0.25 * r * r + 0.5 * self.horizontal_radius() * r;
        Box3 {
            lo: [self.lo[0] - r, self.lo[1] - r, self.lo[2] - v],
            hi: [self.hi[0] + r, self.hi[1] + r, self.hi[2] + v],
        }
    }
}

/// Values sampled at cell centres `origin + (i + 1/2) h`, stored row-major
/// (`x3` fastest): index `(i1 n2 + i2) n3 + i3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3 {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

impl ScalarField3 {
    pub fn zeros(origin: [f64; 3], spacing: [f64; 3], dims: [usize; 3]) -> Result<Self> {
        if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::OutOfRange {
                name: "field spacing",
                value: spacing.iter().cloned().fold(f64::INFINITY, f64::min),
                range: "(0, inf)",
            });
        }
        Ok(Self {
            origin,
            spacing,
            dims,
            values: vec![0.0; dims[0] * dims[1] * dims[2]],
        })
    }

    /// The cells whose centres lie in `region`, at the given spacing.
    pub fn covering(region: &Box3, spacing: [f64; 3]) -> Result<Self> {
        let dims = [0, 1, 2].map(|i| ((region.hi[i] - region.lo[i]) / spacing[i]).ceil().max(1.0) as usize);
        Self::zeros(region.lo, spacing, dims)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.dims[1] + i[1]) * self.dims[2] + i[2]
    }

    pub fn get(&self, i: [usize; 3]) -> f64 {
        self.values[self.index(i)]
    }

    pub fn center(&self, i: [usize; 3]) -> HPoint<f64> {
        HPoint::new(
            self.origin[0] + (i[0] as f64 + 0.5) * self.spacing[0],
            self.origin[1] + (i[1] as f64 + 0.5) * self.spacing[1],
            self.origin[2] + (i[2] as f64 + 0.5) * self.spacing[2],
        )
    }

    /// Index of the cell containing `p`, if inside the field.
    pub fn cell_of(&self, p: &HPoint<f64>) -> Option<[usize; 3]> {
        let c = [p.x1, p.x2, p.x3];
        let mut out = [0usize; 3];
        for k in 0..3 {
            let t = ((c[k] - self.origin[k]) / self.spacing[k]).floor();
            if t < 0.0 || t >= self.dims[k] as f64 {
                return None;
            }
            out[k] = t as usize;
        }
        Some(out)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Header line followed by the values as little-endian `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let [n1, n2, n3] = self.dims;
        let [o1, o2, o3] = self.origin;
        let [h1, h2, h3] = self.spacing;
        writeln!(
            w,
            "ScalarField3 dims={n1},{n2},{n3} origin={o1:e},{o2:e},{o3:e} spacing={h1:e},{h2:e},{h3:e} order=row-major-x3-fastest dtype=f64le"
        )?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let mut it = header.split_whitespace();
        if it.next() != Some("ScalarField3") {
            return Err(Error::Parse("not a ScalarField3 header".into()));
        }
        let mut dims = None;
        let mut origin = None;
        let mut spacing = None;
        for kv in it {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header field `{kv}`")))?;
            match k {
                "dims" => dims = Some(parse3::<usize>(v)?),
                "origin" => origin = Some(parse3::<f64>(v)?),
                "spacing" => spacing = Some(parse3::<f64>(v)?),
                "order" if v != "row-major-x3-fastest" => {
                    return Err(Error::Parse(format!("unsupported order `{v}`")))
                }
                "dtype" if v != "f64le" => return Err(Error::Parse(format!("unsupported dtype `{v}`"))),
                _ => {}
            }
        }
        let (dims, origin, spacing) = match (dims, origin, spacing) {
            (Some(d), Some(o), Some(s)) => (d, o, s),
            _ => return Err(Error::Parse("incomplete ScalarField3 header".into())),
        };
        let mut f = Self::zeros(origin, spacing, dims)?;
        let mut bytes = vec![0u8; f.values.len() * 8];
        r.read_exact(&mut bytes)?;
        for (v, c) in f.values.iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
        }
        Ok(f)
    }
}

fn parse3<T: std::str::FromStr>(s: &str) -> Result<[T; 3]>
where
    T::Err: std::fmt::Display,
{
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("expected 3 values in `{s}`")));
    }
    let p = |i: usize| parts[i].parse::<T>().map_err(|e| Error::Parse(e.to_string()));
    Ok([p(0)?, p(1)?, p(2)?])
}

/// `cellvol · Σ |v|^p`.
pub fn lp_integral(field: &ScalarField3, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::OutOfRange {
            name: "p",
            value: p,
            range: "[1, inf)",
        });
    }
    let s: f64 = field
        .values
        .iter()
        .filter(|v| **v != 0.0)
        .map(|v| v.abs().powf(p))
        .sum();
    Ok(s * field.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_field(n: usize) -> ScalarField3 {
        let h = 1.0 / n as f64;
        ScalarField3::zeros([0.0; 3], [h; 3], [n; 3]).unwrap()
    }

    #[test]
    fn lp_examples() {
        let mut f = unit_field(8);
        f.values.iter_mut().for_each(|v| *v = 1.0);
        assert!((lp_integral(&f, 1.0).unwrap() - 1.0).abs() < 1e-12);

        let mut g = unit_field(8);
        let half = g.len() / 2;
        g.values[..half].iter_mut().for_each(|v| *v = 4.0);
        assert!((lp_integral(&g, 1.5).unwrap() - 4.0).abs() < 1e-12);

        let base = lp_integral(&g, 1.5).unwrap();
        g.values.iter_mut().for_each(|v| *v *= 2.0);
        assert!((lp_integral(&g, 1.5).unwrap() - 2f64.powf(1.5) * base).abs() < 1e-12);
        assert!(lp_integral(&g, 0.5).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let mut f = ScalarField3::zeros([0.1, -0.2, 0.3], [0.5, 0.25, 1.0 / 3.0], [3, 4, 5]).unwrap();
        for (k, v) in f.values.iter_mut().enumerate() {
            *v = (k as f64).sqrt() - 1.7;
        }
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        let header_end = buf.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(buf.len() - header_end - 1, 8 * f.len());
        let g = ScalarField3::read_from(&buf[..]).unwrap();
        assert_eq!(f, g);
        assert!(ScalarField3::read_from(&b"nope\n"[..]).is_err());
    }

    #[test]
    fn indexing() {
        let f = ScalarField3::zeros([0.0; 3], [1.0, 2.0, 3.0], [2, 3, 4]).unwrap();
        assert_eq!(f.index([1, 2, 3]), 23);
        let c = f.center([1, 0, 2]);
        assert_eq!(f.cell_of(&c), Some([1, 0, 2]));
        assert_eq!(f.cell_of(&HPoint::new(-0.1, 0.0, 0.0)), None);
    }
}
