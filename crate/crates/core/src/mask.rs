//! Binary masks over an `h x w` grid.

use crate::error::{Error, Result};

/// Connectivity used when deciding whether two masks touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(into = "u32", try_from = "u32")]
pub enum Connectivity {
    /// Edge neighbours only (Manhattan distance 1).
    Four,
    /// Edge and corner neighbours (Chebyshev distance 1).
    #[default]
    Eight,
}

impl From<Connectivity> for u32 {
    fn from(c: Connectivity) -> u32 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl TryFrom<u32> for Connectivity {
    type Error = Error;

    fn try_from(n: u32) -> Result<Self> {
        Connectivity::from_count(n)
    }
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::arg(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }

    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    h: usize,
    w: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(h: usize, w: usize) -> Self {
        Mask {
            h,
            w,
            bits: vec![false; h * w],
        }
    }

    pub fn full(h: usize, w: usize) -> Self {
        Mask {
            h,
            w,
            bits: vec![true; h * w],
        }
    }

    pub fn from_bits(h: usize, w: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != h * w {
            return Err(Error::arg(format!(
                "mask has {} cells, expected {h}x{w}",
                bits.len()
            )));
        }
        Ok(Mask { h, w, bits })
    }

    pub fn from_indices(h: usize, w: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Mask::empty(h, w);
        for i in indices {
            m.bits[i] = true;
        }
        m
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn set(&mut self, idx: usize, value: bool) {
        self.bits[idx] = value;
    }

    /// Number of set cells.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Indices of set cells, ascending.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn first_index(&self) -> Option<usize> {
        self.bits.iter().position(|&b| b)
    }

    fn check_shape(&self, other: &Mask) -> Result<()> {
        if self.h != other.h || self.w != other.w {
            return Err(Error::arg(format!(
                "mask shapes differ: {}x{} vs {}x{}",
                self.h, self.w, other.h, other.w
            )));
        }
        Ok(())
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.check_shape(other)?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a || b)
            .collect();
        Ok(Mask {
            h: self.h,
            w: self.w,
            bits,
        })
    }

    pub fn intersection_count(&self, other: &Mask) -> Result<usize> {
        self.check_shape(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count())
    }

    pub fn union_count(&self, other: &Mask) -> Result<usize> {
        self.check_shape(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a || b)
            .count())
    }

    pub fn overlaps(&self, other: &Mask) -> Result<bool> {
        Ok(self.intersection_count(other)? > 0)
    }

    /// True when some cell of `self` neighbours (or coincides with) a cell of `other`.
    pub fn touches(&self, other: &Mask, conn: Connectivity) -> Result<bool> {
        self.check_shape(other)?;
        let (h, w) = (self.h as isize, self.w as isize);
        for idx in self.indices() {
            if other.bits[idx] {
                return Ok(true);
            }
            let (r, c) = ((idx / self.w) as isize, (idx % self.w) as isize);
            for &(dr, dc) in conn.offsets() {
                let (rr, cc) = (r + dr, c + dc);
                if rr >= 0 && rr < h && cc >= 0 && cc < w && other.bits[(rr * w + cc) as usize] {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    /// 0/1 bytes, row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| u8::from(b)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_contact_depends_on_connectivity() {
        let a = Mask::from_indices(3, 3, [0]);
        let b = Mask::from_indices(3, 3, [4]);
        assert!(a.touches(&b, Connectivity::Eight).unwrap());
        assert!(!a.touches(&b, Connectivity::Four).unwrap());
        let c = Mask::from_indices(3, 3, [1]);
        assert!(a.touches(&c, Connectivity::Four).unwrap());
    }

    #[test]
    fn row_wrap_is_not_adjacency() {
        // cell (0,2) and (1,0) are index-neighbours but not spatial neighbours
        let a = Mask::from_indices(3, 3, [2]);
        let b = Mask::from_indices(3, 3, [3]);
        assert!(!a.touches(&b, Connectivity::Eight).unwrap());
    }

    #[test]
    fn connectivity_json_is_numeric() {
        assert_eq!(serde_json::to_string(&Connectivity::Four).unwrap(), "4");
        let c: Connectivity = serde_json::from_str("8").unwrap();
        assert_eq!(c, Connectivity::Eight);
        assert!(serde_json::from_str::<Connectivity>("6").is_err());
    }

    #[test]
    fn counts() {
        let a = Mask::from_indices(2, 2, [0, 1]);
        let b = Mask::from_indices(2, 2, [1, 2]);
        assert_eq!(a.intersection_count(&b).unwrap(), 1);
        assert_eq!(a.union_count(&b).unwrap(), 3);
        assert_eq!(a.union(&b).unwrap().count(), 3);
        assert!(Mask::empty(2, 2).is_empty());
    }
}
