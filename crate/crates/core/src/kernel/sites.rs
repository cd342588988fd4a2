use std::collections::HashMap;

use crate::env::{Point, RateField};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// `Z^d mod side`, canonical coordinates in `[-side/2, side/2)`.
    Torus { side: usize },
    /// Euclidean lattice ball `{x : |x - center|₂ ≤ radius}`.
    Ball { center: Point, radius: f64 },
    Region,
}

/// An edge from an interior site to an exterior boundary site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Link {
    pub site: u32,
    pub axis: u32,
    pub boundary: u32,
}

/// A finite set of lattice sites with its nearest-neighbour table.
///
/// Direction `k` is `+e_{k/2}` for even `k` and `-e_{k/2}` for odd `k`.
/// A neighbour index `>= len()` refers to exterior boundary site
/// `index - len()`.
#[derive(Clone, Debug)]
pub struct SiteSet {
    d: usize,
    shape: Shape,
    coords: Vec<i64>,
    nbr: Vec<u32>,
    boundary: Vec<i64>,
    links: Vec<Link>,
    index: HashMap<Point, u32>,
}

pub fn norm2(x: &[i64]) -> i64 {
    x.iter().map(|c| c * c).sum()
}

pub fn in_ball(x: &[i64], center: &[i64], radius: f64) -> bool {
    let r2: i64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
    (r2 as f64) <= radius * radius + 1e-9
}

impl SiteSet {
    pub fn torus(d: usize, side: usize) -> Result<Self> {
        if side < 4 || side % 2 == 1 {
            return Err(Error::Param(format!("torus side {side} must be even and at least 4")));
        }
        let n = side
            .checked_pow(d as u32)
            .filter(|&n| n < u32::MAX as usize / (2 * d))
            .ok_or_else(|| Error::Param(format!("torus {side}^{d} too large")))?;
        let half = (side / 2) as i64;
        let mut coords = Vec::with_capacity(n * d);
        for i in 0..n {
            let mut r = i;
            for _ in 0..d {
                coords.push((r % side) as i64 - half);
                r /= side;
            }
        }
        let mut nbr = Vec::with_capacity(n * 2 * d);
        let mut stride = 1usize;
        let strides: Vec<usize> = (0..d)
            .map(|_| {
                let s = stride;
                stride *= side;
                s
            })
            .collect();
        for i in 0..n {
            for &s in &strides {
                let c = (i / s) % side;
                let up = if c + 1 == side { i + s - side * s } else { i + s };
                let down = if c == 0 { i + side * s - s } else { i - s };
                nbr.push(up as u32);
                nbr.push(down as u32);
            }
        }
        Ok(SiteSet {
            d,
            shape: Shape::Torus { side },
            coords,
            nbr,
            boundary: Vec::new(),
            links: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn ball(d: usize, radius: f64) -> Result<Self> {
        Self::ball_at(&vec![0; d], radius)
    }

    pub fn ball_at(center: &[i64], radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::Param(format!("radius {radius} must be nonnegative")));
        }
        let r = radius.floor() as i64;
        let lo: Vec<i64> = center.iter().map(|c| c - r).collect();
        let hi: Vec<i64> = center.iter().map(|c| c + r).collect();
        let mut s = Self::region(&lo, &hi, |x| in_ball(x, center, radius))?;
        s.shape = Shape::Ball {
            center: center.to_vec(),
            radius,
        };
        Ok(s)
    }

    /// Sites of the box `[lo, hi]` satisfying `keep`.
    pub fn region(lo: &[i64], hi: &[i64], keep: impl Fn(&[i64]) -> bool) -> Result<Self> {
        let d = lo.len();
        let mut coords = Vec::new();
        let mut x = lo.to_vec();
        if lo.iter().zip(hi).all(|(a, b)| a <= b) {
            'outer: loop {
                if keep(&x) {
                    coords.extend_from_slice(&x);
                }
                for i in 0..d {
                    if x[i] < hi[i] {
                        x[i] += 1;
                        continue 'outer;
                    }
                    x[i] = lo[i];
                }
                break;
            }
        }
        if coords.is_empty() {
            return Err(Error::Param("empty site set".into()));
        }
        let n = coords.len() / d;
        let index: HashMap<Point, u32> = (0..n).map(|i| (coords[i * d..(i + 1) * d].to_vec(), i as u32)).collect();
        let mut bindex: HashMap<Point, u32> = HashMap::new();
        let mut boundary = Vec::new();
        let mut links = Vec::new();
        let mut nbr = Vec::with_capacity(n * 2 * d);
        let mut y = vec![0i64; d];
        for i in 0..n {
            for k in 0..2 * d {
                y.copy_from_slice(&coords[i * d..(i + 1) * d]);
                y[k / 2] += if k % 2 == 0 { 1 } else { -1 };
                let j = match index.get(&y) {
                    Some(&j) => j,
                    None => {
                        let b = *bindex.entry(y.clone()).or_insert_with(|| {
                            boundary.extend_from_slice(&y);
                            (boundary.len() / d - 1) as u32
                        });
                        links.push(Link {
                            site: i as u32,
                            axis: (k / 2) as u32,
                            boundary: b,
                        });
                        n as u32 + b
                    }
                };
                nbr.push(j);
            }
        }
        Ok(SiteSet {
            d,
            shape: Shape::Region,
            coords,
            nbr,
            boundary,
            links,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn side(&self) -> Option<usize> {
        match self.shape {
            Shape::Torus { side } => Some(side),
            _ => None,
        }
    }

    pub fn site(&self, i: usize) -> &[i64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn sites(&self) -> impl Iterator<Item = &[i64]> {
        self.coords.chunks_exact(self.d)
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary.len() / self.d
    }

    pub fn boundary_site(&self, b: usize) -> &[i64] {
        &self.boundary[b * self.d..(b + 1) * self.d]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub(crate) fn neighbors(&self) -> &[u32] {
        &self.nbr
    }

    /// Index of `x`; torus coordinates are reduced mod the side.
    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        if x.len() != self.d {
            return None;
        }
        match self.shape {
            Shape::Torus { side } => {
                let l = side as i64;
                let mut i = 0i64;
                for &c in x.iter().rev() {
                    i = i * l + (c + l / 2).rem_euclid(l);
                }
                Some(i as usize)
            }
            _ => self.index.get(x).map(|&i| i as usize),
        }
    }

    pub fn require(&self, x: &[i64]) -> Result<usize> {
        self.index_of(x).ok_or_else(|| Error::OutsideDomain(x.to_vec()))
    }

    /// Per-site, per-axis rates during `cell`, laid out `[site * d + axis]`.
    pub fn fill_rates(&self, field: &RateField, cell: i64, out: &mut Vec<f64>) {
        out.clear();
        for x in self.sites() {
            for i in 0..self.d {
                out.push(field.rate_in_cell(x, cell, i));
            }
        }
    }

    pub fn fill_boundary_rates(&self, field: &RateField, cell: i64, out: &mut Vec<f64>) {
        out.clear();
        for b in 0..self.boundary_len() {
            let x = self.boundary_site(b);
            for i in 0..self.d {
                out.push(field.rate_in_cell(x, cell, i));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_neighbours_are_involutive() {
        let s = SiteSet::torus(2, 6).unwrap();
        let nb = s.neighbors();
        for i in 0..s.len() {
            for k in 0..4 {
                let j = nb[i * 4 + k] as usize;
                assert_eq!(nb[j * 4 + (k ^ 1)] as usize, i);
            }
            assert_eq!(s.index_of(s.site(i)), Some(i));
        }
        assert_eq!(s.index_of(&[3, 0]), s.index_of(&[-3, 0]));
        assert_eq!(s.site(0), &[-3, -3]);
    }

    #[test]
    fn ball_counts() {
        assert_eq!(SiteSet::ball(2, 2.0).unwrap().len(), 13);
        assert_eq!(SiteSet::ball(2, 4.0).unwrap().len(), 49);
        assert_eq!(SiteSet::ball(2, 8.0).unwrap().len(), 197);
        let b = SiteSet::ball(2, 1.0).unwrap();
        assert_eq!(b.len(), 5);
        // exterior boundary of the 5-point cross
        assert_eq!(b.boundary_len(), 8);
        assert_eq!(b.links().len(), 12);
    }

    #[test]
    fn boundary_is_adjacent_and_exterior() {
        let b = SiteSet::ball(3, 3.5).unwrap();
        for k in 0..b.boundary_len() {
            let z = b.boundary_site(k);
            assert!(b.index_of(z).is_none());
            assert!(b.links().iter().any(|l| l.boundary as usize == k));
        }
        for l in b.links() {
            let x = b.site(l.site as usize);
            let z = b.boundary_site(l.boundary as usize);
            let diff: i64 = x.iter().zip(z).map(|(a, c)| (a - c).abs()).sum();
            assert_eq!(diff, 1);
            assert_ne!(x[l.axis as usize], z[l.axis as usize]);
        }
    }
}
