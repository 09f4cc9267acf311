//! Combinatorial gluing of patch edges.
//!
//! Sides of the unit square are numbered `0: t2 = 0`, `1: t1 = 1`,
//! `2: t2 = 1`, `3: t1 = 0`. Each side is traversed in the direction of
//! increasing parameter; corners are numbered `0: (0,0)`, `1: (1,0)`,
//! `2: (1,1)`, `3: (0,1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identification of side `side_a` of `patch_a` with side `side_b` of
/// `patch_b`; `reversed` flips the parameter direction (`s -> 1 - s`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interface {
    pub patch_a: usize,
    pub side_a: usize,
    pub patch_b: usize,
    pub side_b: usize,
    pub reversed: bool,
}

/// Neighbor across a side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SideLink {
    pub patch: usize,
    pub side: usize,
    pub reversed: bool,
}

/// Parameter direction running along `side`.
pub fn side_dir(side: usize) -> usize {
    side % 2
}

/// Whether `side` sits at parameter value 1 of the orthogonal direction.
pub fn side_is_upper(side: usize) -> bool {
    side == 1 || side == 2
}

/// Corners at the start and end of `side`.
pub fn side_corners(side: usize) -> (usize, usize) {
    match side {
        0 => (0, 1),
        1 => (1, 2),
        2 => (3, 2),
        _ => (0, 3),
    }
}

/// Parameter coordinates of `corner`.
pub fn corner_point(corner: usize) -> [f64; 2] {
    match corner {
        0 => [0.0, 0.0],
        1 => [1.0, 0.0],
        2 => [1.0, 1.0],
        _ => [0.0, 1.0],
    }
}

/// Point on `side` at along-side parameter `s`.
pub fn side_point(side: usize, s: f64) -> [f64; 2] {
    let fixed = if side_is_upper(side) { 1.0 } else { 0.0 };
    if side_dir(side) == 0 {
        [s, fixed]
    } else {
        [fixed, s]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    num_patches: usize,
    interfaces: Vec<Interface>,
    links: Vec<[Option<SideLink>; 4]>,
    corner_class: Vec<[usize; 4]>,
}

impl Topology {
    pub fn new(num_patches: usize, interfaces: Vec<Interface>) -> Result<Self> {
        let mut links = vec![[None; 4]; num_patches];
        for itf in &interfaces {
            if itf.patch_a >= num_patches || itf.patch_b >= num_patches {
                return Err(Error::Geometry(format!("interface {itf:?} references a missing patch")));
            }
            if itf.side_a > 3 || itf.side_b > 3 {
                return Err(Error::Geometry(format!("interface {itf:?} has an invalid side")));
            }
            if itf.patch_a == itf.patch_b {
                return Err(Error::Geometry(format!("interface {itf:?} glues a patch to itself")));
            }
            for (p, s, q, t) in [
                (itf.patch_a, itf.side_a, itf.patch_b, itf.side_b),
                (itf.patch_b, itf.side_b, itf.patch_a, itf.side_a),
            ] {
                if links[p][s].is_some() {
                    return Err(Error::Geometry(format!("side {s} of patch {p} is glued twice")));
                }
                links[p][s] = Some(SideLink { patch: q, side: t, reversed: itf.reversed });
            }
        }

        let mut parent: Vec<usize> = (0..4 * num_patches).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for itf in &interfaces {
            let (a0, a1) = side_corners(itf.side_a);
            let (mut b0, mut b1) = side_corners(itf.side_b);
            if itf.reversed {
                std::mem::swap(&mut b0, &mut b1);
            }
            for (ca, cb) in [(a0, b0), (a1, b1)] {
                let x = find(&mut parent, 4 * itf.patch_a + ca);
                let y = find(&mut parent, 4 * itf.patch_b + cb);
                if x != y {
                    parent[x.max(y)] = x.min(y);
                }
            }
        }
        let corner_class = (0..num_patches)
            .map(|p| std::array::from_fn(|c| find(&mut parent, 4 * p + c)))
            .collect();
        Ok(Topology { num_patches, interfaces, links, corner_class })
    }

    pub fn num_patches(&self) -> usize {
        self.num_patches
    }

    pub fn interfaces(&self) -> &[Interface] {
        &self.interfaces
    }

    pub fn link(&self, patch: usize, side: usize) -> Option<SideLink> {
        self.links[patch][side]
    }

    /// Representative id of the vertex at `corner` of `patch`.
    pub fn corner_class(&self, patch: usize, corner: usize) -> usize {
        self.corner_class[patch][corner]
    }

    /// All `(patch, corner)` pairs identified with the given corner.
    pub fn corner_mates(&self, patch: usize, corner: usize) -> Vec<(usize, usize)> {
        let id = self.corner_class[patch][corner];
        let mut out = Vec::new();
        for (p, cls) in self.corner_class.iter().enumerate() {
            for (c, &k) in cls.iter().enumerate() {
                if k == id {
                    out.push((p, c));
                }
            }
        }
        out
    }

    /// Whether every side is glued to another patch.
    pub fn is_closed(&self) -> bool {
        self.links.iter().all(|l| l.iter().all(Option::is_some))
    }
}
