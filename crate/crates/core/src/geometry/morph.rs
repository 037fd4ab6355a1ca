//! Binary morphology on pixel masks.

use std::collections::VecDeque;

use super::grid::{Grid, Mask};

/// Offsets `(du, dv)` of a digital disk: `du² + dv² ≤ radius²`.
pub fn disk_offsets(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dv in -r..=r {
        for du in -r..=r {
            if du * du + dv * dv <= r * r {
                out.push((du, dv));
            }
        }
    }
    out
}

/// Dilation by a disk of the given radius. Radius 0 is the identity.
pub fn dilate_disk(mask: &Mask, radius: usize) -> Mask {
    if radius == 0 {
        return mask.clone();
    }
    let offsets = disk_offsets(radius);
    let (w, h) = mask.dims();
    let mut out = Grid::filled(w, h, false);
    for v in 0..h {
        for u in 0..w {
            if !*mask.get(u, v) {
                continue;
            }
            for &(du, dv) in &offsets {
                let (nu, nv) = (u as i64 + du, v as i64 + dv);
                if nu >= 0 && nv >= 0 && (nu as usize) < w && (nv as usize) < h {
                    out.set(nu as usize, nv as usize, true);
                }
            }
        }
    }
    out
}

/// Morphological hole filling: everything except the 4-connected component of
/// the complement that touches the grid border.
pub fn fill_holes(mask: &Mask) -> Mask {
    let (w, h) = mask.dims();
    let mut outside = Grid::filled(w, h, false);
    let mut queue = VecDeque::new();
    let seed = |u: usize, v: usize, outside: &mut Mask, queue: &mut VecDeque<(usize, usize)>| {
        if !*mask.get(u, v) && !*outside.get(u, v) {
            outside.set(u, v, true);
            queue.push_back((u, v));
        }
    };
    for u in 0..w {
        seed(u, 0, &mut outside, &mut queue);
        if h > 1 {
            seed(u, h - 1, &mut outside, &mut queue);
        }
    }
    for v in 0..h {
        seed(0, v, &mut outside, &mut queue);
        if w > 1 {
            seed(w - 1, v, &mut outside, &mut queue);
        }
    }
    while let Some((u, v)) = queue.pop_front() {
        let mut visit = |nu: usize, nv: usize| {
            if !*mask.get(nu, nv) && !*outside.get(nu, nv) {
                outside.set(nu, nv, true);
                queue.push_back((nu, nv));
            }
        };
        if u > 0 {
            visit(u - 1, v);
        }
        if u + 1 < w {
            visit(u + 1, v);
        }
        if v > 0 {
            visit(u, v - 1);
        }
        if v + 1 < h {
            visit(u, v + 1);
        }
    }
    outside.map(|&o| !o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_sizes() {
        assert_eq!(disk_offsets(0).len(), 1);
        assert_eq!(disk_offsets(1).len(), 5);
        assert_eq!(disk_offsets(2).len(), 13);
        assert_eq!(disk_offsets(3).len(), 29);
    }

    #[test]
    fn dilation_clips_at_border() {
        let mut m = Grid::filled(5, 5, false);
        m.set(0, 0, true);
        let d = dilate_disk(&m, 2);
        // Quarter disk of radius 2 inside the grid: (0..=2)x(0..=2) minus (2,1),(1,2),(2,2).
        assert_eq!(d.count(), 6);
        assert_eq!(dilate_disk(&m, 0), m);
    }

    #[test]
    fn fills_enclosed_hole_only() {
        // Ring with a one-pixel hole, plus a notch open to the border.
        let rows = [
            "......",
            ".###..",
            ".#.#..",
            ".###..",
            "...#.#",
            "...#.#",
        ];
        let m = Grid::from_fn(6, 6, |u, v| rows[v].as_bytes()[u] == b'#');
        let f = fill_holes(&m);
        assert!(*f.get(2, 2));
        assert!(!*f.get(4, 5));
        assert_eq!(f.count(), m.count() + 1);
    }
}
