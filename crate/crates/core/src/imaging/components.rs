use crate::bbox::BBox;

use super::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// A maximal connected set of foreground pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// `(x, y)` coordinates in raster order.
    pub pixels: Vec<(u32, u32)>,
    /// Tight pixel hull.
    pub bbox: BBox,
    pub area: usize,
}

fn find(parent: &mut [u32], mut a: u32) -> u32 {
    while parent[a as usize] != a {
        parent[a as usize] = parent[parent[a as usize] as usize];
        a = parent[a as usize];
    }
    a
}

fn union(parent: &mut [u32], a: u32, b: u32) -> u32 {
    let (ra, rb) = (find(parent, a), find(parent, b));
    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
    parent[hi as usize] = lo;
    lo
}

/// Two-pass labeling with union-find. Components are returned in the raster
/// order of their first pixel.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Component> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let mut labels = vec![0u32; w * h];
    // label 0 is background
    let mut parent: Vec<u32> = vec![0];

    for y in 0..h {
        for x in 0..w {
            if !mask.data[y * w + x] {
                continue;
            }
            let mut neighbors = [0u32; 4];
            let mut n = 0;
            if x > 0 {
                neighbors[n] = labels[y * w + x - 1];
                n += 1;
            }
            if y > 0 {
                neighbors[n] = labels[(y - 1) * w + x];
                n += 1;
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        neighbors[n] = labels[(y - 1) * w + x - 1];
                        n += 1;
                    }
                    if x + 1 < w {
                        neighbors[n] = labels[(y - 1) * w + x + 1];
                        n += 1;
                    }
                }
            }
            let mut label = 0;
            for &nb in neighbors[..n].iter().filter(|&&l| l != 0) {
                label = if label == 0 {
                    find(&mut parent, nb)
                } else {
                    union(&mut parent, label, nb)
                };
            }
            if label == 0 {
                label = parent.len() as u32;
                parent.push(label);
            }
            labels[y * w + x] = label;
        }
    }

    let mut slot = vec![usize::MAX; parent.len()];
    let mut out: Vec<(Vec<(u32, u32)>, [u32; 4])> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let root = find(&mut parent, l) as usize;
            if slot[root] == usize::MAX {
                slot[root] = out.len();
                out.push((Vec::new(), [x as u32, y as u32, x as u32, y as u32]));
            }
            let (pixels, hull) = &mut out[slot[root]];
            pixels.push((x as u32, y as u32));
            hull[0] = hull[0].min(x as u32);
            hull[1] = hull[1].min(y as u32);
            hull[2] = hull[2].max(x as u32);
            hull[3] = hull[3].max(y as u32);
        }
    }
    out.into_iter()
        .map(|(pixels, [x0, y0, x1, y1])| Component {
            area: pixels.len(),
            bbox: BBox::from_corners(x0 as f64, y0 as f64, x1 as f64 + 1.0, y1 as f64 + 1.0)
                .expect("pixel hull is at least one pixel"),
            pixels,
        })
        .collect()
}
