//! 1-dimensional Weisfeiler-Lehman colour refinement as a graph certificate.

use super::Graph;

/// Digest of the final 1-WL colour multiset of a graph.
///
/// Equal for isomorphic graphs; unequal digests certify non-isomorphism
/// (up to 64-bit collisions).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WlHash(pub u64);

/// FNV-1a over 64-bit words. Fixed constants, so digests are stable across
/// runs, platforms and toolchains.
struct Fnv(u64);

impl Fnv {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;

    fn new() -> Self {
        Fnv(Self::OFFSET)
    }

    fn write_u64(&mut self, x: u64) {
        for b in x.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(Self::PRIME);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Runs `iterations` rounds of colour refinement (default: one per vertex)
/// and digests the sorted final colours.
///
/// Initial colours are vertex degrees, or the feature rows when
/// `use_features` is set. A round recolours each vertex by its own colour
/// together with the sorted multiset of its neighbours' colours. Colours are
/// content digests rather than per-graph dictionary indices, so the same
/// signature gets the same colour in every graph and digests are comparable.
pub fn wl_hash(g: &Graph, iterations: Option<usize>, use_features: bool) -> WlHash {
    let n = g.num_vertices();
    let rounds = iterations.unwrap_or(n).max(1);
    let neighbors: Vec<Vec<usize>> = (0..n).map(|v| g.neighbors(v).collect()).collect();

    let mut colors: Vec<u64> = (0..n)
        .map(|v| {
            let mut h = Fnv::new();
            if use_features {
                h.write_u64(1);
                for x in g.features().row(v).iter() {
                    // +0.0 and -0.0 are the same feature value
                    h.write_u64((x + 0.0).to_bits());
                }
            } else {
                h.write_u64(0);
                h.write_u64(neighbors[v].len() as u64);
            }
            h.finish()
        })
        .collect();

    let mut scratch = Vec::new();
    for _ in 0..rounds {
        let next: Vec<u64> = (0..n)
            .map(|v| {
                scratch.clear();
                scratch.extend(neighbors[v].iter().map(|&u| colors[u]));
                scratch.sort_unstable();
                let mut h = Fnv::new();
                h.write_u64(colors[v]);
                h.write_u64(scratch.len() as u64);
                for &c in &scratch {
                    h.write_u64(c);
                }
                h.finish()
            })
            .collect();
        colors = next;
    }

    colors.sort_unstable();
    let mut h = Fnv::new();
    h.write_u64(n as u64);
    for c in colors {
        h.write_u64(c);
    }
    WlHash(h.finish())
}
