//! Fully symmetric orbits: all coordinate permutations and sign changes of a
//! generator point.

/// Canonical form of a generator: absolute values sorted in ascending order.
pub fn canonical(generator: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = generator.iter().map(|v| v.abs()).collect();
    g.sort_by(|a, b| a.total_cmp(b));
    g
}

/// Number of distinct points in the orbit of `generator`:
/// `d! / prod(m_k!) * 2^(nonzero entries)` where `m_k` are the multiplicities
/// of the distinct absolute values.
pub fn orbit_size(generator: &[f64]) -> usize {
    let g = canonical(generator);
    let d = g.len();
    let mut perms: u128 = 1;
    // multinomial built incrementally: C(1,1) * C(2, m) * ... keeps values small
    let mut placed = 0u128;
    let mut run = 0u128;
    for i in 0..d {
        if i > 0 && g[i] != g[i - 1] {
            run = 0;
        }
        run += 1;
        placed += 1;
        // multiply by placed / run: choose the position of this element within its run
        perms = perms * placed / run;
    }
    let nonzero = g.iter().filter(|&&v| v != 0.0).count() as u32;
    (perms << nonzero) as usize
}

/// Expands the orbit of `generator`, appending `d`-tuples to `out` (flat,
/// row-major). Permutations are visited in lexicographic order of the
/// canonical generator; within each permutation, sign patterns in binary
/// counting order over the nonzero entries.
pub fn expand_orbit(generator: &[f64], out: &mut Vec<f64>) -> usize {
    let mut perm = canonical(generator);
    let d = perm.len();
    let mut count = 0;
    loop {
        let nz: Vec<usize> = (0..d).filter(|&i| perm[i] != 0.0).collect();
        for mask in 0u64..(1u64 << nz.len()) {
            let start = out.len();
            out.extend_from_slice(&perm);
            for (bit, &i) in nz.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    out[start + i] = -out[start + i];
                }
            }
            count += 1;
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    count
}

/// Advances to the next lexicographic permutation of a multiset; returns false
/// after the last one.
fn next_permutation(v: &mut [f64]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn keyset(flat: &[f64], d: usize) -> HashSet<Vec<u64>> {
        flat.chunks(d)
            .map(|p| p.iter().map(|v| v.to_bits()).collect())
            .collect()
    }

    #[test]
    fn sizes_match_expansion() {
        let gens: &[&[f64]] = &[
            &[0.0, 0.0, 0.0],
            &[0.5, 0.0, 0.0],
            &[0.5, 0.5, 0.0],
            &[0.5, 0.5, 0.5],
            &[0.3, 0.7, 0.0, 0.7],
            &[0.1, 0.2, 0.3, 0.4],
        ];
        for g in gens {
            let mut out = Vec::new();
            let n = expand_orbit(g, &mut out);
            assert_eq!(n, orbit_size(g), "generator {g:?}");
            assert_eq!(keyset(&out, g.len()).len(), n, "duplicates for {g:?}");
        }
    }

    #[test]
    fn known_orbit_sizes() {
        assert_eq!(orbit_size(&[0.0; 5]), 1);
        assert_eq!(orbit_size(&[0.3, 0.0, 0.0, 0.0, 0.0]), 10);
        assert_eq!(orbit_size(&[0.9, 0.9, 0.0, 0.0, 0.0]), 40);
        assert_eq!(orbit_size(&[0.6; 5]), 32);
        assert_eq!(orbit_size(&[0.1, 0.2, 0.3, 0.4]), 24 * 16);
    }

    #[test]
    fn signs_are_applied_only_to_nonzero_entries() {
        let mut out = Vec::new();
        expand_orbit(&[0.0, 0.5], &mut out);
        // (0, ±0.5) and (±0.5, 0)
        assert_eq!(out, vec![0.0, 0.5, 0.0, -0.5, 0.5, 0.0, -0.5, 0.0]);
    }
}
