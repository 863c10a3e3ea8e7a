//! Sobol low-discrepancy sequence from published direction numbers.
//!
//! Direction numbers come from the Joe-Kuo D(6) table bundled under
//! `data/new-joe-kuo-6.64` (columns: dimension, polynomial degree s,
//! polynomial coefficients a, initial values m_i). The first dimension is
//! the van der Corput sequence and needs no table entry. Points are
//! generated in Gray-code order at 32-bit resolution, skipping the
//! all-zeros point.

use std::sync::OnceLock;

use super::HpoError;

/// Largest supported dimensionality (table size).
pub const MAX_DIMENSION: usize = 64;

const TABLE_TEXT: &str = include_str!("../../data/new-joe-kuo-6.64");
const BITS: usize = 32;

struct DimParams {
    a: u32,
    m: Vec<u32>,
}

fn table() -> &'static Vec<DimParams> {
    static TABLE: OnceLock<Vec<DimParams>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut rows = Vec::with_capacity(MAX_DIMENSION - 1);
        for line in TABLE_TEXT.lines().skip(1) {
            let mut fields = line.split_whitespace();
            let _d: usize = fields.next().expect("dimension column").parse().unwrap();
            let s: usize = fields.next().expect("degree column").parse().unwrap();
            let a: u32 = fields.next().expect("coefficient column").parse().unwrap();
            let m: Vec<u32> = fields.map(|f| f.parse().unwrap()).collect();
            assert_eq!(m.len(), s, "direction-number table row malformed");
            rows.push(DimParams { a, m });
        }
        rows
    })
}

/// Direction vectors for one dimension, fixed-point with the leading bit
/// at position 31.
fn direction_vectors(dim_index: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim_index == 0 {
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = 1 << (31 - i);
        }
        return v;
    }
    let params = &table()[dim_index - 1];
    let s = params.m.len();
    for i in 0..BITS {
        if i < s {
            v[i] = params.m[i] << (31 - i);
        } else {
            let mut value = v[i - s] ^ (v[i - s] >> s);
            for k in 1..s {
                if (params.a >> (s - 1 - k)) & 1 == 1 {
                    value ^= v[i - k];
                }
            }
            v[i] = value;
        }
    }
    v
}

/// First `count` points of the `dimension`-dimensional Sobol sequence,
/// all-zeros point skipped. Coordinates lie in [0, 1).
pub fn sobol_points(dimension: usize, count: usize) -> Result<Vec<Vec<f64>>, HpoError> {
    if dimension == 0 || dimension > MAX_DIMENSION {
        return Err(HpoError::UnsupportedDimension(dimension));
    }
    let directions: Vec<[u32; BITS]> = (0..dimension).map(direction_vectors).collect();
    let mut state = vec![0u32; dimension];
    let mut points = Vec::with_capacity(count);
    let scale = 1.0 / (1u64 << BITS) as f64;
    for index in 1..=count as u64 {
        let bit = index.trailing_zeros() as usize;
        for (d, dirs) in directions.iter().enumerate() {
            state[d] ^= dirs[bit];
        }
        points.push(state.iter().map(|&x| x as f64 * scale).collect());
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn one_dimensional_prefix_matches_reference() {
        let pts = sobol_points(1, 3).unwrap();
        assert_eq!(pts[0], vec![0.5]);
        assert_eq!(pts[1], vec![0.75]);
        assert_eq!(pts[2], vec![0.25]);
    }

    #[test]
    fn two_dimensional_first_point_is_center() {
        let pts = sobol_points(2, 1).unwrap();
        assert_eq!(pts[0], vec![0.5, 0.5]);
    }

    #[test]
    fn coordinates_in_unit_interval_no_duplicates() {
        for dim in [1, 3, 8, 64] {
            let pts = sobol_points(dim, 1024).unwrap();
            let mut seen = HashSet::new();
            for p in &pts {
                assert!(p.iter().all(|&x| (0.0..1.0).contains(&x)));
                let key: Vec<u64> = p.iter().map(|&x| x.to_bits()).collect();
                assert!(seen.insert(key), "duplicate point in dim {dim}");
            }
        }
    }

    #[test]
    fn stratification_per_coordinate() {
        // The underlying sequence (zero point included) fills every dyadic
        // interval of width 2^-k exactly once within the first 2^k points.
        for dim in [1, 2, 5, 13, 64] {
            for k in 1..=6usize {
                let n = 1 << k;
                let pts = sobol_points(dim, n - 1).unwrap();
                for c in 0..dim {
                    let mut strata: Vec<usize> = vec![0]; // implicit zero point
                    strata.extend(pts.iter().map(|p| (p[c] * n as f64) as usize));
                    strata.sort_unstable();
                    let expected: Vec<usize> = (0..n).collect();
                    assert_eq!(strata, expected, "dim {dim} coord {c} k {k}");
                }
            }
        }
    }

    #[test]
    fn dimension_limit_enforced() {
        assert!(matches!(
            sobol_points(65, 1),
            Err(HpoError::UnsupportedDimension(65))
        ));
        assert!(matches!(
            sobol_points(0, 1),
            Err(HpoError::UnsupportedDimension(0))
        ));
    }
}
