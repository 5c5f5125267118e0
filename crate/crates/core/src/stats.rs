//! Percentiles and small numeric helpers shared by both filters.

/// 1-based nearest rank `ceil(p/100 · n)`, clamped to `[1, n]`.
///
/// `p·n` is formed before dividing so integer percentiles never suffer
/// binary rounding of `p/100`.
pub fn nearest_rank(p: f64, n: usize) -> usize {
    debug_assert!(n > 0);
    let rank = (p * n as f64 / 100.0).ceil();
    if rank.is_nan() || rank < 1.0 {
        1
    } else {
        (rank as usize).min(n)
    }
}

/// Nearest-rank percentile of an ascending slice. `None` on empty input.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    Some(sorted[nearest_rank(p, sorted.len()) - 1])
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, p)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Independent child seed for sub-task `stream` (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_values_sixtieth() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile_sorted(&v, 60.0), Some(6.0));
        assert_eq!(percentile_sorted(&v, 100.0), Some(10.0));
        assert_eq!(percentile_sorted(&v, 0.0), Some(1.0));
    }

    #[test]
    fn hundred_values_ninety_fifth() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile_sorted(&v, 95.0), Some(95.0));
        // 0.07 * 100 would round up to rank 8.
        assert_eq!(percentile_sorted(&v, 7.0), Some(7.0));
    }

    #[test]
    fn unsorted_input_and_empty() {
        assert_eq!(percentile(&[5.0, 1.0, 3.0], 50.0), Some(3.0));
        assert_eq!(percentile(&[], 50.0), None);
        assert_eq!(mean(&[]), None);
    }

    proptest::proptest! {
        #[test]
        fn percentile_is_a_member_and_monotone(
            v in proptest::collection::vec(-1e6f64..1e6, 1..200),
            p in 0.0f64..=100.0,
            q in 0.0f64..=100.0,
        ) {
            let a = percentile(&v, p).unwrap();
            proptest::prop_assert!(v.contains(&a));
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            proptest::prop_assert!(percentile(&v, lo).unwrap() <= percentile(&v, hi).unwrap());
            let below = v.iter().filter(|x| **x <= a).count();
            proptest::prop_assert!(below as f64 * 100.0 >= p * v.len() as f64 - 1e-9);
        }
    }
}
