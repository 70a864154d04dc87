//! Dynamic-time-warping contour similarity between basic melodies.

use mf_core::analysis::BasicMelody;

use crate::error::{GenError, Result};

/// Largest per-step distance between two pitches (1 vs 15).
pub const MAX_STEP_COST: f64 = 14.0;

/// Replaces rests by the previous sounding pitch; leading rests take the
/// first sounding pitch.
pub fn fill_rests(pitches: &[u8]) -> Vec<u8> {
    let first = pitches.iter().copied().find(|&p| p != 0).unwrap_or(0);
    let mut last = first;
    pitches
        .iter()
        .map(|&p| {
            if p != 0 {
                last = p;
            }
            last
        })
        .collect()
}

/// Minimum total cost over warping paths, breaking ties by the shorter path.
/// Returns `(cost, path length)`.
pub fn dtw_alignment(a: &[u8], b: &[u8]) -> (u32, usize) {
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![(u32::MAX, usize::MAX); m]; n];
    for i in 0..n {
        for j in 0..m {
            let local = (a[i] as i32 - b[j] as i32).unsigned_abs();
            let prev = if i == 0 && j == 0 {
                (0, 0)
            } else {
                let mut best = (u32::MAX, usize::MAX);
                if i > 0 {
                    best = best.min(d[i - 1][j]);
                }
                if j > 0 {
                    best = best.min(d[i][j - 1]);
                }
                if i > 0 && j > 0 {
                    best = best.min(d[i - 1][j - 1]);
                }
                best
            };
            d[i][j] = (prev.0 + local, prev.1 + 1);
        }
    }
    d[n - 1][m - 1]
}

pub fn similarity_from(cost: u32, length: usize) -> f64 {
    (1.0 - (cost as f64 / length as f64) / MAX_STEP_COST).clamp(0.0, 1.0)
}

pub fn contour_similarity(a: &[u8], b: &[u8]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(GenError::EmptyInput);
    }
    let (cost, len) = dtw_alignment(&fill_rests(a), &fill_rests(b));
    Ok(similarity_from(cost, len))
}

pub fn dtw_contour_similarity(a: &BasicMelody, b: &BasicMelody) -> Result<f64> {
    contour_similarity(&a.values(), &b.values())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_cases() {
        assert_eq!(contour_similarity(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(contour_similarity(&[1, 1, 1, 1], &[15, 15]).unwrap(), 0.0);
        assert_eq!(contour_similarity(&[1, 2, 3, 4], &[1, 2, 2, 3, 4]).unwrap(), 1.0);
        // one step off everywhere over a diagonal of 3
        assert!((contour_similarity(&[2, 3, 4], &[3, 4, 5]).unwrap() - (1.0 - (2.0 / 4.0) / 14.0)).abs() < 1e-12);
        assert!(matches!(contour_similarity(&[], &[1]), Err(GenError::EmptyInput)));
    }

    #[test]
    fn rests_take_previous_pitch() {
        assert_eq!(fill_rests(&[0, 0, 5, 0, 7, 0]), vec![5, 5, 5, 5, 7, 7]);
        assert_eq!(fill_rests(&[0, 0]), vec![0, 0]);
        assert_eq!(contour_similarity(&[5, 0, 7], &[5, 5, 7]).unwrap(), 1.0);
    }

    #[test]
    fn shortest_path_among_cheapest() {
        // Identical sequences: the diagonal (length 3) beats detours of equal cost.
        assert_eq!(dtw_alignment(&[4, 4, 4], &[4, 4, 4]), (0, 3));
        assert_eq!(dtw_alignment(&[1], &[2, 2, 2]), (3, 3));
    }
}
