//! Brute-force ROUGE counts, written for clarity rather than speed.

/// Clipped n-gram overlap by direct scanning: for each n-gram position in
/// the candidate that is the first occurrence of its n-gram, add the
/// smaller of its two occurrence counts.
pub fn brute_overlap<T: PartialEq>(cand: &[T], reference: &[T], n: usize) -> usize {
    let grams = |s: &[T]| -> usize {
        if s.len() >= n {
            s.len() - n + 1
        } else {
            0
        }
    };
    let count = |s: &[T], g: &[T]| (0..grams(s)).filter(|&i| &s[i..i + n] == g).count();
    let mut total = 0;
    for i in 0..grams(cand) {
        let g = &cand[i..i + n];
        if (0..i).any(|j| &cand[j..j + n] == g) {
            continue;
        }
        total += count(cand, g).min(count(reference, g));
    }
    total
}

fn is_subsequence<T: PartialEq>(sub: &[&T], seq: &[T]) -> bool {
    let mut it = seq.iter();
    sub.iter().all(|x| it.any(|y| y == *x))
}

/// Longest common subsequence length by enumerating every subsequence of
/// `a`. Exponential in `a.len()`.
pub fn brute_lcs<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    assert!(a.len() <= 20, "exhaustive LCS is limited to short inputs");
    (0u32..1 << a.len())
        .filter_map(|mask| {
            let sub: Vec<&T> = (0..a.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| &a[i])
                .collect();
            is_subsequence(&sub, b).then_some(sub.len())
        })
        .max()
        .unwrap_or(0)
}
