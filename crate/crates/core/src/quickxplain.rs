//! Junker's QuickXplain over an arbitrary consistency oracle.
//!
//! Candidates are ordered by preference: earlier candidates are kept in the
//! conflict when there is a choice.

use serde::Serialize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct QxStats {
    /// Oracle calls.
    pub checks: u64,
    /// Candidate count.
    pub n: usize,
    /// Conflict size (0 without conflict).
    pub k: usize,
}

impl QxStats {
    /// `ceil(2k * log2(n/k)) + 2k`, read as `2k` when `k = n`. Without a
    /// conflict among the candidates (k = 0) at most two checks are made:
    /// the full set and the background alone.
    pub fn bound(&self) -> u64 {
        check_bound(self.n, self.k)
    }
}

pub fn check_bound(n: usize, k: usize) -> u64 {
    if k == 0 || n == 0 {
        return 2;
    }
    let log = if k >= n { 0.0 } else { (n as f64 / k as f64).log2() };
    // the small epsilon keeps exact powers of two from rounding up
    (2.0 * k as f64 * log - 1e-9).ceil().max(0.0) as u64 + 2 * k as u64
}

struct Qx<'f, T> {
    consistent: &'f mut dyn FnMut(&[T]) -> bool,
    checks: u64,
}

impl<T: Clone> Qx<'_, T> {
    fn check(&mut self, set: &[T]) -> bool {
        self.checks += 1;
        (self.consistent)(set)
    }

    // the larger half goes first; splitting the other way overshoots the
    // bound by a few checks when n is not a power of two
    fn split(&mut self, b: &mut Vec<T>, delta_nonempty: bool, c: &[T]) -> Vec<T> {
        if delta_nonempty && !self.check(b) {
            return Vec::new();
        }
        if c.len() == 1 {
            return c.to_vec();
        }
        let (c1, c2) = c.split_at(c.len().div_ceil(2));
        let len = b.len();
        b.extend_from_slice(c1);
        let d2 = self.split(b, !c1.is_empty(), c2);
        b.truncate(len);
        b.extend_from_slice(&d2);
        let mut d1 = self.split(b, !d2.is_empty(), c1);
        b.truncate(len);
        d1.extend(d2);
        d1
    }
}

/// Returns a subset of `candidates` that is inconsistent together with
/// `background` and minimal under inclusion, or `None` when background and
/// all candidates are consistent. `consistent` receives background first.
pub fn quickxplain<T: Clone>(
    background: &[T],
    candidates: &[T],
    mut consistent: impl FnMut(&[T]) -> bool,
) -> (Option<Vec<T>>, QxStats) {
    let mut all = background.to_vec();
    all.extend_from_slice(candidates);
    let n = candidates.len();
    if consistent(&all) {
        return (None, QxStats { checks: 1, n, k: 0 });
    }
    let (out, mut stats) = quickxplain_inconsistent(background, candidates, consistent);
    stats.checks += 1;
    (Some(out), stats)
}

/// [`quickxplain`] without the initial check, for callers that already know
/// `background` plus `candidates` to be inconsistent.
pub fn quickxplain_inconsistent<T: Clone>(
    background: &[T],
    candidates: &[T],
    mut consistent: impl FnMut(&[T]) -> bool,
) -> (Vec<T>, QxStats) {
    let mut qx = Qx { consistent: &mut consistent, checks: 0 };
    let n = candidates.len();
    if candidates.is_empty() {
        return (Vec::new(), QxStats { checks: 0, n, k: 0 });
    }
    let mut b = background.to_vec();
    let out = qx.split(&mut b, !background.is_empty(), candidates);
    let k = out.len();
    (out, QxStats { checks: qx.checks, n, k })
}

#[cfg(test)]
mod tests {
    use super::*;

    // x = value literals over one variable: consistent iff all agree
    fn agree(set: &[(char, i32)]) -> bool {
        set.iter().all(|(v, x)| set.iter().all(|(w, y)| v != w || x == y))
    }

    #[test]
    fn pair() {
        let (c, s) = quickxplain(&[], &[('x', 1), ('x', 0)], agree);
        assert_eq!(c.unwrap(), [('x', 1), ('x', 0)]);
        assert_eq!(s.k, 2);
    }

    #[test]
    fn single_culprit() {
        let (c, s) = quickxplain(&[('x', 1)], &[('y', 2), ('x', 0), ('z', 4)], agree);
        assert_eq!(c.unwrap(), [('x', 0)]);
        assert!(s.checks <= s.bound());
    }

    #[test]
    fn no_conflict() {
        let (c, s) = quickxplain(&[], &[('x', 1), ('y', 0)], agree);
        assert!(c.is_none());
        assert_eq!(s.checks, 1);
    }

    #[test]
    fn inconsistent_background() {
        let (c, _) = quickxplain(&[('x', 1), ('x', 2)], &[('y', 0)], agree);
        assert_eq!(c.unwrap(), Vec::<(char, i32)>::new());
    }

    #[test]
    fn bounds() {
        assert_eq!(check_bound(8, 8), 16);
        assert_eq!(check_bound(8, 1), 8);
        assert_eq!(check_bound(60, 6), 52);
    }
}
