use serde::{Deserialize, Serialize};

use crate::constraints::QuadraticBarrier;
use crate::Vector;

/// Where a belief entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Private,
    Public,
    Inferred { source_agent: usize, time: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefEntry {
    pub barrier: QuadraticBarrier,
    pub provenance: Provenance,
}

/// One agent's obstacle knowledge. Entries closer than `match_tol` to an
/// existing entry are dropped on insert, so the set only grows by distinct obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSet {
    entries: Vec<BeliefEntry>,
    match_tol: f64,
}

impl BeliefSet {
    pub fn new(match_tol: f64) -> Self {
        Self { entries: Vec::new(), match_tol }
    }

    pub fn match_tol(&self) -> f64 {
        self.match_tol
    }

    pub fn entries(&self) -> &[BeliefEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Returns `true` when the barrier was new.
    pub fn insert(&mut self, barrier: QuadraticBarrier, provenance: Provenance) -> bool {
        if self.find(&barrier.theta).is_some() {
            return false;
        }
        self.entries.push(BeliefEntry { barrier, provenance });
        true
    }

    /// First entry whose center lies within `match_tol` of `theta`.
    pub fn find(&self, theta: &Vector) -> Option<&BeliefEntry> {
        self.entries.iter().find(|e| (&e.barrier.theta - theta).norm() <= self.match_tol)
    }

    pub fn contains(&self, theta: &Vector) -> bool {
        self.find(theta).is_some()
    }

    pub fn inferred(&self) -> impl Iterator<Item = &BeliefEntry> {
        self.entries.iter().filter(|e| matches!(e.provenance, Provenance::Inferred { .. }))
    }

    /// Keeps the entries selected by `keep`, preserving insertion order.
    pub fn filtered(&self, mut keep: impl FnMut(&BeliefEntry) -> bool) -> BeliefSet {
        BeliefSet { entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(), match_tol: self.match_tol }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector;

    #[test]
    fn insert_deduplicates_within_tolerance() {
        let mut b = BeliefSet::new(0.25);
        let ob = |x: f64| QuadraticBarrier::circle(vector(&[x, 0.0]), 1.0).unwrap();
        assert!(b.insert(ob(0.0), Provenance::Private));
        assert!(!b.insert(ob(0.2), Provenance::Inferred { source_agent: 1, time: 3 }));
        assert!(b.insert(ob(0.3), Provenance::Public));
        assert_eq!(b.len(), 2);
        assert_eq!(b.inferred().count(), 0);
    }

    proptest::proptest! {
        #[test]
        fn entries_stay_apart(points in proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 0..40)) {
            let mut b = BeliefSet::new(0.5);
            for (i, (x, y)) in points.iter().enumerate() {
                let before = b.len();
                let added = b.insert(QuadraticBarrier::circle(vector(&[*x, *y]), 1.0).unwrap(), Provenance::Inferred { source_agent: 0, time: i });
                proptest::prop_assert_eq!(b.len(), before + added as usize);
            }
            for (i, e) in b.entries().iter().enumerate() {
                for f in &b.entries()[i + 1..] {
                    proptest::prop_assert!((&e.barrier.theta - &f.barrier.theta).norm() > 0.5);
                }
            }
        }
    }
}
