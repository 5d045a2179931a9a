//! Bounded non-dominated archive over (latency, energy).

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Objectives {
    pub latency_s: f64,
    pub energy_j: f64,
}

impl Objectives {
    pub fn edp(&self) -> f64 {
        self.latency_s * self.energy_j
    }
}

/// a ≤ b in both objectives and strictly better in at least one.
pub fn dominates(a: &Objectives, b: &Objectives) -> bool {
    a.latency_s <= b.latency_s
        && a.energy_j <= b.energy_j
        && (a.latency_s < b.latency_s || a.energy_j < b.energy_j)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArchiveEntry<T> {
    pub id: String,
    pub objectives: Objectives,
    pub item: T,
}

/// Members are kept sorted by latency (then id). Points with identical
/// objectives collapse onto the lexicographically smallest id.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParetoArchive<T> {
    capacity: usize,
    entries: Vec<ArchiveEntry<T>>,
}

impl<T: Clone> ParetoArchive<T> {
    pub fn new(capacity: usize) -> Self {
        ParetoArchive {
            capacity: capacity.max(2),
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ArchiveEntry<T>] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ArchiveEntry<T>> {
        self.entries
    }

    /// Returns true when the archive changed.
    pub fn insert(&mut self, id: String, objectives: Objectives, item: T) -> bool {
        if !(objectives.latency_s.is_finite() && objectives.energy_j.is_finite()) {
            return false;
        }
        for e in &self.entries {
            if dominates(&e.objectives, &objectives) {
                return false;
            }
            if e.objectives == objectives && e.id <= id {
                return false;
            }
        }
        self.entries
            .retain(|e| !(dominates(&objectives, &e.objectives) || e.objectives == objectives));
        let entry = ArchiveEntry {
            id,
            objectives,
            item,
        };
        let pos = self.entries.partition_point(|e| {
            (e.objectives.latency_s, &e.id) < (entry.objectives.latency_s, &entry.id)
        });
        self.entries.insert(pos, entry);
        if self.entries.len() > self.capacity {
            self.evict_most_crowded();
        }
        true
    }

    /// Drops the interior member with the smallest crowding distance.
    fn evict_most_crowded(&mut self) {
        let n = self.entries.len();
        let span = |f: fn(&Objectives) -> f64| {
            let lo = self
                .entries
                .iter()
                .map(|e| f(&e.objectives))
                .fold(f64::INFINITY, f64::min);
            let hi = self
                .entries
                .iter()
                .map(|e| f(&e.objectives))
                .fold(f64::NEG_INFINITY, f64::max);
            (hi - lo).max(f64::MIN_POSITIVE)
        };
        let (sl, se) = (span(|o| o.latency_s), span(|o| o.energy_j));
        let mut victim: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 1..n - 1 {
            let (a, b) = (
                &self.entries[i - 1].objectives,
                &self.entries[i + 1].objectives,
            );
            let d = (b.latency_s - a.latency_s).abs() / sl + (b.energy_j - a.energy_j).abs() / se;
            let better = match victim {
                None => true,
                Some(v) => d < best || (d == best && self.entries[i].id > self.entries[v].id),
            };
            if better {
                best = d;
                victim = Some(i);
            }
        }
        if let Some(v) = victim {
            self.entries.remove(v);
        }
    }

    pub fn best_by<F: Fn(&Objectives) -> f64>(&self, f: F) -> Option<&ArchiveEntry<T>> {
        self.entries.iter().min_by(|a, b| {
            f(&a.objectives)
                .partial_cmp(&f(&b.objectives))
                .unwrap()
                .then_with(|| a.id.cmp(&b.id))
        })
    }
}
