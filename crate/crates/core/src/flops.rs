//! Per-thread floating-point operation counters.
//!
//! Counting table (a fused multiply-add counts as 2):
//!
//! | operation                                   | flops          |
//! |---------------------------------------------|----------------|
//! | squared distance between two `d`-vectors    | `3d - 1`       |
//! | square root, exp, division                  | 1 each         |
//! | Gaussian edge weight from a squared distance| 2 (scale, exp) |
//! | degree of a row with `r` stored weights     | `r - 1`        |
//! | `D^{-1/2}` entry                            | 2              |
//! | normalized off-diagonal entry               | 2              |
//! | sparse mat-vec                              | `2 nnz`        |
//! | dot product / axpy of length `n`            | `2n`           |
//! | Sturm count on a `k`-tridiagonal            | `3k`           |
//! | tridiagonal solve of size `k`               | `8k`           |
//! | Jacobi rotation on an `n`-matrix with vecs  | `12n`          |
//!
//! Counters are off until [`enable`] is called on the current thread.

use std::cell::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    /// Pairwise distances, bandwidth, and neighbor selection.
    Distances,
    /// Gaussian edge weights.
    Adjacency,
    Laplacian,
    Eigensolver,
    Stem,
    Scan,
    Merge,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Distances,
        Stage::Adjacency,
        Stage::Laplacian,
        Stage::Eigensolver,
        Stage::Stem,
        Stage::Scan,
        Stage::Merge,
    ];

    /// The stages that make up spectral traversal construction.
    pub const TRAVERSAL: [Stage; 4] =
        [Stage::Distances, Stage::Adjacency, Stage::Laplacian, Stage::Eigensolver];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Distances => "distances",
            Stage::Adjacency => "adjacency",
            Stage::Laplacian => "laplacian",
            Stage::Eigensolver => "eigensolver",
            Stage::Stem => "stem",
            Stage::Scan => "scan",
            Stage::Merge => "merge",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

thread_local! {
    static ENABLED: Cell<bool> = const { Cell::new(false) };
    static COUNTS: [Cell<u64>; 7] = const { [
        Cell::new(0), Cell::new(0), Cell::new(0), Cell::new(0),
        Cell::new(0), Cell::new(0), Cell::new(0),
    ] };
}

pub fn enable() {
    ENABLED.with(|e| e.set(true));
}

pub fn disable() {
    ENABLED.with(|e| e.set(false));
}

pub fn is_enabled() -> bool {
    ENABLED.with(|e| e.get())
}

pub fn reset() {
    COUNTS.with(|c| c.iter().for_each(|x| x.set(0)));
}

#[inline]
pub fn add(stage: Stage, ops: u64) {
    if is_enabled() {
        COUNTS.with(|c| {
            let cell = &c[stage.slot()];
            cell.set(cell.get() + ops);
        });
    }
}

pub fn count(stage: Stage) -> u64 {
    COUNTS.with(|c| c[stage.slot()].get())
}

pub fn total(stages: &[Stage]) -> u64 {
    stages.iter().map(|&s| count(s)).sum()
}

/// Enables counting on this thread for the lifetime of the guard, starting from zero.
pub struct Scope {
    was_enabled: bool,
}

impl Scope {
    pub fn start() -> Self {
        let was_enabled = is_enabled();
        reset();
        enable();
        Scope { was_enabled }
    }
}

impl Drop for Scope {
    fn drop(&mut self) {
        if !self.was_enabled {
            disable();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_zeroes_every_stage() {
        let _g = Scope::start();
        add(Stage::Scan, 17);
        add(Stage::Laplacian, 3);
        reset();
        for s in Stage::ALL {
            assert_eq!(count(s), 0);
        }
    }

    #[test]
    fn disabled_counters_ignore_adds() {
        disable();
        reset();
        add(Stage::Merge, 5);
        assert_eq!(count(Stage::Merge), 0);
    }
}
