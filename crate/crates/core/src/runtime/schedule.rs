//! Block-to-worker scheduling and the worker pool that runs parallel block stages.
//!
//! Each block draws from its own random stream, so the merged state after a stage is
//! the same whichever worker ran a block and in whatever order.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data::{BlockKey, GenotypeDataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub workers: usize,
    /// Worker of each block, in block order.
    pub assignment: Vec<usize>,
    /// Total cost per worker.
    pub loads: Vec<u64>,
}

impl Schedule {
    pub fn makespan(&self) -> u64 {
        self.loads.iter().copied().max().unwrap_or(0)
    }

    /// Block indices per worker, in block order.
    pub fn buckets(&self) -> Vec<Vec<usize>> {
        let mut b = vec![Vec::new(); self.workers];
        for (i, &w) in self.assignment.iter().enumerate() {
            b[w].push(i);
        }
        b
    }
}

/// Greedy longest-processing-time assignment: blocks in decreasing cost order (ties
/// by index) each go to the currently least-loaded worker (ties by worker index).
pub fn plan_schedule(costs: &[u64], workers: usize) -> Result<Schedule> {
    if workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| costs[b].cmp(&costs[a]).then(a.cmp(&b)));
    let mut loads = vec![0u64; workers];
    let mut assignment = vec![0usize; costs.len()];
    for i in order {
        let w = (0..workers).min_by_key(|&w| (loads[w], w)).expect("workers >= 1");
        assignment[i] = w;
        loads[w] += costs[i];
    }
    Ok(Schedule {
        workers,
        assignment,
        loads,
    })
}

/// Cost estimate of a block: subjects × loci it touches.
pub fn block_cost(ds: &GenotypeDataset, key: &BlockKey) -> u64 {
    match *key {
        BlockKey::GeneGroup { gene, group } => {
            (ds.group_sizes()[group] * ds.gene_len(gene)).max(1) as u64
        }
        BlockKey::SubjectGene { gene, .. } => ds.gene_len(gene).max(1) as u64,
    }
}

pub fn plan_blocks(ds: &GenotypeDataset, keys: &[BlockKey], workers: usize) -> Result<Schedule> {
    let costs: Vec<u64> = keys.iter().map(|k| block_cost(ds, k)).collect();
    plan_schedule(&costs, workers)
}

/// Fixed-size worker pool. With one worker everything runs inline.
pub struct Executor {
    workers: usize,
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Executor({} workers)", self.workers)
    }
}

impl Executor {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Worker(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self { workers, pool })
    }

    pub fn sequential() -> Self {
        Self {
            workers: 1,
            pool: None,
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Runs `f` on every block. The schedule's worker count may differ from the
    /// pool size; buckets are simply handed to the pool. On failure the first error in
    /// block order is returned and the caller must discard the partially updated state.
    pub fn run<B, F>(&self, blocks: &mut [B], schedule: &Schedule, f: F) -> Result<()>
    where
        B: Send,
        F: Fn(usize, &mut B) -> Result<()> + Sync,
    {
        if schedule.assignment.len() != blocks.len() {
            return Err(Error::Internal(format!(
                "schedule covers {} blocks, stage has {}",
                schedule.assignment.len(),
                blocks.len()
            )));
        }
        let call = |i: usize, b: &mut B| -> Result<()> {
            match catch_unwind(AssertUnwindSafe(|| f(i, b))) {
                Ok(r) => r,
                Err(p) => {
                    let msg = p
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "panic".into());
                    Err(Error::Worker(format!("block {i}: {msg}")))
                }
            }
        };
        let Some(pool) = &self.pool else {
            for (i, b) in blocks.iter_mut().enumerate() {
                call(i, b)?;
            }
            return Ok(());
        };
        let mut buckets: Vec<Vec<(usize, &mut B)>> = (0..schedule.workers).map(|_| Vec::new()).collect();
        for (i, b) in blocks.iter_mut().enumerate() {
            buckets[schedule.assignment[i]].push((i, b));
        }
        let errors: Mutex<Vec<(usize, Error)>> = Mutex::new(Vec::new());
        pool.scope(|s| {
            for bucket in buckets {
                let errors = &errors;
                let call = &call;
                s.spawn(move |_| {
                    for (i, b) in bucket {
                        if let Err(e) = call(i, b) {
                            errors.lock().expect("error list").push((i, e));
                            return;
                        }
                    }
                });
            }
        });
        let mut errors = errors.into_inner().expect("error list");
        errors.sort_by_key(|(i, _)| *i);
        match errors.into_iter().next() {
            Some((_, e)) => Err(e),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{RngStream, Stage, StreamKey};
    use rand::RngCore;

    #[test]
    fn single_worker_takes_everything() {
        let s = plan_schedule(&[3, 1, 4, 1, 5], 1).unwrap();
        assert!(s.assignment.iter().all(|&w| w == 0));
        assert_eq!(s.loads, vec![14]);
    }

    #[test]
    fn equal_blocks_split_evenly() {
        let s = plan_schedule(&[2, 2, 2, 2], 2).unwrap();
        assert_eq!(s.loads, vec![4, 4]);
        assert_eq!(s.buckets().iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2]);
    }

    #[test]
    fn lpt_by_hand() {
        // 5 → w0, 3 → w1, 2 → w1 (load 3 < 5), 2 → w0: loads 7 and 5
        let s = plan_schedule(&[5, 3, 2, 2], 2).unwrap();
        assert_eq!(s.assignment, vec![0, 1, 1, 0]);
        assert_eq!(s.makespan(), 7);
        assert!(plan_schedule(&[1], 0).is_err());
    }

    fn stage(workers: usize) -> Vec<u64> {
        let mut blocks: Vec<u64> = vec![0; 64];
        let costs: Vec<u64> = (0..64).map(|i| 1 + (i * 7 % 5) as u64).collect();
        let s = plan_schedule(&costs, workers).unwrap();
        let ex = Executor::new(workers).unwrap();
        for sweep in 0..3 {
            ex.run(&mut blocks, &s, |i, b| {
                let mut r = RngStream::keyed(9, StreamKey::new(Stage::Mixture, i, 0, 0, sweep));
                *b = b.wrapping_mul(31).wrapping_add(r.next_u64());
                Ok(())
            })
            .unwrap();
        }
        blocks
    }

    #[test]
    fn results_independent_of_worker_count() {
        let base = stage(1);
        for w in [2, 4, 8] {
            assert_eq!(stage(w), base);
        }
    }

    #[test]
    fn worker_failure_surfaces_first_error() {
        let mut blocks = vec![0u8; 10];
        let s = plan_schedule(&[1; 10], 3).unwrap();
        let ex = Executor::new(3).unwrap();
        let e = ex
            .run(&mut blocks, &s, |i, _| {
                if i == 4 || i == 7 {
                    Err(Error::Internal(format!("bad {i}")))
                } else {
                    Ok(())
                }
            })
            .unwrap_err();
        assert_eq!(e.to_string(), "internal consistency error: bad 4");
        let e = ex
            .run(&mut blocks, &s, |i, _| {
                if i == 2 {
                    panic!("boom");
                }
                Ok(())
            })
            .unwrap_err();
        assert!(matches!(e, Error::Worker(_)));
    }
}
