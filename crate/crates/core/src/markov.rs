//! Absorption probabilities of finite Markov chains by state reduction.
//!
//! Each eliminated state has its holding probability computed as the sum of
//! its outgoing probabilities, so no subtraction occurs and very small
//! absorption probabilities keep full relative accuracy.

use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Transient(usize),
    Absorbing(usize),
}

#[derive(Clone, Debug)]
pub struct AbsorbingChain {
    n: usize,
    n_abs: usize,
    /// Keys below `n` are transient states, `n + a` is absorbing state `a`.
    rows: Vec<BTreeMap<usize, f64>>,
}

impl AbsorbingChain {
    pub fn new(n_transient: usize, n_absorbing: usize) -> Self {
        AbsorbingChain {
            n: n_transient,
            n_abs: n_absorbing,
            rows: vec![BTreeMap::new(); n_transient],
        }
    }

    pub fn n_transient(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, from: usize, to: Target, p: f64) {
        let key = match to {
            Target::Transient(j) => j,
            Target::Absorbing(a) => self.n + a,
        };
        *self.rows[from].entry(key).or_insert(0.0) += p;
    }

    /// Distribution of the absorbing state reached from `start`.
    /// States are eliminated in index order, so callers should number them
    /// to keep fill-in small.
    pub fn absorption_from(&self, start: usize) -> Vec<f64> {
        let n = self.n;
        let mut rows = self.rows.clone();
        let mut preds: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for (i, row) in rows.iter().enumerate() {
            for &j in row.keys() {
                if j < n && j != i {
                    preds[j].insert(i);
                }
            }
        }
        for k in 0..n {
            if k == start {
                continue;
            }
            let out: Vec<(usize, f64)> = rows[k].iter().filter(|(&j, _)| j != k).map(|(&j, &p)| (j, p)).collect();
            let tot: f64 = out.iter().map(|(_, p)| p).sum();
            let ps: Vec<usize> = std::mem::take(&mut preds[k]).into_iter().collect();
            for i in ps {
                let pik = match rows[i].remove(&k) {
                    Some(p) => p,
                    None => continue,
                };
                if tot > 0.0 {
                    for &(j, p) in &out {
                        *rows[i].entry(j).or_insert(0.0) += pik * p / tot;
                        if j < n && j != i {
                            preds[j].insert(i);
                        }
                    }
                }
            }
            for &(j, _) in &out {
                if j < n {
                    preds[j].remove(&k);
                }
            }
            rows[k].clear();
        }
        let mut res = vec![0.0; self.n_abs];
        let mut tot = 0.0;
        for (&j, &p) in &rows[start] {
            if j >= n {
                res[j - n] += p;
                tot += p;
            }
        }
        if tot > 0.0 {
            for r in res.iter_mut() {
                *r /= tot;
            }
        }
        res
    }
}
