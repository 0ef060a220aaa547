use super::{result_from, Assignment, PlacementResult, Problem, SolverStats};
use crate::crossbar::EnduranceMap;
use crate::error::{Error, Result};
use crate::workload::Cluster;

/// Largest number of complete placements the oracle will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 20_000_000;
const MAX_SIDE: usize = 6;

fn arrangements(m: usize, k: usize) -> u128 {
    (0..k).map(|i| (m - i) as u128).product()
}

/// Exact maximum of the cluster lifetime by exhaustive enumeration.
///
/// Placements are visited in lexicographic (rows, cols) order and only a
/// strictly better one replaces the incumbent, so ties resolve to the
/// lexicographically smallest optimum. Partial column assignments whose
/// running minimum can no longer beat the incumbent are cut.
pub fn brute_force_place(cluster: &Cluster, maps: &EnduranceMap) -> Result<PlacementResult> {
    let problem = Problem::new(cluster, maps)?;
    let m = problem.m;
    let count = arrangements(m, problem.n_pre).saturating_mul(arrangements(m, problem.n_post));
    if problem.n_pre > MAX_SIDE || problem.n_post > MAX_SIDE || count > BRUTE_FORCE_LIMIT {
        return Err(Error::Size(format!(
            "cluster {} is {}×{} on a {m}×{m} crossbar ({count} placements); use the local-search solver",
            cluster.id, problem.n_pre, problem.n_post
        )));
    }

    let mut by_post: Vec<Vec<usize>> = vec![Vec::new(); problem.n_post];
    for (idx, &(_, j, _, _)) in problem.synapses.iter().enumerate() {
        by_post[j].push(idx);
    }

    let mut search = Search {
        problem: &problem,
        by_post,
        current: Assignment {
            rows: vec![0; problem.n_pre],
            cols: vec![0; problem.n_post],
        },
        row_used: vec![false; m],
        col_used: vec![false; m],
        best: None,
        leaves: 0,
    };
    search.rows(0);
    let (best, _) = search.best.expect("at least one placement exists");
    let stats = SolverStats {
        iterations: search.leaves,
        restarts: 0,
        accepted: 0,
        oracle_used: true,
    };
    Ok(result_from(cluster, &problem, &best, stats))
}

struct Search<'p, 'm> {
    problem: &'p Problem<'m>,
    by_post: Vec<Vec<usize>>,
    current: Assignment,
    row_used: Vec<bool>,
    col_used: Vec<bool>,
    best: Option<(Assignment, f64)>,
    leaves: usize,
}

impl Search<'_, '_> {
    fn rows(&mut self, i: usize) {
        if i == self.problem.n_pre {
            self.cols(0, f64::INFINITY);
            return;
        }
        for k in 0..self.problem.m {
            if !self.row_used[k] {
                self.row_used[k] = true;
                self.current.rows[i] = k;
                self.rows(i + 1);
                self.row_used[k] = false;
            }
        }
    }

    fn cols(&mut self, j: usize, running: f64) {
        if let Some((_, best)) = self.best {
            if running <= best {
                return;
            }
        }
        if j == self.problem.n_post {
            self.leaves += 1;
            self.best = Some((self.current.clone(), running));
            return;
        }
        for l in 0..self.problem.m {
            if !self.col_used[l] {
                self.col_used[l] = true;
                self.current.cols[j] = l;
                let mut next = running;
                for &idx in &self.by_post[j] {
                    next = next.min(self.problem.lifetime_of(idx, &self.current));
                }
                self.cols(j + 1, next);
                self.col_used[l] = false;
            }
        }
    }
}
