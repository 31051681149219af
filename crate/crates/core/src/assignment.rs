//! Optimal one-to-one assignment (Hungarian method).
//!
//! Rectangular problems are padded to square with zero-score dummy cells.
//! Among all optimal assignments the lexicographically smallest one (by
//! row, then column) is returned: after the shortest-augmenting-path solve,
//! the dual potentials identify every edge that can take part in an optimal
//! assignment, and rows are then fixed in order to their lowest feasible
//! column through alternating-cycle swaps.

/// Row-major score matrix; the assignment maximizes the total score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "score matrix shape");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Result of an assignment: `row_to_col[r]` is `None` for rows left
/// unassigned (more rows than columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub row_to_col: Vec<Option<usize>>,
    pub total: f64,
}

impl Assignment {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_to_col
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
    }
}

/// Reduced costs within this tolerance count as tight.
const TIGHT_EPS: f64 = 1e-9;

/// Maximum-score assignment with lexicographic tie-breaking.
pub fn maximize(scores: &ScoreMatrix) -> Assignment {
    let n = scores.rows.max(scores.cols);
    if n == 0 {
        return Assignment {
            row_to_col: vec![None; scores.rows],
            total: 0.0,
        };
    }
    let max_score = scores.data.iter().copied().fold(0.0f64, f64::max);
    // cost = max - score, dummies score 0
    let cost = |r: usize, c: usize| -> f64 {
        if r < scores.rows && c < scores.cols {
            max_score - scores.get(r, c)
        } else {
            max_score
        }
    };
    let (mut row_mate, u, v) = solve_min_cost(n, &cost);
    let scale = max_score.abs().max(1.0);
    let tight = |r: usize, c: usize| cost(r, c) - u[r] - v[c] <= TIGHT_EPS * scale;
    lexicographic_refine(n, &mut row_mate, &tight);

    let row_to_col: Vec<Option<usize>> = (0..scores.rows)
        .map(|r| Some(row_mate[r]).filter(|&c| c < scores.cols))
        .collect();
    let total = row_to_col
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| scores.get(r, c)))
        .sum();
    Assignment { row_to_col, total }
}

/// O(n³) shortest augmenting path with potentials on an n×n cost matrix.
/// Returns the row→column assignment and the dual potentials.
fn solve_min_cost(n: usize, cost: &dyn Fn(usize, usize) -> f64) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based internal indexing; index 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_mate = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_mate[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_mate[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_mate[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_mate[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_mate[j0] = col_mate[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_mate = vec![0usize; n];
    for j in 1..=n {
        row_mate[col_mate[j] - 1] = j - 1;
    }
    (row_mate, u[1..].to_vec(), v[1..].to_vec())
}

/// Rewrites an optimal perfect matching on the tight subgraph into the
/// lexicographically smallest one.
fn lexicographic_refine(n: usize, row_mate: &mut [usize], tight: &dyn Fn(usize, usize) -> bool) {
    let mut col_mate = vec![0usize; n];
    for (r, &c) in row_mate.iter().enumerate() {
        col_mate[c] = r;
    }
    let mut col_fixed = vec![false; n];
    for i in 0..n {
        let current = row_mate[i];
        for j in 0..current {
            if col_fixed[j] || !tight(i, j) {
                continue;
            }
            // row holding j must move; search an alternating path that ends
            // at `current` through rows > i
            let start = col_mate[j];
            if let Some(path) = alternating_path(n, i, start, j, current, &col_fixed, row_mate, &col_mate, tight) {
                // path: sequence of (row, new_col)
                for &(r, c) in &path {
                    row_mate[r] = c;
                    col_mate[c] = r;
                }
                row_mate[i] = j;
                col_mate[j] = i;
                break;
            }
        }
        col_fixed[row_mate[i]] = true;
    }
}

#[allow(clippy::too_many_arguments)]
fn alternating_path(
    n: usize,
    fixed_row: usize,
    start: usize,
    taken_col: usize,
    target_col: usize,
    col_fixed: &[bool],
    row_mate: &[usize],
    col_mate: &[usize],
    tight: &dyn Fn(usize, usize) -> bool,
) -> Option<Vec<(usize, usize)>> {
    // BFS over rows; parent[row] = (previous row, column it moved into)
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[start] = true;
    seen[fixed_row] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(r) = queue.pop_front() {
        for c in 0..n {
            if col_fixed[c] || c == taken_col || c == row_mate[r] || !tight(r, c) {
                continue;
            }
            if c == target_col {
                let mut path = vec![(r, c)];
                let mut cur = r;
                while let Some((prev, col)) = parent[cur] {
                    path.push((prev, col));
                    cur = prev;
                }
                return Some(path);
            }
            let next = col_mate[c];
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some((r, c));
                queue.push_back(next);
            }
        }
    }
    None
}
