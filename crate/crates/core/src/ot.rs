//! Empirical 2-Wasserstein distances between equal-size point clouds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sampler::SampleMatrix;

pub const MAX_ASSIGNMENT_SIZE: usize = 4096;
pub const MAX_PERMUTATION_SIZE: usize = 8;

/// `n` points in `R^d` with uniform weights, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCloud {
    n: usize,
    d: usize,
    points: Vec<f64>,
}

impl SampleCloud {
    pub fn new(points: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 || points.is_empty() || points.len() % d != 0 {
            return Err(Error::validation(format!(
                "{} coordinates do not form a non-empty cloud in dimension {d}",
                points.len()
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("cloud has non-finite entries"));
        }
        Ok(SampleCloud {
            n: points.len() / d,
            d,
            points,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::validation("rows have different lengths"));
        }
        SampleCloud::new(rows.concat(), d)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }
}

impl SampleCloud {
    fn centered(&self) -> SampleCloud {
        let mut mean = vec![0.0; self.d];
        for i in 0..self.n {
            for (m, p) in mean.iter_mut().zip(self.point(i)) {
                *m += p;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.n as f64);
        let points = self
            .points
            .chunks(self.d)
            .flat_map(|p| p.iter().zip(&mean).map(|(a, m)| a - m))
            .collect();
        SampleCloud {
            n: self.n,
            d: self.d,
            points,
        }
    }
}

impl TryFrom<&SampleMatrix> for SampleCloud {
    type Error = Error;

    fn try_from(m: &SampleMatrix) -> Result<Self> {
        SampleCloud::new(m.data.clone(), m.cols)
    }
}

fn check_pair(x: &SampleCloud, y: &SampleCloud) -> Result<()> {
    if x.n != y.n {
        return Err(Error::validation(format!("cloud sizes differ: {} vs {}", x.n, y.n)));
    }
    if x.d != y.d {
        return Err(Error::validation(format!("cloud dimensions differ: {} vs {}", x.d, y.d)));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn cost_matrix(x: &SampleCloud, y: &SampleCloud) -> Vec<f64> {
    let n = x.n;
    let mut c = vec![0.0; n * n];
    c.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let xi = x.point(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = sq_dist(xi, y.point(j));
        }
    });
    c
}

const NONE: usize = usize::MAX;

/// Minimum-cost perfect matching on a dense row-major `n x n` cost matrix
/// (Jonker-Volgenant: column reduction, augmenting row reduction, then
/// shortest augmenting paths). Returns `assignment[row] = col`.
pub fn solve_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    if n == 0 {
        return Vec::new();
    }
    let c = |i: usize, j: usize| cost[i * n + j];
    let mut x = vec![NONE; n];
    let mut y = vec![NONE; n];
    let mut v = vec![f64::INFINITY; n];
    let mut free_rows = Vec::with_capacity(n);

    // column reduction and reduction transfer
    for i in 0..n {
        for j in 0..n {
            if c(i, j) < v[j] {
                v[j] = c(i, j);
                y[j] = i;
            }
        }
    }
    let mut unique = vec![true; n];
    for j in (0..n).rev() {
        let i = y[j];
        if x[i] == NONE {
            x[i] = j;
        } else {
            unique[i] = false;
            y[j] = NONE;
        }
    }
    for i in 0..n {
        if x[i] == NONE {
            free_rows.push(i);
        } else if unique[i] {
            let j = x[i];
            let mut min = f64::INFINITY;
            for j2 in 0..n {
                if j2 != j {
                    min = min.min(c(i, j2) - v[j2]);
                }
            }
            if min.is_finite() {
                v[j] -= min;
            }
        }
    }

    // augmenting row reduction, two passes
    for _ in 0..2 {
        if free_rows.is_empty() {
            break;
        }
        let n_free = free_rows.len();
        let mut current = 0usize;
        let mut new_free = 0usize;
        let mut rr_cnt = 0usize;
        while current < n_free {
            rr_cnt += 1;
            let free_i = free_rows[current];
            current += 1;
            let mut j1 = 0usize;
            let mut v1 = c(free_i, 0) - v[0];
            let mut j2 = NONE;
            let mut v2 = f64::INFINITY;
            for j in 1..n {
                let h = c(free_i, j) - v[j];
                if h < v2 {
                    if h >= v1 {
                        v2 = h;
                        j2 = j;
                    } else {
                        v2 = v1;
                        v1 = h;
                        j2 = j1;
                        j1 = j;
                    }
                }
            }
            let mut i0 = y[j1];
            let v1_new = v[j1] - (v2 - v1);
            let v1_lowers = v1_new < v[j1];
            if rr_cnt < current * n {
                if v1_lowers {
                    v[j1] = v1_new;
                } else if i0 != NONE && j2 != NONE {
                    j1 = j2;
                    i0 = y[j2];
                }
                if i0 != NONE {
                    if v1_lowers {
                        current -= 1;
                        free_rows[current] = i0;
                    } else {
                        free_rows[new_free] = i0;
                        new_free += 1;
                    }
                }
            } else if i0 != NONE {
                free_rows[new_free] = i0;
                new_free += 1;
            }
            x[free_i] = j1;
            y[j1] = free_i;
        }
        free_rows.truncate(new_free);
    }

    // shortest augmenting paths for the remaining free rows
    let mut cols: Vec<usize> = vec![0; n];
    let mut d = vec![0.0f64; n];
    let mut pred = vec![0usize; n];
    for &f in &free_rows {
        for j in 0..n {
            cols[j] = j;
            d[j] = c(f, j) - v[j];
            pred[j] = f;
        }
        let mut lo = 0usize;
        let mut hi = 0usize;
        let mut n_ready = 0usize;
        let mut final_j = NONE;
        while final_j == NONE {
            if lo == hi {
                n_ready = lo;
                // collect the columns attaining the minimum of d into cols[lo..hi]
                hi = lo + 1;
                let mut mind = d[cols[lo]];
                for k in hi..n {
                    let j = cols[k];
                    if d[j] <= mind {
                        if d[j] < mind {
                            hi = lo;
                            mind = d[j];
                        }
                        cols[k] = cols[hi];
                        cols[hi] = j;
                        hi += 1;
                    }
                }
                for &j in &cols[lo..hi] {
                    if y[j] == NONE {
                        final_j = j;
                    }
                }
            }
            if final_j == NONE {
                // scan; the cursors are only committed when no free column
                // is reached, so `cols[lo]` keeps pointing at a minimal column
                let (mut slo, mut shi) = (lo, hi);
                while slo != shi && final_j == NONE {
                    let j = cols[slo];
                    slo += 1;
                    let i = y[j];
                    let mind = d[j];
                    let h = c(i, j) - v[j] - mind;
                    let mut k = shi;
                    while k < n {
                        let j = cols[k];
                        let red = c(i, j) - v[j] - h;
                        if red < d[j] {
                            d[j] = red;
                            pred[j] = i;
                            if red == mind {
                                if y[j] == NONE {
                                    final_j = j;
                                    break;
                                }
                                cols[k] = cols[shi];
                                cols[shi] = j;
                                shi += 1;
                            }
                        }
                        k += 1;
                    }
                }
                if final_j == NONE {
                    lo = slo;
                    hi = shi;
                }
            }
        }
        let mind = d[cols[lo]];
        for &j in &cols[..n_ready] {
            v[j] += d[j] - mind;
        }
        let mut j = final_j;
        loop {
            let i = pred[j];
            y[j] = i;
            std::mem::swap(&mut j, &mut x[i]);
            if i == f {
                break;
            }
        }
    }
    x
}

/// `sqrt(min over permutations of mean |x_i - y_sigma(i)|^2)` by an exact
/// assignment solver.
pub fn w2_exact_assignment(x: &SampleCloud, y: &SampleCloud) -> Result<f64> {
    check_pair(x, y)?;
    if x.n > MAX_ASSIGNMENT_SIZE {
        return Err(Error::validation(format!(
            "exact assignment limited to n <= {MAX_ASSIGNMENT_SIZE}, got {}",
            x.n
        )));
    }
    let n = x.n;
    // Centering each cloud changes the cost by row and column constants only,
    // so the optimal matching is the same; it keeps the reduction phases from
    // stalling when the clouds are far apart.
    let c = cost_matrix(&x.centered(), &y.centered());
    let a = solve_assignment(&c, n);
    let total: f64 = a.iter().enumerate().map(|(i, &j)| sq_dist(x.point(i), y.point(j))).sum();
    Ok((total / n as f64).sqrt())
}

fn sorted_w2_sq(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64
}

/// Sliced W2: square root of the average, over `n_projections` uniform random
/// directions, of the squared 1-d W2 of the projections. In one dimension
/// this is the sorted-coupling W2 exactly.
pub fn w2_sliced(x: &SampleCloud, y: &SampleCloud, n_projections: usize, seed: u64) -> Result<f64> {
    check_pair(x, y)?;
    if n_projections == 0 {
        return Err(Error::validation("n_projections must be >= 1"));
    }
    if x.d == 1 {
        return Ok(sorted_w2_sq(x.points.clone(), y.points.clone()).sqrt());
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let d = x.d;
    let mut dirs = Vec::with_capacity(n_projections);
    while dirs.len() < n_projections {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            dirs.push(v.into_iter().map(|a| a / norm).collect::<Vec<f64>>());
        }
    }
    let project = |c: &SampleCloud, v: &[f64]| -> Vec<f64> {
        (0..c.n)
            .map(|i| c.point(i).iter().zip(v).map(|(p, q)| p * q).sum())
            .collect()
    };
    let per: Vec<f64> = dirs
        .par_iter()
        .map(|v| sorted_w2_sq(project(x, v), project(y, v)))
        .collect();
    Ok((per.iter().sum::<f64>() / n_projections as f64).sqrt())
}

/// Exhaustive minimum over all `n!` matchings; refuses `n > 8`.
pub fn w2_permutation_oracle(x: &SampleCloud, y: &SampleCloud) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.n;
    if n > MAX_PERMUTATION_SIZE {
        return Err(Error::validation(format!(
            "permutation oracle limited to n <= {MAX_PERMUTATION_SIZE}, got {n}"
        )));
    }
    let c: Vec<f64> = (0..n * n).map(|k| sq_dist(x.point(k / n), y.point(k % n))).collect();
    let cost = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum() };
    // Heap's algorithm
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = cost(&perm);
    let mut stack = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            best = best.min(cost(&perm));
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    Ok((best / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Plain shortest-augmenting-path Hungarian method, one row at a time.
    fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
        assert_eq!(cost.len(), n * n);
        // 1-based internal indexing; column 0 is the virtual source.
        let mut u = vec![0.0f64; n + 1];
        let mut v = vec![0.0f64; n + 1];
        let mut owner = vec![0usize; n + 1];
        let mut way = vec![0usize; n + 1];
        let mut minv = vec![0.0f64; n + 1];
        let mut used = vec![false; n + 1];
        for i in 1..=n {
            owner[0] = i;
            let mut j0 = 0usize;
            minv.iter_mut().for_each(|m| *m = f64::INFINITY);
            used.iter_mut().for_each(|b| *b = false);
            loop {
                used[j0] = true;
                let i0 = owner[j0];
                let row = &cost[(i0 - 1) * n..i0 * n];
                let mut delta = f64::INFINITY;
                let mut j1 = 0usize;
                for j in 1..=n {
                    if !used[j] {
                        let cur = row[j - 1] - u[i0] - v[j];
                        if cur < minv[j] {
                            minv[j] = cur;
                            way[j] = j0;
                        }
                        if minv[j] < delta {
                            delta = minv[j];
                            j1 = j;
                        }
                    }
                }
                for j in 0..=n {
                    if used[j] {
                        u[owner[j]] += delta;
                        v[j] -= delta;
                    } else {
                        minv[j] -= delta;
                    }
                }
                j0 = j1;
                if owner[j0] == 0 {
                    break;
                }
            }
            loop {
                let j1 = way[j0];
                owner[j0] = owner[j1];
                j0 = j1;
                if j0 == 0 {
                    break;
                }
            }
        }
        let mut assignment = vec![0usize; n];
        for j in 1..=n {
            assignment[owner[j] - 1] = j - 1;
        }
        assignment
    }

    fn cloud(rng: &mut ChaCha12Rng, n: usize, d: usize) -> SampleCloud {
        SampleCloud::new((0..n * d).map(|_| rng.sample(StandardNormal)).collect(), d).unwrap()
    }

    #[test]
    fn identical_clouds_are_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x = cloud(&mut rng, 20, 3);
        assert_eq!(w2_exact_assignment(&x, &x).unwrap(), 0.0);
        assert_eq!(w2_sliced(&x, &x, 10, 0).unwrap(), 0.0);
    }

    #[test]
    fn single_point() {
        let x = SampleCloud::new(vec![0.0, 0.0], 2).unwrap();
        let y = SampleCloud::new(vec![3.0, 4.0], 2).unwrap();
        assert_eq!(w2_exact_assignment(&x, &y).unwrap(), 5.0);
        assert_eq!(w2_permutation_oracle(&x, &y).unwrap(), 5.0);
    }

    #[test]
    fn swap_case_picks_cheaper_matching() {
        let x = SampleCloud::new(vec![0.0, 10.0], 1).unwrap();
        let y = SampleCloud::new(vec![10.5, 0.5], 1).unwrap();
        assert_relative_eq!(w2_permutation_oracle(&x, &y).unwrap(), 0.5);
        assert_relative_eq!(w2_exact_assignment(&x, &y).unwrap(), 0.5);
    }

    #[test]
    fn assignment_matches_brute_force_n6() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = cloud(&mut rng, 6, 2);
            let y = cloud(&mut rng, 6, 2);
            let a = w2_exact_assignment(&x, &y).unwrap();
            let b = w2_permutation_oracle(&x, &y).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn permuted_copy_is_zero() {
        let x = SampleCloud::new(vec![1.0, 2.0, 3.0, 4.0], 1).unwrap();
        let y = SampleCloud::new(vec![3.0, 1.0, 4.0, 2.0], 1).unwrap();
        assert_eq!(w2_permutation_oracle(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn sliced_in_one_dimension_is_sorted_coupling() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let x = cloud(&mut rng, 50, 1);
        let y = cloud(&mut rng, 50, 1);
        let a = w2_sliced(&x, &y, 1, 0).unwrap();
        let b = w2_sliced(&x, &y, 17, 99).unwrap();
        assert_eq!(a, b);
        assert_relative_eq!(a, w2_exact_assignment(&x, &y).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn solvers_agree_on_costs() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for n in [1usize, 2, 3, 5, 17, 60] {
            for _ in 0..10 {
                // integer costs create ties
                let c: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0..6) as f64).collect();
                let total = |a: &[usize]| -> f64 { a.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum() };
                let a = solve_assignment(&c, n);
                let mut seen = vec![false; n];
                a.iter().for_each(|&j| seen[j] = true);
                assert!(seen.iter().all(|&s| s));
                assert_eq!(total(&a), total(&hungarian(&c, n)));
            }
        }
    }

    #[test]
    fn solvers_agree_on_float_costs() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for n in [2usize, 4, 7, 13, 40, 150] {
            for _ in 0..40 {
                let c: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..30.0f64).powi(2)).collect();
                let total = |a: &[usize]| -> f64 { a.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum() };
                let a = total(&solve_assignment(&c, n));
                let b = total(&hungarian(&c, n));
                assert!((a - b).abs() <= 1e-9 * b.max(1.0), "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn errors() {
        let x = SampleCloud::new(vec![0.0; 9], 1).unwrap();
        let y = SampleCloud::new(vec![0.0; 8], 1).unwrap();
        assert!(w2_exact_assignment(&x, &y).is_err());
        assert!(w2_permutation_oracle(&x, &x).is_err());
        assert!(SampleCloud::new(vec![f64::NAN], 1).is_err());
        assert!(SampleCloud::new(vec![1.0, 2.0, 3.0], 2).is_err());
    }
}
