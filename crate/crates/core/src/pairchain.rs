//! Two-walker systems on a fixed graph: expected meeting times of the
//! original and virtual processes, the pair-state matrix `Q`, and the
//! absorbing pair chain `P = [[I, 0], [C, D]]` with its spectrum.
//!
//! Walkers only move on edge arrivals, so self-loops never change walker
//! dynamics. Under the time-varying rate model they only add idle ticks to a
//! clock running at total rate `n`; the meeting-time systems below are
//! assembled in that uniformized form and agree with the static ones.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::graph::Graph;
use crate::linalg::{self, LinalgError, Matrix};
use crate::metro::{metropolis_rates, RateTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PairError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which two-walker process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    /// Walkers meet when one arrival touches both; the shared edge keeps its
    /// rate `λ_xy`.
    Original,
    /// The edge joining adjacent walkers fires at `2λ_xy`.
    Virtual,
}

/// Rate regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeModel {
    /// Edge processes only; total rate depends on the graph.
    Static,
    /// Edge processes plus self-loops, total rate exactly `n`.
    TimeVarying,
}

impl TimeModel {
    pub fn self_loops(self) -> bool {
        self == TimeModel::TimeVarying
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Process::Original => "original",
            Process::Virtual => "virtual",
        })
    }
}

impl FromStr for Process {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "original" => Ok(Process::Original),
            "virtual" => Ok(Process::Virtual),
            _ => Err(format!("unknown process `{s}` (original|virtual)")),
        }
    }
}

impl fmt::Display for TimeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeModel::Static => "static",
            TimeModel::TimeVarying => "time_varying",
        })
    }
}

impl FromStr for TimeModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "static" => Ok(TimeModel::Static),
            "time_varying" | "time-varying" => Ok(TimeModel::TimeVarying),
            _ => Err(format!("unknown time model `{s}` (static|time_varying)")),
        }
    }
}

/// Rate at which walkers at `x ≠ y` leave their current pair state
/// (including meeting).
pub fn pair_outflow(rates: &RateTable, x: usize, y: usize, process: Process) -> f64 {
    let shared = rates.rate(x, y);
    let both = rates.vertex_rate(x) + rates.vertex_rate(y);
    match process {
        Process::Original => both - shared,
        Process::Virtual => both,
    }
}

/// `Λ_xy = Σ_{x_i} λ_{x x_i} + Σ_{y_i} λ_{y y_i}`.
pub fn lambda_xy(rates: &RateTable, x: usize, y: usize) -> f64 {
    rates.vertex_rate(x) + rates.vertex_rate(y)
}

/// `2(2 − λ_xx − λ_yy)`, the self-loop form of [`lambda_xy`]; `None` without
/// self-loops.
pub fn lambda_xy_from_self_loops(rates: &RateTable, x: usize, y: usize) -> Option<f64> {
    let loops = rates.self_loops()?;
    Some(2.0 * (2.0 - loops[x] - loops[y]))
}

struct UnorderedPairs {
    n: usize,
    index: Vec<usize>,
}

impl UnorderedPairs {
    fn new(n: usize) -> Self {
        let mut index = vec![usize::MAX; n * n];
        let mut k = 0;
        for x in 0..n {
            for y in x + 1..n {
                index[x * n + y] = k;
                index[y * n + x] = k;
                k += 1;
            }
        }
        UnorderedPairs { n, index }
    }

    fn len(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    fn get(&self, x: usize, y: usize) -> Option<usize> {
        (x != y).then(|| self.index[x * self.n + y])
    }
}

/// Expected meeting times `M(x,y)` for every pair, diagonal zero, solved on
/// the `n(n−1)/2` unordered pairs.
pub fn meeting_times_analytic(
    g: &Graph,
    process: Process,
    model: TimeModel,
) -> Result<Matrix, PairError> {
    let n = g.n();
    let rates = metropolis_rates(g, model.self_loops());
    let pairs = UnorderedPairs::new(n);
    let k = pairs.len();
    let mut a = Matrix::zeros(k, k);
    let mut rhs = vec![0.0; k];
    // Static: outflow·M(x,y) − Σ λ M(next) = 1.
    // Time-varying: M = 1/n + (1 − outflow/n) M + Σ λ/n M(next), one tick of
    // the rate-n clock.
    let clock = match model {
        TimeModel::Static => 1.0,
        TimeModel::TimeVarying => rates.total_rate(),
    };
    for x in 0..n {
        for y in x + 1..n {
            let row = pairs.get(x, y).expect("x != y");
            let out = pair_outflow(&rates, x, y, process);
            a[(row, row)] = match model {
                TimeModel::Static => out,
                TimeModel::TimeVarying => {
                    let idle = 1.0 - out / clock;
                    1.0 - idle
                }
            };
            rhs[row] = 1.0 / clock;
            for &(xi, r) in rates.incident(x) {
                if let Some(col) = pairs.get(xi, y) {
                    a[(row, col)] -= r / clock;
                }
            }
            for &(yi, r) in rates.incident(y) {
                if let Some(col) = pairs.get(x, yi) {
                    a[(row, col)] -= r / clock;
                }
            }
        }
    }
    let sol = linalg::solve(a, rhs)?;
    let mut m = Matrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            if let Some(p) = pairs.get(x, y) {
                m[(x, y)] = sol[p];
            }
        }
    }
    Ok(m)
}

/// Meeting times solved on ordered pairs `(x,y)`, `x ≠ y`, with static rates.
/// Used to check the unordered reduction.
pub fn meeting_times_ordered(g: &Graph, process: Process) -> Result<Matrix, PairError> {
    let n = g.n();
    let rates = metropolis_rates(g, false);
    let idx = |x: usize, y: usize| x * (n - 1) + if y > x { y - 1 } else { y };
    let k = n * (n - 1);
    let mut a = Matrix::zeros(k, k);
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let row = idx(x, y);
            a[(row, row)] = pair_outflow(&rates, x, y, process);
            for &(xi, r) in rates.incident(x) {
                if xi != y {
                    a[(row, idx(xi, y))] -= r;
                }
            }
            for &(yi, r) in rates.incident(y) {
                if yi != x {
                    a[(row, idx(x, yi))] -= r;
                }
            }
        }
    }
    let sol = linalg::solve(a, vec![1.0; k])?;
    let mut m = Matrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            if x != y {
                m[(x, y)] = sol[idx(x, y)];
            }
        }
    }
    Ok(m)
}

/// The stochastic matrix `Q` on all `n²` pair states (index `x·n + y`):
/// from `(x,y)` move `x` to `r` with probability `λ_xr/Λ_xy`, or `y` to `w`
/// with probability `λ_yw/Λ_xy`.
pub fn q_matrix(g: &Graph) -> Matrix {
    let n = g.n();
    let rates = metropolis_rates(g, false);
    let mut q = Matrix::zeros(n * n, n * n);
    for x in 0..n {
        for y in 0..n {
            let lam = lambda_xy(&rates, x, y);
            let row = x * n + y;
            for &(r, rate) in rates.incident(x) {
                q[(row, r * n + y)] += rate / lam;
            }
            for &(w, rate) in rates.incident(y) {
                q[(row, x * n + w)] += rate / lam;
            }
        }
    }
    q
}

/// `P`, its blocks, and the spectrum of the non-absorbing block `D`, under
/// the self-loop (total rate `n`) model.
#[derive(Debug, Clone, Serialize)]
pub struct AbsorbingSpectrum {
    /// State order: the `n` absorbing states `(x,x)`, then ordered pairs
    /// `(x,y)`, `x ≠ y`, lexicographically. 0-based.
    pub states: Vec<(usize, usize)>,
    pub p: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// Expected steps of `P` to absorption from each non-absorbing state,
    /// i.e. row sums of `(I − D)⁻¹`.
    pub absorption: Vec<f64>,
}

impl AbsorbingSpectrum {
    pub fn max_absorption(&self) -> f64 {
        self.absorption.iter().copied().fold(0.0, f64::max)
    }
}

pub fn pd_matrices(g: &Graph) -> Result<AbsorbingSpectrum, PairError> {
    let n = g.n();
    let rates = metropolis_rates(g, true);
    let nf = n as f64;
    let mut states: Vec<(usize, usize)> = (0..n).map(|x| (x, x)).collect();
    for x in 0..n {
        for y in 0..n {
            if x != y {
                states.push((x, y));
            }
        }
    }
    let size = n * n;
    let mut position = vec![0; size];
    for (i, &(x, y)) in states.iter().enumerate() {
        position[x * n + y] = i;
    }
    let at = |x: usize, y: usize| position[x * n + y];
    let mut p = Matrix::zeros(size, size);
    for i in 0..n {
        p[(i, i)] = 1.0;
    }
    for &(x, y) in &states[n..] {
        let row = at(x, y);
        for &(r, rate) in rates.incident(x) {
            p[(row, at(r, y))] += rate / nf;
        }
        for &(s, rate) in rates.incident(y) {
            p[(row, at(x, s))] += rate / nf;
        }
        p[(row, row)] = 1.0 - lambda_xy(&rates, x, y) / nf;
    }
    let k = size - n;
    let mut c = Matrix::zeros(k, n);
    let mut d = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..n {
            c[(i, j)] = p[(n + i, j)];
        }
        for j in 0..k {
            d[(i, j)] = p[(n + i, n + j)];
        }
    }
    let (lambda_min, lambda_max) = if k == 0 {
        (0.0, 0.0)
    } else {
        let eig = linalg::symmetric_eigenvalues(&d)?;
        (eig[0], eig[k - 1])
    };
    let mut i_minus_d = Matrix::identity(k);
    for i in 0..k {
        for j in 0..k {
            i_minus_d[(i, j)] -= d[(i, j)];
        }
    }
    let absorption = linalg::solve(i_minus_d, vec![1.0; k])?;
    Ok(AbsorbingSpectrum {
        states,
        p,
        c,
        d,
        lambda_max,
        lambda_min,
        absorption,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, Family};
    use crate::metro::ChainProfile;
    use approx::assert_abs_diff_eq;

    fn k(n: usize) -> Graph {
        generate(Family::Complete, n, 0).unwrap()
    }

    #[test]
    fn k2_meeting_times() {
        for model in [TimeModel::Static, TimeModel::TimeVarying] {
            let mo = meeting_times_analytic(&k(2), Process::Original, model).unwrap();
            let mv = meeting_times_analytic(&k(2), Process::Virtual, model).unwrap();
            assert_abs_diff_eq!(mo[(0, 1)], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(mv[(0, 1)], 0.5, epsilon = 1e-12);
            assert_eq!(mo[(0, 0)], 0.0);
        }
    }

    #[test]
    fn k3_meeting_times() {
        // By symmetry M = 2/3 + (2/3)M (original) and M = 1/2 + (1/2)M (virtual).
        for model in [TimeModel::Static, TimeModel::TimeVarying] {
            let mo = meeting_times_analytic(&k(3), Process::Original, model).unwrap();
            let mv = meeting_times_analytic(&k(3), Process::Virtual, model).unwrap();
            for (x, y) in [(0, 1), (0, 2), (1, 2), (2, 0)] {
                assert_abs_diff_eq!(mo[(x, y)], 2.0, epsilon = 1e-12);
                assert_abs_diff_eq!(mv[(x, y)], 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn lambda_xy_forms_agree() {
        let k2 = metropolis_rates(&k(2), true);
        assert_eq!(lambda_xy(&k2, 0, 1), 2.0);
        assert_eq!(lambda_xy_from_self_loops(&k2, 0, 1), Some(2.0));
        let star = metropolis_rates(&generate(Family::Star, 4, 0).unwrap(), true);
        assert_abs_diff_eq!(lambda_xy(&star, 0, 1), 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            lambda_xy_from_self_loops(&star, 0, 1).unwrap(),
            4.0 / 3.0,
            epsilon = 1e-15
        );
        assert_eq!(
            lambda_xy_from_self_loops(&metropolis_rates(&k(2), false), 0, 1),
            None
        );
        for seed in 0..20 {
            let g = generate(Family::ErdosRenyi(0.4), 9, seed).unwrap();
            let r = metropolis_rates(&g, true);
            for x in 0..9 {
                for y in 0..9 {
                    if x != y {
                        let a = lambda_xy(&r, x, y);
                        let b = lambda_xy_from_self_loops(&r, x, y).unwrap();
                        assert!((a - b).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn k3_q_row() {
        let q = q_matrix(&k(3));
        let row = 1; // state (0, 1)
        assert_abs_diff_eq!(q[(row, 2 * 3 + 1)], 0.25, epsilon = 1e-15); // (2,1)
        assert_abs_diff_eq!(q[(row, 2)], 0.25, epsilon = 1e-15); // (0,2)
        assert_abs_diff_eq!(q[(row, 3 + 1)], 0.25, epsilon = 1e-15); // (1,1)
        assert_abs_diff_eq!(q[(row, 0)], 0.25, epsilon = 1e-15); // (0,0)
        for s in q.row_sums() {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn k2_absorbing_spectrum() {
        let s = pd_matrices(&k(2)).unwrap();
        assert_eq!(s.d.to_rows(), vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(s.lambda_max, 0.0);
        assert_eq!(s.lambda_min, 0.0);
        assert_eq!(s.absorption, vec![1.0, 1.0]);
        let mv = meeting_times_analytic(&k(2), Process::Virtual, TimeModel::TimeVarying).unwrap();
        assert_abs_diff_eq!(s.absorption[0] / 2.0, mv[(0, 1)], epsilon = 1e-12);
        assert_eq!(s.states[..2], [(0, 0), (1, 1)]);
    }

    #[test]
    fn pair_system_properties() {
        for seed in 0..25 {
            let n = 2 + seed as usize % 8;
            let g = generate(Family::ErdosRenyi(0.5), n, seed).unwrap();
            let nf = n as f64;
            let mo = meeting_times_analytic(&g, Process::Original, TimeModel::Static).unwrap();
            let mv = meeting_times_analytic(&g, Process::Virtual, TimeModel::Static).unwrap();
            let mv_tv = meeting_times_analytic(&g, Process::Virtual, TimeModel::TimeVarying).unwrap();
            let mo_tv = meeting_times_analytic(&g, Process::Original, TimeModel::TimeVarying).unwrap();
            let mo_ord = meeting_times_ordered(&g, Process::Original).unwrap();
            let mv_ord = meeting_times_ordered(&g, Process::Virtual).unwrap();
            let profile = ChainProfile::analyze(&g).unwrap();
            let spec = pd_matrices(&g).unwrap();
            assert!(spec.d.is_symmetric());
            for s in spec.p.row_sums() {
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            }
            let max_mv = (0..n * n).map(|i| mv[(i / n, i % n)]).fold(0.0, f64::max);
            for x in 0..n {
                for y in 0..n {
                    assert_abs_diff_eq!(mo[(x, y)], mo_ord[(x, y)], epsilon = 1e-8);
                    assert_abs_diff_eq!(mv[(x, y)], mv_ord[(x, y)], epsilon = 1e-8);
                    assert_abs_diff_eq!(mv[(x, y)], mv_tv[(x, y)], epsilon = 1e-8);
                    assert_abs_diff_eq!(mo[(x, y)], mo_tv[(x, y)], epsilon = 1e-8);
                    assert!(0.5 * profile.phi[(x, y)] - mv[(x, y)] >= -1e-8);
                    assert!(mv[(x, y)] <= 6.0 * nf * nf);
                    assert!(mo[(x, y)] <= 2.0 * max_mv + 1e-8);
                    assert!(mv[(x, y)] <= mo[(x, y)] + 1e-12);
                }
            }
            // Absorption steps of P over n are the virtual meeting times.
            for (i, &(x, y)) in spec.states[n..].iter().enumerate() {
                assert_abs_diff_eq!(spec.absorption[i] / nf, mv[(x, y)], epsilon = 1e-8);
            }
            assert!(spec.lambda_max <= 1.0 - 1.0 / (6.0 * nf.powi(3)));
            assert!(spec.lambda_min >= 1.0 - 4.0 / nf);
            assert!(1.0 / (1.0 - spec.lambda_max) <= spec.max_absorption() + 1e-6);
        }
    }

    #[test]
    fn harmonic_difference_on_q() {
        // f = ½Φ − M^v is Q-harmonic off the diagonal and nonnegative on it.
        for seed in 0..10 {
            let n = 3 + seed as usize % 6;
            let g = generate(Family::ErdosRenyi(0.5), n, seed).unwrap();
            let profile = ChainProfile::analyze(&g).unwrap();
            let mv = meeting_times_analytic(&g, Process::Virtual, TimeModel::Static).unwrap();
            let f: Vec<f64> = (0..n * n)
                .map(|i| 0.5 * profile.phi[(i / n, i % n)] - mv[(i / n, i % n)])
                .collect();
            let q = q_matrix(&g);
            let qf = q.mul_vec(&f);
            for x in 0..n {
                assert!(f[x * n + x] >= 0.0 - 1e-12);
                for y in 0..n {
                    if x != y {
                        assert_abs_diff_eq!(qf[x * n + y], f[x * n + y], epsilon = 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn spectrum_matches_nalgebra() {
        let g = generate(Family::ErdosRenyi(0.5), 7, 3).unwrap();
        let s = pd_matrices(&g).unwrap();
        let k = s.d.rows();
        let d = nalgebra::DMatrix::from_fn(k, k, |i, j| s.d[(i, j)]);
        let eig = d.symmetric_eigen().eigenvalues;
        assert_abs_diff_eq!(s.lambda_max, eig.max(), epsilon = 1e-10);
        assert_abs_diff_eq!(s.lambda_min, eig.min(), epsilon = 1e-10);
    }
}
