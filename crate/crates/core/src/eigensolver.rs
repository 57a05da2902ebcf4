//! Dense Hermitian-definite generalized eigensolver, multiplicity
//! clustering, and eigenvalue-curve tracking over a deformation parameter.

use faer::linalg::triangular_solve;
use faer::{Mat, Par, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DiracError, Result};
use crate::torus::{ModeSet, SpinStructure, SpinorField};

/// Clustering and residual thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative gap for clustering an undeformed (exactly degenerate) spectrum.
    pub cluster_flat: f64,
    /// Relative gap for clustering a deformed spectrum, fine enough to resolve
    /// first-order splits.
    pub cluster_split: f64,
    /// Bound on `|Aχ - λBχ| / |χ|_B`.
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            cluster_flat: 1e-6,
            cluster_split: 1e-9,
            residual: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn cluster_for(&self, t: f64) -> f64 {
        if t == 0.0 {
            self.cluster_flat
        } else {
            self.cluster_split
        }
    }
}

/// Eigenvalues (ascending) and `B`-orthonormal eigenvectors of a pencil.
#[derive(Clone, Debug)]
pub struct GenEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<Complex64>,
    pub residual_max: f64,
}

/// Solves `A χ = λ B χ` for Hermitian `A` and Hermitian positive definite `B`.
///
/// Reduces with the Cholesky factor `B = L L*` to the standard problem for
/// `L⁻¹ A L⁻*`, then back-substitutes. Each eigenvector is scaled so that its
/// first non-negligible entry is real and positive.
pub fn solve_gen_hermitian(a: &Mat<Complex64>, b: &Mat<Complex64>) -> Result<GenEigen> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(DiracError::InvalidInput(format!(
            "pencil dimensions {}x{} and {}x{} differ",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let llt = b
        .llt(Side::Lower)
        .map_err(|_| DiracError::NotPositiveDefinite { t: f64::NAN })?;
    let l = llt.L();

    // X = L⁻¹ A, then C = L⁻¹ X* = L⁻¹ A L⁻*
    let mut x = a.clone();
    triangular_solve::solve_lower_triangular_in_place(l, x.as_mut(), Par::Seq);
    let mut c = x.adjoint().to_owned();
    triangular_solve::solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    for i in 0..n {
        c[(i, i)] = Complex64::new(c[(i, i)].re, 0.0);
        for j in 0..i {
            let avg = (c[(i, j)] + c[(j, i)].conj()) * 0.5;
            c[(i, j)] = avg;
            c[(j, i)] = avg.conj();
        }
    }

    let evd = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| DiracError::NoConvergence)?;
    let values: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i].re).collect();
    let mut vectors = evd.U().to_owned();
    triangular_solve::solve_upper_triangular_in_place(l.adjoint(), vectors.as_mut(), Par::Seq);
    canonicalize_phases(&mut vectors);

    let av = a * &vectors;
    let bv = b * &vectors;
    let mut residual_max: f64 = 0.0;
    for (j, &lam) in values.iter().enumerate() {
        let mut r2 = 0.0;
        let mut norm_b = 0.0;
        for i in 0..n {
            r2 += (av[(i, j)] - bv[(i, j)] * lam).norm_sqr();
            norm_b += (vectors[(i, j)].conj() * bv[(i, j)]).re;
        }
        residual_max = residual_max.max(r2.sqrt() / norm_b.sqrt());
    }
    Ok(GenEigen {
        values,
        vectors,
        residual_max,
    })
}

/// Multiplies every column by a unit phase making its first entry with
/// modulus above `1e-8 · max` real and positive.
pub fn canonicalize_phases(v: &mut Mat<Complex64>) {
    for j in 0..v.ncols() {
        let peak = (0..v.nrows()).map(|i| v[(i, j)].norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            continue;
        }
        if let Some(i) = (0..v.nrows()).find(|&i| v[(i, j)].norm() > 1e-8 * peak) {
            let z = v[(i, j)];
            let phase = z.conj() / z.norm();
            for r in 0..v.nrows() {
                v[(r, j)] *= phase;
            }
            v[(i, j)] = Complex64::new(v[(i, j)].re, 0.0);
        }
    }
}

/// A maximal run of nearly equal eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpan {
    /// Mean of the run.
    pub lambda: f64,
    /// Index of the first eigenvalue of the run.
    pub start: usize,
    pub mult_c: usize,
    pub mult_h: usize,
    /// Odd complex multiplicity: the run is not a union of Kramers pairs.
    pub kramers_violation: bool,
}

impl ClusterSpan {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.mult_c
    }
}

/// Partitions sorted values into maximal runs whose consecutive gaps are at
/// most `tau_rel · max(1, |λ|)`.
pub fn cluster_eigenvalues(values: &[f64], tau_rel: f64) -> Vec<ClusterSpan> {
    let mut spans = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len() || {
            let gap = values[i] - values[i - 1];
            gap > tau_rel * values[i - 1].abs().max(values[i].abs()).max(1.0)
        };
        if split && i > start {
            let run = &values[start..i];
            let mult_c = run.len();
            spans.push(ClusterSpan {
                lambda: run.iter().sum::<f64>() / mult_c as f64,
                start,
                mult_c,
                mult_h: mult_c / 2,
                kramers_violation: mult_c % 2 == 1,
            });
            start = i;
        }
    }
    spans
}

/// Provenance of a spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub delta: SpinStructure,
    #[serde(rename = "N")]
    pub order: usize,
    pub t: f64,
    pub f_ref: String,
}

/// Eigenvalues, `B`-orthonormal eigenvectors and cluster structure of one
/// deformed operator.
#[derive(Clone, Debug)]
pub struct SpectrumResult {
    pub meta: SpectrumMeta,
    pub modes: ModeSet,
    pub values: Vec<f64>,
    pub vectors: Mat<Complex64>,
    pub clusters: Vec<ClusterSpan>,
    pub residual_max: f64,
    /// The weight matrix `B` the vectors are orthonormal for.
    pub metric: Mat<Complex64>,
}

/// Serialized summary of a [`SpectrumResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumArtifact {
    pub meta: SpectrumMeta,
    pub eigenvalues: Vec<f64>,
    pub clusters: Vec<ClusterEntry>,
    pub residual_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub lambda: f64,
    pub mult_c: usize,
    pub mult_h: usize,
}

/// Solves the pencil, checks residuals, and clusters the spectrum.
pub fn solve_spectrum(
    a: &Mat<Complex64>,
    b: &Mat<Complex64>,
    modes: ModeSet,
    meta: SpectrumMeta,
    tol: &Tolerances,
) -> Result<SpectrumResult> {
    let eig = solve_gen_hermitian(a, b)?;
    if eig.residual_max > tol.residual {
        return Err(DiracError::ResidualTooLarge {
            residual: eig.residual_max,
            bound: tol.residual,
        });
    }
    let clusters = cluster_eigenvalues(&eig.values, tol.cluster_for(meta.t));
    Ok(SpectrumResult {
        meta,
        modes,
        values: eig.values,
        vectors: eig.vectors,
        clusters,
        residual_max: eig.residual_max,
        metric: b.clone(),
    })
}

/// Threshold below which an eigenvalue counts as zero.
pub const KERNEL_TOL: f64 = 1e-8;

impl SpectrumResult {
    pub fn kernel_dim(&self) -> usize {
        self.values.iter().filter(|v| v.abs() <= KERNEL_TOL).count()
    }

    /// Clusters with positive eigenvalue, ascending.
    pub fn positive_clusters(&self) -> impl Iterator<Item = &ClusterSpan> {
        self.clusters.iter().filter(|c| c.lambda > KERNEL_TOL)
    }

    /// Clusters with negative eigenvalue, ordered by increasing `|λ|`.
    pub fn negative_clusters(&self) -> impl Iterator<Item = &ClusterSpan> {
        self.clusters.iter().rev().filter(|c| c.lambda < -KERNEL_TOL)
    }

    /// Cluster by signed position: `k > 0` is the k-th positive cluster,
    /// `k < 0` the |k|-th negative one, `0` the kernel.
    pub fn cluster_by_position(&self, k: i64) -> Option<&ClusterSpan> {
        match k {
            0 => self.clusters.iter().find(|c| c.lambda.abs() <= KERNEL_TOL),
            k if k > 0 => self.positive_clusters().nth(k as usize - 1),
            k => self.negative_clusters().nth((-k) as usize - 1),
        }
    }

    pub fn kramers_violations(&self) -> usize {
        self.clusters.iter().filter(|c| c.kramers_violation).count()
    }

    /// Eigenvector `col` as a spinor field.
    pub fn field(&self, col: usize) -> SpinorField {
        SpinorField::from_column(self.modes, self.vectors.as_ref(), col)
            .expect("eigenvector length matches mode set")
    }

    pub fn cluster_fields(&self, span: &ClusterSpan) -> Vec<SpinorField> {
        span.range().map(|c| self.field(c)).collect()
    }

    pub fn to_artifact(&self) -> SpectrumArtifact {
        SpectrumArtifact {
            meta: self.meta.clone(),
            eigenvalues: self.values.clone(),
            clusters: self
                .clusters
                .iter()
                .map(|c| ClusterEntry {
                    lambda: c.lambda,
                    mult_c: c.mult_c,
                    mult_h: c.mult_h,
                })
                .collect(),
            residual_max: self.residual_max,
        }
    }
}

impl SpectrumArtifact {
    /// `lambda,mult_complex,mult_quaternionic` rows, one per cluster.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,mult_complex,mult_quaternionic\n");
        for c in &self.clusters {
            out.push_str(&format!("{},{},{}\n", c.lambda, c.mult_c, c.mult_h));
        }
        out
    }
}

/// Largest `|λ_i - (-λ_{n-1-i})|`: zero for a spectrum symmetric about 0.
pub fn symmetry_defect(values: &[f64]) -> f64 {
    let n = values.len();
    (0..n)
        .map(|i| (values[i] + values[n - 1 - i]).abs())
        .fold(0.0, f64::max)
}

/// Matched eigenvalue trajectories over a parameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveFamily {
    pub t_grid: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    pub flags: Vec<CurveFlag>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: usize,
    pub lambdas: Vec<f64>,
    /// Overlap score of each step, one fewer entry than `lambdas`.
    pub overlaps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveFlag {
    pub step: usize,
    pub trajectory: usize,
    pub kind: FlagKind,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlagKind {
    /// Best overlap below 0.7.
    LowOverlap,
    /// Best overlap below 0.3.
    Ambiguous,
    /// Jump larger than the rate bound allows.
    Discontinuity,
}

/// Overlap score below which a step is flagged.
pub const OVERLAP_FLAG: f64 = 0.7;
/// Overlap score below which a matching is ambiguous.
pub const OVERLAP_AMBIGUOUS: f64 = 0.3;

impl CurveFamily {
    /// `t,trajectory_id,lambda` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,trajectory_id,lambda\n");
        for (k, t) in self.t_grid.iter().enumerate() {
            for tr in &self.trajectories {
                out.push_str(&format!("{},{},{}\n", t, tr.id, tr.lambdas[k]));
            }
        }
        out
    }

    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Links eigenpairs of consecutive snapshots into trajectories.
///
/// The score of pairing vector `i` at one step with vector `j` at the next is
/// the norm of the projection of `χ_i` onto the cluster containing `χ_j`,
/// measured in the later `B` inner product. Pairs are chosen greedily by
/// score; when greedy leaves a step with a score below 0.7 the step is
/// re-solved as an optimal assignment. `rate_bound` bounds `|d log λ / dt|`
/// (for a conformal factor, `sup |f|`) and drives the continuity check.
pub fn match_curves(snapshots: &[SpectrumResult], rate_bound: f64) -> Result<CurveFamily> {
    if snapshots.len() < 2 {
        return Err(DiracError::InvalidInput(
            "curve matching needs at least two snapshots".into(),
        ));
    }
    let modes = snapshots[0].modes;
    if snapshots.iter().any(|s| s.modes != modes) {
        return Err(DiracError::ModeSetMismatch(
            "snapshots use different mode sets".into(),
        ));
    }
    let n = snapshots[0].values.len();
    let mut trajectories: Vec<Trajectory> = (0..n)
        .map(|id| Trajectory {
            id,
            lambdas: vec![snapshots[0].values[id]],
            overlaps: Vec::new(),
        })
        .collect();
    // current[id] = column index of trajectory `id` in the latest snapshot
    let mut current: Vec<usize> = (0..n).collect();
    let mut flags = Vec::new();

    for step in 0..snapshots.len() - 1 {
        let (prev, next) = (&snapshots[step], &snapshots[step + 1]);
        let scores = overlap_scores(prev, next);
        let mut assign = greedy_assignment(&scores);
        let weak = assign
            .iter()
            .enumerate()
            .any(|(i, a)| a.is_none_or(|j| scores.get(i, j) < OVERLAP_FLAG));
        if weak {
            assign = optimal_assignment(&scores).into_iter().map(Some).collect();
        }
        let dt = (next.meta.t - prev.meta.t).abs();
        let growth = (dt * rate_bound).exp() - 1.0;
        for (id, col) in current.iter_mut().enumerate() {
            let j = assign[*col].expect("assignment is complete");
            let score = scores.get(*col, j);
            let (l0, l1) = (prev.values[*col], next.values[j]);
            if score < OVERLAP_AMBIGUOUS {
                flags.push(CurveFlag {
                    step,
                    trajectory: id,
                    kind: FlagKind::Ambiguous,
                    detail: format!("overlap {score:.3}"),
                });
            } else if score < OVERLAP_FLAG {
                flags.push(CurveFlag {
                    step,
                    trajectory: id,
                    kind: FlagKind::LowOverlap,
                    detail: format!("overlap {score:.3}"),
                });
            }
            let allowed = l0.abs().max(l1.abs()) * growth + 1e-9;
            if (l1 - l0).abs() > allowed {
                flags.push(CurveFlag {
                    step,
                    trajectory: id,
                    kind: FlagKind::Discontinuity,
                    detail: format!("jump {:.3e} exceeds bound {allowed:.3e}", (l1 - l0).abs()),
                });
            }
            trajectories[id].lambdas.push(l1);
            trajectories[id].overlaps.push(score);
            *col = j;
        }
    }
    Ok(CurveFamily {
        t_grid: snapshots.iter().map(|s| s.meta.t).collect(),
        trajectories,
        flags,
    })
}

fn overlap_scores(prev: &SpectrumResult, next: &SpectrumResult) -> Scores {
    let bx = &next.metric * &prev.vectors;
    let o = prev.vectors.adjoint() * (&next.metric * &next.vectors);
    let n = prev.values.len();
    let norms: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .map(|r| (prev.vectors[(r, i)].conj() * bx[(r, i)]).re)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut data = vec![0.0; n * n];
    for span in &next.clusters {
        for i in 0..n {
            let s: f64 = span.range().map(|j| o[(i, j)].norm_sqr()).sum::<f64>().sqrt() / norms[i];
            for j in span.range() {
                data[i * n + j] = s;
            }
        }
    }
    Scores { n, data }
}

/// Dense row-major score matrix.
struct Scores {
    n: usize,
    data: Vec<f64>,
}

impl Scores {
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

fn greedy_assignment(scores: &Scores) -> Vec<Option<usize>> {
    let n = scores.n;
    let mut entries: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let s = scores.get(i, j);
            if s >= OVERLAP_AMBIGUOUS {
                entries.push((s, i, j));
            }
        }
    }
    entries.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut row = vec![None; n];
    let mut taken = vec![false; n];
    for (_, i, j) in entries {
        if row[i].is_none() && !taken[j] {
            row[i] = Some(j);
            taken[j] = true;
        }
    }
    row
}

/// Maximum-weight perfect matching (Hungarian algorithm on `1 - score`).
fn optimal_assignment(scores: &Scores) -> Vec<usize> {
    let n = scores.n;
    let cost = |i: usize, j: usize| 1.0 - scores.get(i, j);
    // potentials and matching use 1-based sentinel column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
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
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}
