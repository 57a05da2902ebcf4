//! Random conformal factors, eigenvalue splitting search, Monte Carlo
//! genericity scans and simplicity certificates.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{deformed_spectrum, ConformalFactor};
use crate::eigensolver::{cluster_eigenvalues, ClusterEntry, Tolerances};
use crate::error::{DiracError, Result};
use crate::perturbation::{perturbation_matrix, EigenCluster, PAIRING_TOL};
use crate::torus::{build_mode_set, SpinStructure};

/// Grid used to measure the sup norm of random factors.
const SUP_GRID: usize = 32;

/// Random real trigonometric polynomial of degree `degree`, rescaled so its
/// sup norm on a 32³ grid equals `amplitude`.
///
/// Coefficients (including the mean) are standard complex Gaussians, subject
/// to `f̂(-m) = conj f̂(m)`. Deterministic in `seed`.
pub fn random_factor(seed: u64, degree: usize, amplitude: f64) -> ConformalFactor {
    if amplitude == 0.0 {
        return ConformalFactor::zero();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = degree as i32;
    let mut entries = Vec::new();
    for m0 in -d..=d {
        for m1 in -d..=d {
            for m2 in -d..=d {
                let m = [m0, m1, m2];
                if m == [0, 0, 0] {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    entries.push((m, Complex64::new(re, 0.0)));
                } else if is_positive(m) {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    let z = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
                    entries.push((m, z));
                    entries.push((m.map(|v| -v), z.conj()));
                }
            }
        }
    }
    let f = ConformalFactor::from_coeffs(degree, entries).expect("symmetric by construction");
    let sup = sup_on_grid(&f);
    f.scaled(amplitude / sup)
}

fn sup_on_grid(f: &ConformalFactor) -> f64 {
    let grid = crate::grid::Grid3::new(SUP_GRID.max(4 * f.degree() + 2)).expect("valid grid");
    f.evaluate_on_grid(&grid)
        .expect("grid large enough")
        .iter()
        .fold(0.0, |a, v| a.max(v.abs()))
}

/// First nonzero component positive: one representative of each `±m`.
fn is_positive(m: [i32; 3]) -> bool {
    m.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0)
}

/// Frequencies `0 < |m|∞ ≤ d`, one per `±m` pair, by `|m|²` then
/// lexicographically.
pub fn half_frequencies(d: usize) -> Vec<[i32; 3]> {
    let d = d as i32;
    let mut out = Vec::new();
    for m0 in -d..=d {
        for m1 in -d..=d {
            for m2 in -d..=d {
                let m = [m0, m1, m2];
                if is_positive(m) {
                    out.push(m);
                }
            }
        }
    }
    out.sort_by_key(|m| (m.iter().map(|v| v * v).sum::<i32>(), *m));
    out
}

/// Rates obtained for one candidate factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRates {
    pub label: String,
    pub quaternionic_rates: Vec<f64>,
    /// Number of distinct quaternionic rates.
    pub distinct: usize,
    /// Smallest distance between distinct quaternionic rates.
    pub rate_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Deformation parameter of the verification solve.
    pub t_verify: f64,
    /// Minimal accepted rate gap, relative to `max(1, |λ|)`.
    pub gap_threshold: f64,
    pub random_candidates: usize,
    pub seed: u64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            t_verify: 0.05,
            gap_threshold: 1e-3,
            random_candidates: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCertificate {
    pub lambda: f64,
    pub p_h: usize,
    pub label: String,
    pub factor: ConformalFactor,
    pub quaternionic_rates: Vec<f64>,
    pub rate_gap: f64,
    pub t_verify: f64,
    /// Sub-clusters of the deformed cluster at `t_verify`.
    pub post_split: Vec<ClusterEntry>,
    pub max_post_p_h: usize,
    /// Sorted `λ + t·rate` predictions and the observed sub-eigenvalues.
    pub predicted: Vec<f64>,
    pub observed: Vec<f64>,
    pub max_deviation: f64,
    pub candidates_tried: usize,
}

fn candidate_list(max_degree: usize, opts: &SplitOptions) -> Vec<(String, ConformalFactor)> {
    let mut out = Vec::new();
    for m in half_frequencies(max_degree) {
        out.push((format!("cos{m:?}"), ConformalFactor::cosine(m, 1.0)));
        out.push((format!("sin{m:?}"), ConformalFactor::sine(m, 1.0)));
    }
    for i in 0..opts.random_candidates {
        let seed = opts.seed.wrapping_add(i as u64);
        out.push((format!("random(seed={seed})"), random_factor(seed, max_degree, 1.0)));
    }
    out
}

/// Searches single-frequency factors, then random ones, for a conformal
/// direction whose first-order rates split the quaternionic multiplicity of
/// `cluster`, and confirms the split with one deformed solve.
pub fn split_search(
    cluster: &EigenCluster,
    max_degree: usize,
    opts: &SplitOptions,
) -> Result<SplitCertificate> {
    if !cluster.j_closed() || cluster.p_quaternionic() < 2 {
        return Err(DiracError::Precondition(format!(
            "splitting needs a J-closed cluster with quaternionic multiplicity >= 2, got {} (J-closed: {})",
            cluster.p_quaternionic(),
            cluster.j_closed()
        )));
    }
    let lambda = cluster.lambda();
    let threshold = opts.gap_threshold * lambda.abs().max(1.0);
    let mut table = Vec::new();
    let candidates = candidate_list(max_degree, opts);
    for (label, f) in candidates {
        let report = perturbation_matrix(cluster, &f)?;
        let scale = report.rates.iter().fold(1.0f64, |a, r| a.max(r.abs()));
        let groups = report.distinct_quaternionic_rates(PAIRING_TOL * scale);
        let rate_gap = groups.windows(2).map(|w| w[1].0 - w[0].0).reduce(f64::min);
        table.push(CandidateRates {
            label: label.clone(),
            quaternionic_rates: report.quaternionic_rates.clone(),
            distinct: groups.len(),
            rate_gap,
        });
        let Some(gap) = rate_gap.filter(|g| *g >= threshold) else {
            continue;
        };
        log::debug!("{label}: {} distinct rates, gap {gap:.3e}", groups.len());
        if let Some(cert) = verify_split(cluster, &f, &report.rates, opts.t_verify)? {
            return Ok(SplitCertificate {
                lambda,
                p_h: cluster.p_quaternionic(),
                label,
                factor: f,
                quaternionic_rates: report.quaternionic_rates,
                rate_gap: gap,
                candidates_tried: table.len(),
                ..cert
            });
        }
    }
    Err(DiracError::SplitExhausted {
        lambda,
        tried: table.len(),
        table,
    })
}

fn verify_split(
    cluster: &EigenCluster,
    f: &ConformalFactor,
    rates: &[f64],
    t: f64,
) -> Result<Option<SplitCertificate>> {
    let spec = deformed_spectrum(f, t, cluster.modes())?;
    let p = cluster.p_complex();
    let offset = cluster.offset();
    let observed = spec.values[offset..offset + p].to_vec();
    let tol = Tolerances::default().cluster_for(t);
    let post_split: Vec<ClusterEntry> = cluster_eigenvalues(&observed, tol)
        .iter()
        .map(|s| ClusterEntry {
            lambda: s.lambda,
            mult_c: s.mult_c,
            mult_h: s.mult_h,
        })
        .collect();
    let max_post_p_h = post_split.iter().map(|c| c.mult_h).max().unwrap_or(0);
    if max_post_p_h >= cluster.p_quaternionic() {
        return Ok(None);
    }
    let mut predicted: Vec<f64> = rates.iter().map(|r| cluster.lambda() + t * r).collect();
    predicted.sort_by(f64::total_cmp);
    let max_deviation = observed
        .iter()
        .zip(&predicted)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(Some(SplitCertificate {
        lambda: cluster.lambda(),
        p_h: cluster.p_quaternionic(),
        label: String::new(),
        factor: f.clone(),
        quaternionic_rates: Vec::new(),
        rate_gap: 0.0,
        t_verify: t,
        post_split,
        max_post_p_h,
        predicted,
        observed,
        max_deviation,
        candidates_tried: 0,
    }))
}

/// Parameters of a Monte Carlo genericity scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    pub delta: SpinStructure,
    pub trials: usize,
    pub t: f64,
    #[serde(rename = "N")]
    pub order: usize,
    pub degree: usize,
    pub amplitude: f64,
    pub seed: u64,
    /// Number of positive clusters examined per trial.
    pub clusters: usize,
    pub workers: usize,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams {
            delta: SpinStructure::new([1, 0, 0]).expect("valid"),
            trials: 50,
            t: 0.05,
            order: 3,
            degree: 2,
            amplitude: 0.3,
            seed: 0,
            clusters: 3,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    /// The first positive clusters in increasing order.
    pub clusters: Vec<ClusterEntry>,
    /// Quaternionic multiplicities of those clusters.
    pub multiplicities: Vec<usize>,
    pub all_simple: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenericityReport {
    pub params: ScanParams,
    pub trials: Vec<TrialRecord>,
    /// Fraction of requested trials whose examined clusters are all
    /// quaternionically simple (failed trials count as not simple).
    pub simple_fraction: f64,
    pub failures: Vec<TrialFailure>,
}

impl GenericityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `trial,seed,cluster,lambda,mult_quaternionic` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,seed,cluster,lambda,mult_quaternionic\n");
        for t in &self.trials {
            for (i, c) in t.clusters.iter().enumerate() {
                out.push_str(&format!("{},{},{},{},{}\n", t.index, t.seed, i + 1, c.lambda, c.mult_h));
            }
        }
        out
    }
}

/// Solves one deformed problem and records its first `clusters` positive
/// clusters.
pub fn scan_trial(
    delta: SpinStructure,
    order: usize,
    f: &ConformalFactor,
    t: f64,
    clusters: usize,
) -> Result<Vec<ClusterEntry>> {
    let modes = build_mode_set(order, delta)?;
    let spec = deformed_spectrum(f, t, &modes)?;
    Ok(spec
        .positive_clusters()
        .take(clusters)
        .map(|c| ClusterEntry {
            lambda: c.lambda,
            mult_c: c.mult_c,
            mult_h: c.mult_h,
        })
        .collect())
}

/// Runs `trials` independent deformations `random_factor(seed + i, …)` on a
/// pool of `workers` threads; the report does not depend on `workers`.
pub fn genericity_scan(params: &ScanParams) -> Result<GenericityReport> {
    if params.clusters == 0 || params.degree == 0 {
        return Err(DiracError::InvalidInput("clusters and degree must be positive".into()));
    }
    if params.amplitude.is_nan() || params.amplitude < 0.0 || !params.t.is_finite() {
        return Err(DiracError::InvalidInput("amplitude and t must be finite, amplitude >= 0".into()));
    }
    build_mode_set(params.order, params.delta)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(params.workers.max(1))
        .build()
        .map_err(|e| DiracError::InvalidInput(format!("thread pool: {e}")))?;
    let outcomes: Vec<(usize, u64, Result<Vec<ClusterEntry>>)> = pool.install(|| {
        (0..params.trials)
            .into_par_iter()
            .map(|i| {
                let seed = params.seed.wrapping_add(i as u64);
                let f = random_factor(seed, params.degree, params.amplitude);
                (i, seed, scan_trial(params.delta, params.order, &f, params.t, params.clusters))
            })
            .collect()
    });
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (index, seed, outcome) in outcomes {
        match outcome {
            Ok(clusters) => {
                let multiplicities: Vec<usize> = clusters.iter().map(|c| c.mult_h).collect();
                let all_simple =
                    clusters.len() == params.clusters && clusters.iter().all(|c| c.mult_c == 2);
                trials.push(TrialRecord {
                    index,
                    seed,
                    clusters,
                    multiplicities,
                    all_simple,
                });
            }
            Err(e) => {
                log::warn!("trial {index} failed: {e}");
                failures.push(TrialFailure {
                    index,
                    seed,
                    error: e.to_string(),
                });
            }
        }
    }
    let simple = trials.iter().filter(|t| t.all_simple).count();
    Ok(GenericityReport {
        params: params.clone(),
        simple_fraction: if params.trials == 0 {
            0.0
        } else {
            simple as f64 / params.trials as f64
        },
        trials,
        failures,
    })
}

/// Outcome of a simplicity check for the first `k` eigenvalues on each side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplicityReport {
    pub k: usize,
    pub passed: bool,
    pub kernel_dim: usize,
    /// First `k` positive eigenvalues, repeated by quaternionic multiplicity.
    pub positive: Vec<f64>,
    /// First `k` negative eigenvalues by increasing `|λ|`, same convention.
    pub negative: Vec<f64>,
    /// First coincidence found, as `(side, i, j)` with 1-based positions.
    pub offending: Option<(String, usize, usize)>,
    pub reason: Option<String>,
}

/// Checks that the deformed operator has no kernel and that
/// `λ_{±1}, …, λ_{±k}`, listed with quaternionic repetition, are pairwise
/// different.
pub fn simplicity_certificate(
    delta: SpinStructure,
    f: &ConformalFactor,
    t: f64,
    k: usize,
    order: usize,
) -> Result<SimplicityReport> {
    if k == 0 {
        return Err(DiracError::InvalidInput("k must be at least 1".into()));
    }
    let modes = build_mode_set(order, delta)?;
    let spec = deformed_spectrum(f, t, &modes)?;
    let trusted = modes.trusted_radius() * (-t.abs() * f.sup_norm()).exp();

    let side = |spans: Vec<_>| -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        for (id, s) in spans.into_iter().enumerate() {
            let s: &crate::eigensolver::ClusterSpan = s;
            for _ in 0..s.mult_h.max(1) {
                out.push((s.lambda, id));
            }
        }
        out
    };
    let pos = side(spec.positive_clusters().collect());
    let neg = side(spec.negative_clusters().collect());
    for (name, list) in [("positive", &pos), ("negative", &neg)] {
        let kth = list.get(k - 1).map(|v| v.0.abs());
        match kth {
            Some(v) if v < trusted => {}
            _ => {
                return Err(DiracError::UntrustedRange {
                    k,
                    reason: format!(
                        "{name} eigenvalue {k} is {} but the truncation is trusted only below {trusted:.4}",
                        kth.map_or("unavailable".to_string(), |v| format!("{v:.4}"))
                    ),
                })
            }
        }
    }
    let kernel_dim = spec.kernel_dim();
    let mut offending = None;
    let mut reason = None;
    if kernel_dim > 0 {
        reason = Some(format!("kernel of complex dimension {kernel_dim}"));
    }
    for (name, list) in [("positive", &pos), ("negative", &neg)] {
        if offending.is_some() {
            break;
        }
        if let Some(i) = (1..k).find(|&i| list[i].1 == list[i - 1].1) {
            offending = Some((name.to_string(), i, i + 1));
            reason.get_or_insert_with(|| {
                format!("{name} eigenvalues {i} and {} coincide at {:.12}", i + 1, list[i].0)
            });
        }
    }
    Ok(SimplicityReport {
        k,
        passed: kernel_dim == 0 && offending.is_none(),
        kernel_dim,
        positive: pos[..k].iter().map(|v| v.0).collect(),
        negative: neg[..k].iter().map(|v| v.0).collect(),
        offending,
        reason,
    })
}
