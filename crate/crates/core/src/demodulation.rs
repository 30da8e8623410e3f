//! Noise model, the eigenbasis forms of the received current, and the
//! pilot-aided and blind (pre-computed basis) detectors.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, CMatrix, CVector, J};
use crate::modulation::NetworkSymbol;
use crate::network::{CoupledNetwork, EigenBasis, ScalarCoefficients, CONDITION_LIMIT};
use crate::scene::{GeometrySample, MacScene};

/// Complex AWGN with total variance `n0` per sample (n0 / 2 per component).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub n0: f64,
    pub seed: u64,
}

pub fn add_awgn<R: Rng + ?Sized>(clean: &CVector, model: &NoiseModel, rng: &mut R) -> Result<CVector> {
    if !(model.n0 >= 0.0) {
        return Err(invalid("n0", "must be >= 0"));
    }
    if model.n0 == 0.0 {
        return Ok(clean.clone());
    }
    let sd = (model.n0 / 2.0).sqrt();
    Ok(clean.map(|z| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        z + Complex64::new(sd * re, sd * im)
    }))
}

/// Which υ-vector to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approximation {
    /// Full rank-one load correction.
    Exact,
    /// Load correction without the receiver weights |q_1(j)|^2: the sums
    /// over j are replaced by their value at the mean eigenvalue.
    MeanField,
    /// No load correction at all.
    DropLoad,
}

/// Receiver coil whose current is measured.
const RX: usize = 0;

/// q_Sigma = sum over transmitter coils j of q_j V_j with unit voltages.
pub fn q_sigma(net: &CoupledNetwork) -> CVector {
    let q = &net.basis.q;
    let tx = net.layout.transmitter_indices();
    CVector::from_fn(q.ncols(), |t, _| Complex64::new(tx.clone().map(|j| q[(j, t)]).sum(), 0.0))
}

/// q_0 = conj(q_1) ∘ q_Sigma (elementwise).
pub fn q_zero(net: &CoupledNetwork) -> CVector {
    let q1 = net.basis.row_vector(RX);
    q1.map(|z| z.conj()).component_mul(&q_sigma(net))
}

/// |sum_t q_0(t)| / sum_t |q_0(t)|.
pub fn q_zero_residual(net: &CoupledNetwork) -> f64 {
    let q0 = q_zero(net);
    let scale: f64 = q0.iter().map(|z| z.norm()).sum();
    if scale == 0.0 {
        return 0.0;
    }
    q0.sum().norm() / scale
}

fn phi(coeffs: &ScalarCoefficients, lambda: f64, index: usize) -> Result<Complex64> {
    let d = coeffs.alpha * lambda + 1.0;
    if d.norm() <= 1e-14 * (1.0 + (coeffs.alpha * lambda).norm()) {
        return Err(Error::EigenSingular { index, lambda });
    }
    Ok(1.0 / d)
}

/// (alpha / j omega) (alpha Lambda + I + beta sum_{i < N_R} q_i q_i^H Lambda)^-1.
pub fn upsilon_eigenform(basis: &EigenBasis, coeffs: &ScalarCoefficients, loaded: usize) -> Result<CMatrix> {
    let n = basis.size();
    if loaded > n {
        return Err(Error::Dimension { expected: n, got: loaded });
    }
    let lambda = basis.lambda.map(|l| Complex64::new(l, 0.0));
    let mut inner = linalg::to_complex(&basis.load_projector(loaded)) * CMatrix::from_diagonal(&lambda) * coeffs.beta;
    for i in 0..n {
        inner[(i, i)] += coeffs.alpha * lambda[i] + 1.0;
    }
    let (inv, cond) = linalg::inverse_with_condition(&inner)?;
    if cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned { condition: cond });
    }
    Ok(inv * (coeffs.alpha / (J * coeffs.omega)))
}

/// Single-load closed form by the rank-one inversion identity:
/// (alpha / j omega) [Θ^-1 - beta Θ^-1 q_1 q_1^H Λ Θ^-1 / (1 + beta q_1^H Λ Θ^-1 q_1)].
pub fn upsilon_perturbation(basis: &EigenBasis, coeffs: &ScalarCoefficients) -> Result<CMatrix> {
    let n = basis.size();
    let phis = (0..n)
        .map(|t| phi(coeffs, basis.lambda[t], t))
        .collect::<Result<Vec<_>>>()?;
    let theta_inv = CMatrix::from_diagonal(&CVector::from_vec(phis.clone()));
    let q1 = basis.row_vector(RX);
    let lam = basis.lambda.map(|l| Complex64::new(l, 0.0));
    // Θ^-1 q_1 and q_1^H Λ Θ^-1
    let left = CVector::from_fn(n, |t, _| phis[t] * q1[t]);
    let right = CVector::from_fn(n, |t, _| q1[t].conj() * lam[t] * phis[t]);
    let denom = 1.0 + coeffs.beta * right.iter().zip(q1.iter()).map(|(r, q)| r * q).sum::<Complex64>();
    if denom.norm() <= 1e-14 {
        return Err(Error::PerturbationSingular(denom.norm()));
    }
    let update = &left * right.transpose() * (coeffs.beta / denom);
    Ok((theta_inv - update) * (coeffs.alpha / (J * coeffs.omega)))
}

/// υ such that the receiver current is υ^T q_0:
/// υ(t) = (alpha / j omega) (φ_t - (Σ_j ϱ_j) λ_t φ_t / (1 + Σ_j λ_j ϱ_j)),
/// ϱ_j = beta |q_1(j)|^2 φ_j, φ_t = 1 / (alpha λ_t + 1).
///
/// Without a load (`loaded = false`) the correction term vanishes.
pub fn upsilon_vector(
    coeffs: &ScalarCoefficients,
    lambda: &DVector<f64>,
    q1: &DVector<f64>,
    loaded: bool,
    mode: Approximation,
) -> Result<CVector> {
    let n = lambda.len();
    if q1.len() != n {
        return Err(Error::Dimension { expected: n, got: q1.len() });
    }
    let phis = (0..n).map(|t| phi(coeffs, lambda[t], t)).collect::<Result<Vec<_>>>()?;
    let zero = Complex64::new(0.0, 0.0);
    let (s1, s2) = if !loaded {
        (zero, zero)
    } else {
        match mode {
            Approximation::Exact => {
                let mut s1 = zero;
                let mut s2 = zero;
                for t in 0..n {
                    let rho = coeffs.beta * q1[t] * q1[t] * phis[t];
                    s1 += rho;
                    s2 += rho * lambda[t];
                }
                (s1, s2)
            }
            Approximation::MeanField => {
                let mean = lambda.mean();
                let p = phi(coeffs, mean, n)?;
                (coeffs.beta * p, coeffs.beta * p * mean)
            }
            Approximation::DropLoad => (zero, zero),
        }
    };
    let denom = 1.0 + s2;
    if denom.norm() <= 1e-14 {
        return Err(Error::PerturbationSingular(denom.norm()));
    }
    let c = coeffs.alpha / (J * coeffs.omega);
    Ok(CVector::from_fn(n, |t, _| c * (phis[t] - s1 * lambda[t] * phis[t] / denom)))
}

/// Υ_k: one υ-vector row per frequency, N_omega x N_Tot.
pub fn upsilon_matrix(net: &CoupledNetwork, freqs: &[f64], mode: Approximation) -> Result<CMatrix> {
    let n = net.basis.size();
    let q1 = net.basis.q.row(RX).transpose();
    let loaded = net.loaded() > RX;
    let mut out = CMatrix::zeros(freqs.len(), n);
    for (r, &w) in freqs.iter().enumerate() {
        let v = upsilon_vector(&net.coefficients(w)?, &net.basis.lambda, &q1, loaded, mode)?;
        out.set_row(r, &v.transpose());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub k_hat: usize,
    /// Per-set hard decisions (blind detection only).
    pub per_set_decisions: Vec<usize>,
    /// Per-symbol metric; lower is better.
    pub metric_values: Vec<f64>,
}

fn argmin(values: &[f64]) -> usize {
    // strict comparison keeps the lowest index on ties
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotCodebook {
    pub symbols: Vec<CVector>,
    pub n0: f64,
}

/// s_k = η_k Υ_k q_{0,k} over a single frequency set.
pub fn build_pilot_codebook(networks: &[CoupledNetwork], freqs: &[f64], etas: &[f64], n0: f64) -> Result<PilotCodebook> {
    if networks.len() != etas.len() {
        return Err(Error::Dimension {
            expected: networks.len(),
            got: etas.len(),
        });
    }
    let mut symbols = Vec::with_capacity(networks.len());
    for (k, (net, &eta)) in networks.iter().zip(etas).enumerate() {
        let s = upsilon_matrix(net, freqs, Approximation::Exact)? * q_zero(net) * Complex64::new(eta, 0.0);
        if s.iter().all(|z| z.norm() == 0.0) || s.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::DegenerateSymbol(k));
        }
        symbols.push(s);
    }
    Ok(PilotCodebook { symbols, n0 })
}

impl PilotCodebook {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// d_ik = |s_i - s_k|.
    pub fn distances(&self) -> Vec<Vec<f64>> {
        self.symbols
            .iter()
            .map(|a| self.symbols.iter().map(|b| (a - b).norm()).collect())
            .collect()
    }
}

/// argmin_k Re{0.5 s_k^H s_k - Ĩ^H s_k}.
pub fn ml_detect(observed: &CVector, codebook: &PilotCodebook) -> Result<DetectionResult> {
    let mut metric = Vec::with_capacity(codebook.len());
    for s in &codebook.symbols {
        if s.len() != observed.len() {
            return Err(Error::Dimension {
                expected: s.len(),
                got: observed.len(),
            });
        }
        metric.push(0.5 * s.norm_squared() - observed.dotc(s).re);
    }
    Ok(DetectionResult {
        k_hat: argmin(&metric),
        per_set_decisions: Vec::new(),
        metric_values: metric,
    })
}

/// Union bound (0.5 / N_c) sum_i sum_{k != i} erfc(d_ik / (2 sqrt(2 N0))).
/// May exceed one at high noise.
pub fn pairwise_error_bound(codebook: &PilotCodebook) -> Result<f64> {
    if !(codebook.n0 >= 0.0) {
        return Err(invalid("n0", "must be >= 0"));
    }
    let d = codebook.distances();
    let nc = codebook.len();
    let scale = 2.0 * (2.0 * codebook.n0).sqrt();
    let mut sum = 0.0;
    for (i, row) in d.iter().enumerate() {
        for (k, dik) in row.iter().enumerate() {
            if i == k {
                continue;
            }
            // noiseless limit: only coincident symbols can be confused
            sum += if scale == 0.0 {
                if *dik == 0.0 { 1.0 } else { 0.0 }
            } else {
                libm::erfc(dik / scale)
            };
        }
    }
    Ok(0.5 * sum / nc as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fusion {
    /// Plurality of per-set hard decisions, summed score breaks ties.
    Vote,
    /// argmin of the score summed over sets.
    SumScore,
}

/// Pre-computed detection data of one symbol on one frequency set.
///
/// Every υ entry depends on its eigen-index only through λ_t, so modes with
/// equal eigenvalues give identical columns and only the sum of their
/// coefficients is observable. Such columns are merged (averaged) before
/// pseudoinversion; for exact duplicates this leaves 1^T Ῡ^† unchanged while
/// keeping near-duplicates from being split by the rank cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBasis {
    pub upsilon_bar: CMatrix,
    /// Eigen-indices merged into each column of `merged`.
    pub groups: Vec<Vec<usize>>,
    pub merged: CMatrix,
    pub pinv: CMatrix,
    /// m_k = 1^T Ῡ_k^†, so a score is |m_k^T Ĩ|^2.
    pub weights: CVector,
    pub rank: usize,
}

impl SymbolBasis {
    pub fn from_average(upsilon_bar: CMatrix, groups: Vec<Vec<usize>>, rank_tol: f64) -> Result<Self> {
        let n = upsilon_bar.ncols();
        let mut seen = vec![false; n];
        for &t in groups.iter().flatten() {
            if t >= n || std::mem::replace(&mut seen[t], true) {
                return Err(invalid("groups", format!("index {t} repeated or out of range")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(invalid("groups", "must cover every column"));
        }
        let mut merged = CMatrix::zeros(upsilon_bar.nrows(), groups.len());
        for (g, members) in groups.iter().enumerate() {
            let mut col = merged.column_mut(g);
            for &t in members {
                col += upsilon_bar.column(t);
            }
            col /= Complex64::new(members.len() as f64, 0.0);
        }
        let (pinv, rank) = linalg::pseudo_inverse(&merged, rank_tol);
        let weights = CVector::from_fn(pinv.ncols(), |c, _| pinv.column(c).sum());
        Ok(Self {
            upsilon_bar,
            groups,
            merged,
            pinv,
            weights,
            rank,
        })
    }

    pub fn score(&self, observed: &CVector) -> f64 {
        self.weights.dot(observed).norm_sqr()
    }
}

/// Groups indices of a descending spectrum whose neighbours agree within
/// `rel_tol` of the larger magnitude. `rel_tol = 0` keeps every index alone.
pub fn eigenvalue_groups(lambda: &DVector<f64>, rel_tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for t in 0..lambda.len() {
        let joins = t > 0 && {
            let prev = lambda[t - 1];
            (prev - lambda[t]).abs() <= rel_tol * prev.abs().max(lambda[t].abs())
        };
        match groups.last_mut() {
            Some(g) if joins => g.push(t),
            _ => groups.push(vec![t]),
        }
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisOptions {
    pub approximation: Approximation,
    /// Relative singular-value cutoff of the pseudoinverse.
    pub rank_tol: f64,
    /// Relative eigenvalue distance below which columns are merged.
    pub merge_tol: f64,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self {
            approximation: Approximation::MeanField,
            rank_tol: 1e-8,
            merge_tol: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedBasis {
    pub freq_sets: Vec<Vec<f64>>,
    /// Indexed [set][symbol].
    pub sets: Vec<Vec<SymbolBasis>>,
    pub prior: Vec<GeometrySample>,
    pub options: BasisOptions,
}

impl PrecomputedBasis {
    pub fn symbols(&self) -> usize {
        self.sets.first().map_or(0, Vec::len)
    }
}

/// Ῡ_k = elementwise mean of Υ_k over the prior networks, indexed
/// `prior_networks[sample][symbol]`, then pseudoinverted per set.
pub fn build_precomputed_basis(
    prior_networks: &[Vec<CoupledNetwork>],
    freq_sets: &[Vec<f64>],
    options: &BasisOptions,
) -> Result<PrecomputedBasis> {
    let first = prior_networks.first().ok_or_else(|| invalid("prior", "must not be empty"))?;
    let nc = first.len();
    if prior_networks.iter().any(|s| s.len() != nc) {
        return Err(invalid("prior", "every sample needs one network per symbol"));
    }
    let count = Complex64::new(prior_networks.len() as f64, 0.0);
    let mut groups = Vec::with_capacity(nc);
    for k in 0..nc {
        let n = first[k].basis.size();
        if prior_networks.iter().any(|s| s[k].basis.size() != n) {
            return Err(invalid("prior", format!("symbol {k} changes network size across the prior")));
        }
        let mean = prior_networks
            .iter()
            .fold(DVector::zeros(n), |acc, s| acc + &s[k].basis.lambda)
            / prior_networks.len() as f64;
        groups.push(eigenvalue_groups(&mean, options.merge_tol));
    }
    let mut sets = Vec::with_capacity(freq_sets.len());
    for freqs in freq_sets {
        let mut per_symbol = Vec::with_capacity(nc);
        for k in 0..nc {
            let mut acc = CMatrix::zeros(freqs.len(), first[k].basis.size());
            for sample in prior_networks {
                acc += upsilon_matrix(&sample[k], freqs, options.approximation)?;
            }
            let sb = SymbolBasis::from_average(acc / count, groups[k].clone(), options.rank_tol)?;
            if sb.rank < sb.merged.nrows().min(sb.merged.ncols()) {
                log::warn!(
                    "averaged matrix of symbol {k} is rank deficient: effective rank {} of {}",
                    sb.rank,
                    sb.merged.ncols()
                );
            }
            per_symbol.push(sb);
        }
        sets.push(per_symbol);
    }
    Ok(PrecomputedBasis {
        freq_sets: freq_sets.to_vec(),
        sets,
        prior: Vec::new(),
        options: *options,
    })
}

/// Builds the prior networks of `scene` for each geometry sample and
/// averages them.
pub fn precompute_for_scene(
    scene: &MacScene,
    constellation: &[NetworkSymbol],
    prior: &[GeometrySample],
    freq_sets: &[Vec<f64>],
    options: &BasisOptions,
) -> Result<PrecomputedBasis> {
    let nets = prior
        .iter()
        .map(|g| scene.with_geometry(g).networks(constellation))
        .collect::<Result<Vec<_>>>()?;
    let mut basis = build_precomputed_basis(&nets, freq_sets, options)?;
    basis.prior = prior.to_vec();
    Ok(basis)
}

/// Per set: argmin_k |1^T Ῡ_k^† Ĩ_S|^2; then fused across sets.
pub fn blind_detect(observed_sets: &[CVector], basis: &PrecomputedBasis, fusion: Fusion) -> Result<DetectionResult> {
    if observed_sets.len() != basis.sets.len() {
        return Err(Error::Dimension {
            expected: basis.sets.len(),
            got: observed_sets.len(),
        });
    }
    let nc = basis.symbols();
    let mut summed = vec![0.0; nc];
    let mut votes = vec![0usize; nc];
    let mut decisions = Vec::with_capacity(observed_sets.len());
    let mut scores = vec![0.0; nc];
    for (obs, set) in observed_sets.iter().zip(&basis.sets) {
        for (k, sb) in set.iter().enumerate() {
            if sb.weights.len() != obs.len() {
                return Err(Error::Dimension {
                    expected: sb.weights.len(),
                    got: obs.len(),
                });
            }
            scores[k] = sb.score(obs);
            summed[k] += scores[k];
        }
        let d = argmin(&scores);
        votes[d] += 1;
        decisions.push(d);
    }
    let k_hat = match fusion {
        Fusion::SumScore => argmin(&summed),
        Fusion::Vote => {
            let top = *votes.iter().max().unwrap_or(&0);
            let mut best: Option<usize> = None;
            for k in (0..nc).filter(|&k| votes[k] == top) {
                if best.is_none_or(|b| summed[k] < summed[b]) {
                    best = Some(k);
                }
            }
            best.unwrap_or(0)
        }
    };
    Ok(DetectionResult {
        k_hat,
        per_set_decisions: decisions,
        metric_values: summed,
    })
}

/// Score z_{k,m} = g_{k,m} + m_k^T n: mean and noise variance.
///
/// |z|^2 / (variance / 2) is non-central chi-square with two degrees of
/// freedom. The error event compares two such scores that share the same
/// noise, so their difference has no simple closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareStats {
    pub g: Complex64,
    pub variance: f64,
    pub weights: CVector,
}

/// g_{k,m} = 1^T Ῡ_k^† Υ_m η_m q_{0,m}, variance N0 |m_k|^2.
pub fn chi_square_stats(
    candidate: &SymbolBasis,
    upsilon_m: &CMatrix,
    eta_m: f64,
    q0_m: &CVector,
    n0: f64,
) -> Result<ChiSquareStats> {
    if upsilon_m.nrows() != candidate.weights.len() || upsilon_m.ncols() != q0_m.len() {
        return Err(Error::Dimension {
            expected: candidate.weights.len(),
            got: upsilon_m.nrows(),
        });
    }
    if !(n0 >= 0.0) {
        return Err(invalid("n0", "must be >= 0"));
    }
    let clean = upsilon_m * q0_m * Complex64::new(eta_m, 0.0);
    Ok(ChiSquareStats {
        g: candidate.weights.dot(&clean),
        variance: n0 * candidate.weights.norm_squared(),
        weights: candidate.weights.clone(),
    })
}

/// max over eigen-index t of (max - min) / |mean| of λ_t across spectra.
pub fn lambda_spread(spectra: &[DVector<f64>]) -> Result<f64> {
    let first = spectra.first().ok_or_else(|| invalid("spectra", "must not be empty"))?;
    let n = first.len();
    let mut worst = 0.0f64;
    for t in 0..n {
        let vals: Vec<f64> = spectra.iter().map(|s| s[t]).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        worst = worst.max((hi - lo) / mean.abs());
    }
    Ok(worst)
}

pub const FORMAT_VERSION: u32 = 1;

/// Column-major complex matrix as plain arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MatrixDump {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl From<&CMatrix> for MatrixDump {
    fn from(m: &CMatrix) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            re: m.iter().map(|z| z.re).collect(),
            im: m.iter().map(|z| z.im).collect(),
        }
    }
}

impl MatrixDump {
    fn restore(&self) -> Result<CMatrix> {
        let n = self.rows * self.cols;
        if self.re.len() != n || self.im.len() != n {
            return Err(Error::Serde(format!("matrix payload has {} entries, expected {n}", self.re.len())));
        }
        Ok(CMatrix::from_iterator(
            self.rows,
            self.cols,
            self.re.iter().zip(&self.im).map(|(&r, &i)| Complex64::new(r, i)),
        ))
    }
}

fn vector_dump(v: &CVector) -> MatrixDump {
    MatrixDump::from(&CMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    format: String,
    version: u32,
    n0: f64,
    symbols: Vec<MatrixDump>,
}

#[derive(Serialize, Deserialize)]
struct BasisFile {
    format: String,
    version: u32,
    options: BasisOptions,
    prior: Vec<GeometrySample>,
    freq_sets: Vec<Vec<f64>>,
    /// Per symbol merged eigen-index groups.
    groups: Vec<Vec<Vec<usize>>>,
    /// [set][symbol] averaged matrices; pseudoinverses are recomputed.
    upsilon_bar: Vec<Vec<MatrixDump>>,
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Serde(format!("expected format `{expected}`, found `{format}`")));
    }
    if version != FORMAT_VERSION {
        return Err(Error::Serde(format!("unsupported version {version}")));
    }
    Ok(())
}

impl PilotCodebook {
    pub fn to_json(&self) -> Result<String> {
        let file = CodebookFile {
            format: "mitopo-codebook".into(),
            version: FORMAT_VERSION,
            n0: self.n0,
            symbols: self.symbols.iter().map(vector_dump).collect(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CodebookFile = serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        check_header(&file.format, file.version, "mitopo-codebook")?;
        let symbols = file
            .symbols
            .iter()
            .map(|d| d.restore().map(|m| m.column(0).into_owned()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { symbols, n0: file.n0 })
    }
}

impl PrecomputedBasis {
    pub fn to_json(&self) -> Result<String> {
        let file = BasisFile {
            format: "mitopo-basis".into(),
            version: FORMAT_VERSION,
            options: self.options,
            prior: self.prior.clone(),
            groups: self.sets.first().map_or_else(Vec::new, |s| s.iter().map(|b| b.groups.clone()).collect()),
            freq_sets: self.freq_sets.clone(),
            upsilon_bar: self
                .sets
                .iter()
                .map(|s| s.iter().map(|b| MatrixDump::from(&b.upsilon_bar)).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BasisFile = serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        check_header(&file.format, file.version, "mitopo-basis")?;
        if file.upsilon_bar.len() != file.freq_sets.len() {
            return Err(Error::Serde("one matrix list per frequency set expected".into()));
        }
        let sets = file
            .upsilon_bar
            .iter()
            .map(|s| {
                if s.len() != file.groups.len() {
                    return Err(Error::Serde("one group list per symbol expected".into()));
                }
                s.iter()
                    .zip(&file.groups)
                    .map(|(d, g)| SymbolBasis::from_average(d.restore()?, g.clone(), file.options.rank_tol))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            freq_sets: file.freq_sets,
            sets,
            prior: file.prior,
            options: file.options,
        })
    }
}
