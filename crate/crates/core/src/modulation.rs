//! Topology symbols, constellations, frequency plans, received currents for
//! the four modulation schemes and per-symbol power normalization.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::CVector;
use crate::network::{solve_currents, ChannelInverse, CoupledNetwork, NetworkLayout};
use num_complex::Complex64;

/// Set of active coils in an N x N grid, 1-based row-major indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopologySymbol {
    active: Vec<usize>,
}

impl TopologySymbol {
    pub fn new(mut active: Vec<usize>, grid_side: usize) -> Result<Self> {
        active.sort_unstable();
        active.dedup();
        let cells = grid_side * grid_side;
        if active.is_empty() {
            return Err(invalid("pattern", "needs at least one active coil"));
        }
        if let Some(&bad) = active.iter().find(|&&i| i == 0 || i > cells) {
            return Err(Error::Index {
                index: bad,
                lo: 1,
                hi: cells,
            });
        }
        Ok(Self { active })
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// T.
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Per-coil frequencies, all transmitters concurrently.
    Mod1,
    /// Per-coil frequencies, TDMA.
    Mod2,
    /// Shared frequency set, all transmitters concurrently.
    Mod3,
    /// Shared frequency set, TDMA.
    Mod4,
}

impl Scheme {
    pub fn is_tdma(self) -> bool {
        matches!(self, Scheme::Mod2 | Scheme::Mod4)
    }

    pub fn plan_mode(self) -> PlanMode {
        match self {
            Scheme::Mod1 | Scheme::Mod2 => PlanMode::PerCoilOrthogonal,
            Scheme::Mod3 | Scheme::Mod4 => PlanMode::SharedSet,
        }
    }
}

/// One constellation point.
///
/// For concurrent schemes `patterns[j]` is transmitter j's pattern index.
/// For TDMA schemes there is a single entry, used by whichever transmitter
/// owns the slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkSymbol {
    pub index: usize,
    pub patterns: Vec<usize>,
}

/// Enumerates network symbols in lexicographic order of pattern indices.
///
/// With `merge_symmetric` the concurrent schemes keep only non-decreasing
/// pattern tuples, collapsing permutations that a mirror-symmetric geometry
/// cannot tell apart (2 transmitters, 2 patterns: (A,A), (A,B), (B,B)).
pub fn enumerate_constellation(
    patterns: &[TopologySymbol],
    users: usize,
    scheme: Scheme,
    merge_symmetric: bool,
) -> Result<Vec<NetworkSymbol>> {
    let n = patterns.len();
    if n < 2 {
        return Err(invalid("patterns", "need at least two patterns"));
    }
    if users < 2 {
        return Err(invalid("users", "need at least one transmitter besides the receiver"));
    }
    if scheme.is_tdma() {
        return Ok((0..n)
            .map(|p| NetworkSymbol {
                index: p,
                patterns: vec![p],
            })
            .collect());
    }
    let tx = users - 1;
    let mut out = Vec::new();
    let mut tuple = vec![0usize; tx];
    loop {
        if !merge_symmetric || tuple.windows(2).all(|w| w[0] <= w[1]) {
            out.push(NetworkSymbol {
                index: out.len(),
                patterns: tuple.clone(),
            });
        }
        // odometer increment, last position fastest
        let mut pos = tx;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            tuple[pos] += 1;
            if tuple[pos] < n {
                break;
            }
            tuple[pos] = 0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    PerCoilOrthogonal,
    SharedSet,
}

/// Transmission frequencies, with the band given in multiples of omega0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPlan {
    pub mode: PlanMode,
    pub band: (f64, f64),
    pub n_omega: usize,
    pub n_sets: usize,
    pub seed: u64,
}

impl FrequencyPlan {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.band;
        if !(lo > 0.0) || !(lo < hi) {
            return Err(invalid("band", format!("need 0 < lo < hi, got ({lo}, {hi})")));
        }
        if self.n_omega == 0 || self.n_sets == 0 {
            return Err(invalid("n_omega", "frequency counts must be >= 1"));
        }
        Ok(())
    }

    /// `n_omega` evenly spaced frequencies spanning the band (rad/s); coil
    /// t of every transmitter uses entry t.
    pub fn per_coil_frequencies(&self, omega0: f64) -> Result<Vec<f64>> {
        if self.mode != PlanMode::PerCoilOrthogonal {
            return Err(Error::PlanMode("per_coil_orthogonal"));
        }
        self.validate()?;
        let (lo, hi) = self.band;
        let n = self.n_omega;
        Ok((0..n)
            .map(|i| {
                let x = if n == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                };
                x * omega0
            })
            .collect())
    }

    /// Draws the sets from the plan's own seed.
    pub fn frequency_sets(&self, omega0: f64) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        sample_frequency_sets(self, omega0, &mut rng)
    }
}

/// `n_sets` sets of `n_omega` distinct frequencies drawn uniformly from the
/// band, each set sorted ascending (rad/s).
pub fn sample_frequency_sets<R: Rng + ?Sized>(plan: &FrequencyPlan, omega0: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if plan.mode != PlanMode::SharedSet {
        return Err(Error::PlanMode("shared_set"));
    }
    plan.validate()?;
    let (lo, hi) = plan.band;
    let mut sets = Vec::with_capacity(plan.n_sets);
    for _ in 0..plan.n_sets {
        let mut set: Vec<f64> = Vec::with_capacity(plan.n_omega);
        while set.len() < plan.n_omega {
            let w = rng.random_range(lo..hi) * omega0;
            if !set.contains(&w) {
                set.push(w);
            }
        }
        set.sort_by(f64::total_cmp);
        sets.push(set);
    }
    Ok(sets)
}

fn receiver_index(layout: &NetworkLayout, i: usize) -> Result<()> {
    if i >= layout.receiver_count() {
        return Err(Error::Index {
            index: i,
            lo: 0,
            hi: layout.receiver_count() - 1,
        });
    }
    Ok(())
}

fn coil_in_block(layout: &NetworkLayout, t: usize) -> Result<()> {
    if t >= layout.active_per_user() {
        return Err(Error::Index {
            index: t,
            lo: 0,
            hi: layout.active_per_user().saturating_sub(1),
        });
    }
    Ok(())
}

/// Mod1: noiseless current at receiver coil `i` at coil `t`'s frequency,
/// sum_j Gamma_{omega_t}(i, t + j T). Indices are 0-based.
pub fn received_current_mod1(net: &CoupledNetwork, per_coil: &[f64], t: usize, i: usize) -> Result<Complex64> {
    let layout = &net.layout;
    coil_in_block(layout, t)?;
    receiver_index(layout, i)?;
    let omega = *per_coil.get(t).ok_or(Error::Dimension {
        expected: layout.active_per_user(),
        got: per_coil.len(),
    })?;
    let g = net.gamma(omega)?;
    let mut sum = Complex64::new(0.0, 0.0);
    for tx in 0..layout.transmitter_count() {
        sum += g.gamma[(i, layout.transmitter_block(tx)?.start + t)];
    }
    Ok(sum)
}

/// Mod2: as Mod1 but on the TDMA slot network of transmitter `tx`.
pub fn received_current_mod2(
    net: &CoupledNetwork,
    per_coil: &[f64],
    tx: usize,
    t: usize,
    i: usize,
) -> Result<Complex64> {
    let slot = net.restrict_to(tx)?;
    received_current_mod1(&slot, per_coil, t, i)
}

/// Mod3: sum of Gamma_{omega}(i, t) over every transmitter coil.
pub fn received_current_mod3(net: &CoupledNetwork, omega: f64, i: usize) -> Result<Complex64> {
    receiver_index(&net.layout, i)?;
    let g = net.gamma(omega)?;
    Ok(row_sum(&g, i, net.layout.transmitter_indices()))
}

/// Mod4: Mod3 restricted to transmitter `tx`'s TDMA slot network.
pub fn received_current_mod4(net: &CoupledNetwork, tx: usize, omega: f64, i: usize) -> Result<Complex64> {
    let slot = net.restrict_to(tx)?;
    received_current_mod3(&slot, omega, i)
}

fn row_sum(g: &ChannelInverse, i: usize, cols: std::ops::Range<usize>) -> Complex64 {
    cols.map(|c| g.gamma[(i, c)]).sum()
}

/// Noiseless Mod3 measurement vector over a frequency set, unit voltages.
pub fn mod3_vector(net: &CoupledNetwork, freqs: &[f64], i: usize) -> Result<CVector> {
    let values = freqs
        .iter()
        .map(|&w| received_current_mod3(net, w, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(CVector::from_vec(values))
}

/// Real power delivered by the sources, sum_i Re{V_i conj(I_i)}.
pub fn transmit_power(layout: &NetworkLayout, gamma: &ChannelInverse, voltages: &CVector) -> Result<f64> {
    if voltages.iter().take(layout.receiver_count()).any(|v| v.norm() != 0.0) {
        return Err(invalid("voltages", "receiver coils carry no source"));
    }
    let currents = solve_currents(gamma, voltages)?;
    let mut p = 0.0;
    let mut scale = 0.0;
    for (v, i) in voltages.iter().zip(currents.iter()) {
        p += (v * i.conj()).re;
        scale += v.norm() * i.norm();
    }
    if p < -1e-9 * scale {
        return Err(Error::NegativePower(p));
    }
    Ok(p.max(0.0))
}

/// Power dissipated in the loads, sum_{i < N_R} Z_L |I_i|^2.
pub fn received_power(layout: &NetworkLayout, currents: &CVector, z_load: f64) -> f64 {
    currents
        .iter()
        .take(layout.loaded_count())
        .map(|i| z_load * i.norm_sqr())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equalize {
    Transmit,
    Received,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    /// Total power shared by the whole constellation (W).
    pub total_power: f64,
    pub equalize: Equalize,
}

impl PowerBudget {
    pub fn new(total_power: f64, equalize: Equalize) -> Self {
        Self { total_power, equalize }
    }

    /// Average transmit power per symbol, total / N_c.
    pub fn mean_per_symbol(&self, n_symbols: usize) -> f64 {
        self.total_power / n_symbols as f64
    }
}

/// Transmit and load powers of one symbol with unit source voltages,
/// summed over every frequency in use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolPower {
    pub transmit: f64,
    pub received: f64,
}

impl SymbolPower {
    pub fn scaled(&self, eta: f64) -> Self {
        Self {
            transmit: self.transmit * eta * eta,
            received: self.received * eta * eta,
        }
    }
}

/// Unit-voltage Mod3 powers of `net` over all `freq_sets`.
pub fn symbol_power(net: &CoupledNetwork, freq_sets: &[Vec<f64>]) -> Result<SymbolPower> {
    let v = net.layout.unit_voltages();
    let mut out = SymbolPower {
        transmit: 0.0,
        received: 0.0,
    };
    for &w in freq_sets.iter().flatten() {
        let g = net.gamma(w)?;
        out.transmit += transmit_power(&net.layout, &g, &v)?;
        let i = solve_currents(&g, &v)?;
        out.received += received_power(&net.layout, &i, net.z_load);
    }
    Ok(out)
}

/// Amplitude scale factors eta_k applied to every source voltage of symbol
/// k (uniformly across frequencies).
///
/// `Transmit`: each symbol consumes the mean per-symbol budget.
/// `Received`: every symbol delivers the same load power while the average
/// transmit power over the constellation equals the mean budget.
pub fn normalize_symbol_power(powers: &[SymbolPower], budget: &PowerBudget) -> Result<Vec<f64>> {
    if powers.is_empty() {
        return Err(invalid("constellation", "must not be empty"));
    }
    let target = budget.mean_per_symbol(powers.len());
    for (k, p) in powers.iter().enumerate() {
        let denom = match budget.equalize {
            Equalize::Transmit => p.transmit,
            Equalize::Received => p.received,
        };
        if !(denom > 0.0) || !(p.transmit > 0.0) {
            return Err(Error::DegenerateSymbol(k));
        }
    }
    Ok(match budget.equalize {
        Equalize::Transmit => powers.iter().map(|p| (target / p.transmit).sqrt()).collect(),
        Equalize::Received => {
            let ratio = powers.iter().map(|p| p.transmit / p.received).sum::<f64>() / powers.len() as f64;
            let rx = target / ratio;
            powers.iter().map(|p| (rx / p.received).sqrt()).collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patterns(n: usize) -> Vec<TopologySymbol> {
        (0..n).map(|i| TopologySymbol::new(vec![i + 1], 3).unwrap()).collect()
    }

    #[test]
    fn topology_symbol_validation() {
        assert!(TopologySymbol::new(vec![], 3).is_err());
        assert!(TopologySymbol::new(vec![0, 1], 3).is_err());
        assert!(TopologySymbol::new(vec![10], 3).is_err());
        let s = TopologySymbol::new(vec![9, 1, 3, 8, 7], 3).unwrap();
        assert_eq!(s.active(), &[1, 3, 7, 8, 9]);
    }

    #[test]
    fn constellation_sizes() {
        let p2 = patterns(2);
        assert_eq!(enumerate_constellation(&p2, 3, Scheme::Mod3, false).unwrap().len(), 4);
        let merged = enumerate_constellation(&p2, 3, Scheme::Mod3, true).unwrap();
        let tuples: Vec<_> = merged.iter().map(|s| s.patterns.clone()).collect();
        assert_eq!(tuples, vec![vec![0, 0], vec![0, 1], vec![1, 1]]);
        assert_eq!(enumerate_constellation(&p2, 2, Scheme::Mod2, false).unwrap().len(), 2);
        let p3 = patterns(3);
        let c = enumerate_constellation(&p3, 2, Scheme::Mod1, false).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c[2].patterns, vec![2]);
        assert_eq!(c[2].index, 2);
        let big = enumerate_constellation(&p3, 4, Scheme::Mod3, false).unwrap();
        assert_eq!(big.len(), 27);
        assert_eq!(big[5].patterns, vec![0, 1, 2]);
        assert!(enumerate_constellation(&p3[..1], 3, Scheme::Mod3, false).is_err());
    }

    #[test]
    fn frequency_sets_are_seeded_and_in_band() {
        let plan = FrequencyPlan {
            mode: PlanMode::SharedSet,
            band: (0.99, 1.01),
            n_omega: 32,
            n_sets: 1,
            seed: 7,
        };
        let w0 = 2.0 * std::f64::consts::PI * 1e6;
        let a = plan.frequency_sets(w0).unwrap();
        let b = plan.frequency_sets(w0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].len(), 32);
        for w in a[0].windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(a[0].iter().all(|&w| w >= 0.99 * w0 && w <= 1.01 * w0));

        let wide = FrequencyPlan {
            band: (0.92, 1.08),
            n_omega: 24,
            n_sets: 24,
            ..plan.clone()
        };
        let sets = wide.frequency_sets(w0).unwrap();
        assert_eq!(sets.len(), 24);
        assert!(sets.iter().flatten().all(|&w| w >= 0.92 * w0 && w <= 1.08 * w0));
        assert!(plan.per_coil_frequencies(w0).is_err());
    }

    #[test]
    fn per_coil_frequencies_are_even() {
        let plan = FrequencyPlan {
            mode: PlanMode::PerCoilOrthogonal,
            band: (0.9, 1.1),
            n_omega: 5,
            n_sets: 1,
            seed: 0,
        };
        let f = plan.per_coil_frequencies(1.0).unwrap();
        let expected = [0.9, 0.95, 1.0, 1.05, 1.1];
        for (a, b) in f.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn normalization_contracts() {
        let powers = [
            SymbolPower { transmit: 2.0, received: 0.1 },
            SymbolPower { transmit: 5.0, received: 0.4 },
            SymbolPower { transmit: 1.0, received: 0.02 },
        ];
        let tx = normalize_symbol_power(&powers, &PowerBudget::new(3e-3, Equalize::Transmit)).unwrap();
        for (p, e) in powers.iter().zip(&tx) {
            assert!((p.scaled(*e).transmit / 1e-3 - 1.0).abs() < 1e-12);
        }
        let rx = normalize_symbol_power(&powers, &PowerBudget::new(3e-3, Equalize::Received)).unwrap();
        let scaled: Vec<_> = powers.iter().zip(&rx).map(|(p, e)| p.scaled(*e)).collect();
        for s in &scaled {
            assert!((s.received / scaled[0].received - 1.0).abs() < 1e-12);
        }
        let mean_tx = scaled.iter().map(|s| s.transmit).sum::<f64>() / 3.0;
        assert!((mean_tx / 1e-3 - 1.0).abs() < 1e-12);

        let same = [powers[0]; 3];
        let eq = normalize_symbol_power(&same, &PowerBudget::new(1e-3, Equalize::Received)).unwrap();
        assert!(eq.iter().all(|e| *e == eq[0]));

        let dead = [powers[0], SymbolPower { transmit: 1.0, received: 0.0 }];
        assert!(matches!(
            normalize_symbol_power(&dead, &PowerBudget::new(1e-3, Equalize::Received)),
            Err(Error::DegenerateSymbol(1))
        ));
    }

    #[test]
    fn normalization_is_idempotent() {
        let powers = [
            SymbolPower { transmit: 2.0, received: 0.1 },
            SymbolPower { transmit: 5.0, received: 0.4 },
        ];
        for eq in [Equalize::Transmit, Equalize::Received] {
            let budget = PowerBudget::new(1e-3, eq);
            let eta = normalize_symbol_power(&powers, &budget).unwrap();
            let scaled: Vec<_> = powers.iter().zip(&eta).map(|(p, e)| p.scaled(*e)).collect();
            let again = normalize_symbol_power(&scaled, &budget).unwrap();
            assert!(again.iter().all(|e| (e - 1.0).abs() < 1e-12), "{again:?}");
        }
    }
}
