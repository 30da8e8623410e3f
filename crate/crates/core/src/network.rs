//! Mutual-inductance and impedance matrices of a coupled-coil network and
//! the channel inverse, both by direct factorization and through the
//! eigenbasis of the mutual-inductance matrix.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coil::{mutual_inductance_with, CoilPose, CoilSpec, ElectricalParams, MutualModel};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, J};

/// Solves whose 1-norm condition estimate exceeds this are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoilRole {
    ReceiverLoaded,
    ReceiverPassive,
    Transmitter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkCoil {
    pub pose: CoilPose,
    /// 1 is the receiver, 2..=K the transmitters.
    pub user: usize,
    pub role: CoilRole,
}

/// All coils of one network realization, in global index order: the
/// receiver block first (loaded coils leading), then one contiguous block of
/// `T` coils per transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    coils: Vec<NetworkCoil>,
    receiver_count: usize,
    loaded_count: usize,
    transmitter_count: usize,
    active_per_user: usize,
}

impl NetworkLayout {
    /// `receiver`: the receiver's coils, of which the first `loaded` carry the
    /// load. `transmitters`: one block of equally many coils per transmitter.
    pub fn new(receiver: &[CoilPose], loaded: usize, transmitters: &[Vec<CoilPose>]) -> Result<Self> {
        if receiver.is_empty() {
            return Err(Error::Layout("receiver needs at least one coil".into()));
        }
        if loaded > receiver.len() {
            return Err(Error::Layout(format!(
                "{loaded} loaded coils but receiver has {}",
                receiver.len()
            )));
        }
        let t = transmitters.first().map_or(0, Vec::len);
        if transmitters.iter().any(|b| b.len() != t) {
            return Err(Error::Layout("transmitter blocks must have equal size".into()));
        }
        if !transmitters.is_empty() && (t == 0 || loaded >= t) {
            return Err(Error::Layout(format!(
                "need 0 <= N_R < T, got N_R = {loaded}, T = {t}"
            )));
        }
        let mut coils = Vec::with_capacity(receiver.len() + t * transmitters.len());
        for (i, pose) in receiver.iter().enumerate() {
            coils.push(NetworkCoil {
                pose: *pose,
                user: 1,
                role: if i < loaded {
                    CoilRole::ReceiverLoaded
                } else {
                    CoilRole::ReceiverPassive
                },
            });
        }
        for (j, block) in transmitters.iter().enumerate() {
            coils.extend(block.iter().map(|pose| NetworkCoil {
                pose: *pose,
                user: j + 2,
                role: CoilRole::Transmitter,
            }));
        }
        Ok(Self {
            coils,
            receiver_count: receiver.len(),
            loaded_count: loaded,
            transmitter_count: transmitters.len(),
            active_per_user: t,
        })
    }

    pub fn coils(&self) -> &[NetworkCoil] {
        &self.coils
    }

    pub fn total(&self) -> usize {
        self.coils.len()
    }

    /// K, counting the receiver.
    pub fn users(&self) -> usize {
        self.transmitter_count + 1
    }

    pub fn transmitter_count(&self) -> usize {
        self.transmitter_count
    }

    /// T, active coils per transmitter.
    pub fn active_per_user(&self) -> usize {
        self.active_per_user
    }

    /// N_R.
    pub fn loaded_count(&self) -> usize {
        self.loaded_count
    }

    pub fn receiver_count(&self) -> usize {
        self.receiver_count
    }

    pub fn receiver_block(&self) -> Range<usize> {
        0..self.receiver_count
    }

    /// Global index range of transmitter `tx` (0-based).
    pub fn transmitter_block(&self, tx: usize) -> Result<Range<usize>> {
        if tx >= self.transmitter_count {
            return Err(Error::Index {
                index: tx,
                lo: 0,
                hi: self.transmitter_count.saturating_sub(1),
            });
        }
        let start = self.receiver_count + tx * self.active_per_user;
        Ok(start..start + self.active_per_user)
    }

    /// Every transmitter coil.
    pub fn transmitter_indices(&self) -> Range<usize> {
        self.receiver_count..self.total()
    }

    /// Receiver block plus transmitter `tx`'s block; every other user removed.
    pub fn tdma_indices(&self, tx: usize) -> Result<Vec<usize>> {
        let block = self.transmitter_block(tx)?;
        Ok(self.receiver_block().chain(block).collect())
    }

    /// The reduced network seen in transmitter `tx`'s TDMA slot.
    pub fn restrict_to(&self, tx: usize) -> Result<Self> {
        let block = self.transmitter_block(tx)?;
        let receiver: Vec<CoilPose> = self.coils[self.receiver_block()].iter().map(|c| c.pose).collect();
        let own: Vec<CoilPose> = self.coils[block].iter().map(|c| c.pose).collect();
        Self::new(&receiver, self.loaded_count, &[own])
    }

    /// Unit-amplitude, zero-phase source vector on every transmitter coil.
    pub fn unit_voltages(&self) -> CVector {
        CVector::from_fn(self.total(), |i, _| {
            if i >= self.receiver_count {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

/// Real symmetric mutual-inductance matrix with L on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct MutualMatrix {
    pub entries: DMatrix<f64>,
}

impl MutualMatrix {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// Keeps only the listed rows and columns, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            entries: self.entries.select_rows(indices).select_columns(indices),
        }
    }
}

pub fn assemble_mutual_matrix(
    layout: &NetworkLayout,
    spec: &CoilSpec,
    inductance: f64,
    model: &MutualModel,
) -> Result<MutualMatrix> {
    let n = layout.total();
    let mut m = DMatrix::<f64>::zeros(n, n);
    let coils = layout.coils();
    for i in 0..n {
        m[(i, i)] = inductance;
        for j in (i + 1)..n {
            let v = mutual_inductance_with(&coils[i].pose, &coils[j].pose, spec, model)?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(MutualMatrix { entries: m })
}

/// Impedance matrix M_omega relating source voltages to coil currents.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceMatrix {
    pub entries: CMatrix,
    pub omega: f64,
}

impl ImpedanceMatrix {
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            entries: self.entries.select_rows(indices).select_columns(indices),
            omega: self.omega,
        }
    }
}

/// Series impedance R + j omega L + 1 / (j omega C_s) of a single coil.
pub fn coil_impedance(omega: f64, params: &ElectricalParams) -> Complex64 {
    Complex64::new(
        params.resistance,
        omega * params.inductance - 1.0 / (omega * params.capacitance),
    )
}

pub fn assemble_impedance_matrix(
    mutual: &MutualMatrix,
    omega: f64,
    params: &ElectricalParams,
    z_load: f64,
    loaded: usize,
) -> Result<ImpedanceMatrix> {
    if !(omega > 0.0) {
        return Err(crate::error::invalid("omega", "must be > 0"));
    }
    let n = mutual.size();
    let zi = coil_impedance(omega, params);
    let entries = CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            if i < loaded {
                zi + z_load
            } else {
                zi
            }
        } else {
            J * (omega * mutual.entries[(i, j)])
        }
    });
    Ok(ImpedanceMatrix { entries, omega })
}

/// Per-frequency scalars of the eigenbasis inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarCoefficients {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub varsigma: Complex64,
    pub omega: f64,
}

impl ScalarCoefficients {
    /// (j omega)^-1 (alpha + beta) for loaded coils, (j omega)^-1 alpha
    /// otherwise: the diagonal of G_omega^-1.
    pub fn g_inv(&self, loaded: bool) -> Complex64 {
        let a = if loaded { self.alpha + self.beta } else { self.alpha };
        a / (J * self.omega)
    }
}

/// varsigma = C_s omega R - j, alpha = j omega^2 C_s / varsigma,
/// beta = -j omega^3 C_s^2 Z_L / (varsigma^2 + varsigma C_s omega Z_L).
pub fn scalar_coefficients(omega: f64, params: &ElectricalParams, z_load: f64) -> Result<ScalarCoefficients> {
    if !(omega > 0.0) {
        return Err(crate::error::invalid("omega", "must be > 0"));
    }
    let c = params.capacitance;
    let varsigma = Complex64::new(c * omega * params.resistance, -1.0);
    let alpha = J * (omega * omega * c) / varsigma;
    let beta = -J * (omega.powi(3) * c * c * z_load) / (varsigma * varsigma + varsigma * (c * omega * z_load));
    Ok(ScalarCoefficients {
        alpha,
        beta,
        varsigma,
        omega,
    })
}

/// M = Q Lambda Q^T with real orthogonal Q, eigenvalues descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub q: DMatrix<f64>,
    pub lambda: DVector<f64>,
}

impl EigenBasis {
    pub fn decompose(mutual: &MutualMatrix) -> Result<Self> {
        let (lambda, q) = linalg::symmetric_eigen(&mutual.entries)?;
        Ok(Self { q, lambda })
    }

    pub fn size(&self) -> usize {
        self.lambda.len()
    }

    /// max |Q Q^T - I|.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.size();
        linalg::max_abs_real(&(&self.q * self.q.transpose() - DMatrix::<f64>::identity(n, n)))
    }

    /// max |Q Lambda Q^T - M| / max |M|.
    pub fn reconstruction_error(&self, mutual: &MutualMatrix) -> f64 {
        let rebuilt = &self.q * DMatrix::from_diagonal(&self.lambda) * self.q.transpose();
        linalg::max_abs_real(&(rebuilt - &mutual.entries)) / linalg::max_abs_real(&mutual.entries)
    }

    /// q_i as a column: the conjugate transpose of row i of Q.
    pub fn row_vector(&self, i: usize) -> CVector {
        CVector::from_iterator(self.size(), self.q.row(i).iter().map(|&x| Complex64::new(x, 0.0)))
    }

    /// sum_{i < loaded} q_i q_i^H.
    pub fn load_projector(&self, loaded: usize) -> DMatrix<f64> {
        let rows = self.q.rows(0, loaded);
        rows.transpose() * rows
    }
}

/// The channel inverse Gamma_omega = M_omega^-1.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInverse {
    pub gamma: CMatrix,
    pub omega: f64,
    /// 1-norm condition estimate of the factored matrix.
    pub condition: f64,
}

impl ChannelInverse {
    pub fn size(&self) -> usize {
        self.gamma.nrows()
    }

    /// max |Gamma M_omega - I|.
    pub fn residual(&self, mw: &ImpedanceMatrix) -> f64 {
        let n = self.size();
        linalg::max_abs(&(&self.gamma * &mw.entries - CMatrix::identity(n, n)))
    }
}

fn checked_inverse(m: &CMatrix) -> Result<(CMatrix, f64)> {
    let (inv, cond) = linalg::inverse_with_condition(m)?;
    if cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned { condition: cond });
    }
    Ok((inv, cond))
}

/// Reference inverse of M_omega by pivoted LU.
pub fn gamma_direct(mw: &ImpedanceMatrix) -> Result<ChannelInverse> {
    let (gamma, condition) = checked_inverse(&mw.entries)?;
    Ok(ChannelInverse {
        gamma,
        omega: mw.omega,
        condition,
    })
}

/// Gamma_omega = Q (alpha Lambda + I + beta sum_i q_i q_i^H Lambda)^-1 Q^H G_omega^-1.
pub fn gamma_eigen(
    basis: &EigenBasis,
    coeffs: &ScalarCoefficients,
    loaded: usize,
) -> Result<ChannelInverse> {
    let n = basis.size();
    if loaded > n {
        return Err(Error::Dimension { expected: n, got: loaded });
    }
    let lambda = basis.lambda.map(|l| Complex64::new(l, 0.0));
    let projector = linalg::to_complex(&basis.load_projector(loaded));
    let mut inner = &projector * CMatrix::from_diagonal(&lambda) * coeffs.beta;
    for i in 0..n {
        inner[(i, i)] += coeffs.alpha * lambda[i] + 1.0;
    }
    let (inner_inv, condition) = checked_inverse(&inner)?;
    let q = linalg::to_complex(&basis.q);
    let mut gamma = &q * inner_inv * q.transpose();
    for (j, mut col) in gamma.column_iter_mut().enumerate() {
        col *= coeffs.g_inv(j < loaded);
    }
    Ok(ChannelInverse {
        gamma,
        omega: coeffs.omega,
        condition,
    })
}

/// Coil currents I = Gamma V.
pub fn solve_currents(gamma: &ChannelInverse, voltages: &CVector) -> Result<CVector> {
    if voltages.len() != gamma.size() {
        return Err(Error::Dimension {
            expected: gamma.size(),
            got: voltages.len(),
        });
    }
    Ok(&gamma.gamma * voltages)
}

/// Channel inverse of the TDMA slot of transmitter `tx`: rows and columns of
/// every other transmitter are deleted from M_omega before inverting. The
/// receiver block is retained. Returns the reduced layout alongside.
pub fn gamma_submatrix_tdma(
    layout: &NetworkLayout,
    mw: &ImpedanceMatrix,
    tx: usize,
) -> Result<(NetworkLayout, ChannelInverse)> {
    let keep = layout.tdma_indices(tx)?;
    let reduced = layout.restrict_to(tx)?;
    let inv = gamma_direct(&mw.select(&keep))?;
    Ok((reduced, inv))
}

/// Everything frequency-independent about one network realization.
#[derive(Debug, Clone)]
pub struct CoupledNetwork {
    pub layout: NetworkLayout,
    pub mutual: MutualMatrix,
    pub params: ElectricalParams,
    pub z_load: f64,
    pub basis: EigenBasis,
}

impl CoupledNetwork {
    pub fn new(
        layout: NetworkLayout,
        spec: &CoilSpec,
        params: ElectricalParams,
        z_load: f64,
        model: &MutualModel,
    ) -> Result<Self> {
        let mutual = assemble_mutual_matrix(&layout, spec, params.inductance, model)?;
        Self::from_mutual(layout, mutual, params, z_load)
    }

    pub fn from_mutual(
        layout: NetworkLayout,
        mutual: MutualMatrix,
        params: ElectricalParams,
        z_load: f64,
    ) -> Result<Self> {
        if mutual.size() != layout.total() {
            return Err(Error::Dimension {
                expected: layout.total(),
                got: mutual.size(),
            });
        }
        let basis = EigenBasis::decompose(&mutual)?;
        Ok(Self {
            layout,
            mutual,
            params,
            z_load,
            basis,
        })
    }

    pub fn loaded(&self) -> usize {
        self.layout.loaded_count()
    }

    pub fn impedance(&self, omega: f64) -> Result<ImpedanceMatrix> {
        assemble_impedance_matrix(&self.mutual, omega, &self.params, self.z_load, self.loaded())
    }

    pub fn coefficients(&self, omega: f64) -> Result<ScalarCoefficients> {
        scalar_coefficients(omega, &self.params, self.z_load)
    }

    pub fn gamma(&self, omega: f64) -> Result<ChannelInverse> {
        gamma_direct(&self.impedance(omega)?)
    }

    pub fn gamma_eigen(&self, omega: f64) -> Result<ChannelInverse> {
        gamma_eigen(&self.basis, &self.coefficients(omega)?, self.loaded())
    }

    /// The network of transmitter `tx`'s TDMA slot.
    pub fn restrict_to(&self, tx: usize) -> Result<Self> {
        let keep = self.layout.tdma_indices(tx)?;
        Self::from_mutual(
            self.layout.restrict_to(tx)?,
            self.mutual.select(&keep),
            self.params,
            self.z_load,
        )
    }
}

/// max |a - b| / max |b|.
pub fn relative_max_error(a: &CMatrix, b: &CMatrix) -> f64 {
    linalg::max_abs(&(a - b)) / linalg::max_abs(b)
}
