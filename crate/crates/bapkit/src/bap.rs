//! Evolved increments and the block Arnoldi perturbation driver.
//!
//! The evolved increment of a direction `v` at base state `x0` is
//! `I(v) = phi_T(x0 + a v) - phi_T(x0)` in working coordinates, `a` being the
//! perturbation amplitude. Collecting `I(e_i)` columnwise gives the evolved
//! increment matrix; its leading right singular vectors are the fastest
//! growing perturbations over `[0, T]`. The matrix costs one trajectory per
//! state dimension, so the block Arnoldi driver instead touches it only
//! through increment evaluations: `m` loops of an `l`-column block basis cost
//! `m * l` trajectories and approximate the leading singular vectors through
//! the projected block Hessenberg matrix.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dynamics::{energy_transform, inverse_energy_transform, Flow, ModelSpec, SystemState};
use crate::error::{Error, Result};
use crate::linalg::{self, qr_thin, SingularTriplet, RANK_TOL};

/// Norm choice for working coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Euclidean,
    TotalEnergy,
}

/// Bijection between system states and the working coordinates in which all
/// perturbation arithmetic, norms, and singular vectors live.
#[derive(Debug, Clone)]
pub enum WorkingMap {
    Identity,
    /// Total-energy coordinates of the shallow water model: the Euclidean
    /// norm of the image squares to the physical energy.
    TotalEnergy { spec: ModelSpec },
}

impl WorkingMap {
    pub fn for_model(spec: &ModelSpec, norm: NormKind) -> Result<Self> {
        match norm {
            NormKind::Euclidean => Ok(WorkingMap::Identity),
            NormKind::TotalEnergy => {
                if !spec.is_shallow_water() {
                    return Err(Error::Config {
                        field: "norm".into(),
                        message: "the total-energy norm is defined for the shallow water model only"
                            .into(),
                    });
                }
                Ok(WorkingMap::TotalEnergy { spec: spec.clone() })
            }
        }
    }

    pub fn to_working(&self, state: &SystemState) -> Result<DVector<f64>> {
        match self {
            WorkingMap::Identity => Ok(state.values.clone()),
            WorkingMap::TotalEnergy { spec } => {
                Ok(energy_transform(state, spec)?.values)
            }
        }
    }

    pub fn from_working(&self, v: &DVector<f64>) -> Result<SystemState> {
        match self {
            WorkingMap::Identity => Ok(SystemState::new(v.clone())),
            WorkingMap::TotalEnergy { spec } => {
                inverse_energy_transform(&SystemState::new(v.clone()), spec)
            }
        }
    }
}

/// Base state, horizon, and amplitude for evolved increment evaluations.
/// Construction integrates the base trajectory once; every [`eif`] call
/// afterwards costs exactly one perturbed trajectory.
///
/// [`eif`]: PerturbationContext::eif
pub struct PerturbationContext<'a> {
    flow: &'a dyn Flow,
    map: WorkingMap,
    x0: SystemState,
    base_working: DVector<f64>,
    evolved_base: DVector<f64>,
    t: f64,
    amplitude: f64,
}

impl<'a> PerturbationContext<'a> {
    pub fn new(
        flow: &'a dyn Flow,
        map: WorkingMap,
        x0: SystemState,
        t: f64,
        amplitude: f64,
    ) -> Result<Self> {
        if !(amplitude > 0.0) || !amplitude.is_finite() {
            return Err(Error::Precondition(format!(
                "perturbation amplitude must be positive, got {amplitude}"
            )));
        }
        if x0.dim() != flow.dim() {
            return Err(Error::Dimension {
                context: "perturbation base state",
                expected: flow.dim(),
                got: x0.dim(),
            });
        }
        let base_working = map.to_working(&x0)?;
        let evolved_base = map.to_working(&flow.propagate(&x0, t)?)?;
        Ok(PerturbationContext {
            flow,
            map,
            x0,
            base_working,
            evolved_base,
            t,
            amplitude,
        })
    }

    pub fn dim(&self) -> usize {
        self.flow.dim()
    }

    pub fn flow(&self) -> &dyn Flow {
        self.flow
    }

    pub fn map(&self) -> &WorkingMap {
        &self.map
    }

    pub fn base_state(&self) -> &SystemState {
        &self.x0
    }

    pub fn base_working(&self) -> &DVector<f64> {
        &self.base_working
    }

    pub fn horizon(&self) -> f64 {
        self.t
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Evolved increment of working direction `v`:
    /// `phi_T(x0 + a v) - phi_T(x0)` in working coordinates. Callers pass
    /// unit-norm `v`; the amplitude `a` is applied here.
    pub fn eif(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dim() {
            return Err(Error::Dimension {
                context: "evolved increment direction",
                expected: self.dim(),
                got: v.len(),
            });
        }
        let perturbed = self
            .map
            .from_working(&(&self.base_working + v * self.amplitude))?;
        let evolved = self.map.to_working(&self.flow.propagate(&perturbed, self.t)?)?;
        Ok(evolved - &self.evolved_base)
    }
}

/// Anything that acts like a matrix through products with single vectors.
/// `Sync` so blocks of products can run in parallel.
pub trait MatVec: Sync {
    fn dim(&self) -> usize;

    fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>>;
}

impl MatVec for PerturbationContext<'_> {
    fn dim(&self) -> usize {
        PerturbationContext::dim(self)
    }

    fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.eif(v)
    }
}

/// Explicit square matrix as a [`MatVec`], for tests and verification.
pub struct DenseOp<'a>(pub &'a DMatrix<f64>);

impl MatVec for DenseOp<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if self.0.nrows() != self.0.ncols() || v.len() != self.0.ncols() {
            return Err(Error::Dimension {
                context: "dense operator",
                expected: self.0.ncols(),
                got: v.len(),
            });
        }
        Ok(self.0 * v)
    }
}

/// Columnwise evolved increments of the canonical basis: the full evolved
/// increment matrix, `n` trajectories. Columns are evaluated in parallel but
/// assembled in index order, so the result is deterministic.
pub fn build_eim(ctx: &PerturbationContext) -> Result<DMatrix<f64>> {
    let n = ctx.dim();
    let cols: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            ctx.eif(&e)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&cols))
}

/// Leading `k` singular triplets of the explicit evolved increment matrix.
pub fn eim_leading_sv(ctx: &PerturbationContext, k: usize) -> Result<Vec<SingularTriplet>> {
    let eim = build_eim(ctx)?;
    let mut triplets = linalg::svd_triplets(&eim)?;
    triplets.truncate(k);
    Ok(triplets)
}

/// Past steps required to form `count` chords (see [`chord_vectors`]).
pub fn chord_history_depth(count: usize, stride: usize, span: usize) -> usize {
    (count.saturating_sub(1)) * stride + span
}

/// Start block from recent trajectory history: column `j` is the normalized
/// working-space chord ending `j * stride` steps before the newest state and
/// spanning `span` steps. `history` is ordered oldest to newest and must hold
/// at least `chord_history_depth(count, stride, span) + 1` states. Zero
/// chords are kept as zero columns so downstream orthonormalization reports
/// the deficiency.
pub fn chord_vectors(
    history: &[SystemState],
    map: &WorkingMap,
    count: usize,
    stride: usize,
    span: usize,
) -> Result<DMatrix<f64>> {
    if count == 0 || stride == 0 || span == 0 {
        return Err(Error::Precondition(format!(
            "chord parameters must be positive, got count={count}, stride={stride}, span={span}"
        )));
    }
    let required = chord_history_depth(count, stride, span) + 1;
    if history.len() < required {
        return Err(Error::InsufficientHistory {
            required,
            available: history.len(),
        });
    }
    let newest = history.len() - 1;
    let n = map.to_working(&history[newest])?.len();
    let mut block = DMatrix::zeros(n, count);
    for j in 0..count {
        let end = newest - j * stride;
        let chord =
            map.to_working(&history[end])? - map.to_working(&history[end - span])?;
        let norm = chord.norm();
        if norm > 0.0 {
            block.set_column(j, &(chord / norm));
        }
    }
    Ok(block)
}

/// Seeded standard Gaussian start block, deterministic in (n, cols, seed).
pub fn random_block(n: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block = DMatrix::zeros(n, cols);
    for j in 0..cols {
        for i in 0..n {
            block[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    block
}

/// Derives an independent stream seed from a master seed and a tag path.
pub fn subseed(master: u64, tags: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for t in tags {
        hasher.update(t.to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// One replaced column during a loop of the block Arnoldi iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BreakdownEvent {
    pub loop_index: usize,
    pub column: usize,
}

/// Output of [`block_arnoldi`]: `B Q = Q H + G E^T` up to roundoff, where
/// `E` selects the trailing `block_size` columns.
pub struct BlockDecomp {
    /// Orthonormal block basis, `n x (loops * block_size)`.
    pub q: DMatrix<f64>,
    /// Block upper Hessenberg projection, square of order
    /// `loops * block_size`. Entries below the first subdiagonal block are
    /// zero; the subdiagonal blocks themselves are unstructured.
    pub h: DMatrix<f64>,
    /// Final unorthogonalized remainder `G`, `n x block_size`.
    pub residual: DMatrix<f64>,
    pub block_size: usize,
    pub loops: usize,
    pub breakdowns: Vec<BreakdownEvent>,
}

impl BlockDecomp {
    pub fn order(&self) -> usize {
        self.loops * self.block_size
    }
}

/// Block Arnoldi iteration on a matrix-free operator. The start block is
/// orthonormalized (rank deficiency there is the caller's problem and
/// errors); each loop applies the operator columnwise, projects against the
/// accumulated basis with classical Gram-Schmidt plus one full
/// reorthogonalization pass, and QR-factors the remainder into the next
/// block. Dependent remainder columns are replaced by seeded random vectors
/// (recorded as breakdown events, at most 3 per loop); the last loop keeps
/// its remainder as the residual factor, so a vanishing remainder there is
/// the benign full-space case.
pub fn block_arnoldi(
    op: &dyn MatVec,
    start: &DMatrix<f64>,
    loops: usize,
    seed: u64,
) -> Result<BlockDecomp> {
    let n = op.dim();
    let ell = start.ncols();
    if loops == 0 || ell == 0 {
        return Err(Error::Precondition(format!(
            "block Arnoldi needs at least one loop and one column, got loops={loops}, block={ell}"
        )));
    }
    if start.nrows() != n {
        return Err(Error::Dimension {
            context: "block Arnoldi start block",
            expected: n,
            got: start.nrows(),
        });
    }
    let order = loops * ell;
    if order > n {
        return Err(Error::Precondition(format!(
            "subspace order {order} exceeds the state dimension {n}"
        )));
    }

    let mut q = DMatrix::zeros(n, order);
    q.columns_mut(0, ell).copy_from(&linalg::orthonormalize(start)?);
    let mut h = DMatrix::zeros(order, order);
    let mut residual = DMatrix::zeros(n, ell);
    let mut breakdowns = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for j in 0..loops {
        let mut w = apply_block(op, &q.columns(j * ell, ell).clone_owned())?;
        let active = (j + 1) * ell;
        // CGS2: both coefficient passes accumulate into H.
        let basis = q.columns(0, active).clone_owned();
        let c1 = basis.transpose() * &w;
        w -= &basis * &c1;
        let c2 = basis.transpose() * &w;
        w -= &basis * &c2;
        h.view_mut((0, j * ell), (active, ell)).copy_from(&(c1 + c2));

        if j + 1 == loops {
            residual = w;
            break;
        }

        let thin = qr_thin(&w)?;
        if thin.deficient.is_empty() {
            q.columns_mut(active, ell).copy_from(&thin.q);
            h.view_mut((active, j * ell), (ell, ell)).copy_from(&thin.r);
            continue;
        }

        // Breakdown: recover the full-rank part with a pivoted QR, zero the
        // dependent rows of R, and fill the freed columns with fresh random
        // directions (their H rows stay zero, so the relation is preserved).
        for &column in &thin.deficient {
            breakdowns.push(BreakdownEvent {
                loop_index: j + 1,
                column,
            });
        }
        let replaced = thin.deficient.len();
        if replaced > 3 {
            return Err(Error::Breakdown {
                loop_index: j + 1,
                replaced,
            });
        }
        let scale = linalg::spectral_norm(&w);
        let piv = w.clone().col_piv_qr();
        let (piv_q, mut piv_r, perm) = piv.unpack();
        let rank = (0..ell)
            .take_while(|&i| piv_r[(i, i)].abs() > RANK_TOL * scale)
            .count();
        for i in rank..ell {
            for k in 0..ell {
                piv_r[(i, k)] = 0.0;
            }
        }
        // piv_q * piv_r reconstructs W with permuted columns; undo it so the
        // H block lines up with the original column order.
        let mut h_block = piv_r;
        perm.inv_permute_columns(&mut h_block);
        h.view_mut((active, j * ell), (ell, ell)).copy_from(&h_block);

        let mut next = DMatrix::zeros(n, ell);
        next.columns_mut(0, rank)
            .copy_from(&piv_q.columns(0, rank));
        for c in rank..ell {
            let fresh = loop {
                let mut v = DVector::zeros(n);
                for i in 0..n {
                    v[i] = StandardNormal.sample(&mut rng);
                }
                // Orthogonalize against everything accepted so far.
                for _pass in 0..2 {
                    let prev = q.columns(0, active);
                    v -= prev * (prev.transpose() * &v);
                    let fresh_part = next.columns(0, c);
                    v -= fresh_part * (fresh_part.transpose() * &v);
                }
                let norm = v.norm();
                if norm > RANK_TOL {
                    break v / norm;
                }
            };
            next.set_column(c, &fresh);
        }
        q.columns_mut(active, ell).copy_from(&next);
    }

    Ok(BlockDecomp {
        q,
        h,
        residual,
        block_size: ell,
        loops,
        breakdowns,
    })
}

fn apply_block(op: &dyn MatVec, block: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cols: Vec<DVector<f64>> = (0..block.ncols())
        .into_par_iter()
        .map(|c| op.apply(&block.column(c).clone_owned()))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&cols))
}

/// Block Arnoldi perturbation output.
pub struct BapResult {
    /// `n x k`, unit columns: approximate leading right singular vectors of
    /// the operator, ordered by decreasing singular value estimate.
    pub perturbations: DMatrix<f64>,
    /// All `loops * block_size` singular values of the projection.
    pub sigmas: Vec<f64>,
    pub decomp: BlockDecomp,
}

/// Runs [`block_arnoldi`] and lifts the top `k` right singular vectors of
/// the projected matrix back to the full space.
pub fn bap(
    op: &dyn MatVec,
    start: &DMatrix<f64>,
    loops: usize,
    k: usize,
    seed: u64,
) -> Result<BapResult> {
    let decomp = block_arnoldi(op, start, loops, seed)?;
    let order = decomp.order();
    if k > order {
        return Err(Error::Precondition(format!(
            "requested {k} directions from an order-{order} subspace"
        )));
    }
    let triplets = linalg::svd_triplets(&decomp.h)?;
    let mut perturbations = DMatrix::zeros(op.dim(), k);
    for (i, t) in triplets.iter().take(k).enumerate() {
        perturbations.set_column(i, &(&decomp.q * &t.right));
    }
    let sigmas = triplets.iter().map(|t| t.sigma).collect();
    Ok(BapResult {
        perturbations,
        sigmas,
        decomp,
    })
}

/// `||H||_2 / ||B||_2`: how much of the operator's leading growth the
/// projected subspace captured.
pub fn subspace_capture_ratio(h: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let denom = linalg::spectral_norm(b);
    if denom == 0.0 {
        return Err(Error::Precondition(
            "capture ratio is undefined for the zero operator".into(),
        ));
    }
    Ok(linalg::spectral_norm(h) / denom)
}
