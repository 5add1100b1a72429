//! Dense helpers on small matrices. Factorizations are delegated to
//! nalgebra; this layer fixes conventions (descending singular values, sign
//! normalization, deficiency thresholds) and adds the nonnormality measures
//! and the singular value error bound check.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Relative threshold below which a column counts as linearly dependent.
pub const RANK_TOL: f64 = 1e-12;

const SVD_MAX_ITER: usize = 100_000;

fn svd_or_err(m: DMatrix<f64>) -> Result<nalgebra::linalg::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    m.try_svd(true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::Precondition("SVD iteration did not converge".into()))
}

/// Largest singular value; 0 for empty matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values()[0]
}

/// Classical Gram-Schmidt with one full reorthogonalization pass (CGS2).
/// Errors with the indices of all columns whose post-projection norm falls
/// below [`RANK_TOL`] times the original column norm.
pub fn orthonormalize(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, cols) = (w.nrows(), w.ncols());
    if cols > n {
        return Err(Error::Dimension {
            context: "orthonormalize (more columns than rows)",
            expected: n,
            got: cols,
        });
    }
    let mut q = DMatrix::zeros(n, cols);
    let mut deficient = Vec::new();
    let mut kept = 0;
    for j in 0..cols {
        let original = w.column(j).norm();
        let mut v = w.column(j).clone_owned();
        for _pass in 0..2 {
            if kept > 0 {
                let basis = q.columns(0, kept);
                let coeffs = basis.transpose() * &v;
                v -= basis * coeffs;
            }
        }
        let norm = v.norm();
        if norm <= RANK_TOL * original || norm == 0.0 {
            deficient.push(j);
            continue;
        }
        q.set_column(kept, &(v / norm));
        kept += 1;
    }
    if !deficient.is_empty() {
        return Err(Error::RankDeficient { columns: deficient });
    }
    Ok(q)
}

/// Thin QR with nonnegative diagonal of `R`. Near-deficient columns (diagonal
/// entry at most [`RANK_TOL`] times the spectral norm) are listed in
/// `deficient` instead of aborting.
pub struct ThinQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub deficient: Vec<usize>,
}

pub fn qr_thin(w: &DMatrix<f64>) -> Result<ThinQr> {
    let (n, cols) = (w.nrows(), w.ncols());
    if cols > n {
        return Err(Error::Dimension {
            context: "qr_thin (more columns than rows)",
            expected: n,
            got: cols,
        });
    }
    let scale = spectral_norm(w);
    let qr = w.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            for k in j..cols {
                r[(j, k)] = -r[(j, k)];
            }
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    let deficient = (0..cols)
        .filter(|&j| r[(j, j)] <= RANK_TOL * scale)
        .collect();
    Ok(ThinQr { q, r, deficient })
}

/// One singular value with its left and right vectors. The right vector's
/// largest-magnitude entry is normalized to be positive (first such entry on
/// ties), and the left vector carries the matching sign.
#[derive(Debug, Clone)]
pub struct SingularTriplet {
    pub sigma: f64,
    pub left: DVector<f64>,
    pub right: DVector<f64>,
}

/// Full SVD as triplets, singular values descending.
pub fn svd_triplets(m: &DMatrix<f64>) -> Result<Vec<SingularTriplet>> {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return Ok(Vec::new());
    }
    let svd = svd_or_err(m.clone())?;
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let mut left = u.column(i).clone_owned();
        let mut right = vt.row(i).transpose();
        let mut pivot = 0;
        for (idx, x) in right.iter().enumerate() {
            if x.abs() > right[pivot].abs() {
                pivot = idx;
            }
        }
        if right[pivot] < 0.0 {
            left.neg_mut();
            right.neg_mut();
        }
        out.push(SingularTriplet {
            sigma: svd.singular_values[i],
            left,
            right,
        });
    }
    Ok(out)
}

fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<nalgebra::Complex<f64>>> {
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::Precondition("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Frobenius departure from normality `sqrt(||B||_F^2 - sum |lambda_i|^2)`.
/// Zero exactly for normal matrices; roundoff is clamped at zero.
pub fn departure_from_normality(m: &DMatrix<f64>) -> Result<f64> {
    square_only(m, "departure_from_normality")?;
    let lambda: f64 = eigenvalues(m)?.iter().map(|l| l.norm_sqr()).sum();
    Ok((m.norm_squared() - lambda).max(0.0).sqrt())
}

/// Departure via the Hermitian part: `sqrt(2 (||H||_F^2 - sum Re(l)^2))`
/// with `H = (B + B^T) / 2`.
pub fn departure_hermitian_route(m: &DMatrix<f64>) -> Result<f64> {
    square_only(m, "departure_hermitian_route")?;
    let h = (m + m.transpose()) * 0.5;
    let re: f64 = eigenvalues(m)?.iter().map(|l| l.re * l.re).sum();
    Ok((2.0 * (h.norm_squared() - re)).max(0.0).sqrt())
}

/// Departure via the skew part: `sqrt(2 (||S||_F^2 - sum Im(l)^2))` with
/// `S = (B - B^T) / 2`.
pub fn departure_skew_route(m: &DMatrix<f64>) -> Result<f64> {
    square_only(m, "departure_skew_route")?;
    let s = (m - m.transpose()) * 0.5;
    let im: f64 = eigenvalues(m)?.iter().map(|l| l.im * l.im).sum();
    Ok((2.0 * (s.norm_squared() - im)).max(0.0).sqrt())
}

/// Commutator-based nonnormality `||B B^T - B^T B||_2 / ||B||_2`. Note the
/// numerator is quadratic in `B` while the denominator is linear, so the
/// ratio scales with `||B||`; see [`nonnormality_ratio_scaled`] for the
/// scale-free variant. Errors on the zero matrix.
pub fn nonnormality_ratio(m: &DMatrix<f64>) -> Result<f64> {
    square_only(m, "nonnormality_ratio")?;
    let denom = spectral_norm(m);
    if denom == 0.0 {
        return Err(Error::Precondition(
            "nonnormality ratio is undefined for the zero matrix".into(),
        ));
    }
    let comm = m * m.transpose() - m.transpose() * m;
    Ok(spectral_norm(&comm) / denom)
}

/// Scale-free variant `||B B^T - B^T B||_2 / ||B||_2^2`.
pub fn nonnormality_ratio_scaled(m: &DMatrix<f64>) -> Result<f64> {
    square_only(m, "nonnormality_ratio_scaled")?;
    let denom = spectral_norm(m);
    if denom == 0.0 {
        return Err(Error::Precondition(
            "nonnormality ratio is undefined for the zero matrix".into(),
        ));
    }
    let comm = m * m.transpose() - m.transpose() * m;
    Ok(spectral_norm(&comm) / (denom * denom))
}

fn square_only(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            context,
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    Ok(())
}

/// Orthonormal basis of the complement of `span(q)`, found by QR-factoring
/// `[q | N]` for a seeded Gaussian `N`. The completion is unique only up to
/// rotation; the fixed seed keeps reports deterministic.
pub fn orthonormal_completion(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, r) = (q.nrows(), q.ncols());
    if r > n {
        return Err(Error::Dimension {
            context: "orthonormal_completion",
            expected: n,
            got: r,
        });
    }
    if r == n {
        return Ok(DMatrix::zeros(n, 0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0417E7E);
    let mut a = DMatrix::zeros(n, n);
    a.columns_mut(0, r).copy_from(q);
    for j in r..n {
        for i in 0..n {
            a[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    let full = a.qr().q();
    let mut w = full.columns(r, n - r).clone_owned();
    // QR may flip signs on the leading block; the complement is unaffected,
    // but guard against a dependent random draw (probability zero).
    let check = (q.transpose() * &w).norm();
    if check > 1e-8 {
        for j in 0..w.ncols() {
            let col = w.column(j).clone_owned();
            let proj = q * (q.transpose() * &col);
            let v = col - proj;
            let norm = v.norm();
            if norm <= RANK_TOL {
                return Err(Error::RankDeficient { columns: vec![j] });
            }
            w.set_column(j, &(v / norm));
        }
    }
    Ok(w)
}

/// Frobenius norm of `B Q - Q H - [0 | G]` where `G` occupies the trailing
/// `G.ncols()` columns.
pub fn arnoldi_relation_residual(
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    h: &DMatrix<f64>,
    g: &DMatrix<f64>,
) -> f64 {
    let mut resid = b * q - q * h;
    let ell = g.ncols();
    let r = q.ncols();
    if ell > 0 && ell <= r {
        let mut tail = resid.columns_mut(r - ell, ell);
        tail -= g;
    }
    resid.norm()
}

/// One approximate singular value checked against the spectrum of `B`.
#[derive(Debug, Clone)]
pub struct BoundEntry {
    pub approx: f64,
    pub nearest: f64,
    pub distance: f64,
    /// `bound - distance`; nonnegative when the bound holds.
    pub margin: f64,
}

/// Chain of norms available when the subspace is exactly invariant
/// (`B Q = Q H`): then the projection norm is also controlled by the
/// departures from normality of `B` and `H`.
#[derive(Debug, Clone)]
pub struct InvariantChain {
    pub projection_spectral: f64,
    pub projection_frobenius: f64,
    pub departure_b: f64,
    pub departure_h: f64,
    pub holds: bool,
}

/// Result of checking the singular value perturbation bound on an Arnoldi
/// quadruple `(B, Q, H, G)`.
#[derive(Debug, Clone)]
pub struct BoundCheck {
    /// `sqrt((||Q^T B W||_2^2 + ||G||_2^2) / 2)`.
    pub bound: f64,
    pub projection_norm: f64,
    pub residual_norm: f64,
    pub entries: Vec<BoundEntry>,
    pub chain: Option<InvariantChain>,
    pub ok: bool,
}

/// Verifies that every singular value of `H` lies within
/// `sqrt((||Q^T B W||_2^2 + ||G||_2^2) / 2)` of some singular value of `B`,
/// `W` being an orthonormal completion of `Q`. Requires the quadruple to
/// satisfy the Arnoldi relation to `1e-10 ||B||_F` and `Q` to be orthonormal.
pub fn theorem1_bound_check(
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    h: &DMatrix<f64>,
    g: &DMatrix<f64>,
) -> Result<BoundCheck> {
    let n = b.nrows();
    square_only(b, "theorem1_bound_check (B)")?;
    let r = q.ncols();
    if q.nrows() != n || h.nrows() != r || h.ncols() != r || g.nrows() != n || g.ncols() > r {
        return Err(Error::Dimension {
            context: "theorem1_bound_check (quadruple shapes)",
            expected: n,
            got: q.nrows(),
        });
    }
    let b_scale = b.norm().max(1e-300);
    let ortho = (q.transpose() * q - DMatrix::identity(r, r)).norm();
    if ortho > 1e-8 {
        return Err(Error::Precondition(format!(
            "Q is not orthonormal: ||Q^T Q - I||_F = {ortho:.3e}"
        )));
    }
    let relation = arnoldi_relation_residual(b, q, h, g);
    if relation > 1e-10 * b_scale {
        return Err(Error::Precondition(format!(
            "quadruple violates the Arnoldi relation: residual {relation:.3e} vs scale {b_scale:.3e}"
        )));
    }

    let w = orthonormal_completion(q)?;
    let projection = if w.ncols() == 0 {
        DMatrix::zeros(r, 0)
    } else {
        q.transpose() * b * &w
    };
    let projection_norm = spectral_norm(&projection);
    let residual_norm = spectral_norm(g);
    let bound = ((projection_norm * projection_norm + residual_norm * residual_norm) / 2.0).sqrt();

    let mut true_sigmas = b.clone().singular_values().iter().copied().collect::<Vec<_>>();
    true_sigmas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let approx_sigmas = h.clone().singular_values();

    // Pairing tolerance absorbs the roundoff of both SVDs.
    let slack = 1e-10 * b_scale.max(1.0);
    let mut entries = Vec::with_capacity(approx_sigmas.len());
    let mut ok = true;
    for &a in approx_sigmas.iter() {
        let (nearest, distance) = true_sigmas
            .iter()
            .map(|&s| (s, (s - a).abs()))
            .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .expect("B has at least one singular value");
        let margin = bound + slack - distance;
        if margin < 0.0 {
            ok = false;
        }
        entries.push(BoundEntry {
            approx: a,
            nearest,
            distance,
            margin,
        });
    }

    let chain = if (b * q - q * h).norm() <= 1e-8 * b_scale {
        let projection_frobenius = projection.norm();
        let departure_b = departure_from_normality(b)?;
        let departure_h = departure_from_normality(h)?;
        let gap = (departure_b * departure_b - departure_h * departure_h).max(0.0);
        let tol = 1e-7 * b_scale.max(1.0);
        let holds = projection_norm <= projection_frobenius + tol
            && projection_frobenius * projection_frobenius <= gap + tol * b_scale.max(1.0);
        Some(InvariantChain {
            projection_spectral: projection_norm,
            projection_frobenius,
            departure_b,
            departure_h,
            holds,
        })
    } else {
        None
    };

    Ok(BoundCheck {
        bound,
        projection_norm,
        residual_norm,
        entries,
        chain,
        ok,
    })
}
