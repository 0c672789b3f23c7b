"""Classical reference math for discretised-Gaussian state preparation.

Everything in this module is pure numpy: normalization sums over the integer
lattice, the two-term recursion that splits a width-``sigma`` Gaussian into
half-width pieces on the even/odd sublattices, rotation angles, exact target
amplitudes, and the covariance-factorization helpers used by the
multidimensional pipeline.  The circuit builders elsewhere in the package are
tested against these functions, never the other way around.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GaussianSpec1D",
    "CovarianceSpec",
    "LdltFactors",
    "theta_norm",
    "log_theta_norm",
    "alpha",
    "alpha_tilde",
    "xi_sq",
    "exact_xi_state",
    "recursive_xi_state",
    "optimal_state_1d",
    "optimal_state_nd",
    "fidelity",
    "ldlt",
    "scalar_field_covariance",
]


@dataclass(frozen=True)
class GaussianSpec1D:
    """Mean and width of a one-dimensional lattice Gaussian."""

    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class CovarianceSpec:
    """Mean vector and covariance matrix of a multivariate Gaussian."""

    mu_vec: np.ndarray
    sigma_mat: np.ndarray

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu_vec, dtype=float)
        sig = np.asarray(self.sigma_mat, dtype=float)
        object.__setattr__(self, "mu_vec", mu)
        object.__setattr__(self, "sigma_mat", sig)
        if mu.ndim != 1:
            raise ValueError("mu_vec must be one-dimensional")
        n = mu.shape[0]
        if sig.shape != (n, n):
            raise ValueError(f"sigma_mat must be {n}x{n}, got {sig.shape}")
        if not np.allclose(sig, sig.T, atol=1e-12):
            raise ValueError("sigma_mat must be symmetric")

    @property
    def n_dims(self) -> int:
        return self.mu_vec.shape[0]


@dataclass(frozen=True)
class LdltFactors:
    """Factorization Sigma = M diag(sigma_sq) M^T with M upper unitriangular.

    ``sigma_sq[i]`` is the variance of the i-th independent input Gaussian;
    the off-diagonal entries of ``m_mat`` are the shear coefficients that
    recorrelate those inputs.
    """

    m_mat: np.ndarray
    sigma_sq: np.ndarray


def theta_norm(mu: float, sigma: float) -> float:
    """Dimensionless normalization sum of a lattice Gaussian.

    Returns ``sum_n exp(-(n - mu)^2 / (2 sigma^2)) / sqrt(2 pi sigma^2)``,
    i.e. the Jacobi theta value ``theta(pi mu; exp(-2 pi^2 sigma^2))`` up to
    the Gaussian prefactor.  The function is even in ``mu`` and periodic with
    period 1.

    For ``sigma >= 0.5`` the lattice sum converges quickly and is evaluated
    directly over ``n`` within ``40 sigma + 2`` of the mean.  For smaller
    ``sigma`` the dual (Fourier) series ``1 + 2 sum_p cos(2 pi p mu)
    q^(p^2)`` with ``q = exp(-2 pi^2 sigma^2)`` converges in a handful of
    terms; it is truncated once the next term drops below 1e-16.  Near
    half-integer ``mu`` at very small ``sigma`` the dual series cancels
    catastrophically (the true value is exponentially small), so the result
    is cross-checked and recomputed by direct summation when it comes out
    below the series' own noise floor.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if sigma >= 0.5:
        return _theta_direct(mu, sigma)
    q = math.exp(-2.0 * math.pi**2 * sigma**2)
    total = 1.0
    p = 1
    while True:
        term_bound = 2.0 * q ** (p * p)
        if term_bound < 1e-16:
            break
        total += 2.0 * math.cos(2.0 * math.pi * p * mu) * q ** (p * p)
        p += 1
    if total < 1e-8:
        # Cancellation regime: fall back to the (tiny) direct sum.
        return _theta_direct(mu, sigma)
    return total


def _theta_direct(mu: float, sigma: float) -> float:
    w = 40.0 * sigma + 2.0
    n = np.arange(math.ceil(mu - w), math.floor(mu + w) + 1)
    terms = np.exp(-((n - mu) ** 2) / (2.0 * sigma**2))
    return float(terms.sum()) / math.sqrt(2.0 * math.pi * sigma**2)


def log_theta_norm(mu: float, sigma: float) -> float:
    """Natural log of the un-normalized lattice sum ``f(mu, sigma)``.

    ``f(mu, sigma) = sum_n exp(-(n - mu)^2 / (2 sigma^2))``, evaluated in log
    space so that exponentially small values (small ``sigma``, ``mu`` far
    from the lattice) keep full relative precision.  The summation window is
    symmetric about ``mu``, which preserves the evenness and periodicity
    identities to floating-point exactness.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    w = 40.0 * sigma + 2.0
    n = np.arange(math.ceil(mu - w), math.floor(mu + w) + 1)
    logs = -((n - mu) ** 2) / (2.0 * sigma**2)
    m = logs.max()
    return float(m + math.log(np.exp(logs - m).sum()))


def alpha(mu: float, sigma: float) -> float:
    """Recursion-splitting rotation angle ``alpha(mu, sigma)`` in radians.

    ``tan(alpha)^2 = f((mu-1)/2, sigma/2) / f(mu/2, sigma/2)``: the two-term
    split of the lattice Gaussian into its even and odd sublattices.  The
    ratio is formed in log space and the arctangent is taken on whichever
    side of 1 avoids overflow, so the result is accurate all the way into
    the saturated regimes ``alpha -> 0`` and ``alpha -> pi/2``.
    """
    log_odd = log_theta_norm((mu - 1.0) / 2.0, sigma / 2.0)
    log_even = log_theta_norm(mu / 2.0, sigma / 2.0)
    x = 0.5 * (log_odd - log_even)
    if x >= 0.0:
        return math.pi / 2.0 - math.atan(math.exp(-x))
    return math.atan(math.exp(x))


def alpha_tilde(mu: float, sigma: float) -> float:
    """Rotation angle rescaled to ``[0, 1]``: ``2 alpha / pi``."""
    return 2.0 * alpha(mu, sigma) / math.pi


def xi_sq(mu: float, sigma: float, k: int, n: int) -> float:
    """Probability of outcome ``n`` for the k-qubit lattice Gaussian.

    ``xi(n)^2 = f((mu - n) / 2^k, sigma / 2^k) / f(mu, sigma)``; the
    numerator folds all lattice points congruent to ``n`` mod ``2^k`` into
    one coset weight.
    """
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    scale = 2.0**k
    log_num = log_theta_norm((mu - n) / scale, sigma / scale)
    log_den = log_theta_norm(mu, sigma)
    return math.exp(log_num - log_den)


def exact_xi_state(spec: GaussianSpec1D, k: int) -> np.ndarray:
    """Exact k-qubit amplitudes ``xi(n)`` of the periodised lattice Gaussian.

    The returned vector is indexed by the unsigned basis label
    ``n = (q_{k-1} ... q_0)_2``; because ``xi`` is periodic mod ``2^k`` the
    same vector serves two's-complement indexing via ``n mod 2^k``.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    scale = 2.0**k
    log_den = log_theta_norm(spec.mu, spec.sigma)
    log_num = np.array(
        [
            log_theta_norm((spec.mu - n) / scale, spec.sigma / scale)
            for n in range(2**k)
        ]
    )
    amps = np.exp(0.5 * (log_num - log_den))
    # The coset weights sum to f(mu, sigma) exactly; renormalize away the
    # last-ulp float drift so downstream fidelity checks see a unit vector.
    return amps / np.linalg.norm(amps)


def recursive_xi_state(
    spec: GaussianSpec1D, k: int, b: int | None = None
) -> np.ndarray:
    """k-qubit amplitudes produced by the angle recursion, LSB first.

    With ``b=None`` the rotation at level ``j`` uses the exact angle
    ``alpha(mu_j, sigma_j)`` with ``mu_j = (mu - Q_j) / 2^j`` conditioned on
    the already-prepared low bits ``Q_j``, and the result equals
    :func:`exact_xi_state` up to float roundoff.  With an integer ``b`` the
    angle of every level ``j >= 1`` is replaced by the value the quantum
    angle circuit computes: the piecewise-polynomial approximation for the
    level's ``sigma_j`` regime, evaluated in fixed point bit-for-bit as the
    circuit does, then quantized to a ``b``-bit binary fraction.  The level-0
    rotation is a classically computed constant in both modes and is
    quantized to ``b`` bits when ``b`` is given.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if b is not None and b < 1:
        raise ValueError(f"b must be at least 1, got {b}")
    mu, sigma = spec.mu, spec.sigma
    plans = None
    if b is not None:
        from .angles import emulate_angle_plan, fit_angle_plan

        plans = {
            j: fit_angle_plan(sigma / 2.0**j, b, level=j) for j in range(1, k)
        }
    amps = np.ones(1)
    for j in range(k):
        sigma_j = sigma / 2.0**j
        new = np.empty(2 ** (j + 1))
        for q in range(2**j):
            mu_j = (mu - q) / 2.0**j
            if j == 0:
                at = alpha_tilde(mu_j, sigma_j)
                if b is not None:
                    at = _quantize_angle(at, b)
            elif b is None:
                at = alpha_tilde(mu_j, sigma_j)
            else:
                at = emulate_angle_plan(plans[j], j, q)
            half = 0.5 * math.pi * at
            new[q] = amps[q] * math.cos(half)
            new[q + 2**j] = amps[q] * math.sin(half)
        amps = new
    return amps


def _quantize_angle(at: float, b: int) -> float:
    """Round a [0,1) angle fraction to b bits, half away from zero, mod 1."""
    return (math.floor(at * 2.0**b + 0.5) % 2**b) / 2.0**b


def optimal_state_1d(spec: GaussianSpec1D, k: int) -> np.ndarray:
    """Truncated-and-renormalized Gaussian amplitudes on the signed window.

    Amplitudes ``exp(-(n - mu)^2 / (4 sigma^2))`` are sampled at the
    two's-complement integers ``n in [-2^(k-1), 2^(k-1))``, renormalized,
    and returned indexed by ``n mod 2^k``.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    n = _signed_window(k)
    logs = -((n - spec.mu) ** 2) / (4.0 * spec.sigma**2)
    amps = np.exp(logs - logs.max())
    return amps / np.linalg.norm(amps)


def optimal_state_nd(cov: CovarianceSpec, k: int, qubit_cap: int = 24) -> np.ndarray:
    """Truncated multivariate Gaussian on the signed k-bit grid.

    Amplitudes ``exp(-(n - mu)^T Sigma^-1 (n - mu) / 4)`` over integer
    vectors with each coordinate in ``[-2^(k-1), 2^(k-1))``, renormalized.
    The flat index places coordinate 0 in the least significant ``k`` bits,
    matching the register layout of the shearing circuit.
    """
    n_dims = cov.n_dims
    total = n_dims * k
    if total > qubit_cap:
        raise ValueError(
            f"requested grid needs {total} qubits, exceeding the cap of "
            f"{qubit_cap}; raise qubit_cap explicitly if you mean it"
        )
    prec = np.linalg.inv(cov.sigma_mat)
    window = _signed_window(k)
    # Accumulate the quadratic form axis-by-axis: coordinate i varies along
    # reshape axis (n_dims - 1 - i) so that it occupies bits [ik, (i+1)k).
    quad = np.zeros((2**k,) * n_dims)
    for i in range(n_dims):
        xi = _along_axis(window - cov.mu_vec[i], n_dims, i, k)
        quad += prec[i, i] * xi * xi
        for jj in range(i + 1, n_dims):
            xj = _along_axis(window - cov.mu_vec[jj], n_dims, jj, k)
            quad += 2.0 * prec[i, jj] * xi * xj
    amps = np.exp(-(quad - quad.min()) / 4.0).reshape(-1)
    return amps / np.linalg.norm(amps)


def _signed_window(k: int) -> np.ndarray:
    n = np.arange(2**k, dtype=float)
    return np.where(n < 2 ** (k - 1), n, n - 2**k)


def _along_axis(values: np.ndarray, n_dims: int, i: int, k: int) -> np.ndarray:
    shape = [1] * n_dims
    shape[n_dims - 1 - i] = 2**k
    return values.reshape(shape)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Squared overlap ``|<a|b>|^2`` of two state vectors."""
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"state dimensions differ: {a.shape} vs {b.shape}")
    return float(abs(np.vdot(a, b)) ** 2)


def ldlt(cov: CovarianceSpec) -> LdltFactors:
    """Factor Sigma as M diag(sigma_sq) M^T with M upper unitriangular.

    Peels variables from the last index down: at each step the trailing
    diagonal entry of the reduced matrix becomes ``sigma_sq[i]`` and the
    column above it, divided by that pivot, becomes column ``i`` of ``M``.
    Requires Sigma positive definite.
    """
    sig = np.array(cov.sigma_mat, dtype=float)
    n = sig.shape[0]
    m_mat = np.eye(n)
    sigma_sq = np.zeros(n)
    for i in range(n - 1, -1, -1):
        pivot = sig[i, i]
        if pivot <= 0:
            raise ValueError(
                f"covariance is not positive definite (pivot {pivot:g} at "
                f"index {i})"
            )
        sigma_sq[i] = pivot
        col = sig[:i, i] / pivot
        m_mat[:i, i] = col
        sig[:i, :i] -= np.outer(col, col) * pivot
    return LdltFactors(m_mat=m_mat, sigma_sq=sigma_sq)


def scalar_field_covariance(
    n_sites: int, mass: float, width_scale: float = 1.0
) -> CovarianceSpec:
    """Ground-state covariance of a free scalar field on a periodic chain.

    The lattice Hamiltonian's coupling matrix is the circulant
    ``K = (mass^2 + 2) I - (S + S^T)`` with ``S`` the one-site shift; the
    ground-state covariance of the field amplitudes is
    ``Sigma = width_scale^2 K^(-1/2) / 2``.  Means default to -1/2 on every
    site, the natural center of the two's-complement register window.
    """
    if n_sites < 1:
        raise ValueError(f"n_sites must be at least 1, got {n_sites}")
    if mass <= 0:
        raise ValueError(f"mass must be positive, got {mass}")
    shift = np.roll(np.eye(n_sites), 1, axis=1)
    kmat = (mass**2 + 2.0) * np.eye(n_sites) - (shift + shift.T)
    evals, evecs = np.linalg.eigh(kmat)
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    sigma = 0.5 * width_scale**2 * inv_sqrt
    return CovarianceSpec(mu_vec=np.full(n_sites, -0.5), sigma_mat=sigma)
