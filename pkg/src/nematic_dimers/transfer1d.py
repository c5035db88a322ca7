"""Exact solution of the oriented dimer chain.

Vertex states are indexed (right, left, monomer): ``right`` means the vertex is
the left end of a dimer pointing right, ``left`` that it is the right end of a
dimer arriving from the left. The transfer matrix in this basis is

    [[0,   z, 0],
     [e^J, 0, 1],
     [1,   0, 1]]

A boundary vector weights the state of an end vertex. At the far end the roles
of ``right`` and ``left`` are mirrored, so that a vector always weights "dimer
pointing into the chain" with its first component and "outward dimer" with its
second.

Large ``J`` is handled in log space: quantities are carried as (sign, log|x|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, SizeCapError, ValidationError

RIGHT, LEFT, MONO = 0, 1, 2
PLUS, MINUS, ZERO = "+", "-", "0"
_INDEX = {PLUS: 0, MINUS: 1, ZERO: 2}

BRUTEFORCE_MAX_LENGTH = 20


@dataclass(frozen=True)
class ModelParams:
    z: float
    J: float

    def __post_init__(self):
        z, J = float(self.z), float(self.J)
        if not (z > 0 and math.isfinite(z)):
            raise ValidationError(f"dimer activity must be positive and finite, got {self.z}")
        if not math.isfinite(J):
            raise ValidationError(f"interaction must be finite, got {self.J}")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "J", J)

    @property
    def log_A(self) -> float:
        """log(z e^J)."""
        return math.log(self.z) + self.J

    @property
    def epsilon(self) -> float:
        return math.exp(-0.5 * self.log_A)

    @property
    def kappa(self) -> float:
        return math.exp(-self.J - 0.5 * self.log_A)


@dataclass(frozen=True)
class BoundaryVector:
    """Weights (right, left, monomer), scaled by ``exp(log_scale)``."""

    components: tuple
    log_scale: float = 0.0

    def __post_init__(self):
        comps = tuple(float(c) for c in self.components)
        if len(comps) != 3:
            raise ValidationError("a boundary vector has exactly three components")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "log_scale", float(self.log_scale))

    def dense(self) -> np.ndarray:
        return np.exp(self.log_scale) * np.asarray(self.components)


def open_vector(params: ModelParams | None = None) -> BoundaryVector:
    return BoundaryVector((1.0, 0.0, 1.0))


def magnetized_vector(params: ModelParams) -> BoundaryVector:
    """(e^J, 0, 1), stored with the larger entry factored out."""
    if params.J > 0:
        return BoundaryVector((1.0, 0.0, math.exp(-params.J)), params.J)
    return BoundaryVector((math.exp(params.J), 0.0, 1.0))


def monomer_vector() -> BoundaryVector:
    return BoundaryVector((0.0, 0.0, 1.0))


def boundary_vector(kind: str, params: ModelParams) -> BoundaryVector:
    kind = kind.lower()
    if kind == "open":
        return open_vector(params)
    if kind in ("mag", "magnetized"):
        return magnetized_vector(params)
    raise ValidationError(f"unknown boundary kind {kind!r}")


# Arithmetic below is in extended precision: for odd lengths the two large
# spectral terms nearly cancel (by a factor ~ sqrt(z) e^{3J/2} at length 1),
# which double precision cannot absorb at the 1e-9 level.

LD = np.longdouble
_NEG_INF = LD(-np.inf)


def _slog(x) -> tuple[int, np.longdouble]:
    x = LD(x)
    if x == 0:
        return 0, _NEG_INF
    return (1 if x > 0 else -1), np.log(abs(x))


def _ssum(terms) -> tuple[int, np.longdouble]:
    """Sum of (sign, log|x|) terms."""
    terms = [(s, LD(l)) for s, l in terms if s != 0 and np.isfinite(l)]
    if not terms:
        return 0, _NEG_INF
    m = max(l for _, l in terms)
    parts = sorted((s * np.exp(l - m) for s, l in terms), key=abs)
    acc = LD(0)
    for x in parts:
        acc += x
    if acc == 0:
        return 0, _NEG_INF
    return (1 if acc > 0 else -1), m + np.log(abs(acc))


def _sexp(t) -> float:
    return float(t[0] * np.exp(t[1])) if t[0] else 0.0


@dataclass(frozen=True)
class TransferSolution:
    params: ModelParams
    lambda_plus: float
    lambda_minus: float
    lambda_zero: float
    # extended-precision eigenvalues and lambda - 1, ordered (+, -, 0)
    lam: tuple
    shifted: tuple
    # c_i = z / (2 lambda_i (lambda_i - 1)^2 + z) as (sign, log|c|)
    log_c: tuple

    @property
    def eigenvalues(self) -> tuple[float, float, float]:
        return (self.lambda_plus, self.lambda_minus, self.lambda_zero)

    @property
    def b(self) -> tuple[float, float, float]:
        """b_i = c_i / lambda_i; infinite when lambda_i = 0."""
        out = []
        for lam, lc in zip(self.lam, self.log_c):
            out.append(math.inf if lam == 0 else float(_sexp(lc) / lam))
        return tuple(out)


_ULP = 4 * np.finfo(LD).eps


def _newton(f, t):
    # stop at a few ulps, or once the step stops shrinking (rounding noise)
    t = LD(t)
    prev = None
    for _ in range(80):
        val, der = f(t)
        if der == 0:
            break
        step = val / der
        if prev is not None and abs(step) >= prev:
            break
        t = t - step
        prev = abs(step)
        if prev <= _ULP * max(LD(1), abs(t)) or not np.isfinite(t):
            break
    return t


def solve(params: ModelParams) -> TransferSolution:
    """Eigenvalues of the transfer matrix and the spectral weights."""
    z, J = params.z, params.J
    # in t = lambda - 1 the characteristic cubic is t^3 + 2t^2 + (1 - A) t - z
    # with A = z e^J; substituting t = mu / s, s = A^{-1/2}, keeps every
    # coefficient bounded for large J:
    #   mu^3 + 2 s mu^2 + (s^2 - 1) mu - s e^{-J}
    s = np.exp(LD(-0.5) * (np.log(LD(z)) + LD(J)))
    eJ = np.exp(-LD(J))
    c2, c1, c0 = 2 * s, s * s - 1, -s * eJ
    roots = np.roots([1.0, float(c2), float(c1), float(c0)])
    if np.max(np.abs(roots.imag)) > 1e-9 * max(1.0, np.max(np.abs(roots))):
        raise DegeneracyError(f"complex eigenvalues for z={z}, J={J}")

    def g(mu):
        return ((mu + c2) * mu + c1) * mu + c0, (3 * mu + 2 * c2) * mu + c1

    s2 = s * s

    def f(t):
        # same cubic in t, divided by A
        return ((s2 * t + 2 * s2) * t + (s2 - 1)) * t - eJ, (3 * s2 * t + 4 * s2) * t + (s2 - 1)

    mus = sorted(_newton(g, r) for r in roots.real)
    for a, b in zip(mus, mus[1:]):
        if abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b)):
            raise DegeneracyError(f"coincident eigenvalues for z={z}, J={J}")
    ts = [mu / s for mu in mus]
    lams = [1 + t for t in ts]
    # the middle root sits in [-1, 0); refine it directly in t, or in lambda
    # itself when lambda is small so that neither loses relative precision
    ts[1] = _newton(f, ts[1])
    lams[1] = 1 + ts[1]
    if lams[1] < 0.5:
        A = LD(z) * np.exp(LD(J))
        const = LD(z) * np.expm1(LD(J))

        def p(lam):
            return ((lam - 1) * lam - A) * lam + const, (3 * lam - 2) * lam - A

        lams[1] = _newton(p, lams[1])
        ts[1] = lams[1] - 1
    order = (2, 0, 1)  # (+, -, 0)
    lam = tuple(lams[k] for k in order)
    shifted = tuple(ts[k] for k in order)
    log_c = []
    lz = np.log(LD(z))
    for t, l in zip(shifted, lam):
        sl, ll = _slog(l)
        st, lt = _slog(t)
        den = _ssum([(sl * st * st, np.log(LD(2)) + ll + 2 * lt), (1, lz)])
        if den[0] == 0:
            raise DegeneracyError("vanishing normalization")
        log_c.append((den[0], lz - den[1]))
    return TransferSolution(
        params=params,
        lambda_plus=float(lam[0]),
        lambda_minus=float(lam[1]),
        lambda_zero=float(lam[2]),
        lam=lam,
        shifted=shifted,
        log_c=tuple(log_c),
    )


def _log_nu(sol: TransferSolution, i: int, omega: BoundaryVector):
    # with t = lambda - 1 the characteristic cubic gives
    # t + e^{-J} = t lambda^2 e^{-J} / z, so
    # nu(w) = r t lambda^2 e^{-J} / z + l t lambda / z + (m - r e^{-J}); the last
    # bracket vanishes exactly for the magnetized vector and nothing cancels
    J = LD(sol.params.J)
    sl, ll = _slog(sol.lam[i])
    st, lt = _slog(sol.shifted[i])
    lz = np.log(LD(sol.params.z))
    r, l, m = omega.components
    sr, lr = _slog(r)
    sL, lL = _slog(l)
    if omega.log_scale == sol.params.J and r == 1.0 and m == math.exp(-sol.params.J):
        rest = (0, _NEG_INF)  # magnetized, stored scaled by e^J
    else:
        rest = _ssum([_slog(m), (-sr, lr - J)])
    total = _ssum([
        (sr * st, lr + lt + 2 * ll - lz - J),
        (sL * sl * st, lL + ll + lt - lz),
        rest,
    ])
    return total[0], total[1] + LD(omega.log_scale)


def nu(sol: TransferSolution, i, omega: BoundaryVector) -> float:
    """Linear functional with basis values (lambda-1, lambda(lambda-1)/z, 1)."""
    return _sexp(_log_nu(sol, _INDEX.get(i, i), omega))


def _log_terms(sol: TransferSolution, ell: int, omega_left, omega_right):
    out = []
    for i in range(3):
        s1, l1 = _log_nu(sol, i, omega_left)
        s2, l2 = _log_nu(sol, i, omega_right)
        sc, lc = sol.log_c[i]
        if ell == 1:
            sp, lp = 1, LD(0)
        else:
            sl, ll = _slog(sol.lam[i])
            if sl == 0:
                sp, lp = 0, _NEG_INF
            else:
                sp = sl ** (ell - 1)
                lp = (ell - 1) * ll
        out.append((s1 * s2 * sc * sp, l1 + l2 + lc + lp))
    return out


def _check_length(ell) -> int:
    if int(ell) != ell or ell < 1:
        raise ValidationError(f"chain length must be a positive integer, got {ell}")
    return int(ell)


def log_psi(sol: TransferSolution, ell: int, omega_left: BoundaryVector, omega_right: BoundaryVector) -> float:
    """log of the chain partition function."""
    ell = _check_length(ell)
    sign, value = _ssum(_log_terms(sol, ell, omega_left, omega_right))
    if sign <= 0:
        raise ArithmeticError("chain partition function is not positive")
    return float(value)


def psi(sol: TransferSolution, ell: int, omega_left: BoundaryVector, omega_right: BoundaryVector) -> float:
    """Chain partition function from the spectral decomposition."""
    ell = _check_length(ell)
    sign, value = _ssum(_log_terms(sol, ell, omega_left, omega_right))
    if sign <= 0:
        raise ArithmeticError("chain partition function is not positive")
    return float(np.exp(value))


def interaction_weight_W(sol: TransferSolution, ell: int, omega) -> float:
    """e^{-W}: ratio of the chain partition function to its leading term."""
    ell = _check_length(ell)
    omega_left, omega_right = omega
    terms = _log_terms(sol, ell, omega_left, omega_right)
    lead = terms[0]
    if lead[0] == 0:
        raise ArithmeticError("leading spectral term vanishes for this boundary pair")
    ratio = LD(1)
    for s, l in terms[1:]:
        if s and np.isfinite(l):
            ratio += s * lead[0] * np.exp(l - lead[1])
    return float(ratio)


def leading_term(sol: TransferSolution, ell: int, omega_left, omega_right) -> float:
    """nu_+(left) nu_+(right) b_+ lambda_+^ell."""
    return _sexp(_log_terms(sol, _check_length(ell), omega_left, omega_right)[0])


def transfer_matrix(params: ModelParams) -> np.ndarray:
    z, eJ = params.z, math.exp(params.J)
    return np.array([[0.0, z, 0.0], [eJ, 0.0, 1.0], [1.0, 0.0, 1.0]])


_SWAP = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def psi_matrix(params: ModelParams, ell: int, omega_left: BoundaryVector, omega_right: BoundaryVector) -> float:
    """Direct matrix product, for moderate J."""
    ell = _check_length(ell)
    T = transfer_matrix(params)
    return float(omega_left.dense() @ np.linalg.matrix_power(T, ell - 1) @ _SWAP @ omega_right.dense())


def psi_bruteforce(params: ModelParams, ell: int, omega_left: BoundaryVector, omega_right: BoundaryVector) -> float:
    """Sum over explicit dimer placements on a chain of ``ell`` sites.

    Dimers are intervals [k, k+1] with 0 <= k <= ell, sites numbered 1..ell;
    the intervals [0, 1] and [ell, ell+1] stick out of the chain and are paid
    for by the boundary vectors instead of z. Two dimers gain e^J when the
    edge between them is a single bond, i.e. their starts differ by 2.
    """
    ell = _check_length(ell)
    if ell > BRUTEFORCE_MAX_LENGTH:
        raise SizeCapError(f"psi_bruteforce is capped at length {BRUTEFORCE_MAX_LENGTH}")
    z, eJ = params.z, math.exp(params.J)
    wl, wr = omega_left.dense(), omega_right.dense()

    placements: list[list[int]] = []

    def extend(start: int, chosen: list[int]):
        # next dimer may start at any k >= start with k <= ell
        placements.append(list(chosen))
        for k in range(start, ell + 1):
            chosen.append(k)
            extend(k + 2, chosen)
            chosen.pop()

    extend(0, [])

    total = 0.0
    for dimers in placements:
        w = 1.0
        for k in dimers:
            if 1 <= k and k + 1 <= ell:
                w *= z
        for a, b in zip(dimers, dimers[1:]):
            if b - a == 2:
                w *= eJ
        # first site
        if 0 in dimers:
            w *= wl[LEFT]
        elif 1 in dimers:
            w *= wl[RIGHT]
        else:
            w *= wl[MONO]
        # last site
        if ell in dimers:
            w *= wr[LEFT]
        elif ell - 1 in dimers:
            w *= wr[RIGHT]
        else:
            w *= wr[MONO]
        total += w
    return total
