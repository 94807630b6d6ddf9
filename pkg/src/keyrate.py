"""
Key-rate analytics.

AKR = 1 - h(Q_verif) - h(Q_keygen_max) bounds the secret fraction of the raw
key for infinitely many rounds. The finite-key model charges a sampling
penalty mu on both error rates, keeps only the n = L - m key-generation
rounds and subtracts a fixed error-correction overhead of log2(1/eps_s) bits:

    FKR = n/L * [1 - h(Q_v + mu) - h(Q_k + mu)] - ceil(log2(1/eps_s)) / L
    mu  = sqrt((n + m)(m + 1) / (n m^2) * ln(2/eps_s)),  m = round(p L)
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import minimize_scalar

from core import get_logger
from core.errors import DomainError

logger = get_logger(__name__)

GRID_POINTS = 64
MIN_ROUNDS = 10
MAX_SEARCH_ROUNDS = 10**15
P_XATOL = 1e-7  # in log(p)


class RateInputs(BaseModel):
    q_verif: float = Field(ge=0.0, le=1.0)
    q_keygen_max: float = Field(ge=0.0, le=1.0)
    total_rounds: int = Field(gt=0, description="L")
    p: float = Field(gt=0.0, lt=1.0, description="Verification fraction")
    eps_s: float = Field(default=1e-5, gt=0.0, lt=1.0)


class RateReport(BaseModel):
    """Everything the keyrate subcommand prints."""
    q_verif: float
    q_keygen_max: float
    entropy_verif: float
    entropy_keygen: float
    akr: float = Field(ge=-1.0, le=1.0)
    akr_std: float = Field(ge=0.0)
    total_rounds: int
    p: float
    eps_s: float
    mu: Optional[float] = None
    correction_overhead: int
    fkr: Optional[float] = None
    optimal_p: Optional[float] = None
    optimal_fkr: Optional[float] = None
    min_rounds_positive: Optional[int] = None
    p_at_min_rounds: Optional[float] = None

    @property
    def secret_key_length(self) -> int:
        """Bits left after privacy amplification; FKR is clipped at zero here."""
        if self.fkr is None or self.fkr <= 0:
            return 0
        return int(math.floor(self.fkr * self.total_rounds))


# ══════════════════════════════════════════════════════════════════════════════
#  ENTROPY
# ══════════════════════════════════════════════════════════════════════════════

def binary_entropy(x: float) -> float:
    """h(x) = -x log2 x - (1-x) log2 (1-x), with h(0) = h(1) = 0."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"binary entropy needs x in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return float(-x * np.log2(x) - (1.0 - x) * np.log2(1.0 - x))


def entropy_derivative(x: float) -> float:
    """h'(x) = log2((1-x)/x)."""
    if not 0.0 < x < 1.0:
        raise DomainError(f"h'(x) is finite only for x in (0, 1), got {x}")
    return float(np.log2((1.0 - x) / x))


def _saturate(q: float, name: str) -> float:
    """Clamp an error rate at 1/2, warning when that changes it."""
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {q}")
    if q > 0.5:
        logger.warning("%s = %.4f exceeds 1/2; input saturated", name, q)
        return 0.5
    return q


def _saturated_entropy(q: float, name: str) -> float:
    return binary_entropy(_saturate(q, name))


def asymptotic_key_rate(q_verif: float, q_keygen_max: float) -> float:
    return 1.0 - _saturated_entropy(q_verif, "Q_verif") - _saturated_entropy(q_keygen_max, "Q_keygen")


def entropy_uncertainty(q: float, sigma: float) -> float:
    """First-order error bar |h'(q)| * sigma."""
    if sigma == 0.0:
        return 0.0
    return abs(entropy_derivative(q)) * sigma


def akr_uncertainty(q_verif: float, sigma_verif: float, q_keygen_max: float, sigma_keygen: float) -> float:
    return math.hypot(entropy_uncertainty(q_verif, sigma_verif), entropy_uncertainty(q_keygen_max, sigma_keygen))


# ══════════════════════════════════════════════════════════════════════════════
#  FINITE KEY
# ══════════════════════════════════════════════════════════════════════════════

def split_rounds(total_rounds: int, p: float) -> Tuple[int, int]:
    """(n, m): key-generation and verification rounds."""
    m = int(round(p * total_rounds))
    n = total_rounds - m
    if m < 1 or n < 1:
        raise DomainError(f"L={total_rounds}, p={p} leaves {n} key and {m} verification rounds")
    return n, m


def statistical_penalty(n: int, m: int, eps_s: float) -> float:
    return math.sqrt((n + m) * (m + 1) / (n * m * m) * math.log(2.0 / eps_s))


def correction_overhead(eps_s: float) -> int:
    return int(math.ceil(math.log2(1.0 / eps_s)))


def _fkr(q_verif: float, q_keygen_max: float, total_rounds: int, p: float, eps_s: float) -> float:
    n, m = split_rounds(total_rounds, p)
    mu = statistical_penalty(n, m, eps_s)
    h_v = binary_entropy(min(q_verif + mu, 0.5))
    h_k = binary_entropy(min(q_keygen_max + mu, 0.5))
    return n / total_rounds * (1.0 - h_v - h_k) - correction_overhead(eps_s) / total_rounds


def finite_key_rate(inputs: RateInputs) -> float:
    """Unclipped FKR; negative values mean no key can be distilled."""
    q_v = _saturate(inputs.q_verif, "Q_verif")
    q_k = _saturate(inputs.q_keygen_max, "Q_keygen")
    return _fkr(q_v, q_k, inputs.total_rounds, inputs.p, inputs.eps_s)


def optimize_p(q_verif: float, q_keygen_max: float, total_rounds: int, eps_s: float = 1e-5) -> Tuple[float, float]:
    """
    Maximize FKR over p in [1/L, 1/2].

    A log-spaced grid locates the best bracket, bounded Brent search in log p
    refines it. Returns (p_star, fkr_star), which may be negative.
    """
    if total_rounds < MIN_ROUNDS:
        raise DomainError(f"p search needs L >= {MIN_ROUNDS}, got {total_rounds}")
    q_v, q_k = _saturate(q_verif, "Q_verif"), _saturate(q_keygen_max, "Q_keygen")

    def rate(p: float) -> float:
        return _fkr(q_v, q_k, total_rounds, p, eps_s)

    grid = np.geomspace(1.0 / total_rounds, 0.5, GRID_POINTS)
    values = [rate(p) for p in grid]
    best = int(np.argmax(values))
    lo, hi = grid[max(best - 1, 0)], grid[min(best + 1, GRID_POINTS - 1)]

    refined = minimize_scalar(
        lambda log_p: -rate(math.exp(log_p)),
        bounds=(math.log(lo), math.log(hi)),
        method="bounded",
        options={"xatol": P_XATOL},
    )
    p_refined = float(math.exp(refined.x))
    fkr_refined = rate(p_refined)
    if fkr_refined > values[best]:
        return p_refined, fkr_refined
    return float(grid[best]), float(values[best])


def min_L_positive(
    q_verif: float, q_keygen_max: float, eps_s: float = 1e-5
) -> Optional[Tuple[int, float]]:
    """Smallest L with a positive optimized FKR, and the p that achieves it; None if AKR <= 0."""
    if asymptotic_key_rate(q_verif, q_keygen_max) <= 0:
        return None

    def positive(total_rounds: int) -> bool:
        return optimize_p(q_verif, q_keygen_max, total_rounds, eps_s)[1] > 0

    lo, hi = MIN_ROUNDS, MIN_ROUNDS
    if positive(lo):
        return lo, optimize_p(q_verif, q_keygen_max, lo, eps_s)[0]
    while not positive(hi):
        lo, hi = hi, hi * 10
        if hi > MAX_SEARCH_ROUNDS:
            logger.warning("no positive FKR below L = %.0e", MAX_SEARCH_ROUNDS)
            return None

    while hi - lo > 1:
        mid = (lo + hi) // 2
        if positive(mid):
            hi = mid
        else:
            lo = mid
    return hi, optimize_p(q_verif, q_keygen_max, hi, eps_s)[0]


def fkr_surface(
    q_verif: float,
    q_keygen_max: float,
    rounds: Sequence[int],
    ps: Sequence[float],
    eps_s: float = 1e-5,
) -> List[Tuple[int, float, float]]:
    """(L, p, FKR) over a grid; combinations without a round of each type are skipped."""
    q_v, q_k = _saturate(q_verif, "Q_verif"), _saturate(q_keygen_max, "Q_keygen")
    rows = []
    for total_rounds in rounds:
        for p in ps:
            try:
                fkr = _fkr(q_v, q_k, int(total_rounds), float(p), eps_s)
            except DomainError:
                continue
            rows.append((int(total_rounds), float(p), fkr))
    return rows


def optimal_p_curve(
    q_verif: float, q_keygen_max: float, rounds: Sequence[int], eps_s: float = 1e-5
) -> List[Tuple[int, float, float]]:
    """(L, p_star, fkr_star) for each L."""
    q_v, q_k = _saturate(q_verif, "Q_verif"), _saturate(q_keygen_max, "Q_keygen")
    return [(int(L), *optimize_p(q_v, q_k, int(L), eps_s)) for L in rounds]


def rate_report(
    q_verif: float,
    q_keygen_max: float,
    total_rounds: int,
    p: float,
    eps_s: float = 1e-5,
    sigma_verif: float = 0.0,
    sigma_keygen: float = 0.0,
    search_min_rounds: bool = True,
) -> RateReport:
    q_v, q_k = _saturate(q_verif, "Q_verif"), _saturate(q_keygen_max, "Q_keygen")
    akr = asymptotic_key_rate(q_v, q_k)

    mu = fkr = None
    try:
        n, m = split_rounds(total_rounds, p)
        mu = statistical_penalty(n, m, eps_s)
        fkr = _fkr(q_v, q_k, total_rounds, p, eps_s)
    except DomainError as exc:
        logger.warning("finite key rate undefined: %s", exc)

    optimal_p = optimal_fkr = None
    if total_rounds >= MIN_ROUNDS:
        optimal_p, optimal_fkr = optimize_p(q_v, q_k, total_rounds, eps_s)

    min_rounds = p_at_min = None
    if search_min_rounds:
        found = min_L_positive(q_v, q_k, eps_s)
        if found is not None:
            min_rounds, p_at_min = found

    return RateReport(
        q_verif=q_verif,
        q_keygen_max=q_keygen_max,
        entropy_verif=binary_entropy(q_v),
        entropy_keygen=binary_entropy(q_k),
        akr=akr,
        akr_std=akr_uncertainty(q_v, sigma_verif, q_k, sigma_keygen),
        total_rounds=total_rounds,
        p=p,
        eps_s=eps_s,
        mu=mu,
        correction_overhead=correction_overhead(eps_s),
        fkr=fkr,
        optimal_p=optimal_p,
        optimal_fkr=optimal_fkr,
        min_rounds_positive=min_rounds,
        p_at_min_rounds=p_at_min,
    )
