"""
Classical post-processing: LDPC reconciliation and privacy amplification.

Codes have the shape H = [H'|S]: H' is a sparse (N-k) x k matrix with a fixed
column weight and S is the staircase (ones on the diagonal and the first
subdiagonal). Alice sends the parity bits of each k-bit block; Bob decodes his
noisy copy against the syndrome those parity bits imply.
"""

import math
from enum import Enum
from fractions import Fraction
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Any, Iterable, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field
import scipy.sparse as sp
from scipy.signal import fftconvolve

from core import get_logger
from core.errors import ConfigurationError, ContractError

logger = get_logger(__name__)

SUPPORTED_BLOCK_LENGTHS = (16200, 64800)

CROSSOVER_MIN = 1e-4
CROSSOVER_MAX = 0.499
PAD_LLR = 50.0
ONE = 1.0 - 1e-12  # clip before arctanh
TINY = 1e-300


class CodeRate(str, Enum):
    HALF = "1/2"
    THREE_FIFTHS = "3/5"
    TWO_THIRDS = "2/3"

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.value)

    def message_length(self, n: int) -> int:
        k = self.fraction * n
        if k.denominator != 1:
            raise ConfigurationError(f"rate {self.value} does not divide block length {n}")
        return int(k)


def _as_bits(bits: Any, what: str) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if np.any(arr > 1):
        raise ContractError(f"{what} must hold 0/1 values")
    return arr


class ParityCheckMatrix(BaseModel):
    """H = [H'|S], with H' stored as its edge list (check index, message index)."""
    n: int = Field(gt=0, description="Block length N")
    k: int = Field(gt=0, description="Message length")
    edge_checks: Any  # int64 array, sorted by (check, column)
    edge_columns: Any
    column_weight: Optional[int] = None
    seed: Optional[int] = None

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @property
    def num_checks(self) -> int:
        return self.n - self.k

    @property
    def num_edges(self) -> int:
        return int(len(self.edge_checks))

    @property
    def rate(self) -> CodeRate:
        """k/N as a supported code rate."""
        try:
            return CodeRate(str(Fraction(self.k, self.n)))
        except ValueError as exc:
            raise ConfigurationError(f"k/N = {self.k}/{self.n} is not a supported code rate") from exc

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """H' as a CSR matrix."""
        data = np.ones(self.num_edges, dtype=np.int32)
        return sp.csr_matrix(
            (data, (self.edge_checks, self.edge_columns)), shape=(self.num_checks, self.k)
        )

    def staircase(self) -> sp.csr_matrix:
        m = self.num_checks
        return sp.diags(
            [np.ones(m, dtype=np.int32), np.ones(m - 1, dtype=np.int32)], [0, -1],
            shape=(m, m), format="csr", dtype=np.int32,
        )

    def full_matrix(self) -> sp.csr_matrix:
        """[H'|S] as an (N-k) x N CSR matrix."""
        return sp.hstack([self.matrix, self.staircase()], format="csr")

    def syndrome(self, block: np.ndarray) -> np.ndarray:
        """H' * block over GF(2)."""
        return (self.matrix @ block.astype(np.int32)) % 2


# ══════════════════════════════════════════════════════════════════════════════
#  CODE CONSTRUCTION
# ══════════════════════════════════════════════════════════════════════════════

class _DegreePool:
    """Rows bucketed by current degree; a row leaves the pool once it reaches `cap`."""

    def __init__(self, num_rows: int, cap: int):
        self.cap = cap
        self.degree = [0] * num_rows
        self.buckets: List[List[int]] = [list(range(num_rows))] + [[] for _ in range(cap - 1)]
        self.position = list(range(num_rows))

    def candidates(self, rng: np.random.Generator, draws: int) -> Iterator[int]:
        """Lowest-degree rows first; a few random draws per bucket, then the whole bucket shuffled."""
        for bucket in self.buckets:
            if not bucket:
                continue
            for i in rng.integers(len(bucket), size=draws):
                yield bucket[i]
            for i in rng.permutation(len(bucket)):
                yield bucket[i]

    def promote(self, row: int) -> None:
        d = self.degree[row]
        self.degree[row] = d + 1
        if d >= self.cap:
            return
        bucket = self.buckets[d]
        i, last = self.position[row], bucket[-1]
        bucket[i] = last
        self.position[last] = i
        bucket.pop()
        if d + 1 < self.cap:
            self.position[row] = len(self.buckets[d + 1])
            self.buckets[d + 1].append(row)


def generate_parity_check_matrix(
    num_checks: int, k: int, column_weight: int, rng: np.random.Generator
) -> np.ndarray:
    """
    Place `column_weight` ones per column of H', keeping row degrees balanced.

    Returns a (k, column_weight) array of check indices. No two columns of the
    full [H'|S] share two rows, which keeps the girth at six or more; the
    staircase pairs (j, j+1) are reserved up front.
    """
    if not 2 <= column_weight <= num_checks:
        raise ConfigurationError(f"column weight {column_weight} impossible with {num_checks} checks")
    pool = _DegreePool(num_checks, math.ceil(k * column_weight / num_checks))
    used = {(j, j + 1) for j in range(num_checks - 1)}
    rows = np.empty((k, column_weight), dtype=np.int64)
    fallbacks = 0

    def pick(candidates: Iterable[int], chosen: List[int]) -> List[int]:
        for r in candidates:
            r = int(r)
            if r in chosen or any((min(r, c), max(r, c)) in used for c in chosen):
                continue
            chosen.append(r)
            if len(chosen) == column_weight:
                break
        return chosen

    for col in range(k):
        chosen = pick(pool.candidates(rng, 2 * column_weight), [])
        if len(chosen) < column_weight:
            fallbacks += 1
            chosen = pick(rng.permutation(num_checks), chosen)
        if len(chosen) < column_weight:
            raise ConfigurationError(
                f"could not place column {col} without a 4-cycle ({num_checks} checks, weight {column_weight})"
            )
        for i, r in enumerate(chosen):
            for c in chosen[i + 1:]:
                used.add((min(r, c), max(r, c)))
            pool.promote(r)
        rows[col] = sorted(chosen)

    logger.debug(
        "placed %d columns: row degree %d..%d, %d fallbacks",
        k, min(pool.degree), max(pool.degree), fallbacks,
    )
    return rows


@lru_cache(maxsize=8)
def _build_code_cached(n: int, rate: CodeRate, seed: int, column_weight: int) -> ParityCheckMatrix:
    k = rate.message_length(n)
    rng = np.random.default_rng(seed)
    rows = generate_parity_check_matrix(n - k, k, column_weight, rng)
    checks = rows.reshape(-1)
    columns = np.repeat(np.arange(k), column_weight)
    order = np.lexsort((columns, checks))
    return ParityCheckMatrix(
        n=n, k=k, edge_checks=checks[order], edge_columns=columns[order],
        column_weight=column_weight, seed=seed,
    )


def build_code(
    n: int, rate: Union[CodeRate, str], seed: int = 0, column_weight: int = 3
) -> ParityCheckMatrix:
    """Deterministic [H'|S] code for (N, rate, seed); cached."""
    if n not in SUPPORTED_BLOCK_LENGTHS:
        raise ConfigurationError(f"block length must be one of {SUPPORTED_BLOCK_LENGTHS}, got {n}")
    try:
        rate = CodeRate(rate)
    except ValueError as exc:
        raise ConfigurationError(f"unsupported code rate {rate!r}") from exc
    return _build_code_cached(n, rate, seed, column_weight)


def encode_syndrome(block: Any, code: ParityCheckMatrix) -> np.ndarray:
    """Parity bits p with H' m + S p = 0, by forward substitution through S."""
    block = _as_bits(block, "block")
    if block.size != code.k:
        raise ContractError(f"block has {block.size} bits, code expects {code.k}")
    return np.bitwise_xor.accumulate(code.syndrome(block).astype(np.uint8))


# ══════════════════════════════════════════════════════════════════════════════
#  DECODING
# ══════════════════════════════════════════════════════════════════════════════

class DecodeResult(NamedTuple):
    corrected: np.ndarray
    converged: bool
    iterations: int


def decode_bp(
    noisy_block: Any,
    alice_parity: Any,
    code: ParityCheckMatrix,
    crossover: float,
    max_iters: int = 60,
    num_padded: int = 0,
) -> DecodeResult:
    """
    Sum-product decoding of a block against Alice's parity bits.

    The staircase turns the parity bits into the target syndrome of H'
    (t_j = p_j xor p_(j-1)), so messages run on H' alone. The last `num_padded`
    positions are known zeros. converged is True only if the decoded block
    reproduces alice_parity exactly.
    """
    y = _as_bits(noisy_block, "noisy block")
    parity = _as_bits(alice_parity, "parity")
    if y.size != code.k or parity.size != code.num_checks:
        raise ContractError(
            f"block/parity lengths {y.size}/{parity.size} do not match code ({code.k}, {code.num_checks})"
        )
    if max_iters < 1:
        raise ContractError("max_iters must be at least 1")

    if np.array_equal(encode_syndrome(y, code), parity):
        return DecodeResult(y.copy(), True, 0)

    target = parity ^ np.concatenate(([0], parity[:-1])).astype(np.uint8)
    q = min(max(crossover, CROSSOVER_MIN), CROSSOVER_MAX)
    prior = math.log((1.0 - q) / q) * (1.0 - 2.0 * y)
    if num_padded:
        prior[code.k - num_padded:] = PAD_LLR

    checks, columns = code.edge_checks, code.edge_columns
    m, k = code.num_checks, code.k
    check_sign = target[checks].astype(np.int64)
    v2c = prior[columns]
    hard = y

    for it in range(1, max_iters + 1):
        # check nodes: extrinsic product of tanh(v2c/2) as log-magnitudes and sign counts
        t = np.tanh(0.5 * v2c)
        log_mag = np.log(np.maximum(np.abs(t), TINY))
        negative = (t < 0).astype(np.int64)
        mag = np.exp(np.bincount(checks, log_mag, minlength=m)[checks] - log_mag)
        flips = np.bincount(checks, negative, minlength=m)[checks] - negative + check_sign
        c2v = 2.0 * np.arctanh(np.clip(np.where(flips % 2, -mag, mag), -ONE, ONE))

        # variable nodes
        total = prior + np.bincount(columns, c2v, minlength=k)
        v2c = total[columns] - c2v
        hard = (total < 0).astype(np.uint8)

        if np.array_equal(encode_syndrome(hard, code), parity):
            return DecodeResult(hard, True, it)

    return DecodeResult(hard, False, max_iters)


class ReconciliationResult(BaseModel):
    corrected_key: Any
    parity: Any  # Alice's parity bits, block after block; what goes over the public channel
    raw_error_rate: float
    residual_error_rate: float
    leakage_bits: int
    blocks: int
    failed_blocks: int

    class Config:
        arbitrary_types_allowed = True
        frozen = True


def reconcile_keys(
    key_a: Any,
    key_b: Any,
    rate: Union[CodeRate, str],
    n: int,
    crossover: float,
    seed: int = 0,
    max_iters: int = 60,
    column_weight: int = 3,
    code: Optional[ParityCheckMatrix] = None,
) -> ReconciliationResult:
    """
    Correct key_b towards key_a block by block; the last block is zero-padded.

    A supplied `code` (e.g. from load_matrix) replaces the generated one, and
    rate, n, seed and column_weight are then ignored.
    """
    a = _as_bits(key_a, "key_a")
    b = _as_bits(key_b, "key_b")
    if a.size != b.size:
        raise ContractError(f"keys differ in length ({a.size} vs {b.size})")
    if a.size == 0:
        raise ContractError("cannot reconcile empty keys")
    if code is None:
        code = build_code(n, rate, seed, column_weight)
    k = code.k

    blocks = math.ceil(a.size / k)
    padded = blocks * k - a.size
    a_pad = np.concatenate([a, np.zeros(padded, dtype=np.uint8)]).reshape(blocks, k)
    b_pad = np.concatenate([b, np.zeros(padded, dtype=np.uint8)]).reshape(blocks, k)

    corrected = np.empty_like(b_pad)
    parity = np.empty((blocks, code.num_checks), dtype=np.uint8)
    failed = 0
    for i in range(blocks):
        pad = padded if i == blocks - 1 else 0
        parity[i] = encode_syndrome(a_pad[i], code)
        result = decode_bp(b_pad[i], parity[i], code, crossover, max_iters, pad)
        corrected[i] = result.corrected
        if not result.converged:
            failed += 1
            logger.warning("block %d/%d did not converge in %d iterations", i + 1, blocks, max_iters)
        else:
            logger.debug("block %d/%d converged after %d iterations", i + 1, blocks, result.iterations)

    corrected_key = corrected.reshape(-1)[:a.size]
    corrected_key.flags.writeable = False
    parity = parity.reshape(-1)
    parity.flags.writeable = False
    result = ReconciliationResult(
        corrected_key=corrected_key,
        parity=parity,
        raw_error_rate=float(np.mean(a != b)),
        residual_error_rate=float(np.mean(a != corrected_key)),
        leakage_bits=parity.size,
        blocks=blocks,
        failed_blocks=failed,
    )
    logger.info(
        "reconciled %d bits at k/N=%d/%d: error %.4f -> %.4f, %d/%d blocks failed",
        a.size, code.k, code.n, result.raw_error_rate, result.residual_error_rate, failed, blocks,
    )
    return result


class CorrectionRow(BaseModel):
    """Residual errors of Bob and Charlie at one code rate."""
    rate: CodeRate
    raw_error_b: float
    raw_error_c: float
    residual_error_b: float
    residual_error_c: float
    leakage_bits: int


def error_correction_table(
    key_a: Any,
    key_b: Any,
    key_c: Any,
    n: int,
    crossover: float,
    rates: Sequence[CodeRate] = tuple(CodeRate),
    seed: int = 0,
    max_iters: int = 60,
    column_weight: int = 3,
    codes: Optional[Mapping[CodeRate, ParityCheckMatrix]] = None,
) -> List[CorrectionRow]:
    """One row per rate; `codes` supplies matrices for some rates, the rest are generated."""
    codes = codes or {}
    rows = []
    for rate in rates:
        rate = CodeRate(rate)
        code = codes.get(rate)
        res_b = reconcile_keys(key_a, key_b, rate, n, crossover, seed, max_iters, column_weight, code)
        res_c = reconcile_keys(key_a, key_c, rate, n, crossover, seed, max_iters, column_weight, code)
        rows.append(CorrectionRow(
            rate=rate,
            raw_error_b=res_b.raw_error_rate, raw_error_c=res_c.raw_error_rate,
            residual_error_b=res_b.residual_error_rate, residual_error_c=res_c.residual_error_rate,
            leakage_bits=res_b.leakage_bits,
        ))
    return rows


# ══════════════════════════════════════════════════════════════════════════════
#  MATRIX FILES
# ══════════════════════════════════════════════════════════════════════════════

def save_matrix(code: ParityCheckMatrix, path: Path) -> Path:
    """First line `N k`, then the 0-based columns of the ones in each row of [H'|S]."""
    path = Path(path)
    csr = code.matrix
    lines = [f"{code.n} {code.k}"]
    for j in range(code.num_checks):
        cols = csr.indices[csr.indptr[j]:csr.indptr[j + 1]].tolist()
        stair = [code.k + j - 1, code.k + j] if j else [code.k]
        lines.append(" ".join(str(c) for c in sorted(cols) + stair))
    path.write_text("\n".join(lines) + "\n")
    return path


def load_matrix(path: Path) -> ParityCheckMatrix:
    lines = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    try:
        n, k = (int(v) for v in lines[0])
        rows = [[int(v) for v in line] for line in lines[1:]]
    except (IndexError, ValueError) as exc:
        raise ConfigurationError(f"{path}: malformed matrix file ({exc})") from exc
    if not 0 < k < n or len(rows) != n - k:
        raise ConfigurationError(f"{path}: expected {n - k} rows for N={n}, k={k}, got {len(rows)}")

    checks, columns = [], []
    for j, row in enumerate(rows):
        stair = sorted(c for c in row if c >= k)
        expected = [k + j - 1, k + j] if j else [k]
        if stair != expected or any(c < 0 for c in row):
            raise ConfigurationError(f"{path}: row {j} does not follow the staircase layout")
        message_cols = sorted(set(c for c in row if c < k))
        checks.extend([j] * len(message_cols))
        columns.extend(message_cols)

    checks = np.array(checks, dtype=np.int64)
    columns = np.array(columns, dtype=np.int64)
    weights = np.bincount(columns, minlength=k)
    weight = int(weights[0]) if weights.size and np.all(weights == weights[0]) else None
    return ParityCheckMatrix(n=n, k=k, edge_checks=checks, edge_columns=columns, column_weight=weight)


# ══════════════════════════════════════════════════════════════════════════════
#  PRIVACY AMPLIFICATION
# ══════════════════════════════════════════════════════════════════════════════

def toeplitz_seed(input_length: int, output_length: int, seed: int) -> np.ndarray:
    """The m + n - 1 bits that define an m x n Toeplitz matrix."""
    return np.random.default_rng(seed).integers(0, 2, input_length + output_length - 1, dtype=np.uint8)


def privacy_amplify(key: Any, output_length: int, seed: int) -> np.ndarray:
    """
    Compress `key` with a seeded Toeplitz hash, T[i, j] = t[i - j + n - 1].

    T x is a slice of the full convolution of t with x, computed by FFT.
    """
    x = _as_bits(key, "key")
    n, m = x.size, int(output_length)
    if not 0 <= m <= n:
        raise ContractError(f"output length {m} must lie in [0, {n}]")
    if m == 0:
        return np.zeros(0, dtype=np.uint8)
    t = toeplitz_seed(n, m, seed)
    full = np.rint(fftconvolve(t.astype(np.float64), x.astype(np.float64)))
    return (full[n - 1:n - 1 + m].astype(np.int64) % 2).astype(np.uint8)
