"""Cyclic gradient codes and their nested families.

A gradient code for n workers and n data blocks assigns block subsets to
workers through an encoding matrix B whose row i is supported on the cyclic
window i, i+1, ..., i+sigma (mod n). Coefficients are chosen so that every row
of B lies in the null space of a random sigma x n matrix H whose rows each sum
to zero. That null space has dimension n - sigma and contains the all-ones
vector, so (generically) any n - sigma rows of B can be combined into the
all-ones row and the sum of all partial gradients is recoverable from any
n - sigma worker responses.

A nested family stacks one such code per tolerance sigma = 0..s_max; the
cyclic windows grow by one block per level, so each worker can serve every
level of the family from a single layered task schedule.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

DECODE_TOL = 1e-8
COND_LIMIT = 1e8
NULLSPACE_TOL = 1e-10
MAX_BUILD_ATTEMPTS = 8
VERIFY_CAP = 12


class CodeError(Exception):
    """Base class for construction and decoding failures."""


class SingularSystem(CodeError):
    """A coefficient solve was too ill-conditioned to trust."""


class ConstructionFailed(CodeError):
    """No acceptable encoding matrix found within the retry budget."""


class NotDecodable(CodeError):
    """Too few responsive workers for the requested tolerance."""


class NumericalFailure(CodeError):
    """A decoding solve exceeded the residual tolerance."""


class MissingGradient(CodeError):
    """A worker response references a partial gradient it never computed."""


class CapExceeded(CodeError):
    """Exhaustive verification requested above the enumeration cap."""


@dataclass(frozen=True)
class CodeParams:
    """Validated (n, k, sigma) triple; only k = n is supported."""

    n: int
    k: int
    sigma: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"worker count must be positive, got {self.n}")
        if self.k != self.n:
            raise ValueError(f"only k = n is supported, got k={self.k}, n={self.n}")
        if not 0 <= self.sigma <= self.n - 1:
            raise ValueError(f"sigma must be in [0, n-1], got sigma={self.sigma}, n={self.n}")


@dataclass(frozen=True)
class StorageParams:
    """Per-worker storage budget and problem dimensions."""

    beta: int  # data rows one worker can hold
    m: int     # total data rows
    c: int     # feature columns
    n: int     # workers
    k: int     # tasks

    def __post_init__(self):
        for name in ("beta", "m", "c", "n", "k"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def max_tolerable_stragglers(p: StorageParams) -> int:
    """Largest straggler tolerance the storage budget admits, clamped to [0, n-1]."""
    bound = (p.n * p.beta * p.m) // (p.k * p.c) - 1
    return max(0, min(bound, p.n - 1))


def cyclic_support(i: int, sigma: int, n: int) -> np.ndarray:
    """Column indices of row i: the window i..i+sigma wrapped mod n."""
    return (i + np.arange(sigma + 1)) % n


@dataclass(frozen=True)
class EncodingMatrix:
    """An n x n encoding matrix with cyclic row supports of size sigma + 1.

    ``h`` is the null-space witness drawn during construction (H @ entries.T
    vanishes); it is kept for verification and is not serialized.
    """

    entries: np.ndarray
    sigma: int
    h: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def row_support(self, i: int) -> np.ndarray:
        return cyclic_support(i, self.sigma, self.n)


@dataclass(frozen=True)
class DecodingRow:
    """Coefficients combining n - sigma responsive rows into the all-ones row."""

    responsive_set: frozenset[int]
    coefficients: np.ndarray


@dataclass(frozen=True)
class NestedGradientCode:
    """Component codes for sigma = 0..s_max with nested row supports."""

    n: int
    s_max: int
    seed: int
    components: tuple[EncodingMatrix, ...]


def identity_encoding(n: int) -> EncodingMatrix:
    """The tolerance-0 component: each worker computes exactly its own block."""
    return EncodingMatrix(entries=np.eye(n), sigma=0, h=None)


def _attempt_cyclic(n: int, sigma: int, rng: np.random.Generator) -> EncodingMatrix:
    h = rng.standard_normal((sigma, n))
    h[:, -1] = -h[:, :-1].sum(axis=1)  # rows sum to zero, so ones lies in null(H)
    b = np.zeros((n, n))
    for i in range(n):
        support = cyclic_support(i, sigma, n)
        head, tail = support[0], support[1:]
        system = h[:, tail]
        if np.linalg.cond(system) > COND_LIMIT:
            raise SingularSystem(f"row {i}: coefficient system condition number above {COND_LIMIT:g}")
        b[i, head] = 1.0
        b[i, tail] = np.linalg.solve(system, -h[:, head])
    residual = np.abs(h @ b.T).max()
    if residual > NULLSPACE_TOL:
        raise SingularSystem(f"null-space residual {residual:.3e} above {NULLSPACE_TOL:g}")
    return EncodingMatrix(entries=b, sigma=sigma, h=h)


def build_cyclic_encoding(n: int, sigma: int, seed: int) -> EncodingMatrix:
    """Construct one cyclic-support component for tolerance sigma >= 1.

    Deterministic in (n, sigma, seed). Ill-conditioned draws are retried with
    sub-seeds derived from ``seed``; ConstructionFailed after the retry budget.
    """
    CodeParams(n, n, sigma)
    if sigma < 1:
        raise ValueError("sigma must be >= 1; the tolerance-0 component is identity_encoding(n)")
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    last = None
    for attempt in range(MAX_BUILD_ATTEMPTS):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        try:
            return _attempt_cyclic(n, sigma, rng)
        except SingularSystem as exc:
            last = exc
    raise ConstructionFailed(
        f"no well-conditioned ({n}, {n}, {sigma}) encoding after {MAX_BUILD_ATTEMPTS} attempts"
    ) from last


def _component_seed(seed: int, sigma: int) -> int:
    return int(np.random.SeedSequence([seed, sigma]).generate_state(1, np.uint64)[0])


def build_ngc(n: int, s_max: int, seed: int) -> NestedGradientCode:
    """Construct the nested family for tolerances 0..s_max."""
    if not 0 <= s_max <= n - 1:
        raise ValueError(f"s_max must be in [0, n-1], got s_max={s_max}, n={n}")
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    components = [identity_encoding(n)]
    for sigma in range(1, s_max + 1):
        components.append(build_cyclic_encoding(n, sigma, _component_seed(seed, sigma)))
    return NestedGradientCode(n=n, s_max=s_max, seed=seed, components=tuple(components))


def _combination(code: EncodingMatrix, chosen: tuple[int, ...]) -> tuple[np.ndarray, float]:
    """Least-squares coefficients combining the chosen rows into all-ones."""
    rows = code.entries[list(chosen)]
    solution, *_ = np.linalg.lstsq(rows.T, np.ones(code.n), rcond=None)
    a = np.zeros(code.n)
    a[list(chosen)] = solution
    residual = float(np.abs(a @ code.entries - 1.0).max())
    return a, residual


def decode_row(code: EncodingMatrix, responsive_set, tol: float = DECODE_TOL) -> DecodingRow:
    """Decoding coefficients for one straggler pattern.

    ``responsive_set`` may hold more than n - sigma workers; the n - sigma
    smallest indices are used. Raises NotDecodable when fewer than n - sigma
    workers responded, NumericalFailure when the residual exceeds ``tol``.
    """
    n = code.n
    responders = sorted({int(i) for i in responsive_set})
    if responders and (responders[0] < 0 or responders[-1] >= n):
        raise ValueError(f"worker indices must lie in [0, {n - 1}]")
    need = n - code.sigma
    if len(responders) < need:
        raise NotDecodable(f"{len(responders)} responsive workers, need {need} for sigma={code.sigma}")
    chosen = tuple(responders[:need])
    a, residual = _combination(code, chosen)
    if residual > tol:
        raise NumericalFailure(f"decode residual {residual:.3e} above {tol:g}")
    return DecodingRow(responsive_set=frozenset(chosen), coefficients=a)


@dataclass(frozen=True)
class VerificationReport:
    support_ok: bool
    decodable_ok: bool
    product_ok: bool
    max_residual: float

    @property
    def passed(self) -> bool:
        return self.support_ok and self.decodable_ok and self.product_ok


def verify_gradient_code(
    code: EncodingMatrix, sigma: int, tol: float = DECODE_TOL, cap: int = VERIFY_CAP
) -> VerificationReport:
    """Exhaustively check the defining properties for tolerance sigma.

    Enumerates every (n - sigma)-subset of rows, so n is capped (CapExceeded
    above ``cap``). The report records support sizes, per-subset decodability,
    and the stacked combination product.
    """
    n = code.n
    if n > cap:
        raise CapExceeded(f"n={n} above exhaustive verification cap {cap}")
    support_ok = all(np.count_nonzero(code.entries[i]) >= sigma + 1 for i in range(n))
    decode_rows = []
    max_residual = 0.0
    decodable_ok = True
    for subset in itertools.combinations(range(n), n - sigma):
        a, residual = _combination(code, subset)
        max_residual = max(max_residual, residual)
        if residual > tol:
            decodable_ok = False
        decode_rows.append(a)
    stacked = np.array(decode_rows)
    product_ok = bool(np.abs(stacked @ code.entries - 1.0).max() <= tol)
    return VerificationReport(support_ok, decodable_ok, product_ok, max_residual)


def verify_nesting(ngc: NestedGradientCode):
    """Check row-support inclusion between adjacent components.

    Returns (True, None) when nested, else (False, (sigma, row)) for the first
    violation.
    """
    for sigma in range(ngc.s_max):
        lo = ngc.components[sigma].entries
        hi = ngc.components[sigma + 1].entries
        for i in range(ngc.n):
            inner = set(np.flatnonzero(lo[i]).tolist())
            outer = set(np.flatnonzero(hi[i]).tolist())
            if not inner <= outer:
                return False, (sigma, i)
    return True, None


def encode_response(coeff_row: np.ndarray, partial_gradients) -> np.ndarray:
    """One worker's response: the coefficient-weighted sum of its gradients.

    ``partial_gradients`` is indexed by block; entries outside the row support
    may be None and are never read. MissingGradient if a support index is None.
    """
    coeff_row = np.asarray(coeff_row, dtype=float)
    support = np.flatnonzero(coeff_row)
    if support.size == 0:
        raise ValueError("coefficient row has empty support")
    out = None
    for j in support:
        g = partial_gradients[j]
        if g is None:
            raise MissingGradient(f"partial gradient {j} not available")
        term = coeff_row[j] * np.asarray(g, dtype=float)
        out = term if out is None else out + term
    return out


def code_to_json(ngc: NestedGradientCode) -> str:
    """Serialize to JSON with row-major entries (exact double round-trip)."""
    doc = {
        "n": ngc.n,
        "s_max": ngc.s_max,
        "seed": ngc.seed,
        "components": [
            {"sigma": comp.sigma, "entries": comp.entries.reshape(-1).tolist()}
            for comp in ngc.components
        ],
    }
    return json.dumps(doc, indent=2)


def code_from_json(text: str) -> NestedGradientCode:
    doc = json.loads(text)
    n, s_max, seed = int(doc["n"]), int(doc["s_max"]), int(doc["seed"])
    raw = doc["components"]
    if len(raw) != s_max + 1:
        raise ValueError(f"expected {s_max + 1} components, found {len(raw)}")
    components = []
    for sigma, comp in enumerate(raw):
        if int(comp["sigma"]) != sigma:
            raise ValueError(f"component {sigma} labelled sigma={comp['sigma']}")
        entries = np.array(comp["entries"], dtype=float)
        if entries.size != n * n or not np.all(np.isfinite(entries)):
            raise ValueError(f"component {sigma}: expected {n * n} finite entries")
        components.append(EncodingMatrix(entries=entries.reshape(n, n), sigma=sigma))
    return NestedGradientCode(n=n, s_max=s_max, seed=seed, components=tuple(components))


def save_code(ngc: NestedGradientCode, path) -> None:
    with open(path, "w") as fh:
        fh.write(code_to_json(ngc))
        fh.write("\n")


def load_code(path) -> NestedGradientCode:
    with open(path) as fh:
        return code_from_json(fh.read())
