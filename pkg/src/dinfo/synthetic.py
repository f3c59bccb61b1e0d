"""Ground-truth generators and exact directed-information oracles.

Everything here is seed-deterministic.  The generators produce the same
feature/symbol sequences the real pipeline consumes, and the oracles give
closed-form or exhaustively enumerated DI values to test the estimators
against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadSpec, NoOracle, TooLarge
from .signals import FeatureSequence, QuantizedSequence

KINDS = (
    "binary_flip_chain",
    "gaussian_var",
    "independent_null",
    "piecewise_coupled",
    "planted_graph",
)

_MAX_ALPHABET = 3
_MAX_HORIZON = 6


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of one synthetic process.

    ``flip_prob`` applies to the binary kinds, ``coupling``/``noise_std`` to
    the Gaussian chain, ``onset``/``offset`` to the piecewise kind, and
    ``edges``/``n_channels`` to the planted graph.
    """

    kind: str
    length: int
    seed: int = 0
    flip_prob: float = 0.1
    coupling: float = 0.5
    noise_std: float = 1.0
    onset: int | None = None
    offset: int | None = None
    edges: tuple[tuple[int, int], ...] = ()
    n_channels: int = 2

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        if self.kind not in KINDS:
            raise BadSpec(f"unknown kind {self.kind!r}")
        if self.length < 2:
            raise BadSpec("length must be >= 2")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise BadSpec("flip_prob must lie in [0, 1]")
        if self.noise_std <= 0:
            raise BadSpec("noise_std must be positive")
        if self.kind == "piecewise_coupled":
            if self.onset is None or self.offset is None:
                raise BadSpec("piecewise_coupled needs onset and offset")
            if not 0 <= self.onset < self.offset <= self.length:
                raise BadSpec("need 0 <= onset < offset <= length")
        if self.kind == "planted_graph":
            if self.n_channels < 2:
                raise BadSpec("planted_graph needs at least 2 channels")
            targets = [t for _, t in self.edges]
            if len(set(targets)) != len(targets):
                raise BadSpec("each node may receive at most one planted edge")
            for s, t in self.edges:
                if not (0 <= s < self.n_channels and 0 <= t < self.n_channels):
                    raise BadSpec("edge endpoints must be valid node indices")
                if s == t:
                    raise BadSpec("self-edges are not allowed")


@dataclass(frozen=True)
class SyntheticChannel:
    """One generated channel: features plus symbols when the channel is discrete."""

    name: str
    features: FeatureSequence
    symbols: QuantizedSequence | None = None


def _binary_channel(name: str, bits: np.ndarray) -> SyntheticChannel:
    feats = FeatureSequence(bits.astype(float), 1.0, 0.0, source_channel=name)
    syms = QuantizedSequence(bits.astype(np.int64), alphabet_size=2, codebook_id=name)
    return SyntheticChannel(name, feats, syms)


def _flip(rng: np.random.Generator, driver: np.ndarray, q: float) -> np.ndarray:
    """Lag-1 copy of ``driver`` with i.i.d. bit flips; index 0 is a fresh coin."""
    n = driver.size
    out = np.empty(n, dtype=np.int64)
    out[0] = rng.integers(0, 2)
    flips = rng.random(n - 1) < q
    out[1:] = driver[:-1] ^ flips
    return out


def generate(spec: GeneratorSpec) -> list[SyntheticChannel]:
    """Produce the channels described by ``spec``.

    Binary kinds carry aligned symbol sequences; Gaussian channels carry
    features only.  Identical specs (same seed) give identical output.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.length

    if spec.kind == "binary_flip_chain":
        x = rng.integers(0, 2, size=n)
        y = _flip(rng, x, spec.flip_prob)
        return [_binary_channel("x", x), _binary_channel("y", y)]

    if spec.kind == "gaussian_var":
        x = rng.standard_normal(n)
        eps = rng.standard_normal(n)
        y = spec.noise_std * eps
        y[1:] += spec.coupling * x[:-1]
        return [
            SyntheticChannel("x", FeatureSequence(x, 1.0, 0.0, source_channel="x")),
            SyntheticChannel("y", FeatureSequence(y, 1.0, 0.0, source_channel="y")),
        ]

    if spec.kind == "independent_null":
        x = rng.integers(0, 2, size=n)
        y = rng.standard_normal(n)
        return [
            _binary_channel("x", x),
            SyntheticChannel("y", FeatureSequence(y, 1.0, 0.0, source_channel="y")),
        ]

    if spec.kind == "piecewise_coupled":
        x = rng.integers(0, 2, size=n)
        y = rng.integers(0, 2, size=n)
        lo = max(spec.onset, 1)
        flips = rng.random(n) < spec.flip_prob
        sl = slice(lo, spec.offset)
        y[sl] = x[lo - 1 : spec.offset - 1] ^ flips[sl]
        return [_binary_channel("x", x), _binary_channel("y", y)]

    # planted_graph: driven nodes copy their source with flips, following
    # edges in dependency order so chained edges see finished sources.
    incoming = {t: s for s, t in spec.edges}
    bits: dict[int, np.ndarray] = {}
    for node in range(spec.n_channels):
        if node not in incoming:
            bits[node] = rng.integers(0, 2, size=n)
    pending = dict(incoming)
    guard = 0
    while pending:
        progressed = False
        for t in sorted(pending):
            s = pending[t]
            if s in bits:
                bits[t] = _flip(rng, bits[s], spec.flip_prob)
                del pending[t]
                progressed = True
        guard += 1
        if not progressed or guard > spec.n_channels + 1:
            raise BadSpec("planted edges form a cycle")
    return [
        _binary_channel(f"ch{idx:02d}", bits[idx]) for idx in range(spec.n_channels)
    ]


def binary_entropy(q: float) -> float:
    """Entropy of a Bernoulli(q) variable in nats."""
    if q <= 0.0 or q >= 1.0:
        return 0.0
    return float(-q * np.log(q) - (1 - q) * np.log1p(-q))


def exact_di(spec: GeneratorSpec) -> float:
    """Closed-form per-step DI (nats) for the analytically solvable kinds.

    binary_flip_chain(q):  ln 2 - H_b(q)
    gaussian_var(a, s):    0.5 * ln(1 + a^2 / s^2)
    independent_null:      0
    """
    if spec.kind == "binary_flip_chain":
        return float(np.log(2.0)) - binary_entropy(spec.flip_prob)
    if spec.kind == "gaussian_var":
        return 0.5 * float(np.log1p(spec.coupling**2 / spec.noise_std**2))
    if spec.kind == "independent_null":
        return 0.0
    raise NoOracle(f"no closed-form DI for kind {spec.kind!r}")


@dataclass(frozen=True)
class MarkovPairLaw:
    """Fully specified joint law of a finite-alphabet chain pair.

    ``initial[i, j]`` is P(x_1 = i, y_1 = j) and
    ``kernel[i, j, k, l]`` is P(x_m = k, y_m = l | x_{m-1} = i, y_{m-1} = j).
    """

    initial: np.ndarray
    kernel: np.ndarray

    def __post_init__(self):
        initial = np.asarray(self.initial, dtype=float)
        kernel = np.asarray(self.kernel, dtype=float)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "kernel", kernel)
        ax, ay = initial.shape
        if kernel.shape != (ax, ay, ax, ay):
            raise BadSpec("kernel shape must be (ax, ay, ax, ay)")
        if abs(initial.sum() - 1.0) > 1e-12:
            raise BadSpec("initial law must sum to 1")
        if np.max(np.abs(kernel.sum(axis=(2, 3)) - 1.0)) > 1e-12:
            raise BadSpec("kernel rows must sum to 1")

    @property
    def alphabet(self) -> tuple[int, int]:
        return self.initial.shape


def flip_chain_law(q: float) -> MarkovPairLaw:
    """Law of the binary flip chain: x i.i.d. fair, y_m = x_{m-1} xor Bern(q)."""
    initial = np.full((2, 2), 0.25)
    kernel = np.zeros((2, 2, 2, 2))
    for xp in range(2):
        for k in range(2):
            for l in range(2):
                kernel[xp, :, k, l] = 0.5 * ((1 - q) if l == xp else q)
    return MarkovPairLaw(initial, kernel)


def independent_pair_law(ax: int = 2, ay: int = 2) -> MarkovPairLaw:
    """Two independent i.i.d. uniform chains."""
    initial = np.full((ax, ay), 1.0 / (ax * ay))
    kernel = np.broadcast_to(initial, (ax, ay, ax, ay)).copy()
    return MarkovPairLaw(initial, kernel)


def _entropy_sum(p: np.ndarray) -> float:
    mask = p > 0
    return float(-(p[mask] * np.log(p[mask])).sum())


def brute_force_di(law: MarkovPairLaw, horizon: int) -> float:
    """Exact DI over ``horizon`` steps by enumerating every sequence pair.

    Evaluates sum_m I(X^(m); Y_m | Y^(m-1)) from the full joint table; the
    state space is capped at alphabet 3 and horizon 6 to stay enumerable.
    """
    ax, ay = law.alphabet
    if ax > _MAX_ALPHABET or ay > _MAX_ALPHABET:
        raise TooLarge(f"alphabet > {_MAX_ALPHABET}")
    if horizon > _MAX_HORIZON:
        raise TooLarge(f"horizon > {_MAX_HORIZON}")
    if horizon < 1:
        raise BadSpec("horizon must be >= 1")

    # joint over (x_1, y_1, ..., x_m, y_m), extended one step at a time
    joint = law.initial.copy()
    total = 0.0
    for m in range(1, horizon + 1):
        if m > 1:
            joint = joint[..., :, :, None, None] * law.kernel
        # I(A; B | C) with A = x^{(m)}, B = y_m, C = y^{(m-1)}; reorder the
        # 2m axes (x1, y1, ..., xm, ym) into (x-history, y-history, y_m).
        perm = list(range(0, 2 * m, 2)) + list(range(1, 2 * m - 1, 2)) + [2 * m - 1]
        p_abc = np.transpose(joint, perm).reshape(ax**m, ay ** (m - 1), ay)
        p_c = p_abc.sum(axis=(0, 2))
        p_ac = p_abc.sum(axis=2)
        p_bc = p_abc.sum(axis=0)
        # CMI = H(A|C) + H(B|C) - H(AB|C) via joint entropies
        h_ac = _entropy_sum(p_ac)
        h_bc = _entropy_sum(p_bc)
        h_c = _entropy_sum(p_c)
        h_abc = _entropy_sum(p_abc)
        total += (h_ac - h_c) + (h_bc - h_c) - (h_abc - h_c)
    return total
