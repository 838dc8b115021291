"""Canonical mechanism constructors.

Noise-addition mechanisms quantize continuous Laplace or Gaussian noise
onto a finite response grid and truncate it around each row's center,
renormalizing the retained mass; their privacy and stability parameters
are therefore always measured by the certifiers, never assumed from
closed forms. The remaining constructors are the exactly-finite
mechanisms used as certifier inputs and counterexamples: randomized
response, parity release, uniform element release, compression schemes,
empirical means, and constants.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .dists import FiniteDist, pushforward
from .errors import (
    BudgetExceededError,
    ConfigurationError,
    DomainMismatchError,
)
from .queries import LinearQuery
from .worlds import DEFAULT_TUPLE_BUDGET, Domain, MechanismKernel, World, all_tuples

NOISE_FAMILIES = ("laplace", "gaussian", "randomized_response")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise family plus discretization geometry.

    `scale` is the Laplace b, the Gaussian sigma, or the bit-flip
    probability for randomized response. `grid_step` and
    `grid_halfwidth` (truncation radius around each row center) only
    apply to the additive families.
    """

    family: str
    scale: float
    grid_step: float = 0.0
    grid_halfwidth: float = 0.0

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ConfigurationError(f"unknown noise family {self.family!r}")
        if self.family == "randomized_response":
            if not 0.0 < self.scale < 0.5:
                raise ConfigurationError(
                    f"flip probability must lie in (0, 1/2), got {self.scale}"
                )
        else:
            if self.scale <= 0:
                raise ConfigurationError(f"noise scale must be positive, got {self.scale}")
            if self.grid_step <= 0:
                raise ConfigurationError(f"grid step must be positive, got {self.grid_step}")
            if self.grid_step > self.scale:
                raise ConfigurationError(
                    f"grid too coarse: step {self.grid_step} exceeds scale {self.scale}"
                )


def _noise_cdf(family: str, scale: float, x: float) -> float:
    if family == "laplace":
        if x < 0:
            return 0.5 * math.exp(x / scale)
        return 1.0 - 0.5 * math.exp(-x / scale)
    return 0.5 * (1.0 + math.erf(x / (scale * math.sqrt(2.0))))


def noise_grid(delta_bound: float, spec: NoiseSpec) -> tuple:
    """Response grid: multiples of the step covering every truncation window."""
    limit = delta_bound + spec.grid_halfwidth
    steps = int(math.ceil(limit / spec.grid_step - 1e-9))
    return tuple(j * spec.grid_step for j in range(-steps, steps + 1))


def quantized_noise_row(center: float, spec: NoiseSpec, grid: Sequence[float]) -> np.ndarray:
    """Noise mass per grid cell, truncated around `center` and renormalized."""
    grid_arr = np.asarray(grid)
    half_step = spec.grid_step / 2.0
    keep = np.abs(grid_arr - center) <= spec.grid_halfwidth + 1e-12
    row = np.zeros(len(grid_arr))
    for j in np.flatnonzero(keep):
        offset = grid_arr[j] - center
        row[j] = _noise_cdf(spec.family, spec.scale, offset + half_step) - _noise_cdf(
            spec.family, spec.scale, offset - half_step
        )
    total = row.sum()
    if total <= 0:
        raise ConfigurationError("truncation window retains no noise mass")
    return row / total


def build_noise_mechanism(query: LinearQuery, spec: NoiseSpec, world: World) -> MechanismKernel:
    """Kernel whose row for `s` is discretized noise centered at the query value."""
    if spec.family == "randomized_response":
        raise ConfigurationError("randomized response is built by build_randomized_response")
    if query.domain != world.domain.elements:
        raise DomainMismatchError("query is not defined on the world's domain")
    if spec.grid_halfwidth < query.delta_bound + 5.0 * spec.scale:
        raise ConfigurationError(
            f"truncation radius {spec.grid_halfwidth} is below the required "
            f"{query.delta_bound + 5.0 * spec.scale}"
        )
    grid = noise_grid(query.delta_bound, spec)
    row_cache: dict[float, np.ndarray] = {}

    def row_fn(sample: tuple) -> np.ndarray:
        center = query.sample_value(sample)
        row = row_cache.get(center)
        if row is None:
            row = quantized_noise_row(center, spec, grid)
            row_cache[center] = row
        return row

    return MechanismKernel(
        grid, row_fn=row_fn, tag="noise", meta={"spec": spec, "query": query}
    )


def build_randomized_response(
    domain: Domain,
    n: int,
    flip: float,
    labels: Mapping | None = None,
    budget: int = DEFAULT_TUPLE_BUDGET,
) -> MechanismKernel:
    """Release the per-position bit labels, each flipped independently.

    The canonical exactly-private finite mechanism: neighboring rows
    differ in one released bit, bounding every likelihood ratio by
    (1 - flip) / flip.
    """
    spec = NoiseSpec(family="randomized_response", scale=flip)
    labels = _validate_labels(domain, labels)
    if 2**n > budget:
        raise BudgetExceededError(2**n, budget, what=f"response space 2^{n}")
    responses = tuple(itertools.product((0, 1), repeat=n))

    def row_fn(sample: tuple) -> np.ndarray:
        row = np.ones(1)
        for element in sample:
            bit = labels[element]
            keep = 1.0 - spec.scale
            pos = np.array([keep, spec.scale]) if bit == 0 else np.array([spec.scale, keep])
            row = np.outer(row, pos).ravel()
        return row

    return MechanismKernel(
        responses, row_fn=row_fn, tag="randomized_response", meta={"flip": flip}
    )


def _validate_labels(domain: Domain, labels: Mapping | None) -> dict:
    if labels is None:
        if not set(domain.elements) <= {0, 1}:
            raise ConfigurationError("labels are required unless the domain is {0, 1}")
        return {x: x for x in domain.elements}
    labels = dict(labels)
    for x in domain.elements:
        if labels.get(x) not in (0, 1):
            raise ConfigurationError(f"element {x!r} lacks a binary label")
    return labels


def build_parity_mechanism(world: World, labels: Mapping | None = None) -> MechanismKernel:
    """Deterministically release the parity of the sample's label sum."""
    labels = _validate_labels(world.domain, labels)

    def row_fn(sample: tuple) -> np.ndarray:
        parity = sum(labels[element] for element in sample) % 2
        row = np.zeros(2)
        row[parity] = 1.0
        return row

    return MechanismKernel((0, 1), row_fn=row_fn, tag="parity", meta={"labels": labels})


def build_element_release(world: World) -> MechanismKernel:
    """Release one position of the sample tuple, chosen uniformly."""
    elements = world.domain.elements
    index = {x: i for i, x in enumerate(elements)}
    n = world.n

    def row_fn(sample: tuple) -> np.ndarray:
        row = np.zeros(len(elements))
        for element, count in Counter(sample).items():
            row[index[element]] = count / n
        return row

    return MechanismKernel(
        elements, row_fn=row_fn, tag="element_release", meta={"m": 1}
    )


@dataclass(frozen=True, eq=False)
class CompressionSpec:
    """A mechanism factoring through `m` retained sample positions.

    `selector` maps a sample tuple to the retained index tuple (or to a
    distribution over index tuples for randomized selection); `encoder`
    maps the retained sub-tuple to a distribution over the shared
    response set.
    """

    m: int
    selector: Callable[[tuple], object]
    encoder: Callable[[tuple], FiniteDist]
    responses: tuple


def uniform_position_selector(n: int) -> FiniteDist:
    """Uniformly random single retained position, independent of the sample."""
    return FiniteDist(tuple((i,) for i in range(n)), np.full(n, 1.0 / n))


def build_compression_mechanism(spec: CompressionSpec, world: World) -> MechanismKernel:
    """Kernel realizing selector-then-encode on the shared response set."""
    n = world.n
    if not 0 < spec.m < n / 2.0:
        raise ConfigurationError(f"compression size must satisfy 0 < m < n/2, got m={spec.m}, n={n}")

    def indices_of(selected) -> tuple:
        indices = tuple(selected)
        if len(indices) != spec.m or len(set(indices)) != spec.m:
            raise ConfigurationError(f"selector returned invalid index tuple {indices!r}")
        if any(not 0 <= i < n for i in indices):
            raise ConfigurationError(f"selector index out of range in {indices!r}")
        return indices

    def encode(sample: tuple, selected) -> np.ndarray:
        indices = indices_of(selected)
        encoded = spec.encoder(tuple(sample[i] for i in indices))
        if encoded.outcomes != spec.responses:
            raise ConfigurationError("encoder output is not over the shared response set")
        return encoded.probs

    def row_fn(sample: tuple) -> np.ndarray:
        chosen = spec.selector(sample)
        if isinstance(chosen, FiniteDist):
            row = np.zeros(len(spec.responses))
            for selected, weight in zip(chosen.outcomes, chosen.probs):
                if weight > 0:
                    row = row + weight * encode(sample, selected)
            return row
        return encode(sample, chosen)

    return MechanismKernel(
        spec.responses, row_fn=row_fn, tag="compression", meta={"m": spec.m}
    )


def build_empirical_mean_kernel(
    query: LinearQuery, world: World, budget: int = DEFAULT_TUPLE_BUDGET
) -> MechanismKernel:
    """Deterministic kernel answering one query with its exact sample mean."""
    if query.domain != world.domain.elements:
        raise DomainMismatchError("query is not defined on the world's domain")
    tuples = all_tuples(world.domain, world.n, budget)
    responses = tuple(sorted({query.sample_value(s) for s in tuples}))
    index = {r: j for j, r in enumerate(responses)}

    def row_fn(sample: tuple) -> np.ndarray:
        row = np.zeros(len(responses))
        row[index[query.sample_value(sample)]] = 1.0
        return row

    return MechanismKernel(
        responses, row_fn=row_fn, tag="empirical_mean", meta={"query": query}
    )


def build_constant_mechanism(response, responses: Sequence | None = None) -> MechanismKernel:
    """Kernel that ignores the sample entirely."""
    outs = tuple(responses) if responses is not None else (response,)
    point = FiniteDist.point_mass(response, outs)

    def row_fn(sample: tuple) -> np.ndarray:
        return point.probs

    return MechanismKernel(outs, row_fn=row_fn, tag="constant")


def compose_with_channel(
    kernel: MechanismKernel, channel: Mapping[object, FiniteDist]
) -> MechanismKernel:
    """Post-process a kernel's responses through a stochastic channel."""
    out_set = None
    for r in kernel.responses:
        row = channel.get(r)
        if row is None:
            raise DomainMismatchError(f"channel has no row for response {r!r}")
        if out_set is None:
            out_set = row.outcomes
        elif row.outcomes != out_set:
            raise DomainMismatchError("channel rows do not share one output outcome set")

    def row_fn(sample: tuple) -> np.ndarray:
        source = FiniteDist(kernel.responses, kernel.row(sample))
        return pushforward(source, channel).probs

    return MechanismKernel(
        out_set, row_fn=row_fn, tag=f"{kernel.tag}+channel", meta=dict(kernel.meta)
    )


class QueryMechanism:
    """Answers arbitrary linear queries with real-valued responses.

    The Monte Carlo harnesses sample via `respond`; the exact harnesses
    read full rows via `response_dist` and single-response likelihoods
    via `prob_of`.
    """

    def response_dist(self, sample: tuple, query: LinearQuery) -> FiniteDist:
        raise NotImplementedError

    def respond(self, rng: np.random.Generator, sample: tuple, query: LinearQuery) -> float:
        return float(self.response_dist(sample, query).sample(rng))

    def prob_of(self, sample: tuple, query: LinearQuery, response: float) -> float:
        dist = self.response_dist(sample, query)
        try:
            return dist.prob(response)
        except DomainMismatchError:
            return 0.0


class EmpiricalMeanMechanism(QueryMechanism):
    """Returns the exact sample mean of the query, deterministically."""

    def response_dist(self, sample: tuple, query: LinearQuery) -> FiniteDist:
        return FiniteDist((query.sample_value(sample),), np.ones(1))

    def respond(self, rng, sample, query) -> float:
        return query.sample_value(sample)

    def prob_of(self, sample, query, response) -> float:
        return 1.0 if abs(query.sample_value(sample) - response) <= 1e-12 else 0.0


class NoiseChannelMechanism(QueryMechanism):
    """Adds discretized truncated noise to the exact sample mean.

    Matches `build_noise_mechanism` cell for cell, so sampled runs and
    exact kernels describe the same mechanism.
    """

    def __init__(self, spec: NoiseSpec, delta_bound: float):
        if spec.family == "randomized_response":
            raise ConfigurationError("randomized response does not answer real-valued queries")
        if spec.grid_halfwidth < delta_bound + 5.0 * spec.scale:
            raise ConfigurationError(
                f"truncation radius {spec.grid_halfwidth} is below the required "
                f"{delta_bound + 5.0 * spec.scale}"
            )
        self.spec = spec
        self.delta_bound = delta_bound
        self.grid = noise_grid(delta_bound, spec)
        self._index = {g: j for j, g in enumerate(self.grid)}
        self._rows: dict[float, np.ndarray] = {}
        self._cdfs: dict[float, np.ndarray] = {}

    def _row(self, center: float) -> np.ndarray:
        row = self._rows.get(center)
        if row is None:
            row = quantized_noise_row(center, self.spec, self.grid)
            self._rows[center] = row
            self._cdfs[center] = np.cumsum(row)
        return row

    def response_dist(self, sample: tuple, query: LinearQuery) -> FiniteDist:
        if query.delta_bound > self.delta_bound + 1e-12:
            raise ConfigurationError("query bound exceeds the mechanism's configured bound")
        return FiniteDist(self.grid, self._row(query.sample_value(sample)))

    def respond(self, rng, sample, query) -> float:
        center = query.sample_value(sample)
        self._row(center)
        j = int(np.searchsorted(self._cdfs[center], rng.random(), side="right"))
        return self.grid[min(j, len(self.grid) - 1)]

    def prob_of(self, sample, query, response) -> float:
        j = self._index.get(response)
        if j is None:
            return 0.0
        return float(self._row(query.sample_value(sample))[j])
