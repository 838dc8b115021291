"""Shared world builders for the whole suite.

`suite_worlds()` is the canonical collection that the acceptance
criteria sweep: a handful of hand-built worlds with known behavior plus
seeded random worlds of varying shapes. Keep it importable (plain
functions, cached) so the acceptance module can reuse it outside of
fixture machinery.
"""

from __future__ import annotations

import dataclasses
import functools
import itertools
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import stability_lab as sl


def make_element_dist(rng: np.random.Generator, elements: tuple) -> sl.FiniteDist:
    raw = rng.dirichlet(np.ones(len(elements)))
    return sl.FiniteDist(elements, raw)


def make_random_kernel(
    rng: np.random.Generator, domain: sl.Domain, n: int, responses: tuple
) -> sl.MechanismKernel:
    rows = {}
    for sample in itertools.product(domain.elements, repeat=n):
        rows[sample] = rng.dirichlet(np.ones(len(responses)))
    return sl.MechanismKernel(responses, rows=rows, tag="random")


def make_random_world(
    rng: np.random.Generator,
    max_elems: int = 4,
    max_n: int = 3,
    max_resp: int = 6,
    force_product: bool | None = None,
) -> sl.World:
    n_elems = int(rng.integers(2, max_elems + 1))
    domain = sl.Domain(tuple(range(n_elems)))
    n = int(rng.integers(1, max_n + 1))
    n_resp = int(rng.integers(2, max_resp + 1))
    responses = tuple(f"r{j}" for j in range(n_resp))
    product = bool(rng.integers(0, 2)) if force_product is None else force_product
    if product:
        prior = sl.product_prior(make_element_dist(rng, domain.elements), n)
    else:
        tuples = tuple(itertools.product(domain.elements, repeat=n))
        prior = sl.explicit_prior(
            sl.FiniteDist(tuples, rng.dirichlet(np.ones(len(tuples)))), n
        )
    kernel = make_random_kernel(rng, domain, n, responses)
    return sl.build_world(domain, n, prior, kernel)


def binary_uniform_world(n: int) -> sl.World:
    domain = sl.Domain((0, 1))
    prior = sl.product_prior(sl.FiniteDist.uniform((0, 1)), n)
    return sl.World(domain, n, prior, kernel=None)


def identity_world() -> sl.World:
    shell = binary_uniform_world(1)
    return dataclasses.replace(shell, kernel=sl.build_element_release(shell))


def xor_world() -> sl.World:
    shell = binary_uniform_world(2)

    def row(sample):
        out = np.zeros(2)
        out[(sample[0] ^ sample[1]) % 2] = 1.0
        return out

    kernel = sl.MechanismKernel((0, 1), row_fn=row, tag="xor")
    return dataclasses.replace(shell, kernel=kernel)


def constant_world(n: int = 2) -> sl.World:
    shell = binary_uniform_world(n)
    return dataclasses.replace(shell, kernel=sl.build_constant_mechanism("only"))


def randomized_response_world(n: int = 1, flip: float = 0.25) -> sl.World:
    shell = binary_uniform_world(n)
    kernel = sl.build_randomized_response(shell.domain, n, flip)
    return dataclasses.replace(shell, kernel=kernel)


def parity_world(p: float = 0.6, n: int = 3) -> sl.World:
    domain = sl.Domain((0, 1))
    prior = sl.product_prior(sl.FiniteDist((0, 1), np.array([1.0 - p, p])), n)
    shell = sl.World(domain, n, prior, kernel=None)
    return dataclasses.replace(shell, kernel=sl.build_parity_mechanism(shell))


def element_release_world(elements: tuple, weights, n: int) -> sl.World:
    domain = sl.Domain(elements)
    prior = sl.product_prior(sl.FiniteDist(elements, np.asarray(weights, dtype=float)), n)
    shell = sl.World(domain, n, prior, kernel=None)
    return dataclasses.replace(shell, kernel=sl.build_element_release(shell))


@functools.lru_cache(maxsize=1)
def suite_worlds() -> tuple:
    """The named collection every blanket criterion sweeps."""
    rng = np.random.default_rng(20260809)
    worlds = [
        ("constant", constant_world()),
        ("identity", identity_world()),
        ("xor", xor_world()),
        ("rr-0.25", randomized_response_world()),
        ("parity-0.6-3", parity_world()),
        ("release-3x2", element_release_world(("a", "b", "c"), (0.5, 0.3, 0.2), 2)),
    ]
    for i in range(24):
        worlds.append((f"random-{i}", make_random_world(rng)))
    # A few wide-response worlds so the subset oracle is exercised up to 2^12.
    for i, n_resp in enumerate((8, 10, 12)):
        responses = tuple(f"r{j}" for j in range(n_resp))
        domain = sl.Domain((0, 1, 2))
        kernel = make_random_kernel(rng, domain, 2, responses)
        prior = sl.product_prior(make_element_dist(rng, domain.elements), 2)
        worlds.append((f"wide-{n_resp}", sl.build_world(domain, 2, prior, kernel)))
    return tuple(worlds)


@pytest.fixture(scope="session")
def world_zoo():
    return suite_worlds()
