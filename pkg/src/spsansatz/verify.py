"""Randomized cross-checks of the closed-form kernels against the dense oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .gradients import energy_and_gradient
from .hamiltonian import (
    CouplingGraph,
    LongRangeSpec,
    RandomGraphSpec,
    build_chain_1d,
    build_cubic_3d,
    build_long_range,
    build_random_graph,
    energy,
)
from .observables import Bipartition, expect_sigma_x, expect_sigma_z, expect_zz, renyi2_entropy
from .oracle import (
    dense_energy,
    dense_expect_x,
    dense_expect_z,
    dense_expect_zz,
    dense_renyi2,
    expand_statevector,
    finite_difference_gradient,
)
from .rng import make_rng
from .state import ParameterDomain, SpsState, compute_overlap_matrix, draw_parameters

OBSERVABLE_TOL = 1e-10
GRADIENT_REL_TOL = 1e-6
GRADIENT_ABS_TOL = 1e-9
FD_STEP = 1e-5
KINDS = ("chain", "cubic", "long-range", "random")


@dataclass
class CheckResult:
    name: str
    tolerance: str
    max_deviation: float = 0.0
    count: int = 0
    failures: int = 0

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def record(self, deviation: float, ok: bool):
        self.count += 1
        self.max_deviation = max(self.max_deviation, deviation)
        if not ok:
            self.failures += 1

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name:<10} n={self.count:<5} max_dev={self.max_deviation:.3e} tol={self.tolerance}"


@dataclass
class VerifyReport:
    checks: dict[str, CheckResult] = field(default_factory=dict)

    def check(self, name: str, tolerance: str) -> CheckResult:
        return self.checks.setdefault(name, CheckResult(name, tolerance))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks.values()]


def random_graph_instance(rng: np.random.Generator, kind: str, max_L: int) -> CouplingGraph:
    """A small random coupling graph of the given geometry with at most ``max_L`` sites."""
    if max_L < 2:
        raise ConfigError("graphs need max_L >= 2")
    J, h_x, h_z = rng.uniform(-2.0, 2.0, size=3)
    if kind == "chain":
        return build_chain_1d(int(rng.integers(2, max_L + 1)), J, h_x, h_z)
    if kind == "cubic":
        while True:
            dims = rng.integers(1, 4, size=3)
            if 2 <= int(np.prod(dims)) <= max_L:
                return build_cubic_3d(*(int(d) for d in dims), J, h_x, h_z)
    if kind == "long-range":
        alpha = float(rng.uniform(0.0, 3.0))
        return build_long_range(LongRangeSpec(J, alpha, int(rng.integers(2, max_L + 1))), h_x, h_z)
    if kind == "random":
        spec = RandomGraphSpec(int(rng.integers(2, max_L + 1)), float(rng.uniform(0.2, 0.9)), J,
                               int(rng.integers(0, 2**31)))
        return build_random_graph(spec, h_x, h_z)
    raise ValueError(f"unknown geometry {kind!r}")


def random_state(rng: np.random.Generator, L: int, max_M: int) -> SpsState:
    M = int(rng.integers(1, max_M + 1))
    return SpsState(*draw_parameters(rng, L, M, ParameterDomain()))


def check_observables(state: SpsState, rng: np.random.Generator, report: VerifyReport):
    """Norm, local Paulis, a two-site correlator and S2 against the dense expansion."""
    dense = expand_statevector(state)
    pm = compute_overlap_matrix(state)
    L = state.L
    tol = f"{OBSERVABLE_TOL:g} abs"

    def record(name, a, b):
        dev = abs(float(a) - float(b))
        report.check(name, tol).record(dev, dev <= OBSERVABLE_TOL)

    record("norm", pm.norm, dense.norm_sq())
    k = int(rng.integers(0, L))
    record("sigma_x", expect_sigma_x(pm, k), dense_expect_x(dense, k))
    record("sigma_z", expect_sigma_z(pm, k), dense_expect_z(dense, k))
    if L >= 2:
        a, b = (int(v) for v in rng.choice(L, size=2, replace=False))
        record("zz", expect_zz(pm, a, b), dense_expect_zz(dense, a, b))
        size = int(rng.integers(1, L))
        part = Bipartition.from_region(L, rng.choice(L, size=size, replace=False))
        record("renyi2", renyi2_entropy(pm, part), dense_renyi2(dense, part))


def gradient_deviation(state: SpsState, graph: CouplingGraph, perturb: float = 0.0):
    """``(max |analytic - fd|, worst ratio to the allowed deviation, energy deviation)``.

    The analytic side is the compiled kernel; the finite differences and the
    dense energy go through independent code paths.
    """
    value, grad = energy_and_gradient(state, graph)
    analytic = grad.flat() + perturb
    fd = finite_difference_gradient(lambda s: energy(s, graph), state, h=FD_STEP).flat()
    dev = np.abs(analytic - fd)
    allowed = np.maximum(GRADIENT_REL_TOL * np.abs(fd), GRADIENT_ABS_TOL)
    e_dev = abs(value - dense_energy(expand_statevector(state), graph))
    return float(dev.max()), float(np.max(dev / allowed)), e_dev


def check_gradient(state: SpsState, graph: CouplingGraph, report: VerifyReport, perturb: float = 0.0):
    dev, ratio, e_dev = gradient_deviation(state, graph, perturb)
    report.check("energy", f"{OBSERVABLE_TOL:g} abs").record(e_dev, e_dev <= OBSERVABLE_TOL)
    report.check("gradient", f"max({GRADIENT_REL_TOL:g} rel, {GRADIENT_ABS_TOL:g} abs)").record(dev, ratio <= 1.0)


def run_verification(cases: int = 100, max_L: int = 10, max_M: int = 8, seed: int = 0,
                     perturb_gradient: float = 0.0) -> VerifyReport:
    """Random cases cycling through the four geometries.

    Each case draws a graph, then a state on its sites, and runs both the
    observable and the gradient checks.  ``perturb_gradient`` adds a constant
    to every analytic gradient entry, a negative control that must fail.
    """
    if cases < 1:
        raise ConfigError("cases must be >= 1")
    if max_L < 2:
        raise ConfigError("max_L must be >= 2")
    if max_M < 1:
        raise ConfigError("max_M must be >= 1")
    if not math.isfinite(perturb_gradient):
        raise ConfigError("perturb_gradient must be finite")
    rng = make_rng(seed, "verify")
    report = VerifyReport()
    for i in range(cases):
        graph = random_graph_instance(rng, KINDS[i % len(KINDS)], max_L)
        state = random_state(rng, graph.L, max_M)
        check_observables(state, rng, report)
        check_gradient(state, graph, report, perturb_gradient)
    return report
