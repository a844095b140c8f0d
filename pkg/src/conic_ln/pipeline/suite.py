"""
Acceptance suite: closed-form anchors, mesh convergence, brute-force and
manufactured-solution checks, and end-to-end checks of the configured run.

Each check yields SuiteRow entries; a check that raises a ConicLNError is
recorded as failed with the error as note instead of stopping the suite.
"""

import itertools
import logging
import math
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Sequence, Tuple

import numpy as np

from ..constants import structural_constants
from ..errors import ConicLNError, PreconditionError
from ..geometry.angular_grid import build_grid
from ..geometry.profile import BoundaryProfile, solve_profile
from ..spectral.index_set import build_index_chain, membership
from ..spectral.spectrum import compute_spectrum, eigen_decay_slope
from ..cylinder.fields import CylinderField, WeightedNormSpec, build_cylinder_grid, weighted_norm
from ..cylinder.inverse import invert_cyl_operator
from ..cylinder.mode_ode import solve_mode_ode
from ..cylinder.operator import apply_cyl_operator
from ..expansion.algebra import linear_symbol, nonlinear_residual_expansion
from ..expansion.assumptions import assumption_check
from ..expansion.builder import correct_to_order, extend_free_data, free_data_modes
from ..expansion.terms import Expansion
from ..contraction.decay import default_window
from ..contraction.picard import assemble_solution, picard_solve
from ..contraction.residual import expansion_residual
from .base.base_stage import RunContext

logger = logging.getLogger(__name__)

REFINEMENTS = (500, 1000, 2000)
CAPS = (math.pi / 3.0, math.pi / 2.0, 2.0 * math.pi / 3.0)
BRUTE_FORCE_LISTS = 1000
MANUFACTURED_SAMPLES = 10
# manufactured solutions decay this much faster than the weight rate
MANUFACTURED_GAP = 1.0
MANUFACTURED_LENGTH = 16.0
SYMBOL_RHO_MIN = 0.05
SYMBOL_TAYLOR_ORDER = 12
STEERING_TOLERANCE = 0.05


@dataclass(frozen=True)
class SuiteRow:
    criterion: int
    name: str
    value: float
    threshold: str
    passed: bool
    note: str = ""

    def as_row(self) -> Tuple:
        return (self.criterion, self.name, self.value, self.threshold, "pass" if self.passed else "FAIL", self.note)


HEADER = ["criterion", "check", "value", "threshold", "result", "note"]


@dataclass(frozen=True)
class SuiteResult:
    rows: Tuple[SuiteRow, ...]

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def failed(self) -> List[str]:
        return [f"{row.criterion}:{row.name}" for row in self.rows if not row.passed]

    def to_dict(self) -> Dict:
        return {
            "passed": self.passed,
            "rows": [dict(zip(HEADER, row.as_row())) for row in self.rows],
        }


class _Profiles:
    """Memo of solved profiles keyed by (n, phi_max, node_count)."""

    def __init__(self, context: RunContext):
        self.context = context
        self._solved: Dict[Tuple[int, float, int], BoundaryProfile] = {}

    def get(self, n: int, phi_max: float, node_count: int) -> BoundaryProfile:
        key = (n, phi_max, node_count)
        if key not in self._solved:
            cfg = self.context.config
            grid = build_grid(n, phi_max, node_count, cfg.grading_exponent)
            self._solved[key] = solve_profile(grid, cfg.newton)
        return self._solved[key]


def observed_order(errors: Sequence[float]) -> float:
    """Smallest log2 error ratio across consecutive mesh doublings."""
    orders = [math.log2(a / b) for a, b in zip(errors, errors[1:]) if a > 0 and b > 0]
    return min(orders) if orders else math.inf


def richardson(values: Sequence[float]) -> float:
    """Extrapolate three values on doubling meshes with the observed order."""
    a, b, c = values
    if (a - b) * (b - c) <= 0 or b == c:
        return c
    ratio = (a - b) / (b - c)
    if ratio <= 1.0:
        return c
    return c + (c - b) / (ratio - 1.0)


def check_constants(context: RunContext, profiles: _Profiles) -> Iterator[SuiteRow]:
    for n in (3, 4, 5, 6):
        const = structural_constants(n)
        exact = (
            const.s * (const.s - 1.0) == const.kappa
            and const.s == (n + 2) / 2.0
            and const.beta == (n - 2) / 2.0
            and const.S == (n - 2) / 2.0
        )
        yield SuiteRow(1, f"constants_n{n}", const.s * (const.s - 1.0) - const.kappa, "== 0", exact)


def check_hemisphere_profile(context: RunContext, profiles: _Profiles) -> Iterator[SuiteRow]:
    for n in (3, 4):
        errors = []
        for count in REFINEMENTS:
            profile = profiles.get(n, math.pi / 2.0, count)
            errors.append(float(np.max(np.abs(profile.rho.values - np.cos(profile.grid.nodes)))))
        yield SuiteRow(2, f"hemisphere_sup_error_n{n}", errors[-1], "<= 1e-6", errors[-1] <= 1e-6)
        order = observed_order(errors)
        yield SuiteRow(2, f"hemisphere_order_n{n}", order, ">= 1.8", order >= 1.8)


def check_boundary_slopes(context: RunContext, profiles: _Profiles) -> Iterator[SuiteRow]:
    n = context.config.n
    for phi_max in CAPS:
        slope = profiles.get(n, phi_max, REFINEMENTS[-1]).boundary_slope
        yield SuiteRow(
            3, f"boundary_slope_cap{phi_max:.4f}", slope, "|.| = 1 +- 1e-3", abs(abs(slope) - 1.0) <= 1e-3
        )


def check_indicial_root(context: RunContext, profiles: _Profiles) -> Iterator[SuiteRow]:
    for n in (3, 4):
        spectra = [compute_spectrum(profiles.get(n, math.pi / 2.0, count), 2) for count in REFINEMENTS]
        gamma = richardson([float(s.gammas[0]) for s in spectra])
        yield SuiteRow(4, f"gamma1_n{n}", gamma, f"{n} +- 1e-3", abs(gamma - n) <= 1e-3)
        slope = eigen_decay_slope(spectra[-1], 1)
        s = structural_constants(n).s
        yield SuiteRow(4, f"eigen_decay_slope_n{n}", slope, f"{s} +- 0.05", abs(slope - s) <= 0.05)


def brute_force_chain(gammas: Sequence[float], cutoff: float, eps: float) -> Tuple[List[Tuple], int]:
    """Exhaustive enumeration of the index set as (value, kind, resonant, slots) tuples."""
    limit = cutoff + eps * max(1.0, cutoff)
    bounds = [int(math.floor(limit / g)) for g in gammas]
    found = []
    for m in itertools.product(*(range(b + 1) for b in bounds)):
        value = sum(mi * g for mi, g in zip(m, gammas))
        if any(m) and value <= limit:
            found.append((value, m))
    found.sort()
    groups: List[List] = []
    for item in found:
        if groups and item[0] - groups[-1][-1][0] <= eps * max(1.0, item[0]):
            groups[-1].append(item)
        else:
            groups.append([item])
    entries = []
    for group in groups:
        singles = [(v, m) for v, m in group if sum(m) == 1]
        has_combo = any(sum(m) >= 2 for _, m in group)
        kind = "both" if singles and has_combo else ("single" if singles else "combo")
        value = singles[0][0] if singles else group[0][0]
        if value > limit:
            continue
        slots = tuple(sorted(m.index(1) + 1 for _, m in singles))
        entries.append((value, kind, kind == "both", slots))
    first = 2.0 * gammas[0]
    k1 = sum(1 for g in gammas if g < first - eps * max(1.0, first))
    return entries, k1


def random_exponents(rng: np.random.Generator) -> Tuple[List[float], float]:
    size = int(rng.integers(1, 5))
    if rng.random() < 0.5:
        # half-integer lattice: plenty of exact resonances
        gammas = sorted(float(x) / 2.0 for x in rng.integers(1, 9, size=size))
    else:
        gammas = sorted(float(x) for x in rng.uniform(0.5, 4.0, size=size))
    cutoff = gammas[0] * float(rng.uniform(2.0, 4.0))
    return gammas, cutoff


def check_index_set(context: RunContext, profiles: _Profiles) -> Iterator[SuiteRow]:
    cfg = context.config
    rng = np.random.default_rng(cfg.seed)
    mismatches = 0
    for _ in range(BRUTE_FORCE_LISTS):
        gammas, cutoff = random_exponents(rng)
        chain = build_index_chain(gammas, cutoff, cfg.epsilon_res)
        expected, k1 = brute_force_chain(gammas, cutoff, cfg.epsilon_res)
        got = [(e.value, e.kind, e.resonant, e.slots) for e in chain.entries]
        same = (
            chain.k1 == k1
            and len(got) == len(expected)
            and all(
                abs(a[0] - b[0]) <= 1e-9 and a[1:] == b[1:] for a, b in zip(got, expected)
            )
        )
        if not same:
            mismatches += 1
            logger.warning("index set mismatch for gammas=%s cutoff=%.6g", gammas, cutoff)
    yield SuiteRow(5, "index_set_brute_force", float(mismatches), "== 0", mismatches == 0)


def check_mode_kernel(context: RunContext, profiles: _Profiles) -> Iterator[SuiteRow]:
    t0 = context.config.t0
    t = np.linspace(t0, t0 + 10.0, 1001)
    v = solve_mode_ode(1.0, np.exp(-2.0 * t), t)
    exact = np.exp(-2.0 * t) / 3.0
    error = float(np.max(np.abs(v - exact) / exact))
    yield SuiteRow(6, "mode_kernel", error, "<= 1e-8", error <= 1e-8)


def _admissible(chain, value: float, margin: float) -> bool:
    if value > chain.cutoff:
        return True
    return membership(chain, value).distance > margin


def manufactured_solution(grid, profile: BoundaryProfile, rate: float) -> CylinderField:
    """(1 - e^{-(t - t0)})^2 e^{-rate t} rho^s: vanishing value and slope at t0."""
    t = grid.t_nodes
    time_factor = (1.0 - np.exp(-(t - grid.t0))) ** 2 * np.exp(-rate * t)
    return CylinderField(grid, np.outer(time_factor, profile.rho.values ** profile.constants.s))


def _superposition_gap(spectrum, chain, first, second, tol: float) -> float:
    """Relative failure of linearity of the inverse at the smaller of two weights."""
    mu = min(first[0], second[0])
    together = invert_cyl_operator(spectrum, chain, first[1] + second[1], mu, tol)
    apart = invert_cyl_operator(spectrum, chain, first[1], mu, tol) + invert_cyl_operator(
        spectrum, chain, second[1], mu, tol
    )
    spec = WeightedNormSpec(mu, spectrum.profile.constants.s, 0)
    return weighted_norm(together - apart, spec, spectrum.profile) / weighted_norm(
        together, spec, spectrum.profile
    )


def check_manufactured(context: RunContext, profiles: _Profiles) -> Iterator[SuiteRow]:
    cfg = context.config
    spectrum = context.results["spectrum"]
    chain = context.results["indexset"]
    profile = spectrum.profile
    rng = np.random.default_rng(cfg.seed + 1)
    gammas = spectrum.gammas
    low, high = float(gammas[0]) + 0.1, min(float(gammas[-1]), chain.cutoff) - 0.1
    grid = build_cylinder_grid(profile.grid, cfg.t0, cfg.t0 + MANUFACTURED_LENGTH, cfg.dt)
    spec_tol = cfg.tolerance("orthogonality")
    worst, found, superposition = 0.0, 0, 0.0
    previous = None
    for _ in range(100 * MANUFACTURED_SAMPLES):
        if found == MANUFACTURED_SAMPLES or high <= low:
            break
        mu = float(rng.uniform(low, high))
        rate = mu + MANUFACTURED_GAP
        if not (_admissible(chain, mu, 0.05) and _admissible(chain, rate, 0.05)):
            continue
        found += 1
        exact = manufactured_solution(grid, profile, rate)
        forcing = apply_cyl_operator(spectrum.operator, exact)
        recovered = invert_cyl_operator(spectrum, chain, forcing, mu, spec_tol)
        norm = WeightedNormSpec(mu, profile.constants.s, 0)
        error = weighted_norm(recovered - exact, norm, profile) / weighted_norm(exact, norm, profile)
        worst = max(worst, error)
        if previous is not None:
            superposition = max(superposition, _superposition_gap(spectrum, chain, previous, (mu, forcing), spec_tol))
        previous = (mu, forcing)
    yield SuiteRow(7, "manufactured_samples", float(found), f"== {MANUFACTURED_SAMPLES}", found == MANUFACTURED_SAMPLES)
    yield SuiteRow(7, "manufactured_recovery", worst, "<= 1e-4", worst <= 1e-4)
    yield SuiteRow(7, "superposition", superposition, "<= 1e-9", superposition <= 1e-9)


def symbol_mismatch(expansion: Expansion, spectrum, t: float) -> float:
    """Relative gap between the symbolic and the pointwise residual at one time."""
    profile = expansion.profile
    top = SYMBOL_TAYLOR_ORDER * min(expansion.rates()) + 0.5
    nonlinear, _ = nonlinear_residual_expansion(expansion, top, SYMBOL_TAYLOR_ORDER)
    symbolic = Expansion(
        tuple(linear_symbol(spectrum, expansion.terms, expansion.tolerance)) + nonlinear.terms,
        profile,
        tolerance=expansion.tolerance,
    ).omega(t)
    pointwise = expansion_residual(expansion, np.array([t]), spectrum.operator)[0]
    columns = profile.rho.values > SYMBOL_RHO_MIN
    scale = float(np.max(np.abs(pointwise[columns])))
    return float(np.max(np.abs(symbolic - pointwise)[columns])) / scale


def check_cancellation(context: RunContext, profiles: _Profiles) -> Iterator[SuiteRow]:
    cfg = context.config
    profile = profiles.get(cfg.n, CAPS[0], cfg.node_count)
    spectrum = compute_spectrum(profile, cfg.eigen_count)
    gamma1 = float(spectrum.gammas[0])
    chain = build_index_chain(spectrum.gammas, 3.0 * gamma1 + 0.5, cfg.epsilon_res)
    mu = 2.0 * gamma1 + 0.1
    while not _admissible(chain, mu, 0.05):
        mu += 0.05
    c = [0.1] + [0.0] * (chain.k1 - 1)
    free = free_data_modes(spectrum, chain, c)
    corrected = correct_to_order(free, chain, spectrum, mu, t0=cfg.t0)
    report = assumption_check(corrected, profile, mu, (cfg.t0, cfg.t0 + 8.0), spectrum.operator)
    rate = report.residual_rate if report.residual_rate is not None else math.inf
    yield SuiteRow(8, "residual_decay_rate", rate, f">= {mu - 0.05:.6g}", rate >= mu - 0.05)
    mismatch = symbol_mismatch(free, spectrum, cfg.t0 + 1.0)
    yield SuiteRow(8, "symbol_pointwise", mismatch, "<= 1e-6", mismatch <= 1e-6)


def check_contraction(context: RunContext, profiles: _Profiles) -> Iterator[SuiteRow]:
    from .stages.verify_stage import verification_checks

    checks = verification_checks(context).checks
    yield SuiteRow(9, "contraction_factor", checks["contraction"]["lambda"], "<= 0.9", checks["contraction"]["passed"])
    yield SuiteRow(9, "final_residual", checks["residual"]["relative_residual"], "<= tolerance", checks["residual"]["passed"])
    yield SuiteRow(9, "decay_rate", checks["decay_rate"]["rate"], ">= mu - 0.05", checks["decay_rate"]["passed"])
    yield SuiteRow(9, "rho_slope", checks["rho_slope"]["slope"], "s +- 0.1", checks["rho_slope"]["passed"])
    yield SuiteRow(10, "oracle", checks["oracle"]["relative_difference"], "<= 1e-3", checks["oracle"]["passed"])


def check_steering(context: RunContext, profiles: _Profiles) -> Iterator[SuiteRow]:
    from .stages.expand_stage import free_data, resolve_mu

    cfg = context.config
    spectrum = context.results["spectrum"]
    chain = context.results["indexset"]
    solved = context.results["solve"]
    mu = resolve_mu(context)
    if not cfg.c or cfg.c[0] == 0.0:
        raise PreconditionError("free-data steering needs a nonzero c_1")
    halved = free_data([0.5 * cfg.c[0]] + list(cfg.c[1:]), chain)
    vhat = free_data_modes(spectrum, chain, halved)
    if cfg.c_higher:
        vhat = extend_free_data(vhat, spectrum, chain, cfg.c_higher)
    vhat = correct_to_order(vhat, chain, spectrum, mu, cfg.taylor_order, cfg.t0)
    w, _ = picard_solve(
        vhat, spectrum, chain, mu, t0=solved.t0_used, opts=cfg.picard, dt=cfg.dt, t_max=solved.T
    )
    other = assemble_solution(vhat, w)
    if not other.grid.same_as(solved.v.grid):
        raise PreconditionError("steering run escalated t0; the two solutions live on different cylinders")
    t = solved.v.grid.t_nodes
    leading = ((solved.v.values - other.values) * spectrum.operator.mass) @ spectrum.eigenfield(1)
    expected = 0.5 * cfg.c[0] * np.exp(-float(spectrum.gammas[0]) * t)
    start, stop = default_window(solved.t0_used, solved.T)
    inside = (t >= start) & (t <= stop)
    deviation = float(np.max(np.abs(leading[inside] / expected[inside] - 1.0)))
    yield SuiteRow(11, "free_data_steering", deviation, "<= 0.05", deviation <= STEERING_TOLERANCE)


def check_determinism(context: RunContext, profiles: _Profiles) -> Iterator[SuiteRow]:
    from .manager import PipelineManager

    outputs = []
    with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
        for root in (first, second):
            PipelineManager(context.config, Path(root), cache_dir=None).run_command("indexset")
            outputs.append({p.name: p.read_bytes() for p in sorted(Path(root).iterdir()) if p.is_file()})
    same = outputs[0] == outputs[1] and bool(outputs[0])
    yield SuiteRow(12, "byte_identical_artifacts", float(len(outputs[0])), "identical", same)


CHECKS: Tuple[Tuple[int, str, Callable[[RunContext, _Profiles], Iterator[SuiteRow]]], ...] = (
    (1, "constants", check_constants),
    (2, "hemisphere_profile", check_hemisphere_profile),
    (3, "boundary_slopes", check_boundary_slopes),
    (4, "indicial_root", check_indicial_root),
    (5, "index_set", check_index_set),
    (6, "mode_kernel", check_mode_kernel),
    (7, "manufactured", check_manufactured),
    (8, "cancellation", check_cancellation),
    (9, "contraction", check_contraction),
    (11, "steering", check_steering),
    (12, "determinism", check_determinism),
)


def run_suite(context: RunContext) -> SuiteResult:
    profiles = _Profiles(context)
    rows: List[SuiteRow] = []
    for criterion, name, check in CHECKS:
        logger.info("suite: criterion %d (%s)", criterion, name)
        try:
            rows.extend(check(context, profiles))
        except ConicLNError as e:
            logger.warning("suite check %s failed: %s", name, e)
            rows.append(SuiteRow(criterion, name, math.nan, "-", False, f"{type(e).__name__}: {e}"))
    return SuiteResult(tuple(rows))
