"""Scenario configuration: loading, validation, construction and execution.

A scenario is a JSON document (see ``scenarios/schema.json``) naming a fiber
algebra, a gauge source, an optional symmetry, a metric and Hamiltonian, and
the checks to run.  Builtin scenarios ship next to the schema.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np
import scipy

from . import __version__
from .bundle import (
    ConnectionPair,
    SectionFamily,
    averaged_connection,
    check_ico,
    check_lpvh1,
    check_lpvh2,
    check_lpvh3,
    check_structure_field,
    generalized_wong_rhs,
    induced_poisson_structure,
    solve_ae_so3,
)
from .dynamics import (
    ConservationReport,
    Metric,
    Trajectory,
    hamiltonian_rhs,
    integrate,
    kinetic_hamiltonian,
    matrix_rhs,
    monitor,
    wong_rhs,
)
from .errors import ConfigError, DimensionError, InvalidActionError
from .exprlang import ExprError, field_phase, field_q, field_qy, parse
from .gauge import (
    GaugeForm,
    GaugePoissonStructure,
    LinearGaugePotential,
    PhaseFunction,
    check_antisymmetry,
    check_jacobi,
    check_rank,
    join_state,
    split_state,
)
from .lie import (
    FiberField,
    LieAlgebraStructure,
    PoissonFiber,
    abelian,
    check_structure_constants,
    direct_sum,
    is_casimir,
    so3,
)
from .models import (
    generic_so3_potential,
    planar_section,
    radial_section,
    section_frame,
    spherical_section,
    wu_yang_gauge_form,
    wu_yang_potential,
)
from .reports import CheckReport, combine
from .symmetry import (
    AveragedGaugeForm,
    FiberwiseAction,
    SectionField,
    check_ac,
    check_commutators,
    check_ic1,
    check_invariance,
    coadjoint_so3_action,
    first_integral_check,
    general_average_gauge_form,
    haar_average_constant,
    momentum_circle_action,
    random_base_points,
    random_group_element,
    section_circle_action,
    so3_frame_action,
    so3_section_closed_form,
    torus_action,
)

DEFAULT_SAMPLES = 10
DEFAULT_GROUP_SAMPLES = 20
DEFAULT_DOMAIN_RADIUS = 1e-6
DEFAULT_CONSERVATION_TOL = 1e-8
CLOSED_FORM_TOL = 1e-10
CHART_CLOSED_FORM_TOL = 1e-8
CONVERGENCE_TOL = 1e-10
SPECIALIZATION_TOL = 1e-8
MATRIX_PATH_TOL = 1e-9

_SCENARIO_PKG = "gaugepoisson.scenarios"
_SCHEMA_FILE = "schema.json"

_CHECK_NEEDS = {
    "ic1": "symmetry",
    "commutators": "symmetry",
    "ac": "symmetry",
    "invariance": "symmetry",
    "first-integrals": "symmetry",
    "haar-normalization": "symmetry",
    "closed-form": "closed_form",
    "convergence": "averaged",
    "ico": "symmetry",
}


# --- loading --------------------------------------------------------------------


def _scenario_dir():
    return resources.files(_SCENARIO_PKG)


def schema() -> dict:
    return json.loads(_scenario_dir().joinpath(_SCHEMA_FILE).read_text(encoding="utf-8"))


def builtin_names() -> list[str]:
    names = [p.name[:-5] for p in _scenario_dir().iterdir() if p.name.endswith(".json") and p.name != _SCHEMA_FILE]
    return sorted(names)


def resolve_config(arg: str):
    """A filesystem path, or the name of a builtin scenario (with or without .json)."""
    p = Path(arg)
    if p.is_file():
        return p
    name = p.name[:-5] if p.name.endswith(".json") else p.name
    if p.parent == Path(".") and name in builtin_names():
        return _scenario_dir().joinpath(f"{name}.json")
    raise ConfigError(f"config file not found: {arg}")


def load_config(arg: str) -> dict:
    path = resolve_config(arg)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {arg}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {arg}: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config does not match the schema at {where}: {exc.message}") from exc


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox stream; identical seeds give identical samples on every platform."""
    return np.random.Generator(np.random.Philox(int(seed)))


# --- construction ----------------------------------------------------------------


@dataclass
class Scenario:
    config: dict
    name: str
    m: int
    n: int
    algebra: LieAlgebraStructure
    fiber: PoissonFiber
    structure: GaugePoissonStructure
    potential: LinearGaugePotential | None
    metric: Metric
    hamiltonian: PhaseFunction
    kinetic: bool
    action: FiberwiseAction | None = None
    averaged: AveragedGaugeForm | None = None
    closed_form: GaugeForm | None = None
    connection: ConnectionPair | None = None
    family: SectionFamily | None = None
    domain_radius: float | None = None
    monitors: dict = field(default_factory=dict)
    extra_monitors: dict = field(default_factory=dict)

    @property
    def dims(self) -> tuple[int, int]:
        return self.m, self.n

    def inside(self, x) -> bool:
        if self.domain_radius is None:
            return True
        return bool(np.linalg.norm(x[self.m : 2 * self.m]) >= self.domain_radius)


def _expr(src, dims, what: str, allow=("q", "p", "y")):
    if isinstance(src, (int, float)):
        src = repr(float(src))
    try:
        e = parse(src, dims, allow_t=False)
    except ExprError as exc:
        raise ConfigError(f"{what}: {exc}") from exc
    bad = {k for k, _ in e.variables()} - set(allow)
    if bad:
        raise ConfigError(f"{what}: variables {sorted(bad)} are not allowed here")
    return e


def _build_algebra(spec: dict) -> LieAlgebraStructure:
    kind = spec["type"]
    if kind == "so3":
        k = spec.get("copies", 1)
        return so3() if k == 1 else direct_sum(*[so3()] * k)
    if kind == "abelian":
        if "dim" not in spec:
            raise ConfigError("abelian fiber needs 'dim'")
        return abelian(spec["dim"])
    try:
        L = LieAlgebraStructure(np.array(spec.get("structure_constants"), dtype=float), "custom")
    except (ValueError, DimensionError) as exc:
        raise ConfigError(f"custom structure constants: {exc}") from exc
    rep = check_structure_constants(L)
    if not rep.passed:
        raise ConfigError(f"custom structure constants fail antisymmetry/Jacobi (residual {rep.residual:.3g})")
    return L


_BUILTIN_SECTIONS = {"radial": radial_section, "planar": planar_section, "spherical": spherical_section}


def _build_section(spec, m: int, n: int) -> SectionField:
    if isinstance(spec, str):
        spec = {"builtin": spec}
    if "builtin" in spec:
        if m != 3:
            raise ConfigError(f"builtin section {spec['builtin']!r} needs base_dim 3")
        s = _BUILTIN_SECTIONS[spec["builtin"]]()
    elif "constant" in spec:
        s = SectionField.constant(spec["constant"], m)
    else:
        exprs = [_expr(c, (m, n), "section component", allow=("q",)) for c in spec["components"]]
        fns = [field_q(e) for e in exprs]
        s = SectionField(len(fns), m, lambda q: np.array([f(q) for f in fns]),
                         name="(" + ", ".join(spec["components"]) + ")")
    if "block" in spec:
        offset = spec["block"] * s.n
        if offset + s.n > n:
            raise ConfigError(f"section block {spec['block']} does not fit a fiber of dimension {n}")
        s = s.padded(n, offset)
    if s.n != n:
        raise ConfigError(f"section has {s.n} components but the fiber has dimension {n}")
    return s


def _build_action(spec: dict, fiber: PoissonFiber, m: int, n: int) -> FiberwiseAction:
    group = spec["group"]
    try:
        if group == "circle":
            if "momentum" in spec:
                e = _expr(spec["momentum"], (m, n), "momentum map", allow=("q", "y"))
                return momentum_circle_action(FiberField(field_qy(e), name=spec["momentum"]), fiber, m)
            if "section" not in spec:
                raise ConfigError("circle symmetry needs 'section' or 'momentum'")
            return section_circle_action(_build_section(spec["section"], m, n), fiber)
        if group == "torus":
            if "sections" not in spec:
                raise ConfigError("torus symmetry needs 'sections'")
            return torus_action([_build_section(s, m, n) for s in spec["sections"]], fiber)
        if spec.get("coadjoint"):
            if n != 3:
                raise ConfigError("the coadjoint SO(3) action needs an so3 fiber")
            return coadjoint_so3_action(m, fiber)
        if "frame" in spec:
            return so3_frame_action(section_frame(_build_section(spec["frame"], m, n)), fiber)
        if "sections" in spec and len(spec["sections"]) == 3:
            return so3_frame_action([_build_section(s, m, n) for s in spec["sections"]], fiber)
        raise ConfigError("so3 symmetry needs 'frame', 'coadjoint' or three 'sections'")
    except InvalidActionError as exc:
        raise ConfigError(f"invalid symmetry: {exc}") from exc


def _build_metric(spec: dict | None, m: int, n: int) -> Metric:
    spec = spec or {"type": "identity"}
    kind = spec["type"]
    if kind == "identity":
        return Metric.identity(m)
    entries = spec.get("entries")
    if entries is None:
        raise ConfigError(f"{kind} metric needs 'entries'")
    if kind == "diagonal":
        if len(entries) != m:
            raise ConfigError(f"diagonal metric needs {m} entries")
        rows = [[entries[i] if i == j else 0.0 for j in range(m)] for i in range(m)]
    else:
        rows = entries
        if len(rows) != m or any(not isinstance(r, list) or len(r) != m for r in rows):
            raise ConfigError(f"matrix metric needs {m} rows of {m} entries")
    exprs = [[_expr(v, (m, n), "metric entry", allow=("q",)) for v in row] for row in rows]
    constant = all(not e.variables() for row in exprs for e in row)
    fns = [[field_q(e) for e in row] for row in exprs]

    def g(q):
        return np.array([[f(q) for f in row] for row in fns])

    G = Metric(m, g, constant=constant, name=kind)
    try:
        G.inverse(np.ones(m))
    except Exception as exc:
        raise ConfigError(f"metric is singular: {exc}") from exc
    return G


def _zero_potential(m: int, n: int) -> LinearGaugePotential:
    return LinearGaugePotential(m, n, lambda q: np.zeros((n, m)), lambda q: np.zeros((n, m, m)), name="zero")


def _closed_form(kind: str | None, action, m: int, n: int) -> GaugeForm | None:
    if kind in (None, "none"):
        return None
    if kind == "wu-yang":
        if (m, n) != (3, 3):
            raise ConfigError("the wu-yang closed form needs base_dim 3 and an so3 fiber")
        return wu_yang_gauge_form()
    if action is None or action.sections is None or action.kind == "so3":
        raise ConfigError("the section closed form needs a circle or torus section symmetry")
    blocks = []
    for s in action.sections:
        nz = [k for k in range(0, n, 3) if np.any(s(np.full(m, 0.7))[k : k + 3])]
        off = nz[0] if nz else 0
        inner = SectionField(3, m, lambda q, s=s, off=off: s(q)[off : off + 3],
                             lambda q, s=s, off=off: s.jac(q)[off : off + 3], s.domain, s.name)
        blocks.append((off, so3_section_closed_form(inner)))

    def value(q, y):
        return sum(cf.value(q, y[off : off + 3]) for off, cf in blocks)

    def dy(q, y):
        out = np.zeros((m, n))
        for off, cf in blocks:
            out[:, off : off + 3] += cf.dy(q, y[off : off + 3])
        return out

    return GaugeForm(m, n, value, None, dy, action.sections[0].domain, name="closed-form")


def build_scenario(cfg: dict) -> Scenario:
    validate_config(cfg)
    m = cfg["base_dim"]
    L = _build_algebra(cfg["fiber"])
    n = L.n
    fiber = PoissonFiber.lie_poisson(L)
    dims = (m, n)

    action = _build_action(cfg["symmetry"], fiber, m, n) if "symmetry" in cfg else None

    gspec = cfg["gauge"]
    source = gspec["source"]
    potential = None
    averaged = None
    connection = None
    family = None
    closed = None
    sign = float(cfg.get("field_strength_sign", 1))
    if source == "zero":
        potential = _zero_potential(m, n)
        gauge = GaugeForm.zero(m, n)
    elif source == "wu-yang":
        if (m, n) != (3, 3):
            raise ConfigError("the wu-yang gauge needs base_dim 3 and an so3 fiber")
        gauge = wu_yang_gauge_form()
        potential = wu_yang_potential()
        closed = gauge
    elif source == "linear":
        if "potential" in gspec:
            if (m, n) != (3, 3):
                raise ConfigError("builtin potentials need base_dim 3 and an so3 fiber")
            potential = wu_yang_potential() if gspec["potential"] == "wu-yang" else generic_so3_potential()
        elif "coefficients" in gspec:
            rows = gspec["coefficients"]
            if len(rows) != n or any(len(r) != m for r in rows):
                raise ConfigError(f"linear coefficients must be {n} rows of {m} expressions")
            fns = [[field_q(_expr(v, dims, "potential coefficient", allow=("q",))) for v in r] for r in rows]
            potential = LinearGaugePotential(m, n, lambda q: np.array([[f(q) for f in r] for r in fns]),
                                             name="linear")
        else:
            raise ConfigError("linear gauge needs 'potential' or 'coefficients'")
        gauge = potential.gauge_form()
    elif source == "averaged":
        if action is None:
            raise ConfigError("an averaged gauge needs a symmetry block")
        averaged = general_average_gauge_form(action, gspec.get("normalize", True), gspec.get("nodes"),
                                              gspec.get("ray_nodes"))
        gauge = averaged.form
        potential = averaged.potential
        closed = _closed_form(gspec.get("closed_form"), action, m, n)
    else:  # chart
        kind = gspec.get("connection", "flat")
        if kind == "flat":
            base = ConnectionPair.flat(m, L)
        elif kind == "wu-yang":
            if (m, n) != (3, 3):
                raise ConfigError("the wu-yang connection needs base_dim 3 and an so3 fiber")
            base = ConnectionPair.from_potential(wu_yang_potential(), L)
        else:
            if action is None or action.kind != "circle" or action.sections is None or n != 3:
                raise ConfigError("the 'ae' connection needs a circle section symmetry on an so3 fiber")
            try:
                base = ConnectionPair.from_potential(solve_ae_so3(action.sections[0]), L)
            except InvalidActionError as exc:
                raise ConfigError(str(exc)) from exc
        if action is not None and action.sections is not None:
            family = SectionFamily(action.sections)
        if gspec.get("average", False):
            if family is None or action.kind not in ("circle", "so3"):
                raise ConfigError("chart averaging needs a circle or so3 section symmetry")
            connection = averaged_connection(base, family, action.kind, gspec.get("nodes"), gspec.get("ray_nodes"))
        else:
            connection = base
        closed = _closed_form(gspec.get("closed_form"), action, m, n)
        induced = induced_poisson_structure(connection)
        gauge = induced.gauge
        potential = connection.potential()

    if connection is not None:
        F_fn = induced.field_strength_fn
        structure = GaugePoissonStructure(fiber, gauge, F_fn, sign)
    else:
        structure = GaugePoissonStructure(fiber, gauge, None, sign)

    metric = _build_metric(cfg.get("metric"), m, n)
    hspec = cfg.get("hamiltonian", {"type": "kinetic"})
    kinetic = hspec["type"] == "kinetic"
    if kinetic:
        H = kinetic_hamiltonian(metric, n)
    else:
        if "expr" not in hspec:
            raise ConfigError("expression Hamiltonian needs 'expr'")
        H = PhaseFunction(field_phase(_expr(hspec["expr"], dims, "hamiltonian")), name="H")

    radius = None
    if cfg.get("singular_at_origin", False):
        radius = float(cfg.get("domain_radius", DEFAULT_DOMAIN_RADIUS))

    monitors = {"H": H}
    for C in fiber.casimirs:
        monitors[C.name] = PhaseFunction.from_fiber_field(C, m, n)
    if action is not None:
        for j, J in enumerate(action.momentum):
            monitors[f"J{j + 1}={J.name}"] = PhaseFunction.from_fiber_field(J, m, n)
    extra = {k: PhaseFunction(field_phase(_expr(v, dims, f"monitor {k}"))) for k, v in cfg.get("monitor", {}).items()}

    scn = Scenario(cfg, cfg["name"], m, n, L, fiber, structure, potential, metric, H, kinetic, action, averaged,
                   closed, connection, family, radius, monitors, extra)
    _check_prerequisites(scn)
    return scn


def _check_prerequisites(scn: Scenario) -> None:
    for check in scn.config.get("verification", {}).get("checks", []):
        need = _CHECK_NEEDS.get(check)
        if need == "symmetry" and scn.action is None:
            raise ConfigError(f"check {check!r} needs a symmetry block")
        if need == "closed_form" and scn.closed_form is None:
            raise ConfigError(f"check {check!r} needs a closed form")
        if need == "averaged" and scn.averaged is None:
            raise ConfigError(f"check {check!r} needs an averaged gauge")
        if check in ("lpvh1", "lpvh2", "lpvh3", "ico") and scn.connection is None and scn.potential is None:
            raise ConfigError(f"check {check!r} needs chart connection data")
        if check == "ico" and (scn.action is None or scn.action.sections is None):
            raise ConfigError("check 'ico' needs a section symmetry")
        if check == "specialization" and not scn.kinetic:
            raise ConfigError("check 'specialization' needs the kinetic Hamiltonian")


# --- dynamics ----------------------------------------------------------------------


def simulation_rhs(scn: Scenario) -> Callable[[np.ndarray], np.ndarray]:
    sim = scn.config.get("simulation", {})
    if sim.get("gauge") == "closed-form":
        if scn.closed_form is None:
            raise ConfigError("simulation.gauge 'closed-form' needs a closed form")
        if scn.closed_form.name == "wu-yang" and scn.kinetic and scn.structure.fs_sign == 1.0:
            return wong_rhs(wu_yang_potential(), scn.algebra, scn.metric)
        return hamiltonian_rhs(GaugePoissonStructure(scn.fiber, scn.closed_form), scn.hamiltonian)
    if scn.structure.fs_sign != 1.0 or not scn.kinetic:
        return hamiltonian_rhs(scn.structure, scn.hamiltonian)
    if scn.connection is not None:
        return generalized_wong_rhs(scn.connection, scn.metric)
    if scn.potential is not None:
        return wong_rhs(scn.potential, scn.algebra, scn.metric)
    return hamiltonian_rhs(scn.structure, scn.hamiltonian)


def initial_state(scn: Scenario) -> np.ndarray:
    sim = scn.config.get("simulation")
    if sim is None:
        raise ConfigError(f"scenario {scn.name!r} has no simulation block")
    init = sim["initial"]
    if len(init["p"]) != scn.m or len(init["q"]) != scn.m or len(init["y"]) != scn.n:
        raise ConfigError(f"initial state must have p, q of length {scn.m} and y of length {scn.n}")
    return join_state(init["p"], init["q"], init["y"])


def simulate(scn: Scenario) -> Trajectory:
    sim = scn.config.get("simulation")
    x0 = initial_state(scn)
    return integrate(simulation_rhs(scn), x0, sim["t_end"], sim["step"],
                     scn.inside if scn.domain_radius is not None else None, {"scenario": scn.name})


def conservation(scn: Scenario, traj: Trajectory) -> dict:
    tol = scn.config.get("simulation", {}).get("tolerance", DEFAULT_CONSERVATION_TOL)
    conserved = monitor(traj, scn.monitors)
    reported = monitor(traj, scn.extra_monitors)
    functions = {}
    for name, entry in conserved.entries.items():
        functions[name] = dict(entry.to_dict(), expected_conserved=True, passed=entry.max_rel_drift <= tol)
    for name, entry in reported.entries.items():
        functions[name] = dict(entry.to_dict(), expected_conserved=False)
    return {
        "scenario": scn.name,
        "config_sha256": config_hash(scn.config),
        "step": traj.metadata["step"],
        "t_end": traj.metadata["t_end"],
        "rows": len(traj),
        "tolerance": tol,
        "functions": functions,
        "passed": all(f.get("passed", True) for f in functions.values()),
    }


# --- verification ----------------------------------------------------------------


@dataclass
class Samples:
    phase: list
    fiber: list
    group_phase: list
    group: list


def draw_samples(scn: Scenario, seed: int, count: int, group_count: int) -> Samples:
    rng = make_rng(seed)
    m, n = scn.dims
    qs = random_base_points(m, count, rng)
    phase = [join_state(rng.normal(size=m), q, rng.normal(size=n)) for q in qs]
    gq = random_base_points(m, group_count, rng)
    gphase = [join_state(rng.normal(size=m), q, rng.normal(size=n)) for q in gq]
    group = [random_group_element(scn.action, rng) for _ in range(group_count)] if scn.action else []
    return Samples(phase, [(x[m : 2 * m], x[2 * m :]) for x in phase], gphase, group)


def _max_over(points, fn) -> float:
    return max((float(np.max(np.abs(fn(p)))) for p in points), default=0.0)


def _check_casimirs(scn: Scenario, smp: Samples) -> CheckReport:
    reports = [is_casimir(C, scn.fiber, smp.fiber) for C in scn.fiber.casimirs]
    worst = 0.0
    for C in scn.fiber.casimirs:
        Cp = PhaseFunction.from_fiber_field(C, scn.m, scn.n)
        worst = max(worst, _max_over(smp.phase, lambda x: scn.structure.matrix(x) @ Cp.grad(x)))
    reports.append(CheckReport("lifted-casimirs", worst <= 1e-8, worst, 1e-8, {"count": len(scn.fiber.casimirs)}))
    return combine("casimirs", reports)


def _check_closed_form(scn: Scenario, smp: Samples) -> CheckReport:
    tol = CHART_CLOSED_FORM_TOL if scn.connection is not None else CLOSED_FORM_TOL
    worst = max(float(np.max(np.abs(scn.structure.gauge.value(q, y) - scn.closed_form.value(q, y))))
                for q, y in smp.fiber)
    return CheckReport("closed-form", worst <= tol, worst, tol, {"closed_form": scn.closed_form.name})


def _check_convergence(scn: Scenario, smp: Samples) -> CheckReport:
    desc = scn.averaged.nodes
    g = scn.config["gauge"]
    if scn.action.kind == "so3":
        nodes = tuple(2 * k for k in desc["ball_nodes"])
        finer = general_average_gauge_form(scn.action, scn.averaged.normalized, nodes, 2 * desc["ray_nodes"])
    else:
        finer = general_average_gauge_form(scn.action, scn.averaged.normalized, 2 * desc["nodes"],
                                           g.get("ray_nodes"))
    worst = max(float(np.max(np.abs(scn.averaged(q, y) - finer(q, y)))) for q, y in smp.fiber)
    return CheckReport("convergence", worst <= CONVERGENCE_TOL, worst, CONVERGENCE_TOL,
                       {"coarse": desc, "fine": finer.nodes})


def _check_haar(scn: Scenario) -> CheckReport:
    kind = scn.action.kind
    nodes = None
    if scn.averaged is not None and kind == "so3":
        nodes = tuple(scn.averaged.nodes["ball_nodes"])
    val = haar_average_constant(kind, scn.action.rank, nodes)
    return CheckReport("haar-normalization", abs(val - 1.0) <= 1e-6, abs(val - 1.0), 1e-6, {"group": kind})


def _check_specialization(scn: Scenario, smp: Samples) -> CheckReport:
    S, H = scn.structure, scn.hamiltonian
    explicit = hamiltonian_rhs(S, H)
    via_matrix = matrix_rhs(S, H)
    reports = [CheckReport("matrix-path", *_tol(_max_over(smp.phase, lambda x: explicit(x) - via_matrix(x)),
                                                 MATRIX_PATH_TOL))]
    if scn.connection is not None:
        wong = generalized_wong_rhs(scn.connection, scn.metric)
        name = "generalized-wong"
    else:
        wong = wong_rhs(scn.potential, scn.algebra, scn.metric) if scn.potential is not None else None
        name = "wong"
    if wong is not None and S.fs_sign == 1.0:
        reports.append(CheckReport(name, *_tol(_max_over(smp.phase, lambda x: wong(x) - explicit(x)),
                                               SPECIALIZATION_TOL)))
    return combine("specialization", reports)


def _tol(residual: float, tol: float):
    return residual <= tol, residual, tol


def _connection(scn: Scenario) -> ConnectionPair:
    if scn.connection is not None:
        return scn.connection
    return ConnectionPair.from_potential(scn.potential, scn.algebra)


class Runner:
    """Runs the configured checks and assembles the report."""

    def __init__(self, scn: Scenario, seed: int | None = None, parallel: int = 1):
        self.scn = scn
        ver = scn.config.get("verification", {})
        self.seed = int(seed if seed is not None else ver.get("seed", 0))
        self.count = ver.get("samples", DEFAULT_SAMPLES)
        self.group_count = ver.get("group_samples", DEFAULT_GROUP_SAMPLES)
        self.parallel = max(1, int(parallel))
        self.samples = draw_samples(scn, self.seed, self.count, self.group_count)
        self._trajectory = None

    def trajectory(self) -> Trajectory | None:
        if self._trajectory is None and "simulation" in self.scn.config:
            self._trajectory = simulate(self.scn)
        return self._trajectory

    def run_check(self, name: str) -> CheckReport:
        scn, smp = self.scn, self.samples
        S = scn.structure
        if name == "structure-constants":
            if scn.connection is not None:
                return check_structure_field(scn.connection, [q for q, _ in smp.fiber])
            return check_structure_constants(scn.algebra)
        if name == "antisymmetry":
            return check_antisymmetry(S, smp.phase)
        if name == "jacobi":
            return check_jacobi(S, smp.phase)
        if name == "rank":
            zero = [join_state(*split_state(x, scn.m, scn.n)[:2], np.zeros(scn.n)) for x in smp.phase]
            return check_rank(S, smp.phase + zero)
        if name == "casimirs":
            return _check_casimirs(scn, smp)
        if name == "gauge-partials":
            return S.gauge.check_partials(smp.fiber)
        if name == "ic1":
            return check_ic1(S.gauge, scn.action.momentum, scn.fiber, smp.fiber)
        if name == "commutators":
            return check_commutators(S.gauge, scn.action.momentum, scn.fiber, smp.fiber)
        if name == "ac":
            return check_ac(scn.action.momentum, scn.action, smp.fiber)
        if name == "invariance":
            return check_invariance(S, scn.action, smp.group, smp.group_phase)
        if name == "first-integrals":
            traj = self.trajectory()
            reps = [first_integral_check(S, scn.hamiltonian, J, traj, scn.action, smp.phase) for J in
                    scn.action.momentum]
            return combine("first-integrals", reps)
        if name == "closed-form":
            return _check_closed_form(scn, smp)
        if name == "convergence":
            return _check_convergence(scn, smp)
        if name == "haar-normalization":
            return _check_haar(scn)
        if name == "specialization":
            return _check_specialization(scn, smp)
        qs = [q for q, _ in smp.fiber]
        if name == "lpvh1":
            return check_lpvh1(_connection(scn), qs)
        if name == "lpvh2":
            return check_lpvh2(_connection(scn), qs)
        if name == "lpvh3":
            return check_lpvh3(_connection(scn), qs)
        if name == "ico":
            family = scn.family or SectionFamily(scn.action.sections)
            return check_ico(_connection(scn), family, qs)
        raise ConfigError(f"unknown check {name!r}")

    def run(self, checks: list[str] | None = None) -> dict:
        checks = checks if checks is not None else self.scn.config.get("verification", {}).get("checks", [])
        if "first-integrals" in checks:
            self.trajectory()  # computed once, before any fan-out
        if self.parallel > 1 and len(checks) > 1:
            with ThreadPoolExecutor(max_workers=self.parallel) as pool:
                results = list(pool.map(self.run_check, checks))
        else:
            results = [self.run_check(c) for c in checks]
        return self.report(results)

    def report(self, results: list[CheckReport]) -> dict:
        scn = self.scn
        return {
            "scenario": scn.name,
            "config_sha256": config_hash(scn.config),
            "seed": self.seed,
            "rng": "philox4x64",
            "samples": {"phase": self.count, "group": self.group_count},
            "versions": {"gaugepoisson": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
            "quadrature": scn.averaged.nodes if scn.averaged is not None else None,
            "checks": [r.to_dict() for r in results],
            "passed": all(r.passed for r in results),
        }


# --- averaging output --------------------------------------------------------------


def parse_grid(spec: str, m: int) -> np.ndarray:
    """'lo:hi:count' for every axis, or one such triple per axis separated by commas."""
    parts = [p.strip() for p in spec.split(",") if p.strip()]
    if len(parts) == 1:
        parts = parts * m
    if len(parts) != m:
        raise ConfigError(f"grid needs 1 or {m} axis specs, got {len(parts)}")
    axes = []
    for p in parts:
        try:
            lo, hi, count = p.split(":")
            lo, hi, count = float(lo), float(hi), int(count)
        except ValueError as exc:
            raise ConfigError(f"bad grid axis {p!r}; expected lo:hi:count") from exc
        if count < 1:
            raise ConfigError(f"grid axis {p!r} has no points")
        axes.append(np.linspace(lo, hi, count) if count > 1 else np.array([lo]))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def read_points(path: str, m: int, n: int):
    """CSV with header q1..qm and optionally y1..yn."""
    import csv

    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read points file {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"points file {path} has no rows")
    qcols = [f"q{i + 1}" for i in range(m)]
    ycols = [f"y{a + 1}" for a in range(n)]
    try:
        Q = np.array([[float(r[c]) for c in qcols] for r in rows])
        Y = np.array([[float(r[c]) for c in ycols] for r in rows]) if all(c in rows[0] for c in ycols) else None
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"points file {path} needs numeric columns {qcols}: {exc}") from exc
    return Q, Y


def average_table(scn: Scenario, Q: np.ndarray, Y: np.ndarray | None) -> tuple[list[str], list[list[float]]]:
    if scn.averaged is None and not (scn.connection is not None and scn.config["gauge"].get("average")):
        raise ConfigError(f"scenario {scn.name!r} has no averaged gauge")
    m, n = scn.dims
    if Y is None:
        y = scn.config.get("average", {}).get("y")
        if y is None:
            raise ConfigError("no fiber point: give average.y in the config or y columns in the points file")
        if len(y) != n:
            raise ConfigError(f"average.y must have length {n}")
        Y = np.tile(np.asarray(y, float), (len(Q), 1))
    header = [f"q{i + 1}" for i in range(m)] + [f"y{a + 1}" for a in range(n)] + [f"A{i + 1}" for i in range(m)]
    cf = scn.closed_form
    if cf is not None:
        header += [f"A{i + 1}_closed" for i in range(m)] + [f"delta{i + 1}" for i in range(m)]
    rows = []
    for q, y in zip(Q, Y):
        A = scn.structure.gauge.value(q, y)
        row = list(q) + list(y) + list(A)
        if cf is not None:
            C = cf.value(q, y)
            row += list(C) + list(np.abs(A - C))
        rows.append([float(v) for v in row])
    return header, rows
