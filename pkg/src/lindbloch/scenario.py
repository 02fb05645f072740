"""Line-oriented scenario files.

Format::

    # comments start with '#'
    name = dephasing
    dimension = 2
    convention = trace2            # or custom-f
    picture = heisenberg           # or schroedinger
    method = formula
    t_final = 5
    dt = 0.01
    output_stride = 10

    [structure]                    # custom-f only; 1-based indices
    f = 1 2 3 0.5

    [hamiltonian]
    bloch = 0 0 1                  # vector part over the generators
    # matrix = re im re im ...     # row-major complex pairs (trace2 only)

    [lindblad]                     # repeat the section for more channels
    bloch = 0 0 1
    gamma = constant 1             # | exponential g0 tau | tabulated t:v t:v ...

    [initial]
    r0 = 1 1 1                     # or rho0 = re im ... (trace2 only)

    [series]
    order = 20
    nodes = 32

    [perturbation]
    order = 2

    [mc]
    trajectories = 10000
    seed = 12345
    dt = 0.001
    estimator = matrix             # or bloch

    [compare]
    methods = formula oracle mc

``dt`` in the top-level block is the deterministic integrator step (omit it
for the automatic choice); ``output_stride`` is the number of such steps
between rows of the output CSV.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

METHODS = ("formula", "series", "perturbation", "mc", "oracle", "compare")
MATRIX_METHODS = ("oracle", "mc")


class ScenarioError(ValueError):
    """Every validation problem found in a scenario, with line numbers."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class Operator:
    """A Hermitian operator given either as Bloch coefficients or as a matrix."""

    bloch: tuple[float, ...] | None = None
    matrix: tuple[complex, ...] | None = None


@dataclass(frozen=True)
class LindbladSpec:
    operator: Operator
    gamma: tuple = ("constant", 1.0)


@dataclass(frozen=True)
class Scenario:
    name: str
    dimension: int
    t_final: float
    convention: str = "trace2"
    structure: tuple[tuple[int, int, int, float], ...] = ()
    hamiltonian: Operator = Operator()
    lindblads: tuple[LindbladSpec, ...] = ()
    r0: tuple[float, ...] | None = None
    rho0: tuple[complex, ...] | None = None
    picture: str = "heisenberg"
    method: str = "formula"
    dt: float | None = None
    output_stride: int = 1
    series: dict = field(default_factory=dict)
    perturbation: dict = field(default_factory=dict)
    mc: dict = field(default_factory=dict)
    compare: tuple[str, ...] = ()

    @property
    def bloch_dim(self) -> int:
        return self.dimension ** 2 - 1

    def with_overrides(self, **kw) -> "Scenario":
        """Apply CLI flags; ``None`` values are ignored.  ``dt`` also replaces an
        explicit ``[mc] dt``."""
        changes = {}
        for key in ("method", "dt"):
            if kw.get(key) is not None:
                changes[key] = kw[key]
        if kw.get("order") is not None:
            changes["series"] = dict(self.series, order=int(kw["order"]))
            changes["perturbation"] = dict(self.perturbation, order=int(kw["order"]))
        mc = dict(self.mc)
        if kw.get("dt") is not None and "dt" in mc:
            mc["dt"] = float(kw["dt"])
        if kw.get("seed") is not None:
            mc["seed"] = int(kw["seed"])
        if kw.get("trajectories") is not None:
            mc["trajectories"] = int(kw["trajectories"])
        if mc != self.mc:
            changes["mc"] = mc
        return dataclasses.replace(self, **changes)


_TOP_KEYS = {"name", "dimension", "convention", "picture", "method", "t_final", "dt", "output_stride"}
_SECTION_KEYS = {
    "structure": {"f"},
    "hamiltonian": {"bloch", "matrix"},
    "lindblad": {"bloch", "matrix", "gamma"},
    "initial": {"r0", "rho0"},
    "series": {"order", "nodes"},
    "perturbation": {"order", "nodes"},
    "mc": {"trajectories", "seed", "dt", "estimator", "chunk"},
    "compare": {"methods"},
}
_REPEATABLE = {"lindblad"}


def _floats(text):
    return tuple(float(x) for x in text.split())


def _complex_pairs(text):
    vals = _floats(text)
    if len(vals) % 2:
        raise ValueError("complex matrix needs an even number of reals (re im pairs)")
    return tuple(complex(vals[i], vals[i + 1]) for i in range(0, len(vals), 2))


def _gamma(text):
    parts = text.split()
    if not parts:
        raise ValueError("empty gamma profile")
    kind = parts[0]
    if kind == "constant" and len(parts) == 2:
        return ("constant", float(parts[1]))
    if kind == "exponential" and len(parts) == 3:
        return ("exponential", float(parts[1]), float(parts[2]))
    if kind == "tabulated" and len(parts) >= 2:
        pts = [p.split(":") for p in parts[1:]]
        if any(len(p) != 2 for p in pts):
            raise ValueError("tabulated points must look like t:value")
        return ("tabulated", tuple(float(t) for t, _ in pts), tuple(float(v) for _, v in pts))
    raise ValueError(f"cannot parse gamma profile {text!r}")


def _tokenize(text):
    """Yield (lineno, section, key, value); section headers yield key None."""
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            yield lineno, section, None, None
            continue
        if "=" not in line:
            yield lineno, section, "", line
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        yield lineno, section, key, value


def parse_scenario(text: str) -> Scenario:
    errors: list[str] = []
    top: dict[str, tuple[int, str]] = {}
    blocks: list[tuple[str, int, dict[str, tuple[int, str]]]] = []
    seen_sections: set[str] = set()

    for lineno, section, key, value in _tokenize(text):
        if key is None:
            if section not in _SECTION_KEYS:
                errors.append(f"line {lineno}: unknown section [{section}]")
            elif section in seen_sections and section not in _REPEATABLE:
                errors.append(f"line {lineno}: section [{section}] may appear only once")
            seen_sections.add(section)
            blocks.append((section, lineno, {}))
            continue
        if key == "":
            errors.append(f"line {lineno}: expected 'key = value', got {value!r}")
            continue
        if section is None:
            target, allowed, where = top, _TOP_KEYS, "top level"
        else:
            target, allowed, where = blocks[-1][2], _SECTION_KEYS.get(section, set()), f"[{section}]"
        if key not in allowed:
            errors.append(f"line {lineno}: unknown key '{key}' in {where}")
            continue
        if key in target and not (section == "structure" and key == "f"):
            errors.append(f"line {lineno}: duplicate key '{key}' in {where}")
            continue
        if section == "structure" and key == "f":
            target.setdefault("f", []).append((lineno, value))
        else:
            target[key] = (lineno, value)

    def conv(store, key, fn, where, required=False, default=None):
        if key not in store:
            if required:
                errors.append(f"missing required key '{key}' in {where}")
            return default
        lineno, value = store[key]
        try:
            return fn(value)
        except (ValueError, TypeError) as exc:
            errors.append(f"line {lineno}: bad value for '{key}': {exc}")
            return default

    name = conv(top, "name", str, "top level", required=True, default="scenario")
    dim = conv(top, "dimension", int, "top level", required=True, default=None)
    t_final = conv(top, "t_final", float, "top level", required=True, default=None)
    convention = conv(top, "convention", str, "top level", default="trace2")
    picture = conv(top, "picture", str, "top level", default="heisenberg")
    method = conv(top, "method", str, "top level", default="formula")
    dt = conv(top, "dt", float, "top level", default=None)
    stride = conv(top, "output_stride", int, "top level", default=1)

    if dim is not None and dim < 2:
        errors.append(f"line {top['dimension'][0]}: dimension must be >= 2")
        dim = None
    if t_final is not None and t_final < 0:
        errors.append(f"line {top['t_final'][0]}: t_final must be non-negative")
    if dt is not None and dt <= 0:
        errors.append(f"line {top['dt'][0]}: dt must be positive")
    if stride is not None and stride < 1:
        errors.append(f"line {top['output_stride'][0]}: output_stride must be >= 1")
    if convention not in ("trace2", "custom-f"):
        errors.append(f"line {top['convention'][0]}: convention must be trace2 or custom-f")
    if picture not in ("heisenberg", "schroedinger"):
        errors.append(f"line {top['picture'][0]}: picture must be heisenberg or schroedinger")
    if method not in METHODS:
        errors.append(f"line {top['method'][0]}: method must be one of {', '.join(METHODS)}")

    bdim = dim * dim - 1 if dim else None

    def operator(store, where):
        if "bloch" in store and "matrix" in store:
            errors.append(f"line {store['matrix'][0]}: {where} gives both 'bloch' and 'matrix'")
        bloch = conv(store, "bloch", _floats, where)
        matrix = conv(store, "matrix", _complex_pairs, where)
        if bloch is not None and bdim is not None and len(bloch) != bdim:
            errors.append(f"line {store['bloch'][0]}: {where} bloch vector has {len(bloch)} entries, "
                          f"dimension {dim} needs {bdim}")
        if matrix is not None and dim is not None and len(matrix) != dim * dim:
            errors.append(f"line {store['matrix'][0]}: {where} matrix has {len(matrix)} entries, "
                          f"dimension {dim} needs {dim * dim}")
        if matrix is not None and convention == "custom-f":
            errors.append(f"line {store['matrix'][0]}: matrix operators need convention = trace2")
        return Operator(bloch, matrix)

    hamiltonian = Operator()
    lindblads = []
    structure = []
    r0 = rho0 = None
    series, pert, mc = {}, {}, {}
    compare: tuple[str, ...] = ()
    has_initial = False
    for section, lineno, store in blocks:
        where = f"[{section}] at line {lineno}"
        if section == "hamiltonian":
            hamiltonian = operator(store, where)
        elif section == "lindblad":
            op = operator(store, where)
            if op.bloch is None and op.matrix is None:
                errors.append(f"line {lineno}: [lindblad] needs 'bloch' or 'matrix'")
            gamma = conv(store, "gamma", _gamma, where, default=("constant", 1.0))
            lindblads.append(LindbladSpec(op, gamma))
        elif section == "structure":
            for ln, value in store.get("f", []):
                parts = value.split()
                try:
                    i, j, k = (int(p) for p in parts[:3])
                    if len(parts) != 4:
                        raise ValueError("expected 'i j k value'")
                    if bdim is not None and not all(1 <= x <= bdim for x in (i, j, k)):
                        raise ValueError(f"indices must lie in 1..{bdim}")
                    structure.append((i, j, k, float(parts[3])))
                except ValueError as exc:
                    errors.append(f"line {ln}: bad structure entry: {exc}")
        elif section == "initial":
            has_initial = True
            if "r0" in store and "rho0" in store:
                errors.append(f"line {store['rho0'][0]}: give exactly one of 'r0' and 'rho0', not both")
            r0 = conv(store, "r0", _floats, where)
            rho0 = conv(store, "rho0", _complex_pairs, where)
            if r0 is None and rho0 is None and not ("r0" in store or "rho0" in store):
                errors.append(f"line {lineno}: [initial] needs 'r0' or 'rho0'")
            if r0 is not None and bdim is not None and len(r0) != bdim:
                errors.append(f"line {store['r0'][0]}: r0 has {len(r0)} entries, dimension {dim} needs {bdim}")
            if rho0 is not None and dim is not None and len(rho0) != dim * dim:
                errors.append(f"line {store['rho0'][0]}: rho0 has {len(rho0)} entries, needs {dim * dim}")
            if rho0 is not None and convention == "custom-f":
                errors.append(f"line {store['rho0'][0]}: rho0 needs convention = trace2")
        elif section == "series":
            series = {k: v for k, v in (("order", conv(store, "order", int, where)),
                                        ("nodes", conv(store, "nodes", int, where))) if v is not None}
        elif section == "perturbation":
            pert = {k: v for k, v in (("order", conv(store, "order", int, where)),
                                      ("nodes", conv(store, "nodes", int, where))) if v is not None}
            if not 0 <= pert.get("order", 2) <= 2:
                errors.append(f"line {store['order'][0]}: perturbation order must be 0, 1 or 2")
        elif section == "mc":
            mc = {k: v for k, v in (("trajectories", conv(store, "trajectories", int, where)),
                                    ("seed", conv(store, "seed", int, where)),
                                    ("dt", conv(store, "dt", float, where)),
                                    ("estimator", conv(store, "estimator", str, where)),
                                    ("chunk", conv(store, "chunk", int, where))) if v is not None}
            if mc.get("estimator", "matrix") not in ("matrix", "bloch"):
                errors.append(f"line {store['estimator'][0]}: estimator must be matrix or bloch")
        elif section == "compare":
            compare = tuple(conv(store, "methods", str.split, where, default=[]))
            bad = [m for m in compare if m not in METHODS or m == "compare"]
            if bad:
                errors.append(f"line {store['methods'][0]}: cannot compare methods {bad}")

    if not has_initial:
        errors.append("missing required section [initial] with 'r0' or 'rho0'")
    if convention == "custom-f" and not structure:
        errors.append("convention = custom-f needs a [structure] section with 'f' entries")
    if convention == "trace2" and structure:
        errors.append("[structure] entries are only allowed with convention = custom-f")
    if hamiltonian.bloch is None and hamiltonian.matrix is None and not lindblads:
        errors.append("scenario has neither a [hamiltonian] nor any [lindblad] section")
    if convention == "custom-f":
        if method in MATRIX_METHODS and mc.get("estimator", "matrix") == "matrix" or method == "oracle":
            errors.append(f"method {method} needs matrices; use convention = trace2"
                          + (" or [mc] estimator = bloch" if method == "mc" else ""))
        for m in compare:
            if m == "oracle" or (m == "mc" and mc.get("estimator", "matrix") == "matrix"):
                errors.append(f"compare method {m} needs matrices; not available with custom-f")

    if errors:
        raise ScenarioError(errors)
    return Scenario(name=name, dimension=dim, t_final=t_final, convention=convention,
                    structure=tuple(structure), hamiltonian=hamiltonian, lindblads=tuple(lindblads),
                    r0=r0, rho0=rho0, picture=picture, method=method, dt=dt, output_stride=stride,
                    series=series, perturbation=pert, mc=mc, compare=compare)


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_complex(values) -> str:
    return " ".join(f"{_fmt(v.real)} {_fmt(v.imag)}" for v in values)


def _fmt_operator(op: Operator) -> list[str]:
    if op.bloch is not None:
        return ["bloch = " + " ".join(_fmt(v) for v in op.bloch)]
    if op.matrix is not None:
        return ["matrix = " + _fmt_complex(op.matrix)]
    return []


def _fmt_gamma(g) -> str:
    if g[0] == "tabulated":
        return "tabulated " + " ".join(f"{_fmt(t)}:{_fmt(v)}" for t, v in zip(g[1], g[2]))
    return " ".join([g[0], *(_fmt(v) for v in g[1:])])


def format_scenario(sc: Scenario) -> str:
    lines = [f"name = {sc.name}", f"dimension = {sc.dimension}", f"convention = {sc.convention}",
             f"picture = {sc.picture}", f"method = {sc.method}", f"t_final = {_fmt(sc.t_final)}"]
    if sc.dt is not None:
        lines.append(f"dt = {_fmt(sc.dt)}")
    lines.append(f"output_stride = {sc.output_stride}")
    if sc.structure:
        lines += ["", "[structure]"] + [f"f = {i} {j} {k} {_fmt(v)}" for i, j, k, v in sc.structure]
    if sc.hamiltonian.bloch is not None or sc.hamiltonian.matrix is not None:
        lines += ["", "[hamiltonian]"] + _fmt_operator(sc.hamiltonian)
    for spec in sc.lindblads:
        lines += ["", "[lindblad]"] + _fmt_operator(spec.operator) + [f"gamma = {_fmt_gamma(spec.gamma)}"]
    lines += ["", "[initial]"]
    lines.append("r0 = " + " ".join(_fmt(v) for v in sc.r0) if sc.r0 is not None
                 else "rho0 = " + _fmt_complex(sc.rho0))
    for section, values in (("series", sc.series), ("perturbation", sc.perturbation), ("mc", sc.mc)):
        if values:
            lines += ["", f"[{section}]"]
            lines += [f"{k} = {_fmt(v) if isinstance(v, float) else v}" for k, v in values.items()]
    if sc.compare:
        lines += ["", "[compare]", "methods = " + " ".join(sc.compare)]
    return "\n".join(lines) + "\n"
