"""Scenario configuration from a TOML document of flat dotted keys.

Example::

    scenario = "imbq_scalar"
    grid.n_dims = 1
    grid.points = 256
    grid.half_width = 20.0
    phi.kind = "gaussian"
    phi.amplitude = 0.1
    solver.horizon = 1.0

Relative paths are resolved against the directory of the config file.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, GridError
from .grid import EllipticForm, Field, SpectralGrid, gaussian, make_grid, plane_mode, zeros
from .nonlinearity import NonlinearitySpec, coupled_quadratic, power, zero
from .operators import OperatorSpec

log = logging.getLogger(__name__)

SCENARIOS = ("imbq_scalar", "system")
SYMBOLS = {
    "laplacian": OperatorSpec.laplacian,
    "klein_gordon": lambda: OperatorSpec.from_symbol(lambda xi: 1.0 + sum(k * k for k in xi),
                                                     name="klein_gordon"),
}
NONLINEARITIES = ("zero", "quadratic", "cubic", "coupled_poly")
DATA_KINDS = ("zero", "gaussian", "mode", "file")

DEFAULTS = {
    "scenario": "imbq_scalar",
    "grid.n_dims": 1,
    "grid.points": 256,
    "grid.half_width": 20.0,
    "elliptic.a": None,
    "operator.symbol": "laplacian",
    "operator.components": None,
    "operator.g": None,
    "operator.s_weight": 1.0,
    "operator.matrix": None,
    "nonlinearity.name": "quadratic",
    "nonlinearity.sign": 1.0,
    "nonlinearity.coupling": None,
    "exponents.p": 2.0,
    "exponents.q_inner": 2.0,
    "exponents.s_norm": 2.0,
    "solver.dt": None,
    "solver.horizon": 1.0,
    "solver.tol": 1e-10,
    "solver.max_iters": 50,
    "solver.blowup_threshold": None,
    "solver.C0": 1.0,
    "solver.C1": 1.0,
    "solver.steps_per_window": 64,
    "solver.max_window": None,
    "solver.max_windows": 100_000,
    "output.csv": "trace.csv",
    "output.json": "report.json",
    "output.snapshot_stride": 0,
    "output.snapshot_path": "snapshots/{field}_{step:06d}.bqs",
}
for _d in ("phi", "psi"):
    DEFAULTS.update({f"{_d}.kind": "zero", f"{_d}.amplitude": 1.0, f"{_d}.width": 1.0,
                     f"{_d}.center": None, f"{_d}.k": None, f"{_d}.mode_kind": "cos",
                     f"{_d}.path": None})


def _flatten(doc: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _line_of(text: str, key: str) -> int | None:
    leaf = re.escape(key.split(".")[-1])
    for i, line in enumerate(text.splitlines(), 1):
        if re.match(rf"\s*[\w.]*\b{leaf}\s*=", line):
            return i
    return None


@dataclass(frozen=True)
class DataSpec:
    kind: str = "zero"
    amplitude: object = 1.0
    width: float = 1.0
    center: tuple | None = None
    k: tuple | None = None
    mode_kind: str = "cos"
    path: Path | None = None


@dataclass
class ScenarioConfig:
    """Validated scenario; see :data:`DEFAULTS` for every key and its default."""

    scenario: str
    grid: SpectralGrid
    form: EllipticForm
    operator: OperatorSpec
    nonlinearity: NonlinearitySpec
    phi: DataSpec
    psi: DataSpec
    p: float = 2.0
    q_inner: float = 2.0
    s_norm: float = 2.0
    dt: float | None = None
    horizon: float = 1.0
    tol: float = 1e-10
    max_iters: int = 50
    blowup_threshold: float | None = None
    C0: float = 1.0
    C1: float = 1.0
    steps_per_window: int = 64
    max_window: float | None = None
    max_windows: int = 100_000
    csv_path: Path | None = None
    json_path: Path | None = None
    snapshot_stride: int = 0
    snapshot_path: str = ""
    base_dir: Path = Path(".")
    raw: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def components(self) -> int:
        return self.nonlinearity.components

    def initial_data(self) -> tuple[Field, Field]:
        return (_build_data(self.phi, self.grid, self.components, "phi"),
                _build_data(self.psi, self.grid, self.components, "psi"))


def _build_data(spec: DataSpec, grid: SpectralGrid, n: int, name: str) -> Field:
    if spec.kind == "zero":
        return zeros(grid, n)
    if spec.kind == "gaussian":
        amp = spec.amplitude
        if n > 1 and np.ndim(amp) == 0:
            amp = [amp] * n
        return gaussian(grid, amp, spec.width, spec.center)
    if spec.kind == "mode":
        amp = np.broadcast_to(np.asarray(spec.amplitude, dtype=float), (n,))
        return plane_mode(grid, spec.k, amp, spec.mode_kind)
    from .io import read_snapshot

    fld, _ = read_snapshot(spec.path)
    if fld.grid != grid or fld.components != n:
        raise ConfigError(f"{name}.path: snapshot grid/components do not match the scenario",
                          key=f"{name}.path")
    return fld


class _Reader:
    def __init__(self, flat: dict, text: str):
        self.flat = flat
        self.text = text

    def err(self, key: str, msg: str) -> ConfigError:
        return ConfigError(f"{key}: {msg}", key=key, line=_line_of(self.text, key))

    def get(self, key: str):
        return self.flat.get(key, DEFAULTS[key])

    def num(self, key: str, positive: bool = False, allow_none: bool = False):
        v = self.get(key)
        if v is None and allow_none:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.err(key, f"expected a number, got {v!r}")
        if not np.isfinite(v) or (positive and not v > 0):
            raise self.err(key, f"must be {'positive and ' if positive else ''}finite, got {v!r}")
        return float(v)

    def integer(self, key: str, minimum: int = 0, allow_none: bool = False):
        v = self.get(key)
        if v is None and allow_none:
            return None
        if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
            raise self.err(key, f"expected an integer >= {minimum}, got {v!r}")
        return int(v)

    def choice(self, key: str, options):
        v = self.get(key)
        if v not in options:
            raise self.err(key, f"must be one of {', '.join(options)}, got {v!r}")
        return v


def parse_config(text: str, base_dir=".") -> ScenarioConfig:
    """Validate a config document given as text."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        m = re.search(r"line (\d+)", str(err))
        line = getattr(err, "lineno", None) or (int(m.group(1)) if m else None)
        raise ConfigError(f"parse error at line {line}: {err}", line=line) from err
    flat = _flatten(doc)
    r = _Reader(flat, text)
    for key in flat:
        if key not in DEFAULTS:
            raise r.err(key, "unknown key")
    base = Path(base_dir)
    warnings = []

    scenario = r.choice("scenario", SCENARIOS)
    n_dims = r.integer("grid.n_dims", 1)
    try:
        grid = make_grid(n_dims, r.get("grid.points"), r.get("grid.half_width"))
    except (GridError, TypeError, ValueError) as err:
        key = "grid.points" if "point" in str(err) else "grid.half_width"
        if "n_dims" in str(err):
            key = "grid.n_dims"
        raise r.err(key, str(err)) from err

    a = r.get("elliptic.a")
    try:
        form = EllipticForm.identity(n_dims) if a is None else EllipticForm(np.asarray(a, float))
    except (ValueError, TypeError) as err:
        raise r.err("elliptic.a", str(err)) from err
    if form.coeffs.shape != (n_dims, n_dims):
        raise r.err("elliptic.a", f"must be {n_dims} x {n_dims}")

    # operator and nonlinearity
    nl_name = r.choice("nonlinearity.name", NONLINEARITIES)
    sign = r.num("nonlinearity.sign")
    if scenario == "imbq_scalar":
        sym = r.choice("operator.symbol", tuple(SYMBOLS))
        for key in ("operator.g", "operator.matrix", "nonlinearity.coupling"):
            if flat.get(key) is not None:
                raise r.err(key, "only valid for the 'system' scenario")
        if nl_name == "coupled_poly":
            raise r.err("nonlinearity.name", "coupled_poly needs the 'system' scenario")
        operator = SYMBOLS[sym]()
        n_comp = 1
    else:
        g = r.get("operator.g")
        mat = r.get("operator.matrix")
        n_comp = r.integer("operator.components", 1, allow_none=True)
        if mat is not None:
            try:
                operator = OperatorSpec.from_matrix(np.asarray(mat, dtype=float))
            except (ValueError, TypeError) as err:
                raise r.err("operator.matrix", str(err)) from err
        elif g is not None:
            if not isinstance(g, list) or not all(isinstance(x, (int, float)) for x in g):
                raise r.err("operator.g", "must be a list of numbers")
            operator = OperatorSpec.weighted(g, r.num("operator.s_weight"))
        else:
            raise r.err("operator.g", "the 'system' scenario needs operator.g or operator.matrix")
        if n_comp is None:
            n_comp = operator.components
        if operator.components != n_comp:
            key = "operator.matrix" if mat is not None else "operator.g"
            raise r.err(key, f"length {operator.components} does not match "
                             f"operator.components = {n_comp}")
    if nl_name == "zero":
        f = zero(n_comp)
    elif nl_name in ("quadratic", "cubic"):
        if n_comp != 1:
            raise r.err("nonlinearity.name", f"{nl_name} is scalar; use coupled_poly for systems")
        f = power(2 if nl_name == "quadratic" else 3, sign)
    else:
        table = r.get("nonlinearity.coupling")
        try:
            f = coupled_quadratic(sign * np.asarray(table, dtype=float))
        except (ValueError, TypeError) as err:
            raise r.err("nonlinearity.coupling", f"{n_comp} x {n_comp} x {n_comp} table "
                                                 f"required ({err})") from err
        if f.components != n_comp:
            raise r.err("nonlinearity.coupling", f"table must be {n_comp} x {n_comp} x {n_comp}")

    data = {}
    for d in ("phi", "psi"):
        kind = r.choice(f"{d}.kind", DATA_KINDS)
        amp = r.get(f"{d}.amplitude")
        if isinstance(amp, list):
            if len(amp) != n_comp:
                raise r.err(f"{d}.amplitude", f"needs {n_comp} entries")
        else:
            amp = r.num(f"{d}.amplitude")
        center = r.get(f"{d}.center")
        if center is not None and (not isinstance(center, list) or len(center) != n_dims):
            raise r.err(f"{d}.center", f"needs {n_dims} entries")
        k = r.get(f"{d}.k")
        if kind == "mode":
            if not isinstance(k, list) or len(k) != n_dims:
                raise r.err(f"{d}.k", f"mode data needs {n_dims} integer wavenumbers")
        mode_kind = r.choice(f"{d}.mode_kind", ("cos", "sin", "exp"))
        path = r.get(f"{d}.path")
        if kind == "file":
            if not isinstance(path, str):
                raise r.err(f"{d}.path", "file data needs a path")
            path = (base / path).resolve()
            if not path.is_file():
                raise r.err(f"{d}.path", f"no such file {path}")
        data[d] = DataSpec(kind, amp, r.num(f"{d}.width", positive=True),
                           None if center is None else tuple(center),
                           None if k is None else tuple(k), mode_kind, path)

    p = r.num("exponents.p")
    if not p > 1:
        raise r.err("exponents.p", f"must be > 1, got {p:g}")
    q_inner = r.num("exponents.q_inner")
    if not q_inner >= 1:
        raise r.err("exponents.q_inner", f"must be >= 1, got {q_inner:g}")
    s_norm = r.num("exponents.s_norm")
    if not s_norm > n_dims / p:
        msg = f"exponents.s_norm = {s_norm:g} does not exceed n/p = {n_dims / p:g}"
        warnings.append(msg)
        log.warning(msg)

    csv = r.get("output.csv")
    js = r.get("output.json")
    snap = r.get("output.snapshot_path")
    if not isinstance(snap, str):
        raise r.err("output.snapshot_path", "must be a string")
    try:
        snap.format(field="u", step=0)
    except (KeyError, IndexError, ValueError) as err:
        raise r.err("output.snapshot_path", f"bad template ({err})") from err
    threshold = r.num("solver.blowup_threshold", positive=True, allow_none=True)
    C0 = r.num("solver.C0")
    C1 = r.num("solver.C1")
    for key, val in (("solver.C0", C0), ("solver.C1", C1)):
        if val < 1:
            raise r.err(key, f"must be >= 1, got {val:g}")
    return ScenarioConfig(
        scenario=scenario, grid=grid, form=form, operator=operator, nonlinearity=f,
        phi=data["phi"], psi=data["psi"], p=p, q_inner=q_inner, s_norm=s_norm,
        dt=r.num("solver.dt", positive=True, allow_none=True),
        horizon=r.num("solver.horizon", positive=True),
        tol=r.num("solver.tol", positive=True),
        max_iters=r.integer("solver.max_iters", 1),
        blowup_threshold=threshold, C0=C0, C1=C1,
        steps_per_window=r.integer("solver.steps_per_window", 1),
        max_window=r.num("solver.max_window", positive=True, allow_none=True),
        max_windows=r.integer("solver.max_windows", 1),
        csv_path=None if not csv else base / csv,
        json_path=None if not js else base / js,
        snapshot_stride=r.integer("output.snapshot_stride", 0),
        snapshot_path=str(base / snap), base_dir=base, raw=flat, warnings=warnings)


def load_config(path) -> ScenarioConfig:
    """Read and validate a config file.

    Raises
    ------
    ConfigError
        With ``line`` set for parse errors and ``key`` for validation errors.
    OSError
        If the file cannot be read.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_config(text, base_dir=path.parent)
