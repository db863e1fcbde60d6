"""YAML run configuration with line-numbered validation errors."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import yaml

from .expr import ExprError, parse
from .quadrature import QuadConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line else msg)


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    start: float
    stop: float
    step: float = 1e-2


@dataclass(frozen=True)
class GridSpec:
    re: tuple  # (min, max, n)
    im: tuple


@dataclass(frozen=True)
class RunConfig:
    f0: str
    N: int
    initial_alphas: tuple
    x: float = 0.0
    t: float = 0.0
    singularities: tuple = ()
    schwarz_symmetric: bool | None = None
    margin: float | None = None
    custom_arcs: dict | None = None
    quad_tol: float = QuadConfig().tol
    quad_max_evals: int = QuadConfig().max_evals
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    output_format: str = "json"
    output_path: str | None = None
    sweep: SweepSpec | None = None
    grid: GridSpec | None = None
    detune: float = 0.1

    @property
    def quad(self) -> QuadConfig:
        return QuadConfig(tol=self.quad_tol, max_evals=self.quad_max_evals)

    def effective(self) -> dict:
        """Plain-data echo that reloads to the same config."""
        out = {
            "f0": self.f0,
            "N": self.N,
            "initial_alphas": [_cstr(a) for a in self.initial_alphas],
            "x": self.x,
            "t": self.t,
            "singularities": [_cstr(s) for s in self.singularities],
            "schwarz_symmetric": self.schwarz_symmetric,
            "geometry": {
                "margin": self.margin,
                "custom_arcs": (
                    {k: [_cstr(p) for p in v] for k, v in sorted(self.custom_arcs.items())} if self.custom_arcs else None
                ),
            },
            "quad": {"tol": self.quad_tol, "max_evals": self.quad_max_evals},
            "newton": {"tol": self.newton_tol, "max_iter": self.newton_max_iter},
            "output": {"format": self.output_format, "path": self.output_path},
            "verify": {"detune": self.detune},
        }
        if self.sweep:
            s = asdict(self.sweep)
            out["sweep"] = {"axis": s["axis"], "from": s["start"], "to": s["stop"], "step": s["step"]}
        if self.grid:
            out["grid"] = {"re": list(self.grid.re), "im": list(self.grid.im)}
        return out


def _cstr(z: complex) -> str:
    return repr(complex(z))


# --------------------------------------------------------------------------
# line tracking


def _lines(node, path=(), out=None):
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = k.value
            out[path + (key,)] = k.start_mark.line + 1
            _lines(v, path + (key,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _lines(v, path + (i,), out)
    return out


class _Reader:
    def __init__(self, data: dict, lines: dict):
        self.data = data
        self.lines = lines

    def line(self, path):
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path)

    def fail(self, path, msg):
        raise ConfigError(f"{'.'.join(map(str, path))}: {msg}", self.line(path))

    def get(self, path, default=None, required=False):
        cur = self.data
        for p in path:
            if isinstance(cur, list) and isinstance(p, int) and 0 <= p < len(cur):
                cur = cur[p]
                continue
            if not isinstance(cur, dict) or p not in cur:
                if required:
                    raise ConfigError(f"missing required key '{'.'.join(map(str, path))}'", self.line(path[:-1]))
                return default
            cur = cur[p]
        return cur

    def real(self, path, default=None, required=False, positive=False):
        v = self.get(path, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float, str)):
            self.fail(path, f"expected a real number, got {v!r}")
        try:
            v = float(v)
        except ValueError:
            self.fail(path, f"expected a real number, got {v!r}")
        if positive and not v > 0:
            self.fail(path, "must be positive")
        return v

    def integer(self, path, default=None, required=False, minimum=None):
        v = self.get(path, default, required)
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(path, f"expected an integer, got {v!r}")
        if minimum is not None and v < minimum:
            self.fail(path, f"must be >= {minimum}")
        return v

    def complex_(self, path, value):
        try:
            return parse_complex(value)
        except ValueError as exc:
            self.fail(path, str(exc))


def parse_complex(v) -> complex:
    """Numbers, strings such as '1+0.8i' or '2-1j', or [re, im] pairs."""
    if isinstance(v, bool):
        raise ValueError(f"expected a complex number, got {v!r}")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(p, (int, float)) for p in v):
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, str):
        s = v.replace(" ", "").replace("i", "j")
        try:
            return complex(s)
        except ValueError:
            pass
    raise ValueError(f"expected a complex number, got {v!r}")


_TOP = {
    "f0", "N", "initial_alphas", "x", "t", "singularities", "schwarz_symmetric",
    "geometry", "quad", "newton", "output", "sweep", "grid", "verify",
}


def load_config_text(text: str) -> RunConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None) from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", 1)
    r = _Reader(data, _lines(node))
    for k in data:
        if k not in _TOP:
            r.fail((k,), "unknown key")

    f0 = r.get(("f0",), required=True)
    if not isinstance(f0, (str, int, float)) or isinstance(f0, bool):
        r.fail(("f0",), "expected an expression string")
    f0 = str(f0)
    try:
        parse(f0)
    except ExprError as exc:
        r.fail(("f0",), str(exc))

    N = r.integer(("N",), required=True, minimum=0)
    alphas = r.get(("initial_alphas",), required=True)
    if not isinstance(alphas, list):
        r.fail(("initial_alphas",), "expected a list of upper-half-plane branchpoints")
    alphas = tuple(r.complex_(("initial_alphas", i), a) for i, a in enumerate(alphas))
    if len(alphas) != 2 * N + 1:
        r.fail(("initial_alphas",), f"N = {N} needs {2 * N + 1} upper branchpoints, got {len(alphas)}")
    for i, a in enumerate(alphas):
        if a.imag <= 0:
            r.fail(("initial_alphas", i), "branchpoints must lie in the upper half plane")

    sings = r.get(("singularities",), [])
    if not isinstance(sings, list):
        r.fail(("singularities",), "expected a list")
    sings = tuple(r.complex_(("singularities", i), s) for i, s in enumerate(sings))

    schwarz = r.get(("schwarz_symmetric",))
    if schwarz is not None and not isinstance(schwarz, bool):
        r.fail(("schwarz_symmetric",), "expected true, false or null")

    margin = r.real(("geometry", "margin"), positive=True)
    arcs = r.get(("geometry", "custom_arcs"))
    if arcs is not None:
        if not isinstance(arcs, dict):
            r.fail(("geometry", "custom_arcs"), "expected a mapping of arc keys to vertex lists")
        parsed = {}
        for k, v in arcs.items():
            if not isinstance(v, list):
                r.fail(("geometry", "custom_arcs", k), "expected a list of vertices")
            parsed[str(k)] = tuple(r.complex_(("geometry", "custom_arcs", k, i), p) for i, p in enumerate(v))
        arcs = parsed

    out_fmt = r.get(("output", "format"), "json")
    if out_fmt not in ("json", "csv"):
        r.fail(("output", "format"), "expected 'csv' or 'json'")
    out_path = r.get(("output", "path"))
    if out_path is not None and not isinstance(out_path, str):
        r.fail(("output", "path"), "expected a path string")

    sweep = None
    if r.get(("sweep",)) is not None:
        axis = r.get(("sweep", "axis"), required=True)
        if axis not in ("x", "t"):
            r.fail(("sweep", "axis"), "expected 'x' or 't'")
        sweep = SweepSpec(
            axis,
            r.real(("sweep", "from"), required=True),
            r.real(("sweep", "to"), required=True),
            r.real(("sweep", "step"), 1e-2, positive=True),
        )

    grid = None
    if r.get(("grid",)) is not None:
        axes = []
        for ax in ("re", "im"):
            v = r.get(("grid", ax), required=True)
            if not (isinstance(v, list) and len(v) == 3):
                r.fail(("grid", ax), "expected [min, max, count]")
            lo = r.real(("grid", ax, 0), required=True)
            hi = r.real(("grid", ax, 1), required=True)
            n = r.integer(("grid", ax, 2), required=True, minimum=1)
            axes.append((lo, hi, n))
        grid = GridSpec(*axes)

    return RunConfig(
        f0=f0,
        N=N,
        initial_alphas=alphas,
        x=r.real(("x",), 0.0),
        t=r.real(("t",), 0.0),
        singularities=sings,
        schwarz_symmetric=schwarz,
        margin=margin,
        custom_arcs=arcs,
        quad_tol=r.real(("quad", "tol"), QuadConfig().tol, positive=True),
        quad_max_evals=r.integer(("quad", "max_evals"), QuadConfig().max_evals, minimum=15),
        newton_tol=r.real(("newton", "tol"), 1e-10, positive=True),
        newton_max_iter=r.integer(("newton", "max_iter"), 30, minimum=0),
        output_format=out_fmt,
        output_path=out_path,
        sweep=sweep,
        grid=grid,
        detune=r.real(("verify", "detune"), 0.1, positive=True),
    )


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return load_config_text(fh.read())
