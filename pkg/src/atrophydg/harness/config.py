"""INI-style run configuration.

Sections: [mesh] [params] [time] [bc.c] [bc.u] [ic] [output]. Boundary
sections map a tag (or ``all``) to ``dirichlet`` or ``neumann``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ..gmsh import import_gmsh
from ..mesh import Mesh, MeshError, agglomerate, build_annulus, build_structured
from ..physics import ModelParams, PhysicsError
from .steady import gaussian


class ConfigError(ValueError):
    pass


_PARAM_KEYS = {f.name for f in fields(ModelParams)} - {"axon_dir", "dt", "T", "theta"}
_EXPR_NAMES = {k: getattr(np, k) for k in ("sin", "cos", "exp", "sqrt", "pi", "tanh", "abs", "minimum", "maximum")}


@dataclass
class RunConfig:
    mesh: Mesh
    params: ModelParams
    degrees: tuple = (2, 2, 2)
    bc_c: dict = field(default_factory=lambda: {"all": "neumann"})
    bc_u: dict = field(default_factory=lambda: {"all": "dirichlet"})
    c0: object = None
    startup_steps: int = 0
    out_dir: Path = Path("out")
    stride: int = 10
    vtk: bool = True
    check: str = "none"  # "steady" applies the saturation checks at T


def _get(sec, key, conv, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"[{sec.name}] missing key {key!r}")
        return default
    try:
        return conv(sec[key])
    except ValueError as err:
        raise ConfigError(f"[{sec.name}] {key}: {err}") from None


def _floats(s):
    return tuple(float(v) for v in s.replace(",", " ").split())


def _build_mesh(sec, base: Path) -> Mesh:
    kind = sec.get("kind", "structured")
    try:
        if kind == "structured":
            m = build_structured(_get(sec, "dim", int, 2), _get(sec, "n", int),
                                 sec.get("cell", "tri"))
            g = _get(sec, "agglomerate", int, 1)
            return agglomerate(m, g) if g > 1 else m
        if kind == "annulus":
            return build_annulus(_get(sec, "r_in", float, 0.05), _get(sec, "r_out", float, 0.1),
                                 _get(sec, "n_radial", int, 4), _get(sec, "n_angular", int, 32))
        if kind == "gmsh":
            p = Path(_get(sec, "path", str))
            return import_gmsh(p if p.is_absolute() else base / p)
    except (MeshError, OSError) as err:
        raise ConfigError(f"[mesh] {err}") from None
    raise ConfigError(f"[mesh] unknown kind {kind!r}")


def _expression(src):
    code = compile(src, "<ic>", "eval")
    for name in code.co_names:
        if name not in _EXPR_NAMES and name not in ("x", "y", "z"):
            raise ConfigError(f"[ic] name {name!r} not allowed in expression")

    def f(x):
        env = dict(_EXPR_NAMES, x=x[..., 0], y=x[..., 1], z=x[..., 2] if x.shape[-1] > 2 else 0.0)
        return np.broadcast_to(eval(code, {"__builtins__": {}}, env), x.shape[:-1])
    return f


def _initial(sec):
    kind = sec.get("type", "zero")
    if kind == "zero":
        return lambda x: np.zeros(x.shape[:-1])
    if kind == "gaussian":
        return gaussian(_get(sec, "amplitude", float, 0.4), _get(sec, "center", _floats, (0.05, 0.05, 0.05)),
                        _get(sec, "width", float, 0.05))
    if kind == "expression":
        return _expression(_get(sec, "c", str))
    raise ConfigError(f"[ic] unknown type {kind!r}")


def _bc(cp, name, default, mesh):
    if not cp.has_section(name):
        return dict(default)
    spec = dict(cp[name])
    tags = mesh.boundary_tags() | {"all"}
    for tag, kind in spec.items():
        if tag not in tags:
            raise ConfigError(f"[{name}] tag {tag!r} not on the mesh (have {sorted(tags)})")
        if kind.lower() not in ("dirichlet", "neumann", "d", "n"):
            raise ConfigError(f"[{name}] {tag}: unknown condition {kind!r}")
    return spec


def parse_config(text: str, base_dir=".") -> RunConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(str(err)) from None
    for sec in ("mesh", "params", "time"):
        if not cp.has_section(sec):
            raise ConfigError(f"missing section [{sec}]")
    mesh = _build_mesh(cp["mesh"], Path(base_dir))

    ps = cp["params"]
    kw = {}
    for k in ps:
        if k in _PARAM_KEYS:
            kw[k] = _get(ps, k, float)
        elif k == "axon_dir":
            kw[k] = _get(ps, k, _floats)
        elif k not in ("p", "p_c", "p_g", "p_u"):
            raise ConfigError(f"[params] unknown key {k!r}")
    p = _get(ps, "p", int, 2)
    degrees = tuple(_get(ps, k, int, p) for k in ("p_c", "p_g", "p_u"))
    if min(degrees) < 1:
        raise ConfigError("[params] polynomial degrees must be >= 1")

    ts = cp["time"]
    kw.update(dt=_get(ts, "dt", float), T=_get(ts, "t", float), theta=_get(ts, "theta", float, 0.5))
    try:
        params = ModelParams(**kw)
    except (PhysicsError, TypeError) as err:
        raise ConfigError(f"[params] {err}") from None

    ic = cp["ic"] if cp.has_section("ic") else {}
    out = cp["output"] if cp.has_section("output") else None
    cfg = RunConfig(mesh, params, degrees,
                    _bc(cp, "bc.c", {"all": "neumann"}, mesh),
                    _bc(cp, "bc.u", {"all": "dirichlet"}, mesh),
                    _initial(ic) if ic else _initial({}),
                    startup_steps=_get(ts, "startup_steps", int, 0))
    if out is not None:
        cfg.out_dir = Path(out.get("dir", "out"))
        cfg.stride = _get(out, "stride", int, 10)
        cfg.vtk = out.getboolean("vtk", True)
        cfg.check = out.get("check", "none")
        if cfg.check not in ("none", "steady"):
            raise ConfigError(f"[output] unknown check {cfg.check!r}")
    if cfg.stride < 1:
        raise ConfigError("[output] stride must be >= 1")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    return parse_config(text, path.parent)


STEADY_EXAMPLE = """\
[mesh]
kind = annulus
r_in = 0.05
r_out = 0.1
n_radial = 4
n_angular = 32

[params]
p = 2
gamma = 0.05
tau = 1.0

[time]
dt = 0.05
T = 15
theta = 0.5
startup_steps = 2

[bc.c]
all = neumann

[bc.u]
inner = dirichlet
outer = neumann

[ic]
type = gaussian
amplitude = 0.4
center = 0.05 0.05
width = 0.05

[output]
dir = out
stride = 20
vtk = yes
check = steady
"""
