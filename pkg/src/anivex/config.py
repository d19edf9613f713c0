"""Experiment configuration: JSON schema, a small expression grammar, and
construction of the runtime objects (dilation, grid, exponent, functions).

Expression grammar: arithmetic over the coordinate names x (alias x0) and
x1, ..., with + - * / ** and unary minus, numeric literals, the constants pi
and e, and the functions sin, cos, tan, exp, log, sqrt, abs, sign, where.
Parsed through the ast module with a strict whitelist; nothing else
evaluates.
"""

import ast
import hashlib
import json

import numpy as np

from .dilation import new_dilation
from .errors import ConfigError
from .exponents import Exponent
from .grid import GridFunction, sample, uniform_grid

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sign": np.sign,
    "where": np.where,
}

_CONSTANTS = {"pi": np.pi, "e": np.e}

_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
    ast.Constant,
    ast.Name,
    ast.Call,
    ast.Load,
    ast.Compare,
    ast.Lt,
    ast.LtE,
    ast.Gt,
    ast.GtE,
)


def compile_expression(formula, n):
    """Compile a formula string into a vectorized callable of mesh arrays."""
    try:
        tree = ast.parse(formula, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression: {exc}", field="formula") from None
    names = {"x", *(f"x{i}" for i in range(n))}
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(
                f"disallowed syntax element {type(node).__name__!r}", field="formula"
            )
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                raise ConfigError("only whitelisted functions may be called", field="formula")
        if isinstance(node, ast.Name):
            if node.id not in names and node.id not in _FUNCTIONS and node.id not in _CONSTANTS:
                raise ConfigError(f"unknown name {node.id!r}", field="formula")
    code = compile(tree, "<formula>", "eval")

    def fn(*meshes):
        env = dict(_FUNCTIONS)
        env.update(_CONSTANTS)
        env["x"] = meshes[0]
        for i, m in enumerate(meshes):
            env[f"x{i}"] = m
        return np.asarray(eval(code, {"__builtins__": {}}, env), dtype=float) + np.zeros_like(
            meshes[0]
        )

    return fn


def _require(mapping, key, field):
    try:
        return mapping[key]
    except (KeyError, TypeError):
        raise ConfigError(f"missing key {key!r}", field=field) from None


def build_exponent(spec, grid, field="exponent"):
    kind = _require(spec, "kind", field)
    p_inf = spec.get("p_infinity")
    if kind == "constant":
        value = float(_require(spec, "value", field))
        vals = np.full(grid.resolution, value)
    elif kind == "piecewise":
        axis = int(spec.get("axis", 0))
        breaks = [float(v) for v in _require(spec, "breakpoints", field)]
        values = [float(v) for v in _require(spec, "values", field)]
        if len(values) != len(breaks) + 1:
            raise ConfigError("piecewise needs len(values) == len(breakpoints)+1", field=field)
        coords = grid.meshes()[axis]
        vals = np.full(grid.resolution, values[0])
        for brk, val in zip(breaks, values[1:]):
            vals = np.where(coords >= brk, val, vals)
    elif kind == "expression":
        fn = compile_expression(_require(spec, "formula", field), grid.n)
        vals = fn(*grid.meshes())
    else:
        raise ConfigError(f"unknown exponent kind {kind!r}", field=field)
    if np.any(vals <= 0):
        raise ConfigError("exponent must be strictly positive", field=field)
    return Exponent(GridFunction(grid, vals), p_infinity=p_inf)


def build_function(spec, grid, d, p, field="functions"):
    kind = _require(spec, "kind", field)
    if kind == "expression":
        return sample(grid, compile_expression(_require(spec, "formula", field), grid.n))
    if kind == "piecewise":
        exp_like = build_exponent({**spec, "kind": "piecewise"}, grid, field=field)
        return exp_like.values
    if kind == "atom_seed":
        from .hardy import make_atom

        seed = sample(grid, compile_expression(_require(spec, "formula", field), grid.n))
        ball_spec = _require(spec, "ball", field)
        ball = d.ball(ball_spec["center"], int(ball_spec["scale"]))
        atom = make_atom(
            seed, d, ball, float(spec.get("q", 2.0)), p, int(spec.get("s", 0))
        )
        return atom.values
    raise ConfigError(f"unknown function kind {kind!r}", field=field)


class ExperimentConfig:
    """Parsed experiment description plus the constructed runtime objects."""

    def __init__(self, raw):
        self.raw = raw
        try:
            matrix = _require(_require(raw, "dilation", "dilation"), "matrix", "dilation.matrix")
            self.dilation = new_dilation(matrix)
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(str(exc), field="dilation") from None
        gspec = _require(raw, "grid", "grid")
        self.grid = uniform_grid(
            _require(gspec, "lower", "grid.lower"),
            _require(gspec, "upper", "grid.upper"),
            _require(gspec, "resolution", "grid.resolution"),
        )
        self.exponent = build_exponent(_require(raw, "exponent", "exponent"), self.grid)
        self.functions = {}
        for name, spec in raw.get("functions", {}).items():
            self.functions[name] = build_function(
                spec, self.grid, self.dilation, self.exponent, field=f"functions.{name}"
            )
        self.params = dict(raw.get("params", {}))
        self.checks = list(raw.get("checks", []))
        self.seed = int(raw.get("seed", 0))
        self.budget = int(raw.get("budget", 120))
        if any(
            isinstance(c, dict) and c.get("randomized", False) for c in self.checks
        ) and "seed" not in raw:
            raise ConfigError("randomized checks require an explicit seed", field="seed")

    @classmethod
    def from_path(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}: {exc.msg}", field=str(path)) from None
        except OSError as exc:
            raise ConfigError(str(exc), field=str(path)) from None
        return cls(raw)

    def content_hash(self):
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()
