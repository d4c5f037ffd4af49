"""Run configuration: an INI-style file of ``key = value`` pairs.

Sections are ``[run]``, ``[model]``, ``[fit]``, ``[sweep]``, ``[verify]``
and ``[simulate]``; each subcommand reads the sections it needs.  The
grammar is documented in ``docs/config.md``.  Relative paths resolve against
the directory holding the config file.
"""
from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, ParseError
from .estimators import METHODS, FitConfig
from .kernels import BLOCK_LIMIT, FAMILIES, BlockDistribution, KernelPlan
from .models import ERGM_STATS, BinaryPairwiseModel, ErgmModel, graph_state, read_attributes, \
    read_edge_list

KNOWN = {
    "run": {"seed", "out", "jobs"},
    "model": {"type", "edges", "attributes", "n", "stats", "alpha", "degree_cap", "m",
              "structure", "couplings", "observed"},
    "fit": {"method", "family", "k", "s", "blocks", "pair", "n_chains", "gain_a", "max_iters",
            "tol", "ridge", "max_step", "expectation_mode", "hessian", "common_random_numbers",
            "block_limit", "equilibrium_chains", "equilibrium_burn", "equilibrium_sweeps",
            "plot"},
    "sweep": {"families", "s", "k", "method", "n_chains", "max_iters", "gain_a", "tol",
              "reference_sweeps", "reference_chains", "reference_iters", "equilibrium_chains",
              "equilibrium_burn", "equilibrium_sweeps", "quantiles", "plot"},
    "verify": {"suite", "perturb", "kl_steps", "plot"},
    "simulate": {"n", "grades", "density", "homophily", "degree_cap", "prefix"},
}


class _Source:
    """configparser plus the line number of every key."""

    def __init__(self, path):
        self.path = os.fspath(path)
        if not os.path.isfile(self.path):
            raise ConfigError(f"config file not found: {self.path}")
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                            interpolation=None)
        with open(self.path, encoding="utf-8") as fh:
            text = fh.read()
        try:
            self.cp.read_string(text, source=self.path)
        except configparser.Error as exc:
            lineno = getattr(exc, "lineno", 0) or 0
            raise ParseError(self.path, lineno, str(exc).splitlines()[0]) from None
        self.lines = {}
        section = None
        for i, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
            elif section and "=" in line and not line.startswith(("#", ";")):
                self.lines[(section, line.split("=", 1)[0].strip().lower())] = i
        for sec in self.cp.sections():
            if sec not in KNOWN:
                raise ParseError(self.path, self._secline(sec), f"unknown section [{sec}]")
            for key in self.cp[sec]:
                if key not in KNOWN[sec]:
                    raise ParseError(self.path, self.lines.get((sec, key), 0),
                                     f"unknown key {key!r} in [{sec}]")
        self.base = os.path.dirname(os.path.abspath(self.path))

    def _secline(self, sec):
        with open(self.path, encoding="utf-8") as fh:
            for i, raw in enumerate(fh, 1):
                if raw.strip() == f"[{sec}]":
                    return i
        return 0

    def has(self, sec, key):
        return self.cp.has_option(sec, key)

    def raw(self, sec, key, default=None):
        if not self.has(sec, key):
            return default
        return self.cp.get(sec, key).strip()

    def fail(self, sec, key, msg):
        raise ParseError(self.path, self.lines.get((sec, key), 0), f"[{sec}] {key}: {msg}")

    def get(self, sec, key, conv, default=None):
        if not self.has(sec, key):
            return default
        text = self.raw(sec, key)
        try:
            return conv(text)
        except (ValueError, ZeroDivisionError, ConfigError) as exc:
            self.fail(sec, key, str(exc) or f"cannot parse {text!r}")

    def path_of(self, sec, key):
        p = self.raw(sec, key)
        if p is None:
            return None
        full = p if os.path.isabs(p) else os.path.join(self.base, p)
        if not os.path.isfile(full):
            self.fail(sec, key, f"file not found: {p}")
        return full


# --------------------------------------------------------------------------
# value converters
# --------------------------------------------------------------------------

def to_real(text):
    """Float or exact fraction such as ``2/3``."""
    return float(Fraction(text)) if "/" in text else float(text)


def to_bool(text):
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def to_opt_int(text):
    return None if text.lower() in ("none", "") else int(text)


def to_list(text, conv=str):
    return [conv(v.strip()) for v in text.replace("\n", ",").split(",") if v.strip()]


def to_int_grid(text):
    """Comma list of ints; ``2^4..2^10`` expands powers of two, ``a..b`` a range."""
    out = []
    for item in to_list(text):
        if ".." in item:
            lo, hi = item.split("..")
            if lo.startswith("2^") and hi.startswith("2^"):
                out += [2 ** e for e in range(int(lo[2:]), int(hi[2:]) + 1)]
            else:
                out += list(range(int(lo), int(hi) + 1))
        elif item.startswith("2^"):
            out.append(2 ** int(item[2:]))
        else:
            out.append(int(item))
    if not out:
        raise ValueError("empty grid")
    return out


def to_blocks(text):
    """``0-1, 2-3-4`` -> ((0, 1), (2, 3, 4)); an optional ``:weight`` suffix per block."""
    blocks, weights = [], []
    for item in to_list(text):
        spec, _, w = item.partition(":")
        blocks.append(tuple(int(v) for v in spec.split("-")))
        weights.append(float(w) if w else 1.0)
    if not blocks:
        raise ValueError("no blocks given")
    w = np.asarray(weights)
    return BlockDistribution(tuple(blocks), tuple(w / w.sum()))


# --------------------------------------------------------------------------
# typed configuration
# --------------------------------------------------------------------------

@dataclass
class ModelSpec:
    model: object
    y_obs: np.ndarray
    files: tuple = ()


@dataclass
class RunConfig:
    path: str
    seed: int
    out: str
    jobs: int
    source: _Source = field(repr=False)
    digest: str = ""

    def section(self, name):
        return self.source.cp[name] if self.source.cp.has_section(name) else {}

    @property
    def config_hash(self):
        return self.digest


def _hash(src: _Source, seed, extra_files):
    h = hashlib.sha256()
    for sec in sorted(src.cp.sections()):
        for key in sorted(src.cp[sec]):
            if sec == "run" and key in ("out", "jobs"):
                continue
            h.update(f"{sec}.{key}={src.cp[sec][key].strip()}\n".encode())
    h.update(f"seed={seed}\n".encode())
    for p in extra_files:
        with open(p, "rb") as fh:
            h.update(hashlib.sha256(fh.read()).digest())
    return h.hexdigest()[:12]


def load(path, seed=None, out=None, jobs=None) -> RunConfig:
    """Parse ``path``; command-line values override ``[run]`` entries."""
    src = _Source(path)
    cfg_seed = src.get("run", "seed", int)
    if seed is None:
        seed = cfg_seed
    if seed is None:
        raise ConfigError(f"{src.path}: a seed is required ([run] seed or --seed)")
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if out is None:
        out = src.raw("run", "out", "results")
        if not os.path.isabs(out):
            out = os.path.normpath(os.path.join(src.base, out))
    else:
        out = os.path.abspath(out)
    if jobs is None:
        jobs = src.get("run", "jobs", int, 1)
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")
    files = [p for p in (src.path_of("model", "edges"), src.path_of("model", "attributes"))
             if p] if src.cp.has_section("model") else []
    return RunConfig(src.path, int(seed), out, jobs, src, _hash(src, seed, files))


def build_model(rc: RunConfig) -> ModelSpec:
    src = rc.source
    if not src.cp.has_section("model"):
        raise ConfigError(f"{src.path}: missing [model] section")
    kind = src.raw("model", "type", "ergm")
    if kind == "ergm":
        edges_path = src.path_of("model", "edges")
        if edges_path is None:
            src.fail("model", "edges", "an edge list is required")
        n, edges = read_edge_list(edges_path, src.get("model", "n", int))
        stats = tuple(src.get("model", "stats", to_list, list(ERGM_STATS)))
        grades = None
        if "nodematch" in stats:
            attr = src.path_of("model", "attributes")
            if attr is None:
                src.fail("model", "attributes", "nodematch needs an attribute file")
            grades = read_attributes(attr, n)
        alpha = src.get("model", "alpha", to_real, 2 / 3 if "gwesp" in stats else None)
        if "gwesp" not in stats:
            alpha = None
        cap = src.get("model", "degree_cap", to_opt_int)
        try:
            model = ErgmModel(n, stats, grades=grades, alpha=alpha, degree_cap=cap)
        except (ConfigError, ValueError) as exc:
            raise ConfigError(f"{src.path}: [model] {exc}") from None
        y = graph_state(n, edges).bits
        off = model.offsets(y[None, :])[0]
        if not np.isfinite(off):
            raise ConfigError(f"{edges_path}: observed network violates the degree cap")
        return ModelSpec(model, y, (edges_path,))
    if kind == "pairwise":
        m = src.get("model", "m", int)
        if m is None:
            src.fail("model", "m", "pairwise models need m")
        couplings = src.get("model", "couplings", to_blocks, None)
        edges = list(couplings.blocks) if couplings else []
        structure = src.raw("model", "structure", "homogeneous")
        if structure == "independent":
            model = BinaryPairwiseModel.independent(m)
        elif structure == "homogeneous":
            model = BinaryPairwiseModel.homogeneous(m, edges)
        elif structure == "full":
            model = BinaryPairwiseModel.full(m, edges)
        else:
            src.fail("model", "structure", "expected independent, homogeneous or full")
        obs = src.get("model", "observed", lambda t: [int(v) for v in t.replace(",", " ").split()])
        if obs is None or len(obs) != m or any(v not in (0, 1) for v in obs):
            src.fail("model", "observed", f"need {m} binary values")
        return ModelSpec(model, np.array(obs, dtype=np.uint8))
    src.fail("model", "type", "expected ergm or pairwise")


def build_plan(src: _Source, sec, family=None, k=None, s=None) -> KernelPlan:
    family = family or src.raw(sec, "family", "random_scan_gibbs")
    if family not in FAMILIES:
        src.fail(sec, "family", f"unknown kernel family {family!r}")
    k = k if k is not None else src.get(sec, "k", int, 1)
    if family == "node_s":
        s = s if s is not None else src.get(sec, "s", int)
        if s is None:
            src.fail(sec, "s", "node_s needs s")
    else:
        s = None
    blocks = None
    if family in ("blocked_gibbs", "ci_pair", "within_block"):
        blocks = src.get(sec, "blocks", to_blocks)
        if blocks is None:
            src.fail(sec, "blocks", f"{family} needs blocks")
    pair = tuple(src.get(sec, "pair", lambda t: [int(v) for v in t.split("-")], [0, 1]))
    try:
        return KernelPlan(family, k, s=s, blocks=blocks, pair=pair,
                          block_limit=src.get(sec, "block_limit", int, BLOCK_LIMIT))
    except ConfigError as exc:
        src.fail(sec, "family", str(exc))


def build_fit_config(rc: RunConfig, sec="fit", plan=None, seed=None, **over) -> FitConfig:
    src = rc.source
    method = over.pop("method", None) or src.raw(sec, "method", "cd_newton")
    if method not in METHODS:
        src.fail(sec, "method", f"unknown method {method!r}")
    if plan is None and method not in ("mple", "composite"):
        plan = build_plan(src, sec)
    blocks = None
    if method == "composite":
        blocks = src.get(sec, "blocks", to_blocks)
        if blocks is None:
            src.fail(sec, "blocks", "composite fits need blocks")
    kw = dict(
        method=method, plan=plan, blocks=blocks,
        gain_a=src.get(sec, "gain_a", to_real, 0.5),
        max_iters=src.get(sec, "max_iters", int, 100),
        tol=src.get(sec, "tol", to_real),
        ridge=src.get(sec, "ridge", to_real, 1e-6),
        max_step=src.get(sec, "max_step", to_real, 1.0),
        n_chains=src.get(sec, "n_chains", int, 1024),
        expectation_mode=src.raw(sec, "expectation_mode", "monte_carlo"),
        hessian=src.raw(sec, "hessian", "auto"),
        common_random_numbers=src.get(sec, "common_random_numbers", to_bool, True),
        seed=rc.seed if seed is None else seed,
    )
    kw = {key: val for key, val in kw.items() if key in FitConfig.__dataclass_fields__}
    kw.update(over)
    try:
        return FitConfig(**kw)
    except ConfigError as exc:
        raise ConfigError(f"{src.path}: [{sec}] {exc}") from None
