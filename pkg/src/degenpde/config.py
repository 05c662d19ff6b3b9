"""Scenario configuration: strict key = value sections mapped to a ProblemSpec.

Unknown sections or keys are fatal with a line-anchored message; silently
ignored tolerance typos are the classic numerics footgun.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coupling import CouplingConfig
from .elliptic import EllipticConfig
from .errors import ConfigError
from .grid import StructuredGrid, read_snapshot
from .model import (
    AffineLaw,
    ConstantD,
    MixedD,
    PowerLaw,
    PRESETS,
    ProblemSpec,
    SubstrateD,
    SubstrateSpec,
)
from .oracles import BarenblattSolution
from .stepper import EpsSchedule, TimeGrid

_KNOWN_KEYS = {
    "domain": {"dim", "extent", "n", "gamma1"},
    "time": {"T", "N"},
    "regularization": {"eps"},
    "model": {"preset", "k1", "k2", "k3", "k4", "k5", "d1", "d2", "a", "b", "lambda"},
    "substrate": {"nu", "D", "v", "h", "S0"},
    "initial": {"M0"},
    "solver": {
        "tol_newton", "max_iter", "damping", "tol_fp", "max_sweeps",
        "theta_c", "mode", "eps_substrate", "seed",
    },
    "output": {"dir", "snapshot_stride", "figures"},
    "study": {"oracle"},
}
_PRESET_CONSTANTS = {
    "eberl2001": {"k1", "k2", "k3", "k4", "k5", "d1", "d2", "a", "b"},
    "cellulolytic2017": {"lambda", "d2", "a", "b"},
    "pme": {"a"},
}


@dataclass
class RunSetup:
    """Everything a command needs: problem, discretization, solver knobs, output."""

    spec: ProblemSpec
    tg: TimeGrid
    eps: object  # float or EpsSchedule
    coupling: CouplingConfig
    elliptic: EllipticConfig
    out_dir: Path = Path("out")
    snapshot_stride: int = 0
    figures: bool = True
    oracle: str | None = None
    seed: int = 0
    m0_kind: str = "constant"
    barenblatt: BarenblattSolution | None = None
    extras: dict = field(default_factory=dict)


def _line_of(text, needle):
    for i, line in enumerate(text.splitlines(), start=1):
        if re.match(rf"\s*{re.escape(needle)}\s*[=:]", line) or re.match(
            rf"\s*\[\s*{re.escape(needle)}\s*\]", line
        ):
            return i
    return None


def _fail(text, path, needle, message):
    line = _line_of(text, needle)
    loc = f"{path}:{line}" if line else f"{path}"
    raise ConfigError(f"{loc}: {message}")


def _floats(value):
    return [float(v) for v in value.replace(",", " ").split()]


def load_config(path):
    """Parse a scenario file into a RunSetup or fail with a located message."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), strict=True)
    cp.optionxform = str  # keys are case-sensitive (T vs t)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    substrate_sections = []
    for sec in cp.sections():
        base = sec.split()[0] if sec.split() else sec
        if base == "substrate":
            substrate_sections.append(sec)
            known = _KNOWN_KEYS["substrate"]
        elif sec in _KNOWN_KEYS:
            known = _KNOWN_KEYS[sec]
        else:
            _fail(text, path, sec, f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in known:
                _fail(text, path, key, f"unknown key {key!r} in section [{sec}]")

    def get(sec, key, default=None, required=False):
        if sec in cp and key in cp[sec]:
            return cp[sec][key].strip()
        if required:
            _fail(text, path, sec, f"missing required key {key!r} in section [{sec}]")
        return default

    # --- domain ---
    dim = int(get("domain", "dim", "1"))
    if dim not in (1, 2):
        _fail(text, path, "dim", f"dim must be 1 or 2, got {dim}")
    n_vals = [int(v) for v in get("domain", "n", required=True).split()]
    ext_vals = _floats(get("domain", "extent", required=True))
    if len(n_vals) == 1 and dim == 2:
        n_vals = n_vals * 2
    if len(ext_vals) == 2 and dim == 2:
        ext_vals = ext_vals * 2
    if len(n_vals) != dim or len(ext_vals) != 2 * dim:
        _fail(text, path, "n", "resolution/extent entries do not match dim")
    extents = tuple((ext_vals[2 * d], ext_vals[2 * d + 1]) for d in range(dim))
    g1_raw = get("domain", "gamma1", "none").replace(",", " ").split()
    if g1_raw == ["none"] or not g1_raw:
        gamma1 = frozenset()
    elif g1_raw == ["all"]:
        gamma1 = frozenset(SIDES := ("left", "right") if dim == 1 else ("left", "right", "bottom", "top"))
    else:
        gamma1 = frozenset(g1_raw)
    try:
        grid = StructuredGrid(tuple(n_vals), extents, gamma1)
    except Exception as exc:
        _fail(text, path, "gamma1", str(exc))

    # --- time ---
    T = float(get("time", "T", required=True))
    N = int(get("time", "N", required=True))
    try:
        tg = TimeGrid(T, N)
    except ValueError as exc:
        _fail(text, path, "T", str(exc))

    # --- model preset ---
    preset_name = get("model", "preset", required=True)
    if preset_name not in PRESETS:
        _fail(text, path, "preset", f"unknown preset {preset_name!r}; choose from {sorted(PRESETS)}")
    allowed = _PRESET_CONSTANTS[preset_name]
    kwargs = {}
    for key in cp["model"] if "model" in cp else []:
        if key == "preset":
            continue
        if key not in allowed:
            _fail(text, path, key, f"constant {key!r} does not apply to preset {preset_name!r}")
        kwargs["lam" if key == "lambda" else key] = float(cp["model"][key])
    if preset_name == "eberl2001" and len(substrate_sections) == 2:
        kwargs["n_substrates"] = 2
    try:
        preset = PRESETS[preset_name](**kwargs)
    except Exception as exc:
        _fail(text, path, "preset", f"preset construction failed: {exc}")

    # --- substrates ---
    substrates = []
    for sec in sorted(substrate_sections):
        nu = float(get(sec, "nu", "0"))
        d_spec = None
        d_raw = get(sec, "D")
        if d_raw is None and nu > 0:
            d_spec = preset.substrate_defaults.get("D")
            if d_spec is None:
                _fail(text, path, sec, f"[{sec}] needs a diffusion entry D")
        elif d_raw is not None:
            parts = d_raw.split()
            kind = parts[0]
            try:
                if kind == "constant":
                    d_spec = ConstantD(float(parts[1]))
                elif kind == "of_s":
                    sub_kind = parts[1]
                    if sub_kind == "power":
                        d_spec = SubstrateD(PowerLaw(a=float(parts[2])))
                    elif sub_kind == "affine":
                        d_spec = SubstrateD(AffineLaw(float(parts[2]), float(parts[3])))
                    else:
                        raise ConfigError(f"unknown of_s law {sub_kind!r}")
                elif kind == "of_ms":
                    if parts[1] != "linear":
                        raise ConfigError(f"unknown of_ms form {parts[1]!r}")
                    d_min, d_max = float(parts[2]), float(parts[3])
                    func = lambda m, s, a=d_min, b=d_max: a + (b - a) * np.clip(m, 0.0, 1.0)
                    d_spec = MixedD(func, d_min, d_max)
                else:
                    raise ConfigError(f"unknown diffusion kind {kind!r}")
            except (IndexError, ValueError) as exc:
                _fail(text, path, "D", f"malformed diffusion entry {d_raw!r}: {exc}")
            except ConfigError as exc:
                _fail(text, path, "D", str(exc))
        v_raw = get(sec, "v")
        v = tuple(_floats(v_raw)) if v_raw is not None else None
        if v is not None and len(v) != dim:
            _fail(text, path, "v", f"flow field needs {dim} components")
        h = float(get(sec, "h", "0"))
        s0_raw = get(sec, "S0", "0").split()
        if s0_raw[0] == "constant" or len(s0_raw) == 1:
            S0 = float(s0_raw[-1])
        elif s0_raw[0] == "bump":
            S0 = _bump_field(grid, [float(v) for v in s0_raw[1:]])
        else:
            _fail(text, path, "S0", f"malformed S0 entry {' '.join(s0_raw)!r}")
        substrates.append(SubstrateSpec(nu=nu, D=d_spec, v=v, h=h, S0=S0))

    # --- initial biomass ---
    m0_raw = get("initial", "M0", required=True).split()
    m0_kind = m0_raw[0]
    barenblatt = None
    try:
        if m0_kind == "constant":
            M0 = np.full(grid.shape, float(m0_raw[1]))
        elif m0_kind == "step":
            x0, left, right = (float(v) for v in m0_raw[1:4])
            xs = grid.meshgrid()[0]
            M0 = np.where(xs <= x0, left, right)
        elif m0_kind == "bump":
            M0 = _bump_field(grid, [float(v) for v in m0_raw[1:]])
        elif m0_kind == "file":
            fdim, fn, fh, _, M0 = read_snapshot(m0_raw[1])
            if fdim != dim or tuple(fn) != grid.shape:
                raise ConfigError(
                    f"snapshot grid {fn} does not match configured grid {grid.shape}"
                )
        elif m0_kind == "barenblatt":
            if not isinstance(preset.law, PowerLaw):
                raise ConfigError("barenblatt initial data requires the pme preset")
            peak = float(m0_raw[1]) if len(m0_raw) > 1 else 0.6
            barenblatt = BarenblattSolution(a=preset.law.a, dim=dim, peak=peak)
            M0 = barenblatt.cell_average_initial(grid)
        else:
            raise ConfigError(f"unknown M0 kind {m0_kind!r}")
    except ConfigError as exc:
        _fail(text, path, "M0", str(exc))
    except (IndexError, ValueError) as exc:
        _fail(text, path, "M0", f"malformed M0 entry: {exc}")

    h0 = None
    if gamma1:
        # Dirichlet biomass data defaults to the boundary-compatible supremum
        h0 = float(np.max(M0))

    try:
        spec = ProblemSpec(
            grid=grid, M0=M0, kinetics=preset.kinetics, law=preset.law, T=T,
            substrates=tuple(substrates), h0=h0,
        )
    except Exception as exc:
        raise ConfigError(f"{path}: invalid problem: {exc}") from exc

    # --- regularization ---
    eps_vals = _floats(get("regularization", "eps", "1e-5"))
    eps = eps_vals[0] if len(eps_vals) == 1 else EpsSchedule(tuple(eps_vals))

    # --- solver ---
    try:
        ecfg = EllipticConfig(
            tol_newton=float(get("solver", "tol_newton", "1e-10")),
            max_iter=int(get("solver", "max_iter", "60")),
            damping=float(get("solver", "damping", "0.5")),
        )
        ccfg = CouplingConfig(
            theta_c=float(get("solver", "theta_c", "0.25")),
            tol_fp=float(get("solver", "tol_fp", "1e-10")),
            max_sweeps=int(get("solver", "max_sweeps", "60")),
            mode=get("solver", "mode", "auto"),
            eps_substrate=float(get("solver", "eps_substrate", "1e-6")),
        )
    except Exception as exc:
        raise ConfigError(f"{path}: invalid solver settings: {exc}") from exc

    figures_raw = get("output", "figures", "yes").lower()
    if figures_raw not in ("yes", "no", "true", "false", "1", "0"):
        _fail(text, path, "figures", f"figures must be boolean-like, got {figures_raw!r}")
    return RunSetup(
        spec=spec,
        tg=tg,
        eps=eps,
        coupling=ccfg,
        elliptic=ecfg,
        out_dir=Path(get("output", "dir", "out")),
        snapshot_stride=int(get("output", "snapshot_stride", "0")),
        figures=figures_raw in ("yes", "true", "1"),
        oracle=get("study", "oracle"),
        seed=int(get("solver", "seed", "0")),
        m0_kind=m0_kind,
        barenblatt=barenblatt,
    )


def _bump_field(grid, params):
    """Radial quartic bump: base + height * (1 - (d/r)^2)^2 inside radius r."""
    if grid.dim == 1:
        cx, radius, height, base = params[0], params[1], params[2], params[3]
        xs = grid.meshgrid()[0]
        d2 = (xs - cx) ** 2
    else:
        cx, cy, radius, height, base = params[0], params[1], params[2], params[3], params[4]
        xs, ys = grid.meshgrid()
        d2 = (xs - cx) ** 2 + (ys - cy) ** 2
    core = np.clip(1.0 - d2 / radius**2, 0.0, None)
    return base + height * core**2
