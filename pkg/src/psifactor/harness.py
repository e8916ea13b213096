"""Command line, configuration, experiment dispatch and report emission."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .experiments import EXPERIMENTS, ExperimentResult, oneway_demo  # noqa: F401  (oneway_demo re-exported)
from .microlocal import DEG

log = logging.getLogger("psifactor")

ENV_PREFIX = "PSIFACTOR_"


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass
class ExperimentConfig:
    experiments: Optional[List[str]] = None
    seed: int = 0
    out: str = "report"
    figures: bool = False
    # ladder for symbol- and composition-level fits
    eps_max: float = 2.0 ** -3
    eps_min: float = 2.0 ** -10
    eps_count: Optional[int] = None
    orders: List[int] = field(default_factory=lambda: [1, 2, 3])
    slope_tol: float = 0.5
    floor: float = 1e-13
    exact_tol: float = 1e-10
    # operator and regions
    amp: float = 0.5
    c_expr: Optional[str] = None
    constant_c: Optional[float] = None
    coef_samples: int = 32
    theta1: float = 20 * DEG
    gamma1: float = 30 * DEG
    gamma2: float = 50 * DEG
    theta2: float = 60 * DEG
    K: float = 1.0
    samples: int = 10_000
    cut_K: float = 0.1
    # grids
    nx: int = 128
    tau: float = 1.0
    tau_op: float = 0.5
    op_eps_max: float = 2.0 ** -2
    op_eps_min: float = 2.0 ** -6
    diag_nx: int = 64
    diag_nz: int = 128
    diag_order: int = 2
    # wavefront
    wf_n: int = 512
    wf_eps_max: float = 2.0 ** -3
    wf_eps_min: float = 2.0 ** -7
    wf_xi0: float = 0.5
    wf_sigma: float = 0.15
    wf_window: float = 0.4
    wf_K: float = 0.25
    wf_Nw: float = 1.0
    # one-way demo
    demo_c: str = "2 + 0.2*sin(y1 + y2)"
    demo_c0: float = 2.0
    demo_tau: float = 0.5
    demo_xi0: float = 0.05
    demo_width: float = 0.5
    demo_nx: int = 128
    demo_nz: int = 128
    demo_depth: float = 1.0
    demo_order: int = 3
    demo_tol: float = 1e-6
    demo_eps_max: float = 2.0 ** -3
    demo_eps_min: float = 2.0 ** -6

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _coerce(name: str, f: dataclasses.Field, value):
    typ = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if value is None:
            if typ.startswith("Optional"):
                return None
            raise ValueError("null not allowed")
        if "List[int]" in typ:
            if isinstance(value, str):
                value = [int(v) for v in value.replace(" ", "").split(",") if v]
            return [int(v) for v in value]
        if "List[str]" in typ:
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
            return [str(v) for v in value]
        if "bool" in typ:
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes", "on")
            return bool(value)
        if "int" in typ and "float" not in typ:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError("expected an integer")
            return int(value)
        if "float" in typ:
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, f"cannot interpret {value!r} ({exc})") from None


def config_from_dict(d: Dict[str, Any], base: Optional[ExperimentConfig] = None, prefix: str = "") -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    flat: Dict[str, Any] = {}
    for k, v in d.items():
        if isinstance(v, dict):
            for k2, v2 in v.items():
                flat[f"{k}_{k2}"] = v2
        else:
            flat[k] = v
    for k, v in flat.items():
        if k not in fields:
            raise ConfigError(f"{prefix}{k}", "unknown field")
        setattr(cfg, k, _coerce(f"{prefix}{k}", fields[k], v))
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # python < 3.11
            import tomli as tomllib
        data = tomllib.loads(text)
    else:
        data = json.loads(text)
    return config_from_dict(data, prefix=f"{path.name}:")


def apply_env(cfg: ExperimentConfig, environ=None) -> ExperimentConfig:
    environ = os.environ if environ is None else environ
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower()
        if name not in fields:
            raise ConfigError(f"${key}", "unknown field")
        setattr(cfg, name, _coerce(f"${key}", fields[name], raw))
    return cfg


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    for e in cfg.experiments or []:
        if e not in EXPERIMENTS:
            raise ConfigError("experiments", f"unknown experiment {e!r}; choose from {sorted(EXPERIMENTS)}")
    for name in ("eps_max", "eps_min", "op_eps_max", "op_eps_min", "wf_eps_max", "wf_eps_min", "demo_eps_max", "demo_eps_min"):
        v = getattr(cfg, name)
        if not 0 < v < 1:
            raise ConfigError(name, "must lie in (0, 1)")
    for lo, hi in (("eps_min", "eps_max"), ("op_eps_min", "op_eps_max"), ("wf_eps_min", "wf_eps_max"), ("demo_eps_min", "demo_eps_max")):
        if not getattr(cfg, lo) < getattr(cfg, hi):
            raise ConfigError(lo, f"must be below {hi}")
        n = cfg.eps_count if lo == "eps_min" and cfg.eps_count else round(math.log2(getattr(cfg, hi) / getattr(cfg, lo))) + 1
        if n < 4:
            raise ConfigError(lo, "ladder needs at least 4 points")
    if not cfg.orders or any(N < 1 for N in cfg.orders):
        raise ConfigError("orders", "truncation orders must be >= 1")
    if not 0 < cfg.theta1 < cfg.gamma1 < cfg.gamma2 < cfg.theta2 < math.pi / 2:
        raise ConfigError("theta1", "need 0 < theta1 < gamma1 < gamma2 < theta2 < pi/2")
    for name in ("nx", "diag_nx", "diag_nz", "wf_n", "demo_nx", "demo_nz"):
        if getattr(cfg, name) < 8:
            raise ConfigError(name, "grid too small")
    if cfg.constant_c is not None and not cfg.constant_c > 0:
        raise ConfigError("constant_c", "must be positive")
    if not abs(cfg.amp) < 2:
        raise ConfigError("amp", "c = 2 + amp sin must stay positive")
    if cfg.demo_order < 1 or cfg.diag_order < 1:
        raise ConfigError("demo_order", "orders must be >= 1")
    return cfg


# ---------------------------------------------------------------------------
# reports


@dataclass
class Report:
    results: List[ExperimentResult]
    config: ExperimentConfig
    out: Optional[Path] = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def summary(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "experiments": {r.name: r.summary for r in self.results},
            "config": self.config.to_dict(),
            "environment": environment_stamp(),
        }


def environment_stamp() -> Dict[str, str]:
    import scipy
    return {
        "psifactor": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v)
    return v


def write_csv(rows: Sequence[Dict[str, Any]], path: Path) -> None:
    keys: List[str] = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\r\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k, "")) for k in keys})
    path.write_bytes(buf.getvalue().encode())


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    return o


def write_report(report: Report, out: Path, figures: bool = False) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    for r in report.results:
        write_csv(r.rows, out / f"{r.name}.csv")
    (out / "summary.json").write_text(json.dumps(_jsonable(report.summary()), indent=2, sort_keys=True))
    if figures:
        write_figures(report, out)
    report.out = out
    return out


def write_figures(report: Report, out: Path) -> List[Path]:
    """Log-log ladder plots of every experiment with an eps column (optional, needs matplotlib)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for r in report.results:
        rows = [row for row in r.rows if "eps" in row and ("value" in row or "rel_diff" in row)]
        if not rows:
            continue
        groups: Dict[str, List] = {}
        for row in rows:
            key = ", ".join(f"{k}={row[k]}" for k in row if k not in ("eps", "omega", "value", "rel_diff", "experiment", "rk4_steps"))
            groups.setdefault(key, []).append((row["eps"], row.get("value", row.get("rel_diff"))))
        fig, ax = plt.subplots(figsize=(6, 4))
        for key, pts in groups.items():
            pts = [(e, v) for e, v in pts if v > 0]
            if pts:
                e, v = zip(*sorted(pts))
                ax.loglog(e, v, marker="o", label=key or r.name)
        ax.set_xlabel("eps")
        ax.set_ylabel("residual")
        ax.set_title(r.name)
        if ax.lines and len(groups) <= 12:
            ax.legend(fontsize=6)
        p = out / f"{r.name}.png"
        fig.tight_layout()
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(p)
    return paths


def run(cfg: ExperimentConfig, out: Optional[Path] = None) -> Report:
    validate(cfg)
    np.random.seed(cfg.seed % (2 ** 32))
    results = []
    names = SUBCOMMANDS["suite"] if cfg.experiments is None else cfg.experiments
    for name in names:
        t0 = time.perf_counter()
        log.info("running %s", name)
        res = EXPERIMENTS[name](cfg)
        res.summary.setdefault("seconds", time.perf_counter() - t0)
        log.info("%s: %s", name, "pass" if res.passed else "FAIL")
        results.append(res)
    report = Report(results, cfg)
    if out is not None:
        write_report(report, out, cfg.figures)
    return report


# ---------------------------------------------------------------------------
# CLI

SUBCOMMANDS = {
    "compose": ["compose-residual"],
    "parametrix": ["parametrix-residual"],
    "factorize": ["factorize-residual"],
    "wavefront": ["wavefront-suite"],
    "diagonalize": ["diagonalize-residual"],
    "demo": ["oneway-demo"],
    "suite": ["classify", "compose-residual", "exactness", "factorize-residual", "parametrix-residual",
              "wavefront-suite", "diagonalize-residual", "oneway-demo"],
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psifactor", description="Semiclassical one-way factorization experiments.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON or TOML configuration file")
        s.add_argument("--out", help="report directory")
        s.add_argument("--seed", type=int)
        s.add_argument("--eps-min", type=float)
        s.add_argument("--eps-max", type=float)
        s.add_argument("--eps-count", type=int)
        s.add_argument("--order", type=int, action="append", help="truncation order N (repeatable)")
        s.add_argument("--figures", action="store_true", help="also write PNG ladder plots")
        s.add_argument("--experiments", help="comma-separated experiment list (suite only)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        apply_env(cfg)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.eps_min is not None:
            cfg.eps_min = args.eps_min
        if args.eps_max is not None:
            cfg.eps_max = args.eps_max
        if args.eps_count is not None:
            cfg.eps_count = args.eps_count
        if args.order:
            cfg.orders = list(args.order)
        if args.figures:
            cfg.figures = True
        if args.out:
            cfg.out = args.out
        if args.experiments is not None:
            cfg.experiments = [e for e in args.experiments.split(",") if e]
        elif args.command != "suite" or cfg.experiments is None:
            # subcommands run their own experiment; suite honours a list from config or environment
            cfg.experiments = list(SUBCOMMANDS[args.command])
        report = run(cfg, Path(cfg.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for r in report.results:
        for g in r.gates:
            print(f"{'PASS' if g['passed'] else 'FAIL'}  {r.name}: {g['gate']}")
    print(f"report written to {report.out}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
