"""Command line driver: ``run``, ``eigs``, ``bench`` and ``verify-relations``.

Configuration is a flat ``key = value`` file with ``#`` comments; command
line flags override file keys.

Exit codes: 0 success, 1 failed check, 2 configuration error, 3 instability.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

log = logging.getLogger("dgmaxwell")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_UNSTABLE = 0, 1, 2, 3
BLOWUP_FACTOR = 1e6


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


PROFILES = {
    "ramp_x": lambda x, y: 1.0 + 0.5 * x,
    "ramp_y": lambda x, y: 1.0 + 0.5 * y,
}


@dataclass
class RunConfig:
    mesh: str = "structured:2"
    k: int = 3
    alpha: str = "p2"
    h_mode: str = "face"
    epsilon: str = "1.0"
    mu: str = "1.0"
    scheme: str = "leapfrog"
    dt: str = "auto*0.5"
    steps: int = 100
    init: str = "mode:1,1"
    seed: int = 0
    output: str = "out"
    record_every: int = 1
    power_iterations: int = 1000
    p_min: int = 1
    p_max: int = 6
    modes: int = 4
    alphas: str = "0,p2"
    bench_p_min: int = 8
    bench_p_max: int = 32
    bench_p_step: int = 2
    reps: int = 11
    threads: int = 1

    # -- derived values -----------------------------------------------------

    def alpha_value(self, text: str | None = None, k: int | None = None) -> float:
        text = self.alpha if text is None else text
        k = self.k if k is None else k
        if text.strip() == "p2":
            return float((k + 1) ** 2)
        value = _to_float("alpha", text)
        if value < 0:
            raise ConfigError("alpha", "must be nonnegative")
        return value

    def dt_spec(self):
        """('auto', factor) or ('fixed', dt)."""
        text = self.dt.replace(" ", "")
        if text.startswith("auto"):
            rest = text[4:]
            factor = 1.0 if rest == "" else _to_float("dt", rest[1:]) if rest[0] == "*" else None
            if factor is None:
                raise ConfigError("dt", f"expected 'auto' or 'auto*<factor>', got {self.dt!r}")
            if factor <= 0:
                raise ConfigError("dt", "safety factor must be positive")
            return "auto", factor
        value = _to_float("dt", text)
        if value < 0:
            raise ConfigError("dt", "must be nonnegative")
        return "fixed", value

    def init_mode(self):
        text = self.init.replace(" ", "")
        if text == "zero":
            return None
        if text.startswith("mode:"):
            try:
                m, n = (int(v) for v in text[5:].split(","))
            except ValueError:
                raise ConfigError("init", f"expected 'mode:m,n', got {self.init!r}") from None
            if m < 1 or n < 1:
                raise ConfigError("init", "mode numbers must be >= 1")
            return m, n
        raise ConfigError("init", f"expected 'zero' or 'mode:m,n', got {self.init!r}")

    def material(self, key: str, mesh) -> np.ndarray:
        text = getattr(self, key).strip()
        if text in PROFILES:
            cen = mesh.vertices[mesh.triangles].mean(axis=1)
            return PROFILES[text](cen[:, 0], cen[:, 1])
        value = _to_float(key, text)
        if value <= 0:
            raise ConfigError(key, "must be positive")
        return np.full(mesh.nelem, value)

    def build_mesh(self):
        from .mesh import MeshError, build_structured_square, load_mesh

        text = self.mesh.strip()
        try:
            if text.startswith("structured:"):
                n = int(text.split(":", 1)[1])
                return build_structured_square(n)
            return load_mesh(text)
        except (ValueError, OSError, MeshError) as exc:
            raise ConfigError("mesh", str(exc)) from None

    def validate(self):
        if self.k < 0:
            raise ConfigError("k", "must be >= 0")
        if self.steps < 0:
            raise ConfigError("steps", "must be >= 0")
        if self.scheme not in ("leapfrog", "symplectic_euler"):
            raise ConfigError("scheme", f"unknown scheme {self.scheme!r}")
        if self.h_mode not in ("face", "element"):
            raise ConfigError("h_mode", f"must be 'face' or 'element', got {self.h_mode!r}")
        if self.record_every < 1:
            raise ConfigError("record_every", "must be >= 1")
        if self.power_iterations < 1:
            raise ConfigError("power_iterations", "must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        if self.reps < 11:
            raise ConfigError("reps", "must be >= 11")
        kind, factor = self.dt_spec()
        if kind == "auto" and factor > 1.0 and self.steps:
            log.warning("dt safety factor %.3g exceeds 1: the run is expected to be unstable",
                        factor)
        self.alpha_value()
        self.init_mode()
        for key in ("epsilon", "mu"):
            text = getattr(self, key).strip()
            if text not in PROFILES:
                if _to_float(key, text) <= 0:
                    raise ConfigError(key, "must be positive")
        return self


def _to_float(key, text) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {text!r}") from None


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line.split()[0], f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def make_config(values: dict) -> RunConfig:
    cfg = RunConfig()
    for key, value in values.items():
        if key not in FIELD_TYPES:
            raise ConfigError(key, "unknown key")
        if FIELD_TYPES[key] in ("int", int):
            try:
                value = int(value)
            except ValueError:
                raise ConfigError(key, f"expected an integer, got {value!r}") from None
        setattr(cfg, key, value)
    return cfg.validate()


def load_config(path: str | None, overrides: dict) -> RunConfig:
    values = {}
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
        values.update(parse_config_text(text, path))
    values.update({k: str(v) for k, v in overrides.items() if v is not None})
    return make_config(values)


def _header(cfg: RunConfig, command: str) -> list[str]:
    return [f"dgmaxwell {command}", f"seed = {cfg.seed}", f"mesh = {cfg.mesh}", f"k = {cfg.k}"]


# ---------------------------------------------------------------------------
# commands

def cmd_run(cfg: RunConfig, out: Path) -> int:
    from .analysis import project_mode, write_energy_csv
    from .dg import make_system
    from .timestep import State, estimate_dt_max, integrate

    mesh = cfg.build_mesh()
    system = make_system(mesh, cfg.k, alpha=cfg.alpha_value(), eps=cfg.material("epsilon", mesh),
                         mu=cfg.material("mu", mesh), h_mode=cfg.h_mode)
    mode = cfg.init_mode()
    state = State.zeros(system) if mode is None else project_mode(system, *mode)
    kind, value = cfg.dt_spec()
    dt_max = float(estimate_dt_max(system, cfg.power_iterations, cfg.seed))
    dt = float(value * dt_max if kind == "auto" else value)
    if not np.isfinite(dt):
        raise ConfigError("dt", "automatic step is unbounded for a zero operator")
    final, history, diverged = integrate(system, state, dt, cfg.steps, cfg.scheme,
                                         cfg.record_every, blowup=BLOWUP_FACTOR)
    header = _header(cfg, "run") + [f"scheme = {cfg.scheme}", f"dt = {dt!r}",
                                    f"dt_max = {dt_max!r}"]
    write_energy_csv(out / "energy.csv", history, header)
    e = np.array([h[2] for h in history])
    dev = float(np.max(np.abs(e / e[0] - 1))) if e[0] > 0 else 0.0
    summary = [
        f"steps_done = {history[-1][0]}",
        f"t_final = {final.t!r}",
        f"dt = {dt!r}",
        f"dt_max = {dt_max!r}",
        f"energy_initial = {float(e[0])!r}",
        f"energy_final = {float(e[-1])!r}",
        f"max_rel_energy_deviation = {dev!r}",
        f"diverged = {diverged}",
        f"norm_E = {float(np.linalg.norm(final.E))!r}",
        f"norm_H = {float(np.linalg.norm(final.H))!r}",
        f"norm_HF = {float(np.linalg.norm(final.HF))!r}",
    ]
    (out / "summary.txt").write_text("\n".join(["# " + h for h in header] + summary) + "\n")
    if diverged:
        print(f"error: instability detected at step {history[-1][0]} "
              f"(energy exceeded {BLOWUP_FACTOR:g} x initial)", file=sys.stderr)
        return EXIT_UNSTABLE
    print(f"run: {history[-1][0]} steps, dt = {dt:.6g}, max energy deviation {dev:.3e}")
    return EXIT_OK


def cmd_eigs(cfg: RunConfig, out: Path) -> int:
    from .analysis import (ZERO_THRESHOLD, p_convergence_study, spurious_mode_scan,
                           write_convergence_csv, write_spurious_csv)
    from .dg import make_system

    mesh = cfg.build_mesh()
    if cfg.p_min < 1 or cfg.p_max < cfg.p_min:
        raise ConfigError("p_min", "need 1 <= p_min <= p_max")
    alpha = None if cfg.alpha.strip() == "p2" else cfg.alpha_value()
    records = p_convergence_study(mesh, range(cfg.p_min, cfg.p_max + 1), cfg.modes, alpha=alpha)
    header = _header(cfg, "eigs") + [f"zero_threshold = {ZERO_THRESHOLD:g} * lambda_max"]
    write_convergence_csv(out / "convergence.csv", records, header)
    alphas = [cfg.alpha_value(a.strip()) for a in cfg.alphas.split(",") if a.strip()]
    if alphas:
        rows = spurious_mode_scan(lambda a: make_system(mesh, cfg.k, alpha=a), alphas)
        write_spurious_csv(out / "spurious.csv", rows, header)
    for r in records:
        print(f"p = {r.p:2d}  dof = {r.dof:5d}  lowest-mode rel. error = {r.errors[0]:.3e}")
    return EXIT_OK


def cmd_bench(cfg: RunConfig, out: Path) -> int:
    from .analysis import loglog_slope, scaling_benchmark, write_scaling_csv

    ps = list(range(cfg.bench_p_min, cfg.bench_p_max + 1, cfg.bench_p_step))
    if len(ps) < 2:
        raise ConfigError("bench_p_min", "need at least two orders for a slope")
    rows = scaling_benchmark(ps, cfg.reps, seed=cfg.seed)
    N = [r.N for r in rows]
    s_sweep = loglog_slope(N, [r.t_sweep_ns for r in rows])
    s_dense = loglog_slope(N, [r.t_dense_ns for r in rows])
    header = _header(cfg, "bench") + [f"slope_sweep = {s_sweep:.3f}",
                                      f"slope_dense = {s_dense:.3f}"]
    write_scaling_csv(out / "scaling.csv", rows, header)
    print(f"log-log slope: sweep {s_sweep:.3f}, dense {s_dense:.3f}")
    return EXIT_OK


def cmd_verify_relations(cfg: RunConfig, out: Path) -> int:
    from .analysis import _write
    from .relations import verify_relation_catalogue

    rows = verify_relation_catalogue(seed=cfg.seed)
    width = max(len(r.relation_id) for r in rows)
    for r in rows:
        print(f"{r.relation_id:<{width}}  {r.max_residual:10.3e}  {'pass' if r.passed else 'FAIL'}")
    _write(out / "relations.csv", ["relation_id", "max_residual", "passed"],
           [(r.relation_id, f"{r.max_residual:.6e}", "pass" if r.passed else "fail")
            for r in rows], _header(cfg, "verify-relations"))
    return EXIT_OK if all(r.passed for r in rows) else EXIT_FAILED


COMMANDS = {"run": cmd_run, "eigs": cmd_eigs, "bench": cmd_bench,
            "verify-relations": cmd_verify_relations}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dgmaxwell", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="key = value configuration file")
    ap.add_argument("--out", help="output directory (overrides 'output')")
    ap.add_argument("--seed", type=int, help="random seed (overrides 'seed')")
    ap.add_argument("--threads", type=int, help="worker threads (overrides 'threads')")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override any configuration key")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    overrides = {"output": args.out, "seed": args.seed, "threads": args.threads}
    try:
        for item in args.set:
            if "=" not in item:
                raise ConfigError(item, "--set expects KEY=VALUE")
            key, value = item.split("=", 1)
            overrides[key.strip()] = value.strip()
        cfg = load_config(args.config, overrides)
        import numba

        numba.set_num_threads(min(cfg.threads, numba.config.NUMBA_NUM_THREADS))
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # single-line diagnostic naming the stage
        print(f"error: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
