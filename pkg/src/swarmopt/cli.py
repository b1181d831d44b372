"""Command-line entry point: configuration, orchestration and CSV/JSON output.

Subcommands: ``stationary``, ``flow``, ``simulate``, ``verify`` and
``ring-demo``.  Flags mirror the fields of :class:`RunConfig`; ``--config``
loads a YAML file and explicit flags override it.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .entropy import EntropyFamily, kappa
from .errors import ParseError, SwarmOptError, ValidationError, WindowTooShort

log = logging.getLogger("swarmopt")

MODES = ("stationary", "flow-homogeneous", "flow-annealed", "simulate", "verify")
SUITES = ("chi", "comparison", "decay", "representation", "metropolis")
KINDS = ("first", "second", "hybrid")
OUTPUT_ENV = "SWARMOPT_OUTPUT_DIR"


@dataclass
class RunConfig:
    """Validated run settings.

    Attributes
    ----------
    landscape : dict
        ``{"builtin": "ring20"}``, ``{"matrix": [[...]], "ell": [...], "U": [...]}``
        or ``{"edges": [[x, y, rate], ...], "ell": [...], "U": [...]}``.
    schedule : dict or None
        ``{"t0": ..., "alpha": ...}`` for an annealed run.
    snapshots : dict or list
        ``{"count": k}`` (equally spaced), ``{"per_decade": k}``
        (geometric) or explicit times.
    tolerances : dict
        Integrator overrides: ``rtol``, ``atol``, ``h0``, ``cap_coef``.
    """

    mode: str = "stationary"
    landscape: dict = field(default_factory=lambda: {"builtin": "ring20"})
    m: float = -1.0
    beta: float | None = None
    schedule: dict | None = None
    guaranteed: bool = False
    particles: int = 50
    kind: str = "second"
    a: float = 0.5
    seed: int | None = None
    horizon: float = 10.0
    snapshots: object = None
    output_dir: str = "."
    tolerances: dict = field(default_factory=dict)
    epsilon: float = 0.5
    race: str = "total"
    log_cap: int = 1_000_000
    suites: list = field(default_factory=lambda: list(SUITES))
    trials: int = 100
    warnings: list = field(default_factory=list)


DEFAULT_T0 = 1.0
DEFAULT_ALPHA = 0.25


def _number(value, name, cast=float):
    try:
        return cast(value)
    except (TypeError, ValueError):
        raise ValidationError(name, f"expected a number, got {value!r}") from None


def validate(cfg: RunConfig) -> RunConfig:
    """Check fields, fill defaults and collect warnings.

    Raises
    ------
    ValidationError
        Naming the offending field.
    """
    if cfg.mode not in MODES:
        raise ValidationError("mode", f"must be one of {', '.join(MODES)}")
    if not isinstance(cfg.landscape, dict) or not ({"builtin", "matrix", "edges"} & cfg.landscape.keys()):
        raise ValidationError("landscape", "give builtin, matrix or edges")
    if cfg.landscape.get("builtin") not in (None, "ring20"):
        raise ValidationError("landscape.builtin", "only 'ring20' is built in")
    cfg.m = _number(cfg.m, "m")
    if not cfg.m < 0:
        raise ValidationError("m", "must be negative")
    if cfg.beta is not None:
        cfg.beta = _number(cfg.beta, "beta")
        if cfg.beta < 0:
            raise ValidationError("beta", "must be nonnegative")
    if cfg.schedule is not None:
        if not isinstance(cfg.schedule, dict):
            raise ValidationError("schedule", "expected a mapping with t0 and alpha")
        t0 = _number(cfg.schedule.get("t0", DEFAULT_T0), "schedule.t0")
        alpha = _number(cfg.schedule.get("alpha", DEFAULT_ALPHA), "schedule.alpha")
        if t0 < 1:
            raise ValidationError("schedule.t0", "must be at least 1")
        if not alpha > 0:
            raise ValidationError("schedule.alpha", "must be positive")
        k = kappa(cfg.m)
        if alpha > k:
            if cfg.guaranteed:
                raise ValidationError("schedule.alpha", f"{alpha} exceeds kappa(m)={k:g} in guaranteed mode")
            msg = f"alpha={alpha:g} is outside guaranteed regime (kappa(m)={k:g})"
            cfg.warnings.append(msg)
            warnings.warn(msg, stacklevel=2)
        cfg.schedule = {"t0": t0, "alpha": alpha}
    if cfg.mode in ("stationary", "flow-homogeneous") and cfg.beta is None:
        raise ValidationError("beta", f"required in {cfg.mode} mode")
    if cfg.mode == "flow-annealed" and cfg.schedule is None:
        cfg.schedule = {"t0": DEFAULT_T0, "alpha": DEFAULT_ALPHA}
    if cfg.mode == "simulate":
        if cfg.seed is None:
            raise ValidationError("seed", "required in simulate mode")
        if (cfg.beta is None) == (cfg.schedule is None):
            raise ValidationError("beta", "simulate needs exactly one of beta and schedule")
    if cfg.seed is not None:
        cfg.seed = _number(cfg.seed, "seed", int)
    cfg.particles = _number(cfg.particles, "particles", int)
    if cfg.particles < 1:
        raise ValidationError("particles", "must be at least 1")
    if cfg.kind not in KINDS:
        raise ValidationError("kind", f"must be one of {', '.join(KINDS)}")
    cfg.a = _number(cfg.a, "a")
    if not 0 <= cfg.a <= 1:
        raise ValidationError("a", "must lie in [0, 1]")
    cfg.horizon = _number(cfg.horizon, "horizon")
    if not cfg.horizon > 0:
        raise ValidationError("horizon", "must be positive")
    cfg.epsilon = _number(cfg.epsilon, "epsilon")
    if not cfg.epsilon > 0:
        raise ValidationError("epsilon", "must be positive")
    if cfg.race not in ("total", "per_particle"):
        raise ValidationError("race", "must be 'total' or 'per_particle'")
    for s in cfg.suites:
        if s not in SUITES:
            raise ValidationError("suites", f"unknown suite {s!r}")
    cfg.trials = _number(cfg.trials, "trials", int)
    if cfg.trials < 1:
        raise ValidationError("trials", "must be at least 1")
    unknown = set(cfg.tolerances) - {"rtol", "atol", "h0", "cap_coef", "h_min", "max_steps"}
    if unknown:
        raise ValidationError("tolerances", f"unknown keys {sorted(unknown)}")
    return cfg


def load_config(path) -> RunConfig:
    """Read a YAML run configuration.

    Raises
    ------
    ParseError
        If the file is not valid YAML (with the line number).
    ValidationError
        If a field is invalid.
    """
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else "?"
        raise ParseError(f"{path}: line {line}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be a mapping")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw)
    names = set(RunConfig.__dataclass_fields__) - {"warnings"}
    if "output" in raw:
        out = raw.pop("output")
        raw["output_dir"] = out.get("dir", ".") if isinstance(out, dict) else out
    unknown = set(raw) - names
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown field")
    return validate(RunConfig(**raw))


# ----------------------------------------------------------------------
# building blocks


def build_land(desc: dict):
    from .model import EnergyLandscape, build_landscape, ring20

    if desc.get("builtin") == "ring20":
        return ring20()
    try:
        ell = np.asarray(desc["ell"], dtype=float)
        U = np.asarray(desc["U"], dtype=float)
    except KeyError as exc:
        raise ValidationError(f"landscape.{exc.args[0]}", "missing") from None
    labels = tuple(desc.get("labels", ()))
    if "matrix" in desc:
        return EnergyLandscape.from_matrix(np.asarray(desc["matrix"], dtype=float), ell, U, labels)
    return build_landscape(desc["edges"], ell, U, labels)


def _controls(cfg: RunConfig):
    from .flow import Controls

    return Controls(**cfg.tolerances)


def _schedule(cfg: RunConfig):
    from .flow import Schedule

    if cfg.schedule is None:
        return Schedule.constant(cfg.beta)
    return Schedule.power(cfg.schedule["t0"], cfg.schedule["alpha"], m=cfg.m, guaranteed=cfg.guaranteed)


def snapshot_grid(desc, horizon: float, default: str) -> np.ndarray:
    """Times from a snapshot description; ``default`` is ``"linear"`` (16 points) or ``"geometric"``."""
    from .flow import geometric_grid

    if desc is None:
        desc = {"count": 16} if default == "linear" else {"per_decade": 10}
    if isinstance(desc, dict):
        if "count" in desc:
            return np.linspace(0.0, horizon, int(desc["count"]))
        if "per_decade" in desc:
            first = min(1e-2, horizon / 10)
            return geometric_grid(first, horizon, int(desc["per_decade"]), include_zero=True)
        raise ValidationError("snapshots", "expected count, per_decade or a list")
    times = np.asarray(desc, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) < 0) or times[0] < 0 or times[-1] > horizon:
        raise ValidationError("snapshots", "times must be sorted inside [0, horizon]")
    return times


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else fmt(f)
    return v


def write_summary(out: Path, name: str, summary: dict) -> None:
    """JSON summary plus a key/value CSV holding every printed number."""
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{name}_summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_csv(out / f"{name}_summary.csv", ["key", "value"], sorted((k, v) for k, v in _flatten(summary)))


def _flatten(d, prefix=""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        elif isinstance(v, (list, tuple, np.ndarray)):
            continue
        else:
            yield key, v


def print_summary(title: str, summary: dict, stream=None) -> None:
    stream = stream or sys.stdout
    print(f"== {title}", file=stream)
    for k, v in sorted(_flatten(summary)):
        print(f"{k}: {fmt(v)}", file=stream)


def _neighborhood_mass(land, measure) -> float:
    from .model import minimizer_set

    idx = set(minimizer_set(land).tolist())
    for x in list(idx):
        idx.update(np.flatnonzero(land.generator[x] > 0).tolist())
    return float(np.sum(np.asarray(measure)[sorted(idx)]))


# ----------------------------------------------------------------------
# modes


def run_stationary(cfg: RunConfig, out: Path) -> dict:
    from .model import minimizer_set
    from .stationary import solve_eta

    fam = EntropyFamily(cfg.m)
    land = build_land(cfg.landscape)
    prof = solve_eta(land, fam, cfg.beta)
    zeta = np.asarray(prof.zeta)
    write_csv(
        out / "stationary.csv",
        ["state", "U", "ell", "eta", "zeta"],
        [(x, land.objective[x], land.ell[x], prof.rho[x], zeta[x]) for x in range(land.n)],
    )
    mins = minimizer_set(land)
    return {
        "beta": cfg.beta,
        "m": cfg.m,
        "c": prof.c,
        "mass_on_minimizers": float(zeta[mins].sum()),
        "mass_near_minimizers": _neighborhood_mass(land, zeta),
    }


def run_flow(cfg: RunConfig, out: Path) -> dict:
    from .flow import convergence_rate_fit, integrate_annealed, integrate_homogeneous

    fam = EntropyFamily(cfg.m)
    land = build_land(cfg.landscape)
    times = snapshot_grid(cfg.snapshots, cfg.horizon, "geometric")
    rho0 = np.ones(land.n)
    if cfg.mode == "flow-homogeneous":
        traj = integrate_homogeneous(land, fam, cfg.beta, rho0, cfg.horizon, _controls(cfg), times)
    else:
        traj = integrate_annealed(land, fam, _schedule(cfg), rho0, cfg.horizon, _controls(cfg), times)
    write_csv(
        out / "flow_density.csv",
        ["t", "state", "density", "mass"],
        [(t, x, traj.densities[k, x], traj.densities[k, x] * land.ell[x]) for k, t in enumerate(traj.times) for x in range(land.n)],
    )
    write_csv(
        out / "flow_diagnostics.csv",
        ["t", "beta", "cost", "gap_I", "gap_G", "mass_on_minimizers", "rho_min"],
        zip(traj.times, traj.beta, traj.cost, traj.gap_I, traj.gap_G, traj.mass_on_min, traj.rho_min),
    )
    summary = {
        "mode": cfg.mode,
        "m": cfg.m,
        "horizon": cfg.horizon,
        "final_mass_on_minimizers": float(traj.mass_on_min[-1]),
        "final_gap_I": float(traj.gap_I[-1]),
        "accepted_steps": int(traj.stats.get("accepted", 0)),
        "rejected_steps": int(traj.stats.get("rejected", 0)),
    }
    if cfg.mode == "flow-annealed":
        try:
            fit = convergence_rate_fit(traj, window=(min(1e2, cfg.horizon / 1e3), cfg.horizon))
            summary.update(
                {
                    "slope_gap_I": fit.gap_slope,
                    "target_slope_gap_I": fit.gap_target,
                    "slope_mass_off_minimizers": fit.mass_deficit_slope,
                    "target_slope_mass_off_minimizers": fit.mass_deficit_target,
                }
            )
        except WindowTooShort:
            log.info("horizon too short for exponent fits")
    return summary


def run_simulate(cfg: RunConfig, out: Path) -> dict:
    from .model import minimizer_set
    from .particles import SwarmConfig, simulate_swarm

    fam = EntropyFamily(cfg.m)
    land = build_land(cfg.landscape)
    snaps = snapshot_grid(cfg.snapshots, cfg.horizon, "linear")
    sc = SwarmConfig(
        N=cfg.particles,
        kind=cfg.kind,
        a=cfg.a,
        beta=cfg.beta,
        schedule=None if cfg.schedule is None else _schedule(cfg),
        horizon=cfg.horizon,
        seed=cfg.seed,
        snapshot_times=snaps,
        epsilon=cfg.epsilon,
        race=cfg.race,
        log_cap=cfg.log_cap,
    )
    res = simulate_swarm(land, fam, sc)
    write_csv(
        out / "snapshots.csv",
        ["snapshot_t", "state", "empirical_mass"],
        [(t, x, res.empirical[k, x]) for k, t in enumerate(res.snapshot_times) for x in range(land.n)],
    )
    write_csv(
        out / "events.csv",
        ["event_index", "t", "particle", "from", "to"],
        [(int(e[0]), e[1], int(e[2]), int(e[3]), int(e[4])) for e in res.events],
    )
    mins = minimizer_set(land)
    return {
        "particles": cfg.particles,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "horizon": cfg.horizon,
        "events": res.n_events,
        "logged_events": int(res.events.shape[0]),
        "final_mass_on_minimizers": float(res.empirical[-1][mins].sum()),
    }


def run_verify(cfg: RunConfig, out: Path) -> tuple[dict, bool]:
    """Run the selected suites; each row is ``(suite, check, value, threshold, passed, required)``."""
    rows = []
    errored = []
    for suite in cfg.suites:
        try:
            rows.extend(_SUITES[suite](cfg))
        except SwarmOptError as exc:
            errored.append(suite)
            rows.append((suite, "error", str(exc), "", False, True))
    write_csv(out / "verify.csv", ["suite", "check", "value", "threshold", "passed", "required"], rows)
    failed = [r for r in rows if r[5] and not r[4]]
    summary = {
        "checks": len(rows),
        "passed": sum(1 for r in rows if r[4]),
        "required_failures": len(failed),
        "errored_suites": len(errored),
    }
    return summary, not failed and not errored


def _suite_chi(cfg):
    from .analysis import ChiBudget, estimate_chi
    from .model import random_landscape

    fam = EntropyFamily(cfg.m)
    rng = np.random.default_rng(cfg.seed or 0)
    rows = []
    n_pos = n_lam = n_two = 0
    trials = min(cfg.trials, 20)
    for k in range(trials):
        land = random_landscape(rng, int(rng.integers(3, 9)))
        for beta in (0.0, 1.0, 5.0):
            rep = estimate_chi(land, fam, beta, ChiBudget(starts=8, maxfev_per_state=60), seed=k)
            n_pos += rep.positive
            n_lam += rep.below_lambda
            n_two += rep.below_twice_lambda
    total = 3 * trials
    rows.append(("chi", "estimate_positive", n_pos, total, n_pos == total, True))
    rows.append(("chi", "estimate_below_twice_linearized_gap", n_two, total, n_two == total, True))
    rows.append(("chi", "estimate_below_linearized_gap", n_lam, total, n_lam == total, False))
    return rows


def _suite_comparison(cfg):
    from .analysis import comparison_inequality_check
    from .model import random_density, random_landscape

    rng = np.random.default_rng(cfg.seed or 0)
    bad = 0
    for k in range(cfg.trials):
        fam = EntropyFamily((-0.5, -1.0, -2.0)[k % 3])
        land = random_landscape(rng, int(rng.integers(3, 9)))
        rep = comparison_inequality_check(land, fam, random_density(rng, land.ell, 0.5).rho, random_density(rng, land.ell, 0.5).rho)
        bad += not rep.holds
    return [("comparison", "violations", bad, 0, bad == 0, True)]


def _suite_decay(cfg):
    from .analysis import decay_certificate
    from .flow import integrate_homogeneous
    from .generators import linearized_generator
    from .model import ring20, spectral_gap

    fam = EntropyFamily(cfg.m)
    land = ring20()
    beta = 5.0
    Q, w = linearized_generator(land, fam, beta)
    lam = spectral_gap(Q, w)
    horizon = 10.0 / lam * np.log(1e8)
    traj = integrate_homogeneous(land, fam, beta, np.ones(land.n), horizon)
    rep = decay_certificate(traj, 0.0, ceiling=lam)
    return [
        ("decay", "chi_tilde_positive", rep.chi_tilde, 0.0, rep.positive, True),
        ("decay", "chi_tilde_below_twice_linearized_gap", rep.chi_tilde, 2 * lam, bool(rep.below_twice_ceiling), True),
        ("decay", "chi_tilde_below_linearized_gap", rep.chi_tilde, lam, bool(rep.below_ceiling), False),
    ]


def _suite_representation(cfg):
    from .generators import representation_residual
    from .model import random_density, random_landscape

    rng = np.random.default_rng(cfg.seed or 0)
    worst = 0.0
    for k in range(cfg.trials):
        fam = EntropyFamily(cfg.m)
        land = random_landscape(rng, int(rng.integers(2, 9)))
        beta = float(rng.choice([0.0, 1.0, 5.0, 50.0]))
        rho = random_density(rng, land.ell, 1.0).rho
        worst = max(worst, max(representation_residual(land, fam, beta, rho).values()))
    return [("representation", "max_residual", worst, 1e-9, worst <= 1e-9, True)]


def _suite_metropolis(cfg):
    from .metropolis import metropolis_suite

    rep = metropolis_suite(cfg.trials, seed=cfg.seed or 0)
    return [("metropolis", f"max_residual[{k}]", v, rep.tol, v <= rep.tol, True) for k, v in rep.per_family.items()]


_SUITES = {
    "chi": _suite_chi,
    "comparison": _suite_comparison,
    "decay": _suite_decay,
    "representation": _suite_representation,
    "metropolis": _suite_metropolis,
}


def run_ring_demo(cfg: RunConfig, out: Path) -> dict:
    """Stationary profile, homogeneous and annealed swarms on the twenty-state ring."""
    from .flow import Schedule
    from .model import ring20
    from .particles import SwarmConfig, l2_distance, simulate_swarm
    from .stationary import solve_eta

    fam = EntropyFamily(cfg.m)
    land = ring20()
    beta = 5.0 if cfg.beta is None else cfg.beta
    seed = 0 if cfg.seed is None else cfg.seed
    eta = solve_eta(land, fam, beta)
    zeta = np.asarray(eta.zeta)
    write_csv(out / "ring_stationary.csv", ["state", "U", "eta", "zeta"], [(x, land.objective[x], eta.rho[x], zeta[x]) for x in range(land.n)])
    snaps = np.linspace(0.0, cfg.horizon, 16)

    def distance_series(res, targets):
        counts = np.bincount(np.asarray(res.final_positions), minlength=land.n)
        # replay the event log backwards to recover the initial counts
        for e in res.events[::-1]:
            counts[int(e[4])] -= 1
            counts[int(e[3])] += 1
        rows = []
        stride = max(1, res.events.shape[0] // 500)
        for i, e in enumerate(res.events):
            counts[int(e[3])] -= 1
            counts[int(e[4])] += 1
            if i % stride == 0 or i == res.events.shape[0] - 1:
                rows.append((i + 1, e[1], l2_distance(land.ell, counts / res.N, targets(e[1]))))
        return rows

    hom = simulate_swarm(land, fam, SwarmConfig(N=cfg.particles, kind=cfg.kind, a=cfg.a, beta=beta, horizon=cfg.horizon, seed=seed, snapshot_times=snaps))
    write_csv(out / "ring_homogeneous_hist.csv", ["snapshot_t", "state", "empirical_mass"], [(t, x, hom.empirical[k, x]) for k, t in enumerate(snaps) for x in range(land.n)])
    write_csv(out / "ring_homogeneous_distance.csv", ["transitions", "t", "l2_distance"], distance_series(hom, lambda t: zeta))

    sched_cfg = cfg.schedule or {"t0": DEFAULT_T0, "alpha": DEFAULT_ALPHA}
    sched = Schedule.power(sched_cfg["t0"], sched_cfg["alpha"])
    ann = simulate_swarm(land, fam, SwarmConfig(N=cfg.particles, kind=cfg.kind, a=cfg.a, schedule=sched, horizon=cfg.horizon, seed=seed + 1, snapshot_times=snaps))
    def nu(t):
        return np.asarray(solve_eta(land, fam, float(sched.beta(t))).zeta)

    write_csv(out / "ring_annealed_hist.csv", ["snapshot_t", "state", "empirical_mass"], [(t, x, ann.empirical[k, x]) for k, t in enumerate(snaps) for x in range(land.n)])
    write_csv(out / "ring_annealed_distance.csv", ["transitions", "t", "l2_distance"], distance_series(ann, nu))
    best = int(np.argmin(land.objective))
    return {
        "beta": beta,
        "stationary_mass_6_7_8": float(zeta[[6, 7, 8]].sum()),
        "homogeneous_events": hom.n_events,
        "annealed_events": ann.n_events,
        "annealed_final_mass_at_minimizer": float(ann.empirical[-1][best]),
        "minimizer": best,
    }


# ----------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration; flags override it")
    p.add_argument("--builtin", choices=["ring20"], help="built-in landscape")
    p.add_argument("--landscape", help="YAML file with matrix or edges, ell and U")
    p.add_argument("--m", type=float, help="entropy exponent (negative)")
    p.add_argument("--beta", type=float, help="fixed inverse temperature")
    p.add_argument("--schedule", help="annealing schedule as t0,alpha")
    p.add_argument("--guaranteed", action="store_true", default=None, help="reject alpha above kappa(m)")
    p.add_argument("--horizon", type=float, help="model time horizon")
    p.add_argument("--snapshots", help="count, geo:<per decade> or comma-separated times")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or .)")
    p.add_argument("--rtol", type=float)
    p.add_argument("--atol", type=float)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmopt", description="Entropy-penalized swarm optimization on finite state spaces.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("stationary", help="minimizer of the penalized cost at fixed beta")
    _common(p)
    p = sub.add_parser("flow", help="integrate the density flow (fixed beta or schedule)")
    _common(p)
    p = sub.add_parser("simulate", help="run the interacting particle swarm")
    _common(p)
    p.add_argument("--particles", type=int)
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--a", type=float, help="hybrid weight")
    p.add_argument("--epsilon", type=float, help="smoothing of the empirical density")
    p.add_argument("--race", choices=["total", "per_particle"])
    p.add_argument("--log-cap", type=int, dest="log_cap")
    p = sub.add_parser("verify", help="numerical checks of the inequalities and identities")
    _common(p)
    p.add_argument("--suite", action="append", choices=SUITES, help="repeatable; all suites by default")
    p.add_argument("--trials", type=int)
    p = sub.add_parser("ring-demo", help="twenty-state ring reproduction as CSV series")
    _common(p)
    p.add_argument("--particles", type=int)
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--a", type=float)
    return parser


def _parse_snapshots(text: str):
    if text.startswith("geo:"):
        return {"per_decade": int(text[4:])}
    if "," in text:
        return [float(v) for v in text.split(",")]
    return {"count": int(text)}


def config_from_args(args) -> RunConfig:
    raw: dict = {}
    if args.config:
        text = Path(args.config).read_text()
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark
            raise ParseError(f"{args.config}: line {mark.line + 1 if mark else '?'}: {exc.problem}") from None
        if "output" in raw:
            out = raw.pop("output")
            raw["output_dir"] = out.get("dir", ".") if isinstance(out, dict) else out
    mode = {
        "stationary": "stationary",
        "simulate": "simulate",
        "verify": "verify",
        "ring-demo": "flow-annealed",
    }.get(args.command)
    if args.command == "flow":
        has_schedule = args.schedule is not None or (raw.get("schedule") is not None and args.beta is None)
        mode = "flow-annealed" if has_schedule else "flow-homogeneous"
    raw["mode"] = mode
    if args.builtin:
        raw["landscape"] = {"builtin": args.builtin}
    if args.landscape:
        raw["landscape"] = yaml.safe_load(Path(args.landscape).read_text())
    simple = {"m": args.m, "beta": args.beta, "horizon": args.horizon, "seed": args.seed, "guaranteed": args.guaranteed}
    for name in ("particles", "kind", "a", "epsilon", "race", "log_cap", "trials"):
        simple[name] = getattr(args, name, None)
    for k, v in simple.items():
        if v is not None:
            raw[k] = v
    if args.schedule:
        try:
            t0, alpha = (float(v) for v in args.schedule.split(","))
        except ValueError:
            raise ValidationError("schedule", "expected t0,alpha") from None
        raw["schedule"] = {"t0": t0, "alpha": alpha}
        if args.beta is None:
            raw.pop("beta", None)
    if args.snapshots:
        raw["snapshots"] = _parse_snapshots(args.snapshots)
    if getattr(args, "suite", None):
        raw["suites"] = args.suite
    tol = dict(raw.get("tolerances") or {})
    for name in ("rtol", "atol"):
        if getattr(args, name) is not None:
            tol[name] = getattr(args, name)
    raw["tolerances"] = tol
    raw["output_dir"] = args.out or raw.get("output_dir") or os.environ.get(OUTPUT_ENV, ".")
    if args.command == "ring-demo":
        raw.setdefault("horizon", 200.0)
        raw.setdefault("beta", 5.0)
    return config_from_dict(raw)


def run(cfg: RunConfig, command: str | None = None) -> int:
    """Execute ``cfg`` and write its artifacts; returns the exit status."""
    out = Path(cfg.output_dir)
    start = time.perf_counter()
    command = command or cfg.mode
    ok = True
    if command == "ring-demo":
        name, summary = "ring_demo", run_ring_demo(cfg, out)
    elif cfg.mode == "stationary":
        name, summary = "stationary", run_stationary(cfg, out)
    elif cfg.mode.startswith("flow"):
        name, summary = "flow", run_flow(cfg, out)
    elif cfg.mode == "simulate":
        name, summary = "simulate", run_simulate(cfg, out)
    else:
        name = "verify"
        summary, ok = run_verify(cfg, out)
    write_summary(out, name, summary)
    print_summary(name, summary)
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    log.info("finished %s in %.2f s", name, time.perf_counter() - start)
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            cfg = config_from_args(args)
        return run(cfg, args.command)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SwarmOptError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
