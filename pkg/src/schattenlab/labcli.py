"""Experiment runner.

    schattenlab <scenario> [--config cfg.json] [--seed N] [--out DIR] [--workers N]

Every scenario writes ``<out>/<scenario>.csv`` (one row per measurement,
fixed header) and ``<out>/<scenario>.json`` (config echo, fitted slopes,
pass/fail checks, wall time). Exit status: 0 all checks pass, 1 some check
failed, 2 invalid configuration.

The worker count defaults to 1 and can be set with ``--workers`` or the
SCHATTENLAB_WORKERS environment variable (the flag wins).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .fitting import slope_fit

__all__ = ["ExperimentConfig", "Report", "Check", "ConfigError", "SCENARIOS", "run", "main", "slope_fit"]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str
    seed: int = 0
    params: dict = field(default_factory=dict)
    out: str = "results"
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - {"scenario", "seed", "params", "out", "schema_version"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if d.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {d.get('schema_version')!r}")
        if "scenario" not in d:
            raise ConfigError("config needs a 'scenario'")
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0 or seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        params = d.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params must be an object")
        return cls(d["scenario"], seed, dict(params), str(d.get("out", "results")))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None


@dataclass
class Check:
    name: str
    tag: str  # the invariant or statement being checked
    passed: bool
    detail: str = ""


@dataclass
class Report:
    scenario: str
    config: dict
    header: list
    rows: list
    fits: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "scenario": self.scenario,
            "config": self.config,
            "fits": self.fits,
            "checks": [asdict(c) for c in self.checks],
            "passed": self.passed,
            "wall_time": self.wall_time,
        }


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (complex, np.complexfloating)):
        return f"{v.real:.17g}{v.imag:+.17g}j"
    return str(v)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pmap(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))  # map keeps input order


# -- scenarios ---------------------------------------------------------------
# Each returns (header, rows, fits, checks). Parameters arrive validated.


def _restriction(p, seed, workers):
    from .grids import SpatialGrid
    from .restriction import knapp_tube_ratio, verify_restriction
    from .surface import SurfaceSpec, build_surface

    grids = [SpatialGrid(p["half_width"], n, p["N"]) for n in p["resolutions"]]
    spec = SurfaceSpec(p["kind"], p["N"], p["surface_resolution"])
    rep = verify_restriction(spec, p["q"], grids, p["trials"], seed, rough_trials=p["rough_trials"])
    rows = [("ratio", res, trial, kind, ratio) for (res, trial, kind, ratio) in rep.rows]
    checks = [Check("refinement_stable", "restriction Schatten bound", rep.stable,
                    f"relative changes {[float(c) for c in rep.relative_change]}")]
    if p["knapp_deltas"] and p["kind"] == "sphere" and p["N"] == 2:
        circle = build_surface(SurfaceSpec("sphere", 2, p["knapp_circle"]))
        tube = [float(knapp_tube_ratio(circle, d, p["knapp_q"])) for d in p["knapp_deltas"]]
        rows += [("knapp", d, 0, "tube", r) for d, r in zip(p["knapp_deltas"], tube)]
        grows = all(b > a for a, b in zip(tube, tube[1:]))
        checks.append(Check("knapp_growth", f"Knapp witness grows for q={p['knapp_q']}", grows, str(tube)))
    return ["measure", "resolution_or_delta", "trial", "witness", "ratio"], rows, {}, checks


def _optimality(p, seed, workers):
    from .restriction import optimality_slope
    from .surface import SurfaceSpec, build_surface

    S = build_surface(SurfaceSpec("sphere", 2, p["surface_resolution"]))
    rows, fits, checks = [], {}, []
    for r in p["r_values"]:
        rep = optimality_slope(S, p["q"], r, p["h_list"])
        rows += [(r, h, v) for h, v in zip(p["h_list"], rep.ratios)]
        fit = rep.trimmed or rep.fit
        fits[f"r={r}"] = {"slope": fit.slope, "intercept": fit.intercept, "max_residual": fit.max_residual,
                          "expected": rep.expected}
        checks.append(Check(f"slope_r{r}", "optimality divergence exponent", rep.passed,
                            f"slope {fit.slope:.4f} expected {rep.expected:.4f}"))
    return ["r", "h", "ratio"], rows, fits, checks


def _strichartz(p, seed, workers):
    from .evolution import strichartz_experiment

    rep = strichartz_experiment(1, p["p"], p["q"], p["M"], seed, n=p["n"])
    rows = [(M, l, r, lr, rr, m) for M, l, r, lr, rr, m in
            zip(rep.Ms, rep.lhs, rep.rhs, rep.lhs_random, rep.rhs_random, rep.time_samples)]
    limit = (p["q"] + 1) / (2 * p["q"]) + 0.05
    fits = {"lhs_vs_M": {"slope": rep.slope, "max_residual": rep.fit.max_residual if rep.fit else None}}
    checks = [
        Check("ratio_spread", "orthonormal Strichartz ratio bounded", rep.spread <= p["max_spread"],
              f"max/min {rep.spread:.4f}"),
        Check("lhs_slope", "sublinear growth in M", rep.slope <= limit, f"slope {rep.slope:.4f} <= {limit:.4f}"),
    ]
    return ["M", "lhs", "rhs", "lhs_random", "rhs_random", "time_samples"], rows, fits, checks


def _bump(center, radius, amplitude=1.0, wavevector=None):
    c = np.asarray(center, dtype=float)
    k = None if wavevector is None else np.asarray(wavevector, dtype=float)

    def f(x):
        r2 = ((x - c) ** 2).sum(-1) / radius**2
        out = np.zeros(len(x), dtype=complex)
        m = r2 < 1
        out[m] = amplitude * np.exp(1 - 1 / (1 - r2[m]))
        if k is not None:
            out = out * np.exp(1j * (x @ k))
        return out

    return f


def _sobolev(p, seed, workers):
    from .grids import SpatialGrid
    from .resolvent import uniform_sobolev_sweep

    N, q = p["N"], p["q"]
    rng = np.random.default_rng(seed)
    off = rng.uniform(-0.3, 0.3, size=(2, N))
    W1 = _bump(off[0], p["bump_radius"])
    W2 = _bump(off[1], p["bump_radius"], wavevector=np.eye(N)[0])
    zs = [m * np.exp(1j * k * np.pi / 8) for m in p["moduli"] for k in range(1, 16)]
    grids = [SpatialGrid.from_spacing(h, p["radius"], N, radius=p["radius"]) for h in p["spacings"]]
    rep = uniform_sobolev_sweep(N, q, zs, W1, W2, grids)
    rows = [(res, z.real, z.imag, r) for (res, z, r) in rep.rows]
    checks = []
    if rep.passed is not None:
        spreads = [rep.spread(g.spacing) for g in grids]
        checks.append(Check("spread", "uniform Sobolev ratio bounded", max(spreads) <= 10, f"spreads {spreads}"))
        checks.append(Check("refinement", "grid-refinement stability", rep.max_change() < 0.10,
                            f"max change {rep.max_change():.4g}"))
    return ["spacing", "re_z", "im_z", "ratio"], rows, {}, checks


def _lap(p, seed, workers):
    from .grids import SpatialGrid
    from .resolvent import PotentialField, lap_boundary, resolvent_jump_vs_extension
    from .surface import SurfaceSpec, build_surface

    g = SpatialGrid.from_spacing(p["spacing"], p["bump_radius"], 3, radius=p["bump_radius"])
    V = PotentialField.from_function(_bump(np.zeros(3), p["bump_radius"], -p["coupling"]), g)
    rep = lap_boundary(V, p["lam"], 1, p["eps_list"], q=p["q"])
    rows = [("cauchy", e, c) for e, c in zip(rep.eps_list[1:], rep.cauchy)]
    rows.append(("extrapolation_error", rep.eps_list[-1], rep.extrapolation_error))
    checks = [Check("cauchy_monotone", "limiting absorption convergence", rep.monotone,
                    str([float(c) for c in rep.cauchy]))]
    S = build_surface(SurfaceSpec("sphere_quadratic", 2, p["jump_nodes"]))
    g2 = SpatialGrid.from_spacing(p["jump_spacing"], 2.0, 2, radius=2.0)
    x = g2.points
    jr = resolvent_jump_vs_extension(g2, S, p["t_list"], _bump([0.3, 0], 1.5)(x), _bump([-0.2, 0.3], 1.5)(x))
    rows += [("jump_distance", t, d) for t, d in zip(jr.t_list, jr.distances)]
    checks.append(Check("jump_limit", "resolvent jump equals 2 pi i T_S", jr.distances[-1] < 0.05,
                        f"distance {jr.distances[-1]:.4g} at t={jr.t_list[-1]}"))
    return ["measure", "parameter", "value"], rows, {}, checks


def _random_potential(seed_and_index):
    seed, i = seed_and_index
    rng = np.random.default_rng([seed, i])
    k = int(rng.integers(1, 4))
    cs, ws = rng.uniform(-1, 1, k), rng.uniform(0.4, 1.0, k)
    amps = rng.uniform(-6, 2, k) + 1j * rng.uniform(-4, 4, k)

    def f(x):
        out = np.zeros(len(x), dtype=complex)
        for c, w, a in zip(cs, ws, amps):
            r2 = ((x - c) / w) ** 2
            m = r2 < 1
            out[m] += a * np.exp(1 - 1 / (1 - r2[m]))
        return out

    return f


def _eigen_member(args):
    from .eigenbounds import (
        det_zero_locator, discretize_schrodinger, eigen_cloud, lt_rhs, lt_sum, separated_rectangles,
    )
    from .grids import SpatialGrid
    from .resolvent import PotentialField

    seed, i, ns, half_width, eps, extent, det_spacing = args
    f = _random_potential((seed, i))
    sums = []
    for n in ns:
        g = SpatialGrid(half_width, n, 1)
        V = PotentialField(f(g.points[:, 0]), g)
        cloud = eigen_cloud(discretize_schrodinger(V, boundary="transparent"))
        sums.append(lt_sum(cloud, eps, N=1, q=1.0))
    rhs = lt_rhs(V, eps, 1.0)
    _, rects = separated_rectangles(cloud, extent)
    gd = SpatialGrid.from_spacing(det_spacing, 2.0, 1)
    Vd = PotentialField(f(gd.points[:, 0]), gd)
    counts = []
    for rect in rects:
        zc = det_zero_locator(Vd, rect, contour_m=160)
        counts.append((cloud.inside(rect).count, zc.count))
    return sums, rhs, counts


def _eigen(p, seed, workers):
    from .eigenbounds import discretize_schrodinger, eigen_cloud, single_bound_check
    from .grids import SpatialGrid
    from .resolvent import PotentialField

    rows, checks = [], []
    c, w = p["well_strength"], p["well_width"]
    g = SpatialGrid.from_spacing(w / 20, 2.0, 1)
    x = g.points[:, 0]
    V = PotentialField(np.where((x > 0) & (x < w), -c / w, 0.0), g)
    cloud = eigen_cloud(discretize_schrodinger(V, boundary="transparent"))
    ratio = max(single_bound_check(cloud, V, 0.5).ratios)
    rows.append(("delta_well", -1, "sharpness", ratio))
    checks.append(Check("delta_well", "single-eigenvalue bound is sharp", abs(ratio - 0.5) <= 0.025,
                        f"ratio {ratio:.5f}"))
    jobs = [(seed, i, p["resolutions"], p["half_width"], p["eps"], p["rect_extent"], p["det_spacing"])
            for i in range(p["ensemble"])]
    results = _pmap(_eigen_member, jobs, workers)
    worst, mismatches = 0.0, 0
    for i, (sums, rhs, counts) in enumerate(results):
        for n, s in zip(p["resolutions"], sums):
            rows.append(("lt_sum", i, n, s))
        rows.append(("lt_ratio", i, p["resolutions"][-1], sums[-1] / rhs))
        if sums[-1] > 0:
            worst = max(worst, abs(sums[-1] - sums[-2]) / sums[-1])
        for j, (direct, det) in enumerate(counts):
            rows.append(("count_direct", i, j, direct))
            rows.append(("count_det", i, j, det))
            mismatches += direct != det
    checks.append(Check("lt_stable", "eigenvalue sum stable under refinement", worst < 0.05,
                        f"worst relative change {worst:.3g}"))
    checks.append(Check("det_count", "argument principle count equals eigensolver", mismatches == 0,
                        f"{mismatches} mismatches"))
    return ["measure", "member", "index", "value"], rows, {}, checks


def _hartree(p, seed, workers):
    from .grids import TorusGrid
    from .hartree import Interaction, evolve, nls_split_step, rho
    from .specmat import DensityMatrix, orthonormalize, schatten_norm

    g = TorusGrid(p["period"], p["n"])
    x = g.axis
    w = Interaction.from_function(lambda s: p["coupling"] * np.exp(-(s**2)), g)
    rng = np.random.default_rng(seed)
    rows, checks = [], []
    u0 = np.exp(-((x - 1) ** 2) / 2 + 0.7j * x)
    u0 = u0 / g.space.norm(u0)
    G1 = DensityMatrix.from_system(u0, [1.0], g.space)
    traj, _ = evolve(G1, w, p["T_oracle"], tau=p["T_oracle"] / 2)
    ref = np.abs(nls_split_step(u0, w, p["T_oracle"], 2000)) ** 2
    err = g.space.norm(rho(traj[-1].gamma) - ref)
    rows.append(("oracle_l2", p["T_oracle"], err))
    checks.append(Check("nls_oracle", "rank-one Hartree equals NLS", err < 1e-6, f"{err:.3g}"))

    k = p["modes"]
    centers = rng.uniform(-3, 3, k)
    kicks = rng.uniform(-1, 1, k)
    fs = np.stack([np.exp(-((x - c) ** 2)) * np.exp(1j * kk * x) for c, kk in zip(centers, kicks)], 1)
    nu = np.sort(rng.uniform(0.05, 1, k))[::-1]
    G = DensityMatrix.from_system(orthonormalize(fs, g.space), nu, g.space)
    traj, rep = evolve(G, w, p["T"])
    rows += [("trace", t, v) for t, v in zip(rep.times, rep.traces)]
    rows += [("schatten", t, v) for t, v in zip(rep.times, rep.schatten)]
    rows.append(("density_norm", p["T"], rep.density_norm))
    checks.append(Check("trace", "trace conservation", rep.trace_drift < 1e-10, f"{rep.trace_drift:.3g}"))
    checks.append(Check("schatten", "Schatten norm conservation", rep.schatten_drift < 1e-6,
                        f"{rep.schatten_drift:.3g}"))
    tau = traj[1].t if len(traj) > 1 else p["T"]
    half, _ = evolve(G, w, p["T"], tau=tau / 2)
    diff = schatten_norm(traj[-1].gamma.unitary() - half[-1].gamma.unitary(), rep.schatten_exponent)
    rows.append(("halving", tau, diff))
    checks.append(Check("halving", "window-halving self-consistency", diff < 1e-6, f"{diff:.3g}"))
    return ["measure", "time", "value"], rows, {}, checks


def _scatter(p, seed, workers):
    from .grids import SpatialGrid
    from .resolvent import PotentialField
    from .scatter import smatrix, smatrix_1d, square_well_transmission

    rows, checks, fits = [], [], {}
    g = SpatialGrid.from_spacing(0.01, 2.0, 1)
    x = g.points[:, 0]
    V1 = PotentialField(np.where((x > 0) & (x < 1.0), -5.0, 0.0), g)
    S1 = smatrix_1d(V1, 2.0)
    err = abs(S1[0, 0] - square_well_transmission(2.0, 5.0, 1.0))
    flux = abs(abs(S1[0, 0]) ** 2 + abs(S1[1, 0]) ** 2 - 1)
    rows += [("square_well_error", 2.0, err), ("flux_defect", 2.0, flux)]
    checks.append(Check("square_well", "1D transfer matrix closed form", err < 1e-6 and flux < 1e-10,
                        f"error {err:.3g}, flux {flux:.3g}"))
    R = p["bump_radius"]
    unit = []
    for h in p["unitarity_spacings"]:
        gg = SpatialGrid.from_spacing(h, R, 3, radius=R)
        V = PotentialField.from_function(_bump(np.zeros(3), R, -p["strong_coupling"]), gg)
        unit.append(float(smatrix(V, 1.0, p["q"]).unitarity))
        rows.append(("unitarity", h, unit[-1]))
    dec = all(b < a for a, b in zip(unit, unit[1:]))
    checks.append(Check("unitarity", "S-matrix unitary for real V", unit[-1] < 5e-3 and dec, str(unit)))
    gg = SpatialGrid.from_spacing(p["spacing"], R, 3, radius=R)
    V = PotentialField.from_function(_bump(np.zeros(3), R, -p["weak_coupling"]), gg)
    defs = [smatrix(V, lam, p["q"]).deficit for lam in p["lambdas"]]
    rows += [("deficit", lam, d) for lam, d in zip(p["lambdas"], defs)]
    fit = slope_fit(p["lambdas"], defs)
    expected = -1 + 3 / (2 * p["q"])
    fits["deficit_vs_lambda"] = {"slope": fit.slope, "intercept": fit.intercept,
                                 "max_residual": fit.max_residual, "expected": expected}
    checks.append(Check("deficit_slope", "S(lambda)-1 deficit scaling",
                        abs(fit.slope - expected) <= 0.1 * abs(expected), f"slope {fit.slope:.4f}"))
    return ["measure", "parameter", "value"], rows, fits, checks


def _selftest(p, seed, workers):
    from .restriction import duality_check
    from .specmat import WeightedOperator, WeightedSpace, schatten_norm

    rng = np.random.default_rng(seed)
    rows, checks = [], []
    worst = 0.0
    for i in range(p["trials"]):
        M = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
        ev = np.linalg.eigvalsh(M.conj().T @ M)
        for a in (1.0, 3.0):
            oracle = np.sum(np.clip(ev, 0, None) ** (a / 2)) ** (1 / a)
            rel = abs(schatten_norm(M, a) - oracle) / oracle
            worst = max(worst, rel)
            rows.append(("schatten", i, a, rel))
    checks.append(Check("schatten_oracle", "Schatten norm vs eigenvalue oracle", worst < 1e-10, f"{worst:.3g}"))
    sp = WeightedSpace(rng.normal(size=(10, 1)), rng.uniform(0.5, 1.5, 10))
    A = WeightedOperator(rng.normal(size=(10, 10)) + 1j * rng.normal(size=(10, 10)), sp, sp)
    dr = duality_check(A, 5, seed)
    rows.append(("duality", 0, 0, dr.max_identity_residual))
    checks.append(Check("duality", "density duality identity", dr.max_identity_residual < 1e-10,
                        f"{dr.max_identity_residual:.3g}"))
    xs = np.array([1.0, 2.0, 4.0, 8.0])
    fit = slope_fit(xs, 3 * xs**2)
    checks.append(Check("slope_fit", "log-log fit exact on power law", abs(fit.slope - 2) < 1e-12, f"{fit.slope}"))
    return ["measure", "trial", "parameter", "value"], rows, {}, checks


# -- registry ----------------------------------------------------------------


def _positive(name):
    def check(v):
        if not (isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0):
            raise ConfigError(f"{name} must be a positive number")
    return check


def _validate_restriction(p):
    from .restriction import restriction_exponent
    from .surface import SurfaceKind

    try:
        SurfaceKind(p["kind"])
        restriction_exponent(p["kind"], p["N"], p["q"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if min(p["resolutions"]) < 8:
        raise ConfigError("resolutions must be at least 8 per axis")


def _validate_strichartz(p):
    from .evolution import check_strichartz_pair

    try:
        check_strichartz_pair(1, p["p"], p["q"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _validate_sobolev(p):
    from .resolvent import sobolev_exponents

    try:
        sobolev_exponents(p["N"], p["q"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _validate_eigen(p):
    if p["ensemble"] < 1 or len(p["resolutions"]) < 2:
        raise ConfigError("eigen needs ensemble >= 1 and at least two resolutions")
    if not p["eps"] > 1:
        raise ConfigError("N=1 eigenvalue sums need eps > 1")


def _validate_scatter(p):
    from .scatter import smatrix_alpha

    try:
        smatrix_alpha(3, p["q"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if len(p["lambdas"]) < 3:
        raise ConfigError("need at least three lambdas for the deficit slope")


SCENARIOS = {
    "restriction": (_restriction, dict(
        kind="sphere", N=2, q=1.5, half_width=8.0, resolutions=[48, 64, 96], surface_resolution=256,
        trials=20, rough_trials=3, knapp_deltas=[0.4, 0.2, 0.1, 0.05], knapp_q=2.0, knapp_circle=2048,
    ), _validate_restriction),
    "optimality": (_optimality, dict(
        q=1.5, r_values=[3.0, 1.5], h_list=[0.2, 0.1, 0.05, 0.025], surface_resolution=1024,
    ), None),
    "strichartz": (_strichartz, dict(p=4.0, q=2.0, M=64, n=16384, max_spread=3.0), _validate_strichartz),
    "sobolev": (_sobolev, dict(
        N=3, q=2.0, moduli=[0.25, 1.0, 4.0], spacings=[0.3, 0.24], radius=1.6, bump_radius=1.2,
    ), _validate_sobolev),
    "lap": (_lap, dict(
        lam=1.0, q=2.0, eps_list=[0.1, 0.05, 0.025, 0.0125], spacing=0.3, bump_radius=2.0, coupling=1.0,
        jump_nodes=256, jump_spacing=0.1, t_list=[0.2, 0.1, 0.05, 0.025],
    ), None),
    "eigen": (_eigen, dict(
        well_strength=2.0, well_width=0.05, ensemble=30, resolutions=[512, 1024], half_width=4.0, eps=1.5,
        rect_extent=4.0, det_spacing=0.05,
    ), _validate_eigen),
    "hartree": (_hartree, dict(period=20.0, n=128, coupling=2.0, T_oracle=0.1, T=0.5, modes=4), None),
    "scatter": (_scatter, dict(
        q=2.0, bump_radius=2.0, strong_coupling=3.0, unitarity_spacings=[0.4, 0.3], weak_coupling=0.05,
        spacing=0.3, lambdas=[1.0, 2.0, 4.0, 8.0],
    ), _validate_scatter),
    "selftest": (_selftest, dict(trials=5), None),
}

_NUMERIC_LISTS = {"resolutions", "knapp_deltas", "r_values", "h_list", "moduli", "spacings", "eps_list",
                  "t_list", "unitarity_spacings", "lambdas"}


def _resolve_params(scenario: str, given: dict) -> dict:
    _, defaults, validator = SCENARIOS[scenario]
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown parameters for {scenario}: {sorted(unknown)}")
    p = {**defaults, **given}
    for key, default in defaults.items():
        v = p[key]
        if key in _NUMERIC_LISTS:
            if not isinstance(v, list) or not v or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in v
            ):
                raise ConfigError(f"{key} must be a non-empty list of positive numbers")
        elif isinstance(default, bool) or isinstance(default, str):
            if type(v) is not type(default):
                raise ConfigError(f"{key} must be a {type(default).__name__}")
        elif isinstance(default, int):
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"{key} must be a non-negative integer")
        elif isinstance(default, float):
            _positive(key)(v)
            p[key] = float(v)
    if validator:
        validator(p)
    return p


def _default_workers() -> int:
    env = os.environ.get("SCHATTENLAB_WORKERS")
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise ConfigError("SCHATTENLAB_WORKERS must be an integer") from None
    if n < 1:
        raise ConfigError("SCHATTENLAB_WORKERS must be at least 1")
    return n


def run(config: ExperimentConfig, workers: int | None = None, write: bool = True) -> Report:
    """Validate, compute, and (by default) write CSV and JSON reports."""
    if config.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {config.scenario!r}; registered: {sorted(SCENARIOS)}")
    params = _resolve_params(config.scenario, config.params)
    workers = _default_workers() if workers is None else workers
    echo = asdict(config)
    echo["params"] = params
    t0 = time.perf_counter()
    fn = SCENARIOS[config.scenario][0]
    try:
        header, rows, fits, checks = fn(params, config.seed, workers)
    except ConfigError:
        raise
    except Exception as exc:  # partial failure: keep a report with the failure marked
        header, rows, fits = ["measure", "value"], [], {}
        checks = [Check("execution", "scenario completed", False, f"{type(exc).__name__}: {exc}")]
    report = Report(config.scenario, echo, header, rows, fits, checks, time.perf_counter() - t0)
    if write:
        out = Path(config.out)
        _atomic_write(out / f"{config.scenario}.csv", report.csv_text())
        _atomic_write(out / f"{config.scenario}.json", json.dumps(report.summary(), indent=2, default=str))
    return report


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="schattenlab", description="Run a numerical experiment scenario.")
    sub = ap.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON config (schema_version 1)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=str)
        sp.add_argument("--workers", type=int)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.config is not None:
            try:
                text = args.config.read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
            cfg = ExperimentConfig.from_json(text)
            if cfg.scenario != args.scenario:
                raise ConfigError(f"config is for {cfg.scenario!r}, not {args.scenario!r}")
        else:
            cfg = ExperimentConfig(args.scenario)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        report = run(cfg, workers=args.workers)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<18} {c.tag}: {c.detail}")
    print(f"wrote {Path(cfg.out) / (cfg.scenario + '.csv')} ({report.wall_time:.1f} s)")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
