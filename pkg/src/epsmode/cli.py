"""Command-line driver: ``epsmode <experiment> --config cfg.json --out DIR``.

Each experiment writes ``<experiment>.csv`` (deterministic, full double
precision) and ``<experiment>.summary.json`` (effective config, config hash,
headline numbers).  Mode sets are cached in the output directory as
``modes_I.epsm`` / ``modes_II.epsm`` and reused when the config hash
matches.

Exit codes: 0 success, 1 compute error, 2 configuration error.  Errors are
printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import os
import sys
from contextlib import nullcontext
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from threadpoolctl import threadpool_limits

from . import born, cache, gauge, green, localfield, modes
from .dielectric import (
    DisorderSpec,
    Explicit,
    Homogeneous,
    Layered,
    Region,
    build_profile,
    generate_disorder,
)
from .geometry import Grid, ScalarField, random_vector_field

COMMANDS = ("modes", "green-check", "born", "gauge", "localfield", "couplings", "interface", "report")
TWO_PI = 2.0 * math.pi


# -- configuration schema ---------------------------------------------------

class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeometryConfig(Strict):
    dims: tuple[int, int, int] = (8, 1, 64)
    lengths: tuple[float, float, float] = (TWO_PI, TWO_PI, TWO_PI)

    @field_validator("dims")
    @classmethod
    def _positive_dims(cls, v):
        if min(v) < 1:
            raise ValueError("dims must be positive")
        return v

    @field_validator("lengths")
    @classmethod
    def _positive_lengths(cls, v):
        if min(v) <= 0:
            raise ValueError("lengths must be positive")
        return v


class HomogeneousProfile(Strict):
    kind: Literal["homogeneous"] = "homogeneous"
    value: float = 1.0


class LayeredProfile(Strict):
    kind: Literal["layered"] = "layered"
    values: list[float] = [1.0, 2.25]
    interfaces: list[float] = [math.pi]
    width: float = TWO_PI / 16
    axis: int = Field(2, ge=0, le=2)


class ExplicitProfile(Strict):
    kind: Literal["explicit"] = "explicit"
    path: str


ProfileConfig = Union[HomogeneousProfile, LayeredProfile, ExplicitProfile]


class RegionConfig(Strict):
    lower: tuple[float, float, float]
    upper: tuple[float, float, float]
    edge_width: float = Field(gt=0)


class DisorderConfig(Strict):
    seed: int = Field(7, ge=0, lt=2**64)
    rms: float = Field(0.05, ge=0)
    correlation_length: Union[float, tuple[float, float, float]] = 0.5
    region: Optional[RegionConfig] = None


class SolverConfig(Strict):
    mode_count: Union[int, Literal["all"]] = "all"
    degeneracy_tol: float = Field(1e-6, gt=0)
    omega_tol: Optional[float] = None
    eta: float = Field(0.0, ge=0)
    resonance_tol: float = Field(1e-8, gt=0)
    frequency_policy: Literal["fixed", "self-consistent"] = "fixed"
    eps_min: float = Field(0.05, gt=0)
    band_limit: Optional[tuple[int, int, int]] = None


class GreenCheckParams(Strict):
    frequencies: int = Field(3, ge=1)
    probes: int = Field(8, ge=1)


class BornParams(Strict):
    labels: Optional[list[int]] = None
    label_count: int = Field(4, ge=1)
    orders: int = Field(3, ge=0)
    variants: list[Literal["G", "K"]] = ["G", "K"]
    seeds: Optional[list[int]] = None
    exact_check: bool = True


class GaugeParams(Strict):
    labels: Optional[list[int]] = None
    label_count: int = Field(4, ge=1)
    plane_waves: list[tuple[tuple[int, int, int], Literal[1, 2]]] = []


class LocalFieldParams(Strict):
    eps_values: list[float] = [1.0, 1.5, 2.0, 4.0, 12.0]


class CouplingParams(Strict):
    basis_counts: list[int] = []


class InterfaceParams(Strict):
    layer_value: float = 2.0
    interval: tuple[float, float] = (math.pi / 2, 3 * math.pi / 2)
    width: float = Field(TWO_PI / 16, gt=0)
    axis: int = Field(2, ge=0, le=2)
    label: Optional[int] = None
    mode_count: int = Field(40, ge=1)


class ExperimentParams(Strict):
    green_check: GreenCheckParams = GreenCheckParams()
    born: BornParams = BornParams()
    gauge: GaugeParams = GaugeParams()
    localfield: LocalFieldParams = LocalFieldParams()
    couplings: CouplingParams = CouplingParams()
    interface: InterfaceParams = InterfaceParams()


class ExperimentConfig(Strict):
    geometry: GeometryConfig = GeometryConfig()
    epsilon_i: ProfileConfig = Field(LayeredProfile(), discriminator="kind")
    disorder: DisorderConfig = DisorderConfig()
    solver: SolverConfig = SolverConfig()
    experiments: ExperimentParams = ExperimentParams()
    output_dir: str = "out"


# -- errors and output helpers ----------------------------------------------

class ConfigError(Exception):
    pass


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, rows: list[dict], hash_value: str) -> None:
    columns = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_sha256={hash_value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_summary(path: Path, command: str, config: ExperimentConfig, hash_value: str, results: dict) -> None:
    summary = {
        "command": command,
        "config_sha256": hash_value,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "effective_config": config.model_dump(mode="json"),
        "results": _jsonable(results),
    }
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


# -- shared setup -----------------------------------------------------------

class Context:
    """Grid, profiles and cached mode sets for one configuration."""

    def __init__(self, config: ExperimentConfig, out: Path, force: bool):
        self.config = config
        self.out = out
        self.force = force
        geo = config.geometry
        self.grid = Grid(tuple(geo.dims), tuple(geo.lengths))
        self.eps_i = self.profile(config.epsilon_i)
        self._modes: dict = {}

    def profile(self, spec: ProfileConfig):
        solver = self.config.solver
        if isinstance(spec, HomogeneousProfile):
            desc = Homogeneous(spec.value)
        elif isinstance(spec, LayeredProfile):
            desc = Layered(tuple(spec.values), tuple(spec.interfaces), spec.width, spec.axis)
        else:
            desc = Explicit(np.load(spec.path))
        return build_profile(self.grid, desc, solver.band_limit, solver.eps_min)

    def disorder_spec(self, seed: Optional[int] = None) -> DisorderSpec:
        d = self.config.disorder
        region = None
        if d.region is not None:
            region = Region(tuple(d.region.lower), tuple(d.region.upper), d.region.edge_width)
        corr = d.correlation_length if isinstance(d.correlation_length, float) else tuple(d.correlation_length)
        return DisorderSpec(d.seed if seed is None else seed, d.rms, corr, region)

    def eps_ii(self, seed: Optional[int] = None):
        return generate_disorder(self.eps_i, self.disorder_spec(seed))

    def _hash(self, which: str, seed: Optional[int]) -> str:
        c = self.config
        payload = {
            "geometry": c.geometry.model_dump(mode="json"),
            "epsilon_i": c.epsilon_i.model_dump(mode="json"),
            "solver": c.solver.model_dump(mode="json", exclude={"eta", "resonance_tol", "frequency_policy"}),
        }
        if which == "II":
            disorder = c.disorder.model_dump(mode="json")
            if seed is not None:
                disorder["seed"] = seed
            payload["disorder"] = disorder
        return cache.config_hash(payload)

    def modes(self, which: str = "I", seed: Optional[int] = None) -> modes.ModeSet:
        key = (which, seed)
        if key in self._modes:
            return self._modes[key]
        name = "modes_I.epsm" if which == "I" else (
            "modes_II.epsm" if seed is None else f"modes_II_seed{seed}.epsm"
        )
        path = self.out / name
        hash_value = self._hash(which, seed)
        result = None
        if path.exists():
            stored = cache.load_mode_cache(path)
            if stored.metadata.get("config_hash") == hash_value:
                result = stored
            elif not self.force:
                raise cache.CacheError(f"{path}: config hash mismatch (use --force to recompute)")
        if result is None:
            eps = self.eps_i if which == "I" else self.eps_ii(seed)
            s = self.config.solver
            result = modes.solve_modes(eps, s.mode_count, s.degeneracy_tol, s.omega_tol)
            cache.save_mode_cache(result, path, hash_value)
        self._modes[key] = result
        return result


# -- experiments ------------------------------------------------------------

def run_modes(ctx: Context):
    rows, results = [], {}
    sets = [("I", ctx.modes("I"))]
    if ctx.config.disorder.rms > 0:
        sets.append(("II", ctx.modes("II")))
    for name, ms in sets:
        gram = modes.gram_matrix(ms)
        trans = [modes.transversality_residual(ms.field(i), ms.eps) for i in range(len(ms))]
        resid = [modes.eigen_residual(ms, i) for i in range(len(ms))]
        for i in range(len(ms)):
            rows.append({"set": name, "label": i, "omega": ms.omegas[i],
                         "transversality": trans[i], "eigen_residual": resid[i]})
        results[name] = {
            "count": len(ms),
            "full_count": modes.full_mode_count(ms.grid),
            "gram_deviation": float(np.abs(gram - np.eye(len(ms))).max()),
            "max_transversality": max(trans) if trans else 0.0,
            "max_eigen_residual": max(resid) if resid else 0.0,
            "lowest_omegas": ms.omegas[:8].tolist(),
        }
    return rows, results


def run_green_check(ctx: Context):
    p = ctx.config.experiments.green_check
    rows = []
    sets = [("I", ctx.modes("I"))]
    if ctx.config.disorder.rms > 0:
        sets.append(("II", ctx.modes("II")))
    dense = 3 * ctx.grid.n_total <= 3072
    for name, ms in sets:
        for omega in green.probe_frequencies(ms, p.frequencies):
            identity = green.kernel_identity_residual(ms, ms.eps, omega)
            err = float("nan")
            if dense and ms.is_complete:
                g = green.kernel(ms, omega, "G", resonance_tol=ctx.config.solver.resonance_tol)
                err = 0.0
                for i in range(p.probes):
                    v = random_vector_field(ctx.grid, green.IDENTITY_SEED + 1000 + i)
                    diff = green.apply_kernel(g, v) - green.direct_inverse_apply(ms.eps, omega, v)
                    err = max(err, diff.norm() / v.norm())
            rows.append({"set": name, "omega": omega, "identity_residual": identity, "oracle_error": err})
    return rows, {
        "max_identity_residual": max(r["identity_residual"] for r in rows),
        "max_oracle_error": max(r["oracle_error"] for r in rows),
    }


def _labels(ms, labels, count):
    if labels is not None:
        return [int(i) for i in labels]
    picked = [int(i) for i in modes.gauge_sensitive_labels(ms)[:count]]
    if len(picked) < count:
        # fully degenerate spectra (homogeneous eps_I): fall back to any mode
        # that is not polarised along a flat axis
        rest = np.nonzero(modes.flat_axis_fraction(ms) < 1.0 - 1e-6)[0]
        picked += [int(i) for i in rest if int(i) not in picked][: count - len(picked)]
    if not picked:
        raise ValueError("no mode whose transversality depends on the profile")
    return picked


def run_born(ctx: Context):
    p = ctx.config.experiments.born
    s = ctx.config.solver
    ms = ctx.modes("I")
    labels = _labels(ms, p.labels, p.label_count)
    seeds = p.seeds if p.seeds is not None else [ctx.config.disorder.seed]
    rows, exact = [], []
    worst = {"K_transversality": 0.0, "G_min_transversality": math.inf}
    for seed in seeds:
        eps_ii = ctx.eps_ii(seed)
        for label in labels:
            for variant in p.variants:
                trace = born.born_series(variant, ms, ctx.eps_i, eps_ii, label, p.orders,
                                         s.frequency_policy, s.degeneracy_tol, s.resonance_tol)
                for row in trace.rows():
                    rows.append({"seed": seed, **row})
                if variant == "K":
                    worst["K_transversality"] = max(worst["K_transversality"], trace.transversality.max())
                else:
                    worst["G_min_transversality"] = min(worst["G_min_transversality"],
                                                        trace.transversality[:2].min())
        if p.exact_check and ctx.config.disorder.rms > 0:
            ms_ii = ctx.modes("II", seed)
            match = modes.match_modes(ms, ms_ii)
            for label in labels:
                candidate = int(np.nonzero(match.labels == label)[0][0])
                f_ii, w_ii = ms_ii.field(candidate), ms_ii.omegas[candidate]
                exact.append({
                    "seed": seed, "label": label, "label_ii": candidate, "omega_ii": w_ii,
                    "G": born.homogeneous_ls_residual("G", ms, ctx.eps_i, ms_ii.eps, f_ii, w_ii),
                    "K": born.homogeneous_ls_residual("K", ms, ctx.eps_i, ms_ii.eps, f_ii, w_ii),
                })
    if not math.isfinite(worst["G_min_transversality"]):
        worst["G_min_transversality"] = float("nan")
    return rows, {"labels": labels, "seeds": seeds, **worst, "homogeneous_ls": exact}


def run_gauge(ctx: Context):
    p = ctx.config.experiments.gauge
    ms_i, ms_ii = ctx.modes("I"), ctx.modes("II")
    eps_ii = ms_ii.eps
    rows = []
    for label in _labels(ms_i, p.labels, p.label_count):
        f = ms_i.field(label)
        term = gauge.gauge_gradient(ms_ii, eps_ii, ctx.eps_i, f, ms_i.omegas[label], label)
        prof = gauge.assemble_field_profiles(f, term, eps_ii)
        rows.append({
            "label": label,
            "gauge_condition": gauge.verify_gauge_condition(eps_ii, f, term),
            "control_without_gauge": gauge.verify_gauge_condition(eps_ii, f, gauge.zero_gauge_term(f)),
            "gradient_norm": term.gradient.norm(),
            "curl_residual": term.curl_residual,
            "regradient_residual": term.regradient_residual,
            "uniform_part": float(np.linalg.norm(term.uniform)),
            "magnetic_gauge_residual": prof.gauge_curl,
            "displacement_divergence": prof.displacement_divergence,
        })
    waves = []
    for index, sigma in p.plane_waves:
        wave, knorm = gauge.plane_wave(ctx.grid, index, sigma)
        closed = gauge.plane_wave_gauge_profile(eps_ii, ms_ii, index, sigma)
        one = Homogeneous(1.0)
        vacuum = build_profile(ctx.grid, one, ctx.eps_i.band_limit, ctx.eps_i.eps_min)
        generic = wave + gauge.gauge_gradient(ms_ii, eps_ii, vacuum, wave, knorm).gradient
        waves.append({"index": list(index), "sigma": sigma,
                      "path_difference": (closed - generic).norm() / generic.norm()})
    return rows, {
        "max_gauge_condition": max(r["gauge_condition"] for r in rows),
        "min_control": min(r["control_without_gauge"] for r in rows),
        "max_curl_residual": max(r["curl_residual"] for r in rows),
        "plane_waves": waves,
    }


def run_localfield(ctx: Context):
    p = ctx.config.experiments.localfield
    rows = []
    for eps in p.eps_values:
        for route in localfield.ROUTES:
            r = localfield.local_field_factor(eps, route)
            rows.append({"eps": r.eps, "factor": r.factor, "emission_factor": r.emission_factor,
                         "route": r.route, "iterations": r.iterations, "method": r.method})
    worst = max(abs(r["factor"] - 3 * r["eps"] / (2 * r["eps"] + 1)) for r in rows)
    return rows, {"max_route_deviation": worst}


def run_couplings(ctx: Context):
    p = ctx.config.experiments.couplings
    ms_i, ms_ii = ctx.modes("I"), ctx.modes("II")
    counts = [len(ms_i)] + [c for c in p.basis_counts if c != len(ms_i)]
    rows, full = [], None
    for count in counts:
        cm = born.coupling_matrix(ms_i, ms_ii, ctx.eps_i, ms_ii.eps, basis_count=count)
        if full is None:
            full = cm
            np.save(ctx.out / "couplings_matrix.npy", cm.matrix)
        rows.append({"basis_count": count, "complete_basis": cm.complete_basis,
                     "max_residual": cm.max_residual, "mean_residual": float(cm.residuals.mean()),
                     "gram_condition": cm.gram_condition})
    return rows, {"full_max_residual": full.max_residual, "gram_condition": full.gram_condition,
                  "divergence_i": full.divergence_i, "divergence_ii": full.divergence_ii}


def run_interface(ctx: Context):
    p = ctx.config.experiments.interface
    eps_b = ctx.eps_i
    eps_a = build_profile(ctx.grid, Homogeneous(p.layer_value), eps_b.band_limit, eps_b.eps_min)
    ms = modes.solve_modes(eps_b, min(p.mode_count, modes.full_mode_count(ctx.grid)),
                           ctx.config.solver.degeneracy_tol)
    label = p.label
    if label is None:
        power = np.sum(np.abs(ms.fields) ** 2, axis=(2, 3, 4))
        normal = power[:, p.axis] / power.sum(axis=1)
        candidates = np.nonzero((normal > 0.05) & (normal < 0.95))[0]
        if candidates.size == 0:
            raise ValueError("no mode with both tangential and normal components")
        label = int(candidates[0])
    report = born.interface_continuity_report(eps_b, eps_a, ms, label, p.interval, p.width, p.axis)
    summary = {"label": label, "identity_residual": report.identity_residual}
    for v in ("G", "K"):
        for q in ("tangential_E", "normal_D"):
            summary[f"{v}_{q}"] = report.proxy(v, q)
    return report.rows, summary


def run_report(ctx: Context):
    rows, results = [], {}
    for path in sorted(ctx.out.glob("*.summary.json")):
        data = json.loads(path.read_text())
        if data.get("command") == "report":
            continue
        results[data["command"]] = {"config_sha256": data["config_sha256"], **data["results"]}
        for key, value in data["results"].items():
            if isinstance(value, (int, float, str)):
                rows.append({"command": data["command"], "metric": key, "value": value})
    if not results:
        raise FileNotFoundError(f"no experiment summaries in {ctx.out}")
    return rows, results


RUNNERS = {
    "modes": run_modes,
    "green-check": run_green_check,
    "born": run_born,
    "gauge": run_gauge,
    "localfield": run_localfield,
    "couplings": run_couplings,
    "interface": run_interface,
    "report": run_report,
}


# -- entry point ------------------------------------------------------------

def load_config(path: Optional[str], seed: Optional[int]) -> ExperimentConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if seed is not None:
        data.setdefault("disorder", {})
        if not isinstance(data["disorder"], dict):
            raise ConfigError("disorder must be an object")
        data["disorder"]["seed"] = seed
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(exc.json(include_url=False)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epsmode", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, help="override disorder.seed")
    parser.add_argument("--force", action="store_true", help="recompute caches whose config hash differs")
    parser.add_argument("--threads", type=int, help="BLAS threads (fallback: EPSMODE_THREADS)")
    return parser


def _error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.seed)
        threads = args.threads if args.threads is not None else os.environ.get("EPSMODE_THREADS")
        threads = int(threads) if threads not in (None, "") else None
        if threads is not None and threads < 1:
            raise ConfigError("threads must be positive")
    except (ConfigError, ValueError) as exc:
        return _error("config", str(exc), 2)
    out = Path(args.out or config.output_dir)
    if args.out:
        config = config.model_copy(update={"output_dir": str(out)})
    hash_value = cache.config_hash(config.model_dump(mode="json", exclude={"output_dir"}))
    limits = threadpool_limits(threads) if threads is not None else nullcontext()
    try:
        with limits:
            out.mkdir(parents=True, exist_ok=True)
            ctx = Context(config, out, args.force)
            rows, results = RUNNERS[args.command](ctx)
            stem = args.command.replace("-", "_")
            write_csv(out / f"{stem}.csv", rows, hash_value)
            write_summary(out / f"{stem}.summary.json", args.command, config, hash_value, results)
    except Exception as exc:  # noqa: BLE001 - reported as a structured compute error
        return _error("compute", f"{type(exc).__name__}: {exc}", 1)
    print(json.dumps({"command": args.command, "out": str(out), "config_sha256": hash_value}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
