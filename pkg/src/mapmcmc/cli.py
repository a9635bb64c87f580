"""Batch front-end: TOML experiment configs to maps, chains, and reports.

Subcommands:
    build-map   fit a transport map to the low-fidelity posterior
    sample      run mh / mfmh / dram chains and write CSV + summary JSON
    compare     tabulate ESS against evaluation counts across finished runs
    synth-data  generate noisy synthetic observations from the truth

All seeds are explicit in the config (or overridden by --seed); outputs are
byte-identical across reruns except for the single "timing" key in report
JSON files.  Schema violations print a machine-readable JSON error naming
the offending field and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .diagnostics import summarize
from .mapbuild import BuildConfig, BuildError, ReferenceDensity, build_map
from .models_beam import (
    BeamModel,
    build_beam_surrogate,
    load_beam_surrogate,
    make_beam_grid,
)
from .models_dr import (
    DrFomModel,
    SolverError,
    build_dr_rom,
    load_dr_rom,
    make_dr_grid,
)
from .problems import (
    BayesianProblem,
    GaussianPrior,
    LogNormalPrior,
    NoiseModel,
    synthesize_data,
)
from .samplers import (
    ChainAbortedError,
    IndependenceProposal,
    RandomWalkProposal,
    adaptive_metropolis_dram,
    metropolis_hastings,
    mfmh,
    save_chain,
    thin_and_burn,
)
from .targets import BananaDensity, GaussianDensity
from .transport import MapInversionError, load_map, save_map

__all__ = ["main", "ConfigError"]

CONFIG_VERSION = 1
_ALGORITHMS = ("mh", "mfmh", "dram")
_KERNELS = ("independence", "random-walk")


class ConfigError(Exception):
    """A config file violated the schema; ``dotted_field`` names the culprit."""

    def __init__(self, dotted_field: str, message: str):
        super().__init__(f"{dotted_field}: {message}")
        self.dotted_field = dotted_field
        self.message = message


def _emit_error(kind: str, message: str, dotted_field: str | None = None) -> None:
    record = {"error": {"kind": kind, "message": message}}
    if dotted_field is not None:
        record["error"]["field"] = dotted_field
    print(json.dumps(record), file=sys.stderr)


_MISSING = object()


def _get(section: dict, key: str, path: str, kinds, default=_MISSING):
    if key not in section:
        if default is _MISSING:
            raise ConfigError(path, "missing required field")
        return default
    value = section[key]
    if kinds is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
    elif kinds is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
    elif kinds is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        value = float(value)
    elif kinds is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
    elif kinds is list:
        if not isinstance(value, list):
            raise ConfigError(path, f"expected an array, got {value!r}")
    return value


def _vector(section: dict, key: str, path: str, d: int | None = None, default=_MISSING):
    value = _get(section, key, path, list, default)
    if value is default and default is not _MISSING:
        return value
    try:
        arr = np.asarray([float(v) for v in value])
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, f"expected an array of numbers: {exc}") from exc
    if d is not None and arr.shape != (d,):
        raise ConfigError(path, f"expected {d} entries, got {arr.shape[0]}")
    return arr


def _read_config(path: str) -> tuple[dict, Path]:
    cfg_path = Path(path)
    try:
        with open(cfg_path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError("<config>", f"config file not found: {cfg_path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<config>", f"invalid TOML: {exc}") from exc
    version = _get(cfg, "config_version", "config_version", int)
    if version != CONFIG_VERSION:
        raise ConfigError("config_version", f"unsupported version {version} (expected {CONFIG_VERSION})")
    return cfg, cfg_path.parent


def _resolve(base: Path, name: str) -> Path:
    candidate = Path(name)
    if not candidate.is_absolute():
        candidate = base / name
    return candidate


def _load_data_csv(path: Path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if rows and rows[0] and rows[0][0] == "y":
        rows = rows[1:]
    return np.array([float(row[0]) for row in rows])


# ---------------------------------------------------------------------------
# Problem assembly


@dataclass
class ProblemBundle:
    """Everything a command needs to know about one inference problem."""

    kind: str
    d: int
    log_target: object
    log_lowfi: object
    reference: ReferenceDensity
    start: np.ndarray
    sample_box: tuple[np.ndarray, np.ndarray] | None = None
    data: np.ndarray | None = None
    theta_star: np.ndarray | None = None
    extras: dict = field(default_factory=dict)


def _reference_from(cfg: dict, d: int) -> ReferenceDensity:
    section = cfg.get("reference")
    if section is None:
        return ReferenceDensity.standard(d)
    if not isinstance(section, dict):
        raise ConfigError("reference", "expected a table")
    mean = _vector(section, "mean", "reference.mean", d)
    raw_std = section.get("stddev", 1.0)
    if isinstance(raw_std, list):
        stddev = _vector(section, "stddev", "reference.stddev", d)
    else:
        stddev = np.full(d, _get(section, "stddev", "reference.stddev", float, 1.0))
    if np.any(stddev <= 0):
        raise ConfigError("reference.stddev", "standard deviations must be positive")
    return ReferenceDensity(mean=mean, stddev=stddev)


def _gaussian_bundle(pcfg: dict, cfg: dict) -> ProblemBundle:
    mean = _vector(pcfg, "mean", "problem.mean")
    d = mean.shape[0]
    cov_rows = _get(pcfg, "cov", "problem.cov", list)
    cov = np.array([[float(v) for v in row] for row in cov_rows])
    if cov.shape != (d, d):
        raise ConfigError("problem.cov", f"expected a {d}x{d} matrix")
    target = GaussianDensity(mean, cov)
    if "lowfi_mean" in pcfg or "lowfi_cov" in pcfg:
        lmean = _vector(pcfg, "lowfi_mean", "problem.lowfi_mean", d, default=mean)
        lrows = _get(pcfg, "lowfi_cov", "problem.lowfi_cov", list, default=cov_rows)
        lcov = np.array([[float(v) for v in row] for row in lrows])
        lowfi = GaussianDensity(lmean, lcov)
    else:
        lowfi = target
    return ProblemBundle(
        kind="gaussian",
        d=d,
        log_target=target,
        log_lowfi=lowfi,
        reference=_reference_from(cfg, d),
        start=mean.copy(),
    )


def _banana_bundle(pcfg: dict, cfg: dict) -> ProblemBundle:
    curvature = _get(pcfg, "curvature", "problem.curvature", float, 1.0)
    spread = _get(pcfg, "spread", "problem.spread", float, 1.0)
    target = BananaDensity(curvature=curvature, spread=spread)
    lowfi = BananaDensity(
        curvature=_get(pcfg, "lowfi_curvature", "problem.lowfi_curvature", float, curvature),
        spread=_get(pcfg, "lowfi_spread", "problem.lowfi_spread", float, spread),
    )
    return ProblemBundle(
        kind="banana",
        d=2,
        log_target=target,
        log_lowfi=lowfi,
        reference=_reference_from(cfg, 2),
        start=np.zeros(2),
    )


def _dr_data_model(pcfg: dict):
    h_data = _get(pcfg, "h_data", "problem.h_data", float, 1.0 / 64.0)
    return DrFomModel(make_dr_grid(h_data))


def _dr_bundle(pcfg: dict, cfg: dict, base: Path) -> ProblemBundle:
    theta_star = _vector(pcfg, "theta_star", "problem.theta_star", 2)
    noise_var = _get(pcfg, "noise_variance", "problem.noise_variance", float)
    h_inference = _get(pcfg, "h_inference", "problem.h_inference", float, 1.0 / 32.0)
    prior_mean = _vector(pcfg, "prior_mean", "problem.prior_mean", 2)
    prior_cov = _vector(pcfg, "prior_cov_diag", "problem.prior_cov_diag", 2)
    data_seed = _get(pcfg, "data_seed", "problem.data_seed", int, 0)

    grid = make_dr_grid(h_inference)
    fom = DrFomModel(grid)
    noise = NoiseModel.iid(noise_var, fom.d_out)

    if "data_file" in pcfg:
        data = _load_data_csv(_resolve(base, _get(pcfg, "data_file", "problem.data_file", str)))
    else:
        data = synthesize_data(_dr_data_model(pcfg), theta_star, noise, data_seed)
    if data.shape[0] != fom.d_out:
        raise ConfigError("problem.data_file", f"expected {fom.d_out} observations, got {data.shape[0]}")

    if "rom_file" in pcfg:
        rom = load_dr_rom(_resolve(base, _get(pcfg, "rom_file", "problem.rom_file", str)))
    else:
        shape = _get(pcfg, "rom_snapshots", "problem.rom_snapshots", list, [20, 20])
        box_rows = _get(pcfg, "rom_box", "problem.rom_box", list, None)
        kwargs = {
            "snapshot_shape": (int(shape[0]), int(shape[1])),
            "r": _get(pcfg, "rom_rank", "problem.rom_rank", int, 20),
        }
        if box_rows is not None:
            kwargs["box"] = tuple((float(lo), float(hi)) for lo, hi in box_rows)
        rom = build_dr_rom(h_inference, **kwargs)

    prior = GaussianPrior(mean=prior_mean, cov_diag=prior_cov)
    hi = BayesianProblem(model=fom, prior=prior, noise=noise, data=data, label="dr-fom")
    lo = BayesianProblem(model=rom, prior=prior, noise=noise, data=data, label="dr-rom")
    return ProblemBundle(
        kind="dr",
        d=2,
        log_target=hi.log_posterior,
        log_lowfi=lo.log_posterior,
        reference=_reference_from(cfg, 2),
        start=prior_mean.copy(),
        data=data,
        theta_star=theta_star,
        extras={"rom": rom, "noise_variance": noise_var},
    )


def _beam_data_model(pcfg: dict):
    n_nodes = _get(pcfg, "n_nodes", "problem.n_nodes", int, 601)
    return BeamModel(make_beam_grid(n_nodes))


def _beam_bundle(pcfg: dict, cfg: dict, base: Path) -> ProblemBundle:
    theta_star = _vector(pcfg, "theta_star", "problem.theta_star", 3)
    noise_var = _get(pcfg, "noise_variance", "problem.noise_variance", float)
    n_nodes = _get(pcfg, "n_nodes", "problem.n_nodes", int, 601)
    var_log = _get(pcfg, "prior_var_log", "problem.prior_var_log", float, 0.05)
    parameterization = _get(
        pcfg, "prior_parameterization", "problem.prior_parameterization", str, "median-one"
    )
    data_seed = _get(pcfg, "data_seed", "problem.data_seed", int, 0)

    grid = make_beam_grid(n_nodes)
    fom = BeamModel(grid)
    noise = NoiseModel.iid(noise_var, fom.d_out)

    if "data_file" in pcfg:
        data = _load_data_csv(_resolve(base, _get(pcfg, "data_file", "problem.data_file", str)))
    else:
        data = synthesize_data(fom, theta_star, noise, data_seed)
    if data.shape[0] != fom.d_out:
        raise ConfigError("problem.data_file", f"expected {fom.d_out} observations, got {data.shape[0]}")

    if "surrogate_file" in pcfg:
        surrogate = load_beam_surrogate(
            _resolve(base, _get(pcfg, "surrogate_file", "problem.surrogate_file", str))
        )
    else:
        box_raw = _get(pcfg, "surrogate_box", "problem.surrogate_box", list, [0.5, 4.0])
        surrogate = build_beam_surrogate(
            grid,
            nodes_per_axis=_get(pcfg, "surrogate_nodes", "problem.surrogate_nodes", int, 10),
            box=(float(box_raw[0]), float(box_raw[1])),
        )

    if parameterization == "median-one":
        prior = LogNormalPrior.median_one(3, var_log)
    elif parameterization == "moment-matched":
        prior = LogNormalPrior.moment_matched(3, mean=1.0, var=var_log)
    else:
        raise ConfigError(
            "problem.prior_parameterization",
            f"expected 'median-one' or 'moment-matched', got {parameterization!r}",
        )

    hi = BayesianProblem(model=fom, prior=prior, noise=noise, data=data, label="beam-fom")
    lo = BayesianProblem(model=surrogate, prior=prior, noise=noise, data=data, label="beam-surrogate")
    box_lo = np.array([axis[0] for axis in surrogate.axes])
    box_hi = np.array([axis[-1] for axis in surrogate.axes])
    return ProblemBundle(
        kind="beam",
        d=3,
        log_target=hi.log_posterior,
        log_lowfi=lo.log_posterior,
        reference=_reference_from(cfg, 3),
        start=np.ones(3),
        sample_box=(box_lo, box_hi),
        data=data,
        theta_star=theta_star,
        extras={"surrogate": surrogate, "noise_variance": noise_var},
    )


def _build_problem(cfg: dict, base: Path) -> ProblemBundle:
    pcfg = cfg.get("problem")
    if not isinstance(pcfg, dict):
        raise ConfigError("problem", "missing required table")
    kind = _get(pcfg, "kind", "problem.kind", str)
    if kind == "gaussian":
        return _gaussian_bundle(pcfg, cfg)
    if kind == "banana":
        return _banana_bundle(pcfg, cfg)
    if kind == "dr":
        return _dr_bundle(pcfg, cfg, base)
    if kind == "beam":
        return _beam_bundle(pcfg, cfg, base)
    raise ConfigError("problem.kind", f"unknown problem kind {kind!r}")


def _build_config_from(cfg: dict, bundle: ProblemBundle, seed_override: int | None) -> BuildConfig:
    section = cfg.get("map")
    if not isinstance(section, dict):
        raise ConfigError("map", "missing required table")
    stages_raw = _get(section, "stages", "map.stages", list)
    stages = []
    for pair in stages_raw:
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError("map.stages", f"each stage must be a [ell_L, ell_R] pair, got {pair!r}")
        stages.append((int(pair[0]), int(pair[1])))
    sample_box = bundle.sample_box
    if "sample_box" in section:
        rows = _get(section, "sample_box", "map.sample_box", list)
        if len(rows) != 2:
            raise ConfigError("map.sample_box", "expected [lower_bounds, upper_bounds]")
        sample_box = (
            np.asarray([float(v) for v in rows[0]]),
            np.asarray([float(v) for v in rows[1]]),
        )
    seed = seed_override if seed_override is not None else _get(section, "seed", "map.seed", int)
    try:
        return BuildConfig(
            n_samples=_get(section, "n_samples", "map.n_samples", int),
            stages=stages,
            tolerance=_get(section, "tolerance", "map.tolerance", float, 1e-6),
            max_iterations=_get(section, "max_iterations", "map.max_iterations", int, 500),
            seed=seed,
            fd_step=_get(section, "fd_step", "map.fd_step", float, 1e-6),
            q=_get(section, "quadrature_order", "map.quadrature_order", int, 16),
            sample_box=sample_box,
        )
    except BuildError as exc:
        raise ConfigError("map", str(exc)) from exc


def _out_dir(args, cfg: dict) -> Path:
    if args.out is not None:
        out = Path(args.out)
    else:
        section = cfg.get("output", {})
        out = Path(section.get("dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(path: Path, record: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Commands


def cmd_build_map(args) -> int:
    cfg, base = _read_config(args.config)
    bundle = _build_problem(cfg, base)
    bcfg = _build_config_from(cfg, bundle, args.seed)
    t0 = time.perf_counter()
    map_obj, report = build_map(bundle.log_lowfi, bundle.reference, bcfg)
    seconds = time.perf_counter() - t0
    out = _out_dir(args, cfg)
    save_map(out / "map.json", map_obj)
    _dump_json(
        out / "build_report.json",
        {
            "config_version": CONFIG_VERSION,
            "problem": bundle.kind,
            "d": bundle.d,
            "build": report,
            "timing": {"seconds": seconds},
        },
    )
    print(f"map written to {out / 'map.json'} ({len(report['stages'])} stages)")
    return 0


def _sampler_section(cfg: dict) -> dict:
    section = cfg.get("sampler")
    if not isinstance(section, dict):
        raise ConfigError("sampler", "missing required table")
    return section


def _run_one_chain(bundle, scfg, algorithm, kernel_name, map_obj, start, n_steps, seed):
    d = bundle.d
    if algorithm == "mh":
        variance = _get(scfg, "rw_variance", "sampler.rw_variance", float)
        kernel = RandomWalkProposal.from_variance(variance, d)
        return metropolis_hastings(bundle.log_target, kernel, start, n_steps, seed)
    if algorithm == "mfmh":
        if kernel_name == "independence":
            kernel = IndependenceProposal(bundle.reference)
        else:
            variance = _get(scfg, "rw_variance", "sampler.rw_variance", float)
            kernel = RandomWalkProposal.from_variance(variance, d)
        return mfmh(bundle.log_target, map_obj, kernel, start, n_steps, seed)
    variance = _get(scfg, "rw_variance", "sampler.rw_variance", float)
    burn_adapt = _get(scfg, "burn_adapt", "sampler.burn_adapt", int, max(1, n_steps // 10))
    enable_dr = _get(scfg, "enable_dr", "sampler.enable_dr", bool, True)
    max_evals = _get(scfg, "max_target_evals", "sampler.max_target_evals", int, 0)
    return adaptive_metropolis_dram(
        bundle.log_target,
        start,
        np.full(d, variance),
        n_steps,
        burn_adapt,
        seed,
        enable_dr=enable_dr,
        max_target_evals=max_evals if max_evals > 0 else None,
    )


def cmd_sample(args) -> int:
    cfg, base = _read_config(args.config)
    bundle = _build_problem(cfg, base)
    scfg = _sampler_section(cfg)

    algorithm = _get(scfg, "algorithm", "sampler.algorithm", str)
    if algorithm not in _ALGORITHMS:
        raise ConfigError("sampler.algorithm", f"expected one of {_ALGORITHMS}, got {algorithm!r}")
    kernel_name = _get(scfg, "kernel", "sampler.kernel", str, "independence")
    if kernel_name not in _KERNELS:
        raise ConfigError("sampler.kernel", f"expected one of {_KERNELS}, got {kernel_name!r}")
    if algorithm == "mh" and kernel_name == "independence":
        raise ConfigError("sampler.kernel", "plain mh supports only the random-walk kernel")
    n_steps = _get(scfg, "iterations", "sampler.iterations", int)
    if n_steps < 1:
        raise ConfigError("sampler.iterations", "must be at least 1")
    burn = _get(scfg, "burn", "sampler.burn", int, 0)
    stride = _get(scfg, "stride", "sampler.stride", int, 1)
    if burn < 0 or stride < 1:
        raise ConfigError("sampler.burn", "burn must be >= 0 and stride >= 1")
    base_seed = args.seed if args.seed is not None else _get(scfg, "seed", "sampler.seed", int)
    n_chains = args.chains
    if n_chains < 1:
        raise ConfigError("sampler.chains", "--chains must be at least 1")

    map_obj = None
    if algorithm == "mfmh":
        if args.map is not None:
            map_obj = load_map(args.map)
        elif "map_file" in scfg:
            map_obj = load_map(_resolve(base, _get(scfg, "map_file", "sampler.map_file", str)))
        else:
            raise ConfigError("sampler.map_file", "mfmh requires a map (or pass --map)")

    if "start" in scfg:
        start = _vector(scfg, "start", "sampler.start", bundle.d)
    elif algorithm == "mfmh":
        start = map_obj.eval(bundle.reference.mean)
    else:
        start = bundle.start

    out = _out_dir(args, cfg)
    seeds = [base_seed] if n_chains == 1 else [[base_seed, k] for k in range(n_chains)]

    t0 = time.perf_counter()

    def worker(seed):
        try:
            return "ok", _run_one_chain(
                bundle, scfg, algorithm, kernel_name, map_obj, start, n_steps, seed
            )
        except ChainAbortedError as exc:
            return "aborted", exc

    if n_chains == 1:
        results = [worker(seeds[0])]
    else:
        with ThreadPoolExecutor(max_workers=n_chains) as pool:
            results = list(pool.map(worker, seeds))
    seconds = time.perf_counter() - t0

    chain_entries = []
    aborted_message = None
    for k, (status, payload) in enumerate(results):
        suffix = "" if n_chains == 1 else f"_{k:02d}"
        if status == "aborted":
            chain = payload.chain
            chain.info["truncated"] = True
            aborted_message = str(payload)
        else:
            chain = payload
        save_chain(out / f"chain{suffix}.csv", chain, meta={"algorithm": algorithm})
        truncated = bool(chain.info.get("truncated", False))
        kept = chain
        if not truncated and (burn > 0 or stride > 1) and len(chain) > burn:
            kept = thin_and_burn(chain, burn, stride)
            save_chain(out / f"thinned{suffix}.csv", kept, meta={"algorithm": algorithm})
        report = summarize(kept)
        chain_entries.append(
            {
                "chain_index": k,
                "seed": seeds[k],
                "raw_length": len(chain),
                "kept_length": len(kept),
                "truncated": truncated,
                "report": report.to_json_dict(),
            }
        )

    pooled_m = sum(e["kept_length"] for e in chain_entries)
    pooled_evals = sum(e["report"]["n_target_evals"] for e in chain_entries)
    ess_lists = [e["report"]["ess"] for e in chain_entries]
    if any(v is None for lst in ess_lists for v in lst):
        pooled_ess = None
        pooled_headline = None
    else:
        pooled_ess = [float(sum(col)) for col in zip(*ess_lists)]
        pooled_headline = min(pooled_ess)
    summary = {
        "config_version": CONFIG_VERSION,
        "problem": bundle.kind,
        "d": bundle.d,
        "algorithm": algorithm,
        "kernel": kernel_name if algorithm == "mfmh" else "random-walk",
        "iterations": n_steps,
        "burn": burn,
        "stride": stride,
        "chains": chain_entries,
        "pooled": {
            "m": pooled_m,
            "n_target_evals": pooled_evals,
            "ess": pooled_ess,
            "headline_ess": pooled_headline,
        },
        "timing": {"seconds": seconds},
    }
    _dump_json(out / "summary.json", summary)

    if aborted_message is not None:
        _emit_error("sampling", f"chain aborted, partial output flushed: {aborted_message}")
        return 1
    print(f"{n_chains} chain(s) written to {out} (pooled m = {pooled_m})")
    return 0


def cmd_synth_data(args) -> int:
    cfg, base = _read_config(args.config)
    pcfg = cfg.get("problem")
    if not isinstance(pcfg, dict):
        raise ConfigError("problem", "missing required table")
    kind = _get(pcfg, "kind", "problem.kind", str)
    if kind == "dr":
        model = _dr_data_model(pcfg)
        theta_star = _vector(pcfg, "theta_star", "problem.theta_star", 2)
    elif kind == "beam":
        model = _beam_data_model(pcfg)
        theta_star = _vector(pcfg, "theta_star", "problem.theta_star", 3)
    else:
        raise ConfigError("problem.kind", "synth-data requires a forward-model problem (dr or beam)")
    noise_var = _get(pcfg, "noise_variance", "problem.noise_variance", float)
    seed = args.seed if args.seed is not None else _get(pcfg, "data_seed", "problem.data_seed", int, 0)
    noise = NoiseModel.iid(noise_var, model.d_out)
    data = synthesize_data(model, theta_star, noise, seed)

    out = _out_dir(args, cfg)
    with open(out / "data.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y"])
        for v in data:
            writer.writerow([repr(float(v))])
    _dump_json(
        out / "data.json",
        {
            "config_version": CONFIG_VERSION,
            "problem": kind,
            "seed": seed,
            "theta_star": [float(v) for v in theta_star],
            "noise_variance": noise_var,
            "n_observations": int(data.shape[0]),
        },
    )
    print(f"{data.shape[0]} observations written to {out / 'data.csv'}")
    return 0


def cmd_compare(args) -> int:
    if len(args.runs) < 2:
        _emit_error("compare", "need at least 2 run directories")
        return 1
    summaries = []
    for run in args.runs:
        path = Path(run) / "summary.json"
        if not path.exists():
            _emit_error("compare", f"no summary.json in {run}")
            return 1
        with open(path, encoding="utf-8") as fh:
            summaries.append((run, json.load(fh)))
    kinds = {s["problem"] for _, s in summaries}
    if len(kinds) != 1:
        _emit_error("compare", f"runs mix different problems: {sorted(kinds)}")
        return 1
    dims = {s["d"] for _, s in summaries}
    if len(dims) != 1:
        _emit_error("compare", f"runs mix different dimensions: {sorted(dims)}")
        return 1
    d = summaries[0][1]["d"]

    def fmt(value):
        return "" if value is None else repr(float(value))

    header = ["run", "algorithm", "m", "n_target_evals", "wall_seconds", "headline_ess"]
    header += [f"ess_{k + 1}" for k in range(d)]
    rows = [header]
    for run, s in summaries:
        pooled = s["pooled"]
        ess_cols = pooled["ess"] if pooled["ess"] is not None else [None] * d
        rows.append(
            [run, s["algorithm"], str(pooled["m"]), str(pooled["n_target_evals"])]
            + [repr(float(s["timing"]["seconds"])), fmt(pooled["headline_ess"])]
            + [fmt(v) for v in ess_cols]
        )
    if args.out is not None:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            csv.writer(fh).writerows(rows)
        print(f"comparison written to {out_path}")
    else:
        csv.writer(sys.stdout).writerows(rows)
    return 0


# ---------------------------------------------------------------------------
# Entry point


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapmcmc",
        description="Transport-map preconditioned MCMC for multifidelity Bayesian inversion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-map", help="fit a transport map to the low-fidelity posterior")
    p.add_argument("--config", required=True, help="TOML experiment config")
    p.add_argument("--out", default=None, help="output directory (default: [output].dir or .)")
    p.add_argument("--seed", type=int, default=None, help="override the map-build seed")
    p.set_defaults(func=cmd_build_map)

    p = sub.add_parser("sample", help="run MCMC chains and write CSV + summary JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None, help="override the sampler seed")
    p.add_argument("--chains", type=int, default=1, help="independent chains with derived seeds")
    p.add_argument("--map", default=None, help="map JSON for mfmh (overrides sampler.map_file)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("compare", help="tabulate ESS vs evaluation cost across runs")
    p.add_argument("runs", nargs="+", help="run directories containing summary.json")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth-data", help="generate noisy observations from the configured truth")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None, help="override the data seed")
    p.set_defaults(func=cmd_synth_data)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _emit_error("config", exc.message, exc.dotted_field)
        return 2
    except BuildError as exc:
        _emit_error("build", str(exc))
        return 1
    except (MapInversionError, SolverError) as exc:
        _emit_error("solver", str(exc))
        return 1
    except ChainAbortedError as exc:
        _emit_error("sampling", str(exc))
        return 1
    except ValueError as exc:
        _emit_error("invalid", str(exc))
        return 1
    except OSError as exc:
        _emit_error("io", str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
