"""Command-line pipeline: generate scenarios, train SDDP, assess policies, sweep noise levels.

Every command writes a JSON manifest next to its outputs holding the full
configuration, its hash, the seeds, library versions and the git revision.
A manifest can be passed back as ``--config`` to repeat the run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import subprocess
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .assessment import (BenchmarkReport, PolicyInfeasibilityError, benchmark, cost_difference_histogram,
                         record_bases, uncertainty_sweep, write_sweep_csv)
from .config import ConfigError, ExperimentConfig, from_dict, load_config
from .lp import LpError
from .lp.highs import set_threads
from .physical import solar_power_kw
from .policies import (ArForecaster, ConditionedDistributions, MpcPolicy, RuleBasedPolicy, SddpPolicy)
from .presets import get_preset
from .problem import MicrogridProblem
from .sddp import InfeasibleSubproblemError, TrainedValueFunctions, train
from .uncertainty import (ScenarioSet, fit_ar1, generate_scenarios, quantize_scenarios, read_scenarios_csv,
                          write_scenarios_csv)

log = logging.getLogger("microgrid_bench")

OUTPUT_ENV = "MICROGRID_BENCH_OUTPUT"
EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_ABORT = 0, 2, 3, 4
TRAJECTORY_SCENARIOS = 20


class ArtifactError(RuntimeError):
    """A command needs files an earlier command should have written."""


class NotConvergedError(RuntimeError):
    pass


# seeds derived from the configuration seed, one stream per purpose
def scenario_seed(cfg: ExperimentConfig) -> list[int]:
    return [cfg.seed, 0]


def quantization_seed(cfg: ExperimentConfig) -> list[int]:
    return [cfg.seed, 1]


def sweep_seed(cfg: ExperimentConfig, level: int) -> list[int]:
    return [cfg.seed, 2, level]


def run_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output_dir) / cfg.run_name


def git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], cwd=Path(__file__).resolve().parent,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 else "unknown"


def _versions() -> dict[str, str]:
    import highspy
    import scipy
    try:
        from importlib.metadata import version
        highs = version("highspy")
    except Exception:
        highs = getattr(highspy, "__version__", "unknown")
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "highspy": highs, "microgrid_bench": __version__}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(directory: Path, command: str, cfg: ExperimentConfig, seeds: dict, outputs: list[Path],
                   extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "seeds": seeds,
        "git_revision": git_revision(),
        "versions": _versions(),
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    path = directory / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_config(path: str | Path) -> ExperimentConfig:
    """TOML configuration, or the ``config`` entry of a run manifest."""
    path = Path(path)
    if path.suffix == ".json":
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read manifest {path}: {err}") from err
        if "config" not in data:
            raise ConfigError(f"{path} has no 'config' entry")
        return from_dict(data["config"])
    return load_config(path)


def scenario_set(cfg: ExperimentConfig, sigma_T: float | None = None, sigma_0: float | None = None,
                 n_optimization: int | None = None, n_assessment: int | None = None,
                 deterministic_demand: bool | None = None, seed=None) -> ScenarioSet:
    sc = cfg.scenarios
    preset = get_preset(cfg.preset)
    profile = preset.demand_profile(
        cfg.grid, cfg.physical,
        sc.sigma_0 if sigma_0 is None else sigma_0,
        sc.sigma_T if sigma_T is None else sigma_T,
        el_sigma=sc.el_sigma, el_corr=sc.el_corr)
    if sc.deterministic_demand if deterministic_demand is None else deterministic_demand:
        profile = profile.deterministic()
    n_opt = sc.n_optimization if n_optimization is None else n_optimization
    n_ass = sc.n_assessment if n_assessment is None else n_assessment
    return generate_scenarios(profile, n_opt + n_ass, scenario_seed(cfg) if seed is None else seed,
                              n_optimization=n_opt)


@dataclass
class OfflineArtifacts:
    problem: MicrogridProblem
    optimization: np.ndarray
    dists: list
    vfs: TrainedValueFunctions | None
    seconds: dict[str, float]


def build_policies(cfg: ExperimentConfig, art: OfflineArtifacts, names) -> tuple[dict, dict[str, float]]:
    """Instantiate the named policies and pre-record their LP bases on optimization scenarios."""
    problem, policies, offline = art.problem, {}, {}
    ar = None
    for name in names:
        tic = time.perf_counter()
        if name in ("sddp_ar", "mpc") and ar is None:
            ar = fit_ar1(art.optimization)
            art.seconds["ar_fit"] = time.perf_counter() - tic
        if name == "sddp":
            pol = SddpPolicy(problem, art.vfs, art.dists, backend=cfg.sddp.backend)
            base = art.seconds.get("sddp_train", 0.0)
        elif name == "sddp_ar":
            cond = ConditionedDistributions(ar, cfg.scenarios.atoms, seed=quantization_seed(cfg))
            pol = SddpPolicy(problem, art.vfs, art.dists, online="ar_conditioned", conditioned=cond,
                             backend=cfg.sddp.backend)
            pol.name = "sddp_ar"
            base = art.seconds.get("sddp_train", 0.0) + art.seconds.get("ar_fit", 0.0)
        elif name == "mpc":
            pol = MpcPolicy(problem, ArForecaster(ar), backend=cfg.sddp.backend)
            base = art.seconds.get("ar_fit", 0.0)
        else:
            pol = RuleBasedPolicy(problem, margin=cfg.policies.rule_margin)
            base = 0.0
        k = cfg.policies.record_scenarios
        if k > 0:
            t0 = time.perf_counter()
            regions = record_bases(pol, art.optimization[:k], problem)
            if regions:
                log.info("%s: %d LP bases recorded in %.1f s", name, regions, time.perf_counter() - t0)
        policies[name] = pol
        offline[name] = base + time.perf_counter() - tic
    return policies, offline


def train_sddp(cfg: ExperimentConfig, problem: MicrogridProblem, optimization: np.ndarray,
               seeds=None) -> tuple[list, TrainedValueFunctions, float]:
    tic = time.perf_counter()
    dists = quantize_scenarios(optimization, cfg.scenarios.atoms, seed=quantization_seed(cfg) if seeds is None else seeds)

    def progress(row):
        if row.iteration % 10 == 0:
            log.info("iteration %d lb %.6f ub %.6f gap %.3g", row.iteration, row.lb, row.ub, row.gap)

    vfs = train(problem, dists, cfg.sddp, progress=progress)
    return dists, vfs, time.perf_counter() - tic


def cmd_generate(cfg: ExperimentConfig) -> int:
    out = run_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    problem = cfg.problem()
    sc = scenario_set(cfg)
    paths = [out / "optimization.csv", out / "assessment.csv", out / "weather.csv", out / "costs.csv",
             out / "solar.csv"]
    write_scenarios_csv(paths[0], sc.optimization)
    write_scenarios_csv(paths[1], sc.assessment)
    problem.weather.to_csv(paths[2])
    problem.costs.to_csv(paths[3])
    mu = solar_power_kw(get_preset(cfg.preset).irradiance(cfg.grid), cfg.physical)
    with open(paths[4], "w") as fh:
        fh.write("step,mu_kw\n")
        for t, v in enumerate(mu):
            fh.write(f"{t},{float(v)!r}\n")
    write_manifest(out, "generate", cfg, {"seed": cfg.seed, "scenarios": scenario_seed(cfg)}, paths)
    log.info("wrote %d optimization and %d assessment scenarios to %s",
             len(sc.optimization), len(sc.assessment), out)
    return EXIT_OK


def _load_scenarios(out: Path, label: str) -> np.ndarray:
    path = out / f"{label}.csv"
    if not path.exists():
        raise ArtifactError(f"{path} is missing; run 'generate' first")
    return read_scenarios_csv(path)


def cmd_train(cfg: ExperimentConfig) -> int:
    out = run_dir(cfg)
    problem = cfg.problem()
    opt = _load_scenarios(out, "optimization")
    dists, vfs, secs = train_sddp(cfg, problem, opt)
    paths = [out / "value_functions.txt", out / "training_log.csv"]
    vfs.save(paths[0])
    vfs.write_log(paths[1])
    write_manifest(out, "train", cfg, {"seed": cfg.seed, "quantization": quantization_seed(cfg),
                                       "sddp": cfg.sddp.rng_seed}, paths,
                   {"status": vfs.status, "iterations": len(vfs.log), "train_seconds": secs})
    last = vfs.log[-1]
    log.info("training %s after %d iterations (lb %.6f, gap %.3g)", vfs.status, len(vfs.log), last.lb, last.gap)
    if vfs.status != "converged":
        raise NotConvergedError(f"SDDP stopped at the iteration budget ({len(vfs.log)}) without meeting the gap")
    return EXIT_OK


def cmd_assess(cfg: ExperimentConfig, names=None) -> int:
    out = run_dir(cfg)
    names = list(names or cfg.policies.names)
    problem = cfg.problem()
    opt = _load_scenarios(out, "optimization")
    ass = _load_scenarios(out, "assessment")
    vfs, dists, seconds = None, None, {}
    if any(n.startswith("sddp") for n in names):
        vf_path = out / "value_functions.txt"
        if not vf_path.exists():
            raise ArtifactError(f"{vf_path} is missing; run 'train' first")
        vfs = TrainedValueFunctions.load(vf_path)
        dists = quantize_scenarios(opt, cfg.scenarios.atoms, seed=quantization_seed(cfg))
        manifest = out / "manifest_train.json"
        if manifest.exists():
            seconds["sddp_train"] = float(json.loads(manifest.read_text()).get("train_seconds", 0.0))
    art = OfflineArtifacts(problem, opt, dists, vfs, seconds)
    policies, offline = build_policies(cfg, art, names)
    report = benchmark(policies, ass, problem, offline, keep_results=True, chunk_size=cfg.policies.chunk_size,
                       progress=lambda name, n: log.info("%s: %d scenarios simulated", name, n))
    paths = write_report(out, report)
    (out / "timing.json").write_text(json.dumps(report.timing(), indent=2, sort_keys=True) + "\n")
    write_manifest(out, "assess", cfg, {"seed": cfg.seed, "quantization": quantization_seed(cfg)}, paths,
                   {"policies": names})
    for name in names:
        st = report.stats[name]
        log.info("%-10s mean %.4f +- %.4f  (%.3f ms/decision)", name, st.mean, st.ci, st.online_ms)
    return EXIT_OK


def write_report(out: Path, report: BenchmarkReport) -> list[Path]:
    paths = [out / "report.csv", out / "pairwise.csv", out / "trajectories.csv"]
    report.write_csv(paths[0])
    report.write_pairwise_csv(paths[1])
    report.write_trajectories(paths[2], limit=TRAJECTORY_SCENARIOS)
    opt_names = [n for n in report.policies if n != "rule_based"]
    pair = ("sddp", "mpc") if {"sddp", "mpc"} <= set(report.policies) else tuple(opt_names[:2])
    if len(pair) == 2:
        paths.append(out / "histogram.csv")
        cost_difference_histogram(report, *pair).write_csv(paths[-1])
    return paths


def cmd_sweep(cfg: ExperimentConfig) -> int:
    out = run_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    sw = cfg.sweep
    problem = cfg.problem()
    seeds, status = {}, {}
    level_ids = {}

    def run_level(sigma: float) -> BenchmarkReport:
        k = level_ids.setdefault(sigma, len(level_ids))
        seed = sweep_seed(cfg, k)
        seeds[repr(sigma)] = seed
        sc = scenario_set(cfg, sigma_T=sigma, sigma_0=sw.sigma_0, n_optimization=sw.n_optimization,
                          n_assessment=sw.n_assessment, deterministic_demand=sw.deterministic_demand, seed=seed)
        vfs, dists, seconds = None, None, {}
        if any(n.startswith("sddp") for n in sw.policies):
            dists, vfs, seconds["sddp_train"] = train_sddp(cfg, problem, sc.optimization, seeds=seed + [1])
            status[repr(sigma)] = vfs.status
        policies, offline = build_policies(cfg, OfflineArtifacts(problem, sc.optimization, dists, vfs, seconds),
                                           sw.policies)
        report = benchmark(policies, sc.assessment, problem, offline, chunk_size=cfg.policies.chunk_size,
                           dedupe=True)
        for name in report.policies:
            st = report.stats[name]
            log.info("sigma_T=%g %-10s mean %.4f +- %.4f", sigma, name, st.mean, st.ci)
        return report

    rows = uncertainty_sweep(sw.sigma_T, run_level)
    path = out / "sweep.csv"
    write_sweep_csv(path, rows)
    write_manifest(out, "sweep", cfg, {"seed": cfg.seed, "levels": seeds}, [path], {"training_status": status})
    if any(s != "converged" for s in status.values()):
        raise NotConvergedError(f"SDDP did not converge at some levels: {status}")
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig) -> int:
    print(f"configuration OK (hash {cfg.digest()[:12]}, run directory {run_dir(cfg)})")
    return EXIT_OK


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="microgrid-bench", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                    help="threads per LP solver instance (default: available cores)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("generate", "write optimization/assessment scenarios and the weather trace"),
                       ("train", "train SDDP value functions"),
                       ("assess", "benchmark policies on the assessment scenarios"),
                       ("sweep", "benchmark over solar noise levels"),
                       ("validate-config", "check a configuration file")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="TOML file or a run manifest (JSON)")
        p.add_argument("--output", help="output root (overrides the config and the environment)")
        if name == "assess":
            p.add_argument("--policies", help="comma-separated subset of the configured policies")
    return ap


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "assess": cmd_assess, "sweep": cmd_sweep,
            "validate-config": cmd_validate}


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = read_config(args.config)
        # output root: --output, then the environment, then the configuration
        root = args.output or os.environ.get(OUTPUT_ENV)
        if root:
            cfg = replace(cfg, output_dir=root)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        set_threads(args.threads)
        if args.command == "assess" and args.policies:
            names = [n.strip() for n in args.policies.split(",") if n.strip()]
            unknown = [n for n in names if n not in cfg.policies.names]
            if unknown:
                raise ConfigError(f"--policies: {unknown[0]!r} is not among the configured policies {cfg.policies.names}")
            return cmd_assess(cfg, names)
        return COMMANDS[args.command](cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NotConvergedError as err:
        print(f"not converged: {err}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (ArtifactError, PolicyInfeasibilityError, InfeasibleSubproblemError, LpError, OSError) as err:
        print(f"aborted: {err}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
