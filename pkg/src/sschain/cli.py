"""Experiment runner: wires configs to kernels, engines and verdicts.

Each subcommand selects one suite; results land as JSON-lines records
under ``runs/`` and plot-ready CSV tables under ``tables/`` in the output
directory.  Re-running the same config reproduces the estimate payloads
bit-for-bit, and a record file is never overwritten by a run with a
different config digest.
"""

from __future__ import annotations

import argparse
import json
import math
import pathlib
import sys
import time

import numpy as np

from . import __version__
from . import chain_engine as ce
from . import exact_dp as dp
from . import kernels as kz
from . import limit_process as lp
from . import measures as ms
from .config import ConfigError, ExperimentConfig
from .stats import empirical_moment, trend_verdict
from .streams import parallel_blocks
from .suites import CriterionResult, _check, run_acceptance

SUBCOMMANDS = ("simulate-chain", "exact-moments", "simulate-limit", "diagnose-h",
               "coalescent", "composition", "barrier-triple", "suite")


def _suite_simulate_chain(cfg: ExperimentConfig):
    kernel = cfg.kernel()
    lines, est, replicate_records = [], {}, []
    tables = {}
    ok = True
    for j, n in enumerate(cfg.n_grid):
        times = parallel_blocks(
            lambda off, cnt, _n=n: ce.sample_absorption_times(
                kernel, _n, cnt, cfg.seed, stream0=j * 10_000_000 + off),
            cfg.replicates, cfg.threads)
        a_n = kernel.scaling(n)
        m = empirical_moment(np.asarray(times, float) / a_n, 1.0)
        lines.append(f"ok   n={n}: E[A/a] = {m}")
        est[f"n{n}"] = (m.value, m.se)
        for i, t in enumerate(times):
            replicate_records.append({
                "type": "replicate", "kernel": kernel.name, "n": int(n),
                "seed": cfg.seed, "stream": j * 10_000_000 + i,
                "absorption_time": int(t),
            })
        for i in range(min(cfg.dump_paths, cfg.replicates)):
            path = ce.sample_path(kernel, n, cfg.seed, stream=j * 10_000_000 + i)
            tables[f"path_n{n}_r{i}.csv"] = path.to_csv()
    res = CriterionResult("simulate-chain", ok, tuple(lines), est, tables)
    res.estimates["_records"] = replicate_records
    return res


def _suite_exact_moments(cfg: ExperimentConfig):
    kernel = cfg.kernel()
    n_max = max(cfg.n_grid)
    table = dp.absorption_moments(kernel, n_max, 2)
    lines = []
    for n in cfg.n_grid:
        a = kernel.scaling(n)
        lines.append(f"ok   n={n}: E[A]/a = {table.moment(n, 1) / a:.6f}, "
                     f"E[A^2]/a^2 = {table.moment(n, 2) / a ** 2:.6f}")
    est = {f"n{n}": [table.moment(n, p) for p in range(3)] for n in cfg.n_grid}
    return CriterionResult("exact-moments", True, tuple(lines), est,
                           tables={"moments.csv": table.to_csv(kernel)})


def _suite_simulate_limit(cfg: ExperimentConfig):
    kernel = cfg.kernel()
    if kernel.mu is None or kernel.gamma is None:
        raise ConfigError("kernel", "this kernel has no limit pair attached")
    triple = ms.levy_triple(kernel.mu)
    lines, est = [], {}
    ok = True
    z = parallel_blocks(
        lambda off, cnt: lp.sample_z_marginals(triple, cfg.t_grid, cnt,
                                               cfg.seed, stream0=off),
        cfg.replicates, cfg.threads)
    for j, t in enumerate(cfg.t_grid):
        for lam in cfg.lambda_grid:
            m = empirical_moment(z[:, j], lam)
            target = math.exp(-triple.laplace_exponent(lam) * t)
            ok &= _check(lines, m.within(target, 4.0),
                         f"E[Z({t})^{lam:g}] = {m} vs {target:.6f}")
            est[f"z_t{t}_lam{lam:g}"] = (m.value, m.se, target)
    samples = parallel_blocks(
        lambda off, cnt: lp.sample_exponential_functional(
            triple, kernel.gamma, cnt, cfg.seed, stream0=50_000_000 + off),
        cfg.replicates, cfg.threads)
    analytic = lp.analytic_moments(kernel.mu, kernel.gamma, 2)
    for p in (1, 2):
        m = empirical_moment(samples, float(p))
        ok &= _check(lines, m.within(analytic[p], 4.0),
                     f"E[I^{p}] = {m} vs analytic {analytic[p]:.6f}")
        est[f"I_p{p}"] = (m.value, m.se, analytic[p])
    # per-sample records and one event-time path dump for inspection
    horizon = 16.0
    records = []
    for i in range(min(cfg.replicates, 200)):
        path = lp.sample_subordinator(triple, horizon, seed=cfg.seed,
                                      stream=90_000_000 + i)
        sample = lp.lamperti(path, kernel.gamma)
        records.append({"type": "limit_sample",
                        **lp.limit_record(kernel.name, kernel.gamma, path, sample)})
    first_path = lp.sample_subordinator(triple, horizon, seed=cfg.seed,
                                        stream=90_000_000)
    res = CriterionResult("simulate-limit", ok, tuple(lines), est,
                          tables={"subordinator_path.csv": first_path.to_csv()})
    res.estimates["_records"] = records
    return res


def _suite_diagnose_h(cfg: ExperimentConfig):
    kernel = cfg.kernel()
    diag = kz.hypothesis_h_diagnostic(kernel, cfg.lambda_grid, cfg.n_grid,
                                      threshold=0.10, floor=1e-9)
    lines = [f"{'ok  ' if v.passed else 'FAIL'} lam={lam:g}: {v}"
             for lam, v in sorted(diag.verdicts.items())]
    return CriterionResult("diagnose-h", diag.passed, tuple(lines),
                           {"entries": [(e.n, e.lam, e.value, e.target)
                                        for e in diag.entries]},
                           tables={"diagnostic.csv": diag.to_csv()})


def _suite_coalescent(cfg: ExperimentConfig):
    kernel = cfg.kernel()
    if not isinstance(kernel, kz.CoalescentKernel):
        raise ConfigError("kernel.type", "the coalescent suite needs a coalescent kernel")
    lines, est = [], {}
    gam = math.gamma(2.0 - kernel.beta) if kernel.beta is not None else 1.0
    ratios = [kernel.total_rate(n) / (gam * kernel.h(1.0 / n)) for n in cfg.n_grid]
    verdict = trend_verdict([abs(r - 1.0) for r in ratios], threshold=0.02,
                            slack=1.10, floor=0.002)
    ok = _check(lines, verdict.passed, f"total-rate ratios {ratios} | {verdict}")
    est["rate_ratios"] = ratios
    n_mc = max(cfg.n_grid)
    times = parallel_blocks(
        lambda off, cnt: ce.sample_absorption_times(kernel, n_mc, cnt, cfg.seed,
                                                    stream0=off),
        cfg.replicates, cfg.threads)
    h = kernel.h(1.0 / n_mc)
    m = empirical_moment(np.asarray(times, float) / h, 1.0)
    target = 1.0 / kernel.psi(kernel.gamma)
    ok &= _check(lines, m.within(target, 4.0),
                 f"MC E[A/h] at n={n_mc}: {m} vs {target:.6f}")
    est["mc"] = (m.value, m.se, target)
    return CriterionResult("coalescent", ok, tuple(lines), est)


def _suite_composition(cfg: ExperimentConfig):
    kernel = cfg.kernel()
    if not isinstance(kernel, kz.CompositionKernel):
        raise ConfigError("kernel.type", "the composition suite needs a composition kernel")
    triple = ms.LevyTriple(0.0, 0.0, kernel.omega)
    lines, est = [], {}
    ok = True
    for j, n in enumerate(cfg.n_grid):
        if n > 64:
            raise ConfigError("grids.n", "composition cross-checks need small n (<= 64)")
        comps = parallel_blocks(
            lambda off, cnt, _n=n: lp.sample_gap_compositions(
                triple, _n, cnt, cfg.seed, stream0=j * 10_000_000 + off),
            cfg.replicates, cfg.threads,
            concat=lambda parts: [c for p in parts for c in p])
        pmf, _ = dp.absorption_distribution(kernel, n, k_max=n)
        k_counts = np.bincount([c.length for c in comps], minlength=n + 1)
        for k in range(1, n + 1):
            p, phat = pmf[k], k_counts[k] / cfg.replicates
            band = 4.0 * math.sqrt(max(p * (1 - p), 1e-12) / cfg.replicates)
            ok &= _check(lines, abs(phat - p) <= band,
                         f"n={n}: P(K={k}) = {phat:.4f} vs exact {p:.4f}")
            est[f"n{n}_K{k}"] = (phat, p)
    return CriterionResult("composition", ok, tuple(lines), est)


def _suite_barrier_triple(cfg: ExperimentConfig):
    kernel = cfg.kernel()
    if not isinstance(kernel, kz._BarrierFamily):
        raise ConfigError("kernel.type", "the coupling suite needs a barrier-family kernel")
    q = kernel.q
    n = max(cfg.n_grid)
    kernels = (kz.truncated_kernel(q), kz.barrier_kernel(q), kz.ignored_jump_kernel(q))

    def block(off, cnt):
        bad = 0
        for i in range(cnt):
            trip = ce.coupled_barrier_triple(q, n, cfg.seed, stream=off + i,
                                             kernels=kernels)
            tl, x, ht = (p.states for p in trip)
            kk = min(len(tl), len(x), len(ht))
            if np.any(tl[:kk] > x[:kk]) or np.any(x[:kk] > ht[:kk]):
                bad += 1
            if not np.array_equal(ht[trip.acceptance_times], x):
                bad += 1
        return np.array([bad])

    bad = int(np.sum(parallel_blocks(block, cfg.replicates, cfg.threads)))
    lines = []
    ok = _check(lines, bad == 0, f"coupling violations at n={n}: {bad}")
    return CriterionResult("barrier-triple", ok, tuple(lines), {"violations": bad})


def _suite_acceptance(cfg: ExperimentConfig):
    results = run_acceptance(cfg.seed, threads=cfg.threads)
    lines = []
    tables = {}
    est = {}
    ok = True
    for r in results:
        ok &= r.passed
        lines.append(r.report())
        tables.update(r.tables)
        est[r.name] = {k: v for k, v in r.estimates.items() if k != "_records"}
    return CriterionResult("acceptance suite", ok, tuple(lines), est, tables)


_RUNNERS = {
    "simulate-chain": _suite_simulate_chain,
    "exact-moments": _suite_exact_moments,
    "simulate-limit": _suite_simulate_limit,
    "diagnose-h": _suite_diagnose_h,
    "coalescent": _suite_coalescent,
    "composition": _suite_composition,
    "barrier-triple": _suite_barrier_triple,
    "suite": _suite_acceptance,
}
_RUNNERS["h-diagnostic"] = _suite_diagnose_h  # accepted alias in configs


def run(cfg: ExperimentConfig, suite_name: str | None = None) -> CriterionResult:
    """Execute one suite and persist its record and tables."""
    name = suite_name or cfg.suite
    if name not in _RUNNERS:
        raise ConfigError("suite", f"unknown suite {name!r}; choose from {SUBCOMMANDS}")
    t0 = time.monotonic()
    result = _RUNNERS[name](cfg)
    wallclock = time.monotonic() - t0
    if cfg.out_dir is not None:
        _persist(cfg, name, result, wallclock)
    return result


def _json_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj).__name__}")


def _persist(cfg: ExperimentConfig, name: str, result: CriterionResult,
             wallclock: float):
    out = pathlib.Path(cfg.out_dir)
    runs = out / "runs"
    tables = out / "tables"
    runs.mkdir(parents=True, exist_ok=True)
    record_path = runs / f"{name}-{cfg.digest[:12]}.jsonl"
    if record_path.exists():
        with open(record_path, "r", encoding="utf-8") as fh:
            first = json.loads(fh.readline() or "{}")
        if first.get("config_digest") not in (None, cfg.digest):
            raise RuntimeError(
                f"{record_path} holds a record for digest {first.get('config_digest')!r}; "
                "refusing to overwrite it with a different config")
    replicate_records = result.estimates.pop("_records", [])
    header = {"type": "run", "suite": name, "config_digest": cfg.digest,
              "code_version": __version__, "seed": cfg.seed,
              "passed": result.passed, "wallclock_s": round(wallclock, 3)}
    estimates = {"type": "estimates", "config_digest": cfg.digest,
                 "estimates": result.estimates,
                 "lines": list(result.lines)}
    with open(record_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True, default=_json_default) + "\n")
        fh.write(json.dumps(estimates, sort_keys=True, default=_json_default) + "\n")
        for rec in replicate_records:
            fh.write(json.dumps(rec, sort_keys=True, default=_json_default) + "\n")
    if result.tables:
        tables.mkdir(parents=True, exist_ok=True)
        for fname, text in result.tables.items():
            (tables / fname).write_text(text, encoding="utf-8")


_DEFAULT_CONFIG = """\
seed = 20260809
replicates = 2000
threads = 1

[kernel]
type = barrier
[kernel.q]
type = power_tail
gamma = 0.5

[grids]
n = 128 256 512 1024 2048 4096 8192
lambda = 0.5 1 2
t = 0.5 1
"""


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sschain",
        description="Scaling-limit laboratory for non-increasing integer Markov chains")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config file (key = value text)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--out", help="output directory for runs/ and tables/")
        p.add_argument("--replicates", type=int, help="replicate count override")
        p.add_argument("--threads", type=int, help="worker thread count override")
    args = parser.parse_args(argv)

    if args.config:
        text = pathlib.Path(args.config).read_text(encoding="utf-8")
    else:
        text = _DEFAULT_CONFIG
    overrides = []
    for key in ("seed", "out", "replicates", "threads"):
        val = getattr(args, key)
        if val is not None:
            overrides.append(f"{key} = {val}")
    if overrides:
        text = text + "\n[overrides]\n" + "\n".join(overrides) + "\n"
    try:
        cfg = ExperimentConfig.from_text(text)
        result = run(cfg, args.command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(result.report())
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
