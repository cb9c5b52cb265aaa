"""Command line entry point: ``arqe solve|optimize|benchmark|pdfdump|sample``."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .config import ExperimentConfig, load_config, parse_config
from .engine import HIST_BINS, RunConfig, run_ensemble, run_single
from .errors import ArqeError
from .linalg import unitary_eigensystem
from .operators import gene_environment, random_genes, tabulated_genes
from .optimizer import CostSpec, campaign, optimize
from .pcf import KnotSet, build_interpolant, inverse_sample, tabulate

log = logging.getLogger("arqe")

ARMS = ("uniform", "optimized", "both")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return repr(float(x))


def pooled_histogram(arms: dict[str, np.ndarray], bins: int = HIST_BINS) -> str:
    """Shared-edge histogram CSV: one count column per arm."""
    pooled = np.concatenate([np.asarray(v, dtype=float) for v in arms.values()])
    edges = np.histogram_bin_edges(pooled, bins=bins)
    counts = {name: np.histogram(v, bins=edges)[0] for name, v in arms.items()}
    rows = [
        [_num(edges[k]), _num(edges[k + 1]), *(int(counts[name][k]) for name in arms)]
        for k in range(bins)
    ]
    return _csv(["bin_lo", "bin_hi", *arms], rows)


class Output:
    """Writes files into one directory and a manifest tying them to the config."""

    def __init__(self, out: str, command: str, cfg: ExperimentConfig, extra: dict | None = None):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command, self.cfg = command, cfg
        self.extra = extra or {}
        self.files: dict[str, str] = {}

    def header(self) -> dict:
        return {"command": self.command, "seed": self.cfg.seed, "config": self.cfg.to_dict(), **self.extra}

    def write(self, name: str, text: str):
        data = text.encode()
        (self.dir / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def write_json(self, name: str, payload: dict):
        self.write(name, json.dumps({**self.header(), **payload}, indent=2, sort_keys=True) + "\n")

    def close(self):
        manifest = {**self.header(), "files": self.files}
        self.write("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _resolve(config_path, seed, reps) -> ExperimentConfig:
    cfg = load_config(config_path) if config_path else parse_config("")
    if seed is not None:
        cfg.seed = seed
    if reps is not None:
        if reps < 1:
            raise click.BadParameter("--reps must be >= 1")
        cfg.repetitions = reps
    return cfg


def _arm_knots(cfg: ExperimentConfig, arm: str) -> dict[str, KnotSet]:
    n = cfg.knots.n if cfg.knots else cfg.optimize["n_knots"]
    uniform = KnotSet.uniform(n)
    if arm in ("optimized", "both") and cfg.knots is None:
        raise click.UsageError("the optimized arm needs a [knots] table in the config")
    if arm == "uniform":
        return {"uniform": uniform}
    if arm == "optimized":
        return {"optimized": cfg.knots}
    return {"uniform": uniform, "optimized": cfg.knots}


def _criterion(cfg: ExperimentConfig, flag: str | None) -> str:
    if flag is None:
        return cfg.optimize["criterion"]
    if flag == "speed":
        return "speed"
    current = cfg.optimize["criterion"]
    return current if current.startswith("accuracy") else "accuracy-final-w"


common = [
    click.option("--config", "config_path", type=click.Path(dir_okay=False), help="TOML config file."),
    click.option("--seed", type=click.IntRange(0, 2**64 - 1), help="Master seed (overrides the config)."),
    click.option("--out", default="out", show_default=True, type=click.Path(file_okay=False),
                 help="Output directory."),
]


def with_common(fn):
    for opt in reversed(common):
        fn = opt(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Adaptive random quantum eigensolver experiments."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@with_common
@click.option("--arm", type=click.Choice(ARMS), help="Mutation PDF: uniform baseline, config knots, or both.")
@click.option("--reps", type=int, help="Repetitions per target (default 1000 per qubit).")
def solve(config_path, seed, out, arm, reps):
    """Run ensembles for every target eigenvector index."""
    cfg = _resolve(config_path, seed, reps)
    arm = arm or ("optimized" if cfg.knots else "uniform")
    arms = _arm_knots(cfg, arm)
    env = cfg.environment()
    n_reps = cfg.resolved_repetitions()
    output = Output(out, "solve", cfg, {"arm": arm})
    dim = env[0].shape[0]
    rows, summaries, totals = [], {}, {}
    for name, knots in arms.items():
        summaries[name], totals[name] = {}, 0.0
        for j in cfg.resolved_targets():
            rc = cfg.run_config(j, knots, env)
            s = run_ensemble(rc, n_reps, cfg.seed)
            summaries[name][str(j)] = s.to_dict(dim)
            totals[name] += s.mean_iterations
            rows.append([name, j, n_reps, _num(s.mean_iterations), _num(s.mean_fidelity),
                         _num(s.mean_final_w), _num(s.convergence_rate), *s.assignment_counts(dim)])
            output.write(f"trace_{name}_j{j}.csv", run_single(rc, cfg.seed, 0).to_csv())
            summaries[name][str(j)]["iterations"] = s.iterations.tolist()
    header = ["arm", "target", "repetitions", "mean_iterations", "mean_fidelity", "mean_final_w",
              "convergence_rate", *(f"assigned_{k}" for k in range(dim))]
    output.write("summary.csv", _csv(header, rows))
    for j in cfg.resolved_targets():
        hist = {name: np.array(summaries[name][str(j)].pop("iterations")) for name in arms}
        output.write(f"histogram_j{j}.csv", pooled_histogram(hist))
    output.write_json("summary.json", {"summaries": summaries, "total_mean_iterations": totals})
    output.close()
    for name in arms:
        click.echo(f"{name}: total mean iterations over targets {totals[name]:.4f}")


@main.command("optimize")
@with_common
@click.option("--criterion", type=click.Choice(("speed", "accuracy")), help="Optimization criterion.")
@click.option("--reps", type=int, help="Repetitions per cost evaluation.")
def optimize_cmd(config_path, seed, out, criterion, reps):
    """Optimize the knot set for the first target index."""
    cfg = _resolve(config_path, seed, None)
    crit = _criterion(cfg, criterion)
    opt = dict(cfg.optimize, criterion=crit)
    if reps is not None:
        opt["repetitions"] = reps
    cfg.optimize = opt
    target = cfg.resolved_targets()[0]
    rc = cfg.run_config(target, KnotSet.uniform(opt["n_knots"]))
    spec = CostSpec(crit, rc, opt["repetitions"], cfg.seed, opt["fixed_budget"])
    result = optimize(spec, opt["n_knots"], opt["budget"], cfg.seed)
    output = Output(out, "optimize", cfg, {"target": target})
    output.write_json("knots.json", {
        "knots": result.knots.to_dict(),
        "cost": result.cost,
        "baseline_cost": result.baseline_cost,
        "evaluations": result.evaluations,
        "criterion": crit,
    })
    output.write("history.csv", result.history_csv())
    output.write("pdf.csv", _pdf_csv(result.knots))
    output.close()
    click.echo(f"{crit}: baseline {result.baseline_cost:.6g} -> optimized {result.cost:.6g}")


def _benchmark_instances(cfg: ExperimentConfig):
    rng = np.random.default_rng(cfg.seed)
    count = cfg.benchmark["instances"]
    if cfg.benchmark["genes"] == "tabulated":
        genes = tabulated_genes(rng, min(count, 100))
        if count > 100:
            genes = np.concatenate([genes, random_genes(rng, count - 100)])
    else:
        genes = random_genes(rng, count)
    out = []
    for g in genes:
        U = gene_environment(*g)
        rc = RunConfig(U, unitary_eigensystem(U), KnotSet.uniform(cfg.optimize["n_knots"]),
                       cfg.rp_state(), 0, cfg.max_iterations, cfg.scaling_mode, cfg.gate_noise_sigma)
        out.append((tuple(float(x) for x in g), rc))
    return out


@main.command()
@with_common
@click.option("--arm", type=click.Choice(ARMS), default="both", show_default=True,
              help="'uniform' skips optimization.")
@click.option("--criterion", type=click.Choice(("speed", "accuracy")), help="Optimization criterion.")
@click.option("--reps", type=int, help="Repetitions per cost evaluation.")
def benchmark(config_path, seed, out, arm, criterion, reps):
    """Single-qubit campaign over random U(theta, phi, lambda) environments."""
    cfg = _resolve(config_path, seed, None)
    crit = _criterion(cfg, criterion)
    cfg.optimize = dict(cfg.optimize, criterion=crit, **({"repetitions": reps} if reps else {}))
    opt, bench = cfg.optimize, cfg.benchmark
    instances = _benchmark_instances(cfg)
    output = Output(out, "benchmark", cfg, {"arm": arm})
    speed = crit == "speed"
    template = CostSpec(crit, instances[0][1], opt["repetitions"], cfg.seed, opt["fixed_budget"])
    if arm == "uniform":
        rows, hist_u = [], []
        for genes, rc in instances:
            spec = replace(template, config=rc, repetitions=bench["eval_repetitions"])
            s = run_ensemble(spec.run_config(KnotSet.uniform(opt["n_knots"])), spec.repetitions, cfg.seed)
            n = s.mean_iterations if speed else float(opt["fixed_budget"])
            rows.append([*map(_num, genes), "", "", _num(n), "", _num(s.mean_fidelity), ""])
            hist_u.append(n if speed else s.mean_fidelity)
        table = _csv(["theta", "phi", "lam", "X_in", "Y_in", "N", "N_opt", "F", "F_opt"], rows)
        hist = {"uniform": np.array(hist_u)}
        means = {"n_uniform": float(np.mean([float(r[5]) for r in rows])),
                 "f_uniform": float(np.mean([float(r[7]) for r in rows]))}
    else:
        camp = campaign(instances, template, cfg.seed, opt["n_knots"], opt["budget"],
                        bench["eval_repetitions"])
        table = camp.table_csv()
        key_u, key_o = ("n_uniform", "n_opt") if speed else ("f_uniform", "f_opt")
        hist = {
            "uniform": np.array([getattr(r, key_u) for r in camp.rows]),
            "optimized": np.array([getattr(r, key_o) for r in camp.rows]),
        }
        if arm == "optimized":
            hist.pop("uniform")
        means = camp.means()
        for k, r in enumerate(camp.rows):
            output.write(f"history_{k:03d}.csv", r.result.history_csv())
    output.write("table.csv", table)
    output.write("histogram.csv", pooled_histogram(hist))
    output.write_json("summary.json", {"criterion": crit, "means": means})
    output.close()
    click.echo(json.dumps(means, sort_keys=True))


def _pdf_csv(knots: KnotSet) -> str:
    x, F, D = tabulate(build_interpolant(knots))
    return _csv(["x", "F", "D"], [[_num(a), _num(b), _num(c)] for a, b, c in zip(x, F, D)])


@main.command()
@with_common
@click.option("--knots", "knots_path", type=click.Path(dir_okay=False, exists=True),
              help="Knots JSON ({\"xs\": [...], \"ys\": [...]}); defaults to the config's knots.")
def pdfdump(config_path, seed, out, knots_path):
    """Tabulate x, F(x), D(x) on a 2001-point grid over [-1, 1]."""
    cfg = _resolve(config_path, seed, None)
    knots = KnotSet.load(knots_path) if knots_path else cfg.resolved_knots()
    if knots_path:
        cfg.knots = knots
    output = Output(out, "pdfdump", cfg)
    output.write("pdf.csv", _pdf_csv(knots))
    output.close()


@main.command()
@with_common
@click.option("--arm", type=click.Choice(("uniform", "optimized")), help="Which PDF to sample.")
@click.option("--reps", type=int, default=10000, show_default=True, help="Number of samples.")
def sample(config_path, seed, out, arm, reps):
    """Draw seeded mutation samples by inverse-transform sampling."""
    cfg = _resolve(config_path, seed, None)
    if reps < 1:
        raise click.BadParameter("--reps must be >= 1")
    arm = arm or ("optimized" if cfg.knots else "uniform")
    knots = _arm_knots(cfg, arm)[arm]
    u = np.random.default_rng(cfg.seed).random(reps)
    eps = inverse_sample(build_interpolant(knots), u)
    output = Output(out, "sample", cfg, {"arm": arm, "samples": reps})
    output.write("samples.csv", _csv(["index", "u", "epsilon"],
                                     [[k, _num(a), _num(b)] for k, (a, b) in enumerate(zip(u, eps))]))
    output.close()


def run():
    try:
        main(standalone_mode=False)
    except click.exceptions.Abort:
        raise SystemExit(1)
    except click.ClickException as exc:
        exc.show()
        raise SystemExit(exc.exit_code)
    except ArqeError as exc:
        click.echo(f"error: {exc}", err=True)
        raise SystemExit(2)
