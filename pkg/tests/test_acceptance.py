"""Acceptance suite: one PASS/FAIL line per criterion, printed even under capture.

Run alone with ``pytest tests/test_acceptance.py -v``; the whole module takes
about half an hour on one core.
"""
import math
import time

import numpy as np
import pytest
from click.testing import CliRunner
from scipy import stats

from arqe.cli import main
from arqe.engine import RunConfig, RpState, minimal_convergence_count, run_ensemble
from arqe.linalg import (
    environment_from_observable,
    fidelity,
    hermitian_eigensystem,
    unitary_eigensystem,
)
from arqe.operators import build_h2, build_two_qubit_example, gene_environment, tabulated_genes
from arqe.optimizer import CostSpec, campaign, cost_eval, optimize
from arqe.pcf import KnotSet, build_interpolant, inverse_sample, pcf_eval

from conftest import TWO_PEAKS, FLAT_START, random_knots

pytestmark = pytest.mark.slow

CAMPAIGN_SEED = 11
CAMPAIGN_GENES_SEED = 2024


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail, elapsed, limit):
        ok = ok and elapsed < limit
        with capsys.disabled():
            status = "PASS" if ok else "FAIL"
            print(f"\n[{status}] criterion {number}: {title}: {detail} ({elapsed:.1f} s, limit {limit:.0f} s)")
        assert ok, detail
    return emit


def single_qubit_instances(count, seed, n_knots=2):
    out = []
    for g in tabulated_genes(np.random.default_rng(seed), count):
        U = gene_environment(*g)
        out.append((tuple(g), RunConfig(U, unitary_eigensystem(U), KnotSet.uniform(n_knots))))
    return out


def test_criterion_1_exact_eigenstructure(report):
    t = time.perf_counter()
    s2 = 1 / np.sqrt(2)
    example_vectors = [np.array([1, 1, 1, 1]) / 2, np.array([0, 0, s2, -s2]),
            np.array([1, 1, -1, -1]) / 2, np.array([s2, -s2, 0, 0])]
    es = hermitian_eigensystem(build_two_qubit_example())
    err_a = np.max(np.abs(es.values - np.pi * np.array([0, 0.5, 1, 1.5])))
    fid_a = min(fidelity(es.vector(k), v) for k, v in enumerate(example_vectors))

    h2_vectors = [np.array([0, -0.03909568, 0.99923547, 0]), np.array([1.0, 0, 0, 0]),
            np.array([0, 0.99923547, 0.03909568, 0]), np.array([0, 0, 0, 1.0])]
    h2_values = np.array([0.14421033, 2.6458, 4.19378967, 4.4118])
    es = hermitian_eigensystem(build_h2())
    err_b = np.max(np.abs(es.values - h2_values))
    # the printed vectors carry eight digits; compare rays after normalizing them
    fid_b = min(fidelity(es.vector(k), v / np.linalg.norm(v)) for k, v in enumerate(h2_vectors))
    ok = err_a < 1e-9 and fid_a > 1 - 1e-9 and err_b < 1e-6 and fid_b > 1 - 1e-8
    detail = (f"two-qubit example |dvalue| {err_a:.1e}, min fidelity {fid_a:.12f}; "
              f"H2 |dvalue| {err_b:.1e}, min fidelity {fid_b:.12f}")
    report(1, "exact eigenstructure", ok, detail, time.perf_counter() - t, 1)


def test_criterion_2_interpolation_suite(report):
    t = time.perf_counter()
    rng = np.random.default_rng(2)
    grid = np.linspace(-1, 1, 2001)
    worst = {"monotone": 0.0, "knots": 0.0, "symmetry": 0.0, "c1": 0.0, "endpoints": 0.0}
    for k in range(1000):
        K = random_knots(rng, (2, 4)[k % 2])
        P = build_interpolant(K)
        F = pcf_eval(P, grid)
        worst["monotone"] = max(worst["monotone"], -np.min(np.diff(F)))
        worst["knots"] = max(worst["knots"], np.max(np.abs(pcf_eval(P, np.array(K.xs)) - K.ys)))
        worst["symmetry"] = max(worst["symmetry"], np.max(np.abs(F + F[::-1] - 1)))
        worst["endpoints"] = max(worst["endpoints"], abs(F[0]), abs(F[1000] - 0.5), abs(F[-1] - 1))
        for j in range(1, K.n + 1):
            h = P.x[j] - P.x[j - 1]
            a, b, c, d = P.coeffs[j - 1]
            nxt = P.coeffs[j]
            jump = abs(d + h * (c + h * (b + h * a)) - nxt[3])
            kink = abs(c + 2 * b * h + 3 * a * h * h - nxt[2])
            worst["c1"] = max(worst["c1"], jump, kink)
    ok = (worst["monotone"] <= 0 and worst["knots"] < 1e-12 and worst["symmetry"] < 1e-12
          and worst["endpoints"] == 0 and worst["c1"] < 1e-10)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(2, "interpolation suite over 1000 knot sets", ok, detail, time.perf_counter() - t, 30)


def test_criterion_3_sampler_fidelity(report):
    t = time.perf_counter()
    rng = np.random.default_rng(3)
    sets = [random_knots(rng, int(rng.choice([2, 4]))) for _ in range(20)] + [TWO_PEAKS, FLAT_START]
    bound = 1.95 / math.sqrt(1e5)
    worst = 0.0
    for K in sets:
        P = build_interpolant(K)
        samples = inverse_sample(P, rng.random(100_000))
        worst = max(worst, stats.kstest(samples, lambda x: pcf_eval(P, np.clip(x, -1, 1))).statistic)
    detail = f"max KS statistic {worst:.5f} vs bound {bound:.5f} over {len(sets)} sets"
    report(3, "sampler fidelity", worst < bound, detail, time.perf_counter() - t, 60)


def test_criterion_4_protocol_calibration_band(report):
    t = time.perf_counter()
    rp = RpState(r=0.9, p=1 / 0.9)
    N, F = [], []
    for genes, rc in single_qubit_instances(20, 0):
        s = run_ensemble(RunConfig(rc.environment, rc.reference, KnotSet.uniform(), rp,
                                   max_iterations=2000), 1000, 0)
        N.append(s.mean_iterations)
        F.append(s.mean_fidelity)
    n_bar, f_bar = float(np.mean(N)), float(np.mean(F))
    ok = 60 <= n_bar <= 110 and f_bar >= 0.97
    detail = f"mean iterations {n_bar:.2f} (band [60, 110]), mean fidelity {f_bar:.4f} (>= 0.97)"
    report(4, "uniform-PDF calibration band", ok, detail, time.perf_counter() - t, 300)


def test_criterion_5_speed_optimization(report):
    t = time.perf_counter()
    instances = single_qubit_instances(10, CAMPAIGN_GENES_SEED)
    template = CostSpec("speed", instances[0][1], repetitions=300)
    camp = campaign(instances, template, CAMPAIGN_SEED, n_knots=2, budget=400, eval_repetitions=1000)
    m = camp.means()
    reduction = 1 - m["n_opt"] / m["n_uniform"]
    detail = (f"held-out mean iterations {m['n_uniform']:.2f} -> {m['n_opt']:.2f}, "
              f"reduction {100 * reduction:.1f}% (need >= 10%; published 25.4%)")
    report(5, "speed optimization", m["n_opt"] <= 0.90 * m["n_uniform"], detail,
           time.perf_counter() - t, 1800)


def test_criterion_6_accuracy_optimization(report):
    t = time.perf_counter()
    instances = single_qubit_instances(10, CAMPAIGN_GENES_SEED)
    template = CostSpec("accuracy-final-w", instances[0][1], repetitions=300, fixed_budget=80)
    camp = campaign(instances, template, CAMPAIGN_SEED, n_knots=2, budget=400, eval_repetitions=1000)
    m = camp.means()
    gain = m["f_opt"] - m["f_uniform"]
    detail = (f"held-out mean fidelity at 80 iterations {m['f_uniform']:.4f} -> {m['f_opt']:.4f}, "
              f"gain {gain:+.4f} (need >= +0.005; published 0.95 -> 0.97)")
    report(6, "accuracy optimization", gain >= 0.005, detail, time.perf_counter() - t, 1800)


def test_criterion_7_two_qubit_speed(report):
    t = time.perf_counter()
    H = build_two_qubit_example()
    rc = RunConfig(environment_from_observable(H), hermitian_eigensystem(H), KnotSet.uniform(4))
    spec = CostSpec("speed", rc, repetitions=500, master_seed=7)
    res = optimize(spec, n_knots=4, budget=200, seed=7)
    # score both arms on streams the optimizer never saw
    held_out = CostSpec("speed", rc, repetitions=500, master_seed=70)
    n_uni, n_opt = cost_eval(KnotSet.uniform(4), held_out), cost_eval(res.knots, held_out)
    reduction = 1 - n_opt / n_uni
    detail = (f"held-out mean iterations {n_uni:.1f} -> {n_opt:.1f}, "
              f"reduction {100 * reduction:.1f}% (need >= 15%; published 654 -> 355); "
              f"in-sample {res.baseline_cost:.1f} -> {res.cost:.1f}")
    report(7, "two-qubit speed optimization", reduction >= 0.15, detail, time.perf_counter() - t, 2700)


def test_criterion_8_h2_shot_accounting(report):
    t = time.perf_counter()
    minimal = minimal_convergence_count(0.9, 0.1)
    closed = math.ceil(math.log(0.1) / math.log(0.9))
    H = build_h2()
    U, ref = environment_from_observable(H), hermitian_eigensystem(H)
    rp = RpState(r=0.9, delta=0.1)
    means = [run_ensemble(RunConfig(U, ref, KnotSet.uniform(), rp, target=j), 4000, 8).mean_iterations
             for j in (0, 1, 2)]
    total = sum(means)
    ok = minimal == closed == 22 and 60 <= total <= 80
    detail = (f"all-alive minimum {minimal} (closed form {closed}; the published 'at least 21' is one short), "
              f"per-target means {', '.join(f'{m:.2f}' for m in means)}, total {total:.2f} "
              f"(band [60, 80]; published 65)")
    report(8, "H2 shot accounting", ok, detail, time.perf_counter() - t, 300)


CLI_CONFIG = """\
[operator]
kind = "genes"
genes = [2.0, 1.5707963, 3.14159265]

[knots]
xs = [-0.69513535, -0.3989989]
ys = [0.00706757, 0.04842301]

[optimize]
budget = 40
repetitions = 100

[benchmark]
instances = 1
eval_repetitions = 200

[run]
seed = 11
repetitions = 300
"""


def test_criterion_9_determinism(report, tmp_path):
    t = time.perf_counter()
    config = tmp_path / "c.toml"
    config.write_text(CLI_CONFIG)
    runner = CliRunner()

    def files(out):
        return {p.name: p.read_bytes() for p in sorted(out.iterdir())}

    mismatched = []
    commands = [["solve", "--arm", "both"], ["optimize"], ["benchmark"], ["pdfdump"], ["sample"]]
    for command in commands:
        outs = []
        for k in range(2):
            out = tmp_path / f"{command[0]}_{k}"
            res = runner.invoke(main, [*command, "--config", str(config), "--out", str(out)])
            if res.exit_code != 0:
                mismatched.append(f"{command[0]} exit {res.exit_code}")
            outs.append(files(out) if out.exists() else {})
        if not outs[0] or outs[0] != outs[1]:
            mismatched.append(command[0])

    threads = {}
    for n in ("1", "4"):
        out = tmp_path / f"threads_{n}"
        runner.invoke(main, ["solve", "--config", str(config), "--out", str(out)],
                      env={"ARQE_THREADS": n})
        threads[n] = files(out)
    H = build_h2()
    rc = RunConfig(environment_from_observable(H), hermitian_eigensystem(H), KnotSet.uniform(), target=1)
    a = run_ensemble(rc, 500, 9, workers=1).to_json(4)
    b = run_ensemble(rc, 500, 9, workers=4).to_json(4)
    thread_ok = threads["1"] == threads["4"] and bool(threads["1"]) and a == b
    ok = not mismatched and thread_ok
    detail = (f"{len(commands)} commands byte-identical on rerun" if not mismatched
              else f"differences in {mismatched}")
    detail += f"; ARQE_THREADS 1 vs 4 {'identical' if thread_ok else 'DIFFER'}"
    report(9, "determinism", ok, detail, time.perf_counter() - t, 120)

