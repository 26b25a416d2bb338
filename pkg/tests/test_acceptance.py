"""Acceptance criteria 1-11. Each test prints one PASS/FAIL line.

Criteria 8-10 share one batch of full-length training runs (27 runs of
2000 x 30 steps, roughly half an hour on one core). Set
PASSMEC_ACCEPTANCE_CACHE=<dir> to keep per-run results between sessions.
"""
import json
import os
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import linregress

from passmec import channel as ch
from passmec import codec as cd
from passmec import experiment as ex
from passmec.cli import main
from passmec.env import EnvConfig, PassMecEnv
from passmec.nn import DenseNet
from passmec.ppo import ContinuousBandit, PPOAgent, PPOHyper, train
from oracles import naive_sinr, resimulate_queues
from test_nn_ppo import fd_check

SEEDS = (0, 1, 2)
VARIANTS = ("pass-movable", "pass-fixed", "mimo")
POWERS_DBM = (10.0, 15.0, 20.0, 25.0)


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return _report


def test_c01_channel_magnitude(report):
    g = ch.SystemGeometry(N=1, M=1, L=1, K=1, waveguide_y=(0.0,))
    ue = ch.ue_antenna_positions(g, [[5.0, 0.0]])
    mag = abs(ch.channel_matrix(g, ue, np.array([[5.0]]), 0, 0)[0, 0])
    ok = abs(mag - 2.8421e-4) <= 1e-8
    assert report(1, ok, f"|entry| = {mag:.6e} (target 2.8421e-4 +- 1e-8)")


def test_c02_sinr_brute_force(report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        K, N, M, L = (int(rng.integers(1, hi + 1)) for hi in (3, 2, 4, 3))
        g = ch.SystemGeometry(K=K, N=N, M=M, L=L)
        ue = ch.ue_antenna_positions(g, np.column_stack([rng.uniform(0, 10, K), rng.uniform(-5, 5, K)]))
        pa_x = np.sort(rng.uniform(0, 10, (N, M)), axis=1)
        chans = ch.compute_channels(g, ue, pa_x, 1e-12)
        beams = (rng.normal(size=(K, L)) + 1j * rng.normal(size=(K, L))) * 0.1
        assoc = rng.integers(0, N, K)
        got = ch.sinr_all(chans, assoc, beams)
        ref = np.array(naive_sinr(chans.H, chans.h, assoc, beams, 1e-12))
        worst = max(worst, float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1e-300))))
    assert report(2, worst < 1e-10, f"max relative error {worst:.2e} over 1000 instances (< 1e-10)")


def _episode(env, rng, beta_raw=None):
    env.reset()
    lam, lam_b, seen, done = [], [], [], False
    while not done:
        task = env.task.copy()
        a = rng.uniform(-1, 1, env.act_dim)
        if beta_raw is not None:
            a[env.layout.beta] = beta_raw
        _, _, done, info = env.step(a)
        lam.append(((1 - info["beta"]) * task).tolist())
        lam_b.append(float(np.sum(info["beta"] * task)))
        seen.append((info["q_local"].tolist(), info["q_bs"]))
    return lam, lam_b, seen


def test_c03_queue_trajectory(report):
    rng = np.random.default_rng(3)
    exact = nonneg = zero_bs = True
    for ep in range(100):
        env = PassMecEnv(EnvConfig(rng_seed=ep, task_bits_spread=0.5 if ep % 2 else 0.0))
        p = env.config.profile
        lam, lam_b, seen = _episode(env, rng)
        exact &= seen == resimulate_queues(lam, lam_b, p.local_service_bits, p.bs_service_bits)
        nonneg &= all(min(q) >= 0 and qb >= 0 for q, qb in seen)
        _, _, seen0 = _episode(env, rng, beta_raw=-1.0)
        zero_bs &= all(qb == 0.0 for _, qb in seen0)
    ok = exact and nonneg and zero_bs
    assert report(3, ok, f"exact re-simulation {exact}, non-negative {nonneg}, beta=0 => Q_b=0 {zero_bs}")


def test_c04_codec_partition(report):
    rng = np.random.default_rng(4)
    worst_sum, anneal_exact = 0.0, True
    for _ in range(10_000):
        N = int(rng.integers(1, 6))
        K = int(rng.integers(1, 10))
        loads = rng.multinomial(int(rng.integers(0, K + 1)), np.ones(N) / N)
        s = cd.DiscretizationSchedule(eps_train=400, current_episode=int(rng.integers(0, 800)))
        worst_sum = max(worst_sum, abs(cd.lb_segments(loads, K, N, s).sum() - s.width))
        at = cd.DiscretizationSchedule(eps_train=400, current_episode=400)
        anneal_exact &= np.array_equal(cd.lb_segments(loads, K, N, at), cd.conventional_segments(N, at))
    worst_freq = 0.0
    for _ in range(5):
        N, K = 3, 5
        loads = rng.multinomial(int(rng.integers(0, K)), np.ones(N) / N)
        s = cd.DiscretizationSchedule(eps_train=400, current_episode=int(rng.integers(0, 400)))
        seg = cd.lb_segments(loads, K, N, s)
        v = rng.uniform(s.varpi_min, s.varpi_max, 100_000)
        full = np.array([cd.segment_index(x, seg, s.varpi_min) for x in v])
        freq = np.bincount(full, minlength=N) / v.size
        worst_freq = max(worst_freq, float(np.max(np.abs(freq - seg / s.width))))
    ok = worst_sum <= 1e-12 and anneal_exact and worst_freq < 0.02
    assert report(4, ok, f"max |sum - range| {worst_sum:.1e}, annealed == equal split {anneal_exact}, "
                         f"max MC frequency error {worst_freq:.4f} (< 0.02)")


def test_c05_feasibility_fuzz(report):
    rng = np.random.default_rng(5)
    g = ch.SystemGeometry()
    P = 0.1
    dim = cd.ActionLayout.for_geometry(g).dim
    bad = 0
    for i in range(100_000):
        if i % 4 == 0:
            raw = rng.choice([-1.0, 1.0, 0.0], size=dim)
        elif i % 4 == 1:
            raw = rng.uniform(-3, 3, dim)
        else:
            raw = rng.uniform(-1, 1, dim)
        s = cd.DiscretizationSchedule(current_episode=int(rng.integers(0, 800)))
        a = cd.decode_action(raw, g, P, s)
        ok = (np.all(np.sum(np.abs(a.beams) ** 2, axis=1) <= P * (1 + 1e-12))
              and not ch.pa_placement_violations(g, a.pa_x, tol=1e-9)
              and a.assoc.shape == (g.K,) and np.all((a.assoc >= 0) & (a.assoc < g.N))
              and np.all((a.beta >= 0) & (a.beta <= 1)))
        bad += not ok
    assert report(5, bad == 0, f"{bad} infeasible decodes out of 100000")


def test_c06_gradient_fd(report):
    rng = np.random.default_rng(6)
    worst, checked = 0.0, 0
    for hidden, output in (("tanh", "tanh"), ("relu", "linear")):
        net = DenseNet([12, 64, 128, 64, 5], hidden=hidden, output=output, rng=rng)
        x = rng.normal(size=(4, 12))
        worst = max(worst, fd_check(net, x, rng.normal(size=(4, 5)), 600, rng))
        checked += 600
    assert report(6, worst < 1e-4, f"max relative FD error {worst:.2e} over {checked} parameters (< 1e-4)")


def test_c07_bandit(report):
    results = []
    for seed in SEEDS:
        ag = PPOAgent(1, 1, PPOHyper(), seed=seed)
        env = ContinuousBandit(target=0.3)
        updates, mean = 0, None
        while updates < 5000:
            log = train(env, ag, ag.hyper.batch_size)
            updates += len(log.updates)
            mean = float(ag.act_deterministic(np.ones(1))[0])
            if abs(mean - 0.3) < 0.05:
                break
        results.append((seed, updates, mean, abs(mean - 0.3) < 0.05))
    ok = all(r[3] for r in results)
    detail = ", ".join(f"seed {s}: mean {m:.3f} after {u} updates" for s, u, m, _ in results)
    assert report(7, ok, detail)


# -- long-run trends ----------------------------------------------------

def _run(variant, seed, K=5, p_dbm=20.0):
    cache = os.environ.get("PASSMEC_ACCEPTANCE_CACHE")
    key = f"{variant}_K{K}_P{p_dbm:g}_seed{seed}.json"
    if cache and (Path(cache) / key).exists():
        return json.loads((Path(cache) / key).read_text())
    cfg = ex.default_config()
    env_dict = dict(cfg["env"], K=K, p_max_dbm=p_dbm)
    hyper = ex.hyper_from_dict(cfg["ppo"])
    agent, env, rows, _ = ex.train_one(env_dict, hyper, variant, seed, cfg["experiment"]["episodes"])
    res = ex.evaluate_agent(agent, env.config, cfg["experiment"]["eval_episodes"],
                            ex.EVAL_SEED_OFFSET + seed, env.schedule)
    out = {"curve": [r.mean_reward for r in rows], "latency": res["mean_latency"]}
    if cache:
        Path(cache).mkdir(parents=True, exist_ok=True)
        (Path(cache) / key).write_text(json.dumps(out))
    return out


@pytest.fixture(scope="session")
def runs():
    out = {}
    for K in (5, 7):
        for v in VARIANTS:
            for s in SEEDS:
                out[(v, K, 20.0, s)] = _run(v, s, K=K)
    for p in POWERS_DBM:
        for s in SEEDS:
            if ("pass-movable", 5, p, s) not in out:
                out[("pass-movable", 5, p, s)] = _run("pass-movable", s, K=5, p_dbm=p)
    return out


def _mean_latency(runs, v, K=5, p=20.0):
    return float(np.mean([runs[(v, K, p, s)]["latency"] for s in SEEDS]))


def test_c08_convergence(report, runs):
    improved, plateau, parts = 0, 0, []
    for s in SEEDS:
        curve = np.asarray(runs[("pass-movable", 5, 20.0, s)]["curve"])
        first, last = curve[:200].mean(), curve[-200:].mean()
        tail = curve[-len(curve) // 5:]
        fit = linregress(np.arange(tail.size), tail)
        improved += last > first
        plateau += fit.pvalue >= 0.05
        parts.append(f"seed {s}: first200 {first:.2f} last200 {last:.2f} tail slope {fit.slope:.2e} p={fit.pvalue:.3f}")
    ok = improved >= 2 and plateau >= 2
    assert report(8, ok, f"improved {improved}/3, plateau {plateau}/3; " + "; ".join(parts))


def test_c09_ordering(report, runs):
    lat = {(v, K): _mean_latency(runs, v, K) for v in VARIANTS for K in (5, 7)}
    order = all(lat[("pass-movable", K)] <= lat[("pass-fixed", K)] <= lat[("mimo", K)] for K in (5, 7))
    growth = all(lat[(v, 5)] <= lat[(v, 7)] for v in VARIANTS)
    detail = "; ".join(f"K={K}: " + ", ".join(f"{v} {lat[(v, K)]:.3f}s" for v in VARIANTS) for K in (5, 7))
    assert report(9, order and growth, f"ordering {order}, non-decreasing in K {growth}; {detail}")


def test_c10_power_trend(report, runs):
    lat = [_mean_latency(runs, "pass-movable", 5, p) for p in POWERS_DBM]
    ok = all(b <= a for a, b in zip(lat, lat[1:]))
    detail = ", ".join(f"{p:g} dBm {v:.3f}s" for p, v in zip(POWERS_DBM, lat))
    assert report(10, ok, f"non-increasing {ok}; {detail}")


def test_c11_determinism(report, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    common = ["--seed", "4", "--episodes", "60", "--variant", "pass-movable"]
    assert main(["train", *common, "--out", str(out_a)]) == 0
    assert main(["train", *common, "--out", str(out_b)]) == 0
    same = True
    for name in ("train_pass-movable_seed4.csv", "ckpt_pass-movable_seed4.json"):
        same &= (out_a / name).read_bytes() == (out_b / name).read_bytes()
    for out in (out_a, out_b):
        assert main(["evaluate", "--checkpoint", str(out / "ckpt_pass-movable_seed4.json"), "--seed", "4",
                     "--episodes", "5", "--out", str(out)]) == 0
    name = "eval_ckpt_pass-movable_seed4.csv"
    same &= (out_a / name).read_bytes() == (out_b / name).read_bytes()
    assert report(11, same, f"train CSV, checkpoint and evaluation CSV byte-identical across reruns: {same}")
