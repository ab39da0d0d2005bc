"""Acceptance suite: one test per release criterion, each printing a
PASS line with the measured quantity. Run with `pytest tests/test_acceptance.py -s`.

The two convergence checks use the synthetic-blob fallback dataset unless
MNIST IDX files are present at data/mnist/ (train-images-idx3-ubyte,
train-labels-idx1-ubyte).
"""
import time
from pathlib import Path

import numpy as np
import pytest

from fedsim.aggregators import (
    AggregatorConfig,
    adaptive_step_size,
    ewwa_aggregate,
    fedadp_aggregate,
    fedams_aggregate,
    fedavg_aggregate,
    fedopt_aggregate,
    gompertz_contribution,
    initial_state,
)
from fedsim.data import Dataset, load_idx
from fedsim.federation import FederationConfig, run_federation
from fedsim.models import Batch, ModelSpec, init_params, loss_and_grad
from fedsim.reporting import config_from_dict, emit_metrics, make_manifest
from fedsim.tensors import ParameterSet, flat_inner_product, l2_norm, mean
from fedsim.training import ClientUpdate, LocalConfig

MNIST_DIR = Path(__file__).resolve().parent.parent / "data" / "mnist"


def ps(values):
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    return ParameterSet([("w", (arr.size,), arr)])


def upd(cid, values, n=10):
    return ClientUpdate(client_id=cid, pseudo_gradient=ps(values),
                        num_samples=n, train_loss=0.0, train_accuracy=0.5)


def scaled_dataset(seed):
    """6,000-sample MNIST subset when available, synthetic blobs otherwise."""
    images = MNIST_DIR / "train-images-idx3-ubyte"
    labels = MNIST_DIR / "train-labels-idx1-ubyte"
    if images.exists() and labels.exists():
        full = load_idx(images, labels)
        rng = np.random.default_rng(seed)
        idx = rng.choice(full.n, size=6000, replace=False)
        return full.subset(idx)
    from fedsim.data import synth_blobs
    return synth_blobs(10, 600, 32, 0.25, seed)


def scaled_cfg(strategy, seed, partition="iid", rounds=100):
    return FederationConfig(
        num_clients=3, rounds=rounds, model_kind="mlp", hidden_dim=64,
        local=LocalConfig(lr=0.01, momentum=0.9, batch_size=64),
        aggregator=AggregatorConfig(strategy=strategy, variant="adam"),
        partition=partition, concentration=0.3,
        seed=seed, global_step_scale=0.01,
    )


def test_criterion_1_gradient_correctness():
    """Analytic gradients match central finite differences at 1e-5."""
    start = time.perf_counter()
    specs = [
        ModelSpec("softmax_regression", input_dim=5, num_classes=4),
        ModelSpec("mlp", input_dim=5, num_classes=4, hidden_dim=6),
    ]
    h = 1e-5
    worst = 0.0
    rng = np.random.default_rng(101)
    for spec in specs:
        for _ in range(20):
            params = init_params(spec, int(rng.integers(1 << 31)))
            batch = Batch(rng.normal(size=(6, spec.input_dim)),
                          rng.integers(0, spec.num_classes, size=6))
            _, grad = loss_and_grad(params, spec, batch)
            flat = params.to_flat()
            numeric = np.empty_like(flat)
            for i in range(flat.size):
                bump = flat.copy()
                bump[i] = flat[i] + h
                hi, _ = loss_and_grad(params.with_flat(bump), spec, batch)
                bump[i] = flat[i] - h
                lo, _ = loss_and_grad(params.with_flat(bump), spec, batch)
                numeric[i] = (hi - lo) / (2 * h)
            rel = np.max(np.abs(grad.to_flat() - numeric)
                         / np.maximum(np.abs(numeric), 1e-3))
            worst = max(worst, rel)
    elapsed = time.perf_counter() - start
    assert worst < 1e-5
    assert elapsed < 60.0
    print(f"\n[criterion 1] PASS gradient check: max rel err {worst:.2e} "
          f"in {elapsed:.1f}s")


def test_criterion_2_elementwise_proportion_law():
    """EWWA proportions sum to 1 per element and lie in (0, 1]."""
    rng = np.random.default_rng(202)
    cfg = AggregatorConfig(strategy="ewwa")
    rounds_done = 0
    worst_gap = 0.0
    for num_clients in (2, 3, 5):
        state = initial_state(ps(np.zeros(1000)))
        for _ in range(34):
            updates = [upd(c, rng.normal(size=1000)) for c in range(num_clients)]
            _, state, props = ewwa_aggregate(updates, state, cfg,
                                             return_proportions=True)
            total = np.sum([p.to_flat() for p in props], axis=0)
            worst_gap = max(worst_gap, float(np.max(np.abs(total - 1.0))))
            assert np.all(np.abs(total - 1.0) <= 1e-9)
            for p in props:
                flat = p.to_flat()
                assert np.all(flat > 0.0) and np.all(flat <= 1.0)
            rounds_done += 1
    assert rounds_done >= 100
    print(f"[criterion 2] PASS proportion law over {rounds_done} rounds: "
          f"max |sum-1| = {worst_gap:.2e}")


def test_criterion_3_degeneracy_suite():
    """C=1 EWWA identity, identical-client symmetry, scalar Adam oracle."""
    # C=1: proportions collapse to 1, G equals the gradient
    g_in = np.array([0.3, -2.0, 5.0, 0.0])
    cfg = AggregatorConfig(strategy="ewwa")
    g_out, _ = ewwa_aggregate([upd(0, g_in)], initial_state(ps(g_in * 0)), cfg)
    gap1 = float(np.max(np.abs(g_out.to_flat() - g_in)))
    assert gap1 <= 1e-15

    # C identical clients: per-element softmax is uniform, G is the mean
    rng = np.random.default_rng(303)
    shared = rng.normal(size=50)
    updates = [upd(c, shared) for c in range(4)]
    g_ewwa, _ = ewwa_aggregate(updates, initial_state(ps(np.zeros(50))), cfg)
    g_avg = fedavg_aggregate(updates)
    gap2 = float(np.max(np.abs(g_ewwa.to_flat() - g_avg.to_flat())))
    assert gap2 <= 1e-12

    # fedopt-adam C=1 vs standalone scalar Adam with the round-scaled step,
    # descending a 1-D quadratic 0.5*(x-3)^2 for 50 rounds
    opt_cfg = AggregatorConfig(strategy="fedopt", variant="adam", server_lr=0.5)
    state = initial_state(ps(0.0))
    x = 0.0
    xo = 0.0
    m = v = 0.0
    gap3 = 0.0
    for r in range(1, 51):
        g_out, state = fedopt_aggregate([upd(0, [x - 3.0])], state, opt_cfg)
        x = x - g_out.to_flat()[0]

        g = xo - 3.0
        m = opt_cfg.beta1 * m + (1 - opt_cfg.beta1) * g
        v = opt_cfg.beta2 * v + (1 - opt_cfg.beta2) * g * g
        eta = opt_cfg.server_lr * np.sqrt(1 - opt_cfg.beta2 ** r) / (
            1 - opt_cfg.beta1 ** r)
        xo = xo - eta * m / (np.sqrt(v) + opt_cfg.epsilon)
        gap3 = max(gap3, abs(x - xo))
    assert gap3 <= 1e-12
    print(f"[criterion 3] PASS degeneracies: C=1 gap {gap1:.1e}, "
          f"symmetry gap {gap2:.1e}, scalar-adam gap {gap3:.1e}")


def test_criterion_4_formula_spot_checks():
    """Adaptive step at round 1, Gompertz value, Adagrad first moment."""
    eta1 = adaptive_step_size(1.0, 0.9, 0.999, 1)
    assert eta1 == pytest.approx(0.3162278, abs=1e-6)

    f1 = gompertz_contribution(1.0, 5.0)
    assert f1 == pytest.approx(3.160603, abs=1e-6)
    assert f1 == pytest.approx(5.0 * (1 - np.exp(-1.0)), abs=1e-12)

    cfg = AggregatorConfig(strategy="fedopt", variant="adagrad")
    _, state = fedopt_aggregate([upd(0, [0.7])], initial_state(ps(0.0)), cfg)
    assert state.v.to_flat()[0] == 0.7 * 0.7
    print(f"[criterion 4] PASS spot checks: eta1={eta1:.7f}, "
          f"gompertz(1)={f1:.6f}, adagrad v1 exact")


def test_criterion_5_scaled_iid_convergence():
    """FedAvg and EWWA-Adam both reach 92% on the scaled IID task."""
    start = time.perf_counter()
    data = scaled_dataset(seed=0)
    finals = {}
    for strategy in ("fedavg", "ewwa"):
        records = run_federation(scaled_cfg(strategy, seed=0), data=data)
        finals[strategy] = records[-1].global_test_accuracy
    elapsed = time.perf_counter() - start
    assert finals["fedavg"] >= 0.92
    assert finals["ewwa"] >= 0.92
    assert elapsed < 20 * 60
    print(f"[criterion 5] PASS scaled IID: fedavg {finals['fedavg']:.4f}, "
          f"ewwa-adam {finals['ewwa']:.4f} in {elapsed:.0f}s")


def test_criterion_6_scaled_noniid_directional():
    """EWWA-Adam holds accuracy and convergence speed under label skew."""
    stats = {}
    for strategy in ("fedavg", "ewwa"):
        finals, to_85 = [], []
        for seed in range(5):
            data = scaled_dataset(seed=seed)
            records = run_federation(
                scaled_cfg(strategy, seed=seed, partition="label_skew",
                           rounds=150), data=data)
            accs = [r.global_test_accuracy for r in records]
            finals.append(accs[-1])
            reached = [i + 1 for i, a in enumerate(accs) if a >= 0.85]
            to_85.append(reached[0] if reached else len(accs) + 1)
        stats[strategy] = (float(np.median(finals)), float(np.median(to_85)))
    ewwa_final, ewwa_85 = stats["ewwa"]
    avg_final, avg_85 = stats["fedavg"]
    assert ewwa_final >= avg_final - 0.005
    assert ewwa_85 <= avg_85
    print(f"[criterion 6] PASS non-IID directional: median final "
          f"ewwa {ewwa_final:.4f} vs fedavg {avg_final:.4f}; "
          f"median rounds-to-85% {ewwa_85:.0f} vs {avg_85:.0f}")


def test_criterion_7_byte_identical_metrics(tmp_path):
    """Equal seeds produce byte-identical metrics.jsonl."""
    cfg_doc = {"rounds": 5, "model_kind": "softmax_regression",
               "synth_classes": 4, "synth_per_class": 50, "synth_dim": 8,
               "strategy": "ewwa", "seed": 12, "global_step_scale": 0.01}
    blobs = []
    for name in ("a", "b"):
        cfg = config_from_dict(cfg_doc)
        records = run_federation(cfg)
        out = tmp_path / name
        emit_metrics(records, make_manifest(cfg, out, 0.0, 0.0), out)
        blobs.append((out / "metrics.jsonl").read_bytes())
    assert blobs[0] == blobs[1]
    print(f"[criterion 7] PASS determinism: metrics.jsonl byte-identical "
          f"({len(blobs[0])} bytes)")


def test_criterion_8_state_invariants():
    """Adagrad/FedAMS monotonicity and FedAdp angle averaging over 200 rounds."""
    rng = np.random.default_rng(808)
    size = 30

    adagrad_cfg = AggregatorConfig(strategy="fedopt", variant="adagrad")
    ams_cfg = AggregatorConfig(strategy="fedams")
    adp_cfg = AggregatorConfig(strategy="fedadp")
    ada_state = initial_state(ps(np.zeros(size)))
    ams_state = initial_state(ps(np.zeros(size)))
    adp_state = initial_state(ps(np.zeros(size)))
    prev_v = ada_state.v.to_flat()
    prev_vmax = ams_state.v_max.to_flat()
    theta_history = {0: [], 1: [], 2: []}
    worst_mean_gap = 0.0
    for _ in range(200):
        updates = [upd(c, rng.normal(size=size)) for c in range(3)]
        _, ada_state = fedopt_aggregate(updates, ada_state, adagrad_cfg)
        assert np.all(ada_state.v.to_flat() >= prev_v)
        prev_v = ada_state.v.to_flat()

        _, ams_state = fedams_aggregate(updates, ams_state, ams_cfg)
        assert np.all(ams_state.v_max.to_flat() >= prev_vmax)
        prev_vmax = ams_state.v_max.to_flat()

        g_mean = mean([u.pseudo_gradient for u in updates])
        _, adp_state = fedadp_aggregate(updates, adp_state, adp_cfg, g_mean)
        for u in updates:
            cos = flat_inner_product(g_mean, u.pseudo_gradient) / (
                l2_norm(g_mean) * l2_norm(u.pseudo_gradient))
            theta_history[u.client_id].append(
                float(np.arccos(np.clip(cos, -1.0, 1.0))))
        for cid, thetas in theta_history.items():
            gap = abs(adp_state.smoothed_angles[cid] - np.mean(thetas))
            worst_mean_gap = max(worst_mean_gap, gap)
            assert gap <= 1e-12
    print(f"[criterion 8] PASS state invariants over 200 rounds: "
          f"max smoothed-angle gap {worst_mean_gap:.2e}")


def test_criterion_9_permutation_invariance():
    """Client update order never changes any strategy's output."""
    from fedsim.aggregators import fedboosting_aggregate

    rng = np.random.default_rng(909)
    updates = [upd(c, rng.normal(size=20), n=int(rng.integers(1, 40)))
               for c in range(5)]
    perm = [3, 0, 4, 1, 2]
    shuffled = [updates[i] for i in perm]
    template = ps(np.zeros(20))
    worst = 0.0

    def gap(a, b):
        return float(np.max(np.abs(a.to_flat() - b.to_flat())))

    worst = max(worst, gap(fedavg_aggregate(updates),
                           fedavg_aggregate(shuffled)))
    for fn, cfg in [
        (fedopt_aggregate, AggregatorConfig(strategy="fedopt")),
        (fedams_aggregate, AggregatorConfig(strategy="fedams")),
        (ewwa_aggregate, AggregatorConfig(strategy="ewwa")),
    ]:
        a, _ = fn(updates, initial_state(template), cfg)
        b, _ = fn(shuffled, initial_state(template), cfg)
        worst = max(worst, gap(a, b))
    g_mean = mean([u.pseudo_gradient for u in updates])
    adp_cfg = AggregatorConfig(strategy="fedadp")
    a, _ = fedadp_aggregate(updates, initial_state(template), adp_cfg, g_mean)
    b, _ = fedadp_aggregate(shuffled, initial_state(template), adp_cfg, g_mean)
    worst = max(worst, gap(a, b))

    cross_val = rng.uniform(0.3, 0.9, size=(5, 5))
    train_acc = rng.uniform(0.5, 1.0, size=5)
    worst = max(worst, gap(
        fedboosting_aggregate(updates, cross_val, train_acc),
        fedboosting_aggregate(shuffled, cross_val, train_acc)))
    assert worst <= 1e-12
    print(f"[criterion 9] PASS permutation invariance: max gap {worst:.1e}")
