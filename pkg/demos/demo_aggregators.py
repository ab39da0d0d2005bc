"""Walk through each aggregation strategy on the same stream of updates.

Three simulated clients send gradient-like updates for five rounds. For each
strategy we print the first few components of the combined update so the
differences in weighting behaviour are visible side by side:

- fedavg:      sample-count weighted mean, no state
- fedopt:      server-side Adam/Adagrad/Yogi on the mean update
- fedams:      Adam with a running element-wise max of the second moment
- ewwa:        per-client moments with an element-wise softmax over clients
- fedadp:      scalar weights from smoothed client/mean gradient angles
- fedboosting: scalar weights from cross-validated client model quality
"""
import numpy as np

from fedsim.aggregators import (
    AggregatorConfig,
    ewwa_aggregate,
    fedadp_aggregate,
    fedams_aggregate,
    fedavg_aggregate,
    fedboosting_aggregate,
    fedopt_aggregate,
    initial_state,
)
from fedsim.tensors import ParameterSet, mean
from fedsim.training import ClientUpdate

SIZE = 8
ROUNDS = 5


def make_updates(rng, round_num):
    """Client 0 is low-noise, client 2 is noisy and over-represented."""
    base = np.sin(np.arange(SIZE) + 0.3 * round_num)
    updates = []
    for cid, (noise, samples) in enumerate([(0.05, 40), (0.3, 40), (1.0, 120)]):
        grad = base + rng.normal(scale=noise, size=SIZE)
        updates.append(ClientUpdate(client_id=cid, pseudo_gradient=ParameterSet(
            [("w", (SIZE,), grad)]), num_samples=samples,
            train_loss=1.0 / round_num, train_accuracy=0.6 + 0.05 * cid))
    return updates


def show(label, combined):
    head = ", ".join(f"{x:+.4f}" for x in combined.to_flat()[:4])
    print(f"  {label:<16s} [{head}, ...]")


def main():
    rng = np.random.default_rng(42)
    template = ParameterSet([("w", (SIZE,), np.zeros(SIZE))])

    states = {name: initial_state(template)
              for name in ("fedopt", "fedams", "ewwa", "fedadp")}
    configs = {
        "fedopt": AggregatorConfig(strategy="fedopt", variant="adam"),
        "fedams": AggregatorConfig(strategy="fedams"),
        "ewwa": AggregatorConfig(strategy="ewwa", variant="adam"),
        "fedadp": AggregatorConfig(strategy="fedadp"),
    }

    for r in range(1, ROUNDS + 1):
        updates = make_updates(rng, r)
        print(f"round {r}")
        show("fedavg", fedavg_aggregate(updates))
        for name in ("fedopt", "fedams", "ewwa"):
            fn = {"fedopt": fedopt_aggregate, "fedams": fedams_aggregate,
                  "ewwa": ewwa_aggregate}[name]
            combined, states[name] = fn(updates, states[name], configs[name])
            show(name, combined)
        round_mean = mean([u.pseudo_gradient for u in updates])
        combined, states["fedadp"] = fedadp_aggregate(
            updates, states["fedadp"], configs["fedadp"], round_mean)
        show("fedadp", combined)
        # a made-up cross-validation accuracy matrix: row i = client i's
        # model evaluated on each client's held-out split
        cross_val = rng.uniform(0.5, 0.95, size=(3, 3))
        train_acc = np.array([u.train_accuracy for u in updates])
        show("fedboosting", fedboosting_aggregate(updates, cross_val,
                                                  train_acc))

    print("\nsmoothed client angles after the run (fedadp):")
    for cid, angle in sorted(states["fedadp"].smoothed_angles.items()):
        print(f"  client {cid}: {angle:.4f} rad")


if __name__ == "__main__":
    main()
