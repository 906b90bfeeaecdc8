#!/usr/bin/env python3
"""Smoke test of the litechain_py extension module.

Builds nothing itself: it expects `cargo build -p litechain-py --release`
to have produced target/release/liblitechain_py.so, copies that next to
this script as litechain_py.so, imports it, and exercises the bound
functions against known values.
"""

import json
import math
import shutil
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parent


def ensure_module() -> None:
    module = HERE / "litechain_py.so"
    candidates = [
        ROOT / "target" / "release" / "liblitechain_py.so",
        ROOT / "target" / "debug" / "liblitechain_py.so",
    ]
    built = next((c for c in candidates if c.exists()), None)
    if built is None:
        sys.exit(
            "liblitechain_py.so not found; run `cargo build -p litechain-py --release` first"
        )
    if not module.exists() or built.stat().st_mtime > module.stat().st_mtime:
        shutil.copy2(built, module)
    sys.path.insert(0, str(HERE))


def approx(a: float, b: float, tol: float = 1e-9) -> None:
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main() -> None:
    ensure_module()
    import litechain_py as lc

    # Hash identifiers are deterministic and 32 bytes.
    digest = lc.canonical_hash([1.0, -2.5, 3.25])
    assert isinstance(digest, bytes) and len(digest) == 32
    assert digest == lc.canonical_hash([1.0, -2.5, 3.25])
    assert digest != lc.canonical_hash([1.0, -2.5, 3.26])

    # Security metric: binomial closed form and oracle agreement.
    approx(lc.security_enum([0.9, 0.9, 0.9, 0.9]), 0.9477, 1e-12)
    approx(lc.security_dft([0.9, 0.9, 0.9, 0.9]), 0.9477, 1e-9)
    hetero = [0.9, 0.8, 0.7, 0.95, 0.85]
    approx(lc.security_dft(hetero), lc.security_enum(hetero), 1e-9)
    assert lc.security_dft([0.3, 0.5, 0.7], fault_budget=3) == 1.0

    # Radio model identities.
    approx(lc.path_loss_gain(100.0), 3.802022235558628e-10, 1e-18)
    rate_near = lc.shannon_rate(50.0)
    rate_far = lc.shannon_rate(500.0)
    assert rate_near > rate_far > 0.0

    # Communication-complexity closed form.
    one_tier, clustered, reduction = lc.comm_complexity(40, 4, 1400.0, 2048.0)
    assert one_tier > clustered
    approx(reduction, lc.max_reduction(40, 1400.0, 2048.0), 0.0)
    assert lc.reduction_identity_holds(123, 1400.0, 2048.0)

    # Consensus arithmetic and staleness weights.
    assert lc.commit_threshold(4) == 3
    assert lc.commit_threshold(7) == 5
    assert lc.staleness_weight(0.25, 0.5, 4, 7) == 0.125

    # Reputation normalization spans the configured band.
    rels = lc.normalize_reputation({0: 10.0, 1: 20.0, 2: 70.0})
    approx(rels[0], 0.1, 1e-12)
    approx(rels[2], 0.99, 1e-12)

    # Clustering game on a small high-reliability network.
    devices = []
    for i in range(8):
        devices.append(
            (100.0 + 97.0 * i, 50.0 + 41.0 * (i % 3), [1e9, 2e9][i % 2], 0.95)
        )
    assignments, committee, welfare = lc.cluster_network(devices)
    assert len(assignments) == 8
    assert len(committee) >= 4
    assert welfare > 0.0
    for cluster, head in committee.items():
        assert assignments[head] == cluster

    # The default scenario parses back, and a tiny explicit scenario runs
    # end to end through the TOML interface.
    default_summary = lc.default_scenario_toml()
    assert "broadcast_coef = 0.5" in default_summary
    config = """
seed = 5
scheme = "litechain"

[network]
devices = 10
reliability_range = [0.9, 0.99]

[data]
train_samples = 500
test_samples = 200
verify_samples = 100
blob_noise = 2.5

[fl]
learning_rate = 0.05
local_steps = 5
batch_size = 32

[protocol]
update_every = 4
reliability_floor = 0.5

[stop]
target_accuracy = 2.0
max_rounds = 6
"""
    result = lc.run_scenario(config)
    assert result.rounds_run == 6
    assert result.clusters >= 4
    summary = json.loads(result.summary)
    assert summary["devices"] == 10
    assert result.metrics_csv.splitlines()[0].startswith("round,sim_time")
    assert len(result.ledger_jsonl.splitlines()) >= 1
    assert 0.0 <= result.final_accuracy <= 1.0

    # Determinism through the bindings.
    again = lc.run_scenario(config)
    assert again.metrics_csv == result.metrics_csv

    print("smoke test: all checks passed")
    print(f"  sample digest       {digest.hex()[:16]}...")
    print(f"  clusters            {result.clusters}")
    print(f"  final accuracy      {result.final_accuracy:.4f}")
    print(f"  security(4 x 0.9)   {lc.security_dft([0.9] * 4):.4f}")
    assert not math.isnan(welfare)


if __name__ == "__main__":
    main()
