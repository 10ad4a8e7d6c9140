"""Smoke test for the `racer` Python module.

Build and install first:  pip install --no-build-isolation ./crates/py
"""

import tempfile
from pathlib import Path

import racer

traj = racer.generate("oscillatory", duration=120.0, noise_std=0.0, seed=3, params=racer.OvrvParams.min_gap())
assert len(traj) == 1200 and abs(traj.dt - 0.1) < 1e-12

params, rmse = racer.calibrate(traj, budget=20000)
truth = racer.OvrvParams.min_gap()
assert abs(params.k1 - truth.k1) < 1e-3 and rmse < 1e-4, (params, rmse)
dv, ds, dr = params.rdc_derivatives()
assert dv < 0 < ds and dr > 0

sim = racer.rollout(params, traj)
assert sim["crash"] is None and sim["rmse"]["spacing"] < 0.05

config = {
    "max_epochs": 3,
    "learning_rate": 0.01,
    "net": {"seq_len": 5, "lstm_layers": 1, "lstm_hidden": 8, "seq_head": 8, "phy_hidden": [8]},
}
model = racer.train(traj, kind="racer", config=config, seed=1)
history = model.history()
assert len(history["epochs"]) == 3 and history["epochs"][-1]["p_speed"] is not None

window = [(traj.spacing[i], traj.lead_speed[i] - traj.follow_speed[i], traj.follow_speed[i]) for i in range(5)]
a = model.predict(window)

with tempfile.TemporaryDirectory() as d:
    model.save(Path(d) / "model")
    assert racer.Model.load(Path(d) / "model").predict(window) == a

summary = racer.audit(model, traj)
assert summary["samples"] > 0 and 0.0 <= summary["any"]["rate"] <= 1.0
print(racer.audit(params, traj))

try:
    racer.generate("zigzag")
except ValueError as e:
    assert "kind" in str(e)
else:
    raise AssertionError("invalid kind accepted")

print("racer", racer.__version__, "smoke test passed")
