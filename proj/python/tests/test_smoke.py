import json
import math

import numpy as np
import pytest

import pyalac


def test_version():
    assert pyalac.__version__ == pyalac.version()


def test_overrides_helper():
    assert pyalac.overrides(train__gamma=0.9, horizons=[5, 10]) == ["train.gamma=0.9", "horizons=5,10"]


def test_resolve_config_defaults_and_errors():
    cfg = pyalac.resolve_config()
    assert cfg["run.env"] == "lintrack"
    assert float(cfg["train.gamma"]) == 0.995
    with pytest.raises(ValueError, match="train.gamma"):
        pyalac.resolve_config(["gamma=1.5"])


def test_env_roundtrip():
    env = pyalac.make_env("cartpole-cost")
    assert env.state_dim == 4 and env.action_dim == 1
    s = env.reset(3)
    assert np.array_equal(s, env.reset(3))
    nxt, cost = env.step(env.equilibrium(), np.zeros(1))
    assert np.allclose(nxt, env.equilibrium())
    assert cost == 0.0
    assert "pole_mass" in pyalac.env_parameter_names("cartpole-cost")


def test_exact_lyapunov_matches_linear_solve():
    mdp = pyalac.random_mdp(5, 2, 0.9, seed=4)
    L = pyalac.exact_lyapunov(mdp)
    P = mdp.policy_transition()
    ref = np.linalg.solve(np.eye(5) - 0.9 * P, mdp.cost)
    assert np.allclose(L, ref, atol=1e-12)
    assert all(r["satisfied"] for r in pyalac.candidate_bound_check(mdp))


def test_theorem_checks():
    mdp = pyalac.random_mdp(4, 2, 0.5, seed=2)
    reps = pyalac.check_theorem3(mdp, 0.5, 0.5, [10, 30])
    assert len(reps) == 2 and all(r["satisfied"] for r in reps)
    reps = pyalac.check_theorem4(mdp, 0.5, 0.5, [10], 20, [0.1], 200, seed=1)
    assert len(reps) == 1 and reps[0]["satisfied"]


def test_tracking_time():
    assert pyalac.predicted_tracking_time(1.0, math.sqrt(2.0), 1.0) == pytest.approx(math.log(2.0))
    r = pyalac.simulate_tracking(2.0, 1.0, 0.5)
    assert r["satisfied"]
    assert r["value_at_predicted"] <= 1e-6


def test_short_training_and_eval(tmp_path):
    seen = []
    agent, metrics = pyalac.train(["total_steps=1500", "seed=3", "batch_size=32"], callback=seen.append)
    assert len(metrics) == 15 and len(seen) == 15
    assert all(0.0 <= m["lambda_l"] <= 1.0 for m in metrics)
    acts = agent.act(np.zeros((3, 2)))
    assert acts.shape == (3, 1)
    path = str(tmp_path / "agent.bin")
    agent.save(path)
    back = pyalac.load_agent(path)
    assert np.array_equal(back.act(np.ones((2, 2))), agent.act(np.ones((2, 2))))
    ev = pyalac.evaluate(back, pyalac.make_env("lintrack"), trials=3, seed=1)
    assert len(ev["cost_returns"]) == 3
    with pytest.raises(ValueError):
        pyalac.evaluate(back, pyalac.make_env("cartpole-cost"), trials=1)


def test_run_writes_manifest(tmp_path):
    code, log = pyalac.run("verify-lemma2", [f"run.out_dir={tmp_path}", "track_v0=0"])
    assert code == 0, log
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["check"] == "lemma2" and m["status"] == "ok"
    code, _ = pyalac.run("train", ["gamma=2"])
    assert code == 2
