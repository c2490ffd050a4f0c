from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probplan.belief import BeliefState, from_symbolic
from probplan.domains import Demonstration, TaskSpec, gen_demo, gen_stacking_task, stacking_env
from probplan.grounding import (
    ModularSgn,
    NoisyGrounder,
    NoisyOracleConfig,
    OracleGrounder,
    SgnGrounder,
    TrainConfig,
    atom_accuracy,
    encode_dataset,
    gradient_check,
    ground_demo_goal,
    load_checkpoint,
    load_dataset,
    noisy_ground,
    oracle_ground,
    save_checkpoint,
    save_dataset,
    train_sgn,
)
from probplan.planner import discretize_map, is_valid_blocksworld


def random_worlds(env, n, seed):
    """Worlds reached by short random walks, so held states appear too."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        s = env.random_initial(rng)
        for _ in range(int(rng.integers(0, 3))):
            ok = [a for a in env.actions if a.pre <= s]
            a = ok[rng.integers(len(ok))]
            s = (s - a.delete) | a.add
        out.append(env.world(s, rng=rng))
    return out


def labelled(worlds):
    return [(w.poses, w.symbolic) for w in worlds]


# -- oracles -------------------------------------------------------------------


def test_oracle_ground_stacked():
    env = stacking_env(3)
    w = env.world(env.state_from_towers([["b", "a"], ["c"]]))
    b = oracle_ground(w)
    assert b.is_deterministic()
    assert b["on(a,b)"] == 1.0 and b["clear(b)"] == 0.0
    assert discretize_map(b) == w.symbolic


def test_noisy_zero_sigma_stays_within_clamp():
    w = gen_stacking_task(4, 1).initial
    b = noisy_ground(w, NoisyOracleConfig(mode="logit", logit_sigma=0.0))
    truth = oracle_ground(w).probs
    np.testing.assert_allclose(b.probs, np.clip(truth, 0.02, 0.98), atol=1e-12)


def test_noisy_flip_values_and_determinism():
    w = gen_stacking_task(8, 1).initial
    cfg = NoisyOracleConfig(flip_prob=0.2, seed=4)
    a, b = noisy_ground(w, cfg), noisy_ground(w, cfg)
    assert a == b
    hi, lo = a.probs[a.probs > 0.5], a.probs[a.probs < 0.5]
    assert np.all((hi >= 0.85) & (hi <= 0.9)) and np.all((lo >= 0.1) & (lo <= 0.15))
    assert noisy_ground(w, NoisyOracleConfig(flip_prob=0.2, seed=5)) != a


def test_noisy_zero_flip_keeps_the_state():
    w = gen_stacking_task(8, 2).initial
    assert discretize_map(noisy_ground(w, NoisyOracleConfig(flip_prob=0.0))) == w.symbolic


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoisyOracleConfig(flip_prob=0.5)
    with pytest.raises(ValueError):
        NoisyOracleConfig(logit_sigma=-1.0)
    with pytest.raises(ValueError):
        NoisyOracleConfig(mode="gauss")


def test_flip_noise_breaks_validity_often():
    # regression value: the share of invalid discretized 8-block states at flip 0.3
    env = stacking_env(8)
    worlds = random_worlds(env, 1000, seed=0)
    cfg = NoisyOracleConfig(flip_prob=0.3, seed=0)
    invalid = sum(not is_valid_blocksworld(discretize_map(noisy_ground(w, cfg)), env.universe) for w in worlds)
    assert invalid / 1000 >= 0.30


def test_episode_grounders_are_cached_and_keyed():
    w = gen_stacking_task(5, 0).initial
    g = NoisyGrounder(NoisyOracleConfig(flip_prob=0.2))
    e1, e2 = g.for_episode("a"), g.for_episode("b")
    assert e1.ground(w) is e1.ground(w)
    assert e1.ground(w) == g.for_episode("a").ground(w)
    assert e1.ground(w) != e2.ground(w)


# -- goal grounding ------------------------------------------------------------------


def test_demo_goal_from_final_frame():
    t = gen_stacking_task(6, 3)
    demo = gen_demo(t)
    oracle = OracleGrounder()
    g = ground_demo_goal(oracle, demo)
    assert g == from_symbolic(t.goal, t.env.universe)
    assert ground_demo_goal(oracle, demo, smoothing=1) == g
    one = Demonstration(t.id, demo.frames[-1:], ())
    assert ground_demo_goal(oracle, one) == oracle.ground(demo.frames[-1])


def test_demo_goal_smoothing_averages():
    t = gen_stacking_task(4, 3)
    demo = gen_demo(t)
    oracle = OracleGrounder()
    k = min(3, len(demo.frames))
    mean = np.mean([oracle.ground(f).probs for f in demo.frames[-k:]], axis=0)
    np.testing.assert_allclose(ground_demo_goal(oracle, demo, smoothing=k).probs, mean)
    with pytest.raises(ValueError):
        ground_demo_goal(oracle, demo, smoothing=0)


# -- network -------------------------------------------------------------------------


def test_fresh_model_outputs_in_open_interval():
    env = stacking_env(3)
    ws = random_worlds(env, 20, 1)
    m = ModularSgn(env.objects, env.universe, ws[0].poses.features().size)
    p = m.predict(np.stack([w.poses.features() for w in ws]))
    assert np.all((p > 0) & (p < 1))
    b = SgnGrounder(m).ground(ws[0])
    assert isinstance(b, BeliefState) and len(b) == len(env.universe)


def test_predicate_modules_are_shared():
    env = stacking_env(3)
    m = ModularSgn(env.objects, env.universe, 12)
    assert m.atom_module("clear(a)") == m.atom_module("clear(b)") == "clear"
    # perturbing f_clear changes every clear atom and nothing else
    X = np.random.default_rng(0).normal(size=(4, 12))
    before = m.predict(X)
    m.predicate_params("clear")["b2"][...] += 1.0
    after = m.predict(X)
    changed = np.flatnonzero(np.any(before != after, axis=0))
    assert sorted(changed.tolist()) == sorted(env.clear.values())


def test_parameter_count_is_sum_of_modules():
    for n in (2, 3, 5):
        env = stacking_env(n)
        D, H, E = 4 * n, 128, 32
        m = ModularSgn(env.objects, env.universe, D, H, E)
        obj = D * H + H + H * E + E
        pred = {1: E * H + 2 * H + 1, 2: 2 * E * H + 2 * H + 1, 0: E * H + 2 * H + 1}
        arity = {"on": 2, "ontable": 1, "clear": 1, "holding": 1, "handempty": 0}
        assert m.n_params == n * obj + sum(pred[a] for a in arity.values())
        assert m.n_params == sum(m.module_sizes().values())
        assert len(m.module_sizes()) == n + 5


def test_equal_object_modules_give_symmetric_outputs():
    env = stacking_env(2)
    m = ModularSgn(env.objects, env.universe, 8, seed=3)
    for k, v in m.object_params("a").items():
        m.object_params("b")[k][...] = v
    X = np.random.default_rng(1).normal(size=(5, 8))
    p = m.predict(X)
    u = env.universe
    np.testing.assert_allclose(p[:, u.id("clear(a)")], p[:, u.id("clear(b)")])
    np.testing.assert_allclose(p[:, u.id("on(a,b)")], p[:, u.id("on(b,a)")])
    np.testing.assert_allclose(p[:, u.id("holding(a)")], p[:, u.id("holding(b)")])


def test_gradient_check():
    env = stacking_env(3)
    data = labelled(random_worlds(env, 6, 2))
    m = ModularSgn(env.objects, env.universe, data[0][0].features().size, seed=1)
    X, Y = encode_dataset(data, env.universe)
    assert gradient_check(m, X, Y, n_coords=10, seed=0) < 1e-4
    assert gradient_check(m, X, Y, n_coords=10, seed=1) < 1e-4


def test_memorize_single_sample():
    env = stacking_env(2)
    data = labelled(random_worlds(env, 1, 3))
    _, hist = train_sgn(data, env.universe, TrainConfig(epochs=300, lr=3e-3, hidden=32, embed=8))
    assert hist.train_loss[-1] < 0.01
    assert hist.n_val == 0


def test_training_loss_non_increasing_on_small_set():
    env = stacking_env(2)
    data = labelled(random_worlds(env, 10, 4))
    cfg = TrainConfig(epochs=60, lr=1e-3, batch_size=10, val_fraction=0.0, hidden=32, embed=8)
    _, hist = train_sgn(data, env.universe, cfg)
    diffs = np.diff(hist.train_loss)
    assert np.all(diffs <= 1e-6)


def test_training_is_deterministic():
    env = stacking_env(2)
    data = labelled(random_worlds(env, 30, 5))
    cfg = TrainConfig(epochs=5, hidden=16, embed=8)
    m1, h1 = train_sgn(data, env.universe, cfg)
    m2, h2 = train_sgn(data, env.universe, cfg)
    assert h1.train_loss == h2.train_loss and h1.val_loss == h2.val_loss
    assert np.array_equal(m1.params, m2.params)


def test_two_block_accuracy():
    env = stacking_env(2)
    train = labelled(random_worlds(env, 500, 6))
    held = labelled(random_worlds(env, 200, 7))
    m, hist = train_sgn(train, env.universe, TrainConfig(epochs=60))
    assert atom_accuracy(m, held) >= 0.99
    assert len(hist.val_loss) == 60


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_errors():
    env = stacking_env(2)
    with pytest.raises(ValueError):
        train_sgn([], env.universe)
    data = labelled(random_worlds(env, 4, 8))
    with pytest.raises(FloatingPointError):
        train_sgn(data, env.universe, TrainConfig(epochs=3, lr=1e300, hidden=8, embed=4))
    with pytest.raises(ValueError):
        TrainConfig(lr=0)


def test_checkpoint_round_trip_and_bytes(tmp_path):
    env = stacking_env(2)
    data = labelled(random_worlds(env, 20, 9))
    m, _ = train_sgn(data, env.universe, TrainConfig(epochs=3, hidden=16, embed=8))
    p1 = save_checkpoint(m, tmp_path / "a.ckpt")
    p2 = save_checkpoint(load_checkpoint(p1), tmp_path / "b.ckpt")
    assert p1.read_bytes() == p2.read_bytes()
    m2 = load_checkpoint(p1)
    X, _ = encode_dataset(data, env.universe)
    assert np.array_equal(m.predict(X), m2.predict(X))
    (tmp_path / "bad.ckpt").write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad.ckpt")


def test_dataset_jsonl_round_trip(tmp_path):
    env = stacking_env(3)
    data = labelled(random_worlds(env, 5, 10))
    path = save_dataset(data, env.universe, tmp_path / "d.jsonl")
    back = load_dataset(path, env.universe)
    assert [s for _, s in back] == [s for _, s in data]
    assert all(a == b for (a, _), (b, _) in zip(back, data))


def test_sgn_grounder_rejects_other_universe():
    m = ModularSgn(stacking_env(2).objects, stacking_env(2).universe, 8)
    with pytest.raises(ValueError):
        SgnGrounder(m).ground(gen_stacking_task(3, 0).initial)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), flip=st.floats(0.0, 0.49), sigma=st.floats(0.0, 3.0))
def test_grounder_outputs_are_valid_beliefs(seed, flip, sigma):
    w = gen_stacking_task(4, seed).initial
    for cfg in (NoisyOracleConfig(flip_prob=flip, seed=seed), NoisyOracleConfig(mode="logit", logit_sigma=sigma, seed=seed)):
        b = noisy_ground(w, cfg)
        assert len(b) == len(w.env.universe)
        assert np.all((b.probs >= 0) & (b.probs <= 1))
