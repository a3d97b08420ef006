import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from conftest import make_config
from metaalloc.config import DEFAULT_ROOMS, VRoomProfile
from metaalloc.env import MetaverseEnv
from metaalloc.immersion import AllocationDecision, beta_grid
from metaalloc.policies import (GcpVariant, MyopicOptimal, make_policy, policy_average,
                                policy_max, policy_random, policy_saving, run_episode)


def _env(**kw):
    return MetaverseEnv(make_config(msps=3, **kw))


def test_saving_examples():
    env = _env()
    assert policy_saving(env) == [AllocationDecision(20, 30, 0.5), AllocationDecision(30, 60, 0.5),
                                  AllocationDecision(25, 30, 0.3)]


def test_average_examples():
    lib, arena, gal = policy_average(_env())
    assert lib.bitrate == 23 and arena.framerate == 90 and gal.beta == 0.65
    assert lib == AllocationDecision(23, 45, 0.75)
    assert gal == AllocationDecision(30, 45, 0.65)


def test_max_examples():
    assert policy_max(_env()) == [AllocationDecision(25, 60, 1.0), AllocationDecision(50, 120, 1.0),
                                  AllocationDecision(35, 60, 1.0)]


def test_random_reproducible_and_admissible():
    env = _env()
    a = [policy_random(env, np.random.default_rng(4)) for _ in range(3)]
    b = [policy_random(env, np.random.default_rng(4)) for _ in range(3)]
    assert a == b
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert all(env.is_admissible(h, d) for h, d in enumerate(policy_random(env, rng)))


def test_random_marginals_uniform():
    env = MetaverseEnv(make_config(msps=1, room_sequence=["Arena"]))
    room = env.rooms[0]
    rng = np.random.default_rng(2024)
    draws = [policy_random(env, rng)[0] for _ in range(10_000)]
    grid = beta_grid(room, env.params)
    for values, support in (([d.bitrate for d in draws],
                             range(room.bitrate_min, room.bitrate_max + 1)),
                            ([d.framerate for d in draws],
                             range(room.framerate_min, room.framerate_max + 1)),
                            ([d.beta for d in draws], grid)):
        counts = [values.count(v) for v in support]
        assert sum(counts) == 10_000
        assert stats.chisquare(counts).pvalue > 0.01


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_dominance_ordering(seed):
    env = _env()
    env.reset(seed)
    picks = [policy_saving(env), policy_average(env), policy_max(env)]
    for h in range(env.n_heads):
        costs = [env.head_cost(h, p[h]) for p in picks]
        imms = [env.head_immersion(h, p[h]) for p in picks]
        assert costs == sorted(costs) and imms == sorted(imms)


def _myopic_env(room, clients, thr, budget=1e6):
    return MetaverseEnv(make_config(msps=1, room_sequence=[room], threshold=thr,
                                    initial_clients=[clients], budgets=[budget]))


@pytest.mark.parametrize("room,clients,thr", [("Library", 3, 0.6), ("Arena", 40, 0.75),
                                              ("Gallery", 10, 0.35), ("Library", 1, 0.95)])
def test_myopic_matches_oracle(room, clients, thr):
    env = _myopic_env(room, clients, thr)
    d = MyopicOptimal()(env)[0]
    r = env.rooms[0]
    assert (d.bitrate, d.framerate, d.beta) == oracles.brute_force_pick(r, clients, thr, r.eps_mid)


def test_myopic_tiny_grid():
    tiny = VRoomProfile(**{**DEFAULT_ROOMS["Library"].__dict__, "bitrate_max": 22,
                           "framerate_max": 32, "beta_max": 0.6})
    cfg = make_config(msps=1, room_sequence=["Library"], initial_clients=[5], threshold=0.5)
    cfg = cfg.with_overrides({"rooms.Library.bitrate_max": 22, "rooms.Library.framerate_max": 32,
                              "rooms.Library.beta_max": 0.6})
    env = MetaverseEnv(cfg)
    assert env.rooms[0] == tiny
    d = MyopicOptimal()(env)[0]
    assert (d.bitrate, d.framerate, d.beta) == oracles.brute_force_pick(tiny, 5, 0.5, tiny.eps_mid)


def test_myopic_tiny_threshold_is_cheapest_nonzero_point():
    # the all-minima point has I = 0, so any positive threshold excludes it
    env = _myopic_env("Arena", 20, 1e-12)
    d = MyopicOptimal()(env)[0]
    assert d == AllocationDecision(30, 60, 0.55)
    r = env.rooms[0]
    assert (d.bitrate, d.framerate, d.beta) == oracles.brute_force_pick(r, 20, 1e-12, r.eps_mid)


def test_myopic_budget_admission_declines_expensive_heads():
    cfg = make_config(msps=1, heads_per_msp=2, room_sequence=["Library", "Arena"],
                      initial_clients=[2, 80], budgets=[1.0], threshold=0.6)
    env = MetaverseEnv(cfg)
    picks = MyopicOptimal()(env)
    assert picks[0] is not None and picks[1] is None
    assert env.head_cost(0, picks[0]) <= 1.0


@pytest.mark.parametrize("name", ["saving", "average", "max", "random", "myopic"])
def test_all_policies_admissible(name):
    env = _env(cooperative=True, request_mode="continuous")
    for out in run_episode(env, make_policy(f"{name}-gcp", 3), 5):
        for h, d in enumerate(out.decisions):
            assert d is None or env.is_admissible(h, d)


def test_gcp_variant_donations():
    env = MetaverseEnv(make_config(msps=2, room_sequence=["Library", "Arena"], cooperative=True,
                                   initial_clients=[3, 90], budgets=[20.0, 0.5],
                                   request_mode="continuous"))
    pol = make_policy("max-gcp")
    assert isinstance(pol, GcpVariant) and pol.name == "max-gcp"
    act = pol.act(env)
    assert act.donations == [1.0, 0.0]
    _, _, _, out = env.step(act.decisions, act.donations)
    assert out.donation[0] == pytest.approx(20.0 - out.msp_cost[0])
    assert env.msps[0].budget == 0.0 and out.donation[1] == 0.0


def test_make_policy_names():
    for name in ["saving", "average", "avg", "max", "random", "myopic", "avg-gcp", "random-gcp"]:
        assert make_policy(name).name in (name, name.replace("avg", "average"))
    with pytest.raises(KeyError):
        make_policy("nope")


def test_plain_policy_never_donates():
    env = _env(cooperative=True)
    assert make_policy("max").act(env).donations == [0.0, 0.0, 0.0]
