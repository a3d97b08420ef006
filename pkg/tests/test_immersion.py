import itertools
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from metaalloc.config import DEFAULT_ROOMS, ConfigError, GlobalParams, VRoomProfile
from metaalloc.immersion import (AllocationDecision, DomainError, beta_grid, dt_accuracy,
                                 dt_accuracy_norm, framerate_norm, immersion, qope, snap_beta,
                                 ssim, temporal_accuracy, vmaf)

P = GlobalParams()
LIB, ARENA, GAL = DEFAULT_ROOMS["Library"], DEFAULT_ROOMS["Arena"], DEFAULT_ROOMS["Gallery"]
unit = st.floats(0.0, 1.0, allow_nan=False)


def test_room_table_values():
    # rows of the VRoom parameter table, transcribed
    assert (LIB.bitrate_min, LIB.bitrate_max, ARENA.bitrate_min, ARENA.bitrate_max,
            GAL.bitrate_min, GAL.bitrate_max) == (20, 25, 30, 50, 25, 35)
    assert (LIB.framerate_min, LIB.framerate_max, ARENA.framerate_max) == (30, 60, 120)
    assert (LIB.eps_min, ARENA.eps_min, GAL.eps_min) == (0.6, 0.5, 0.8)
    assert (GAL.beta_min, GAL.beta_max) == (0.3, 1.0)
    assert (ARENA.omega, ARENA.w_sigma, ARENA.w_eta) == (720, 0.3, 0.7)
    assert (LIB.theta_comp, LIB.theta_net, GAL.theta_net) == (0.7, 0.9, 0.8)
    assert (GAL.lambda_density, GAL.iota, ARENA.iota) == (0.7, 0.8, 0.5)
    assert (ARENA.polygons, ARENA.objects, ARENA.interaction_points) == (5e5, 200, 30)
    assert (LIB.sensors, LIB.state_vars, LIB.update_freq) == (50, 30, 2)
    assert (LIB.capacity, ARENA.capacity, GAL.capacity) == (10, 100, 10)
    for r in (LIB, ARENA, GAL):
        assert (r.arrival_rate, r.departure_rate) == (0.4, 0.7)
        assert math.isclose(r.w_q + r.w_f + r.w_a, 1.0, abs_tol=1e-12)


def test_global_table_values():
    assert P.ssim_coeffs == (0.65, 0.368, 1.23e-3, 0.85, 1.23e-3)
    assert P.vmaf_coeffs == (36.13, -1.66e-2, 11.62, -6.07e-3)
    assert (P.k_comp, P.k_net, P.phi_dt, P.tau_fixed) == (0.01, 0.01, 0.1, 1.0)
    assert (P.p_max, P.o_max, P.a_max, P.n_max, P.sv_max, P.u_max) == (1e5, 100, 10, 100, 100, 10)
    assert P.beta_grid_step == 0.05


def test_ssim_reference_point():
    assert ssim(20, 400, P) == pytest.approx(0.98456, abs=5e-5)
    assert ssim(20, 400, P) == pytest.approx(oracles.ssim(20, 400), rel=1e-12)


def test_ssim_limits():
    assert 1 - 1e-6 < ssim(1e12, 400, P) < 1.0
    assert ssim(1e-6, 400, P) == P.ssim_coeffs[0]


def test_vmaf_clamps_to_100():
    raw = 36.13 - 1.66e-2 * 400 + 11.62 * 20 - 6.07e-3 * 400 * 20
    assert raw == pytest.approx(213.3, abs=0.1)
    assert vmaf(20, 400, P) == 100.0


@pytest.mark.parametrize("omega", [400, 720])
def test_vmaf_slope_sign(omega):
    j = P.vmaf_coeffs
    assert j[2] + j[3] * omega > 0
    vals = [vmaf(b, omega, P) for b in range(1, 60)]
    assert vals == sorted(vals)


@pytest.mark.parametrize("fn", [ssim, vmaf])
@pytest.mark.parametrize("bad", [0, -3])
def test_nonpositive_bitrate_rejected(fn, bad):
    with pytest.raises(DomainError):
        fn(bad, 400, P)


def test_qope_endpoints_and_monotone(room):
    assert qope(room.bitrate_min, room, P)[1] == 0.0
    assert qope(room.bitrate_max, room, P)[1] == 1.0
    with pytest.raises(DomainError):
        qope(room.bitrate_max + 1, room, P)


def test_qope_library_tabulated():
    table = [qope(b, LIB, P)[1] for b in range(20, 26)]
    assert table == [pytest.approx(oracles.q_hat(b, LIB), rel=1e-12) for b in range(20, 26)]
    assert 0.0 < qope(22, LIB, P)[1] < 1.0
    assert table == sorted(table)


def test_qope_degenerate_range_maps_to_one():
    flat = VRoomProfile(**{**LIB.__dict__, "bitrate_max": 20})
    assert qope(20, flat, P)[1] == 1.0


def test_framerate_norm():
    assert framerate_norm(90, ARENA) == 0.5
    assert framerate_norm(30, LIB) == 0.0 and framerate_norm(60, LIB) == 1.0
    with pytest.raises(DomainError):
        framerate_norm(29, LIB)


@pytest.mark.parametrize("args,expected", [((1, 1, 1), 1.0), ((0, 0.9, 1), 0.0),
                                           ((0.5, 0.5, 0.5), 0.5)])
def test_dt_accuracy_examples(args, expected):
    assert dt_accuracy(*args) == pytest.approx(expected, rel=1e-15)


def test_dt_accuracy_rejects_out_of_range():
    with pytest.raises(DomainError):
        dt_accuracy(1.2, 0.5, 1)


@given(unit, unit, unit)
def test_dt_accuracy_weakest_link(e, b, t):
    a = dt_accuracy(e, b, t)
    assert 0.0 <= a <= 3 * min(e, b, t) + 1e-12
    assert a <= 1.0 + 1e-12
    if 0.0 in (e, b, t):
        assert a == 0.0


def test_temporal_accuracy_examples():
    assert temporal_accuracy([0, 0], 1.0) == 0.0
    assert temporal_accuracy([1, 2], 1.0) == pytest.approx(0.748393, abs=1e-6)
    assert temporal_accuracy([1, 2], 1.0) == pytest.approx(oracles.tau([1, 2], 1.0), rel=1e-12)
    assert temporal_accuracy([1e6], 1.0) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        temporal_accuracy([], 1.0)
    with pytest.raises(DomainError):
        temporal_accuracy([1.0], 0.0)


def test_beta_grid():
    assert beta_grid(LIB, P) == [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0]
    assert len(beta_grid(GAL, P)) == 15
    assert snap_beta(0.65, GAL, P) == 0.65
    assert snap_beta(0.625, LIB, P) == 0.6  # ties go down
    assert snap_beta(0.0, LIB, P) == 0.5


def test_immersion_at_maxima_is_one(room):
    d = AllocationDecision(room.bitrate_max, room.framerate_max, room.beta_max)
    assert immersion(d, room.eps_max, room, P).immersion == pytest.approx(1.0, abs=1e-12)


def test_immersion_at_minima_is_zero(room):
    d = AllocationDecision(room.bitrate_min, room.framerate_min, room.beta_min)
    br = immersion(d, room.eps_mid, room, P)
    assert br.qope_norm == 0.0 and br.framerate_norm == 0.0 and br.dt_accuracy_norm == 0.0
    assert br.immersion == 0.0


def test_immersion_library_composite():
    d = AllocationDecision(25, 60, 1.0)
    expected = LIB.w_q + LIB.w_f + LIB.w_a * oracles.a_hat(1.0, 1.0, 1.0, LIB)
    assert immersion(d, 1.0, LIB, P).immersion == pytest.approx(expected, rel=1e-12)


def test_immersion_rejects_off_bounds_beta():
    with pytest.raises(DomainError):
        immersion(AllocationDecision(20, 30, 0.2), 0.8, LIB, P)


def _grid(room):
    return itertools.product(range(room.bitrate_min, room.bitrate_max + 1),
                             range(room.framerate_min, room.framerate_max + 1),
                             beta_grid(room, P))


def test_full_grid_ranges_and_oracle(room):
    e0 = P.ssim_coeffs[0]
    eps = room.eps_mid
    for b, f, beta in _grid(room):
        br = immersion(AllocationDecision(b, f, beta), eps, room, P, tau=1.0)
        assert e0 <= br.ssim <= 1.0
        assert 0.0 <= br.vmaf <= 100.0
        for v in (br.qope_norm, br.framerate_norm, br.dt_accuracy_norm, br.immersion):
            assert 0.0 <= v <= 1.0
        assert br.immersion == pytest.approx(oracles.immersion(b, f, beta, eps, room), rel=1e-9,
                                             abs=1e-12)


def test_immersion_monotone_in_each_control(room):
    eps = room.eps_mid
    betas = beta_grid(room, P)
    bs = range(room.bitrate_min, room.bitrate_max + 1)
    fs = range(room.framerate_min, room.framerate_max + 1)
    val = {(b, f, beta): immersion(AllocationDecision(b, f, beta), eps, room, P).immersion
           for b in bs for f in fs for beta in betas}
    for (b, f, beta), v in val.items():
        if b + 1 in bs:
            assert val[(b + 1, f, beta)] >= v
        if f + 1 in fs:
            assert val[(b, f + 1, beta)] >= v
        k = betas.index(beta)
        if k + 1 < len(betas):
            assert val[(b, f, betas[k + 1])] >= v


def test_dt_norm_spans_controllable_range(room):
    assert dt_accuracy_norm(room.eps_mid, room.beta_min, 1.0, room) == 0.0
    assert dt_accuracy_norm(room.eps_mid, room.beta_max, 1.0, room) == 1.0


def test_pure_and_deterministic():
    d = AllocationDecision(40, 100, 0.75)
    assert immersion(d, 0.7, ARENA, P) == immersion(d, 0.7, ARENA, P)


def test_invalid_profile_rejected():
    with pytest.raises(ConfigError):
        VRoomProfile(**{**LIB.__dict__, "w_q": 0.5})
