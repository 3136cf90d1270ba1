import math

import numpy as np
import pytest

from waveheat.model import BetaSpec, PlantConfig
from waveheat.coupling import Measurement, build_table, find_gamma_zero
from waveheat.reduction import (GramianReport, build_reduced,
                                hyperbolic_order, kalman_controllable,
                                kalman_observable,
                                truncated_observability_gramian)


def test_hyperbolic_order():
    assert hyperbolic_order(0) == [0]
    assert hyperbolic_order(2) == [0, -1, 1, -2, 2]


def test_build_reduced_shapes_and_spectra(small_table, cfg_damped):
    rm = build_reduced(2, 4, 3, small_table, cfg_damped)
    assert rm.A0.shape == (2, 2)
    assert rm.A1.shape == (3, 3)
    assert np.asarray(rm.B1).reshape(-1).shape == (3,)
    assert np.asarray(rm.C0).reshape(-1).shape == (2,)
    # controller block spectrum: integrator zero plus retained heat modes
    eigs = sorted(np.linalg.eigvals(rm.A1).real)
    expect = sorted([0.0] + [cfg_damped.c - (n * math.pi) ** 2
                             for n in (1, 2)])
    assert np.allclose(eigs, expect, atol=1e-9)
    # residual block: heat modes N0+1..N then wave modes in ladder order
    n_par = 4 - 2
    assert rm.A2.shape[0] == n_par + 2 * 3 + 1
    assert rm.A2[0].real == pytest.approx(cfg_damped.c - (3 * math.pi) ** 2)


def test_build_reduced_requires_room(small_table, cfg_damped):
    with pytest.raises(ValueError):
        build_reduced(3, 3, 2, small_table, cfg_damped)


def test_kalman_controllable_generic(small_table, cfg_damped):
    rm = build_reduced(3, 4, 2, small_table, cfg_damped)
    rep = kalman_controllable(rm.A1, rm.B1)
    assert rep["controllable"]
    assert rep["rank"] == rm.A1.shape[0]
    assert rep["hautus_min"] > 1e-10


def test_kalman_detects_engineered_gamma_zero():
    zeros = find_gamma_zero(2, 1.0, 50.0, 1.0, 0.0, 0.05, 1.0)
    b = min(zeros, key=lambda z: abs(z - 0.586))
    cfg = PlantConfig(L=1.0, c=50.0, beta=BetaSpec.indicator(1.0, 0.0, b, 1.0),
                      alpha=1.5)
    meas = Measurement.distributed(
        lambda x: np.ones_like(np.asarray(x, dtype=float)))
    tab = build_table(cfg, meas, 8, 4)
    rm = build_reduced(2, 3, 2, tab, cfg)
    assert not kalman_controllable(rm.A1, rm.B1)["controllable"]


def test_kalman_observable_even_mode_blind_spot(small_table, cfg_damped):
    # a constant measurement profile cannot see even heat modes
    rm = build_reduced(2, 3, 2, small_table, cfg_damped)
    rep = kalman_observable(rm.A0, rm.C0)
    assert not rep["observable"]
    assert rep["rank"] == 1
    rm1 = build_reduced(1, 2, 2, small_table, cfg_damped)
    assert kalman_observable(rm1.A0, rm1.C0)["observable"]


def test_gramian_hermitian_psd(cfg_damped):
    rep = truncated_observability_gramian([1, 2, 3], [0, -1, 1, -2, 2],
                                          2.5, cfg_damped)
    assert isinstance(rep, GramianReport)
    G = np.array(rep.gramian.tolist(), dtype=complex)
    assert np.max(np.abs(G - G.conj().T)) < 1e-12 * np.max(np.abs(G))
    assert rep.min_eig > 0.0
    assert rep.max_eig >= rep.min_eig


def test_gramian_time_monotone(cfg_damped):
    # more observation time can only add energy
    short = truncated_observability_gramian([1, 2], [0, -1, 1], 1.5,
                                            cfg_damped)
    longer = truncated_observability_gramian([1, 2], [0, -1, 1], 3.0,
                                             cfg_damped)
    assert longer.min_eig >= short.min_eig * 0.999


def test_gramian_zero_mode_degenerates(cfg_damped):
    rep = truncated_observability_gramian([1, 2, 3], [0, -1, 1], 2.5,
                                          cfg_damped, zero_parabolic=(2,))
    assert rep.min_eig < 1e-14 * rep.max_eig
    assert rep.conditioning_warning
