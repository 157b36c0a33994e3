import json

import numpy as np
import pytest

from expstab.dde_sim import (
    DelayFunction,
    Trajectory,
    check_envelope,
    estimate_decay_rate,
    sector_ratios,
    simulate,
)
from expstab.errors import DegenerateWindow, InvalidParams, NonFinite, StepTooLarge
from expstab.model import EXAMPLE1, EXAMPLE2, NetworkModel


def decoupled(c):
    n = len(c)
    return NetworkModel(np.zeros((n, n)), np.zeros((n, n)), c, np.ones(n))


def test_linear_decay_closed_form():
    c = np.array([1.5, 0.7, 3.0])
    z0 = np.array([1.0, -2.0, 0.5])
    tr = simulate(decoupled(c), DelayFunction(1.0, 0.4, 2.0), z0, t_end=5.0, dt=1e-3)
    assert np.abs(tr.z - np.exp(-np.outer(tr.t, c)) * z0).max() < 1e-8


def test_delay_function_properties():
    d = DelayFunction(2.8674, 0.8, 1.0)
    assert d.h_min == pytest.approx(2.0674) and d.h_max == pytest.approx(3.6674)
    assert d.rate_bound == pytest.approx(0.8)
    assert d.admissible(3.6674, 0.8) and not d.admissible(3.6, 0.8)
    t = np.linspace(0, 20, 1001)
    assert np.all(d(t) >= d.h_min - 1e-12) and np.all(d(t) <= d.h_max + 1e-12)
    with pytest.raises(InvalidParams):
        DelayFunction(0.5, 0.8, 1.0)
    with pytest.raises(InvalidParams):
        DelayFunction(1.0, -0.1)


def test_step_too_large():
    with pytest.raises(StepTooLarge):
        simulate(EXAMPLE1, DelayFunction(0.01), [1, 1], t_end=1.0, dt=0.005)


def test_bad_inputs():
    with pytest.raises(InvalidParams):
        simulate(EXAMPLE1, DelayFunction(1.0), [1, 1, 1])
    with pytest.raises(InvalidParams):
        simulate(EXAMPLE1, DelayFunction(1.0), [1, 1], t_end=-1)


def test_overflow_reported():
    # tanh saturates, so only absurd gains can overflow
    blowup = NetworkModel(np.array([[1e300]]), np.zeros((1, 1)), [1.0], [1e300])
    with pytest.raises(NonFinite):
        simulate(blowup, DelayFunction(0.5), [1.0], t_end=1.0, dt=0.1)


def test_fourth_order_with_constant_delay():
    finals = [simulate(EXAMPLE1, DelayFunction(1.0), [1.0, -1.0], t_end=4.0, dt=dt).z[-1]
              for dt in (8e-3, 4e-3, 2e-3)]
    order = np.log2(np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2]))
    assert order >= 3.5


def test_sector_property_along_trajectory():
    tr = simulate(EXAMPLE2, DelayFunction(2.8674, 0.8, 1.0), [-1, -0.5, 0.5, 1], t_end=10.0)
    ratio, L = sector_ratios(EXAMPLE2, tr.z)
    assert np.all(ratio >= 0) and np.all(ratio <= L + 1e-15)


def test_decay_rate_of_pure_exponential():
    t = np.linspace(0, 10, 501)
    tr = Trajectory(t, np.outer(np.exp(-0.7 * t), [3.0, -4.0]), np.ones_like(t), np.array([3.0, -4.0]))
    assert estimate_decay_rate(tr, (1, 9)) == pytest.approx(0.7, abs=1e-6)


def test_decay_rate_of_constant_trajectory():
    t = np.linspace(0, 10, 101)
    tr = Trajectory(t, np.ones((101, 2)), np.ones_like(t), np.ones(2))
    assert estimate_decay_rate(tr) == pytest.approx(0.0, abs=1e-12)


def test_degenerate_windows():
    t = np.linspace(0, 10, 101)
    tr = Trajectory(t, np.ones((101, 2)), np.ones_like(t), np.ones(2))
    with pytest.raises(DegenerateWindow):
        estimate_decay_rate(tr, (0, 0.5))
    z = np.ones((101, 2))
    z[50] = 0
    with pytest.raises(DegenerateWindow):
        estimate_decay_rate(Trajectory(t, z, np.ones_like(t), np.ones(2)))


def test_envelope_fails_when_too_tight():
    # slow mode decays at 0.2; ask for 0.5 with H = 1
    tr = simulate(decoupled(np.array([0.2, 2.0])), DelayFunction(1.0), [1.0, 1.0], t_end=10.0, dt=1e-2)
    assert not check_envelope(tr, 1.0, 0.5).passed
    assert check_envelope(tr, 1.0, 0.19).passed


def test_envelope_on_zero_trajectory():
    t = np.linspace(0, 1, 11)
    tr = Trajectory(t, np.zeros((11, 2)), np.ones_like(t), np.zeros(2))
    assert check_envelope(tr, 1.0, 3.0).passed
    with pytest.raises(InvalidParams):
        check_envelope(tr, 0.5, 1.0)


def test_csv_and_sidecar(tmp_path):
    tr = simulate(EXAMPLE1, DelayFunction(1.0), [1.0, -1.0], t_end=1.0, dt=0.01)
    tr.write_csv(tmp_path / "t.csv")
    tr.write_sidecar(tmp_path / "t.json")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,z_1,z_2,norm,h"
    assert len(lines) == 102
    meta = json.loads((tmp_path / "t.json").read_text())
    assert meta["delay"] == {"h0": 1.0, "amplitude": 0.0, "frequency": 0.0}
    assert meta["z0"] == [1.0, -1.0] and meta["history"] == "constant"


def test_simulation_is_deterministic():
    a = simulate(EXAMPLE1, DelayFunction(1.0, 0.2, 1.0), [1.0, -1.0], t_end=2.0)
    b = simulate(EXAMPLE1, DelayFunction(1.0, 0.2, 1.0), [1.0, -1.0], t_end=2.0)
    np.testing.assert_array_equal(a.z, b.z)
