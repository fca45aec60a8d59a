import math

import numpy as np
import pytest

from hdgz.materials import preset
from hdgz.scenarios import (ScenarioConfig, ScenarioError, SourceModel,
                            four_lobe_signature, max_p_speed,
                            poroelastic_config, run_scenario,
                            thermoelastic_config, wavefront_probe,
                            write_energy_csv, write_vtk_lattice)


def vertical(radius=10.0, amplitude=1e4, f0=5.0, t0=0.3):
    return SourceModel(kind="vertical_gaussian", center=(0.0, 0.0),
                       radius=radius, amplitude=amplitude, f0=f0, t0=t0)


def shear(radius=10.0):
    return SourceModel(kind="moment_shear", center=(0.0, 0.0), radius=radius)


def test_pulse_peak_and_decay():
    src = vertical()
    assert src.pulse(src.t0) == pytest.approx(src.amplitude)
    far = src.t0 + np.array([-1.0, 1.0]) * 3.2 / src.f0
    assert np.max(np.abs(src.pulse(far))) <= 1e-8 * src.amplitude


def test_vertical_profile_points_up_at_center():
    src = vertical()
    f = src.evaluate(np.array([[0.0, 0.0]]), src.t0)
    assert f[0, 0] == 0.0
    assert f[0, 1] == pytest.approx(src.amplitude)


def test_shear_profile_cutoff_and_center():
    src = shear(radius=10.0)
    r = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0],
                  [20.0, 0.0], [25.0, 3.0], [14.2, 14.2]])
    b = src.profile(r)
    assert np.all(b[0] == 0.0)          # center
    assert np.linalg.norm(b[1]) > 0.0   # inside the support
    assert np.all(b[3:] == 0.0)         # at and beyond the 2*radius cutoff


def test_shear_profile_has_moment_symmetry():
    # the moment source is antisymmetric under reflection through either
    # axis, which is what produces the four-lobed radiation pattern
    src = shear(radius=10.0)
    pts = np.array([[4.0, 3.0]])
    b = src.profile(pts)[0]
    bx = src.profile(pts * [-1.0, 1.0])[0]
    assert np.allclose(b @ np.array([4.0, 3.0]),
                       -(bx @ np.array([-4.0, 3.0])))


def test_source_model_validation():
    with pytest.raises(ScenarioError, match="kind"):
        SourceModel(kind="ring", center=(0, 0), radius=1.0)
    with pytest.raises(ScenarioError, match="positive"):
        SourceModel(kind="moment_shear", center=(0, 0), radius=0.0)


def test_config_validation_and_divisions():
    with pytest.raises(ScenarioError, match="empty domain"):
        ScenarioConfig(domain=(0, 0, -1, 1), material=preset("l1"),
                       source=vertical(), h=0.5)
    with pytest.raises(ScenarioError, match="snapshot"):
        ScenarioConfig(domain=(0, 0, 1, 1), material=preset("l1"),
                       source=vertical(), h=0.5, snapshot_times=(0.0,))
    cfg = thermoelastic_config()
    assert cfg.mesh_divisions() == 20
    assert cfg.mesh_divisions() % 2 == 0
    assert thermoelastic_config(h=231.0).mesh_divisions() % 2 == 0


def tiny_config(amplitude=1e4, snapshot_times=(0.1,)):
    return ScenarioConfig(
        domain=(0.0, 0.0, 1.0, 1.0), material=preset("l1"),
        source=SourceModel(kind="vertical_gaussian", center=(0.5, 0.5),
                           radius=0.25, amplitude=amplitude, f0=5.0,
                           t0=0.05),
        h=0.5, k=1, dt=0.01, snapshot_times=snapshot_times,
        lattice=(8, 8), load_exactness=20)


def test_zero_amplitude_gives_zero_fields():
    res = run_scenario(tiny_config(amplitude=0.0))
    for snap in res.snapshots.values():
        assert np.all(snap["psi"] == 0.0)
        assert np.all(snap["umag"] == 0.0)
    assert res.energy[-1][1] == 0.0


def test_scenario_result_shapes_and_energy_series():
    cfg = tiny_config()
    res = run_scenario(cfg)
    assert set(res.snapshots) == {0.1}
    assert res.snapshots[0.1]["psi"].shape == (8, 8)
    assert len(res.energy) == round(cfg.t_end / cfg.dt) + 1
    assert res.final_state.step == round(cfg.t_end / cfg.dt)
    assert np.any(res.snapshots[0.1]["umag"] > 0.0)


def test_wavefront_probe():
    xs = np.linspace(0.5, 9.5, 10)
    ys = np.linspace(0.5, 9.5, 10)
    umag = np.zeros((10, 10))
    assert math.isnan(wavefront_probe(umag, xs, ys, (5.0, 5.0), 0.1))
    umag[5, 5] = 1.0
    umag[5, 8] = 0.5
    r_peak = wavefront_probe(umag, xs, ys, (5.0, 5.0), 1.0)
    assert r_peak == pytest.approx(np.hypot(5.5 - 5.0, 5.5 - 5.0))
    r_half = wavefront_probe(umag, xs, ys, (5.0, 5.0), 0.5)
    assert r_half == pytest.approx(np.hypot(8.5 - 5.0, 5.5 - 5.0))


def test_four_lobe_signature_on_synthetic_pattern():
    xs = np.linspace(-9.5, 9.5, 20)
    ys = np.linspace(-9.5, 9.5, 20)
    xg, yg = np.meshgrid(xs, ys)
    psi = np.sign(xg) * np.sign(yg) * np.hypot(xg, yg)
    lobes = four_lobe_signature(psi, xs, ys, (0.0, 0.0), margin=2.0)
    assert lobes[0] > 0 and lobes[2] > 0
    assert lobes[1] < 0 and lobes[3] < 0


def test_max_p_speed_uses_unrelaxed_moduli():
    from hdgz.materials import MaterialField
    from hdgz.mesh import build_structured

    mesh = build_structured((0.0, 0.0, 1.0, 1.0), 2)
    mf = MaterialField.uniform(preset("l3"), mesh)
    assert max_p_speed(mf) == pytest.approx(math.sqrt(16e9 / 2650))


@pytest.mark.slow
def test_thermoelastic_coarse_symmetry_and_causality():
    cfg = thermoelastic_config(h=231.0, k=1, dt=1e-3,
                               snapshot_times=(0.3, 0.5))
    res = run_scenario(cfg)
    src = cfg.source
    for t, snap in res.snapshots.items():
        umag = snap["umag"]
        peak = umag.max()
        assert peak > 0.0
        # the source and domain are mirror-symmetric about x = 1155
        assert np.max(np.abs(umag - umag[:, ::-1])) <= 1e-6 * peak
        # nothing propagates faster than the compressional speed; the
        # pulse switches on about 2/f0 before its delay t0
        front = wavefront_probe(umag, res.lattice_x, res.lattice_y,
                                src.center, threshold=1e-3)
        horizon = (max_p_speed(res.system.matfield)
                   * (t - src.t0 + 2.0 / src.f0) + 2.0 * src.radius)
        assert front <= 1.1 * horizon


@pytest.mark.slow
def test_poroelastic_coarse_four_lobes():
    cfg = poroelastic_config(h=231.0, k=1, dt=1e-3, snapshot_times=(0.2,))
    res = run_scenario(cfg)
    snap = res.snapshots[0.2]["psi"]
    lobes = four_lobe_signature(snap, res.lattice_x, res.lattice_y,
                                cfg.source.center, margin=2 * cfg.source.radius)
    signs = [math.copysign(1.0, v) for v in lobes]
    assert signs[0] == signs[2] and signs[1] == signs[3]
    assert signs[0] == -signs[1]


def test_vtk_and_csv_writers_are_byte_stable(tmp_path):
    grid = np.arange(12.0).reshape(3, 4) / 7.0
    xs = np.linspace(0.5, 3.5, 4)
    ys = np.linspace(0.5, 2.5, 3)
    p1, p2 = tmp_path / "a.vtk", tmp_path / "b.vtk"
    write_vtk_lattice(p1, "psi", grid, xs, ys)
    write_vtk_lattice(p2, "psi", grid, xs, ys)
    assert p1.read_bytes() == p2.read_bytes()
    head = p1.read_text().splitlines()
    assert head[0] == "# vtk DataFile Version 3.0"
    assert head[4] == "DIMENSIONS 4 3 1"
    assert head[8] == "SCALARS psi float 1"

    e1, e2 = tmp_path / "a.csv", tmp_path / "b.csv"
    energy = [(0.0, 1.0), (0.1, 0.5)]
    write_energy_csv(e1, energy)
    write_energy_csv(e2, energy)
    assert e1.read_bytes() == e2.read_bytes()
    assert e1.read_text().splitlines()[0] == "t,energy"
