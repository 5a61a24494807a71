import pytest

from rsmu_sim.simcore.kinematics import VehicleKinematics, step_vehicle


def test_free_road_accelerates_at_max():
    s = step_vehicle(VehicleKinematics(30.0, max_accel=2.0), 20.0, None, 0.1)
    assert s.acceleration == 2.0 and s.speed == pytest.approx(20.2) and not s.braking


def test_equilibrium():
    s = step_vehicle(VehicleKinematics(30.0), 30.0, None, 0.1)
    assert s.speed == 30.0 and s.acceleration == 0.0
    assert s.distance == pytest.approx(3.0)


def test_short_headway_brakes():
    # 2 s policy at 30 m/s wants 60 m + standstill; 20 m is far too close
    kin = VehicleKinematics(30.0, headway=2.0)
    s = step_vehicle(kin, 30.0, (20.0, 30.0), 0.1)
    assert s.braking and s.acceleration < 0 and s.speed < 30.0
    assert s.acceleration >= -kin.max_decel


def test_stopped_obstacle_stops_short():
    kin = VehicleKinematics(30.0)
    speed, gap = 30.0, 150.0
    for _ in range(400):
        s = step_vehicle(kin, speed, (gap, 0.0), 0.1)
        gap -= s.distance
        speed = s.speed
        assert speed >= 0 and gap > 0
    assert speed == 0.0
    assert gap == pytest.approx(kin.standstill_gap, abs=0.5)


def test_braking_distance_oracle():
    # no hard stop needed: from 30 m/s at comfort 2 m/s^2, a stop fits in 225 m
    kin = VehicleKinematics(30.0, comfort_decel=2.0, max_decel=6.0)
    speed, gap = 30.0, 260.0
    travelled = 0.0
    while speed > 0:
        s = step_vehicle(kin, speed, (gap - travelled, 0.0), 0.1)
        travelled += s.distance
        speed = s.speed
    assert travelled < 260.0


def test_never_negative_speed():
    s = step_vehicle(VehicleKinematics(30.0), 0.1, (1.0, 0.0), 0.1)
    assert s.speed == 0.0 and s.distance >= 0


def test_bad_inputs():
    with pytest.raises(ValueError):
        step_vehicle(VehicleKinematics(30.0), 1.0, None, 0)
    with pytest.raises(ValueError):
        VehicleKinematics(30.0, headway=0)
