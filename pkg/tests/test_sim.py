import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emrm_vv.errors import (
    ContractViolation,
    DomainError,
    InvalidScene,
    MissingField,
    NegativeGap,
)
from emrm_vv.hazard import LossLevel
from emrm_vv.sim import (
    KMH,
    Scene,
    Strategy,
    VehicleParams,
    impact_loss_level,
    required_lateral_shift,
    scene_from_dict,
    scene_to_dict,
    simulate,
    stop_boundary_ttc,
    time_to_collision,
)


def make_scene(speed_kmh=50.0, ttc=1.0, passage=3.0, **kw):
    return Scene("t_junction", speed_kmh * KMH, ttc, passage, **kw)


class TestAnalytics:
    def test_stop_boundary_examples(self):
        # 50 km/h on dry asphalt needs about 0.708 s
        assert stop_boundary_ttc(50.0 * KMH, 1.0) == pytest.approx(0.708, abs=1e-3)
        assert stop_boundary_ttc(72.0 * KMH, 1.0) == pytest.approx(1.019, abs=1e-3)
        assert stop_boundary_ttc(0.0, 0.5) == 0.0

    def test_stop_boundary_scales_inversely_with_mu(self):
        assert stop_boundary_ttc(13.9, 0.5) == pytest.approx(
            2.0 * stop_boundary_ttc(13.9, 1.0))

    def test_stop_boundary_validates(self):
        with pytest.raises(DomainError):
            stop_boundary_ttc(10.0, 0.0)
        with pytest.raises(DomainError):
            stop_boundary_ttc(-1.0, 1.0)

    def test_time_to_collision(self):
        assert time_to_collision(13.9, 13.9) == pytest.approx(1.0)
        assert time_to_collision(10.0, 0.0) is None
        assert time_to_collision(10.0, -2.0) is None
        with pytest.raises(NegativeGap):
            time_to_collision(-0.1, 5.0)


class TestImpactLoss:
    def test_truck_bins(self):
        assert impact_loss_level(0.0) is LossLevel.L0
        assert impact_loss_level(15.0) is LossLevel.L4
        assert impact_loss_level(60.0) is LossLevel.L6
        assert impact_loss_level(80.0) is LossLevel.L7

    def test_vru_bins(self):
        assert impact_loss_level(0.5, "VRU") is LossLevel.L0
        assert impact_loss_level(5.0, "VRU") is LossLevel.L6
        assert impact_loss_level(20.0, "VRU") is LossLevel.L7

    def test_validates(self):
        with pytest.raises(DomainError):
            impact_loss_level(-1.0)
        with pytest.raises(DomainError):
            impact_loss_level(10.0, "Bicycle")

    @given(st.floats(0.0, 200.0))
    def test_monotone_in_speed(self, r):
        assert impact_loss_level(r) <= impact_loss_level(r + 1.0)


class TestSimulate:
    def test_stop_well_before_boundary_avoids(self):
        out = simulate(make_scene(30.0, 2.9), Strategy.EMERGENCY_STOP)
        assert not out.collided
        assert out.residual_speed == 0.0
        assert out.loss_level is LossLevel.L0

    def test_late_braking_hits_with_predicted_residual(self):
        # 72 km/h, 0.25 s to impact: v^2 - 2 mu g d gives ~62.6 km/h residual
        out = simulate(make_scene(72.0, 0.25), Strategy.EMERGENCY_STOP)
        assert out.collided
        assert out.residual_speed == pytest.approx(62.6, abs=1.5)
        assert out.min_ttc == 0.0
        assert out.loss_level is LossLevel.L6

    def test_dodge_clears_wide_passage(self):
        scene = make_scene(50.0, 2.0, passage=3.8)
        out = simulate(scene, Strategy.DODGE)
        assert not out.collided
        end = out.trajectory[-1]
        assert end.y - 1.9 / 2.0 >= scene.truck_y_high

    def test_dodge_cannot_steer_into_blocked_passage(self):
        out = simulate(make_scene(50.0, 2.0, passage=1.0), Strategy.DODGE)
        assert out.peak_lateral == 0.0

    def test_drift_to_accident_attenuates_residual(self):
        scene = make_scene(60.0, 0.5)
        stop = simulate(scene, Strategy.EMERGENCY_STOP)
        drift = simulate(scene, Strategy.DRIFT_TO_ACCIDENT)
        assert stop.collided and drift.collided
        assert drift.residual_speed < stop.residual_speed
        assert drift.trajectory[-1].psi < 0.0

    def test_no_lateral_authority_on_ice(self):
        # lateral grip on ice cannot build the shift needed to clear
        params = VehicleParams(mu=0.15)
        for strategy in (Strategy.DODGE, Strategy.DRIFT_TO_AVOID):
            out = simulate(make_scene(57.6, 1.0, passage=3.0),
                           strategy, params)
            assert out.collided

    def test_friction_circle_respected(self):
        params = VehicleParams(mu=0.6)
        out = simulate(make_scene(50.0, 1.2), Strategy.DRIFT_TO_AVOID, params)
        assert out.peak_lateral <= params.mu * params.g + 1e-9

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.3, 2.5), st.floats(0.3, 2.5))
    def test_stop_residual_monotone_in_ttc(self, t1, t2):
        lo, hi = sorted((t1, t2))
        near = simulate(make_scene(60.0, lo), Strategy.EMERGENCY_STOP)
        far = simulate(make_scene(60.0, hi), Strategy.EMERGENCY_STOP)
        assert far.residual_speed <= near.residual_speed + 0.5

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.15, 1.0), st.floats(0.15, 1.0))
    def test_stop_residual_monotone_in_mu(self, m1, m2):
        lo, hi = sorted((m1, m2))
        slick = simulate(make_scene(60.0, 0.8),
                         Strategy.EMERGENCY_STOP, VehicleParams(mu=lo))
        grippy = simulate(make_scene(60.0, 0.8),
                          Strategy.EMERGENCY_STOP, VehicleParams(mu=hi))
        assert grippy.residual_speed <= slick.residual_speed + 0.5

    def test_dt_convergence(self):
        scene = make_scene(64.0, 0.6)
        coarse = simulate(scene, Strategy.EMERGENCY_STOP, dt=0.02)
        fine = simulate(scene, Strategy.EMERGENCY_STOP, dt=0.002)
        assert abs(coarse.residual_speed - fine.residual_speed) < 0.5

    def test_dt_validated(self):
        with pytest.raises(ContractViolation):
            simulate(make_scene(), Strategy.EMERGENCY_STOP, dt=0.1)

    def test_required_shift(self):
        scene = make_scene()
        params = VehicleParams()
        shift = required_lateral_shift(scene, params)
        assert shift == pytest.approx(-0.15 + 0.95 + 0.35)


class TestSceneIO:
    def test_scene_validation(self):
        with pytest.raises(InvalidScene):
            make_scene(ttc=0.0)
        with pytest.raises(InvalidScene):
            make_scene(passage=-1.0)
        with pytest.raises(InvalidScene):
            make_scene(truck_y_low=1.0)

    def test_round_trip(self):
        scene = make_scene(57.6, 1.3, passage=2.5)
        again = scene_from_dict(scene_to_dict(scene))
        assert again.ego_speed == pytest.approx(scene.ego_speed)
        assert again.ttc == scene.ttc
        assert again.passage_width == scene.passage_width

    def test_missing_field_cited(self):
        doc = {"scene_id": "t_junction", "ego_speed_kmh": 50.0, "ttc_s": 1.0}
        with pytest.raises(MissingField) as err:
            scene_from_dict(doc)
        assert "passage_width" in str(err.value)

    def test_builtin_scene_loads(self):
        from importlib import resources
        import yaml
        text = resources.files("emrm_vv.data").joinpath(
            "emrm_scene_1.yaml").read_text()
        scene = scene_from_dict(yaml.safe_load(text))
        assert scene.scene_id == "t_junction"
        assert scene.gap == pytest.approx(scene.ego_speed * scene.ttc)
