import pytest

from parkedcan import attack
from parkedcan.attack import (
    Activation,
    AttackKind,
    AttackPlan,
    FunctionLoad,
    build_injections,
    composite,
    control_plan,
    dob_plan,
    drain_suite_plans,
    execute,
    required_injection_period,
    standard_plan,
    wakeup_flood,
)
from parkedcan.ecu import EcuMode, StandbyFunction


class TestRequiredInjectionPeriod:
    def test_equals_stay_awake_window(self):
        assert required_injection_period(2_000_000) == 2_000_000

    def test_huge_stay_allows_any_finite_period(self):
        century_us = 100 * 365 * 24 * 3_600_000_000
        assert required_injection_period(century_us) == century_us

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            required_injection_period(0)


class TestPlanValidation:
    def test_control_plan_needs_id_and_payload(self):
        with pytest.raises(ValueError):
            AttackPlan(AttackKind.DOOR_CYCLE, injection_period_us=5_000_000)

    def test_flood_needs_period(self):
        with pytest.raises(ValueError):
            AttackPlan(AttackKind.WAKEUP_FLOOD)

    def test_composite_flattens_nested_parts(self):
        plan = composite(wakeup_flood(2_000_000),
                         composite(dob_plan(), wakeup_flood(1_000_000)))
        kinds = [p.kind for p in plan.flattened()]
        assert kinds == [AttackKind.WAKEUP_FLOOD, AttackKind.DOB,
                         AttackKind.WAKEUP_FLOOD]


class TestBuildInjections:
    def test_door_cycle_alternates_payloads(self):
        plan = control_plan(AttackKind.DOOR_CYCLE, 0x001,
                            [b"\x00\x30", b"\x00\x10"], period_us=5_000_000)
        injections, directives = build_injections(plan, 60_000_000)
        assert len(injections) == 12
        assert directives == ()
        payloads = [frame.data for _, frame in injections]
        assert payloads[::2] == [b"\x00\x30"] * 6
        assert payloads[1::2] == [b"\x00\x10"] * 6

    def test_latched_trunk_is_a_single_frame(self):
        plan = control_plan(AttackKind.TRUNK_OPEN, 0x020, [b"\x00\x00\x00\x08"])
        injections, _ = build_injections(plan, 60_000_000)
        assert len(injections) == 1

    def test_auto_off_lights_reinject(self):
        plan = control_plan(AttackKind.TRUNK_OPEN, 0x020, [b"\x00\x00\x00\x08"],
                            relight_period_us=10_000_000)
        injections, _ = build_injections(plan, 60_000_000)
        assert len(injections) == 6

    def test_composite_merge_matches_sort_oracle(self):
        plan = composite(
            wakeup_flood(2_000_000),
            control_plan(AttackKind.POWER_MODE_CONTROL, 0x010, [b"\x00\x04"],
                         period_us=700_000, start_us=100_000),
        )
        merged, _ = build_injections(plan, 10_000_000)
        flood, _ = build_injections(wakeup_flood(2_000_000), 10_000_000)
        control, _ = build_injections(plan.parts[1], 10_000_000)
        oracle = sorted(list(flood) + list(control), key=lambda item: item[0])
        assert [t for t, _ in merged] == [t for t, _ in oracle]
        assert sorted(f.can_id for _, f in merged) == sorted(
            f.can_id for _, f in oracle
        )

    def test_flood_respects_stop_time(self):
        plan = wakeup_flood(1_000_000, stop_us=3_500_000)
        injections, _ = build_injections(plan, 60_000_000)
        assert [t for t, _ in injections] == [0, 1_000_000, 2_000_000, 3_000_000]


class TestExecute:
    def test_baseline_draws_configured_parked_current(self, reference):
        result = execute(standard_plan(reference, "none"), reference,
                         duration_us=3_600_000_000)
        assert result.report.mean_current_a == pytest.approx(12.2e-3, rel=1e-9)
        assert result.report.amplification == pytest.approx(1.0)
        assert not result.report.exceeds_parasitic_threshold

    def test_wake_flood_exceeds_parasitic_threshold(self, reference):
        result = execute(standard_plan(reference, "wake-flood"), reference,
                         duration_us=3_600_000_000)
        assert result.report.mean_current_a == pytest.approx(42.0e-3, rel=1e-9)
        assert result.report.exceeds_parasitic_threshold

    def test_cumulative_plans_never_reduce_current(self, reference):
        currents = [
            execute(plan, reference, duration_us=3_600_000_000).report.mean_current_a
            for _, plan in drain_suite_plans(reference)
        ]
        assert all(b >= a for a, b in zip(currents, currents[1:]))

    def test_unmatched_control_frame_activates_no_load(self, reference):
        # Same byte pattern, but on an ID no module accepts.
        stray = control_plan(AttackKind.POWER_MODE_CONTROL, 0x3F0,
                             [b"\x00\x04\x00\x00\x00\x00\x00\x00"],
                             period_us=1_000_000,
                             function=StandbyFunction.POWER_MODE)
        plan = composite(wakeup_flood(2_000_000), stray)
        result = execute(plan, reference, duration_us=3_600_000_000)
        assert result.report.mean_current_a == pytest.approx(42.0e-3, rel=1e-9)
        assert not result.run.activations

    def test_night_multiplier_scales_door_load(self, reference):
        from dataclasses import replace
        night_vehicle = replace(reference, night=True)
        plan = composite(wakeup_flood(2_000_000),
                         standard_plan(night_vehicle, "door-cycle"))
        result = execute(plan, night_vehicle, duration_us=3_600_000_000)
        expected = 42.0e-3 + 26.6e-3 * 2.5
        assert result.report.mean_current_a == pytest.approx(expected, rel=1e-9)


class TestDobAttack:
    def test_only_never_recover_node_stays_down(self, reference):
        result = attack.dob_attack(reference)
        assert result.permanently_off == ("RCM",)

    def test_all_auto_recover_leaves_nothing_down(self, reference):
        from dataclasses import replace
        from parkedcan.ecu import RecoveryPolicy
        forgiving = replace(reference, ecus=tuple(
            replace(n, recovery_policy=RecoveryPolicy.AUTO_RECOVER)
            for n in reference.ecus
        ))
        result = attack.dob_attack(forgiving)
        assert result.permanently_off == ()

    def test_takes_only_a_few_simulated_seconds(self, reference):
        result = attack.dob_attack(reference)
        assert 0 < result.attack_duration_us < 5_000_000

    def test_repeating_the_attack_changes_nothing(self, reference):
        once = attack.dob_attack(reference)
        twice_plan = composite(dob_plan(0), dob_plan(15_000_000))
        injections, directives = build_injections(twice_plan, 30_000_000)
        from parkedcan import bus
        rerun = bus.run(reference.bus_config(), injections, 30_000_000, directives)
        down = {name for name, st in rerun.final_states.items()
                if st.mode is EcuMode.BUS_OFF}
        assert down == set(once.permanently_off)

    def test_key_fob_authentication_reported_unavailable(self, reference):
        result = execute(standard_plan(reference, "dob"), reference,
                         duration_us=20_000_000)
        assert result.availability[StandbyFunction.PKES] is False
        assert result.availability[StandbyFunction.RKE] is False
        assert result.availability[StandbyFunction.DOOR_CONTROL] is True


class TestFunctionLoad:
    def test_rejects_negative_load(self):
        with pytest.raises(ValueError):
            FunctionLoad(-1e-3)

    def test_rejects_dimming_night_multiplier(self):
        with pytest.raises(ValueError):
            FunctionLoad(1e-3, Activation.WHILE_REPEATED, night_multiplier=0.5)
