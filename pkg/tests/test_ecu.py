from itertools import combinations

import pytest

from parkedcan.ecu import (
    EcuConfig,
    EcuMode,
    FunctionSpec,
    MessageSpec,
    RecoveryPolicy,
    RecoveryTrigger,
    StandbyFunction,
    Terminal,
    attempt_recovery,
    battery_reset,
    current_draw,
    initial_state,
    on_rx_result,
    on_tx_result,
    on_wakeup_signal,
    tick,
)


def make_config(**overrides):
    kwargs = dict(
        name="ECU",
        terminal=Terminal.T30,
        t_wakeup_us=2_000_000,
        sleep_current_a=80e-6,
        normal_current_a=3e-3,
        schedule=(MessageSpec(0x100, 100_000, 8, bytes(8), (7,)),),
    )
    kwargs.update(overrides)
    return EcuConfig(**kwargs)


class TestConfigValidation:
    def test_sleep_current_must_be_below_normal(self):
        with pytest.raises(ValueError):
            make_config(sleep_current_a=5e-3, normal_current_a=1e-3)

    def test_positive_t_wakeup(self):
        with pytest.raises(ValueError):
            make_config(t_wakeup_us=0)

    def test_duplicate_schedule_ids(self):
        msgs = (MessageSpec(0x1, 100_000), MessageSpec(0x1, 200_000))
        with pytest.raises(ValueError):
            make_config(schedule=msgs)

    def test_function_byte_must_avoid_free_run_bytes(self):
        fn = FunctionSpec(StandbyFunction.DOOR_CONTROL, 0x100, 7, 0x10, 0x30)
        with pytest.raises(ValueError):
            make_config(functions=(fn,))

    def test_free_run_positions_union(self):
        cfg = make_config(schedule=(
            MessageSpec(0x1, 100_000, 8, bytes(8), (6, 7)),
            MessageSpec(0x2, 100_000, 4, bytes(4), ()),
        ))
        assert cfg.free_run_positions == frozenset(
            (b, bit) for b in (6, 7) for bit in range(8)
        )


class TestMessageSpec:
    def test_free_run_bytes_change_every_emission(self):
        spec = MessageSpec(0x1, 100_000, 8, bytes.fromhex("00100000FF00ABCD"), (6, 7))
        p0, p1, p2 = (spec.payload(i) for i in range(3))
        assert p0 == bytes.fromhex("00100000FF00ABCD")
        assert p1[6] != p0[6] and p1[7] != p0[7]
        assert p0[:6] == p1[:6] == p2[:6]
        assert p2 == p0

    def test_overrides_replace_baseline_byte(self):
        spec = MessageSpec(0x1, 100_000, 8, bytes.fromhex("0010000000000000"), ())
        assert spec.payload(0, {1: 0x30})[1] == 0x30


class TestWakeSleep:
    def test_sleeping_ecu_wakes_with_deadline(self):
        cfg = make_config()
        state = initial_state(cfg)
        on_wakeup_signal(state, cfg, 10_000_000)
        assert state.mode is EcuMode.NORMAL
        assert state.wake_deadline_us == 12_000_000

    def test_off_ecu_ignores_wakeup(self):
        cfg = make_config(terminal=Terminal.T15)
        state = initial_state(cfg)
        assert state.mode is EcuMode.OFF
        on_wakeup_signal(state, cfg, 0)
        assert state.mode is EcuMode.OFF

    def test_bus_off_ecu_ignores_wakeup(self):
        cfg = make_config()
        state = initial_state(cfg)
        state.mode = EcuMode.BUS_OFF
        on_wakeup_signal(state, cfg, 0)
        assert state.mode is EcuMode.BUS_OFF

    def test_resignal_extends_deadline(self):
        cfg = make_config()
        state = initial_state(cfg)
        on_wakeup_signal(state, cfg, 0)
        on_wakeup_signal(state, cfg, 1_500_000)
        assert state.wake_deadline_us == 3_500_000


class TestTick:
    def test_ten_frames_in_one_second_at_100ms(self):
        cfg = make_config()
        state = initial_state(cfg)
        on_wakeup_signal(state, cfg, 0)
        frames = tick(state, cfg, 1_000_000)
        assert len(frames) == 10
        assert state.mode is EcuMode.NORMAL

    def test_sleeping_ecu_emits_nothing(self):
        cfg = make_config()
        state = initial_state(cfg)
        assert tick(state, cfg, 5_000_000) == []

    def test_single_wake_transmits_only_during_stay_awake_window(self):
        # Hand replay: woken at 0 with a 2 s stay and a 100 ms period, the
        # deadlines are 0.1..1.9 s; the 2.0 s frame loses to re-sleep.
        cfg = make_config()
        state = initial_state(cfg)
        on_wakeup_signal(state, cfg, 0)
        frames = tick(state, cfg, 5_000_000)
        assert len(frames) == 19
        assert state.mode is EcuMode.SLEEP

    def test_free_run_byte_differs_between_consecutive_frames(self):
        cfg = make_config()
        state = initial_state(cfg)
        on_wakeup_signal(state, cfg, 0)
        frames = tick(state, cfg, 300_000)
        assert frames[0].data[7] != frames[1].data[7]


def tec_oracle(sequence):
    """Brute-force error-counter replay; returns the bus-off event index."""
    tec = 0
    for i, ok in enumerate(sequence):
        if ok:
            tec = max(tec - 1, 0)
        else:
            tec += 8
            if tec > 255:
                return i
    return None


class TestErrorConfinement:
    def test_bus_off_after_exactly_32_consecutive_errors(self):
        cfg = make_config()
        state = initial_state(cfg)
        state.mode = EcuMode.NORMAL
        for i in range(31):
            assert not on_tx_result(state, ok=False), f"bus-off too early at {i + 1}"
        assert state.mode is EcuMode.NORMAL
        assert on_tx_result(state, ok=False)
        assert state.mode is EcuMode.BUS_OFF
        assert state.tec == 256

    def test_success_decrements_tec(self):
        state = initial_state(make_config())
        state.mode = EcuMode.NORMAL
        state.tec = 8
        on_tx_result(state, ok=True)
        assert state.tec == 7

    def test_tec_floor_at_zero(self):
        state = initial_state(make_config())
        on_tx_result(state, ok=True)
        assert state.tec == 0

    def test_error_from_248_crosses_threshold(self):
        state = initial_state(make_config())
        state.mode = EcuMode.NORMAL
        state.tec = 248
        assert on_tx_result(state, ok=False)
        assert state.tec == 256

    def test_rx_errors_never_cause_bus_off(self):
        state = initial_state(make_config())
        state.mode = EcuMode.NORMAL
        for _ in range(300):
            on_rx_result(state, ok=False)
        assert state.rec == 300
        assert state.mode is EcuMode.NORMAL
        on_rx_result(state, ok=True)
        assert state.rec == 299

    def test_matches_brute_force_oracle_over_interleavings(self):
        # Exhaustive over error sequences of length 36 with up to 3
        # successes inserted anywhere.
        cfg = make_config()
        length = 36
        for k in range(4):
            for success_at in combinations(range(length), k):
                sequence = [i in success_at for i in range(length)]
                state = initial_state(cfg)
                state.mode = EcuMode.NORMAL
                observed = None
                for i, ok in enumerate(sequence):
                    if state.mode is EcuMode.BUS_OFF:
                        break
                    if on_tx_result(state, ok):
                        observed = i
                        break
                assert observed == tec_oracle(sequence), sequence


class TestRecovery:
    def bus_off_state(self, cfg):
        state = initial_state(cfg)
        state.mode = EcuMode.BUS_OFF
        state.tec = 256
        return state

    def test_never_recover_stays_down(self):
        cfg = make_config(recovery_policy=RecoveryPolicy.NEVER_RECOVER)
        state = self.bus_off_state(cfg)
        assert not attempt_recovery(state, cfg, RecoveryTrigger.AUTOMATIC)
        assert not attempt_recovery(state, cfg, RecoveryTrigger.USER_REQUEST)
        assert state.mode is EcuMode.BUS_OFF

    def test_auto_recover_returns_to_sleep(self):
        cfg = make_config()
        state = self.bus_off_state(cfg)
        assert attempt_recovery(state, cfg, RecoveryTrigger.AUTOMATIC)
        assert state.mode is EcuMode.SLEEP
        assert state.tec == 0

    def test_manual_reset_needs_user_request(self):
        cfg = make_config(recovery_policy=RecoveryPolicy.MANUAL_RESET_ONLY)
        state = self.bus_off_state(cfg)
        assert not attempt_recovery(state, cfg, RecoveryTrigger.AUTOMATIC)
        assert attempt_recovery(state, cfg, RecoveryTrigger.USER_REQUEST)

    def test_recovery_noop_when_not_bus_off(self):
        cfg = make_config()
        state = initial_state(cfg)
        assert not attempt_recovery(state, cfg, RecoveryTrigger.AUTOMATIC)
        assert state.mode is EcuMode.SLEEP

    def test_battery_reset_restores_initial_mode(self):
        cfg = make_config(recovery_policy=RecoveryPolicy.NEVER_RECOVER)
        state = self.bus_off_state(cfg)
        battery_reset(state, cfg)
        assert state.mode is EcuMode.SLEEP
        assert (state.tec, state.rec) == (0, 0)


class TestCurrentDraw:
    def test_off_draws_nothing(self):
        cfg = make_config(terminal=Terminal.T15)
        assert current_draw(initial_state(cfg), cfg) == 0.0

    def test_sleep_draws_sleep_current(self):
        cfg = make_config(sleep_current_a=80e-6)
        assert current_draw(initial_state(cfg), cfg) == 80e-6

    def test_normal_adds_function_loads(self):
        # Welcome-light delta over a 3 mA module, per the reference
        # cumulative-row differences.
        cfg = make_config(normal_current_a=3e-3)
        state = initial_state(cfg)
        state.mode = EcuMode.NORMAL
        assert current_draw(state, cfg, 26.6e-3) == pytest.approx(29.6e-3)

    def test_bus_off_keeps_transceiver_powered(self):
        cfg = make_config(sleep_current_a=80e-6)
        state = initial_state(cfg)
        state.mode = EcuMode.BUS_OFF
        assert current_draw(state, cfg) == 80e-6
