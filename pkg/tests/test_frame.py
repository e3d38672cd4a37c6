import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parkedcan.frame import (
    ALL_ONES_FRAME,
    BitStream,
    CanFrame,
    FrameFormatError,
    StuffingError,
    deserialize_frame,
    dominant_runs,
    max_dominant_run_us,
    serialize_frame,
)


def random_frame(rng):
    dlc = rng.randrange(9)
    return CanFrame(rng.randrange(2048), dlc, bytes(rng.randrange(256) for _ in range(dlc)))


frames = st.builds(
    lambda can_id, data: CanFrame(can_id, len(data), data),
    st.integers(0, 2047),
    st.binary(min_size=0, max_size=8),
)


def longest_identical_run(bits):
    longest = current = 1
    for a, b in zip(bits, bits[1:]):
        current = current + 1 if a == b else 1
        longest = max(longest, current)
    return longest


class TestCanFrame:
    def test_rejects_wide_id(self):
        with pytest.raises(FrameFormatError):
            CanFrame(0x800, 0, b"")

    def test_rejects_dlc_data_mismatch(self):
        with pytest.raises(FrameFormatError):
            CanFrame(0x123, 3, b"\x01\x02")

    def test_rejects_oversize_dlc(self):
        with pytest.raises(FrameFormatError):
            CanFrame(0x123, 9, bytes(9))

    def test_from_payload(self):
        f = CanFrame.from_payload(0x10, b"\xab\xcd")
        assert f.dlc == 2


class TestSerialize:
    def test_all_ones_frame_has_exact_6us_fixed_dominant_run(self):
        # ID/DLC/DATA all 1s leaves only the three fixed dominant bits
        # (RTR, IDE, r0) adjacent: a 3-bit run, 6 us at 500 kbit/s.
        stream = serialize_frame(ALL_ONES_FRAME, 500_000)
        runs = dominant_runs(stream)
        assert max(d for _, d in runs) == pytest.approx(6.0)
        # SOF + 11 ID bits + 2 stuff bits = 14 bits before RTR.
        assert (28.0, 6.0) in runs

    def test_stuffing_breaks_dominant_runs_for_zero_frame(self):
        stream = serialize_frame(CanFrame(0, 0, b""), 500_000)
        stuffed_region = stream.bits[:-10]  # up to the CRC delimiter
        assert longest_identical_run(stuffed_region) <= 5

    def test_bit_width_follows_bitrate(self):
        assert serialize_frame(ALL_ONES_FRAME, 500_000).bit_width_us == 2.0
        assert serialize_frame(ALL_ONES_FRAME, 125_000).bit_width_us == 8.0

    def test_rejects_nonpositive_bitrate(self):
        with pytest.raises(ValueError):
            serialize_frame(ALL_ONES_FRAME, 0)

    def test_ack_slot_configurable(self):
        dominant = serialize_frame(CanFrame(0, 0, b""), 500_000)
        recessive = serialize_frame(CanFrame(0, 0, b""), 500_000, ack_dominant=False)
        assert dominant.bits[-9] == 0
        assert recessive.bits[-9] == 1

    @given(frames)
    @settings(max_examples=150, deadline=None)
    def test_stuffed_region_never_has_six_identical_bits(self, frame):
        stream = serialize_frame(frame, 500_000)
        assert longest_identical_run(stream.bits[:-10]) <= 5

    @given(frames)
    @settings(max_examples=150, deadline=None)
    def test_every_frame_has_a_dominant_run_of_three_bits(self, frame):
        stream = serialize_frame(frame, 500_000)
        assert max_dominant_run_us(stream) >= 3 * stream.bit_width_us


class TestRoundTrip:
    def test_worked_example_round_trips(self):
        f = CanFrame(0x01, 8, bytes.fromhex("00100000FF00ABCD"))
        assert deserialize_frame(serialize_frame(f, 500_000)) == f

    def test_ten_thousand_random_frames_round_trip(self):
        rng = random.Random(0xC0FFEE)
        for _ in range(10_000):
            f = random_frame(rng)
            assert deserialize_frame(serialize_frame(f, 500_000)) == f

    @given(frames, st.sampled_from([33_300, 125_000, 250_000, 500_000]))
    @settings(max_examples=150, deadline=None)
    def test_round_trip_property(self, frame, bitrate):
        assert deserialize_frame(serialize_frame(frame, bitrate)) == frame

    def test_round_trip_ignores_trailing_recessive_bits(self):
        f = CanFrame(0x2A, 2, b"\x11\x22")
        stream = serialize_frame(f, 500_000)
        padded = BitStream(stream.bits + (1, 1, 1, 1), stream.bit_width_us)
        assert deserialize_frame(padded) == f


class TestDeserializeErrors:
    def test_six_identical_bits_in_stuffed_region(self):
        stream = serialize_frame(CanFrame(0, 0, b""), 500_000)
        bits = list(stream.bits)
        # SOF is followed by four dominant ID bits, then a recessive stuff
        # bit; forcing it dominant makes six identical bits.
        assert bits[5] == 1
        bits[5] = 0
        with pytest.raises(StuffingError):
            deserialize_frame(BitStream(tuple(bits), stream.bit_width_us))

    def test_truncated_stream(self):
        stream = serialize_frame(CanFrame(0x55, 4, b"abcd"), 500_000)
        with pytest.raises(FrameFormatError):
            deserialize_frame(BitStream(stream.bits[:20], stream.bit_width_us))

    def test_corrupted_crc(self):
        stream = serialize_frame(CanFrame(0x55, 4, b"abcd"), 500_000)
        bits = list(stream.bits)
        bits[-12] ^= 1  # inside the CRC sequence for this frame
        with pytest.raises(FrameFormatError):
            deserialize_frame(BitStream(tuple(bits), stream.bit_width_us))

    def test_missing_sof(self):
        stream = serialize_frame(CanFrame(0x55, 0, b""), 500_000)
        with pytest.raises(FrameFormatError):
            deserialize_frame(BitStream((1,) + stream.bits[1:], stream.bit_width_us))


class TestDominantRuns:
    def test_single_dominant_bit_at_200kbit_lasts_5us(self):
        stream = BitStream((1, 0, 1), 1e6 / 200_000)
        assert dominant_runs(stream) == [(5.0, 5.0)]

    def test_all_recessive_stream_has_no_runs(self):
        assert dominant_runs(BitStream((1, 1, 1, 1), 2.0)) == []
        assert max_dominant_run_us(BitStream((1, 1), 2.0)) == 0.0

    def test_runs_are_disjoint_ordered_multiples_of_bit_width(self):
        rng = random.Random(99)
        for _ in range(200):
            stream = serialize_frame(random_frame(rng), 250_000)
            runs = dominant_runs(stream)
            prev_end = -1.0
            for start, duration in runs:
                assert duration % stream.bit_width_us == pytest.approx(0.0)
                assert start > prev_end
                prev_end = start + duration
