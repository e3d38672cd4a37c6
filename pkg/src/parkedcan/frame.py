"""Standard-format CAN data frames and their timed bit-level encoding.

Frames are serialized to the full wire layout (SOF through EOF) so that
dominant-level run durations can be measured exactly; the sleeping-transceiver
wake-up filter operates on those durations.
"""

from __future__ import annotations

from dataclasses import dataclass

DOMINANT = 0
RECESSIVE = 1

US_PER_SECOND = 1_000_000

# Common in-vehicle bit rates; serialize_frame accepts any positive rate.
STANDARD_BITRATES = (33_300, 125_000, 250_000, 500_000)

_CRC15_POLY = 0x4599


class CanCodecError(ValueError):
    """A frame or bit stream violates the standard data-frame layout."""


class FrameFormatError(CanCodecError):
    """Malformed fields: bad ID/DLC/data, fixed bits, CRC, or truncation."""


class StuffingError(CanCodecError):
    """Six identical consecutive bits inside the stuffed region."""


@dataclass(frozen=True)
class CanFrame:
    """11-bit-identifier data frame with a 0..8 byte payload."""

    can_id: int
    dlc: int
    data: bytes

    def __post_init__(self):
        if not 0 <= self.can_id < (1 << 11):
            raise FrameFormatError(f"can_id {self.can_id:#x} outside 11-bit range")
        if not 0 <= self.dlc <= 8:
            raise FrameFormatError(f"dlc {self.dlc} outside 0..8")
        object.__setattr__(self, "data", bytes(self.data))
        if len(self.data) != self.dlc:
            raise FrameFormatError(
                f"data length {len(self.data)} does not match dlc {self.dlc}"
            )

    @classmethod
    def from_payload(cls, can_id, data):
        data = bytes(data)
        return cls(can_id, len(data), data)


#: The content-maximally-recessive frame: ID, DLC, and DATA all filled with 1s.
ALL_ONES_FRAME = CanFrame(0x7FF, 8, b"\xff" * 8)


@dataclass(frozen=True)
class BitStream:
    """Ordered bus levels (0 dominant / 1 recessive) with a fixed bit width."""

    bits: tuple
    bit_width_us: float

    def __post_init__(self):
        if self.bit_width_us <= 0:
            raise CanCodecError("bit_width_us must be positive")
        if not self.bits:
            raise CanCodecError("bit stream must be non-empty")
        object.__setattr__(self, "bits", tuple(self.bits))

    def __len__(self):
        return len(self.bits)

    @property
    def duration_us(self):
        return len(self.bits) * self.bit_width_us


def _crc15(bits):
    crc = 0
    for bit in bits:
        if ((crc >> 14) & 1) ^ bit:
            crc = (crc << 1) ^ _CRC15_POLY
        else:
            crc <<= 1
    return crc & 0x7FFF


def _int_bits(value, width):
    return [(value >> i) & 1 for i in range(width - 1, -1, -1)]


def _stuffed_region_bits(frame):
    """Unstuffed bits from SOF through the CRC sequence."""
    bits = [DOMINANT]                     # SOF
    bits += _int_bits(frame.can_id, 11)
    bits += [DOMINANT, DOMINANT, DOMINANT]  # RTR, IDE, r0: fixed dominant
    bits += _int_bits(frame.dlc, 4)
    for byte in frame.data:
        bits += _int_bits(byte, 8)
    bits += _int_bits(_crc15(bits), 15)
    return bits


def _stuff(bits):
    """Insert a complement bit after every 5 identical consecutive bits."""
    out = []
    run_val = None
    run_len = 0
    for bit in bits:
        out.append(bit)
        if bit == run_val:
            run_len += 1
        else:
            run_val, run_len = bit, 1
        if run_len == 5:
            stuff = 1 - bit
            out.append(stuff)
            run_val, run_len = stuff, 1
    return out


def serialize_frame(frame, bitrate, ack_dominant=True):
    """Encode a frame to its timed wire bits at the given rate (bits/s).

    Stuffing covers SOF through the CRC sequence; the CRC delimiter, ACK
    delimiter, and EOF are fixed recessive. The ACK slot is dominant by
    default (some receiver acknowledged) and recessive for single-node runs.
    """
    if bitrate <= 0:
        raise CanCodecError(f"bitrate must be positive, got {bitrate}")
    bits = _stuff(_stuffed_region_bits(frame))
    bits.append(RECESSIVE)                          # CRC delimiter
    bits.append(DOMINANT if ack_dominant else RECESSIVE)
    bits.append(RECESSIVE)                          # ACK delimiter
    bits += [RECESSIVE] * 7                         # EOF
    return BitStream(tuple(bits), US_PER_SECOND / bitrate)


class _Destuffer:
    """Reads field bits out of a stuffed region, consuming stuff bits."""

    def __init__(self, bits):
        self._bits = bits
        self.pos = 0
        self._run_val = None
        self._run_len = 0

    def _raw(self):
        if self.pos >= len(self._bits):
            raise FrameFormatError("truncated bit stream")
        bit = self._bits[self.pos]
        self.pos += 1
        return bit

    def _track(self, bit):
        if bit == self._run_val:
            self._run_len += 1
        else:
            self._run_val, self._run_len = bit, 1

    def _consume_stuff_bit(self):
        stuff = self._raw()
        if stuff == self._run_val:
            raise StuffingError(
                f"6 identical consecutive bits at stream offset {self.pos - 1}"
            )
        self._track(stuff)

    def take(self, n):
        out = []
        for _ in range(n):
            if self._run_len == 5:
                self._consume_stuff_bit()
            bit = self._raw()
            self._track(bit)
            out.append(bit)
        return out

    def finish_region(self):
        # A trailing stuff bit follows the last CRC bit when it completes a
        # run of five; the serializer emits it, so consume it here too.
        if self._run_len == 5:
            self._consume_stuff_bit()


def _bits_to_int(bits):
    value = 0
    for bit in bits:
        value = (value << 1) | bit
    return value


def deserialize_frame(stream):
    """Decode a stream produced by serialize_frame back into a CanFrame.

    Raises StuffingError on a stuffing violation and FrameFormatError on
    malformed fixed fields, a bad CRC, or truncation. Trailing recessive bits
    after the EOF (interframe space) are ignored.
    """
    reader = _Destuffer(stream.bits)
    if reader.take(1) != [DOMINANT]:
        raise FrameFormatError("missing dominant start-of-frame bit")
    can_id = _bits_to_int(reader.take(11))
    rtr, ide, r0 = reader.take(3)
    if rtr != DOMINANT:
        raise FrameFormatError("remote frames are not supported (RTR must be dominant)")
    if ide != DOMINANT:
        raise FrameFormatError("extended-format frames are rejected (IDE must be dominant)")
    if r0 != DOMINANT:
        raise FrameFormatError("reserved bit r0 must be dominant")
    dlc = _bits_to_int(reader.take(4))
    if dlc > 8:
        raise FrameFormatError(f"dlc {dlc} outside 0..8")
    data = bytes(_bits_to_int(reader.take(8)) for _ in range(dlc))
    crc = _bits_to_int(reader.take(15))
    reader.finish_region()

    frame = CanFrame(can_id, dlc, data)
    if crc != _crc15(_stuffed_region_bits(frame)[:-15]):
        raise FrameFormatError("CRC mismatch")

    tail = stream.bits[reader.pos:]
    if len(tail) < 10:
        raise FrameFormatError("truncated bit stream")
    crc_delim, _ack_slot, ack_delim = tail[0], tail[1], tail[2]
    if crc_delim != RECESSIVE or ack_delim != RECESSIVE:
        raise FrameFormatError("CRC/ACK delimiters must be recessive")
    eof = tail[3:10]
    if any(bit != RECESSIVE for bit in eof):
        raise FrameFormatError("EOF must be 7 recessive bits")
    if any(bit != RECESSIVE for bit in tail[10:]):
        raise FrameFormatError("unexpected dominant bits after EOF")
    return frame


def dominant_runs(stream):
    """All maximal dominant runs as (start_us, duration_us), in order."""
    runs = []
    width = stream.bit_width_us
    start = None
    for i, bit in enumerate(stream.bits):
        if bit == DOMINANT:
            if start is None:
                start = i
        elif start is not None:
            runs.append((start * width, (i - start) * width))
            start = None
    if start is not None:
        runs.append((start * width, (len(stream.bits) - start) * width))
    return runs


def max_dominant_run_us(stream):
    """Duration of the longest dominant run, 0.0 if the stream is all recessive."""
    longest = 0
    current = 0
    for bit in stream.bits:
        if bit == DOMINANT:
            current += 1
            if current > longest:
                longest = current
        else:
            current = 0
    return longest * stream.bit_width_us
