import base64
import struct

import numpy as np
import pytest

from spikecam.calibration import make_calibration
from spikecam.formats import (
    FormatError,
    SPIKE_MAGIC,
    center_crop,
    read_calibration,
    read_image,
    read_raw_stream,
    read_stream,
    write_calibration,
    write_image,
    write_stream,
)
from spikecam.streams import ClockParams, SpikeStream


def random_stream(seed, width, height, length, clock=None):
    rng = np.random.default_rng(seed)
    dense = rng.random((length, height, width)) < 0.3
    return SpikeStream.from_dense(dense, clock=clock)


# ----------------------------------------------------------------------
# stream container


def test_stream_round_trip_full_sensor(tmp_path):
    stream = random_stream(0, 400, 248, 1000)
    path = tmp_path / "dump.spk"
    write_stream(stream, path)
    assert path.stat().st_size == 36 + 1000 * (400 * 248 // 8)
    back = read_stream(path)
    assert back == stream
    assert back.clock.tick_seconds == 50e-6


def test_stream_header_layout(tmp_path):
    stream = SpikeStream.from_dense(np.zeros((5, 2, 3), dtype=bool))
    path = tmp_path / "tiny.spk"
    write_stream(stream, path)
    raw = path.read_bytes()
    magic, width, height, length, tick_ns, flags = struct.unpack_from("<8sIIQQI", raw)
    assert magic == SPIKE_MAGIC
    assert (width, height, length) == (3, 2, 5)
    assert tick_ns == 50000
    assert flags == 0
    assert len(raw) == 36 + 5 * 1


def test_stream_payload_bit_order(tmp_path):
    dense = np.zeros((1, 1, 8), dtype=bool)
    dense[0, 0, 0] = True
    path = tmp_path / "lsb.spk"
    write_stream(SpikeStream.from_dense(dense), path)
    assert path.read_bytes()[36:] == b"\x01"
    dense[0, 0, 0] = False
    dense[0, 0, 7] = True
    write_stream(SpikeStream.from_dense(dense), path)
    assert path.read_bytes()[36:] == b"\x80"


def test_stream_custom_clock_round_trip(tmp_path):
    stream = random_stream(1, 8, 4, 10, clock=ClockParams(tick_seconds=1e-3))
    path = tmp_path / "slow.spk"
    write_stream(stream, path)
    assert read_stream(path).clock.tick_seconds == 1e-3


def test_stream_empty_round_trip(tmp_path):
    stream = SpikeStream.from_dense(np.zeros((0, 4, 4), dtype=bool))
    path = tmp_path / "empty.spk"
    write_stream(stream, path)
    back = read_stream(path)
    assert back.length == 0 and back == stream


def test_stream_sub_nanosecond_tick_rejected(tmp_path):
    stream = random_stream(2, 8, 8, 4, clock=ClockParams(tick_seconds=1e-10))
    with pytest.raises(FormatError):
        write_stream(stream, tmp_path / "bad.spk")


def test_read_rejects_bad_magic(tmp_path):
    stream = random_stream(3, 8, 8, 4)
    path = tmp_path / "x.spk"
    write_stream(stream, path)
    raw = bytearray(path.read_bytes())
    raw[:8] = b"NOTSPIKE"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_stream(path)


def test_read_rejects_nonzero_flags(tmp_path):
    stream = random_stream(4, 8, 8, 4)
    path = tmp_path / "x.spk"
    write_stream(stream, path)
    raw = bytearray(path.read_bytes())
    raw[32] = 1  # flags field
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_stream(path)


def test_read_rejects_bad_geometry(tmp_path):
    stream = random_stream(5, 8, 8, 4)
    path = tmp_path / "x.spk"
    write_stream(stream, path)
    raw = bytearray(path.read_bytes())
    struct.pack_into("<I", raw, 8, 0)  # width = 0
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_stream(path)


def test_read_rejects_truncated_and_padded_files(tmp_path):
    stream = random_stream(6, 8, 8, 4)
    path = tmp_path / "x.spk"
    write_stream(stream, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:20])
    with pytest.raises(FormatError):
        read_stream(path)
    path.write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        read_stream(path)
    path.write_bytes(raw + b"\x00")
    with pytest.raises(FormatError):
        read_stream(path)


# ----------------------------------------------------------------------
# raw camera dumps


def test_raw_stream_reads_packed_frames(tmp_path):
    path = tmp_path / "dump.dat"
    path.write_bytes(bytes([0x01, 0x00, 0x80, 0x01]))
    stream = read_raw_stream(path, width=16, height=2)
    assert stream.length == 1
    assert stream.get_spike(0, 0, 0)
    assert stream.get_spike(7, 1, 0)
    assert stream.get_spike(8, 1, 0)
    assert stream.count_map(0, 1).sum() == 3


def test_raw_stream_msb_first_reverses_bits(tmp_path):
    path = tmp_path / "dump.dat"
    path.write_bytes(bytes([0x80]))
    lsb = read_raw_stream(path, width=8, height=1)
    msb = read_raw_stream(path, width=8, height=1, msb_first=True)
    assert lsb.get_spike(7, 0, 0) and not lsb.get_spike(0, 0, 0)
    assert msb.get_spike(0, 0, 0) and not msb.get_spike(7, 0, 0)


def test_raw_stream_requires_whole_frames(tmp_path):
    path = tmp_path / "dump.dat"
    path.write_bytes(b"\x00" * 5)  # frame is 2 bytes for 16x1
    with pytest.raises(FormatError):
        read_raw_stream(path, width=16, height=1)
    path.write_bytes(b"")
    with pytest.raises(FormatError):
        read_raw_stream(path, width=16, height=1)


def test_raw_stream_validates_dimensions(tmp_path):
    path = tmp_path / "dump.dat"
    path.write_bytes(b"\x00")
    with pytest.raises(FormatError):
        read_raw_stream(path, width=0, height=8)


def test_raw_stream_keeps_given_clock(tmp_path):
    path = tmp_path / "dump.dat"
    path.write_bytes(b"\x00")
    clock = ClockParams(tick_seconds=2e-5)
    assert read_raw_stream(path, 8, 1, clock=clock).clock == clock


# ----------------------------------------------------------------------
# center crop


def test_center_crop_matches_dense_slicing():
    stream = random_stream(7, 10, 6, 12)
    cropped = center_crop(stream, 4, 2)
    assert (cropped.width, cropped.height, cropped.length) == (4, 2, 12)
    want = stream.to_dense()[:, 2:4, 3:7]
    np.testing.assert_array_equal(cropped.to_dense(), want)


def test_center_crop_full_size_is_identity():
    stream = random_stream(8, 8, 8, 4)
    assert center_crop(stream, 8, 8) == stream


def test_center_crop_handles_long_streams_in_chunks():
    stream = random_stream(9, 64, 64, 2050)
    cropped = center_crop(stream, 48, 40)
    np.testing.assert_array_equal(
        cropped.to_dense(2040, 2050), stream.to_dense(2040, 2050)[:, 12:52, 8:56]
    )
    assert cropped.length == 2050


def test_center_crop_validates_target():
    stream = random_stream(10, 8, 8, 4)
    with pytest.raises(ValueError):
        center_crop(stream, 16, 8)
    with pytest.raises(ValueError):
        center_crop(stream, 0, 8)


# ----------------------------------------------------------------------
# graymap images


def test_image_8bit_round_trip(tmp_path):
    img = np.arange(64, dtype=np.float64).reshape(8, 8)
    path = tmp_path / "img.pgm"
    write_image(img, path)
    np.testing.assert_array_equal(read_image(path), img)


def test_image_8bit_rounds_half_to_even(tmp_path):
    img = np.array([[127.5, 126.5, 0.5, 1.5]])
    path = tmp_path / "img.pgm"
    write_image(img, path)
    np.testing.assert_array_equal(read_image(path), [[128.0, 126.0, 0.0, 2.0]])


def test_image_8bit_clips_out_of_range(tmp_path):
    path = tmp_path / "img.pgm"
    write_image(np.array([[-5.0, 300.0]]), path)
    np.testing.assert_array_equal(read_image(path), [[0.0, 255.0]])


def test_image_16bit_endpoints_are_exact(tmp_path):
    path = tmp_path / "img.pgm"
    write_image(np.array([[0.0, 255.0]]), path, bit_depth=16)
    raw = path.read_bytes()
    assert raw.endswith(b"\x00\x00\xff\xff")
    np.testing.assert_array_equal(read_image(path), [[0.0, 255.0]])


def test_image_16bit_preserves_8bit_grid(tmp_path):
    img = np.arange(256, dtype=np.float64).reshape(16, 16)
    path = tmp_path / "img.pgm"
    write_image(img, path, bit_depth=16)
    np.testing.assert_allclose(read_image(path), img, atol=1e-10)


def test_image_16bit_quantization_error_bound(tmp_path):
    rng = np.random.default_rng(11)
    img = rng.uniform(0.0, 255.0, (16, 16))
    path = tmp_path / "img.pgm"
    write_image(img, path, bit_depth=16)
    assert np.abs(read_image(path) - img).max() <= 0.5 * 255.0 / 65535.0 + 1e-12


def test_image_header_comments_and_odd_maxval(tmp_path):
    path = tmp_path / "img.pgm"
    path.write_bytes(b"P5 # binary graymap\n# size next\n 2 1 \n100\n" + bytes([50, 100]))
    np.testing.assert_allclose(read_image(path), [[127.5, 255.0]], atol=1e-12)


def test_image_read_validation(tmp_path):
    path = tmp_path / "img.pgm"
    path.write_bytes(b"P2\n2 1\n255\n\x00\x00")
    with pytest.raises(FormatError):
        read_image(path)
    path.write_bytes(b"P5\n2 1\n255\n\x00")
    with pytest.raises(FormatError):
        read_image(path)
    path.write_bytes(b"P5\n0 1\n255\n")
    with pytest.raises(FormatError):
        read_image(path)
    path.write_bytes(b"P5\n2 1\n70000\n" + b"\x00" * 8)
    with pytest.raises(FormatError):
        read_image(path)
    path.write_bytes(b"P5\n2 1\n")
    with pytest.raises(FormatError):
        read_image(path)


def test_image_write_validation(tmp_path):
    path = tmp_path / "img.pgm"
    with pytest.raises(ValueError):
        write_image(np.zeros(4), path)
    with pytest.raises(ValueError):
        write_image(np.array([[np.nan]]), path)
    with pytest.raises(ValueError):
        write_image(np.zeros((2, 2)), path, bit_depth=12)


# ----------------------------------------------------------------------
# calibration documents


def sample_calibration():
    rng = np.random.default_rng(12)
    L_d = rng.uniform(0.0, 5.0, (4, 6))
    L_d[0, 0] = 0.0  # makes D_dark infinite there
    R = rng.uniform(0.9, 1.1, (4, 6))
    R[1, 2] = 1.0
    return make_calibration(L_d, R, reference_pixel=(2, 1))


def test_calibration_round_trip_is_bit_exact(tmp_path):
    calib = sample_calibration()
    path = tmp_path / "sensor.cal"
    write_calibration(calib, path)
    back = read_calibration(path)
    for name in ("L_d", "R", "Q_r", "D_dark"):
        np.testing.assert_array_equal(getattr(back, name), getattr(calib, name))
    assert np.isinf(back.D_dark[0, 0])
    assert back.reference_pixel == (2, 1)
    assert back.clock == calib.clock


def test_calibration_document_is_text(tmp_path):
    path = tmp_path / "sensor.cal"
    write_calibration(sample_calibration(), path)
    text = path.read_text(encoding="ascii")
    lines = text.splitlines()
    assert lines[0] == "spikecal 1"
    assert "width 6" in lines and "height 4" in lines
    assert "tick_nanoseconds 50000" in lines
    assert "reference_pixel 2 1" in lines
    assert sum(ln.startswith("map ") for ln in lines) == 4


def test_calibration_reader_skips_comments(tmp_path):
    path = tmp_path / "sensor.cal"
    write_calibration(sample_calibration(), path)
    lines = path.read_text().splitlines()
    lines.insert(1, "# exported by the bench rig")
    lines.insert(0, "")
    path.write_text("\n".join(lines) + "\n")
    back = read_calibration(path)
    np.testing.assert_array_equal(back.R, sample_calibration().R)


def test_calibration_reader_rejects_unknown_version(tmp_path):
    path = tmp_path / "sensor.cal"
    write_calibration(sample_calibration(), path)
    text = path.read_text().replace("spikecal 1", "spikecal 9", 1)
    path.write_text(text)
    with pytest.raises(FormatError):
        read_calibration(path)


def test_calibration_reader_rejects_missing_map(tmp_path):
    path = tmp_path / "sensor.cal"
    write_calibration(sample_calibration(), path)
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("map R ")]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError):
        read_calibration(path)


def test_calibration_reader_rejects_corrupt_payloads(tmp_path):
    path = tmp_path / "sensor.cal"
    write_calibration(sample_calibration(), path)
    original = path.read_text()

    # invalid base64 characters
    path.write_text(original.replace("map R ", "map R !!", 1))
    with pytest.raises(FormatError):
        read_calibration(path)

    # valid base64, wrong byte count
    short = base64.b64encode(b"\x00" * 8).decode()
    lines = [
        f"map R {short}" if ln.startswith("map R ") else ln
        for ln in original.splitlines()
    ]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError):
        read_calibration(path)


def test_calibration_reader_rejects_inconsistent_maps(tmp_path):
    calib = sample_calibration()
    path = tmp_path / "sensor.cal"
    write_calibration(calib, path)
    # replace the R payload with a doubled map: Q_r no longer matches
    doubled = base64.b64encode(
        np.ascontiguousarray(2.0 * calib.R, dtype="<f8").tobytes()
    ).decode()
    lines = [
        f"map R {doubled}" if ln.startswith("map R ") else ln
        for ln in path.read_text().splitlines()
    ]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError):
        read_calibration(path)


def test_calibration_reader_rejects_non_documents(tmp_path):
    path = tmp_path / "junk.cal"
    path.write_text("hello world\n")
    with pytest.raises(FormatError):
        read_calibration(path)
    path.write_text("")
    with pytest.raises(FormatError):
        read_calibration(path)
