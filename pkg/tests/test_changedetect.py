import numpy as np
import pytest

from tcam import changedetect as cd
from tcam.errors import ConsistencyError, FormatError
from tcam.frame import SubFrame, YuvFrame, psnr
from tcam.intra import intra_decode, intra_encode
from tcam.jpeg import jpeg_decode


def nibble_oracle(block):
    out = []
    for r in range(4):
        for c in range(4):
            sub = block[4 * r:4 * r + 4, 4 * c:4 * c + 4]
            out.append(int(sum(int(v) for v in sub.ravel()) // 16) >> 4)
    return out


def test_pattern_vector_extremes():
    assert cd.pattern_vector(np.zeros((16, 16))) == 0
    assert cd.pattern_vector(np.full((16, 16), 255)) == 0xFFFF_FFFF_FFFF_FFFF


def test_pattern_vector_oracle(rng):
    for _ in range(20):
        block = rng.integers(0, 256, (16, 16))
        expect = 0
        for n in nibble_oracle(block):
            expect = (expect << 4) | n
        assert cd.pattern_vector(block) == expect


def test_pattern_noise_invariance(rng):
    for base in range(8, 248, 7):
        block = np.full((16, 16), base)
        noisy = np.clip(block + rng.integers(-7, 8, block.shape), 0, 255)
        a = cd.pattern_nibbles(block).astype(int)
        b = cd.pattern_nibbles(noisy).astype(int)
        assert np.abs(a - b).max() <= 1


def test_hamming_distance():
    a = np.zeros(16, np.uint8)
    b = a.copy()
    b[0] = 0xF
    b[3] = 0x1
    assert cd.vector_distance(a, b, cd.Distance.HAMMING) == 5
    assert cd.vector_distance(a, b) == 16


def test_self_compare_zero_map(pair_yuv):
    ref_frame, _ = pair_yuv
    ref = cd.ReferenceState.from_frame(ref_frame)
    decoded = jpeg_decode(ref.bitstream)
    assert cd.change_map(decoded, ref).count() == 0


def test_inverted_mcb_detected(pair_yuv):
    ref = cd.ReferenceState.from_frame(pair_yuv[0])
    base = jpeg_decode(ref.bitstream)
    y = base.y.copy()
    y[16 * 7:16 * 8, 16 * 12:16 * 13] = 255 - y[16 * 7:16 * 8, 16 * 12:16 * 13]
    cur = YuvFrame(y, base.u, base.v)
    cmap = cd.change_map(cur, ref)
    expect = cd.vector_distance(cd.pattern_nibbles(y), ref.nibbles) > cd.DEFAULT_TAU
    assert np.array_equal(cmap.bits, expect)
    assert cmap.count() == 1 and cmap.bits[7, 12]


def test_map_serialises_to_1200_bits(tmp_path, rng):
    cmap = cd.ChangeMap(rng.random((30, 40)) < 0.2)
    assert cmap.nbits == 1200
    assert len(cmap.to_bytes()) == 9 + 150
    cmap.save(tmp_path / "m")
    assert np.array_equal(cd.ChangeMap.load(tmp_path / "m").bits, cmap.bits)
    with pytest.raises(FormatError):
        cd.ChangeMap.from_bytes(cmap.to_bytes()[:-1])


def test_all_zero_map_reconstructs_reference(pair_yuv):
    ref = cd.ReferenceState.from_frame(pair_yuv[0])
    cmap = cd.ChangeMap.full(value=False)
    roi, _ = cd.prune_and_encode(pair_yuv[1], cmap)
    assert roi.bit_length == 0
    assert cd.egress_bits(roi, cmap) == 1200 + len(roi.header) * 8
    rec = cd.reconstruct_yuv(ref, cmap, roi)
    base = jpeg_decode(ref.bitstream)
    assert np.array_equal(rec.y, base.y) and np.array_equal(rec.u, base.u)


def test_all_one_map_is_full_intra(pair_yuv):
    ref = cd.ReferenceState.from_frame(pair_yuv[0])
    cmap = cd.ChangeMap.full()
    roi, _ = cd.prune_and_encode(pair_yuv[1], cmap)
    full = intra_encode(pair_yuv[1])
    assert roi.payload == full.payload
    rec = cd.reconstruct_yuv(ref, cmap, roi)
    for (bx, by), m in intra_decode(full).items():
        assert np.array_equal(rec.y[by * 16:by * 16 + 16, bx * 16:bx * 16 + 16], m.y)


def test_pair_pruning_and_per_mcb_equality(pair_yuv):
    ref = cd.ReferenceState.from_frame(pair_yuv[0])
    cur = pair_yuv[1]
    cmap = cd.change_map(cur, ref)
    assert 0.80 <= 1 - cmap.changed_fraction() <= 0.92
    roi, _ = cd.prune_and_encode(cur, cmap)
    assert 20_000 <= cd.egress_bits(roi, cmap) <= 35_000
    rec = cd.reconstruct_yuv(ref, cmap, roi)
    base = jpeg_decode(ref.bitstream)
    full = intra_decode(intra_encode(cur))
    for by in range(30):
        for bx in range(40):
            sl = np.s_[by * 16:by * 16 + 16, bx * 16:bx * 16 + 16]
            want = full[(bx, by)].y if cmap.bits[by, bx] else base.y[sl]
            assert np.array_equal(rec.y[sl], want)


def test_reconstruct_size_mismatch(pair_yuv):
    ref = cd.ReferenceState.from_frame(pair_yuv[0])
    with pytest.raises(ConsistencyError):
        cd.reconstruct_yuv(ref, cd.ChangeMap.full(29, 40), intra_encode(pair_yuv[1]))
    with pytest.raises(FormatError):
        cd.ReferenceState.from_bitstream(intra_encode(pair_yuv[1]))


def test_reconstruction_quality(pair_yuv):
    ref = cd.ReferenceState.from_frame(pair_yuv[0])
    cmap = cd.change_map(pair_yuv[1], ref)
    roi, _ = cd.prune_and_encode(pair_yuv[1], cmap)
    rec = cd.reconstruct_yuv(ref, cmap, roi)
    assert psnr(rec.y, pair_yuv[1].y) > 25


def test_motion_detect_examples():
    z = SubFrame(np.zeros((20, 32)))
    assert not cd.motion_detect(z, z)
    assert cd.motion_detect(SubFrame(np.full((20, 32), 255)), z, 254, 640)
    one = np.zeros((20, 32))
    one[3, 4] = 100
    assert not cd.motion_detect(SubFrame(one), z, pix_thresh=20, count_thresh=2)


def test_motion_detect_counting_oracle(rng):
    for _ in range(50):
        a = rng.integers(0, 256, (20, 32))
        b = np.clip(a + rng.integers(-40, 41, a.shape), 0, 255)
        pt, ct = int(rng.integers(0, 40)), int(rng.integers(1, 300))
        n = sum(abs(int(x) - int(y)) > pt for x, y in zip(a.ravel(), b.ravel()))
        assert cd.motion_detect(SubFrame(b), SubFrame(a), pt, ct) == (n >= ct)
