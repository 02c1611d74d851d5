import numpy as np
import pytest

from blockcirc import datasets as ds
from blockcirc import modelfile as mf
from blockcirc import quantization as qz
from blockcirc import training as tr
from blockcirc.errors import (
    BadMagic,
    ChecksumMismatch,
    CountMismatch,
    InvalidSpec,
    TruncatedFile,
    VersionMismatch,
)

from conftest import write_idx_labels


# ------------------------------------------------------------------- IDX


def test_idx_fixture_roundtrip(idx_fixture):
    ipath, lpath, images, labels = idx_fixture
    handle = ds.load_mnist(ipath, lpath)
    assert handle.images.shape == (4, 28, 28, 1)
    assert np.array_equal(handle.labels, labels)
    assert handle.images[0, 0, 0, 0] == 1.0  # byte 255 scales exactly to 1
    assert np.allclose(handle.images, images[..., None] / 255.0, atol=0)


def test_idx_swapped_files_rejected(idx_fixture):
    ipath, lpath, _, _ = idx_fixture
    with pytest.raises(BadMagic):
        ds.load_mnist(lpath, ipath)


def test_idx_truncated_payload(tmp_path, idx_fixture):
    ipath, lpath, _, _ = idx_fixture
    data = ipath.read_bytes()
    bad = tmp_path / "short-images"
    bad.write_bytes(data[:-10])
    with pytest.raises(TruncatedFile):
        ds.load_mnist(bad, lpath)


def test_idx_count_mismatch(tmp_path, idx_fixture):
    ipath, _, _, _ = idx_fixture
    lpath = tmp_path / "labels5"
    write_idx_labels(lpath, np.array([1, 2, 3, 4, 5], dtype=np.uint8))
    with pytest.raises(CountMismatch):
        ds.load_mnist(ipath, lpath)


# ------------------------------------------------------------------ synth


def test_synth_deterministic():
    a = ds.synth_dataset(seed=5, n_per_class=10, classes=3, dim=4)
    b = ds.synth_dataset(seed=5, n_per_class=10, classes=3, dim=4)
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.labels, b.labels)


def test_synth_well_separated_is_learnable():
    data = ds.synth_dataset(seed=6, n_per_class=100, classes=2, dim=8, separation=10.0)
    spec = tr.ArchSpec((8,), [("fc", {"out": 8, "k": 2, "act": "relu"}),
                              ("fc", {"out": 2, "k": 2, "act": "identity"})])
    net = tr.init_network(spec, seed=0)
    rep = tr.train(net, data, tr.TrainConfig(learning_rate=0.1, epochs=20,
                                             batch_size=20, seed=0))
    assert rep.accuracy >= 0.99


def test_synth_zero_separation_is_chance():
    data = ds.synth_dataset(seed=7, n_per_class=600, classes=3, dim=8, separation=0.0)
    spec = tr.ArchSpec((8,), [("fc", {"out": 3, "k": 1, "act": "identity"})])
    net = tr.init_network(spec, seed=1)
    tr.train(net, data, tr.TrainConfig(learning_rate=0.05, epochs=3,
                                       batch_size=32, seed=1))
    acc = tr.evaluate(net, data)
    assert abs(acc - 1 / 3) <= 0.05


# ------------------------------------------------------------- model files


def small_net(seed=0):
    spec = tr.ArchSpec((4, 4, 2), [("conv", {"out": 2, "r": 3, "k": 2}),
                                   ("relu", {}), ("flatten", {}),
                                   ("fc", {"out": 3, "k": 2, "act": "identity"})])
    return tr.init_network(spec, seed=seed)


def test_model_roundtrip_bitwise(tmp_path):
    net = small_net()
    path = tmp_path / "m.bcm"
    mf.save_model(net, path)
    loaded, q = mf.load_model(path)
    assert q is None
    assert loaded.input_shape == net.input_shape
    for a, b in zip(net.param_layers(), loaded.param_layers()):
        for wa, wb in zip(tr._layer_matrices(a), tr._layer_matrices(b)):
            assert np.array_equal(wa.weights, wb.weights)
        assert np.array_equal(a.bias, b.bias)


def test_model_truncation_detected(tmp_path):
    net = small_net()
    path = tmp_path / "m.bcm"
    mf.save_model(net, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(TruncatedFile):
        mf.load_model(path)


def test_model_flipped_byte_detected(tmp_path):
    net = small_net()
    path = tmp_path / "m.bcm"
    mf.save_model(net, path)
    raw = bytearray(path.read_bytes())
    raw[-3] ^= 0x40
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumMismatch):
        mf.load_model(path)


def test_model_version_checked(tmp_path):
    net = small_net()
    path = tmp_path / "m.bcm"
    mf.save_model(net, path)
    raw = path.read_bytes()
    hacked = raw.replace(b'"version": 1', b'"version": 9', 1)
    path.write_bytes(hacked)
    with pytest.raises((VersionMismatch, ChecksumMismatch)):
        mf.load_model(path)


def test_model_bad_magic(tmp_path):
    path = tmp_path / "m.bcm"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(VersionMismatch):
        mf.load_model(path)


def test_quantized_model_roundtrip_exact(tmp_path):
    net = small_net(seed=3)
    q = qz.quantize_network(net)
    path = tmp_path / "q.bcm"
    mf.save_model(net, path, qlayers=q)
    loaded, q2 = mf.load_model(path)
    assert q2 is not None
    for a, b in zip(q, q2):
        assert a["weights"].frac_bits == b["weights"].frac_bits
        assert np.array_equal(a["weights"].raw, b["weights"].raw.reshape(a["weights"].raw.shape))
        assert np.array_equal(a["bias"].raw, b["bias"].raw)
    # loaded weights are exactly the dequantized fixed-point values
    fc = loaded.param_layers()[-1]
    assert np.array_equal(fc.W.weights, qz.dequantize(q2[-1]["weights"]))


# -------------------------------------------------------------- arch files


def test_parse_arch_roundtrip():
    spec = mf.parse_arch("""
    # comment
    input 784
    fc 256 k=16 act=relu
    fc 10 k=16 act=identity
    """)
    assert spec.input_shape == (784,)
    assert spec.stages[0] == ("fc", {"out": 256, "k": 16, "act": "relu"})
    net = tr.init_network(spec, seed=0)
    assert net.n_classes == 10


def test_parse_arch_conv_stack():
    spec = mf.parse_arch("""
    input 12 12 4
    conv 8 r=3 k=4
    relu
    pool
    flatten
    fc 4 k=2 act=identity
    """)
    net = tr.init_network(spec, seed=0)
    assert net.n_classes == 4


def test_parse_arch_default_k():
    spec = mf.parse_arch("input 8\nfc 4", default_k=4)
    assert spec.stages[0][1]["k"] == 4


def test_parse_arch_errors():
    with pytest.raises(InvalidSpec):
        mf.parse_arch("fc 4")  # missing input
    with pytest.raises(InvalidSpec):
        mf.parse_arch("input 8\nwibble 3")
    with pytest.raises(InvalidSpec):
        mf.parse_arch("input 8\nfc 4 k=two")
    with pytest.raises(InvalidSpec):
        mf.parse_arch("input 8\nfc 4 window=3")
