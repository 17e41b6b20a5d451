"""Checkpoint round trips and corruption handling."""

import json
import struct

import numpy as np
import pytest

from neuralogram.checkpoint import (MAGIC, Checkpoint, checkpoint_from_network,
                                    load_checkpoint, network_from_checkpoint,
                                    save_checkpoint)
from neuralogram.errors import (CheckpointFormatError,
                                CheckpointIntegrityError,
                                CheckpointVersionError)
from neuralogram.layers import conv_spec, dense_spec, pool_spec, relu_spec, softmax_spec
from neuralogram.network import Network
from neuralogram.rng import Rng
from neuralogram.serialization import pack_block, unpack_block


def small_net():
    specs = [conv_spec(2), relu_spec(), pool_spec(2, 2),
             dense_spec(4), relu_spec(), dense_spec(3), softmax_spec()]
    net = Network(specs, input_shape=(1, 9, 9))
    net.init_params(Rng(5))
    return net, specs


def make_ckpt():
    net, _ = small_net()
    return checkpoint_from_network(net, embedding_layer_index=4,
                                   rng_spec=Rng(5).spec(),
                                   metadata={"note": "fixture", "steps": 12})


def rewrite_header(path, mutate):
    """Load a checkpoint file, apply ``mutate(header)``, write it back."""
    blob = path.read_bytes()
    header, payload = unpack_block(blob, MAGIC)
    mutate(header)
    path.write_bytes(pack_block(MAGIC, header, payload))


def test_round_trip_bit_identical(tmp_path):
    ckpt = make_ckpt()
    p = tmp_path / "model.nlgc"
    save_checkpoint(ckpt, p)
    loaded = load_checkpoint(p)
    assert loaded.format_version == 1
    assert loaded.architecture == ckpt.architecture
    assert loaded.embedding_layer_index == 4
    assert loaded.input_shape == (1, 9, 9)
    assert loaded.metadata == {"note": "fixture", "steps": 12}
    assert loaded.rng_spec == ckpt.rng_spec
    assert set(loaded.params) == set(ckpt.params)
    for name in ckpt.params:
        assert np.array_equal(loaded.params[name], ckpt.params[name])
        assert loaded.params[name].dtype == np.float32


def test_save_is_deterministic(tmp_path):
    ckpt = make_ckpt()
    p1, p2 = tmp_path / "a.nlgc", tmp_path / "b.nlgc"
    save_checkpoint(ckpt, p1)
    save_checkpoint(ckpt, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_network_round_trip_same_outputs(tmp_path):
    net, _ = small_net()
    ckpt = checkpoint_from_network(net, 4)
    p = tmp_path / "m.nlgc"
    save_checkpoint(ckpt, p)
    net2 = network_from_checkpoint(load_checkpoint(p))
    x = (Rng(9).uniform(2 * 81).reshape(2, 1, 9, 9)).astype(np.float32)
    assert np.array_equal(net.forward(x), net2.forward(x))


def test_missing_file():
    with pytest.raises(CheckpointFormatError):
        load_checkpoint("/nonexistent/path/model.nlgc")


def test_corrupted_magic(tmp_path):
    p = tmp_path / "m.nlgc"
    save_checkpoint(make_ckpt(), p)
    blob = bytearray(p.read_bytes())
    blob[:8] = b"BADMAGIC"
    p.write_bytes(bytes(blob))
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(p)


def test_garbage_json_header(tmp_path):
    p = tmp_path / "m.nlgc"
    junk = b"{not json"
    p.write_bytes(MAGIC + struct.pack("<I", len(junk)) + junk)
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(p)


def test_version_mismatch(tmp_path):
    p = tmp_path / "m.nlgc"
    save_checkpoint(make_ckpt(), p)
    rewrite_header(p, lambda h: h.update(format_version=99))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(p)


def test_truncated_payload(tmp_path):
    p = tmp_path / "m.nlgc"
    save_checkpoint(make_ckpt(), p)
    blob = p.read_bytes()
    p.write_bytes(blob[:-20])
    with pytest.raises(CheckpointIntegrityError):
        load_checkpoint(p)


def test_truncated_header(tmp_path):
    p = tmp_path / "m.nlgc"
    save_checkpoint(make_ckpt(), p)
    p.write_bytes(p.read_bytes()[:20])
    with pytest.raises(CheckpointIntegrityError):
        load_checkpoint(p)


def test_shape_product_mismatch(tmp_path):
    p = tmp_path / "m.nlgc"
    save_checkpoint(make_ckpt(), p)

    def mutate(h):
        h["tensors"][-1]["shape"] = [512, 512]    # overruns the payload

    rewrite_header(p, mutate)
    with pytest.raises(CheckpointIntegrityError):
        load_checkpoint(p)


def test_shape_inconsistent_with_architecture(tmp_path):
    p = tmp_path / "m.nlgc"
    save_checkpoint(make_ckpt(), p)

    def mutate(h):
        # swap a declared tensor shape while keeping the element count
        entry = next(e for e in h["tensors"] if e["name"] == "layer00.bias")
        entry["shape"] = [1, 2]

    rewrite_header(p, mutate)
    with pytest.raises(CheckpointIntegrityError):
        load_checkpoint(p)


def test_embedding_index_out_of_range(tmp_path):
    p = tmp_path / "m.nlgc"
    save_checkpoint(make_ckpt(), p)
    rewrite_header(p, lambda h: h.update(embedding_layer_index=42))
    with pytest.raises(CheckpointIntegrityError):
        load_checkpoint(p)
    ckpt = make_ckpt()
    ckpt.embedding_layer_index = -1
    with pytest.raises(CheckpointIntegrityError):
        save_checkpoint(ckpt, tmp_path / "n.nlgc")


def test_missing_parameter_rejected(tmp_path):
    p = tmp_path / "m.nlgc"
    save_checkpoint(make_ckpt(), p)

    def mutate(h):
        h["tensors"] = [e for e in h["tensors"] if e["name"] != "layer03.bias"]

    rewrite_header(p, mutate)
    with pytest.raises(CheckpointIntegrityError):
        load_checkpoint(p)


def test_header_is_canonical_json(tmp_path):
    p = tmp_path / "m.nlgc"
    save_checkpoint(make_ckpt(), p)
    blob = p.read_bytes()
    (hlen,) = struct.unpack("<I", blob[8:12])
    header = json.loads(blob[12: 12 + hlen])
    assert header["format_version"] == 1
    assert [s["kind"] for s in header["architecture"]] == \
        ["conv2d", "relu", "maxpool2d", "dense", "relu", "dense", "softmax"]
    offsets = [t["offset"] for t in header["tensors"]]
    assert offsets == sorted(offsets) and offsets[0] == 0
