import numpy as np
import pytest
import torch

from qmbridge import container, convert, toy
from qmbridge.errors import ManifestMismatch, ValidationError


def _export(tmp_path, ckpt, **kwargs):
    qmt = tmp_path / "w.qmt"
    mani = tmp_path / "w.json"
    manifest = convert.export_checkpoint(
        ckpt, qmt, mani, channel_axes=toy.channel_axes(), **kwargs
    )
    return qmt, mani, manifest


def test_export_selects_the_four_matrices(tmp_path, toy_checkpoint):
    qmt, _, manifest = _export(tmp_path, toy_checkpoint, model_id="toy")
    assert manifest.model_id == "toy"
    assert set(manifest.tensors) == set(toy.WEIGHT_NAMES)
    for name, entry in manifest.tensors.items():
        assert entry.dims == (8, 4)
        assert entry.channel_axis == (1 if ".reduce." in name else 0)
        assert entry.dtype == "float32"
    skipped = {s["name"]: s["reason"] for s in manifest.skipped}
    assert set(skipped) == set(toy.BIAS_NAMES)
    assert all("rank 1" in reason for reason in skipped.values())
    assert len(container.read_qmt(qmt)) == 4


@pytest.mark.parametrize("dtype", [torch.float32, torch.float16])
def test_export_widens_bit_exactly(tmp_path, dtype):
    state = toy.make_state(seed=3, dtype=dtype)
    ckpt = tmp_path / "src.pt"
    toy.save_state(ckpt, state)
    qmt, _, manifest = _export(tmp_path, ckpt)
    recs = {r.name: r for r in container.read_qmt(qmt)}
    for name in toy.WEIGHT_NAMES:
        widened = state[name].to(torch.float32).numpy().reshape(-1)
        assert np.array_equal(recs[name].data, widened)
        assert manifest.tensors[name].dtype == str(dtype).removeprefix("torch.")


def test_export_excludes_by_name(tmp_path):
    state = toy.make_state(seed=1)
    state["embed.weight"] = torch.zeros(8, 4)
    state["final_norm.weight"] = torch.ones(4, 4)
    ckpt = tmp_path / "src.pt"
    toy.save_state(ckpt, state)
    _, _, manifest = _export(tmp_path, ckpt)
    assert "embed.weight" not in manifest.tensors
    reasons = {s["name"]: s["reason"] for s in manifest.skipped}
    assert reasons["embed.weight"] == "excluded by name rule"
    assert reasons["final_norm.weight"] == "excluded by name rule"


def test_manifest_roundtrip_and_bijection(tmp_path, toy_checkpoint):
    _, mani, manifest = _export(tmp_path, toy_checkpoint)
    loaded = convert.TensorManifest.load(mani)
    assert loaded.model_id == manifest.model_id
    assert loaded.tensors == manifest.tensors
    assert loaded.skipped == manifest.skipped
    dup = {
        "a": convert.TensorEntry("same", 0, "float32", (2, 2)),
        "b": convert.TensorEntry("same", 0, "float32", (2, 2)),
    }
    with pytest.raises(ValidationError):
        convert.TensorManifest(model_id="x", tensors=dup)


def _quantize(nvmquant, qmt, qmq, rho="0.3"):
    nvmquant(
        "quantize", "--in", str(qmt), "--out", str(qmq),
        "--rho", rho, "--inlier-bits", "3", "--outlier-bits", "5",
    )


def test_import_preserves_untouched_tensors(tmp_path, toy_checkpoint, nvmquant):
    qmt, mani, _ = _export(tmp_path, toy_checkpoint)
    qmq = tmp_path / "w.qmq"
    _quantize(nvmquant, qmt, qmq)
    out = tmp_path / "rt.pt"
    convert.import_quantized(qmq, mani, toy_checkpoint, out_path=out)
    before = toy.load_state(toy_checkpoint)
    after = toy.load_state(out)
    assert set(after) == set(before)
    for name in toy.BIAS_NAMES:
        assert torch.equal(before[name], after[name])
    for name in toy.WEIGHT_NAMES:
        assert after[name].dtype == torch.float32
        assert after[name].shape == before[name].shape
        assert not torch.equal(before[name], after[name])  # 3-bit codes do lose something


def test_import_restores_recorded_dtype(tmp_path, nvmquant):
    state = toy.make_state(seed=4, dtype=torch.float16)
    ckpt = tmp_path / "h.pt"
    toy.save_state(ckpt, state)
    qmt, mani, _ = _export(tmp_path, ckpt)
    qmq = tmp_path / "h.qmq"
    _quantize(nvmquant, qmt, qmq)
    out = tmp_path / "h_rt.pt"
    convert.import_quantized(qmq, mani, ckpt, out_path=out)
    after = toy.load_state(out)
    for name in toy.WEIGHT_NAMES:
        assert after[name].dtype == torch.float16


def test_import_in_place_default(tmp_path, toy_checkpoint, nvmquant):
    qmt, mani, _ = _export(tmp_path, toy_checkpoint)
    qmq = tmp_path / "w.qmq"
    _quantize(nvmquant, qmt, qmq)
    convert.import_quantized(qmq, mani, toy_checkpoint)
    state = toy.load_state(toy_checkpoint)
    assert set(state) == set(toy.WEIGHT_NAMES) | set(toy.BIAS_NAMES)


def test_import_names_first_missing_tensor(tmp_path, toy_checkpoint, nvmquant):
    qmt, mani, manifest = _export(tmp_path, toy_checkpoint)
    qmq = tmp_path / "w.qmq"
    _quantize(nvmquant, qmt, qmq)
    first = next(iter(manifest.tensors))
    manifest.tensors[first].qmt_name = "ghost.weight"
    manifest.save(mani)
    with pytest.raises(ManifestMismatch, match="ghost.weight"):
        convert.import_quantized(qmq, mani, toy_checkpoint, out_path=tmp_path / "x.pt")


def test_import_rejects_unlisted_qmq_tensor(tmp_path, toy_checkpoint, nvmquant):
    qmt, mani, manifest = _export(tmp_path, toy_checkpoint)
    qmq = tmp_path / "w.qmq"
    _quantize(nvmquant, qmt, qmq)
    dropped = next(iter(manifest.tensors))
    del manifest.tensors[dropped]
    manifest.save(mani)
    with pytest.raises(ManifestMismatch, match="absent from the manifest"):
        convert.import_quantized(qmq, mani, toy_checkpoint, out_path=tmp_path / "x.pt")


def test_import_rejects_checkpoint_without_tensor(tmp_path, toy_checkpoint, nvmquant):
    qmt, mani, _ = _export(tmp_path, toy_checkpoint)
    qmq = tmp_path / "w.qmq"
    _quantize(nvmquant, qmt, qmq)
    state = toy.load_state(toy_checkpoint)
    del state["layers.0.expand.weight"]
    stripped = tmp_path / "stripped.pt"
    toy.save_state(stripped, state)
    with pytest.raises(ManifestMismatch, match="layers.0.expand.weight"):
        convert.import_quantized(qmq, mani, stripped, out_path=tmp_path / "x.pt")
