"""Tests for the voxel energy surrogate: model contract, training, saliency."""

import json

import numpy as np
import pytest
import torch

from voxsurrogate import data, saliency as sg, train as tr
from voxsurrogate.model import ModelSpec, build

torch.set_num_threads(1)

# small spec used wherever full 65^3 volumes would be needlessly slow
SMALL = ModelSpec(input_size=17, stem_filters=8, block_filters=(8, 16, 16, 32),
                  head_width=32, seed=0)


def synth_dataset(count, size=17, seed=0):
    """Synthetic volumes whose targets depend on simple occupancy statistics."""
    rng = np.random.Generator(np.random.Philox(key=np.uint64([seed, 5])))
    vols = (rng.random((count, size, size, size)) < rng.uniform(0.2, 0.7, (count, 1, 1, 1))).astype(np.float32)
    dens = vols.mean(axis=(1, 2, 3))
    core = vols[:, size // 3 : 2 * size // 3].mean(axis=(1, 2, 3))
    targets = np.stack([1e4 * dens**2, 5e3 * dens * core, 3e4 * dens], axis=1)
    return data.VoxelSampleSet(vols, targets.astype(np.float32))


@pytest.fixture(scope="module")
def full_model():
    return build(ModelSpec())


def test_forward_shape_contract(full_model):
    full_model.eval()
    x = torch.zeros(2, 65, 65, 65, 1)
    y = full_model(x)
    assert tuple(y.shape) == (2, 3)
    assert torch.isfinite(y).all()


def test_forward_shape_rejects_bad_input(full_model):
    with pytest.raises(ValueError):
        full_model(torch.zeros(2, 65, 65, 65))
    with pytest.raises(ValueError):
        full_model(torch.zeros(2, 65, 65, 65, 2))


def test_parameter_count_near_7_7m(full_model):
    count = full_model.parameter_count()
    assert abs(count - 7.7e6) <= 0.2 * 7.7e6, count


def test_identical_seeds_identical_weights():
    a, b = build(SMALL), build(SMALL)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    c = build(ModelSpec(input_size=17, stem_filters=8, block_filters=(8, 16, 16, 32),
                        head_width=32, seed=1))
    assert any(not torch.equal(pa, pc) for pa, pc in zip(a.parameters(), c.parameters()))


def test_forward_determinism():
    model = build(SMALL)
    model.eval()
    x = torch.rand(3, 17, 17, 17, 1, generator=torch.Generator().manual_seed(7))
    with torch.no_grad():
        assert torch.equal(model(x), model(x))


def test_metric_identities():
    rng = np.random.Generator(np.random.Philox(key=np.uint64([9, 0])))
    true = rng.standard_normal((40, 3)) * 10 + 5
    # perfect prediction
    assert np.allclose(tr.r_squared(true, true), 1.0)
    assert np.allclose(tr.nrmse_iqr(true, true), 0.0)
    # constant predictor at the mean has R^2 = 0
    const = np.tile(true.mean(axis=0), (40, 1))
    assert np.allclose(tr.r_squared(true, const), 0.0, atol=1e-12)


def test_split_fractions():
    idx = data.split_indices(100, (0.8, 0.1, 0.1), seed=0)
    assert len(idx.train) == 80 and len(idx.val) == 10 and len(idx.test) == 10
    combined = np.sort(np.concatenate([idx.train, idx.val, idx.test]))
    assert (combined == np.arange(100)).all()
    with pytest.raises(ValueError):
        data.split_indices(10, (0.8, 0.1, 0.2))
    with pytest.raises(ValueError):
        tr.TrainSpec(split=(0.5, 0.5, 0.5))


def test_sample_round_trip(tmp_path):
    rng = np.random.Generator(np.random.Philox(key=np.uint64([10, 0])))
    vol = (rng.random((9, 9, 9)) < 0.4).astype(np.uint8)
    stem = tmp_path / "s_000"
    vol.tofile(str(stem) + ".u8")
    sidecar = {"shape": [9, 9, 9], "dtype": "uint8", "order": "C",
               "properties": {"U_a": 1.5, "U_s": 0.5, "U_d": 2.5}}
    (tmp_path / "s_000.json").write_text(json.dumps(sidecar))
    back, targets = data.read_sample(stem)
    assert (back == vol).all()
    assert targets.tolist() == [1.5, 0.5, 2.5]
    ds = data.VoxelSampleSet.from_directory(tmp_path)
    assert len(ds) == 1
    x, y = ds[0]
    assert tuple(x.shape) == (9, 9, 9, 1)


def test_sample_errors(tmp_path):
    (tmp_path / "bad.u8").write_bytes(b"\x00" * 10)
    (tmp_path / "bad.json").write_text(json.dumps({"shape": [9, 9, 9]}))
    with pytest.raises(data.SampleFormatError):
        data.read_sample(tmp_path / "bad")
    with pytest.raises(data.SampleFormatError):
        data.VoxelSampleSet.from_directory(tmp_path)


def test_overfit_probe_mse_drops_100x():
    # 200 records, capacity check: training loss falls >= 100x
    dataset = synth_dataset(200)
    model = build(SMALL)
    spec = tr.TrainSpec(epochs=200, learning_rate=1e-3, batch_size=32,
                        split=(1.0, 0.0, 0.0), seed=0)
    metrics = tr.train(model, dataset, spec)
    losses = metrics["curves"]["train_loss"]
    assert losses[-1] <= losses[0] / 100.0, (losses[0], losses[-1])
    assert metrics["evaluated_on"] == "train"


def test_train_reports_held_out_metrics():
    dataset = synth_dataset(120)
    model = build(SMALL)
    spec = tr.TrainSpec(epochs=3, seed=0)
    metrics = tr.train(model, dataset, spec)
    assert metrics["evaluated_on"] == "test"
    assert set(metrics["R2"]) == set(data.TARGET_KEYS)
    assert set(metrics["NRMSE_IQR"]) == set(data.TARGET_KEYS)
    assert all(np.isfinite(v) for v in metrics["R2"].values())
    assert len(metrics["curves"]["train_loss"]) == 3


def test_training_divergence_detected():
    dataset = synth_dataset(50)
    model = build(SMALL)
    with torch.no_grad():
        for p in model.parameters():
            p.mul_(1e20)
    with pytest.raises(tr.TrainingDiverged):
        tr.train(model, dataset, tr.TrainSpec(epochs=1, split=(1.0, 0.0, 0.0)))


def test_checkpoint_round_trip(tmp_path):
    model = build(SMALL)
    model.set_target_scaling([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    path = tmp_path / "ck.pt"
    tr.save_checkpoint(model, path)
    back = tr.load_checkpoint(path)
    assert back.spec == SMALL
    x = torch.rand(2, 17, 17, 17, 1, generator=torch.Generator().manual_seed(3))
    model.eval()
    with torch.no_grad():
        assert torch.equal(model(x), back(x))


@pytest.fixture(scope="module")
def trained_small():
    dataset = synth_dataset(64)
    model = build(SMALL)
    tr.train(model, dataset, tr.TrainSpec(epochs=2, split=(1.0, 0.0, 0.0), seed=0))
    vol = dataset.volumes[0].numpy()
    return model, vol


def test_saliency_range_and_mask(trained_small):
    model, vol = trained_small
    sal = sg.smoothgrad(model, vol, target_index=0, copies=8, seed=0)
    assert sal.shape == vol.shape
    assert sal.min() >= 0.0 and sal.max() <= 1.0
    assert (sal[vol == 0] == 0).all()
    assert sal.max() == 1.0  # normalized peak for a nonzero map


def test_saliency_degenerate_equals_plain_gradient(trained_small):
    model, vol = trained_small
    a = sg.smoothgrad(model, vol, target_index=1, copies=1, sigma=0.0)
    x = torch.from_numpy(vol)[None, ..., None].requires_grad_(True)
    model(x)[0, 1].backward()
    plain = x.grad.abs()[0, ..., 0].numpy() * (vol > 0)
    top = np.percentile(plain[vol > 0], 99.0)
    plain = np.minimum(plain, top)
    plain = plain / plain.max()
    assert np.allclose(a, plain, atol=1e-7)


def test_saliency_bias_invariance(trained_small):
    model, vol = trained_small
    before = sg.smoothgrad(model, vol, target_index=2, copies=4, seed=1)
    with torch.no_grad():
        model.head[-1].bias += 123.0  # same constant on all three outputs
    after = sg.smoothgrad(model, vol, target_index=2, copies=4, seed=1)
    with torch.no_grad():
        model.head[-1].bias -= 123.0
    assert np.allclose(before, after, atol=1e-7)


def test_saliency_validation(trained_small):
    model, vol = trained_small
    with pytest.raises(ValueError):
        sg.smoothgrad(model, vol, target_index=3)
    with pytest.raises(ValueError):
        sg.smoothgrad(model, vol, target_index=0, copies=0)
    model.train()
    with pytest.warns(UserWarning):
        sg.smoothgrad(model, vol, target_index=0, copies=1, sigma=0.0)


def test_gradient_matches_finite_differences(trained_small):
    # input-gradient vs central differences on 10 random voxels, 1e-2
    # relative at float32 working precision
    model, vol = trained_small
    model.eval()
    x = torch.from_numpy(vol)[None, ..., None].double().requires_grad_(True)
    model_d = model.double()
    model_d(x)[0, 0].backward()
    grad = x.grad[0, ..., 0].numpy()
    rng = np.random.Generator(np.random.Philox(key=np.uint64([12, 0])))
    solid = np.argwhere(vol > 0)
    picks = solid[rng.choice(len(solid), 10, replace=False)]
    h = 1e-4
    for i, j, k in picks:
        plus = vol.copy(); plus[i, j, k] += h
        minus = vol.copy(); minus[i, j, k] -= h
        with torch.no_grad():
            fp = model_d(torch.from_numpy(plus)[None, ..., None].double())[0, 0]
            fm = model_d(torch.from_numpy(minus)[None, ..., None].double())[0, 0]
        fd = float(fp - fm) / (2 * h)
        ref = grad[i, j, k]
        assert abs(fd - ref) <= 1e-2 * max(abs(ref), 1e-8), (fd, ref)
    model.float()


def test_save_saliency_files(tmp_path, trained_small):
    model, vol = trained_small
    sal = sg.smoothgrad(model, vol, target_index=0, copies=2, seed=0)
    sidecar = sg.save_saliency(sal, tmp_path / "sal_0", extra={"target": "U_a"})
    raw = np.fromfile(tmp_path / "sal_0.f32", dtype="<f4").reshape(sal.shape)
    assert np.array_equal(raw, sal)
    meta = json.loads((tmp_path / "sal_0.json").read_text())
    assert meta == sidecar and meta["dtype"] == "float32"


def test_cli_train_and_saliency(tmp_path):
    from voxsurrogate import cli

    rng = np.random.Generator(np.random.Philox(key=np.uint64([14, 0])))
    data_dir = tmp_path / "samples"
    data_dir.mkdir()
    for i in range(12):
        vol = (rng.random((9, 9, 9)) < 0.5).astype(np.uint8)
        vol.tofile(data_dir / f"s_{i:03d}.u8")
        (data_dir / f"s_{i:03d}.json").write_text(json.dumps({
            "shape": [9, 9, 9], "dtype": "uint8", "order": "C",
            "properties": {"U_a": float(vol.mean()), "U_s": 0.5, "U_d": 1.0},
        }))
    metrics_path = tmp_path / "metrics.json"
    ck_path = tmp_path / "model.pt"
    rc = cli.main(["train", "--data-dir", str(data_dir), "--epochs", "1",
                   "--batch-size", "4", "--split", "0.8", "0.1", "0.1",
                   "--seed", "0", "--metrics", str(metrics_path),
                   "--checkpoint", str(ck_path)])
    assert rc == 0
    metrics = json.loads(metrics_path.read_text())
    assert "R2" in metrics and metrics["parameter_count"] > 0
    out_dir = tmp_path / "sal"
    rc = cli.main(["saliency", "--checkpoint", str(ck_path),
                   "--data-dir", str(data_dir), "--out-dir", str(out_dir),
                   "--copies", "2", "--limit", "1"])
    assert rc == 0
    raws = sorted(out_dir.glob("*.f32"))
    assert len(raws) == 3  # one volume per target
    sal = np.fromfile(raws[0], dtype="<f4")
    assert sal.size == 9**3 and sal.min() >= 0 and sal.max() <= 1
