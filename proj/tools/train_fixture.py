#!/usr/bin/env python3
"""Trains the bundled digits fixture network and writes it in the manifest format.

Offline helper; the C++ artifact only runs inference on its output.

    python3 tools/train_fixture.py --out data/fixture
"""

import argparse
import json
from pathlib import Path

import numpy as np
import torch
from sklearn.datasets import load_digits
from torch import nn

TEST_COUNT = 500
CALIB_COUNT = 200


class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 8, 3, padding=1)
        self.conv2 = nn.Conv2d(8, 16, 3, padding=1)
        self.fc = nn.Linear(64, 10)

    def forward(self, x):
        x = torch.max_pool2d(torch.relu(self.conv1(x)), 2)
        x = torch.max_pool2d(torch.relu(self.conv2(x)), 2)
        return self.fc(x.flatten(1))


def write_f32(path, array):
    np.asarray(array, dtype="<f4").tofile(path)


def write_dataset(out, stem, images, labels):
    write_f32(out / f"{stem}_x.bin", images)
    np.asarray(labels, dtype="<i4").tofile(out / f"{stem}_y.bin")
    manifest = {"count": int(len(labels)), "shape": [1, 8, 8],
                "images": f"{stem}_x.bin", "labels": f"{stem}_y.bin"}
    (out / f"{stem}.json").write_text(json.dumps(manifest, indent=2) + "\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("data/fixture"))
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(args.seed)
    digits = load_digits()
    x = (digits.images / 16.0).astype(np.float32)[:, None, :, :]
    y = digits.target.astype(np.int64)
    order = np.random.default_rng(args.seed).permutation(len(y))
    test, calib, train = np.split(order, [TEST_COUNT, TEST_COUNT + CALIB_COUNT])

    net = Net()
    opt = torch.optim.Adam(net.parameters(), lr=3e-3)
    xt, yt = torch.from_numpy(x[train]), torch.from_numpy(y[train])
    for _ in range(args.epochs):
        perm = torch.randperm(len(yt))
        for i in range(0, len(yt), 64):
            idx = perm[i:i + 64]
            opt.zero_grad()
            nn.functional.cross_entropy(net(xt[idx]), yt[idx]).backward()
            opt.step()

    with torch.no_grad():
        acc = (net(torch.from_numpy(x[test])).argmax(1).numpy() == y[test]).mean()
    print(f"float test accuracy: {acc:.4f}")

    layers = []
    for name, module in [("conv1", net.conv1), ("conv2", net.conv2), ("fc", net.fc)]:
        write_f32(args.out / f"{name}_w.bin", module.weight.detach().numpy())
        write_f32(args.out / f"{name}_b.bin", module.bias.detach().numpy())
        if isinstance(module, nn.Conv2d):
            layers.append({"type": "conv", "in_channels": module.in_channels,
                           "out_channels": module.out_channels, "kernel": 3, "stride": 1, "padding": 1,
                           "weights": f"{name}_w.bin", "bias": f"{name}_b.bin"})
            layers += [{"type": "relu"}, {"type": "maxpool", "size": 2}]
        else:
            layers += [{"type": "flatten"},
                       {"type": "fc", "in_features": module.in_features, "out_features": module.out_features,
                        "weights": f"{name}_w.bin", "bias": f"{name}_b.bin"}]

    manifest_path = args.out / "network.json"
    previous = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
    manifest = {"name": "digits8x8", "input_shape": [1, 8, 8], "layers": layers,
                "float_test_accuracy": float(acc)}
    for key in ("e2m5_min_agreement", "e2m5_measured_agreement"):
        if key in previous:
            manifest[key] = previous[key]
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")

    write_dataset(args.out, "test", x[test], y[test])
    write_dataset(args.out, "calib", x[calib], y[calib])


if __name__ == "__main__":
    main()
