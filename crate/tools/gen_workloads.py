#!/usr/bin/env python3
"""Generates the WL1-WL4 analog workload fixtures.

Layer shapes follow the usual ImageNet definitions of each network. Weight
storage is 8-bit parameters multiplied by WEIGHT_SCALE so every workload
fits the ~98 MB reference system; MACs and activations are unscaled.
Residual and dense connections are kept as extra successors.
"""
import json
import sys
from pathlib import Path

WEIGHT_SCALE = 0.4
OUT = Path(__file__).resolve().parent.parent / "crates/core/data/workloads"


class Net:
    def __init__(self, name):
        self.name = name
        self.layers = []

    def add(self, kind, params, macs, act_elems, skip_from=None):
        lid = f"{self.name}.{len(self.layers):03d}.{kind}"
        self.layers.append(
            {
                "id": lid,
                "weight_kb": round(params * WEIGHT_SCALE / 1024.0, 3),
                "macs": float(macs),
                "activations_out_bits": float(act_elems * 8),
                "sparsity": 1.0,
                "successors": [],
            }
        )
        if len(self.layers) > 1:
            self.layers[-2]["successors"].append(lid)
        if skip_from is not None and skip_from < len(self.layers) - 2:
            src = self.layers[skip_from]
            if lid not in src["successors"]:
                src["successors"].append(lid)
        return len(self.layers) - 1

    def conv(self, k, cin, cout, hw, groups=1, skip_from=None):
        params = k * k * cin * cout // groups
        return self.add("conv", params, params * hw * hw, cout * hw * hw, skip_from)

    def fc(self, cin, cout):
        return self.add("fc", cin * cout, cin * cout, cout)

    def dump(self):
        return {"name": self.name, "layers": self.layers}


def resnet(depth):
    cfg = {18: ("basic", [2, 2, 2, 2]), 34: ("basic", [3, 4, 6, 3]), 152: ("bottleneck", [3, 8, 36, 3])}
    block, counts = cfg[depth]
    n = Net(f"resnet{depth}")
    last = n.conv(7, 3, 64, 112)
    cin, hw = 64, 56
    for stage, blocks in enumerate(counts):
        width = 64 * 2**stage
        for b in range(blocks):
            if stage > 0 and b == 0:
                hw //= 2
            start = last
            if block == "basic":
                n.conv(3, cin, width, hw)
                last = n.conv(3, width, width, hw, skip_from=start)
                cin = width
            else:
                n.conv(1, cin, width, hw)
                n.conv(3, width, width, hw)
                last = n.conv(1, width, width * 4, hw, skip_from=start)
                cin = width * 4
    n.fc(cin, 1000)
    return n


def vgg(depth):
    cfg = {16: [2, 2, 3, 3, 3], 19: [2, 2, 4, 4, 4]}[depth]
    n = Net(f"vgg{depth}")
    cin, hw = 3, 224
    for stage, reps in enumerate(cfg):
        width = min(64 * 2**stage, 512)
        for _ in range(reps):
            n.conv(3, cin, width, hw)
            cin = width
        hw //= 2
    n.fc(512 * 7 * 7, 4096)
    n.fc(4096, 4096)
    n.fc(4096, 1000)
    return n


def mobilenet_v2():
    n = Net("mobilenetv2")
    n.conv(3, 3, 32, 112)
    cin, hw = 32, 112
    for t, c, reps, s in [(1, 16, 1, 1), (6, 24, 2, 2), (6, 32, 3, 2), (6, 64, 4, 2), (6, 96, 3, 1), (6, 160, 3, 2), (6, 320, 1, 1)]:
        for r in range(reps):
            start = len(n.layers) - 1
            hid = cin * t
            if t != 1:
                n.conv(1, cin, hid, hw)
            if r == 0 and s == 2:
                hw //= 2
            n.conv(3, hid, hid, hw, groups=hid)
            residual = r > 0 and cin == c
            n.conv(1, hid, c, hw, skip_from=start if residual else None)
            cin = c
    n.conv(1, cin, 1280, hw)
    n.fc(1280, 1000)
    return n


def densenet169():
    n = Net("densenet169")
    n.conv(7, 3, 64, 112)
    cin, hw, growth = 64, 56, 32
    for bi, reps in enumerate([6, 12, 32, 32]):
        outs = []
        for _ in range(reps):
            n.conv(1, cin, 4 * growth, hw)
            # concatenated features feed every later layer in the block; keep the nearest two
            skip = outs[-2] if len(outs) >= 2 else None
            outs.append(n.conv(3, 4 * growth, growth, hw, skip_from=skip))
            cin += growth
        if bi < 3:
            n.conv(1, cin, cin // 2, hw)
            cin //= 2
            hw //= 2
    n.fc(cin, 1000)
    return n


WORKLOADS = {
    "wl1": ("WL1", 177, [lambda: resnet(18), lambda: resnet(34), lambda: resnet(152)]),
    "wl2": ("WL2", 171, [lambda: resnet(34), lambda: vgg(16), lambda: resnet(18)]),
    "wl3": ("WL3", 166, [lambda: resnet(34), lambda: vgg(19)]),
    "wl4": ("WL4", 161, [lambda: vgg(19), mobilenet_v2, densenet169]),
}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for key, (name, total, nets) in WORKLOADS.items():
        doc = {"name": name, "total_params_m": total, "dnns": [f().dump() for f in nets]}
        path = OUT / f"{key}_analog.json"
        path.write_text(json.dumps(doc, indent=1) + "\n")
        kb = sum(l["weight_kb"] for d in doc["dnns"] for l in d["layers"])
        nl = sum(len(d["layers"]) for d in doc["dnns"])
        print(f"{path.name}: {nl} layers, {kb / 1024:.1f} MB weights", file=sys.stderr)


if __name__ == "__main__":
    main()
