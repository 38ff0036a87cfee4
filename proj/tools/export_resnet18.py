#!/usr/bin/env python3
"""Export torchvision ResNet-18 weights into the RN18W container read by the C++ backbone.

    python3 tools/export_resnet18.py --out resnet18.rn18w            # ImageNet weights
    python3 tools/export_resnet18.py --out r.rn18w --random-init 7   # random weights (testing)

With --reference-input/--reference-output the script also runs the network on a
float32 3×H×W tensor stored as raw little-endian floats and writes the 512-dim
average-pool activations, which the C++ test suite uses as a cross-check.
"""
import argparse
import struct

import numpy as np
import torch
import torchvision


def write_container(path, state):
    body = bytearray()
    names = [k for k in state if not k.startswith("fc.") and not k.endswith("num_batches_tracked")]
    body += struct.pack("<I", len(names))
    for name in names:
        t = state[name].detach().cpu().float().contiguous().numpy()
        encoded = name.encode()
        body += struct.pack("<I", len(encoded)) + encoded
        body += struct.pack("<I", t.ndim)
        for d in t.shape:
            body += struct.pack("<Q", d)
        body += struct.pack("<Q", t.size) + t.astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(b"RN18W")
        f.write(b"WGTS" + struct.pack("<Q", len(body)))
        f.write(body)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--random-init", type=int, default=None, help="seed; skip downloading pretrained weights")
    ap.add_argument("--reference-input")
    ap.add_argument("--reference-output")
    ap.add_argument("--size", type=int, default=64)
    args = ap.parse_args()

    if args.random_init is not None:
        torch.manual_seed(args.random_init)
        model = torchvision.models.resnet18(weights=None)
        # Non-trivial batch-norm statistics so folding is exercised.
        with torch.no_grad():
            for m in model.modules():
                if isinstance(m, torch.nn.BatchNorm2d):
                    m.running_mean.uniform_(-0.1, 0.1)
                    m.running_var.uniform_(0.5, 1.5)
                    m.weight.uniform_(0.5, 1.5)
                    m.bias.uniform_(-0.1, 0.1)
    else:
        model = torchvision.models.resnet18(weights=torchvision.models.ResNet18_Weights.IMAGENET1K_V1)
    model.eval()
    write_container(args.out, model.state_dict())

    if args.reference_input and args.reference_output:
        x = np.fromfile(args.reference_input, dtype="<f4").reshape(1, 3, args.size, args.size)
        trunk = torch.nn.Sequential(*list(model.children())[:-1])
        with torch.no_grad():
            y = trunk(torch.from_numpy(x)).flatten().numpy().astype("<f4")
        y.tofile(args.reference_output)


if __name__ == "__main__":
    main()
