"""Export torchvision VGG16 conv weights to a convstack weights index.

    python tools/export_vgg16.py out/vgg16/index.json [--state-dict vgg16.pth]

Without --state-dict the ImageNet weights are fetched through torchvision.
The final max pool is dropped so the extractor yields the 14 x 14 map.
"""

import argparse
import json
import pathlib
import struct

import numpy as np


def encode_htf(array):
    a = np.ascontiguousarray(array, dtype="<f4")
    head = b"HTF1" + bytes([1, a.ndim, 0, 0]) + b"".join(struct.pack("<I", d) for d in a.shape)
    return head + a.tobytes()


def export_features(modules, index_path, resize_shorter=256, crop=224):
    """Write 3x3 same-padded conv / relu / 2x2 max pool modules as a convstack index."""
    import torch

    index = pathlib.Path(index_path)
    index.parent.mkdir(parents=True, exist_ok=True)
    arch, layers = [], []
    for m in modules:
        if isinstance(m, torch.nn.Conv2d):
            if m.kernel_size != (3, 3) or m.padding != (1, 1) or m.stride != (1, 1):
                raise ValueError(f"unsupported conv {m}")
            i = len(layers)
            names = {k: f"{index.stem}.conv{i}.{k}.htf" for k in ("weight", "bias")}
            (index.parent / names["weight"]).write_bytes(encode_htf(m.weight.detach().cpu().numpy()))
            (index.parent / names["bias"]).write_bytes(encode_htf(m.bias.detach().cpu().numpy()))
            layers.append(names)
            arch.append(m.out_channels)
        elif isinstance(m, torch.nn.MaxPool2d):
            arch.append(0)
        elif not isinstance(m, torch.nn.ReLU):
            raise ValueError(f"unsupported module {m}")
    doc = {
        "format": "holmes-convstack/1",
        "architecture": arch,
        "preprocess": {
            "resize_shorter": resize_shorter,
            "crop": crop,
            "mean": [0.485, 0.456, 0.406],
            "std": [0.229, 0.224, 0.225],
        },
        "layers": layers,
    }
    index.write_text(json.dumps(doc, indent=2) + "\n")
    return arch


def main():
    import torch
    import torchvision

    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("index", help="output index.json")
    ap.add_argument("--state-dict", help="local VGG16 state dict (.pth)")
    args = ap.parse_args()

    if args.state_dict:
        model = torchvision.models.vgg16()
        model.load_state_dict(torch.load(args.state_dict, map_location="cpu"))
    else:
        model = torchvision.models.vgg16(weights=torchvision.models.VGG16_Weights.IMAGENET1K_V1)
    arch = export_features(list(model.features)[:-1], args.index)
    print(f"wrote {args.index}: {len(arch)} stages")


if __name__ == "__main__":
    main()
