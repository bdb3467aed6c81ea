#!/usr/bin/env python3
"""Writes torchvision ResNet34 / VGG19-BN trunk weights as a tensor archive
that `model.pretrained_weights` can point at.

    export_torchvision.py resnet34 resnet34.vslt
    export_torchvision.py vgg19_bn vgg19_bn.vslt --random   # no download, for testing

Classifier tensors and BN batch counters are dropped. 1-D tensors become
1×C×1×1, conv kernels keep their OIHW layout.
"""
import argparse
import struct


def fnv1a(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def nchw(shape):
    if len(shape) == 4:
        return list(shape)
    if len(shape) == 1:
        return [1, shape[0], 1, 1]
    raise ValueError(f"unexpected tensor rank {len(shape)}")


def encode(tensors) -> bytes:
    out = bytearray(b"VSLT")
    out += struct.pack("<IQ", 1, len(tensors))
    for name, t in tensors:
        raw = name.encode()
        out += struct.pack("<I", len(raw)) + raw
        out += struct.pack("<4i", *nchw(tuple(t.shape)))
        out += t.detach().to("cpu").float().contiguous().numpy().astype("<f4").tobytes()
    out += struct.pack("<Q", fnv1a(bytes(out)))
    return bytes(out)


def trunk(arch: str, random: bool):
    import torchvision

    if arch == "resnet34":
        model = torchvision.models.resnet34(weights=None if random else "IMAGENET1K_V1")
        keep = lambda k: not k.startswith("fc.")
    elif arch == "vgg19_bn":
        model = torchvision.models.vgg19_bn(weights=None if random else "IMAGENET1K_V1")
        keep = lambda k: k.startswith("features.")
    else:
        raise SystemExit(f"unknown architecture {arch}; use resnet34 or vgg19_bn")
    return [(k, v) for k, v in model.state_dict().items() if keep(k) and not k.endswith("num_batches_tracked")]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("arch", choices=["resnet34", "vgg19_bn"])
    ap.add_argument("out")
    ap.add_argument("--random", action="store_true", help="random initialization instead of ImageNet weights")
    args = ap.parse_args()
    tensors = trunk(args.arch, args.random)
    with open(args.out, "wb") as f:
        f.write(encode(tensors))
    print(f"{len(tensors)} tensors written to {args.out}")


if __name__ == "__main__":
    main()
