#!/usr/bin/env python3
"""Convert a Hugging Face BERT checkpoint into an hsd encoder directory.

The output directory holds config.json, vocab.txt and weights.bin (HSDWGT01
blob, float32). Example:

    python tools/convert_bert_weights.py bert-base-uncased encoders/base
    python tools/convert_bert_weights.py bert-large-uncased encoders/large
    python tools/convert_bert_weights.py /path/to/local/checkpoint encoders/base
"""

import argparse
import hashlib
import json
import shutil
import struct
import sys
from pathlib import Path

import numpy as np

MAGIC = b"HSDWGT01"
FORMAT_VERSION = 1

CONFIG_KEYS = (
    "vocab_size",
    "hidden_size",
    "num_hidden_layers",
    "num_attention_heads",
    "intermediate_size",
    "max_position_embeddings",
    "type_vocab_size",
    "layer_norm_eps",
    "hidden_act",
)


def normalise_name(name):
    for prefix in ("bert.", "model."):
        if name.startswith(prefix):
            name = name[len(prefix):]
    # TF-converted checkpoints use gamma/beta for LayerNorm parameters
    name = name.replace("LayerNorm.gamma", "LayerNorm.weight").replace("LayerNorm.beta", "LayerNorm.bias")
    return name


def wanted(name):
    return name.startswith(("embeddings.", "encoder.layer.", "pooler.")) and not name.endswith("position_ids")


def write_blob(path, tensors):
    data = bytearray()
    entries = []
    for name, array in tensors:
        array = np.ascontiguousarray(array, dtype="<f4")
        raw = array.tobytes(order="C")
        entries.append({
            "name": name,
            "dtype": "f32",
            "shape": list(array.shape),
            "offset": len(data),
            "nbytes": len(raw),
        })
        data += raw
    header = json.dumps({
        "format_version": FORMAT_VERSION,
        "tensors": entries,
        "data_sha256": hashlib.sha256(data).hexdigest(),
    }, separators=(",", ":")).encode()
    tmp = path.with_suffix(".bin.tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        f.write(data)
    tmp.replace(path)


def convert(source, out):
    from transformers import AutoConfig, AutoTokenizer, BertModel

    config = AutoConfig.from_pretrained(source)
    if config.model_type != "bert":
        sys.exit(f"error: expected a BERT checkpoint, got model_type={config.model_type!r}")
    model = BertModel.from_pretrained(source, add_pooling_layer=True)
    model.eval()

    out.mkdir(parents=True, exist_ok=True)
    cfg = {k: getattr(config, k) for k in CONFIG_KEYS}
    cfg["model_type"] = "bert"
    (out / "config.json").write_text(json.dumps(cfg, indent=2) + "\n")

    tokenizer = AutoTokenizer.from_pretrained(source)
    vocab = sorted(tokenizer.get_vocab().items(), key=lambda kv: kv[1])
    if [i for _, i in vocab] != list(range(len(vocab))):
        sys.exit("error: tokenizer ids are not contiguous")
    (out / "vocab.txt").write_text("".join(tok + "\n" for tok, _ in vocab), encoding="utf-8")

    tensors = []
    for name, value in model.state_dict().items():
        name = normalise_name(name)
        if wanted(name):
            tensors.append((name, value.detach().cpu().numpy()))
    write_blob(out / "weights.bin", tensors)
    print(f"wrote {len(tensors)} tensors to {out / 'weights.bin'}")


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("source", help="hub model id or local checkpoint directory")
    parser.add_argument("out", type=Path, help="output encoder directory")
    parser.add_argument("--force", action="store_true", help="replace an existing output directory")
    args = parser.parse_args()
    if args.out.exists() and any(args.out.iterdir()):
        if not args.force:
            sys.exit(f"error: {args.out} is not empty (use --force)")
        shutil.rmtree(args.out)
    convert(args.source, args.out)


if __name__ == "__main__":
    main()
