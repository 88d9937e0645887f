#!/usr/bin/env python3
"""Builds a tiny random BERT, converts it with tools/convert_bert_weights.py and
records reference token ids, last hidden states and pooled outputs."""

import json
import subprocess
import sys
from pathlib import Path

try:
    import torch
    from transformers import BertConfig, BertModel, BertTokenizer
except ImportError as exc:  # parity check is skipped without the reference stack
    print(f"skipping tiny BERT fixture: {exc}")
    sys.exit(0)

TEXTS = [
    "Hello world!",
    "username Ok. What did you do to piss off the universe?",
    "Café naïve résumé, unaffable tokenization",
]


def main():
    out = Path(sys.argv[1])
    hf = out / "hf"
    enc = out / "encoder"
    hf.mkdir(parents=True, exist_ok=True)

    words = ["hello", "world", "ok", "what", "did", "you", "do", "to", "the", "universe",
             "cafe", "naive", "resume", "token", "##ization", "un", "##aff", "##able", "off", "piss",
             "user", "##name", "!", ".", ",", "?"]
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + words
    (hf / "vocab.txt").write_text("".join(v + "\n" for v in vocab))

    torch.manual_seed(0)
    config = BertConfig(vocab_size=len(vocab), hidden_size=16, num_hidden_layers=2, num_attention_heads=4,
                        intermediate_size=32, max_position_embeddings=40, hidden_act="gelu",
                        hidden_dropout_prob=0.0, attention_probs_dropout_prob=0.0)
    model = BertModel(config)
    with torch.no_grad():
        for p in model.parameters():
            p.normal_(0.0, 0.3)
    model.eval()
    model.save_pretrained(hf)
    tokenizer = BertTokenizer(str(hf / "vocab.txt"), do_lower_case=True)
    tokenizer.save_pretrained(hf)

    script = Path(__file__).resolve().parents[2] / "tools" / "convert_bert_weights.py"
    subprocess.run([sys.executable, str(script), str(hf), str(enc), "--force"], check=True)

    cases = []
    for text in TEXTS:
        ids = tokenizer(text, truncation=True, max_length=32)["input_ids"]
        with torch.no_grad():
            result = model(torch.tensor([ids]), token_type_ids=torch.zeros(1, len(ids), dtype=torch.long),
                           attention_mask=torch.ones(1, len(ids), dtype=torch.long))
        cases.append({
            "text": text,
            "ids": ids,
            "hidden": result.last_hidden_state[0].tolist(),
            "pooled": result.pooler_output[0].tolist(),
        })
    (out / "expected.json").write_text(json.dumps({"max_tokens": 32, "cases": cases}))


if __name__ == "__main__":
    main()
