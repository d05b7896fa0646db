#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
#
# Regenerates the frozen encoder/tokenizer fixtures under tests/data using the
# Hugging Face reference implementations. Not run by ctest; the outputs are
# checked in.
#
#   python3 tests/oracles/make_encoder_fixtures.py tests/data

import json
import os
import sys

import torch
from safetensors.torch import save_file
from transformers import BertConfig, BertModel, BertTokenizer, DistilBertConfig, DistilBertModel

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "news", "category", "is", "tv", "-", "golden", "globes", "recap",
    "coca", "cola", "released", "two", "limited", "edition", "holiday",
    "flavored", "soda", "##s", "google", "maps", "and", "wa", "##ze", "may",
    "share", "certain", "features", ".", ",", "'", ":", "fall", "back",
    "day", "##light", "saving", "time", "ends", "get", "ready", "to",
    "finance", "real", "estate", "cafe", "a", "b", "c", "##a", "##b", "##c",
]

TEXTS = [
    "Globes recap",
    "Coca-Cola released two limited-edition holiday flavored sodas",
    "Google Maps and Waze may share certain features",
    "Daylight saving time ends: Get ready to 'fall back'",
    "Globes recap [SEP] The news category is tv-golden-globes",
    "CAFÉ   finance\treal-estate zzzq",
    "abc ab",
]


def write_model_dir(path, config, model, vocab):
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "vocab.txt"), "w") as f:
        f.write("\n".join(vocab) + "\n")
    config.save_pretrained(path)
    tensors = {k: v.detach().float().contiguous() for k, v in model.state_dict().items()
               if "position_ids" not in k and "pooler" not in k}
    save_file(tensors, os.path.join(path, "model.safetensors"))


def hidden_states(model, ids, mask):
    model = model.double().eval()
    with torch.no_grad():
        out = model(input_ids=torch.tensor([ids]), attention_mask=torch.tensor([mask]))
    return out.last_hidden_state[0].tolist()


def main(out_dir):
    torch.manual_seed(1234)
    vocab_path = os.path.join(out_dir, "tiny_vocab.txt")
    os.makedirs(out_dir, exist_ok=True)
    with open(vocab_path, "w") as f:
        f.write("\n".join(VOCAB) + "\n")
    tok = BertTokenizer(vocab_path, do_lower_case=True)

    tokenizer_cases = []
    for text in TEXTS:
        for max_len in (8, 24):
            enc = tok(text, max_length=max_len, truncation=True, padding="max_length")
            tokenizer_cases.append({
                "text": text,
                "max_len": max_len,
                "token_ids": enc["input_ids"],
                "attention_mask": enc["attention_mask"],
                "tokens": tok.tokenize(text),
            })

    dcfg = DistilBertConfig(vocab_size=len(VOCAB), dim=16, n_layers=2, n_heads=2,
                            hidden_dim=32, max_position_embeddings=32)
    dmodel = DistilBertModel(dcfg)
    for p in dmodel.parameters():
        # non-trivial layer norm affine parameters
        if p.dim() == 1:
            with torch.no_grad():
                p.add_(0.1 * torch.randn_like(p))
    write_model_dir(os.path.join(out_dir, "tiny_distilbert"), dcfg, dmodel, VOCAB)

    bcfg = BertConfig(vocab_size=len(VOCAB), hidden_size=16, num_hidden_layers=2,
                      num_attention_heads=4, intermediate_size=24, max_position_embeddings=32,
                      type_vocab_size=2)
    bmodel = BertModel(bcfg, add_pooling_layer=False)
    for p in bmodel.parameters():
        if p.dim() == 1:
            with torch.no_grad():
                p.add_(0.1 * torch.randn_like(p))
    write_model_dir(os.path.join(out_dir, "tiny_bert"), bcfg, bmodel, VOCAB)

    encoder_cases = []
    for case in tokenizer_cases:
        if case["max_len"] != 24:
            continue
        ids, mask = case["token_ids"], case["attention_mask"]
        n_valid = sum(mask)
        encoder_cases.append({
            "token_ids": ids,
            "attention_mask": mask,
            "distilbert": hidden_states(dmodel, ids, mask)[:n_valid],
            "bert": hidden_states(bmodel, ids, mask)[:n_valid],
        })

    with open(os.path.join(out_dir, "tokenizer_oracle.json"), "w") as f:
        json.dump(tokenizer_cases, f, indent=1)
    with open(os.path.join(out_dir, "encoder_oracle.json"), "w") as f:
        json.dump(encoder_cases, f)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
