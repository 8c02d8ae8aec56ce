"""Writes model/ for the processed fixture corpus: two topics over three years."""
import json
import pathlib
import struct

HERE = pathlib.Path(__file__).parent
vocab = (HERE / "processed" / "vocab.txt").read_text().split("\n")[:-1]
timestamps = (HERE / "processed" / "timestamps.txt").read_text().split("\n")[:-1]

boosts = [
    [  # policy and lending
        {"rbi": 30, "repo": 24, "rate": 28, "inflation": 26, "interest": 22, "cut": 18, "loans": 14, "target": 10},
        {"moratorium": 30, "loans": 26, "lockdown": 22, "rbi": 18, "borrowers": 16, "relief": 12, "rate": 10},
        {"recovery": 28, "inflation": 24, "loans": 20, "rbi": 16, "credit": 14, "rate": 12, "target": 10},
    ],
    [  # markets and payments
        {"stock": 30, "markets": 26, "investors": 24, "shares": 20, "sensex": 18, "companies": 14, "foreign": 10},
        {"pandemic": 30, "covid": 26, "markets": 22, "investors": 18, "lockdown": 16, "stock": 14, "gold": 10},
        {"digital": 30, "payments": 28, "upi": 26, "fintech": 22, "investors": 14, "vaccine": 12, "companies": 10},
    ],
]

values = []
for t in range(len(timestamps)):
    for k in range(len(boosts)):
        row = [1.0 + boosts[k][t].get(w, 0) for w in vocab]
        total = sum(row)
        values.extend(x / total for x in row)

out = HERE / "model"
out.mkdir(exist_ok=True)
(out / "beta.f32").write_bytes(struct.pack("<%df" % len(values), *values))
meta = {"model_name": "fixture-2topic", "num_times": len(timestamps), "num_topics": len(boosts), "vocab_size": len(vocab)}
(out / "model_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
