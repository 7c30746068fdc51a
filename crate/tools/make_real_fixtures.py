#!/usr/bin/env python3
"""Save small models with the real frameworks into crates/core/tests/data/real.

Only saving happens here; nothing is ever loaded back. The one payload is the
inert marker command.
"""
import hashlib
import json
import os
import sys

OUT = sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/data/real"
MARKER = "true # FIXTURE-MARKER"


def torch_files():
    import torch

    torch.manual_seed(0)
    net = torch.nn.Sequential(torch.nn.Linear(20, 10), torch.nn.ReLU(), torch.nn.Linear(10, 1))
    torch.save(net.state_dict(), os.path.join(OUT, "torch_state_dict.pt"))

    class Payload:
        def __reduce__(self):
            return os.system, (MARKER,)

    torch.save({"weights": net.state_dict(), "hook": Payload()}, os.path.join(OUT, "torch_reduce.pt"))


def keras_files():
    os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "3")
    import keras

    model = keras.Sequential([
        keras.Input(shape=(20,)),
        keras.layers.Dense(10, activation="relu"),
        keras.layers.Lambda(lambda x: x * 2),
        keras.layers.Dense(1, activation="sigmoid"),
    ])
    model.save(os.path.join(OUT, "keras3_lambda.keras"))
    model.save(os.path.join(OUT, "keras3_lambda.h5"))


def main():
    os.makedirs(OUT, exist_ok=True)
    if "--keras" in sys.argv:
        keras_files()
    torch_files()
    digests = {}
    for name in sorted(os.listdir(OUT)):
        if name.endswith(".json"):
            continue
        with open(os.path.join(OUT, name), "rb") as f:
            digests[name] = "sha256:" + hashlib.sha256(f.read()).hexdigest()
    with open(os.path.join(OUT, "digests.json"), "w") as f:
        json.dump(digests, f, indent=1, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()
