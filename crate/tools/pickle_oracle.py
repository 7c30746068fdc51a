#!/usr/bin/env python3
"""Regenerate the reference goldens.

transcripts: runs pickletools.genops over every oracle stream and writes the
canonical `offset MNEMONIC arg` lines.

loader roots: loads each injected fixture with an Unpickler whose
find_class hands back a recorder for os.system and refuses everything
else, so nothing runs. Records the returned root and the recorded calls.

Usage: tools/pickle_oracle.py STREAMS_JSON CORPUS_DIR OUT_DIR
"""
import io
import json
import pickle
import pickletools
import struct
import sys
import zipfile


def canon(arg):
    if arg is None:
        return ""
    if isinstance(arg, bool):
        return "True" if arg else "False"
    if isinstance(arg, int):
        return str(arg)
    if isinstance(arg, float):
        return "f:%016x" % struct.unpack(">Q", struct.pack(">d", arg))[0]
    if isinstance(arg, (bytes, bytearray)):
        return "b:" + bytes(arg).hex()
    if isinstance(arg, str):
        return "s:" + arg.encode("utf-8", "surrogatepass").hex()
    raise TypeError(type(arg))


def transcript(data):
    return ["%d %s %s" % (pos, op.name, canon(arg)) for op, arg, pos in pickletools.genops(data)]


class Recorder:
    def __init__(self, calls, name):
        self.calls, self.name = calls, name

    def __call__(self, *args):
        self.calls.append([self.name] + list(args))
        return 0


class Restricted(pickle.Unpickler):
    def __init__(self, data, calls):
        super().__init__(io.BytesIO(data))
        self.calls = calls

    def find_class(self, module, name):
        if (module, name) in (("os", "system"), ("posix", "system")):
            return Recorder(self.calls, "%s.%s" % (module, name))
        raise pickle.UnpicklingError("refused global %s.%s" % (module, name))


def loader_root(path):
    data = open(path, "rb").read()
    if data[:2] == b"PK":
        with zipfile.ZipFile(io.BytesIO(data)) as z:
            data = z.read(next(n for n in z.namelist() if n.endswith("data.pkl")))
    calls = []
    root = Restricted(data, calls).load()
    return root, calls


def main():
    streams_json, corpus_dir, out_dir = sys.argv[1:4]
    streams = json.load(open(streams_json))
    transcripts = {s["name"]: transcript(bytes.fromhex(s["hex"])) for s in streams}
    with open(out_dir + "/pickle_transcripts.json", "w") as f:
        json.dump(transcripts, f, indent=1, sort_keys=True)
        f.write("\n")

    manifest = json.load(open(corpus_dir + "/manifest.json"))
    roots = {}
    for fx in manifest["fixtures"]:
        if "benign_root" not in fx:
            continue
        root, calls = loader_root(corpus_dir + "/" + fx["path"])
        roots[fx["id"]] = {"root": root, "calls": calls}
    with open(out_dir + "/loader_roots.json", "w") as f:
        json.dump(roots, f, indent=1, sort_keys=True)
        f.write("\n")
    print("%d transcripts, %d loader roots" % (len(transcripts), len(roots)))


if __name__ == "__main__":
    main()
