"""Write the bundled WFDB fixture record with the reference `wfdb` Python package.

The record is a synthetic two-lead ECG (format 212, 360 Hz) with a mixed
annotation stream. Its header, signal and annotation files are produced by
`wfdb.wrsamp` / `wfdb.wrann`, then read back with `wfdb.rdrecord` /
`wfdb.rdann` and dumped to JSON so the Rust reader can be checked against an
independent implementation.

Usage: python3 tools/make_wfdb_fixture.py crates/core/tests/data
"""

import json
import os
import sys

import numpy as np
import wfdb

FS = 360
SECONDS = 30
NAME = "fixture100"


def beat(t, center, kind):
    # Gaussian-sum PQRST template, amplitudes in mV.
    def g(a, mu, sd):
        return a * np.exp(-0.5 * ((t - center - mu) / sd) ** 2)

    if kind == "V":
        return g(-0.4, -0.01, 0.04) + g(1.6, 0.03, 0.035) + g(-0.5, 0.28, 0.06)
    p = 0.0 if kind == "A" else g(0.15, -0.2, 0.025)
    return p + g(-0.12, -0.03, 0.01) + g(1.1, 0.0, 0.012) + g(-0.25, 0.03, 0.01) + g(0.3, 0.28, 0.05)


def main(out_dir):
    rng = np.random.default_rng(100)
    n = FS * SECONDS
    t = np.arange(n) / FS
    symbols_cycle = ["N", "N", "A", "N", "V", "N", "L", "R", "N", "F", "j", "/", "f", "Q", "e", "J", "a", "S", "E", "N"]
    beats = []
    pos = 0.6
    i = 0
    while pos < SECONDS - 0.6:
        # pause (signal quality gap) long enough to force SKIP pseudo-annotations
        if 11.0 < pos < 15.0:
            pos = 15.0
        sym = symbols_cycle[i % len(symbols_cycle)]
        beats.append((int(round(pos * FS)), sym))
        pos += 0.75 + 0.1 * rng.standard_normal() * 0.3
        i += 1

    lead2 = 0.05 * np.sin(2 * np.pi * 0.3 * t)
    v1 = -0.03 * np.sin(2 * np.pi * 0.25 * t)
    for s, sym in beats:
        kind = "V" if sym in ("V", "E") else ("A" if sym in ("A", "a", "S", "J") else "N")
        lead2 = lead2 + beat(t, s / FS, kind)
        v1 = v1 - 0.6 * beat(t, s / FS, kind)
    lead2 += 0.2 + 0.01 * rng.standard_normal(n)
    v1 += -0.1 + 0.01 * rng.standard_normal(n)
    sig = np.stack([lead2, v1], axis=1)

    cwd = os.getcwd()
    os.chdir(out_dir)
    try:
        wfdb.wrsamp(
            NAME,
            fs=FS,
            units=["mV", "mV"],
            sig_name=["MLII", "V1"],
            p_signal=sig,
            fmt=["212", "212"],
            adc_gain=[200.0, 200.0],
            baseline=[1024, 1024],
        )

        samples = []
        symbols = []
        subtypes = []
        chans = []
        nums = []
        aux = []
        samples.append(10)
        symbols.append("+")
        subtypes.append(0)
        chans.append(0)
        nums.append(0)
        aux.append("(N")
        for k, (s, sym) in enumerate(beats):
            samples.append(s)
            symbols.append(sym)
            subtypes.append(0)
            chans.append(0)
            nums.append(0)
            aux.append("")
            if k == 12:
                samples.append(s + 1)
                symbols.append("~")
                subtypes.append(3)
                chans.append(1)
                nums.append(2)
                aux.append("")
            if k == 30:
                samples.append(s + 2)
                symbols.append("+")
                subtypes.append(0)
                chans.append(0)
                nums.append(0)
                aux.append("(AB")
        order = np.argsort(np.array(samples), kind="stable")
        wfdb.wrann(
            NAME,
            "atr",
            sample=np.array(samples)[order],
            symbol=[symbols[o] for o in order],
            subtype=np.array(subtypes)[order],
            chan=np.array(chans)[order],
            num=np.array(nums)[order],
            aux_note=[aux[o] for o in order],
        )

        rec = wfdb.rdrecord(NAME, physical=False)
        ann = wfdb.rdann(NAME, "atr")
    finally:
        os.chdir(cwd)

    d = rec.d_signal
    expected = {
        "record_name": rec.record_name,
        "n_signals": rec.n_sig,
        "sampling_rate": rec.fs,
        "n_samples": rec.sig_len,
        "sig_name": rec.sig_name,
        "gain": [float(x) for x in rec.adc_gain],
        "baseline": [int(x) for x in rec.baseline],
        "init_value": [int(x) for x in rec.init_value],
        "checksum": [int(x) for x in rec.checksum],
        "first_samples": [int(x) for x in d[0]],
        "channel_sums_mod_65536": [int(x) % 65536 for x in d.sum(axis=0)],
        "head_samples": [[int(v) for v in row] for row in d[:16]],
        "tail_samples": [[int(v) for v in row] for row in d[-16:]],
        "annotations": [
            {
                "sample": int(ann.sample[j]),
                "symbol": ann.symbol[j],
                "subtype": int(ann.subtype[j]),
                "chan": int(ann.chan[j]),
                "num": int(ann.num[j]),
                "aux": ann.aux_note[j] if ann.aux_note[j] else None,
            }
            for j in range(len(ann.sample))
        ],
    }
    with open(os.path.join(out_dir, NAME + ".expected.json"), "w") as f:
        json.dump(expected, f, indent=1)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else ".")
