#!/usr/bin/env python3
# Copyright 2026 The pcosdx Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""Reference metrics and comparison table for the evaluation tests.

Writes data/golden/compare_runs.md from three fixed runs, with ratios from
exact rational arithmetic.

    python3 tools/oracles/metrics_oracle.py --data data
"""

import argparse
import os
from fractions import Fraction

RUNS = [
    # label, tp, fp, fn, tn, indeterminate, failures, mean_tokens, mean_wall
    ("rule-oracle", 45, 5, 10, 40, 0, 0, 0.0, 0.0),
    ("replay-a", 50, 10, 5, 35, 2, 1, 10913.0, 39.8),
    ("baseline", 45, 5, 10, 40, 0, 0, 812.25, 1.5),
]


def ratios(tp, fp, fn, tn):
    def r(num, den):
        return None if den == 0 else Fraction(num, den)

    acc = r(tp + tn, tp + fp + fn + tn)
    pre = r(tp, tp + fp)
    rec = r(tp, tp + fn)
    f1 = None
    if pre is not None and rec is not None and pre + rec != 0:
        f1 = 2 * pre * rec / (pre + rec)
    return [acc, pre, rec, f1]


def cell(v):
    if v is None:
        return "n/a"
    return "%.2f" % (float(v) * 100)


def table(runs):
    runs = sorted(runs, key=lambda r: r[0])
    cols = [ratios(*r[1:5]) for r in runs]
    best = []
    for c in range(4):
        shown = [cell(row[c]) for row in cols if row[c] is not None]
        best.append(max(shown, key=float) if shown else None)
    out = ["| Method | Acc. | Pre. | Rec. | F1 | Cases | Indet. | Failed | Tokens/case | Sec/case |",
           "|---|---|---|---|---|---|---|---|---|---|"]
    for run, row in zip(runs, cols):
        label, tp, fp, fn, tn, ind, fail, tok, wall = run
        cells = []
        for c in range(4):
            text = cell(row[c])
            cells.append(text + ("*" if row[c] is not None and text == best[c] else ""))
        total = tp + fp + fn + tn + ind + fail
        out.append("| %s | %s | %d | %d | %d | %.1f | %.2f |" % (label, " | ".join(cells), total, ind, fail, tok, wall))
    return "\n".join(out) + "\n"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", default="data")
    args = ap.parse_args()
    path = os.path.join(args.data, "golden", "compare_runs.md")
    with open(path, "w") as f:
        f.write(table(RUNS))
    print(open(path).read(), end="")


if __name__ == "__main__":
    main()
