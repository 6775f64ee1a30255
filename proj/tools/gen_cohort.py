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

"""Synthetic labelled cohort for end-to-end plumbing checks.

Each case samples latent criteria first, then renders lab and exam values
well clear of the cutoffs in data/config/thresholds.json. The label comes
from the latent criteria alone, never from the engine.

    python3 tools/gen_cohort.py --out data/fixtures
"""

import argparse
import csv
import itertools
import json
import os
import random

EXCLUSIONS = ("nccah", "thyroid", "prolactin")


def label(cyc, clin, bio, pcom, exclusions):
    met = int(cyc) + int(clin or bio) + int(pcom)
    return met >= 2 and not exclusions


def render(rng, pid, cyc, clin, bio, pcom, exclusions):
    r = lambda lo, hi, nd=1: round(rng.uniform(lo, hi), nd)
    age = r(20, 38, 0)
    rec = {
        "schema": "pcosdx.patient",
        "version": 1,
        "patient_id": pid,
        "age_years": age,
        "years_post_menarche": age - rng.randint(11, 14),
        "menstrual": {},
        "clinical_signs": {"acne": "absent", "androgenic_alopecia": False},
        "biochemistry": {},
        "imaging": {},
    }
    m = rec["menstrual"]
    if cyc:
        if rng.random() < 0.5:
            m.update(typical_cycle_min_days=r(30, 36, 0), typical_cycle_max_days=r(42, 70, 0),
                     cycles_per_year=rng.randint(4, 7))
        else:
            m.update(typical_cycle_min_days=r(14, 18, 0), typical_cycle_max_days=r(19, 20, 0),
                     cycles_per_year=rng.randint(19, 24))
        m["longest_single_cycle_days"] = r(40, 80, 0)
    else:
        m.update(typical_cycle_min_days=r(25, 28, 0), typical_cycle_max_days=r(29, 33, 0),
                 cycles_per_year=rng.randint(11, 13), longest_single_cycle_days=r(30, 34, 0))
    rec["clinical_signs"]["ferriman_gallwey_score"] = rng.randint(8, 20) if clin else rng.randint(0, 1)
    b = rec["biochemistry"]
    lab = lambda v, u: {"value": v, "unit": u}
    b["total_testosterone"] = lab(r(3.0, 4.5, 2) if bio else r(0.6, 2.0, 2), "nmol/L")
    b["free_androgen_index"] = lab(r(6.5, 12, 1) if bio else r(1.0, 4.0, 1), "%")
    b["ohp_17"] = lab(r(8, 15) if "nccah" in exclusions else r(1, 4), "nmol/L")
    b["tsh"] = lab(r(6, 10) if "thyroid" in exclusions else r(1.0, 3.0), "mIU/L")
    b["prolactin"] = lab(r(40, 80, 0) if "prolactin" in exclusions else r(8, 20, 0), "ng/mL")
    im = rec["imaging"]
    if pcom:
        im.update(follicle_count_left=rng.randint(22, 35), follicle_count_right=rng.randint(8, 30),
                  ovarian_volume_left_ml=r(8, 14), ovarian_volume_right_ml=r(6, 12))
    else:
        im.update(follicle_count_left=rng.randint(4, 15), follicle_count_right=rng.randint(4, 15),
                  ovarian_volume_left_ml=r(4, 8.5), ovarian_volume_right_ml=r(4, 8.5))
    return rec


def cases(seed):
    rng = random.Random(seed)
    combos = list(itertools.product([False, True], repeat=4))
    out = []
    for i in range(60):
        if i < 48:
            cyc, clin, bio, pcom = combos[i % 16]
            exclusions = ()
        else:
            # Exclusion injections on criteria patterns that would otherwise be positive.
            positive = [c for c in combos if label(*c, ())]
            cyc, clin, bio, pcom = rng.choice(positive)
            k = i - 48
            exclusions = (EXCLUSIONS[k % 3],) if k < 9 else tuple(rng.sample(EXCLUSIONS, 2))
        pid = "syn-%03d" % (i + 1)
        rec = render(rng, pid, cyc, clin, bio, pcom, exclusions)
        rec["extensions"] = {
            "label": "positive" if label(cyc, clin, bio, pcom, exclusions) else "negative",
            "latent": {"cycles": cyc, "clinical": clin, "biochemical": bio, "pcom": pcom,
                       "exclusions": list(exclusions)},
        }
        out.append(rec)
    return out


CSV_COLUMNS = [
    ("patient_id", "id", None),
    ("age_years", "age", "years"),
    ("years_post_menarche", "ypm", "years"),
    ("menstrual.typical_cycle_min_days", "cycle_min", "days"),
    ("menstrual.typical_cycle_max_days", "cycle_max", "days"),
    ("menstrual.cycles_per_year", "cycles_year", "cycles/year"),
    ("menstrual.longest_single_cycle_days", "longest_cycle", "days"),
    ("clinical_signs.ferriman_gallwey_score", "fg", "score"),
    ("clinical_signs.acne", "acne", "grade"),
    ("clinical_signs.androgenic_alopecia", "alopecia", "flag"),
    ("biochemistry.total_testosterone", "tt_nmol", "nmol/L"),
    ("biochemistry.free_androgen_index", "fai_pct", "%"),
    ("biochemistry.ohp_17", "ohp17_nmol", "nmol/L"),
    ("biochemistry.tsh", "tsh_miu", "mIU/L"),
    ("biochemistry.prolactin", "prl_ngml", "ng/mL"),
    ("imaging.follicle_count_left", "fnpo_left", "count"),
    ("imaging.follicle_count_right", "fnpo_right", "count"),
    ("imaging.ovarian_volume_left_ml", "ov_left", "mL"),
    ("imaging.ovarian_volume_right_ml", "ov_right", "mL"),
]


def lookup(rec, path):
    node = rec
    for part in path.split("."):
        node = node.get(part) if isinstance(node, dict) else None
        if node is None:
            return ""
    if isinstance(node, dict):
        node = node["value"]
    if isinstance(node, bool):
        return "Y" if node else "N"
    if isinstance(node, float) and node.is_integer():
        node = int(node)
    return str(node)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/fixtures")
    ap.add_argument("--seed", type=int, default=4117)
    args = ap.parse_args()
    recs = cases(args.seed)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "cohort60.jsonl"), "w") as f:
        for rec in recs:
            f.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
    with open(os.path.join(args.out, "cohort60.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([c for _, c, _ in CSV_COLUMNS] + ["pcos"])
        for rec in recs:
            w.writerow([lookup(rec, p) for p, _, _ in CSV_COLUMNS] +
                       ["1" if rec["extensions"]["label"] == "positive" else "0"])
    mapping = {}
    for path, column, unit in CSV_COLUMNS:
        spec = {"column": column}
        if unit:
            spec["unit"] = unit
        if path == "clinical_signs.androgenic_alopecia":
            spec["values"] = {"Y": "true", "N": "false"}
        mapping[path] = spec
    with open(os.path.join(args.out, "cohort60_mapping.json"), "w") as f:
        json.dump(mapping, f, indent=2, sort_keys=True)
        f.write("\n")
    pos = sum(r["extensions"]["label"] == "positive" for r in recs)
    print("wrote %d cases (%d positive)" % (len(recs), pos))


if __name__ == "__main__":
    main()
