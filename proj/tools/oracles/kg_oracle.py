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

"""Reference implementation of the test embedder, chunk breakpoints and
two-stage retrieval and EHR linking, written from the documented algorithm rather than the
C++ sources. Produces the golden files under data/golden.

    python3 tools/oracles/kg_oracle.py --data data
"""

import argparse
import json
import math
import os

MASK = (1 << 64) - 1
WS = b" \t\n\r\f\v"


def fnv1a(data, seed):
    h = 0xCBF29CE484222325 ^ ((seed * 0x9E3779B97F4A7C15) & MASK)
    for c in data:
        h ^= c
        h = (h * 0x100000001B3) & MASK
    h ^= h >> 33
    h = (h * 0xFF51AFD7ED558CCD) & MASK
    h ^= h >> 33
    return h


def words(text):
    out, cur = [], bytearray()
    for c in text:
        if (48 <= c <= 57) or (65 <= c <= 90) or (97 <= c <= 122) or c >= 0x80:
            cur.append(c + 32 if 65 <= c <= 90 else c)
        elif cur:
            out.append(bytes(cur))
            cur = bytearray()
    if cur:
        out.append(bytes(cur))
    return out


def embed(text, dim=256, n=3, seed=0x5EED):
    v = [0.0] * dim

    def add(feature):
        h = fnv1a(feature, seed)
        v[h % dim] += -1.0 if h >> 63 else 1.0

    for w in words(text.encode("utf-8")):
        add(b"w:" + w)
        padded = b"#" + w + b"#"
        if len(padded) <= n:
            add(padded)
            continue
        for i in range(len(padded) - n + 1):
            add(padded[i:i + n])
    norm = 0.0
    for x in v:
        norm += x * x
    if norm > 0:
        norm = math.sqrt(norm)
        v = [x / norm for x in v]
    return v


def cosine(a, b):
    dot = na = nb = 0.0
    for x, y in zip(a, b):
        dot += x * y
        na += x * x
        nb += y * y
    if na == 0 or nb == 0:
        return 0.0
    return dot / (math.sqrt(na) * math.sqrt(nb))


def round9(x):
    y = x * 1e9
    r = math.copysign(math.floor(abs(y) + 0.5), y) / 1e9
    return 0.0 if r == 0 else r


def paragraphs(text):
    out, cur = [], []
    for line in text.encode("utf-8").split(b"\n"):
        t = line.strip(WS)
        if not t:
            if cur:
                out.append(b" ".join(cur).strip(WS))
                cur = []
            continue
        h = len(t) - len(t.lstrip(b"#"))
        if 0 < h < len(t) and t[h:h + 1] == b" ":
            t = t[h:].strip(WS)
        cur.append(t)
    if cur:
        out.append(b" ".join(cur).strip(WS))
    return [p.decode("utf-8") for p in out if p]


def percentile(values, p):
    values = sorted(values)
    if len(values) == 1:
        return values[0]
    rank = p / 100.0 * (len(values) - 1)
    lo, hi = math.floor(rank), math.ceil(rank)
    return values[lo] + (values[hi] - values[lo]) * (rank - lo)


def boundaries(paras, pct=25.0):
    cuts = [0]
    if len(paras) > 1:
        embs = [embed(p) for p in paras]
        sims = [cosine(embs[i], embs[i + 1]) for i in range(len(embs) - 1)]
        th = percentile(sims, pct)
        cuts += [i + 1 for i, s in enumerate(sims) if s < th]
    cuts.append(len(paras))
    return [[cuts[i], cuts[i + 1]] for i in range(len(cuts) - 1)]


def retrieve(graph, query, k):
    middle = [e for e in graph["entities"] if e["layer"] == "middle"]
    pos = {e["entity_id"]: i for i, e in enumerate(middle)}
    sims = []
    q = embed(query)
    for e in middle:
        sims.append(round9(cosine(q, embed(e["name"] + ". " + e["context"]))))
    grounded = {l["from"] for l in graph["links"] if l["kind"] == "dictionary" and l["from"] in pos}
    concepts = [i for i, e in enumerate(middle) if e["entity_id"] in grounded] or list(range(len(middle)))
    key = lambda i, s: (-s, middle[i]["entity_id"])
    concepts.sort(key=lambda i: key(i, sims[i]))
    concepts = concepts[:max(k, 5)]
    nbrs = {i: set() for i in range(len(middle))}
    for r in graph["relations"]:
        if r["head"] in pos and r["tail"] in pos:
            nbrs[pos[r["head"]]].add(pos[r["tail"]])
            nbrs[pos[r["tail"]]].add(pos[r["head"]])
    inherited = {}
    for c in concepts:
        for j in [c] + sorted(nbrs[c]):
            inherited[j] = max(inherited.get(j, -2.0), sims[c])
    scored = [(j, round9(0.5 * s + 0.5 * sims[j])) for j, s in inherited.items()]
    scored.sort(key=lambda t: key(t[0], t[1]))
    return [{"entity_id": middle[j]["entity_id"], "score": s} for j, s in scored[:k]]


def link_top(graph, entity, k, min_score):
    middle = [e for e in graph["entities"] if e["layer"] == "middle"]
    t = embed(entity["name"] + ". " + entity["context"])
    scored = []
    for e in middle:
        s = round9(cosine(t, embed(e["name"] + ". " + e["context"])))
        if s >= min_score:
            scored.append((-s, e["entity_id"]))
    scored.sort()
    return [{"entity_id": i, "score": -s} for s, i in scored[:k]]


EHR_ENTITIES = [
    {"name": "oligomenorrhea", "context": "Patient reports 6 cycles per year."},
    {"name": "hirsutism", "context": "Modified Ferriman-Gallwey score 9."},
    {"name": "total testosterone", "context": "total testosterone: 3.4 nmol/L above 2.5."},
]

QUERIES = [
    ("irregular menstrual cycle definition", 5),
    ("oligomenorrhea", 3),
    ("irregular menstrual cycles ovulatory dysfunction", 3),
    ("hirsutism Ferriman-Gallwey clinical hyperandrogenism", 5),
    ("total testosterone free androgen index", 3),
    ("polycystic ovarian morphology follicle number ovarian volume ultrasound", 3),
    ("17-hydroxyprogesterone NCCAH thyroid prolactin exclusion", 5),
    ("lifestyle management weight loss", 2),
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", default="data")
    args = ap.parse_args()
    corpus = os.path.join(args.data, "corpus")
    chunks = {}
    for name in sorted(os.listdir(corpus)):
        if not name.endswith((".txt", ".md")):
            continue
        with open(os.path.join(corpus, name), encoding="utf-8") as f:
            chunks[os.path.splitext(name)[0]] = boundaries(paragraphs(f.read()))
    with open(os.path.join(args.data, "kg", "kg.json"), encoding="utf-8") as f:
        graph = json.load(f)
    results = [{"query": q, "k": k, "items": retrieve(graph, q, k)} for q, k in QUERIES]
    links = [dict(e, k=3, min_score=0.0, items=link_top(graph, e, 3, 0.0)) for e in EHR_ENTITIES]
    golden = os.path.join(args.data, "golden")
    os.makedirs(golden, exist_ok=True)
    with open(os.path.join(golden, "chunk_boundaries.json"), "w") as f:
        json.dump(chunks, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(golden, "retrieval.json"), "w") as f:
        json.dump(results, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(golden, "ehr_links.json"), "w") as f:
        json.dump(links, f, indent=2, sort_keys=True)
        f.write("\n")
    print(json.dumps(chunks))
    print(json.dumps(links[0]))
    print(json.dumps(results[0]))


if __name__ == "__main__":
    main()
