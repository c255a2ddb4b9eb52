#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Recompute m_avg, delta_r and best@K of an eval report from its raw finals.

Reads the eval_task / eval_summary line records written by `agentml eval`
and compares every derived number with the recomputed one using exact
float equality. Exit status 0 when everything matches, 1 otherwise.
"""
import json
import sys

KS = (4, 8, 16, 32, 64, 128)


def recompute(task):
    finals = task["finals"]
    beta = task["beta"]
    m_init = task["m_init"]
    total = 0.0
    for f in finals:
        total += f
    m_avg = total / len(finals)
    delta_r = beta * (m_avg - m_init) / m_init
    best = {}
    for k in KS:
        if k > len(finals):
            continue
        b = finals[0]
        for f in finals[1:k]:
            if (beta > 0 and f > b) or (beta < 0 and f < b):
                b = f
        best[str(k)] = b
    return m_avg, delta_r, best


def check(lines):
    problems = []
    deltas = []
    summary = None
    n_tasks = 0
    for line in lines:
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("kind") == "eval_summary":
            summary = rec
            continue
        if rec.get("kind") != "eval_task":
            problems.append("unexpected record kind %r" % rec.get("kind"))
            continue
        n_tasks += 1
        tid = rec["task_id"]
        if rec["k"] != len(rec["finals"]):
            problems.append("%s: k=%d but %d finals" % (tid, rec["k"], len(rec["finals"])))
        m_avg, delta_r, best = recompute(rec)
        if m_avg != rec["m_avg"]:
            problems.append("%s: m_avg %r != %r" % (tid, rec["m_avg"], m_avg))
        if delta_r != rec["delta_r"]:
            problems.append("%s: delta_r %r != %r" % (tid, rec["delta_r"], delta_r))
        if best != rec["best_at_k"]:
            problems.append("%s: best_at_k %r != %r" % (tid, rec["best_at_k"], best))
        deltas.append(rec["delta_r"])
    if summary is None:
        problems.append("no eval_summary record")
    else:
        total = 0.0
        for d in deltas:
            total += d
        avg = total / len(deltas) if deltas else 0.0
        if summary["n_tasks"] != n_tasks:
            problems.append("summary n_tasks %d != %d" % (summary["n_tasks"], n_tasks))
        if summary["average_delta_r"] != avg:
            problems.append("average_delta_r %r != %r" % (summary["average_delta_r"], avg))
    return n_tasks, problems


def main(argv):
    if len(argv) != 2:
        print("usage: recompute_report.py REPORT.jsonl", file=sys.stderr)
        return 2
    with open(argv[1], encoding="utf-8") as fh:
        n_tasks, problems = check(fh.readlines())
    for p in problems:
        print("mismatch: " + p)
    print("%d task record(s) recomputed, %d mismatch(es)" % (n_tasks, len(problems)))
    return 0 if not problems else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv))
