#!/usr/bin/env python3
"""External conic backend for programs that need semidefinite blocks or log-det.

Usage: sdp_bridge.py [--solver NAME] program.json result.json

Reads the program JSON written by the library (see docs/formats.md), solves it
with cvxpy and writes {"status", "primal", "iterations"}.
"""

import argparse
import json
import math
import sys

import cvxpy as cp
import numpy as np


def sparse_rows(block, n):
    rows = block["rows"]
    a = np.zeros((rows, n))
    for r, c, v in block["triplets"]:
        a[r, c] += v
    return a, np.asarray(block["rhs"], dtype=float)


def sym_matrix(x, indices):
    m = len(indices)
    rows = []
    for i in range(m):
        rows.append([0.5 * (x[indices[i][j]] + x[indices[j][i]]) for j in range(m)])
    return cp.bmat(rows)


def build(prog):
    n = prog["n"]
    x = cp.Variable(n)
    c = np.zeros(n)
    for i, v in prog["objective"]:
        c[i] += v
    obj = c @ x
    cons = []

    for term in prog["concave"]:
        kind, w = term["kind"], term["weight"]
        if kind == "log":
            obj = obj - w * cp.log(x[term["index"]])
        elif kind == "root-det2x2":
            a, b, cc = x[term["a"]], x[term["b"]], x[term["c"]]
            t = cp.Variable()
            # t^2 + c^2 <= a b, a + b >= 0
            cons.append(cp.SOC(a + b, cp.hstack([a - b, 2 * t, 2 * cc])))
            obj = obj - w * t
        elif kind == "log-det":
            obj = obj - w * cp.log_det(sym_matrix(x, term["indices"]))
        else:
            raise ValueError(f"unknown concave term {kind}")

    if prog["equalities"]["rows"]:
        a, b = sparse_rows(prog["equalities"], n)
        cons.append(a @ x == b)
    if prog["inequalities"]["rows"]:
        a, b = sparse_rows(prog["inequalities"], n)
        cons.append(a @ x <= b)

    for blk in prog["cones"]:
        s, d, kind = blk["start"], blk["dim"], blk["kind"]
        if kind == "nonnegative":
            cons.append(x[s : s + d] >= 0)
        elif kind == "second-order":
            cons.append(cp.SOC(x[s], x[s + 1 : s + d]))
        elif kind == "rotated-second-order":
            u, v = x[s], x[s + 1]
            rest = x[s + 2 : s + d]
            r2 = math.sqrt(2.0)
            cons.append(cp.SOC((u + v) / r2, cp.hstack([cp.reshape((u - v) / r2, (1,)), rest])))
        else:
            raise ValueError(f"unknown cone {kind}")

    for blk in prog["psd"]:
        cons.append(sym_matrix(x, blk["indices"]) >> 0)

    return x, cp.Problem(cp.Minimize(obj), cons)


STATUS = {
    cp.OPTIMAL: "optimal",
    cp.OPTIMAL_INACCURATE: "inaccurate",
    cp.INFEASIBLE: "infeasible",
    cp.INFEASIBLE_INACCURATE: "infeasible",
    cp.UNBOUNDED: "unbounded",
    cp.UNBOUNDED_INACCURATE: "unbounded",
    cp.USER_LIMIT: "max-iterations",
}


def main(argv):
    ap = argparse.ArgumentParser()
    ap.add_argument("--solver", default=None)
    ap.add_argument("program")
    ap.add_argument("result")
    args = ap.parse_args(argv)

    with open(args.program) as f:
        prog = json.load(f)
    x, problem = build(prog)

    solvers = [args.solver] if args.solver else ["CLARABEL", "SCS"]
    last_err = None
    for name in solvers:
        if name not in cp.installed_solvers():
            continue
        try:
            problem.solve(solver=name)
            break
        except cp.error.SolverError as e:
            last_err = e
    else:
        print(f"no solver succeeded: {last_err}", file=sys.stderr)
        return 1

    status = STATUS.get(problem.status, "inaccurate")
    primal = [float(v) for v in x.value] if x.value is not None else [0.0] * prog["n"]
    iters = problem.solver_stats.num_iters if problem.solver_stats else 0
    with open(args.result, "w") as f:
        json.dump({"status": status, "primal": primal, "iterations": int(iters or 0)}, f)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
