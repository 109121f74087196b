"""Independent reference values for the frozen constants in the C++ tests.

Plain-probability path enumeration with numpy; shares no code with the
library. Run: python3 tests/oracles/brute_force.py
"""
import itertools
import math

import numpy as np


def gauss(x, m, v):
    x, m, v = map(np.asarray, (x, m, v))
    return float(np.prod(np.exp(-((x - m) ** 2) / (2 * v)) / np.sqrt(2 * np.pi * v)))


def enumerate_paths(pi, A, means, vars_, seq):
    n = len(pi)
    total = 0.0
    best, best_path = -1.0, None
    for path in itertools.product(range(n), repeat=len(seq)):
        p = pi[path[0]] * gauss(seq[0], means[path[0]], vars_[path[0]])
        for t in range(1, len(seq)):
            p *= A[path[t - 1]][path[t]] * gauss(seq[t], means[path[t]], vars_[path[t]])
        total += p
        if p > best:  # strict: first (lexicographically lowest) maximizer wins
            best, best_path = p, path
    return math.log(total), math.log(best), best_path


means = [[0.0, 0.0], [3.0, -1.0], [-2.0, 4.0]]
vars_ = [[1.0, 0.5], [2.0, 1.0], [0.7, 1.5]]
seq = [[0.1, -0.2], [2.5, -0.8], [3.1, -1.3], [-1.5, 3.2]]

ergodic = enumerate_paths([0.5, 0.3, 0.2],
                          [[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [0.25, 0.25, 0.5]],
                          means, vars_, seq)
ltr = enumerate_paths([1.0, 0.0, 0.0],
                      [[0.6, 0.4, 0.0], [0.0, 0.7, 0.3], [0.0, 0.0, 1.0]],
                      means, vars_, seq)
print("ergodic forward %.15f viterbi %.15f path %s" % ergodic)
print("ltr     forward %.15f viterbi %.15f path %s" % ltr)

w = [0.2, 0.5, 0.3]
comps = [([0.0, 0.0], [1.0, 1.0]), ([2.0, 1.0], [0.5, 2.0]), ([-1.0, 3.0], [1.5, 0.3])]
x = [0.5, 1.5]
print("gmm logpdf %.15f" % math.log(sum(wk * gauss(x, m, v) for wk, (m, v) in zip(w, comps))))

# Uniform-segmentation means for init_model: T=6, N=3 -> frames {0,1},{2,3},{4,5}.
s = np.array([[0.0], [1.0], [4.0], [6.0], [9.0], [13.0]])
print("segment means", [float(s[i:i + 2].mean()) for i in (0, 2, 4)],
      "vars", [max(1e-3, float(s[i:i + 2].var())) for i in (0, 2, 4)])
