"""Independent reference values frozen into the C++ tests.

Run with: python3 tests/oracles/derive.py
"""
import itertools
import math
import re
from collections import Counter
from fractions import Fraction

from mpmath import mp, mpf, exp, log

mp.dps = 40


def tokens(text):
    return re.findall(r"[A-Za-z0-9_]+|[^\sA-Za-z0-9_]", text)


def grams(toks, n):
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def bleu(cand, ref):
    """Sentence BLEU-4, add-one smoothing on orders 2..4, exact rationals."""
    if not cand:
        return mpf(0)
    precisions = []
    for n in range(1, 5):
        c, r = grams(cand, n), grams(ref, n)
        total = sum(c.values())
        match = sum(min(k, r[g]) for g, k in c.items())
        if n == 1:
            if match == 0:
                return mpf(0)
            precisions.append(Fraction(match, total))
        else:
            precisions.append(Fraction(match + 1, total + 1))
    geo = exp(sum(log(mpf(p.numerator) / p.denominator) for p in precisions) / 4)
    c, r = len(cand), len(ref)
    bp = mpf(1) if c > r else exp(1 - mpf(r) / c)
    return bp * geo


def pairwise(codes):
    toks = [tokens(c) for c in codes]
    out = []
    for i in range(len(codes)):
        s = mpf(0)
        for j in range(len(codes)):
            if i != j:
                s += (bleu(toks[i], toks[j]) + bleu(toks[j], toks[i])) / 2
        out.append(s / (len(codes) - 1))
    return out


snippets = ["return a + b", "return a - b", "x = a + b"]
print("bleu('return a + b' | 'return a - b') =", mp.nstr(bleu(tokens(snippets[0]), tokens(snippets[1])), 17))
print("bleu('x = a + b' | 'return a + b') =", mp.nstr(bleu(tokens(snippets[2]), tokens(snippets[0])), 17))
print("pairwise", [mp.nstr(v, 17) for v in pairwise(snippets)])

print("ppl [-1,-2] =", mp.nstr(exp(mpf(3) / 2), 17))
w = [exp(mpf(1) / 2), exp(mpf(3) / 2)]
print("softmax([1,3],T=2) =", [mp.nstr(x / sum(w), 17) for x in w])

q0, q1 = [mpf("0.8"), mpf("0.2")], [mpf("0.2"), mpf("0.8")]
h = -sum(p * log(p) for p in q0)
ce = -sum(a * log(b) for a, b in zip(q1, q0))
print("entropy [0.8,0.2] =", mp.nstr(h, 17))
print("cross-entropy =", mp.nstr(ce, 17))
pc = [(a + b) / 2 for a, b in zip(q0, q1)]
print("L_marg =", mp.nstr(-sum(p * log(q) for p, q in zip(pc, q0)), 17), " mean =", mp.nstr((h + ce) / 2, 17))

# Two-state Gibbs chain on [[0.4,0.1],[0.1,0.4]]: c -> c' transition has
# P(stay) = 0.8*0.8 + 0.2*0.2 = 0.68, stationary [0.5, 0.5].
P = [[Fraction(4, 10), Fraction(1, 10)], [Fraction(1, 10), Fraction(4, 10)]]
col = [sum(P[d][c] for d in range(2)) for c in range(2)]
row = [sum(P[d]) for d in range(2)]
T = [[sum(P[d][c] / col[c] * P[d][c2] / row[d] for d in range(2)) for c2 in range(2)] for c in range(2)]
print("induced code chain", T)

# Law of total variance for the same joint with values [0, 1].
x = [0, 1]
mean = sum(col[c] * x[c] for c in range(2))
var = sum(col[c] * (x[c] - mean) ** 2 for c in range(2))
cond_mean = [sum(P[d][c] / row[d] * x[c] for c in range(2)) for d in range(2)]
e_var = sum(row[d] * sum(P[d][c] / row[d] * (x[c] - cond_mean[d]) ** 2 for c in range(2)) for d in range(2))
v_mean = sum(row[d] * (cond_mean[d] - mean) ** 2 for d in range(2))
print("Var =", var, " E[Var] =", e_var, " Var(E) =", v_mean)

# Binomial band for 10^5 draws at p = 0.9.
n, p = 100000, 0.9
sigma = math.sqrt(n * p * (1 - p))
print("binomial 3 sigma band:", n * p - 3 * sigma, n * p + 3 * sigma)
