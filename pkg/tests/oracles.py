"""Naive reference implementations written from the formulas, loop by loop.

They share no code with the package beyond reading raw ratings out of a
plain ``{(u, i): r}`` dict, so agreement is an independent check.
"""

import math


def as_dict(matrix):
    users, items, values = matrix.entries()
    return {(int(u), int(i)): float(r) for u, i, r in zip(users, items, values)}


def vector(R, e, orientation):
    if orientation == "user_user":
        return {i: r for (u, i), r in R.items() if u == e}
    return {u: r for (u, i), r in R.items() if i == e}


def co_rated(R, a, b, orientation):
    va, vb = vector(R, a, orientation), vector(R, b, orientation)
    keys = sorted(set(va) & set(vb))
    return keys, [va[k] for k in keys], [vb[k] for k in keys]


def pearson(R, a, b, orientation, min_overlap=2):
    _, x, y = co_rated(R, a, b, orientation)
    if len(x) < max(min_overlap, 1):
        return None
    mx, my = sum(x) / len(x), sum(y) / len(y)
    num = sum((p - mx) * (q - my) for p, q in zip(x, y))
    sx = sum((p - mx) ** 2 for p in x)
    sy = sum((q - my) ** 2 for q in y)
    if sx <= 1e-12 * sum(p * p for p in x) or sy <= 1e-12 * sum(q * q for q in y):
        return None
    return num / math.sqrt(sx * sy)


def cosine(R, a, b, orientation, min_overlap=1):
    _, x, y = co_rated(R, a, b, orientation)
    if len(x) < max(min_overlap, 1):
        return None
    sx, sy = sum(p * p for p in x), sum(q * q for q in y)
    if sx == 0 or sy == 0:
        return None
    return sum(p * q for p, q in zip(x, y)) / math.sqrt(sx * sy)


def adjusted_cosine(R, i, j, min_overlap=1):
    users, x, y = co_rated(R, i, j, "item_item")
    if len(x) < max(min_overlap, 1):
        return None
    mean = {}
    for u in users:
        row = vector(R, u, "user_user")
        mean[u] = sum(row.values()) / len(row)
    dx = [p - mean[u] for p, u in zip(x, users)]
    dy = [q - mean[u] for q, u in zip(y, users)]
    sx, sy = sum(d * d for d in dx), sum(d * d for d in dy)
    if sx <= 1e-12 * sum(p * p for p in x) or sy <= 1e-12 * sum(q * q for q in y):
        return None
    return sum(p * q for p, q in zip(dx, dy)) / math.sqrt(sx * sy)


def euclidean(R, a, b, orientation, min_overlap=1):
    _, x, y = co_rated(R, a, b, orientation)
    if len(x) < max(min_overlap, 1):
        return None
    return 1.0 / (1.0 + math.sqrt(sum((p - q) ** 2 for p, q in zip(x, y))))


SIM = {
    "pearson": lambda R, a, b, o, mo: pearson(R, a, b, o, mo),
    "cosine": lambda R, a, b, o, mo: cosine(R, a, b, o, mo),
    "adjusted_cosine": lambda R, a, b, o, mo: adjusted_cosine(R, a, b, mo),
    "euclidean": lambda R, a, b, o, mo: euclidean(R, a, b, o, mo),
}


def knn(R, size, e, orientation, metric, k, min_overlap):
    scored = []
    for c in range(size):
        if c == e:
            continue
        w = SIM[metric](R, e, c, orientation, min_overlap)
        if w is not None:
            scored.append((-round(w, 12), c, w))
    scored.sort()
    return [(c, w) for _, c, w in scored[:k]]


def _clamp(x):
    return min(max(x, 1.0), 5.0)


def predict_user(R, m, n, u, i, metric, k, min_overlap):
    row_u = vector(R, u, "user_user")
    num = den = 0.0
    hit = False
    for v, w in knn(R, m, u, "user_user", metric, k, min_overlap):
        row_v = vector(R, v, "user_user")
        if i not in row_v:
            continue
        shared = [row_v[j] for j in row_v if j in row_u]
        num += (row_v[i] - sum(shared) / len(shared)) * w
        den += abs(w)
        hit = True
    if not hit or den == 0:
        if row_u:
            return _clamp(sum(row_u.values()) / len(row_u))
        col = vector(R, i, "item_item")
        return _clamp(sum(col.values()) / len(col) if col else sum(R.values()) / len(R))
    return _clamp(sum(row_u.values()) / len(row_u) + num / den)


def predict_item(R, m, n, u, i, metric, k, min_overlap):
    row_u = vector(R, u, "user_user")
    num = den = 0.0
    hit = False
    for j, w in knn(R, n, i, "item_item", metric, k, min_overlap):
        if j not in row_u:
            continue
        num += row_u[j] * w
        den += abs(w)
        hit = True
    if not hit or den == 0:
        col = vector(R, i, "item_item")
        return _clamp(sum(col.values()) / len(col) if col else sum(R.values()) / len(R))
    return _clamp(num / den)


# --- metrics -----------------------------------------------------------------

def macro_mae(triples):
    per = {}
    for u, p, a in triples:
        per.setdefault(u, []).append(abs(p - a))
    return sum(sum(v) / len(v) for v in per.values()) / len(per)


def macro_rmse(triples):
    per = {}
    for u, p, a in triples:
        per.setdefault(u, []).append((p - a) ** 2)
    return sum(math.sqrt(sum(v) / len(v)) for v in per.values()) / len(per)


def precision_recall(recs, relevant, n):
    precs = [len([z for z in lst[:n] if z in relevant.get(u, set())]) / n
             for u, lst in recs.items() if lst]
    recs_ = []
    for u, rel in relevant.items():
        if rel:
            lst = recs.get(u, [])[:n]
            recs_.append(len([z for z in lst if z in rel]) / len(rel))
    p = sum(precs) / len(precs)
    r = sum(recs_) / len(recs_) if recs_ else 0.0
    return p, r, (0.0 if p + r == 0 else 2 * p * r / (p + r))


def ap_at_n(ranked, rel, n):
    total = 0.0
    for pos in range(1, min(n, len(ranked)) + 1):
        if ranked[pos - 1] in rel:
            prec = len([z for z in ranked[:pos] if z in rel]) / pos
            total += prec
    return total / min(len(rel), n)


def half_life(ranked, known, alpha, d):
    return sum(max(known.get(p, d) - d, 0) / (2 ** ((pos - 1) / (alpha - 1)))
               for pos, p in enumerate(ranked, 1))


def dcg(ranked, known, k):
    out = 0.0
    for pos, p in enumerate(ranked[:k], 1):
        r = known.get(p, 0.0)
        out += r if pos == 1 else r / math.log2(pos)
    return out


def sgd_step(p, q, r, alpha, lp, lq, lx=0.0, w=0.0):
    """One simultaneous update written out coordinate by coordinate."""
    e = r - sum(a * b for a, b in zip(p, q))
    new_p = [pk + alpha * (e * qk - lp * pk - lx * w * (pk - qk)) for pk, qk in zip(p, q)]
    new_q = [qk + alpha * (e * pk - lq * qk + lx * w * (pk - qk)) for pk, qk in zip(p, q)]
    return new_p, new_q
