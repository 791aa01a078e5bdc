"""Independent reference implementations shared by several test modules."""

import numpy as np

from filmmanip.design import DesignParams, SearchConfig

NAMES = ("t", "p", "w", "l")


def listing_oracle(objective, cfg: SearchConfig):
    """Step-by-step interpreter of the selection listing, without caching.

    Steps 1..8 are simulated with an explicit program counter.  Argmax ties
    prefer the incumbent guess, then the lower candidate.  A pass is one
    entry into step 1; after ``max_restarts`` passes the best value seen
    (first in evaluation order) is returned.
    """
    g = dict(zip(NAMES, (cfg.initial.t, cfg.initial.p, cfg.initial.w, cfg.initial.l)))
    s = dict(zip(NAMES, cfg.steps))
    b = {}
    seen = []

    def evaluate(**kw):
        v = objective(DesignParams(**kw))
        seen.append((DesignParams(**kw).key(), v))
        return v

    def argmax(name, fixed):
        cands = [x for x in (g[name] - s[name], g[name], g[name] + s[name]) if x > 0]
        vals = {x: evaluate(**{**fixed, name: x}) for x in cands}
        top = max(vals.values())
        if vals[g[name]] == top:
            return g[name]
        return next(x for x in cands if vals[x] == top)

    passes = 0
    pc = 1
    while True:
        if pc == 1:
            if passes == cfg.max_restarts:
                best_key = max(seen, key=lambda kv: kv[1])[0]
                return best_key, False, passes, len({k for k, _ in seen})
            passes += 1
            b["t"] = argmax("t", dict(p=g["p"], w=g["w"], l=g["l"]))
            pc = 2
        elif pc == 2:
            b["p"] = argmax("p", dict(t=b["t"], w=g["w"], l=g["l"]))
            pc = 3
        elif pc == 3:
            if b["p"] != g["p"]:
                g["p"] = b["p"]
                pc = 1
            else:
                pc = 4
        elif pc == 4:
            b["w"] = argmax("w", dict(t=b["t"], p=b["p"], l=g["l"]))
            pc = 5
        elif pc == 5:
            if b["w"] != g["w"]:
                g["w"] = b["w"]
                pc = 1
            else:
                pc = 6
        elif pc == 6:
            b["l"] = argmax("l", dict(t=b["t"], p=b["p"], w=b["w"]))
            pc = 7
        elif pc == 7:
            if b["l"] != g["l"]:
                g["l"] = b["l"]
                pc = 1
            else:
                pc = 8
        else:
            key = DesignParams(b["t"], b["p"], b["w"], b["l"]).key()
            return key, True, passes, len({k for k, _ in seen})


def separable_concave(seed):
    rng = np.random.default_rng(seed)
    centers = rng.uniform([80, 5, 1.5, 18], [140, 15, 6, 34])
    weights = rng.uniform(0.1, 3.0, size=4)

    def obj(d):
        x = np.array([d.t, d.p, d.w, d.l])
        return float(100.0 - np.sum(weights * (x - centers) ** 2 / np.array([100, 1, 1, 4])))

    return obj


def monte_carlo_precision(sigma, cycles, draws, seed):
    """Brute-force spread of ``cycles`` i.i.d. samples about their own mean."""
    rng = np.random.default_rng(seed)
    groups = max(draws // cycles, 1)
    x = rng.normal(0.0, sigma, size=(groups, cycles, 3))
    dev = x - x.mean(axis=1, keepdims=True)
    return float(np.sqrt(np.mean(np.sum(dev ** 2, axis=2))))
