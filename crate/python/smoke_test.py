"""Smoke test for the perdl extension module."""

import perdl

truth = perdl.generate(num_clients=4, samples=200, seed=0)
d0 = truth["locals"][0]
print(truth["global"], d0)

assert perdl.vector_d2([1.0, 0.0], [-1.0, 0.0]) == 0.0
dist, perm, signs = perdl.dist_12(truth["global"], truth["global"])
assert dist < 1e-12 and perm == sorted(perm)
assert perdl.incoherence(truth["global"]) < 1e-12

full = [perdl.Dictionary([g + l for g, l in zip(truth["global"].to_list(), loc.to_list())])
        for loc in truth["locals"]]
glob, locals_, assignments = perdl.global_matching(full, 3)
assert glob.atoms == 3 and all(l.atoms == 3 for l in locals_)
assert all(sorted(i for i, _ in a) == [0, 1, 2] for a in assignments)

out = perdl.run_perma(truth["data"], atoms=6, global_atoms=3, rounds=10, seed=0)
res = out["mean_residual"]
print("residual per round:", [f"{r:.2e}" for r in res])
assert len(res) == 11 and res[-1] <= res[0] + 1e-12
dist, _, _ = perdl.dist_12(out["global"], truth["global"])
print("global error:", dist)
print("ok")
