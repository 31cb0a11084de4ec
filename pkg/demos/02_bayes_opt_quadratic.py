"""The GP/EI optimizer minimizing a known quadratic over the hyperparameter box.

The objective has its minimum at the center of the (lambda, margin, k, p)
box, so we can watch the expected-improvement proposals close in on it.
"""

from progmetric.tuning import quadratic_objective, run_tuning

trace = run_tuning(seed=0, rounds=20, n_initial=6)

print("phase     lambda  margin  k   p   value    best")
for t in trace:
    w = t.hyperparams
    print(f"{t.phase:<8}  {w.lam:6.3f}  {w.margin:6.3f}  {w.k:<3} {w.p:<3} "
          f"{t.value:7.4f}  {t.best_so_far:7.4f}")

best = trace[-1].best_so_far
print(f"\nbest value after {len(trace)} evaluations: {best:.4f}")
print("(the continuous minimum is 0; the integer k,p grid keeps it slightly above)")
