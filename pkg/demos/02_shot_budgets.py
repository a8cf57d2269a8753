"""How many shots does a trained classifier need?

The subgaussian bound n_sg guarantees that the stochastic classifier's
error stays below the gamma-margin error of the exact one. A Monte Carlo
search finds the shot count that actually achieves this. The bound is
conservative by a small constant factor.
"""
from shofar import bounds
from shofar.harness import RunConfig, TrialPlan, build_problem, n_practical
from shofar.sampler import CircuitKind, ShotPlan
from shofar.svm import solve_primal

for name, m_test in (("circles", 360), ("havlicek", 40)):
    pb = build_problem(RunConfig(dataset=name, m_test=m_test), "train")
    model = solve_primal(pb.K_train, pb.y_train, 1000.0)
    margins = pb.y_eval * (pb.K_eval @ model.beta + model.b)
    g = bounds.gamma_star(margins)
    nsg = bounds.n_sg(model.beta_norm2, g, CircuitKind.GATES, len(pb.y_eval), 0.01)
    trace = []
    npr = n_practical(pb.K_eval, pb.y_eval, model, g, 0.01,
                      TrialPlan(200, 0, ShotPlan(CircuitKind.GATES, 16)), trace=trace)
    print(f"{name}: |beta|={model.beta_norm2:.2f}, m_sv={model.m_sv}, gamma*={g:.2f}")
    print(f"  n_sg={nsg}  N_practical={npr}  ratio={nsg / npr:.2f}")
    print("  search trace: " + ", ".join(f"{N}->{d:.3f}" for N, d in trace))
    swap = bounds.n_sg(model.beta_norm2, g, CircuitKind.SWAP, len(pb.y_eval), 0.01)
    print(f"  the SWAP test would need {swap} shots by the same bound\n")
