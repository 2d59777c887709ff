"""Independent oracles for the stiffness program used by unit and acceptance tests.

The main oracle is projected-gradient ascent on the concave dual of the
program: the three coupling-row multipliers are the variables, the projection
is the trivial clip at zero, and the per-axis primal minimizer under a given
multiplier pressure is evaluated in closed form. It shares only the problem
assembly with the production solver, not the active-set search.

A second, slower cross-check based on cvxpy is provided for small batches.
"""

from __future__ import annotations

import numpy as np

from wipesim.geometry import PoseError, Twist
from wipesim.stiffness_qp import QpConfig, QpInstance, assemble_qp


def random_instances(n, seed=0, sigma_choices=(0, 1)):
    """Random feasible instances with closed-loop-plausible magnitudes."""
    rng = np.random.default_rng(seed)
    base = QpConfig()
    a = rng.normal(scale=[0.05, 0.05, 0.05, 0.2, 0.2, 0.2], size=(n, 6))
    v = rng.normal(scale=[0.3, 0.3, 0.3, 0.8, 0.8, 0.8], size=(n, 6))
    k_prev = rng.uniform(base.k_min, base.k_max, size=(n, 6))
    d_prev = 2.0 * np.sqrt(np.array([1.0, 1, 1, 0.2, 0.2, 0.2]) * k_prev)
    r_w = 10.0 ** rng.uniform(-2, 1, size=(n, 6))
    sigma = rng.choice(sigma_choices, size=n)
    t_prev = rng.uniform(0.1, 5.0, size=n)
    h_des = rng.normal(scale=[2.0, 2.0, 4.0, 0.5, 0.5, 0.5], size=(n, 6))
    k_des = rng.uniform(base.k_min, base.k_max, size=(n, 6))
    return [
        QpInstance(
            err=PoseError(a[i, :3], a[i, 3:]),
            err_rate=Twist(v[i, :3], v[i, 3:]),
            damping_prev=d_prev[i],
            sigma=int(sigma[i]),
            tank_energy_prev=float(t_prev[i]),
            tank_floor=0.1,
            h_des=h_des[i],
            k_des=k_des[i],
            cfg=QpConfig(r_weights=r_w[i]),
        )
        for i in range(n)
    ]


def assemble_batch(instances):
    """Stack the canonical per-axis forms of many instances into arrays."""
    asms = [assemble_qp(inst) for inst in instances]
    batch = {
        name: np.array([getattr(m, name) for m in asms])
        for name in ("a", "v", "b", "q", "r", "k_des", "k_min", "lo", "hi", "row_w")
    }
    batch["rhs"] = np.array(
        [[m.rhs_tank, m.rhs_pow_p, m.rhs_pow_q] for m in asms]
    )
    return batch


def batch_objective(batch, k):
    resid = k * batch["a"] + batch["b"]
    return np.sum(batch["q"] * resid**2, axis=1) + np.sum(
        batch["r"] * (k - batch["k_des"]) ** 2, axis=1
    )


def _primal_from_dual(batch, lam):
    """Closed-form per-axis minimizer under multiplier pressures (n, 3)."""
    s = batch["q"] * batch["a"] ** 2 + batch["r"]
    m_p = lam[:, 0] + lam[:, 1]
    m_o = lam[:, 0] + lam[:, 2]
    m = np.concatenate(
        [np.repeat(m_p[:, None], 3, axis=1), np.repeat(m_o[:, None], 3, axis=1)],
        axis=1,
    )
    raw = (
        batch["r"] * batch["k_des"]
        - batch["q"] * batch["a"] * batch["b"]
        + 0.5 * m * batch["row_w"]
    ) / s
    return np.clip(raw, batch["lo"], batch["hi"])


def _residuals(batch, k):
    """Row slacks F - rhs, shape (n, 3); negative means violated."""
    inflow = batch["row_w"] * (k - batch["k_min"])
    f_p = np.sum(inflow[:, :3], axis=1)
    f_o = np.sum(inflow[:, 3:], axis=1)
    lhs = np.stack([f_p + f_o, f_p, f_o], axis=1)
    return lhs - batch["rhs"]


def is_feasible(asm) -> bool:
    """Independent feasibility check of one assembled instance.

    Tank and power rows share per-axis weights, so one corner of the box
    maximizes all three inflows simultaneously.
    """
    spans = np.stack(
        [
            asm.row_w * (asm.lo - asm.k_min),
            asm.row_w * (asm.hi - asm.k_min),
        ]
    )
    best = np.max(spans, axis=0)
    f_p, f_o = float(np.sum(best[:3])), float(np.sum(best[3:]))
    return (
        f_p + f_o >= asm.rhs_tank - 1e-12
        and f_p >= asm.rhs_pow_p - 1e-12
        and f_o >= asm.rhs_pow_q - 1e-12
    )


def random_feasible_instances(n, seed=0):
    """Random instances filtered by the independent feasibility check."""
    out = []
    block = 0
    while len(out) < n:
        for inst in random_instances(n, seed=seed * 7919 + block):
            if is_feasible(assemble_qp(inst)):
                out.append(inst)
                if len(out) == n:
                    break
        block += 1
    return out


def projected_gradient_oracle(instances, iters=10_000, check_every=25):
    """Solve a batch of instances by projected-gradient ascent on the dual.

    The step starts at the inverse trace bound of the dual Hessian and is
    halved per instance whenever the dual value fails to increase, which kills
    limit cycles around clip kinks. Instances meeting a KKT stopping test are
    retired early; ``iters`` caps the per-instance count.
    """
    batch = assemble_batch(instances)
    n = batch["a"].shape[0]

    def tols(sub):
        span = np.sum(
            np.abs(sub["row_w"]) * np.maximum(np.abs(sub["lo"]), np.abs(sub["hi"])),
            axis=1,
        )
        return 1e-10 * np.maximum(
            1.0, np.maximum(np.abs(sub["rhs"]).max(axis=1), span)
        )

    k_out = _primal_from_dual(batch, np.zeros((n, 3)))
    active = np.arange(n)
    sub = dict(batch)

    # Per-row diagonal preconditioner: 1 / (3 H_rr) with H the dual Hessian
    # bound; factor 3 covers the off-diagonal coupling of the three rows.
    s = sub["q"] * sub["a"] ** 2 + sub["r"]
    curv = sub["row_w"] ** 2 / (2.0 * s)
    h_rr = np.stack(
        [np.sum(curv, axis=1), np.sum(curv[:, :3], axis=1), np.sum(curv[:, 3:], axis=1)],
        axis=1,
    )
    step = 1.0 / (3.0 * np.maximum(h_rr, 1e-12))

    scale_down = np.ones((len(active), 1))
    lam = np.zeros((len(active), 3))
    best_g = np.full(len(active), -np.inf)
    sub_tol = tols(sub)
    unconverged: list[int] = []
    for it in range(1, iters + 1):
        k = _primal_from_dual(sub, lam)
        resid = _residuals(sub, k)
        g = batch_objective(sub, k) - np.sum(lam * resid, axis=1)
        worse = g < best_g - 1e-12 * np.maximum(1.0, np.abs(best_g))
        scale_down[worse] *= 0.5
        # clip kinks can force spurious halvings; recover so the step never
        # stays collapsed
        scale_down[~worse] = np.minimum(scale_down[~worse] * 1.05, 1.0)
        np.maximum(best_g, g, out=best_g)
        delta = scale_down * step * resid
        # relative trust region: geometric growth/decay instead of huge
        # overshoots along flat directions
        cap = 0.5 * np.maximum(1.0, lam)
        lam = np.maximum(lam - np.clip(delta, -cap, cap), 0.0)
        if it % check_every == 0 or it == iters:
            viol = np.max(np.maximum(-resid, 0.0), axis=1)
            comp = np.max(np.where(lam > 0, np.abs(resid), 0.0), axis=1)
            done = (viol <= sub_tol) & (comp <= sub_tol)
            if it == iters:
                unconverged = [int(i) for i in active[~done]]
                done[:] = True
            if np.any(done):
                k_out[active[done]] = _primal_from_dual(
                    {key: val[done] for key, val in sub.items()}, lam[done]
                )
                keep = ~done
                active = active[keep]
                if active.size == 0:
                    break
                sub = {key: val[keep] for key, val in sub.items()}
                lam, step, best_g, sub_tol = lam[keep], step[keep], best_g[keep], sub_tol[keep]
                scale_down = scale_down[keep]
    return k_out, unconverged


def oracle_solve(instances, iters=10_000):
    """Projected-gradient oracle with an interior-point cleanup pass.

    The dual projected-gradient phase resolves almost every instance; the rare
    stragglers (flat-valley geometries where first-order ascent stalls within
    the iteration cap) are handed to the cvxpy interior-point reference so the
    returned batch is trustworthy everywhere. Both phases are independent of
    the production active-set solver.
    """
    k, stragglers = projected_gradient_oracle(instances, iters=iters)
    if stragglers:
        k_ref = cvxpy_oracle([instances[i] for i in stragglers])
        for row, idx in enumerate(stragglers):
            if np.all(np.isfinite(k_ref[row])):
                k[idx] = k_ref[row]
    return k


def cvxpy_oracle(instances):
    """Third-party reference solve for small batches (slow)."""
    import cvxpy as cp

    batch = assemble_batch(instances)
    n = batch["a"].shape[0]
    out = np.zeros((n, 6))
    k = cp.Variable(6)
    params = {
        name: cp.Parameter(6) for name in ("sqrt_q_a", "sqrt_q_b", "sqrt_r", "sqrt_r_kdes", "lo", "hi", "w", "kmin")
    }
    rhs = cp.Parameter(3)
    inflow = cp.multiply(params["w"], k - params["kmin"])
    constraints = [
        k >= params["lo"],
        k <= params["hi"],
        cp.sum(inflow) >= rhs[0],
        cp.sum(inflow[:3]) >= rhs[1],
        cp.sum(inflow[3:]) >= rhs[2],
    ]
    cost = cp.sum_squares(cp.multiply(params["sqrt_q_a"], k) + params["sqrt_q_b"]) + cp.sum_squares(
        cp.multiply(params["sqrt_r"], k) - params["sqrt_r_kdes"]
    )
    prob = cp.Problem(cp.Minimize(cost), constraints)
    for i in range(n):
        sq = np.sqrt(batch["q"][i])
        sr = np.sqrt(batch["r"][i])
        params["sqrt_q_a"].value = sq * batch["a"][i]
        params["sqrt_q_b"].value = sq * batch["b"][i]
        params["sqrt_r"].value = sr
        params["sqrt_r_kdes"].value = sr * batch["k_des"][i]
        params["lo"].value = batch["lo"][i]
        params["hi"].value = batch["hi"][i]
        params["w"].value = batch["row_w"][i]
        params["kmin"].value = batch["k_min"][i]
        rhs.value = batch["rhs"][i]
        prob.solve(solver=cp.CLARABEL)
        out[i] = k.value
    return out
